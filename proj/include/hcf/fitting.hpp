#pragma once

// Bounded weighted nonlinear least squares.
//
// Minimises chi2(theta) = sum_i w_i (y_i - f(x_i; theta))^2 over the free
// parameters with Levenberg-Marquardt (Marquardt diagonal scaling, central
// difference Jacobian unless the model supplies one) or Nelder-Mead.
// Data are sorted into a canonical order before fitting so the result does
// not depend on the order points were supplied in.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace hcf {

struct CurveData {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> weight;

  std::size_t size() const { return x.size(); }
};

struct ParameterSet {
  std::vector<std::string> names;
  std::vector<double> initial;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<bool> free;
  std::vector<double> scale;  // typical magnitude; sets difference steps near 0

  std::size_t size() const { return names.size(); }

  std::size_t add(std::string name, double init, double lo, double hi, bool is_free,
                  double typical = 1.0) {
    names.push_back(std::move(name));
    initial.push_back(init);
    lower.push_back(lo);
    upper.push_back(hi);
    free.push_back(is_free);
    scale.push_back(typical);
    return names.size() - 1;
  }

  std::vector<std::size_t> free_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < free.size(); ++i)
      if (free[i]) idx.push_back(i);
    return idx;
  }
};

enum class Minimizer { levenberg_marquardt, simplex };

struct FitOptions {
  Minimizer method = Minimizer::levenberg_marquardt;
  int max_iterations = 500;
  double objective_rtol = 1e-10;
  double step_rtol = 1e-8;
  double jacobian_step = 1e-6;  // relative
  double initial_damping = 1e-3;
  bool scale_covariance = true;  // multiply (J^T W J)^-1 by reduced chi2
};

class DegenerateFitError : public NumericError {
 public:
  DegenerateFitError(std::string parameter, const std::string& why)
      : NumericError("degenerate fit, parameter '" + parameter + "' is unidentifiable: " + why),
        parameter_(std::move(parameter)) {}
  const std::string& parameter() const noexcept { return parameter_; }

 private:
  std::string parameter_;
};

struct FitResult {
  std::vector<std::string> names;
  std::vector<double> best_fit;             // every parameter, fixed ones included
  std::vector<std::size_t> free_indices;    // rows/cols of covariance
  Eigen::MatrixXd covariance;               // free x free
  Eigen::MatrixXd normal_inverse;           // unscaled (J^T W J)^-1
  bool covariance_scaled = true;
  double chi2 = 0.0;
  double reduced_chi2 = 0.0;
  std::size_t dof = 0;
  int n_iterations = 0;
  bool converged = false;
  std::vector<double> residuals;            // y - f, in input order
  std::vector<double> objective_history;    // chi2 after each accepted iteration

  /// Standard error of parameter `index` (0 for fixed parameters).
  double standard_error(std::size_t index) const {
    for (std::size_t k = 0; k < free_indices.size(); ++k)
      if (free_indices[k] == index) return std::sqrt(std::max(0.0, covariance(k, k)));
    return 0.0;
  }
};

/// f(x; theta) evaluated for a whole abscissa vector at once.
template <class M>
concept CurveModel = requires(const M& m, std::span<const double> x, std::span<const double> theta,
                              std::span<double> out) {
  { m(x, theta, out) };
};

/// Optional analytic Jacobian: J(i, j) = df(x_i)/dtheta_j over all parameters.
template <class M>
concept CurveModelWithJacobian =
    CurveModel<M> && requires(const M& m, std::span<const double> x,
                              std::span<const double> theta, Eigen::MatrixXd& jac) {
      { m.jacobian(x, theta, jac) };
    };

namespace detail {

template <CurveModel Model>
class LeastSquares {
 public:
  LeastSquares(const CurveData& data, const Model& model, const ParameterSet& params,
               const FitOptions& options)
      : model_(model), params_(params), options_(options) {
    const auto n = data.size();
    if (data.y.size() != n || data.weight.size() != n)
      throw ValidationError("fit data columns differ in length");
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
      if (data.x[a] != data.x[b]) return data.x[a] < data.x[b];
      if (data.y[a] != data.y[b]) return data.y[a] < data.y[b];
      return data.weight[a] < data.weight[b];
    });
    x_.resize(n);
    y_.resize(n);
    sqrt_w_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = order_[i];
      x_[i] = data.x[k];
      y_[i] = data.y[k];
      if (!(data.weight[k] > 0)) throw ValidationError("fit weights must be > 0");
      sqrt_w_[i] = std::sqrt(data.weight[k]);
    }
    free_ = params.free_indices();
    if (free_.empty()) throw ValidationError("fit needs at least one free parameter");
    if (n < free_.size()) throw ValidationError("fewer data points than free parameters");
    for (std::size_t j = 0; j < params.size(); ++j)
      if (params.lower[j] > params.upper[j])
        throw ValidationError("bounds inverted for '" + params.names[j] + "'");
  }

  std::size_t n_data() const { return x_.size(); }
  const std::vector<std::size_t>& free() const { return free_; }

  std::vector<double> clamp(std::vector<double> theta) const {
    for (std::size_t j = 0; j < theta.size(); ++j)
      theta[j] = std::clamp(theta[j], params_.lower[j], params_.upper[j]);
    return theta;
  }

  void evaluate(const std::vector<double>& theta, std::vector<double>& f) const {
    f.resize(x_.size());
    model_(std::span<const double>(x_), std::span<const double>(theta), std::span<double>(f));
  }

  /// Weighted residuals sqrt(w) (y - f) and their squared norm.
  double residuals(const std::vector<double>& theta, Eigen::VectorXd& r) const {
    std::vector<double> f;
    evaluate(theta, f);
    r.resize(static_cast<Eigen::Index>(x_.size()));
    for (std::size_t i = 0; i < x_.size(); ++i) r[i] = sqrt_w_[i] * (y_[i] - f[i]);
    return r.squaredNorm();
  }

  double chi2(const std::vector<double>& theta) const {
    Eigen::VectorXd r;
    return residuals(theta, r);
  }

  /// Weighted Jacobian of f with respect to the free parameters.
  Eigen::MatrixXd jacobian(const std::vector<double>& theta) const {
    const auto n = static_cast<Eigen::Index>(x_.size());
    const auto k = static_cast<Eigen::Index>(free_.size());
    Eigen::MatrixXd jw(n, k);
    if constexpr (CurveModelWithJacobian<Model>) {
      Eigen::MatrixXd full(n, static_cast<Eigen::Index>(theta.size()));
      model_.jacobian(std::span<const double>(x_), std::span<const double>(theta), full);
      for (Eigen::Index c = 0; c < k; ++c) jw.col(c) = full.col(static_cast<Eigen::Index>(free_[c]));
    } else {
      std::vector<double> plus, minus;
      for (Eigen::Index c = 0; c < k; ++c) {
        const auto j = free_[static_cast<std::size_t>(c)];
        const double h = options_.jacobian_step * std::max(std::abs(theta[j]), params_.scale[j]);
        auto tp = theta, tm = theta;
        tp[j] = std::min(theta[j] + h, params_.upper[j]);
        tm[j] = std::max(theta[j] - h, params_.lower[j]);
        if (tp[j] == tm[j]) {  // zero-width box
          jw.col(c).setZero();
          continue;
        }
        evaluate(tp, plus);
        evaluate(tm, minus);
        const double denom = tp[j] - tm[j];
        for (Eigen::Index i = 0; i < n; ++i) jw(i, c) = (plus[i] - minus[i]) / denom;
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) jw.row(i) *= sqrt_w_[static_cast<std::size_t>(i)];
    return jw;
  }

  double relative_step(const std::vector<double>& a, const std::vector<double>& b) const {
    double m = 0.0;
    for (auto j : free_)
      m = std::max(m, std::abs(a[j] - b[j]) / std::max(std::abs(b[j]), params_.scale[j]));
    return m;
  }

  FitResult levenberg_marquardt() const {
    FitResult res;
    auto theta = clamp(params_.initial);
    Eigen::VectorXd r;
    double chi2_now = residuals(theta, r);
    res.objective_history.push_back(chi2_now);
    double lambda = options_.initial_damping;
    const auto k = static_cast<Eigen::Index>(free_.size());

    for (int iter = 1; iter <= options_.max_iterations; ++iter) {
      res.n_iterations = iter;
      const Eigen::MatrixXd jw = jacobian(theta);
      const Eigen::MatrixXd a = jw.transpose() * jw;
      const Eigen::VectorXd g = jw.transpose() * r;
      for (Eigen::Index c = 0; c < k; ++c)
        if (!(a(c, c) > 0))
          throw DegenerateFitError(params_.names[free_[c]], "model does not depend on it");

      // Parameters pinned at a bound with the descent direction pointing out
      // of the box are held fixed for this iteration.
      std::vector<Eigen::Index> active;
      for (Eigen::Index c = 0; c < k; ++c) {
        const auto j = free_[c];
        const bool at_lo = theta[j] <= params_.lower[j] && g[c] < 0;
        const bool at_hi = theta[j] >= params_.upper[j] && g[c] > 0;
        if (!at_lo && !at_hi) active.push_back(c);
      }
      if (active.empty()) {
        res.converged = true;
        break;
      }
      const auto m = static_cast<Eigen::Index>(active.size());
      Eigen::MatrixXd a_sub(m, m);
      Eigen::VectorXd g_sub(m);
      for (Eigen::Index p = 0; p < m; ++p) {
        g_sub[p] = g[active[p]];
        for (Eigen::Index q = 0; q < m; ++q) a_sub(p, q) = a(active[p], active[q]);
      }

      bool accepted = false;
      bool stalled = false;
      while (!accepted) {
        Eigen::MatrixXd damped = a_sub;
        for (Eigen::Index p = 0; p < m; ++p) damped(p, p) += lambda * a_sub(p, p);
        const Eigen::VectorXd delta = damped.ldlt().solve(g_sub);
        auto candidate = theta;
        for (Eigen::Index p = 0; p < m; ++p) candidate[free_[active[p]]] += delta[p];
        candidate = clamp(std::move(candidate));
        Eigen::VectorXd r_candidate;
        const double chi2_candidate = residuals(candidate, r_candidate);
        const double step = relative_step(candidate, theta);
        if (std::isfinite(chi2_candidate) && chi2_candidate < chi2_now) {
          const double decrease = (chi2_now - chi2_candidate) / std::max(chi2_now, 1e-300);
          theta = std::move(candidate);
          r = std::move(r_candidate);
          chi2_now = chi2_candidate;
          res.objective_history.push_back(chi2_now);
          lambda = std::max(lambda * 0.1, 1e-15);
          accepted = true;
          if (decrease < options_.objective_rtol || step < options_.step_rtol ||
              chi2_now <= std::numeric_limits<double>::min())
            res.converged = true;
        } else {
          lambda *= 10.0;
          // no representable improvement left along the damped direction
          if (step < options_.step_rtol || lambda > 1e20) {
            stalled = true;
            res.converged = step < options_.step_rtol;
            break;
          }
        }
      }
      if (res.converged || stalled) break;
    }
    res.best_fit = std::move(theta);
    return res;
  }

  FitResult simplex() const {
    FitResult res;
    const auto k = free_.size();
    auto base = clamp(params_.initial);
    auto to_theta = [&](const std::vector<double>& v) {
      auto t = base;
      for (std::size_t c = 0; c < k; ++c) t[free_[c]] = v[c];
      return clamp(std::move(t));
    };
    auto objective = [&](const std::vector<double>& v) {
      const double c = chi2(to_theta(v));
      return std::isfinite(c) ? c : std::numeric_limits<double>::infinity();
    };

    std::vector<std::vector<double>> pts(k + 1, std::vector<double>(k));
    for (std::size_t c = 0; c < k; ++c) pts[0][c] = base[free_[c]];
    for (std::size_t v = 1; v <= k; ++v) {
      pts[v] = pts[0];
      const auto j = free_[v - 1];
      const double h = 0.05 * std::max(std::abs(base[j]), params_.scale[j]);
      pts[v][v - 1] = (base[j] + h <= params_.upper[j]) ? base[j] + h : base[j] - h;
    }
    std::vector<double> val(k + 1);
    for (std::size_t v = 0; v <= k; ++v) val[v] = objective(pts[v]);

    const int max_evals = options_.max_iterations * 200;
    int evals = static_cast<int>(k) + 1;
    for (int iter = 1; evals < max_evals; ++iter) {
      res.n_iterations = iter;
      std::vector<std::size_t> idx(k + 1);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return val[a] < val[b]; });
      std::vector<std::vector<double>> sp(k + 1);
      std::vector<double> sv(k + 1);
      for (std::size_t v = 0; v <= k; ++v) {
        sp[v] = pts[idx[v]];
        sv[v] = val[idx[v]];
      }
      pts = std::move(sp);
      val = std::move(sv);
      res.objective_history.push_back(val[0]);

      double size = 0.0;
      for (std::size_t v = 1; v <= k; ++v)
        size = std::max(size, relative_step(to_theta(pts[v]), to_theta(pts[0])));
      const double spread = (val[k] - val[0]) / std::max(std::abs(val[0]), 1e-300);
      if (spread < options_.objective_rtol || size < options_.step_rtol) {
        res.converged = true;
        break;
      }

      std::vector<double> centroid(k, 0.0);
      for (std::size_t v = 0; v < k; ++v)
        for (std::size_t c = 0; c < k; ++c) centroid[c] += pts[v][c] / static_cast<double>(k);
      auto along = [&](double t) {
        std::vector<double> p(k);
        for (std::size_t c = 0; c < k; ++c) p[c] = centroid[c] + t * (pts[k][c] - centroid[c]);
        return p;
      };
      auto reflected = along(-1.0);
      const double fr = objective(reflected);
      ++evals;
      if (fr < val[0]) {
        auto expanded = along(-2.0);
        const double fe = objective(expanded);
        ++evals;
        if (fe < fr) {
          pts[k] = expanded;
          val[k] = fe;
        } else {
          pts[k] = reflected;
          val[k] = fr;
        }
      } else if (fr < val[k - 1]) {
        pts[k] = reflected;
        val[k] = fr;
      } else {
        auto contracted = fr < val[k] ? along(-0.5) : along(0.5);
        const double fc = objective(contracted);
        ++evals;
        if (fc < std::min(fr, val[k])) {
          pts[k] = contracted;
          val[k] = fc;
        } else {
          for (std::size_t v = 1; v <= k; ++v) {
            for (std::size_t c = 0; c < k; ++c) pts[v][c] = pts[0][c] + 0.5 * (pts[v][c] - pts[0][c]);
            val[v] = objective(pts[v]);
            ++evals;
          }
        }
      }
    }
    const auto best = std::min_element(val.begin(), val.end()) - val.begin();
    res.best_fit = to_theta(pts[static_cast<std::size_t>(best)]);
    return res;
  }

  /// Fills chi2, residuals and covariance for res.best_fit.
  void finish(FitResult& res) const {
    res.names = params_.names;
    res.free_indices = free_;
    Eigen::VectorXd r;
    res.chi2 = residuals(res.best_fit, r);
    res.dof = x_.size() - free_.size();
    res.reduced_chi2 = res.dof > 0 ? res.chi2 / static_cast<double>(res.dof) : 0.0;

    std::vector<double> f;
    evaluate(res.best_fit, f);
    res.residuals.assign(x_.size(), 0.0);
    for (std::size_t i = 0; i < x_.size(); ++i) res.residuals[order_[i]] = y_[i] - f[i];

    const Eigen::MatrixXd jw = jacobian(res.best_fit);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jw);
    qr.setThreshold(1e-9);  // differenced Jacobians are good to ~eps^(2/3)
    const auto k = static_cast<Eigen::Index>(free_.size());
    if (qr.rank() < k) {
      const auto col = qr.colsPermutation().indices()[qr.rank()];
      throw DegenerateFitError(params_.names[free_[static_cast<std::size_t>(col)]],
                               "normal equations are singular");
    }
    const Eigen::MatrixXd a = jw.transpose() * jw;
    Eigen::MatrixXd inv = a.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
    inv = 0.5 * (inv + inv.transpose());
    res.normal_inverse = inv;
    res.covariance_scaled = options_.scale_covariance;
    const double s = (options_.scale_covariance && res.dof > 0) ? res.reduced_chi2 : 1.0;
    res.covariance = inv * s;
  }

 private:
  const Model& model_;
  const ParameterSet& params_;
  FitOptions options_;
  std::vector<std::size_t> order_;
  std::vector<double> x_, y_, sqrt_w_;
  std::vector<std::size_t> free_;
};

}  // namespace detail

template <CurveModel Model>
FitResult fit_curve(const CurveData& data, const Model& model, const ParameterSet& params,
                    const FitOptions& options = {}) {
  for (std::size_t j = 0; j < params.size(); ++j)
    if (params.initial[j] < params.lower[j] || params.initial[j] > params.upper[j])
      throw ValidationError("initial guess for '" + params.names[j] + "' is outside its bounds");
  detail::LeastSquares<Model> ls(data, model, params, options);
  FitResult res = options.method == Minimizer::simplex ? ls.simplex() : ls.levenberg_marquardt();
  ls.finish(res);
  return res;
}

/// Objective value chi2 at theta for the given data.
template <CurveModel Model>
double objective(const CurveData& data, const Model& model, const std::vector<double>& theta) {
  std::vector<double> f(data.size());
  model(std::span<const double>(data.x), std::span<const double>(theta), std::span<double>(f));
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) s += data.weight[i] * (data.y[i] - f[i]) * (data.y[i] - f[i]);
  return s;
}

/// Per-parameter standard errors from the covariance matrix (0 for fixed ones).
inline std::vector<double> covariance_errors(const FitResult& result) {
  if (!result.converged) throw NumericError("refusing to estimate errors for a non-converged fit");
  std::vector<double> err(result.best_fit.size(), 0.0);
  for (std::size_t j = 0; j < err.size(); ++j) err[j] = result.standard_error(j);
  return err;
}

struct BootstrapResult {
  std::vector<double> errors;  // sample standard deviation per parameter
  std::vector<std::vector<double>> replicates;
  std::vector<std::string> warnings;
};

/// Refits n datasets resampled with replacement; replicate r draws from
/// stream (seed, r), so the result is independent of the worker count.
template <CurveModel Model>
BootstrapResult bootstrap_errors(const CurveData& data, const Model& model,
                                 const ParameterSet& params, const FitResult& result, int n,
                                 std::uint64_t seed, const FitOptions& options = {},
                                 unsigned workers = 0) {
  if (!result.converged) throw NumericError("refusing to bootstrap a non-converged fit");
  if (n < 1) throw ValidationError("bootstrap needs n >= 1");
  BootstrapResult out;
  out.replicates.assign(static_cast<std::size_t>(n), {});
  ParameterSet start = params;
  start.initial = result.best_fit;
  parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t rep) {
    CounterRng rng(seed, rep, StreamDomain::bootstrap);
    CurveData sample;
    const auto m = data.size();
    for (std::size_t i = 0; i < m; ++i) {
      const auto k = static_cast<std::size_t>(rng.uniform() * static_cast<double>(m)) % m;
      sample.x.push_back(data.x[k]);
      sample.y.push_back(data.y[k]);
      sample.weight.push_back(data.weight[k]);
    }
    try {
      out.replicates[rep] = fit_curve(sample, model, start, options).best_fit;
    } catch (const DegenerateFitError&) {
      out.replicates[rep] = {};
    }
  });
  std::vector<std::vector<double>> good;
  for (auto& r : out.replicates)
    if (!r.empty()) good.push_back(r);
  if (good.size() < out.replicates.size())
    out.warnings.push_back(std::to_string(out.replicates.size() - good.size()) +
                           " degenerate bootstrap replicates skipped");
  out.errors.assign(result.best_fit.size(), 0.0);
  if (good.size() < 2) {
    out.warnings.push_back("too few bootstrap replicates for a spread estimate");
    return out;
  }
  const double count = static_cast<double>(good.size());
  for (std::size_t j = 0; j < out.errors.size(); ++j) {
    double mean = 0.0;
    for (const auto& r : good) mean += r[j] / count;
    double var = 0.0;
    for (const auto& r : good) var += (r[j] - mean) * (r[j] - mean);
    out.errors[j] = std::sqrt(var / (count - 1.0));
  }
  return out;
}

/// chi2 along a 1-D slice: parameter `index` pinned at each grid value, the
/// remaining free parameters re-optimised from `start`.
template <CurveModel Model>
std::vector<double> profile_objective(const CurveData& data, const Model& model,
                                      const ParameterSet& params, std::size_t index,
                                      const std::vector<double>& grid,
                                      const std::vector<double>& start,
                                      const FitOptions& options = {}) {
  if (index >= params.size()) throw ValidationError("profile parameter index out of range");
  std::vector<double> out;
  out.reserve(grid.size());
  for (double value : grid) {
    ParameterSet pinned = params;
    pinned.initial = start;
    pinned.initial[index] = value;
    pinned.free[index] = false;
    pinned.lower[index] = std::min(pinned.lower[index], value);
    pinned.upper[index] = std::max(pinned.upper[index], value);
    for (std::size_t j = 0; j < pinned.size(); ++j)
      pinned.initial[j] = std::clamp(pinned.initial[j], pinned.lower[j], pinned.upper[j]);
    if (pinned.free_indices().empty()) {
      out.push_back(objective(data, model, pinned.initial));
    } else {
      out.push_back(fit_curve(data, model, pinned, options).chi2);
    }
  }
  return out;
}

}  // namespace hcf
