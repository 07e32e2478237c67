#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "hcf/atomic_data.hpp"
#include "support.hpp"

using namespace hcf;
using hcf::test::rb87;

namespace {

nlohmann::json shipped_doc() {
  std::ifstream in(std::filesystem::path(HCF_DATA_DIR) / "rb87_d2.json");
  return nlohmann::json::parse(in);
}

}  // namespace

TEST(SpeciesData, ShippedFileLoads) {
  const auto& s = rb87();
  EXPECT_EQ(s.name, "87Rb D2");
  EXPECT_NEAR(s.natural_linewidth, 6.07e6, 0.01e6);
  EXPECT_NEAR(s.mass / (86.909180527 * 1.66053906660e-27), 1.0, 1e-6);  // atomic mass x u
  ASSERT_EQ(s.ground_levels.size(), 2u);
  ASSERT_EQ(s.excited_levels.size(), 4u);
  for (const auto* m : {&s.ground_levels, &s.excited_levels})
    for (const auto& l : *m) EXPECT_EQ(l.degeneracy(), 2 * l.F + 1);
}

TEST(SpeciesData, MissingMassNamesTheField) {
  auto doc = shipped_doc();
  doc.erase("mass_kg");
  try {
    load_species_data(doc);
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.field(), "mass_kg");
    EXPECT_NE(std::string(e.what()).find("mass"), std::string::npos);
    EXPECT_EQ(e.exit_code(), 2);
  }
}

TEST(SpeciesData, StrengthsSummingToPointNineRejectedWithSum) {
  auto doc = shipped_doc();
  // F=1 row sum 1/6 + 5/12 + 5/12 = 1; shift 0.1 off the F'=2 entry
  for (auto& row : doc["strengths"])
    if (row["ground_F"] == 1 && row["excited_F"] == 2)
      row["relative_strength"] = row["relative_strength"].get<double>() - 0.1;
  try {
    load_species_data(doc);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("0.9"), std::string::npos) << e.what();
  }
}

TEST(SpeciesData, MissingStrengthRowRejected) {
  auto doc = shipped_doc();
  auto& rows = doc["strengths"];
  for (auto it = rows.begin(); it != rows.end(); ++it)
    if ((*it)["ground_F"] == 2 && (*it)["excited_F"] == 1) {
      rows.erase(it);
      break;
    }
  EXPECT_THROW(load_species_data(doc), ValidationError);
}

TEST(SpeciesData, UnorderedOffsetsRejected) {
  auto doc = shipped_doc();
  for (auto& l : doc["levels"])
    if (l["manifold"] == "excited" && l["F"] == 2) l["frequency_offset_hz"] = -400e6;
  EXPECT_THROW(load_species_data(doc), ValidationError);
}

TEST(SpeciesData, WrongSchemaVersionRejected) {
  auto doc = shipped_doc();
  doc["schema_version"] = 99;
  EXPECT_THROW(load_species_data(doc), ValidationError);
}

TEST(SpeciesData, RoundTripIsBitExact) {
  const auto& a = rb87();
  const auto b = load_species_data(nlohmann::json::parse(to_json(a).dump()));
  EXPECT_EQ(a.mass, b.mass);
  EXPECT_EQ(a.d2_wavelength, b.d2_wavelength);
  EXPECT_EQ(a.natural_linewidth, b.natural_linewidth);
  ASSERT_EQ(a.excited_levels.size(), b.excited_levels.size());
  for (std::size_t i = 0; i < a.excited_levels.size(); ++i)
    EXPECT_EQ(a.excited_levels[i].frequency_offset, b.excited_levels[i].frequency_offset);
  for (std::size_t i = 0; i < a.ground_levels.size(); ++i)
    EXPECT_EQ(a.ground_levels[i].frequency_offset, b.ground_levels[i].frequency_offset);
  ASSERT_EQ(a.strengths.size(), b.strengths.size());
  for (std::size_t i = 0; i < a.strengths.size(); ++i)
    EXPECT_EQ(a.strengths[i].relative_strength, b.strengths[i].relative_strength);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(SpeciesData, StrengthsNormalisedPerGroundLevel) {
  const auto& s = rb87();
  for (const auto& g : s.ground_levels) {
    double sum = 0.0;
    for (const auto& e : s.excited_levels) sum += relative_strength(s, g.F, e.F);
    EXPECT_NEAR(sum, 1.0, 1e-9) << "F=" << g.F;
  }
  EXPECT_EQ(relative_strength(s, 1, 3), 0.0);
  EXPECT_EQ(relative_strength(s, 2, 0), 0.0);
}

TEST(LineDetuning, ReferenceValues) {
  const auto& s = rb87();
  EXPECT_EQ(line_detuning(s, 1, 1, 1), 0.0);
  EXPECT_NEAR(line_detuning(s, 1, 0, 1), -72.2e6, 0.1e6);
  EXPECT_NEAR(line_detuning(s, 1, 2, 1), 156.9e6, 0.1e6);
}

TEST(LineDetuning, AntisymmetricExactly) {
  const auto& s = rb87();
  for (const auto& a : s.excited_levels)
    for (const auto& b : s.excited_levels)
      for (int F : {1, 2}) EXPECT_EQ(line_detuning(s, F, a.F, b.F), -line_detuning(s, F, b.F, a.F));
}

TEST(LineDetuning, UnknownLevelIsLookupError) {
  EXPECT_THROW(line_detuning(rb87(), 1, 7, 1), LookupError);
  EXPECT_THROW(line_detuning(rb87(), 5, 1, 1), LookupError);
}

TEST(CrossSection, BareFactor) {
  EXPECT_NEAR(bare_cross_section(780.24e-9), 2.907e-13, 0.001e-13);
}

TEST(CrossSection, ForbiddenLineIsZero) {
  EXPECT_EQ(resonant_cross_section(rb87(), 1, 3), 0.0);
}

TEST(CrossSection, RatiosFollowStrengthTable) {
  const auto& s = rb87();
  const double s10 = resonant_cross_section(s, 1, 0);
  const double s11 = resonant_cross_section(s, 1, 1);
  const double s12 = resonant_cross_section(s, 1, 2);
  EXPECT_NEAR(s10 / s11, relative_strength(s, 1, 0) / relative_strength(s, 1, 1), 1e-15);
  EXPECT_NEAR(s12 / s11, relative_strength(s, 1, 2) / relative_strength(s, 1, 1), 1e-15);
  // 1/6 : 5/12 : 5/12
  EXPECT_NEAR(s10 / s12, 0.4, 1e-15);
}

TEST(CrossSection, UnpolarizedAverage) {
  // (2J'+1)/(3(2J+1)) = 4/6 for the D2 line
  EXPECT_DOUBLE_EQ(unpolarized_factor(rb87()), 2.0 / 3.0);
  const double lambda = rb87().d2_wavelength;
  const double expected = 3.0 * lambda * lambda / (2.0 * M_PI) * (5.0 / 12.0) * (2.0 / 3.0);
  EXPECT_NEAR(resonant_cross_section(rb87(), 1, 2) / expected, 1.0, 1e-12);
}

TEST(CrossSection, UnknownLevelIsLookupError) {
  EXPECT_THROW(resonant_cross_section(rb87(), 3, 2), LookupError);
}

TEST(SpeciesPath, EnvironmentOverride) {
  ::setenv("HCF_SPECIES_DATA", "/some/where.json", 1);
  EXPECT_EQ(default_species_path(), std::filesystem::path("/some/where.json"));
  ::unsetenv("HCF_SPECIES_DATA");
  EXPECT_TRUE(std::filesystem::exists(default_species_path()));
}
