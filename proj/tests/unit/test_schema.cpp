// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "support/testutil.hpp"
#include "trajforge/elements.hpp"
#include "trajforge/errors.hpp"
#include "trajforge/frame.hpp"
#include "trajforge/types.hpp"

using namespace trajforge;

namespace {

bool has_rule(const ValidationReport& report, const char* rule) {
  return std::any_of(report.violations.begin(), report.violations.end(),
                     [&](const Violation& v) { return v.rule_id == rule; });
}

}  // namespace

TEST_CASE("canonical ids") {
  CHECK(canonical_frame_id(SourceId::OQMD, "e-123", 2, 0) == "oqmd:e-123:2:0");
  CHECK(canonical_frame_id(SourceId::MaterialsProject, "mp-149", 1, 12) ==
        "mp:mp-149:1:12");
  CHECK(canonical_frame_id(SourceId::Alexandria, "agm-7", 1, 0) ==
        "alexandria:agm-7:1:0");
  CHECK(canonical_trajectory_id(SourceId::OQMD, "e-123") == "oqmd:e-123");
  CHECK(canonical_trajectory_id(SourceId::MaterialsProject, "mp-149") == "mp:mp-149");
}

TEST_CASE("source and functional tags") {
  CHECK(source_tag(SourceId::MaterialsProject) == "mp");
  CHECK(source_tag(SourceId::Alexandria) == "alexandria");
  CHECK(source_tag(SourceId::OQMD) == "oqmd");
  CHECK(source_from_tag("oqmd") == SourceId::OQMD);
  CHECK_FALSE(source_from_tag("nomad").has_value());

  CHECK(to_string(Functional::PBE) == "PBE");
  CHECK(to_string(Functional::PBESol) == "PBESol");
  CHECK(to_string(Functional::SCAN) == "SCAN");
  CHECK(to_string(Functional::r2SCAN) == "r2SCAN");
  CHECK(functional_from_string("r2SCAN") == Functional::r2SCAN);
  CHECK_FALSE(functional_from_string("HSE06").has_value());
}

TEST_CASE("functional aliases") {
  CHECK(functional_from_alias("GGA") == Functional::PBE);
  CHECK(functional_from_alias("GGA+U") == Functional::PBE);
  CHECK(functional_from_alias("PBE") == Functional::PBE);
  CHECK(functional_from_alias("PBEsol") == Functional::PBESol);
  CHECK(functional_from_alias("PBESOL") == Functional::PBESol);
  CHECK(functional_from_alias("PBESol") == Functional::PBESol);
  CHECK(functional_from_alias("SCAN") == Functional::SCAN);
  CHECK(functional_from_alias("R2SCAN") == Functional::r2SCAN);
  CHECK(functional_from_alias("r2SCAN") == Functional::r2SCAN);
  CHECK_FALSE(functional_from_alias("HSE06").has_value());
  CHECK_FALSE(functional_from_alias("LDA").has_value());
  CHECK_FALSE(functional_from_alias("pbe").has_value());  // closed table, exact match
}

TEST_CASE("element table") {
  CHECK(is_known_element("Fe"));
  CHECK(is_known_element("H"));
  CHECK(is_known_element("Og"));
  CHECK_FALSE(is_known_element("Xx"));
  CHECK_FALSE(is_known_element("fe"));
  CHECK_FALSE(is_known_element(""));
  CHECK(element_index("H") == 0);    // 0-based: atomic number - 1
  CHECK(element_index("Fe") == 25);
  CHECK_FALSE(element_index("Xx").has_value());
}

TEST_CASE("validate_frame accepts a well-formed frame") {
  Frame f = testutil::make_frame(SourceId::MaterialsProject, "mp-1", 1, 0,
                                 {"Fe", "O"});
  const ValidationReport report = validate_frame(f);
  CHECK(report.ok());
  CHECK(report.frame_id == "mp:mp-1:1:0");
}

TEST_CASE("validate_frame flags every invariant") {
  const Frame base =
      testutil::make_frame(SourceId::MaterialsProject, "mp-1", 1, 0, {"Fe", "O"});

  SUBCASE("SPECIES_EMPTY") {
    Frame f = base;
    f.species.clear();
    f.positions.clear();
    f.forces->clear();
    CHECK(has_rule(validate_frame(f), "SPECIES_EMPTY"));
  }
  SUBCASE("UNKNOWN_ELEMENT") {
    Frame f = base;
    f.species[1] = "Qz";
    CHECK(has_rule(validate_frame(f), "UNKNOWN_ELEMENT"));
  }
  SUBCASE("POSITION_SHAPE") {
    Frame f = base;
    f.positions.pop_back();
    CHECK(has_rule(validate_frame(f), "POSITION_SHAPE"));
  }
  SUBCASE("FORCE_SHAPE") {
    Frame f = base;
    f.forces->push_back({0.0, 0.0, 0.0});
    CHECK(has_rule(validate_frame(f), "FORCE_SHAPE"));
  }
  SUBCASE("FORCE_SHAPE not checked when forces absent") {
    Frame f = base;
    f.forces.reset();
    CHECK(validate_frame(f).ok());
  }
  SUBCASE("NON_FINITE energy") {
    Frame f = base;
    f.energy = std::numeric_limits<double>::quiet_NaN();
    CHECK(has_rule(validate_frame(f), "NON_FINITE"));
  }
  SUBCASE("NON_FINITE position") {
    Frame f = base;
    f.positions[0][2] = std::numeric_limits<double>::infinity();
    CHECK(has_rule(validate_frame(f), "NON_FINITE"));
  }
  SUBCASE("NON_FINITE stress") {
    Frame f = base;
    f.stress = Mat3{};
    (*f.stress)[1][1] = std::numeric_limits<double>::quiet_NaN();
    CHECK(has_rule(validate_frame(f), "NON_FINITE"));
  }
  SUBCASE("CELL_VOLUME zero determinant") {
    Frame f = base;
    f.lattice[2] = f.lattice[0];
    CHECK(has_rule(validate_frame(f), "CELL_VOLUME"));
  }
  SUBCASE("CELL_VOLUME negative determinant") {
    Frame f = base;
    std::swap(f.lattice[0], f.lattice[1]);
    CHECK(has_rule(validate_frame(f), "CELL_VOLUME"));
  }
  SUBCASE("NEGATIVE_STEP") {
    Frame f = base;
    f.relaxation_step = -1;
    CHECK(has_rule(validate_frame(f), "NEGATIVE_STEP"));
  }
  SUBCASE("BAD_RELAXATION_NUMBER") {
    Frame f = base;
    f.relaxation_number = 0;
    CHECK(has_rule(validate_frame(f), "BAD_RELAXATION_NUMBER"));
  }
  SUBCASE("NaN lattice reports both NON_FINITE and CELL_VOLUME") {
    Frame f = base;
    f.lattice[0][0] = std::numeric_limits<double>::quiet_NaN();
    const ValidationReport report = validate_frame(f);
    CHECK(has_rule(report, "NON_FINITE"));
    CHECK(has_rule(report, "CELL_VOLUME"));
    CHECK(report.violations.size() == 2);
  }
}

TEST_CASE("composition_of counts elements") {
  Frame f = testutil::make_frame(SourceId::MaterialsProject, "mp-1", 1, 0,
                                 {"Fe", "O", "Fe", "O", "O"});
  const auto comp = composition_of(f);
  CHECK(comp.size() == 2);
  CHECK(comp.at("Fe") == 2);
  CHECK(comp.at("O") == 3);
}

TEST_CASE("assemble_trajectories groups, orders, and sorts") {
  std::vector<Frame> frames;
  // Trajectory b: steps delivered out of order, two stages, numeric order
  // matters (step 10 > step 2 even though "10" < "2" as text).
  frames.push_back(testutil::make_frame(SourceId::OQMD, "b", 2, 1, {"Cu"}, -3.0));
  frames.push_back(testutil::make_frame(SourceId::OQMD, "b", 1, 10, {"Cu"}, -2.0));
  frames.push_back(testutil::make_frame(SourceId::OQMD, "b", 1, 2, {"Cu"}, -1.0));
  frames.push_back(testutil::make_frame(SourceId::OQMD, "b", 2, 0, {"Cu"}, -2.5));
  // Trajectory a.
  frames.push_back(testutil::make_frame(SourceId::OQMD, "a", 1, 0, {"Fe", "O"}, -7.0));

  const auto trajs = assemble_trajectories(frames);
  REQUIRE(trajs.size() == 2);
  CHECK(trajs[0].trajectory_id == "oqmd:a");
  CHECK(trajs[1].trajectory_id == "oqmd:b");
  REQUIRE(trajs[1].size() == 4);
  CHECK(trajs[1].frames[0].frame_id == "oqmd:b:1:2");
  CHECK(trajs[1].frames[1].frame_id == "oqmd:b:1:10");
  CHECK(trajs[1].frames[2].frame_id == "oqmd:b:2:0");
  CHECK(trajs[1].frames[3].frame_id == "oqmd:b:2:1");
  CHECK(trajs[1].final_frame().frame_id == "oqmd:b:2:1");
  CHECK(trajs[1].composition.at("Cu") == 1);
}

TEST_CASE("assemble_trajectories rejects duplicates and mismatches") {
  SUBCASE("duplicate (trajectory, number, step)") {
    std::vector<Frame> frames;
    frames.push_back(testutil::make_frame(SourceId::MaterialsProject, "x", 1, 0, {"Fe"}));
    frames.push_back(testutil::make_frame(SourceId::MaterialsProject, "x", 1, 0, {"Fe"}));
    CHECK_THROWS_WITH_AS(assemble_trajectories(frames), doctest::Contains("mp:x:1:0"),
                         Error);
  }
  SUBCASE("composition mismatch") {
    std::vector<Frame> frames;
    frames.push_back(testutil::make_frame(SourceId::MaterialsProject, "x", 1, 0, {"Fe"}));
    frames.push_back(testutil::make_frame(SourceId::MaterialsProject, "x", 1, 1, {"O"}));
    CHECK_THROWS_AS(assemble_trajectories(frames), Error);
  }
  SUBCASE("functional mismatch") {
    std::vector<Frame> frames;
    frames.push_back(testutil::make_frame(SourceId::MaterialsProject, "x", 1, 0, {"Fe"}));
    Frame second = testutil::make_frame(SourceId::MaterialsProject, "x", 1, 1, {"Fe"});
    second.functional = Functional::SCAN;
    frames.push_back(second);
    CHECK_THROWS_AS(assemble_trajectories(frames), Error);
  }
}

TEST_CASE("error codes carry their names") {
  const Error e(Errc::DuplicateKey, "demo");
  CHECK(std::string(e.what()).find("DuplicateKey") != std::string::npos);
  CHECK(e.code() == Errc::DuplicateKey);
}
