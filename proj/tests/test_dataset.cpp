#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "causalps/dataset.hpp"
#include "causalps/rng.hpp"
#include "test_helpers.hpp"

using namespace causalps;

namespace {

DataSchema two_numeric_schema() {
  DataSchema s;
  s.treatment = "X";
  s.outcome = "Y";
  s.confounders = {{"C1", "continuous"}, {"C2", "continuous"}};
  return s;
}

}  // namespace

TEST_CASE("load_dataset parses a plain numeric CSV") {
  testutil::TempDir dir("load");
  const auto path = dir.write_file("d.csv",
                                   "X,Y,C1,C2\n"
                                   "1,0,0.5,1.25\n"
                                   "0,1,-0.5,2\n"
                                   "1,1,0.25,-1\n"
                                   "0,0,1.5,0\n");
  const Dataset d = load_dataset(path, two_numeric_schema());
  REQUIRE(d.n() == 4);
  REQUIRE(d.p() == 2);
  REQUIRE(d.treatment == std::vector<int>{1, 0, 1, 0});
  REQUIRE(d.outcome == std::vector<int>{0, 1, 1, 0});
  REQUIRE(d.confounders(0, 1) == 1.25);
  REQUIRE(d.confounders(3, 0) == 1.5);
  REQUIRE(validate(d).ok());
}

TEST_CASE("load_dataset rejects a non-binary treatment value") {
  testutil::TempDir dir("bad_treat");
  const auto path = dir.write_file("d.csv", "X,Y,C1,C2\n2,0,1,1\n0,1,0,0\n");
  REQUIRE_THROWS_WITH(load_dataset(path, two_numeric_schema()),
                      Catch::Matchers::ContainsSubstring("non-binary treatment"));
}

TEST_CASE("load_dataset errors: missing file, bad cell, duplicate column") {
  testutil::TempDir dir("errors");
  REQUIRE_THROWS_WITH(load_dataset(dir.str() + "/absent.csv", two_numeric_schema()),
                      Catch::Matchers::ContainsSubstring("cannot open"));
  const auto bad = dir.write_file("bad.csv", "X,Y,C1,C2\n1,0,zap,1\n0,1,0,0\n");
  REQUIRE_THROWS_WITH(load_dataset(bad, two_numeric_schema()),
                      Catch::Matchers::ContainsSubstring("unparseable cell"));
  const auto dup = dir.write_file("dup.csv", "X,Y,C1,C1\n1,0,1,1\n0,1,0,0\n");
  REQUIRE_THROWS_WITH(load_dataset(dup, two_numeric_schema()),
                      Catch::Matchers::ContainsSubstring("duplicate column"));
}

TEST_CASE("categorical confounders expand to dummies, reference dropped") {
  testutil::TempDir dir("cat");
  // site: A x3 (reference), B x2, C x1
  const auto path = dir.write_file("d.csv",
                                   "X,Y,site,age\n"
                                   "1,0,A,50\n"
                                   "0,1,B,60\n"
                                   "1,1,A,70\n"
                                   "0,0,C,40\n"
                                   "1,0,B,55\n"
                                   "0,1,A,65\n");
  DataSchema s;
  s.treatment = "X";
  s.outcome = "Y";
  s.confounders = {{"site", "categorical"}, {"age", "continuous"}};
  const Dataset d = load_dataset(path, s);
  // 3 levels -> 2 dummy columns plus age
  REQUIRE(d.p() == 3);
  REQUIRE(d.columns[0].name == "site=B");
  REQUIRE(d.columns[0].kind == ColumnKind::categorical_expanded);
  REQUIRE(d.columns[1].name == "site=C");
  REQUIRE(d.columns[2].name == "age");
  // hand-derived indicators for the 6 rows
  const std::vector<double> site_b{0, 1, 0, 0, 1, 0};
  const std::vector<double> site_c{0, 0, 0, 1, 0, 0};
  for (int i = 0; i < 6; ++i) {
    REQUIRE(d.confounders(i, 0) == site_b[static_cast<std::size_t>(i)]);
    REQUIRE(d.confounders(i, 1) == site_c[static_cast<std::size_t>(i)]);
  }
  REQUIRE(d.expansions.size() == 1);
  REQUIRE(d.expansions[0].reference_level == "A");

  // expansion preserves rows and is invertible given the recorded levels
  REQUIRE(d.n() == 6);
  const std::vector<std::string> original{"A", "B", "A", "C", "B", "A"};
  for (int i = 0; i < 6; ++i) {
    std::string level = d.expansions[0].reference_level;
    for (std::size_t l = 0; l < d.expansions[0].levels.size(); ++l)
      if (d.confounders(i, static_cast<Eigen::Index>(l)) == 1.0)
        level = d.expansions[0].levels[l];
    REQUIRE(level == original[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("quoted CSV fields with commas and escaped quotes parse") {
  testutil::TempDir dir("quoted");
  const auto path = dir.write_file("d.csv",
                                   "X,Y,\"grp\",C\r\n"
                                   "1,0,\"a,b\",1\r\n"
                                   "0,1,\"say \"\"hi\"\"\",2\r\n");
  DataSchema s;
  s.treatment = "X";
  s.outcome = "Y";
  s.confounders = {{"grp", "categorical"}, {"C", "continuous"}};
  const Dataset d = load_dataset(path, s);
  REQUIRE(d.n() == 2);
  REQUIRE(d.p() == 2);  // 2 levels -> 1 dummy, plus C
}

TEST_CASE("standardize_continuous centers and scales with the n-1 SD") {
  Dataset d;
  d.treatment = {1, 0, 1};
  d.outcome = {0, 1, 0};
  d.confounders.resize(3, 1);
  d.confounders << 1, 2, 3;
  d.columns = {{"C1", ColumnKind::continuous}};
  const StandardizedDataset s = standardize_continuous(d);
  REQUIRE(s.data.confounders(0, 0) == Catch::Approx(-1.0));
  REQUIRE(s.data.confounders(1, 0) == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(s.data.confounders(2, 0) == Catch::Approx(1.0));
  REQUIRE(s.transforms.size() == 1);
  REQUIRE(s.transforms[0].mean == Catch::Approx(2.0));
  REQUIRE(s.transforms[0].sd == Catch::Approx(1.0));

  // idempotent up to floating tolerance
  const StandardizedDataset twice = standardize_continuous(s.data);
  REQUIRE((twice.data.confounders - s.data.confounders).cwiseAbs().maxCoeff() <
          1e-12);
}

TEST_CASE("standardize_continuous leaves all-binary data unchanged") {
  Rng rng(11);
  const Dataset d = testutil::random_dataset(rng, 30, 3, /*binary=*/true);
  const StandardizedDataset s = standardize_continuous(d);
  REQUIRE(s.transforms.empty());
  REQUIRE((s.data.confounders - d.confounders).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("standardize_continuous names the zero-variance column") {
  Dataset d;
  d.treatment = {1, 0, 1};
  d.outcome = {0, 1, 0};
  d.confounders.resize(3, 2);
  d.confounders << 1, 5, 2, 5, 3, 5;
  d.columns = {{"ok", ColumnKind::continuous}, {"flat", ColumnKind::continuous}};
  REQUIRE_THROWS_WITH(standardize_continuous(d),
                      Catch::Matchers::ContainsSubstring("flat"));
}

TEST_CASE("validate reports arm and missing-value violations") {
  Rng rng(12);
  Dataset d = testutil::random_dataset(rng, 20, 2);
  REQUIRE(validate(d).ok());

  Dataset all_treated = d;
  std::fill(all_treated.treatment.begin(), all_treated.treatment.end(), 1);
  const ValidationReport r1 = validate(all_treated);
  REQUIRE_FALSE(r1.ok());
  bool found = false;
  for (const auto& v : r1.violations) found = found || v == "empty control arm";
  REQUIRE(found);

  Dataset with_nan = d;
  with_nan.confounders(3, 1) = std::numeric_limits<double>::quiet_NaN();
  const ValidationReport r2 = validate(with_nan);
  REQUIRE_FALSE(r2.ok());
  REQUIRE_THAT(r2.violations.front(),
               Catch::Matchers::ContainsSubstring("row 4"));
  REQUIRE_THAT(r2.violations.front(), Catch::Matchers::ContainsSubstring("V2"));
}

TEST_CASE("load then validate is clean on random well-formed fixtures") {
  Rng rng(13);
  testutil::TempDir dir("roundtrip");
  for (int rep = 0; rep < 5; ++rep) {
    const Dataset d = testutil::random_dataset(rng, 25, 3);
    std::string csv = "X,Y,V1,V2,V3\n";
    for (int i = 0; i < d.n(); ++i) {
      csv += std::to_string(d.treatment[static_cast<std::size_t>(i)]) + "," +
             std::to_string(d.outcome[static_cast<std::size_t>(i)]);
      for (int j = 0; j < 3; ++j)
        csv += "," + format_double(d.confounders(i, j));
      csv += "\n";
    }
    const auto path = dir.write_file("r" + std::to_string(rep) + ".csv", csv);
    DataSchema s;
    s.treatment = "X";
    s.outcome = "Y";
    s.confounders = {{"V1", "continuous"}, {"V2", "continuous"}, {"V3", "continuous"}};
    const Dataset loaded = load_dataset(path, s);
    REQUIRE(validate(loaded).ok());
    REQUIRE((loaded.confounders - d.confounders).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("subset_columns keeps the requested view") {
  Rng rng(14);
  const Dataset d = testutil::random_dataset(rng, 15, 4);
  const Dataset sub = subset_columns(d, {2, 0});
  REQUIRE(sub.p() == 2);
  REQUIRE(sub.columns[0].name == "V3");
  REQUIRE(sub.columns[1].name == "V1");
  REQUIRE((sub.confounders.col(0) - d.confounders.col(2)).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE_THROWS(subset_columns(d, {4}));
}
