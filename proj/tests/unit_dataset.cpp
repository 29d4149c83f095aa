#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "msmkit/dataset.hpp"

using namespace msmkit;

namespace {

std::string temp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

DataSchema tau2_schema() {
  DataSchema s;
  s.tau = 2;
  s.treatment_cols = {"A1", "A2"};
  s.covariate_cols = {{"L1"}, {"L2"}};
  s.outcome_col = "Y";
  return s;
}

}  // namespace

TEST_CASE("load_csv parses a wide 4-period file and infers support") {
  const std::string path = temp_file("msmkit_t4.csv");
  write_file(path,
             "L1,A1,L2,A2,L3,A3,L4,A4,Y\n"
             "3,0,1,4,0,2,1,1,1\n"
             "0,1,0,0,1,3,0,4,0\n"
             "2,2,1,1,1,0,1,3,1\n");
  DataSchema s;
  s.tau = 4;
  s.treatment_cols = {"A1", "A2", "A3", "A4"};
  s.covariate_cols = {{"L1"}, {"L2"}, {"L3"}, {"L4"}};
  s.outcome_col = "Y";
  const TrajectoryDataset ds = load_csv(path, s);
  CHECK(ds.n() == 3);
  CHECK(ds.tau() == 4);
  CHECK(ds.treatment(0, 2) == 4);
  CHECK(ds.covariates(1)(0, 0) == 3.0);
  // inferred support = union of observed codes
  CHECK(ds.support().levels[0] == std::vector<int>{0, 1, 2});
  CHECK(ds.support().levels[3] == std::vector<int>{1, 3, 4});

  // explicit support gives the full 5-level sets
  s.support_levels.assign(4, {0, 1, 2, 3, 4});
  const TrajectoryDataset ds5 = load_csv(path, s);
  for (int t = 1; t <= 4; ++t) CHECK(ds5.support().n_levels(t) == 5);
}

TEST_CASE("load_csv single-row binary file") {
  const std::string path = temp_file("msmkit_t1.csv");
  write_file(path, "L1,A1,Y\n0.5,1,2.25\n");
  DataSchema s;
  s.tau = 1;
  s.treatment_cols = {"A1"};
  s.covariate_cols = {{"L1"}};
  s.outcome_col = "Y";
  const TrajectoryDataset ds = load_csv(path, s);
  CHECK(ds.n() == 1);
  CHECK(ds.outcome(0) == 2.25);
}

TEST_CASE("load_csv rejects non-integer treatments naming the column") {
  const std::string path = temp_file("msmkit_bad_a2.csv");
  write_file(path, "L1,A1,L2,A2,Y\n1,0,1,1.5,0\n");
  try {
    load_csv(path, tau2_schema());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("A2") != std::string::npos);
  }
}

TEST_CASE("load_csv rejects missing columns and missing outcomes") {
  const std::string path = temp_file("msmkit_missing.csv");
  write_file(path, "L1,A1,L2,Y\n1,0,1,0\n");
  CHECK_THROWS_AS(load_csv(path, tau2_schema()), SchemaError);

  const std::string path2 = temp_file("msmkit_noout.csv");
  write_file(path2, "L1,A1,L2,A2,Y\n1,0,1,1,0\n0,1,0,0,\n");
  try {
    load_csv(path2, tau2_schema());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);  // row index
  }
}

TEST_CASE("csv round-trip reproduces numeric fields bit-exactly") {
  const std::string path = temp_file("msmkit_rt1.csv");
  write_file(path,
             "L1,A1,L2,A2,Y\n"
             "0.1,0,1,1,0.3333333333333333\n"
             "-1.5e-13,2,0,0,12345.678901234567\n"
             "3,1,1,2,-0.0\n");
  const TrajectoryDataset ds = load_csv(path, tau2_schema());
  const std::string path2 = temp_file("msmkit_rt2.csv");
  write_csv(ds, path2);
  const TrajectoryDataset ds2 = load_csv(path2, tau2_schema());
  REQUIRE(ds2.n() == ds.n());
  for (int i = 0; i < ds.n(); ++i) {
    for (int t = 1; t <= 2; ++t) {
      CHECK(ds2.treatment(i, t) == ds.treatment(i, t));
      CHECK(ds2.covariates(t)(i, 0) == ds.covariates(t)(i, 0));
    }
    CHECK(ds2.outcome(i) == ds.outcome(i));
  }
}

TEST_CASE("history layout, bounds, and prefix consistency") {
  Eigen::MatrixXd l1(1, 1), l2(1, 1);
  l1 << 3.0;
  l2 << 1.0;
  Eigen::MatrixXi a(1, 2);
  a << 2, 0;
  Eigen::VectorXd y(1);
  y << 1.0;
  const TrajectoryDataset ds =
      make_dataset(2, {l1, l2}, a, y, {{0, 1, 2}, {0, 1, 2}});

  // t=1: only L_1, no treatment columns
  const Eigen::VectorXd h1 = ds.history(0, 1);
  REQUIRE(h1.size() == 1);
  CHECK(h1(0) == 3.0);

  // t=2: (A_1, L_1, L_2) = (2, 3, 1)
  const Eigen::VectorXd h2 = ds.history(0, 2);
  REQUIRE(h2.size() == 3);
  CHECK(h2(0) == 2.0);
  CHECK(h2(1) == 3.0);
  CHECK(h2(2) == 1.0);

  // full history length = sum dims + (tau-1)
  CHECK(ds.history_dim(2) == 1 + 2);

  CHECK_THROWS_AS(ds.history(0, 0), ContractError);
  CHECK_THROWS_AS(ds.history(0, 3), ContractError);

  // blockwise prefix consistency: the covariate block at t extends t-1's
  CHECK(h2.tail(2).head(1) == h1);
}

TEST_CASE("trajectory row view and baseline subset") {
  Eigen::MatrixXd l1(2, 2), l2(2, 1);
  l1 << 1.0, 2.0, 3.0, 4.0;
  l2 << 5.0, 6.0;
  Eigen::MatrixXi a(2, 2);
  a << 0, 1, 1, 0;
  Eigen::VectorXd y(2);
  y << 0.25, 0.5;
  DataSchema schema;
  schema.tau = 2;
  schema.treatment_cols = {"A1", "A2"};
  schema.covariate_cols = {{"W", "X"}, {"L2"}};
  schema.outcome_col = "Y";
  schema.baseline_cols = {"X"};
  TreatmentSupport support;
  support.levels = {{0, 1}, {0, 1}};
  const TrajectoryDataset ds(2, {l1, l2}, a, y, support, schema);
  CHECK(ds.baseline_dim() == 1);
  CHECK(ds.baseline(1)(0) == 4.0);
  const Trajectory tr = ds.row(1);
  CHECK(tr.outcome == 0.5);
  CHECK(tr.treatments == std::vector<int>{1, 0});
  CHECK(tr.covariates[0](1) == 4.0);
}
