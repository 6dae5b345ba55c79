#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "smallsphere/dataset.hpp"
#include "smallsphere/error.hpp"
#include "smallsphere/inference.hpp"
#include "smallsphere/samplers.hpp"
#include "smallsphere/simulation.hpp"

using namespace smallsphere;

namespace {

std::filesystem::path scratch_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "smallsphere_dataset_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("column labels") {
  CHECK(column_label(1, 1) == "x1_1");
  CHECK(column_label(2, 3) == "x2_3");
}

TEST_CASE("CSV round trip is bit exact") {
  RngStream rng(1);
  const DirectionalSample d = sample_model(rng, table3_truth("f"), 100);
  std::stringstream buf;
  write_csv(buf, d);
  const DirectionalSample back = read_csv(buf);
  CHECK(back.p == 3);
  CHECK(back.K == 2);
  CHECK(back.rows == d.rows);

  const auto path = scratch_dir() / "roundtrip.csv";
  write_dataset(path, d);
  CHECK(std::filesystem::exists(sidecar_path(path)));
  CHECK(read_dataset(path).rows == d.rows);
}

TEST_CASE("malformed datasets are rejected") {
  std::istringstream not_unit("x1_1,x1_2,x1_3\n0,0,1\n0.5,0.5,0.5\n");
  try {
    read_csv(not_unit);
    FAIL("expected rejection");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  std::istringstream bad_header("a,b,c\n0,0,1\n");
  CHECK_THROWS_AS(read_csv(bad_header), InvalidArgument);
  std::istringstream ragged("x1_1,x1_2,x1_3\n0,1\n");
  CHECK_THROWS_AS(read_csv(ragged), InvalidArgument);

  const auto path = scratch_dir() / "mismatch.csv";
  RngStream rng(2);
  write_dataset(path, sample_model(rng, table2_truth("b"), 10));
  std::ofstream(sidecar_path(path)) << R"({"p": 3, "K": 1, "n": 11})";
  CHECK_THROWS_AS(read_dataset(path), InvalidArgument);
}

TEST_CASE("JSON output") {
  RngStream rng(3);
  const DirectionalSample d = sample_model(rng, table2_truth("b"), 50);
  const FitResult f = fit_s2(d);
  const nlohmann::json j = to_json(f);
  CHECK(j.at("model") == "s2");
  CHECK(j.at("nu").size() == 1);
  CHECK(j.at("mu0").size() == 3);
  CHECK(j.at("negLogLik").get<double>() == doctest::Approx(f.neg_log_lik));
  CHECK(j.contains("converged"));

  Hypothesis h;
  h.kind = HypothesisKind::GreatSphere;
  const nlohmann::json t = to_json(lr_test(h, d));
  CHECK(t.at("hypothesis") == "great-sphere");
  CHECK(t.at("df") == 1);
  CHECK(t.contains("pValue"));
  CHECK(std::abs(t.at("nullFit").at("nu")[0].get<double>()) <= 1e-12);
}
