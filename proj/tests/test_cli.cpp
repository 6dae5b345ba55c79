#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "smallsphere");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = smallsphere::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "smallsphere_cli_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(invoke({}).code == smallsphere::cli::kExitUsage);
  CHECK(invoke({"fit", "--bogus"}).code == smallsphere::cli::kExitUsage);
  CHECK(invoke({"fit", "--model", "s2", "--data", scratch("missing.csv").string()}).code ==
        smallsphere::cli::kExitUsage);
  CHECK(invoke({"sample", "--model", "s2", "--kappa0", "-1"}).code == smallsphere::cli::kExitUsage);
  CHECK(invoke({"--help"}).code == smallsphere::cli::kExitOk);
}

TEST_CASE("sample then fit") {
  const auto data = scratch("toy.csv");
  const Run s = invoke({"sample", "--model", "s2", "--kappa0", "100", "--kappa1", "1", "--nu", "0.5", "--n", "50",
                        "--seed", "7", "--out", data.string()});
  REQUIRE(s.code == 0);
  const Run f = invoke({"fit", "--model", "s2", "--data", data.string()});
  REQUIRE(f.code == 0);
  const auto j = nlohmann::json::parse(f.out);
  const double nu = j.at("nu")[0].get<double>();
  CHECK(std::abs(nu) > 0.4);
  CHECK(std::abs(nu) < 0.6);
}

TEST_CASE("density grid integrates to one") {
  const Run d = invoke({"density", "--model", "s1", "--kappa0", "10", "--kappa1", "4", "--nu", "0.5", "--grid", "90"});
  REQUIRE(d.code == 0);
  std::istringstream in(d.out);
  std::string line;
  std::getline(in, line);
  CHECK(line == "lat,lon,x,y,z,log_density,cell_area");
  double mass = 0.0;
  while (std::getline(in, line)) {
    std::vector<double> v;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) v.push_back(std::stod(cell));
    REQUIRE(v.size() == 7);
    mass += std::exp(v[5]) * v[6];
  }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("numerical failures exit with their own code") {
  // The second marginal never moves, so its association with the first is unidentified.
  const auto path = scratch("degenerate.csv");
  {
    std::ofstream out(path);
    out.precision(17);
    out << "x1_1,x1_2,x1_3,x2_1,x2_2,x2_3\n";
    for (int i = 0; i < 20; ++i) {
      const double t = 0.3 * i + 0.1 * std::sin(i);
      const double s = 0.5 + 0.01 * std::cos(3.0 * i);
      const double r = std::sqrt(1.0 - s * s);
      out << r * std::cos(t) << ',' << r * std::sin(t) << ',' << s << ",0.8,0,0.6\n";
    }
  }
  std::filesystem::remove(path.string() + ".json");
  const Run r = invoke({"fit", "--model", "ms2", "--data", path.string()});
  CHECK(r.code == smallsphere::cli::kExitNumerical);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("simulate is reproducible") {
  const std::vector<std::string> args{"simulate", "--table", "2", "--reps", "3", "--settings", "b", "--methods", "S2",
                                      "--seed", "11"};
  const Run a = invoke(args);
  std::vector<std::string> threaded = args;
  threaded.insert(threaded.end(), {"--threads", "2"});
  const Run b = invoke(threaded);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.find("# seed: 11") != std::string::npos);
  CHECK(a.out.find("# replicates: 3") != std::string::npos);
}

TEST_CASE("axis test is calibrated on axis-true data") {
  const auto data = scratch("axis.csv");
  int rejected = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    REQUIRE(invoke({"sample", "--model", "s2", "--mu0", "0,1,0", "--kappa0", "100", "--kappa1", "10", "--nu", "0.5",
                    "--n", "50", "--seed", std::to_string(1000 + r), "--out", data.string()})
                .code == 0);
    const Run t = invoke({"test", "--hypothesis", "axis", "--mu0-star", "0,1,0", "--data", data.string()});
    REQUIRE(t.code == 0);
    rejected += nlohmann::json::parse(t.out).at("pValue").get<double>() < 0.05;
  }
  const double rate = static_cast<double>(rejected) / reps;
  CAPTURE(rate);
  CHECK(rate >= 0.02);
  CHECK(rate <= 0.09);
}
