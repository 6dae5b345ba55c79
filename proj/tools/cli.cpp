#include "cli.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "smallsphere/dataset.hpp"
#include "smallsphere/densities.hpp"
#include "smallsphere/error.hpp"
#include "smallsphere/estimation.hpp"
#include "smallsphere/inference.hpp"
#include "smallsphere/random.hpp"
#include "smallsphere/samplers.hpp"
#include "smallsphere/simulation.hpp"

namespace smallsphere::cli {

namespace {

struct ModelArgs {
  std::string model = "s2";
  std::vector<double> kappa0{10.0};
  std::vector<double> kappa1{1.0};
  std::vector<double> nu{0.5};
  std::vector<double> zeta;
  std::vector<double> lambda;
  std::vector<double> mu0{0.0, 0.0, 1.0};
};

void add_model_options(CLI::App* cmd, ModelArgs& a) {
  cmd->add_option("--model", a.model, "vmf, bm, s1, s2, ims1, ims2 or ms2")->capture_default_str();
  cmd->add_option("--kappa0", a.kappa0, "vertical concentration, one per marginal")->delimiter(',');
  cmd->add_option("--kappa1", a.kappa1, "horizontal concentration, one per marginal (vmf: kappa)")->delimiter(',');
  cmd->add_option("--nu", a.nu, "cosine radius of each subsphere")->delimiter(',');
  cmd->add_option("--zeta", a.zeta, "azimuth of each mode around the axis (radians)")->delimiter(',');
  cmd->add_option("--lambda", a.lambda, "ms2 association, upper triangle row by row")->delimiter(',');
  cmd->add_option("--mu0", a.mu0, "axis (vmf: mean direction)")->delimiter(',');
}

template <typename T>
T broadcast(const std::vector<T>& v, std::size_t k, const char* name) {
  if (v.empty()) throw InvalidArgument(std::string("--") + name + " needs a value");
  if (v.size() == 1) return v[0];
  if (k >= v.size()) throw InvalidArgument(std::string("--") + name + " has fewer entries than marginals");
  return v[k];
}

ModelParams build_params(const ModelArgs& a) {
  const ModelKind kind = parse_model_kind(a.model);
  const UnitVec mu0(Eigen::Map<const Eigen::VectorXd>(a.mu0.data(), static_cast<Eigen::Index>(a.mu0.size())));
  const int p = static_cast<int>(mu0.size());
  const Frame frame = axis_frame(mu0);
  const std::size_t K = std::max({a.kappa0.size(), a.kappa1.size(), a.nu.size(), a.zeta.size(), std::size_t{1}});

  auto mode = [&](std::size_t k) {
    const double nu = broadcast(a.nu, k, "nu");
    const double zeta = a.zeta.empty() ? 0.0 : broadcast(a.zeta, k, "zeta");
    Eigen::VectorXd y = Eigen::VectorXd::Zero(p - 1);
    y[0] = std::cos(zeta);
    if (p > 2) y[1] = std::sin(zeta);
    return recompose(frame, nu, y);
  };
  auto marginals = [&] {
    std::vector<MarginalParams> out;
    for (std::size_t k = 0; k < K; ++k)
      out.push_back(MarginalParams{mode(k), broadcast(a.kappa0, k, "kappa0"), broadcast(a.kappa1, k, "kappa1")});
    return out;
  };

  ModelParams params;
  switch (kind) {
    case ModelKind::VMF: params = VmfParams{mu0, broadcast(a.kappa1, 0, "kappa1")}; break;
    case ModelKind::BM: params = BmParams{mu0, broadcast(a.kappa0, 0, "kappa0"), broadcast(a.nu, 0, "nu")}; break;
    case ModelKind::S1: params = S1Params{mu0, mode(0), a.kappa0.at(0), a.kappa1.at(0)}; break;
    case ModelKind::S2: params = S2Params{mu0, mode(0), a.kappa0.at(0), a.kappa1.at(0)}; break;
    case ModelKind::IMS1: params = IMS1Params{mu0, marginals()}; break;
    case ModelKind::IMS2: params = IMS2Params{mu0, marginals()}; break;
    case ModelKind::MS2: {
      const auto Kd = static_cast<Eigen::Index>(K);
      Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(Kd, Kd);
      const std::size_t pairs = K * (K - 1) / 2;
      if (!a.lambda.empty() && a.lambda.size() != pairs && a.lambda.size() != 1)
        throw InvalidArgument("--lambda needs " + std::to_string(pairs) + " entries");
      std::size_t idx = 0;
      for (Eigen::Index i = 0; i < Kd; ++i) {
        for (Eigen::Index j = i + 1; j < Kd; ++j, ++idx) {
          const double v = a.lambda.empty() ? 0.0 : a.lambda[a.lambda.size() == 1 ? 0 : idx];
          lambda(i, j) = lambda(j, i) = v;
        }
      }
      params = MS2Params{mu0, marginals(), lambda};
      break;
    }
  }
  validate(params);
  return params;
}

// Writes to the file when given, otherwise to out.
template <typename Fn>
void emit(const std::string& path, std::ostream& out, Fn&& write) {
  if (path.empty()) {
    write(out);
    return;
  }
  std::ofstream file(path);
  if (!file) throw InvalidArgument("cannot open " + path + " for writing");
  write(file);
}

int cmd_density(const ModelArgs& a, int grid, bool saddle, const std::string& out_path, std::ostream& out) {
  const ModelParams params = build_params(a);
  if (dimension(params) != 3 || num_marginals(params) != 1)
    throw InvalidArgument("density: grid export needs a single-sphere model on S^2");
  if (grid < 2) throw InvalidArgument("density: --grid must be at least 2");
  const Density density(params, true, saddle ? S1Constant::Saddlepoint : S1Constant::Quadrature);
  // Cell-centred latitude/longitude mesh; area is the exact cell area.
  const int n_lat = grid;
  const int n_lon = 2 * grid;
  const double d_lat = std::numbers::pi / n_lat;
  const double d_lon = 2.0 * std::numbers::pi / n_lon;
  emit(out_path, out, [&](std::ostream& o) {
    o << "lat,lon,x,y,z,log_density,cell_area\n";
    o << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (int i = 0; i < n_lat; ++i) {
      const double lat = -0.5 * std::numbers::pi + (i + 0.5) * d_lat;
      const double area = d_lon * (std::sin(lat + 0.5 * d_lat) - std::sin(lat - 0.5 * d_lat));
      for (int j = 0; j < n_lon; ++j) {
        const double lon = -std::numbers::pi + (j + 0.5) * d_lon;
        const Eigen::Vector3d x(std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat));
        o << lat << ',' << lon << ',' << x[0] << ',' << x[1] << ',' << x[2] << ',' << density.log_density(x) << ','
          << area << '\n';
      }
    }
  });
  return kExitOk;
}

int cmd_sample(const ModelArgs& a, int n, std::uint64_t seed, const std::string& out_path, std::ostream& out) {
  if (n < 1) throw InvalidArgument("sample: --n must be positive");
  RngStream rng(seed);
  const DirectionalSample sample = sample_model(rng, build_params(a), n);
  if (out_path.empty()) {
    write_csv(out, sample);
  } else {
    write_dataset(out_path, sample);
  }
  return kExitOk;
}

FitOptions fit_options(const std::vector<double>& mu0_fixed) {
  FitOptions opts;
  if (!mu0_fixed.empty())
    opts.fixed_mu0 = UnitVec(Eigen::Map<const Eigen::VectorXd>(mu0_fixed.data(), static_cast<Eigen::Index>(mu0_fixed.size())));
  return opts;
}

int cmd_fit(const std::string& model, const std::string& data_path, const std::vector<double>& mu0_fixed,
            bool exact, const std::string& out_path, std::ostream& out) {
  const DirectionalSample data = read_dataset(data_path);
  FitOptions opts = fit_options(mu0_fixed);
  opts.exact_mvm = exact;
  opts.exact_s1_const = exact;
  const FitResult fit = fit_model(parse_model_kind(model), data, opts);
  emit(out_path, out, [&](std::ostream& o) { o << to_json(fit).dump(2) << '\n'; });
  return kExitOk;
}

int cmd_test(const std::string& hypothesis, const std::string& model, const std::string& data_path,
             const std::vector<double>& mu0_star, double alpha, const std::string& out_path, std::ostream& out) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("test: --alpha must lie in (0, 1)");
  const DirectionalSample data = read_dataset(data_path);
  Hypothesis h;
  h.kind = parse_hypothesis_kind(hypothesis);
  h.alternative = parse_model_kind(model);
  if (!mu0_star.empty())
    h.mu0_star = UnitVec(Eigen::Map<const Eigen::VectorXd>(mu0_star.data(), static_cast<Eigen::Index>(mu0_star.size())));
  const TestResult result = lr_test(h, data);
  nlohmann::json j = to_json(result);
  j["alpha"] = alpha;
  j["reject"] = result.p_value < alpha;
  emit(out_path, out, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
  return kExitOk;
}

int cmd_simulate(const std::string& table, const SimulationConfig& config, const std::string& out_path,
                 std::ostream& out) {
  if (config.replicates < 1) throw InvalidArgument("simulate: --reps must be positive");
  TableReport report;
  if (table == "2") {
    report = run_table2(config);
  } else if (table == "3") {
    report = run_table3(config);
  } else if (table == "4") {
    report = run_table4(config);
  } else if (table == "power") {
    report = run_power_study(config);
  } else {
    throw InvalidArgument("simulate: --table must be 2, 3, 4 or power");
  }
  emit(out_path, out, [&](std::ostream& o) { write_report(o, report); });
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Small-sphere distributions on (S^{p-1})^K: densities, sampling, fitting and tests"};
  app.require_subcommand(1);

  ModelArgs model_args;
  std::string out_path;
  std::string data_path;
  int grid = 60;
  int n = 50;
  std::uint64_t seed = kDefaultSimulationSeed;

  auto* density = app.add_subcommand("density", "log-density on a latitude/longitude grid (CSV)");
  add_model_options(density, model_args);
  density->add_option("--grid", grid, "latitude cells; longitude gets twice as many")->capture_default_str();
  bool saddle = false;
  density->add_flag("--saddle", saddle, "normalize s1 with the saddle-point constant instead of quadrature");
  density->add_option("--out", out_path, "output CSV (default stdout)");

  auto* sample = app.add_subcommand("sample", "draw a dataset (CSV plus JSON sidecar)");
  add_model_options(sample, model_args);
  sample->add_option("--n", n, "sample size")->capture_default_str();
  sample->add_option("--seed", seed, "random seed")->capture_default_str();
  sample->add_option("--out", out_path, "output CSV (default stdout, no sidecar)");

  std::string fit_model_name;
  std::vector<double> fixed_axis;
  bool exact = false;
  auto* fit = app.add_subcommand("fit", "maximum-likelihood fit (JSON)");
  fit->add_option("--model", fit_model_name, "vmf, bm, s1, s2, ims1, ims2 or ms2")->required();
  fit->add_option("--data", data_path, "dataset CSV")->required();
  fit->add_option("--mu0", fixed_axis, "hold the axis at this value")->delimiter(',');
  fit->add_flag("--exact", exact, "exact constants: quadrature S1 constant, exact MS2 horizontal likelihood");
  fit->add_option("--out", out_path, "output JSON (default stdout)");

  std::string hypothesis;
  std::string alternative = "s2";
  std::vector<double> mu0_star;
  double alpha = 0.05;
  auto* test = app.add_subcommand("test", "likelihood-ratio test (JSON)");
  test->add_option("--hypothesis", hypothesis, "association, axis, great-sphere, vmf or bm")->required();
  test->add_option("--model", alternative, "alternative model")->capture_default_str();
  test->add_option("--data", data_path, "dataset CSV")->required();
  test->add_option("--mu0-star", mu0_star, "axis under the null (axis hypothesis)")->delimiter(',');
  test->add_option("--alpha", alpha, "significance level")->capture_default_str();
  test->add_option("--out", out_path, "output JSON (default stdout)");

  std::string table;
  SimulationConfig config;
  int sim_n = 0;
  auto* simulate = app.add_subcommand("simulate", "reproduce a simulation table (CSV with metadata header)");
  simulate->add_option("--table", table, "2, 3, 4 or power")->required();
  simulate->add_option("--reps", config.replicates, "replicates per setting")->capture_default_str();
  simulate->add_option("--n", sim_n, "override the sample size");
  simulate->add_option("--seed", config.seed, "base seed")->capture_default_str();
  simulate->add_option("--threads", config.threads, "worker threads (0 = all cores)")->capture_default_str();
  simulate->add_option("--settings", config.settings, "subset of settings")->delimiter(',');
  simulate->add_option("--methods", config.methods, "subset of methods")->delimiter(',');
  simulate->add_option("--out", out_path, "output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << "Run with --help for usage.\n";
    return kExitUsage;
  }

  try {
    if (*density) return cmd_density(model_args, grid, saddle, out_path, out);
    if (*sample) return cmd_sample(model_args, n, seed, out_path, out);
    if (*fit) return cmd_fit(fit_model_name, data_path, fixed_axis, exact, out_path, out);
    if (*test) return cmd_test(hypothesis, alternative, data_path, mu0_star, alpha, out_path, out);
    if (*simulate) {
      if (sim_n > 0) config.n = sim_n;
      return cmd_simulate(table, config, out_path, out);
    }
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DegeneracyError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace smallsphere::cli
