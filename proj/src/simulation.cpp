#include "smallsphere/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "smallsphere/error.hpp"
#include "smallsphere/random.hpp"
#include "smallsphere/samplers.hpp"
#include "smallsphere/sphere.hpp"

namespace smallsphere {

namespace {

const UnitVec kNorthPole{0.0, 0.0, 1.0};

UnitVec on_circle(double nu, double azimuth) {
  const double r = std::sqrt(1.0 - nu * nu);
  return UnitVec(Eigen::Vector3d(r * std::cos(azimuth), r * std::sin(azimuth), nu));
}

struct Setting2 {
  const char* name;
  double kappa0;
  double kappa1;
};

constexpr Setting2 kTable2[] = {{"a", 10, 1}, {"b", 100, 1}, {"c", 100, 10}, {"d", 100, 0}};

struct Setting3 {
  const char* name;
  double kappa0;
  double kappa1;
  double lambda;
};

constexpr Setting3 kTable3[] = {{"a", 10, 1, 0},   {"b", 100, 1, 0},   {"c", 100, 10, 0},
                                {"d", 10, 2, 1.5}, {"e", 100, 2, 1.5}, {"f", 100, 20, 15}};

bool selected(const std::vector<std::string>& subset, const std::string& name) {
  return subset.empty() || std::find(subset.begin(), subset.end(), name) != subset.end();
}

std::uint64_t scenario_seed(std::uint64_t base, std::uint64_t table, std::uint64_t index) {
  return RngStream(base).split(table).split(index).seed();
}

std::string format_cell(const Cell& c) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << c.mean << '(' << c.sd << ')';
  return out.str();
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : " ") + s;
  return out;
}

void common_metadata(TableReport& report, const SimulationConfig& config) {
  report.metadata.emplace_back("replicates", std::to_string(config.replicates));
  report.metadata.emplace_back("seed", std::to_string(config.seed));
}

Estimator estimator(const std::string& name, ModelKind kind, FitOptions opts = {}) {
  return Estimator{name, kind, opts};
}

std::vector<double> errors_of(const Scenario& sc, const std::vector<std::optional<FitResult>>& fits, int& failures) {
  const SphereEstimate truth = sphere_estimate(sc.truth);
  std::vector<double> out;
  failures = 0;
  for (const auto& f : fits) {
    if (!f) {
      ++failures;
      continue;
    }
    const SphereEstimate est = sphere_estimate(f->params);
    out.push_back(angular_product_error(truth.mu0, truth.nu, est.mu0, est.nu));
  }
  return out;
}

// Rows follow `methods`; columns follow the scenarios.
TableReport error_table(const std::string& title, const std::vector<Scenario>& scenarios,
                        const std::vector<std::string>& methods, const SimulationConfig& config) {
  TableReport report;
  report.title = title;
  for (const auto& m : methods) report.rows.push_back(TableRow{m, {}});
  report.rows.push_back(TableRow{"LS", {}});
  std::vector<std::string> seeds;
  for (const auto& sc : scenarios) {
    report.columns.push_back(sc.name);
    seeds.push_back(sc.name + "=" + std::to_string(sc.seed));
    const ScenarioResult res = run_scenario(sc, config.threads);
    for (std::size_t r = 0; r < methods.size(); ++r) {
      std::optional<Cell> cell;
      for (std::size_t e = 0; e < sc.estimators.size(); ++e) {
        if (sc.estimators[e].name != methods[r]) continue;
        int failures = 0;
        const std::vector<double> errs = errors_of(sc, res.outcomes[e], failures);
        cell = summarize(errs, failures);
      }
      report.rows[r].cells.push_back(cell);
    }
    report.rows.back().cells.push_back(std::nullopt);
  }
  common_metadata(report, config);
  report.metadata.emplace_back("n", std::to_string(scenarios.empty() ? 0 : scenarios.front().n));
  report.metadata.emplace_back("scenario_seeds", join(seeds));
  report.metadata.emplace_back("metric", "angular product error (degrees)");
  report.metadata.emplace_back("LS", "least-squares comparator not implemented; row left empty");
  return report;
}

}  // namespace

void validate(const Scenario& scenario) {
  if (scenario.replicates < 1) throw InvalidArgument("scenario: replicates must be >= 1");
  if (scenario.n < 1) throw InvalidArgument("scenario: n must be >= 1");
  validate(scenario.truth);
  for (const auto& e : scenario.estimators) validate(e.options);
}

DirectionalSample draw_replicate(const Scenario& scenario, int replicate) {
  RngStream rng = RngStream(scenario.seed).split(static_cast<std::uint64_t>(replicate));
  return sample_model(rng, scenario.truth, scenario.n);
}

FitResult run_estimator(const Estimator& estimator, const DirectionalSample& data) {
  return fit_model(estimator.kind, data, estimator.options);
}

void parallel_for(int count, int threads, const std::function<void(int)>& job) {
  if (count <= 0) return;
  int workers = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, count);
  if (workers == 1) {
    for (int i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

ScenarioResult run_scenario(const Scenario& scenario, int threads) {
  validate(scenario);
  ScenarioResult out;
  out.outcomes.assign(scenario.estimators.size(), std::vector<std::optional<FitResult>>(scenario.replicates));
  parallel_for(scenario.replicates, threads, [&](int r) {
    const DirectionalSample data = draw_replicate(scenario, r);
    for (std::size_t e = 0; e < scenario.estimators.size(); ++e) {
      try {
        out.outcomes[e][r] = run_estimator(scenario.estimators[e], data);
      } catch (const Error&) {
        out.outcomes[e][r].reset();
      }
    }
  });
  return out;
}

Cell summarize(const std::vector<double>& values, int failures) {
  Cell c;
  c.count = static_cast<int>(values.size());
  c.failures = failures;
  if (values.empty()) return c;
  double sum = 0.0;
  for (double v : values) sum += v;
  c.mean = sum / c.count;
  if (c.count > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - c.mean) * (v - c.mean);
    c.sd = std::sqrt(ss / (c.count - 1));
  }
  return c;
}

const Cell& TableReport::cell(const std::string& method, const std::string& column) const {
  const auto col = std::find(columns.begin(), columns.end(), column);
  if (col == columns.end()) throw InvalidArgument("report: no column '" + column + "'");
  for (const auto& row : rows) {
    if (row.method != method) continue;
    const auto& c = row.cells.at(static_cast<std::size_t>(col - columns.begin()));
    if (!c) throw InvalidArgument("report: cell " + method + "/" + column + " is empty");
    return *c;
  }
  throw InvalidArgument("report: no row '" + method + "'");
}

void write_report(std::ostream& out, const TableReport& report) {
  out << "# " << report.title << '\n';
  for (const auto& [key, value] : report.metadata) out << "# " << key << ": " << value << '\n';
  out << "method";
  for (const auto& c : report.columns) out << ',' << c;
  out << '\n';
  for (const auto& row : report.rows) {
    out << row.method;
    for (const auto& c : row.cells) {
      out << ',';
      if (c) out << format_cell(*c);
    }
    out << '\n';
  }
}

S2Params table2_truth(const std::string& setting) {
  for (const auto& s : kTable2) {
    if (setting == s.name) return S2Params{kNorthPole, on_circle(0.5, 0.0), s.kappa0, s.kappa1};
  }
  throw InvalidArgument("table 2: unknown setting '" + setting + "'");
}

MS2Params table3_truth(const std::string& setting) {
  for (const auto& s : kTable3) {
    if (setting != s.name) continue;
    std::vector<MarginalParams> marginals{{on_circle(0.5, 0.0), s.kappa0, s.kappa1},
                                          {on_circle(-0.3, 0.5 * std::numbers::pi), s.kappa0, s.kappa1}};
    Eigen::Matrix2d lambda;
    lambda << 0.0, s.lambda, s.lambda, 0.0;
    return MS2Params{kNorthPole, marginals, lambda};
  }
  throw InvalidArgument("table 3: unknown setting '" + setting + "'");
}

TableReport run_table2(const SimulationConfig& config) {
  const std::vector<Estimator> all{estimator("S1", ModelKind::S1), estimator("S2", ModelKind::S2),
                                   estimator("BM", ModelKind::BM)};
  std::vector<Estimator> chosen;
  std::vector<std::string> methods;
  for (const auto& e : all) {
    if (!selected(config.methods, e.name)) continue;
    chosen.push_back(e);
    methods.push_back(e.name);
  }
  std::vector<Scenario> scenarios;
  for (std::size_t i = 0; i < std::size(kTable2); ++i) {
    const std::string name = kTable2[i].name;
    if (!selected(config.settings, name)) continue;
    scenarios.push_back(Scenario{name, table2_truth(name), config.n.value_or(50), config.replicates,
                                 scenario_seed(config.seed, 2, i), chosen});
  }
  return error_table("angular product errors, univariate S2 data", scenarios, methods, config);
}

TableReport run_table3(const SimulationConfig& config) {
  const std::vector<Estimator> all{estimator("iMS1", ModelKind::IMS1), estimator("iMS2", ModelKind::IMS2),
                                   estimator("MS2", ModelKind::MS2), estimator("BM", ModelKind::BM)};
  std::vector<Estimator> chosen;
  std::vector<std::string> methods;
  for (const auto& e : all) {
    if (!selected(config.methods, e.name)) continue;
    chosen.push_back(e);
    methods.push_back(e.name);
  }
  std::vector<Scenario> scenarios;
  for (std::size_t i = 0; i < std::size(kTable3); ++i) {
    const std::string name = kTable3[i].name;
    if (!selected(config.settings, name)) continue;
    scenarios.push_back(Scenario{name, table3_truth(name), config.n.value_or(50), config.replicates,
                                 scenario_seed(config.seed, 3, i), chosen});
  }
  return error_table("angular product errors, bivariate MS2 data", scenarios, methods, config);
}

TableReport run_table4(const SimulationConfig& config) {
  FitOptions exact;
  exact.exact_mvm = true;
  std::vector<Estimator> chosen;
  if (selected(config.methods, "iMS2")) chosen.push_back(estimator("iMS2", ModelKind::IMS2));
  if (selected(config.methods, "MS2")) chosen.push_back(estimator("MS2", ModelKind::MS2, exact));
  const std::vector<int> sizes = config.n ? std::vector<int>{*config.n} : std::vector<int>{50, 200};
  const std::vector<std::string> cases{"c", "f"};

  TableReport report;
  report.title = "concentration and association estimates, bivariate MS2 data";
  for (int n : sizes) {
    for (const auto& e : chosen) report.rows.push_back(TableRow{e.name + " n=" + std::to_string(n), {}});
  }
  std::vector<std::string> seeds;
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const std::string& name = cases[ci];
    if (!selected(config.settings, name)) continue;
    report.columns.push_back(name + ":kappa11");
    report.columns.push_back(name + ":kappa12");
    report.columns.push_back(name + ":lambda12");
    for (std::size_t si = 0; si < sizes.size(); ++si) {
      const int n = sizes[si];
      Scenario sc{name, table3_truth(name), n, config.replicates, scenario_seed(config.seed, 4, 10 * ci + si), chosen};
      seeds.push_back(name + "/n=" + std::to_string(n) + "=" + std::to_string(sc.seed));
      const ScenarioResult res = run_scenario(sc, config.threads);
      for (std::size_t e = 0; e < chosen.size(); ++e) {
        std::vector<double> k1, k2, lam;
        int failures = 0;
        for (const auto& f : res.outcomes[e]) {
          if (!f) {
            ++failures;
            continue;
          }
          std::visit(
              [&](const auto& m) {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, IMS2Params> || std::is_same_v<T, MS2Params>) {
                  k1.push_back(m.marginals[0].kappa1);
                  k2.push_back(m.marginals[1].kappa1);
                  if constexpr (std::is_same_v<T, MS2Params>) lam.push_back(m.lambda(0, 1));
                }
              },
              f->params);
        }
        TableRow& row = report.rows[si * chosen.size() + e];
        row.cells.push_back(summarize(k1, failures));
        row.cells.push_back(summarize(k2, failures));
        row.cells.push_back(lam.empty() ? std::optional<Cell>() : summarize(lam, failures));
      }
    }
  }
  common_metadata(report, config);
  report.metadata.emplace_back("scenario_seeds", join(seeds));
  report.metadata.emplace_back("MS2", "horizontal parameters by exact maximum likelihood");
  return report;
}

TableReport run_power_study(const SimulationConfig& config) {
  struct Alternative {
    std::string name;
    ModelParams truth;
  };
  const UnitVec mode = on_circle(0.5, 0.0);
  const std::vector<Alternative> cases{{"vMF(10)", VmfParams{kNorthPole, 10.0}},
                                       {"S2(20,10)", S2Params{kNorthPole, mode, 20.0, 10.0}},
                                       {"S2(100,10)", S2Params{kNorthPole, mode, 100.0, 10.0}},
                                       {"S2(100,1)", S2Params{kNorthPole, mode, 100.0, 1.0}}};
  const Hypothesis h{HypothesisKind::VonMisesFisher, ModelKind::S1, std::nullopt};
  const double alpha = 0.05;
  const int n = config.n.value_or(30);

  TableReport report;
  report.title = "VMF likelihood-ratio test under the S1 alternative";
  report.columns = {"rejection", "W", "unreliable"};
  std::vector<std::string> seeds;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (!selected(config.settings, cases[i].name)) continue;
    Scenario sc{cases[i].name, cases[i].truth, n, config.replicates, scenario_seed(config.seed, 5, i), {}};
    validate(sc);
    seeds.push_back(sc.name + "=" + std::to_string(sc.seed));
    std::vector<std::optional<TestResult>> results(sc.replicates);
    parallel_for(sc.replicates, config.threads, [&](int r) {
      try {
        results[r] = lr_test(h, draw_replicate(sc, r));
      } catch (const Error&) {
        results[r].reset();
      }
    });
    std::vector<double> reject, w, unreliable;
    int failures = 0;
    for (const auto& t : results) {
      if (!t) {
        ++failures;
        continue;
      }
      reject.push_back(t->p_value < alpha ? 1.0 : 0.0);
      w.push_back(t->W_n);
      unreliable.push_back(t->converged ? 0.0 : 1.0);
    }
    report.rows.push_back(TableRow{sc.name, {summarize(reject, failures), summarize(w, failures),
                                             summarize(unreliable, failures)}});
  }
  common_metadata(report, config);
  report.metadata.emplace_back("n", std::to_string(n));
  report.metadata.emplace_back("alpha", "0.05");
  report.metadata.emplace_back("df", std::to_string(degrees_of_freedom(h, 3, 1)));
  report.metadata.emplace_back("scenario_seeds", join(seeds));
  return report;
}

}  // namespace smallsphere
