#pragma once

// Simulation harness: scenarios from the simulation study, replicated fits
// on worker threads, and mean(sd) tables.

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "smallsphere/densities.hpp"
#include "smallsphere/estimation.hpp"
#include "smallsphere/inference.hpp"
#include "smallsphere/sample.hpp"

namespace smallsphere {

inline constexpr std::uint64_t kDefaultSimulationSeed = 20170301;

/// Estimator run on each replicate. BM is the first-kind fit with kappa1 = 0.
struct Estimator {
  std::string name;
  ModelKind kind = ModelKind::S2;
  FitOptions options;
};

struct Scenario {
  std::string name;
  ModelParams truth;
  int n = 50;
  int replicates = 100;
  std::uint64_t seed = kDefaultSimulationSeed;
  std::vector<Estimator> estimators;
};

void validate(const Scenario& scenario);

/// Replicate r of a scenario draws from RngStream(seed).split(r).
DirectionalSample draw_replicate(const Scenario& scenario, int replicate);

FitResult run_estimator(const Estimator& estimator, const DirectionalSample& data);

/// outcomes[e][r] is the fit of estimator e on replicate r, or empty when it
/// threw. Results do not depend on the thread count.
struct ScenarioResult {
  std::vector<std::vector<std::optional<FitResult>>> outcomes;
};

ScenarioResult run_scenario(const Scenario& scenario, int threads = 0);

/// Calls job(r) for r in [0, count) on up to `threads` workers (0 = hardware).
void parallel_for(int count, int threads, const std::function<void(int)>& job);

struct Cell {
  double mean = 0.0;
  double sd = 0.0;
  int count = 0;     ///< replicates that produced a value
  int failures = 0;  ///< replicates whose fit threw
};

Cell summarize(const std::vector<double>& values, int failures = 0);

struct TableRow {
  std::string method;
  std::vector<std::optional<Cell>> cells;  ///< empty cells render blank
};

struct TableReport {
  std::string title;
  std::vector<std::string> columns;
  std::vector<TableRow> rows;
  std::vector<std::pair<std::string, std::string>> metadata;

  const Cell& cell(const std::string& method, const std::string& column) const;
};

/// '#'-prefixed metadata lines, then a CSV table of "mean(sd)" cells.
void write_report(std::ostream& out, const TableReport& report);

struct SimulationConfig {
  int replicates = 100;
  std::optional<int> n;  ///< overrides the table's sample size
  std::uint64_t seed = kDefaultSimulationSeed;
  int threads = 0;
  std::vector<std::string> settings;  ///< subset of setting letters; empty = all
  std::vector<std::string> methods;   ///< subset of method names; empty = all
};

/// Univariate S2 settings (a)-(d), nu = 0.5, n = 50; S1, S2 and BM rows of
/// angular product errors in degrees. An empty LS row keeps the shape.
TableReport run_table2(const SimulationConfig& config);

/// Bivariate settings (a)-(f), nu = (0.5, -0.3); iMS1, iMS2, MS2 and BM
/// rows, plus an empty LS row.
TableReport run_table3(const SimulationConfig& config);

/// Concentration and association estimates for cases (c) and (f) at
/// n = 50 and 200. MS2 uses exact horizontal maximum likelihood.
TableReport run_table4(const SimulationConfig& config);

/// VMF likelihood-ratio test against the S1 alternative at alpha = 0.05:
/// vMF(10) null and three S2 alternatives, n = 30.
TableReport run_power_study(const SimulationConfig& config);

/// Truth for the settings above, exposed for tests.
S2Params table2_truth(const std::string& setting);
MS2Params table3_truth(const std::string& setting);

}  // namespace smallsphere
