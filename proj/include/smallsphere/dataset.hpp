#pragma once

// Dataset files: CSV with header x{k}_{j} (marginal k, coordinate j, both
// 1-based) and a JSON sidecar "<file>.json" holding p, K and n.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "smallsphere/estimation.hpp"
#include "smallsphere/inference.hpp"
#include "smallsphere/sample.hpp"

namespace smallsphere {

/// Rows are checked for unit norm to within this tolerance on load.
inline constexpr double kUnitNormTolerance = 1e-9;

std::string column_label(int k, int j);

/// Values are written with 17 significant digits, so reading back is exact.
void write_csv(std::ostream& out, const DirectionalSample& sample);
void write_dataset(const std::filesystem::path& path, const DirectionalSample& sample);

/// Shape comes from the header; when a sidecar exists it must agree.
DirectionalSample read_csv(std::istream& in);
DirectionalSample read_dataset(const std::filesystem::path& path);

/// Throws InvalidArgument naming the first row with a non-unit block.
void check_unit_norm(const DirectionalSample& sample, double tol = kUnitNormTolerance);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

nlohmann::json to_json(const ModelParams& params);
/// Fields: model, mu0, mu1, kappa0, kappa1, lambda, nu, negLogLik, iters,
/// converged (and saturated).
nlohmann::json to_json(const FitResult& fit);
/// Fields: hypothesis, Wn, df, pValue, L0, L1, converged.
nlohmann::json to_json(const TestResult& result);

}  // namespace smallsphere
