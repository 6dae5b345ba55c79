#include "smallsphere/dataset.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <vector>

#include "smallsphere/error.hpp"

namespace smallsphere {

namespace {

using nlohmann::json;

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto first = field.find_first_not_of(" \t\r");
    const auto last = field.find_last_not_of(" \t\r");
    out.push_back(first == std::string::npos ? std::string() : field.substr(first, last - first + 1));
  }
  return out;
}

// Parses "x{k}_{j}"; returns false on anything else.
bool parse_label(const std::string& label, int& k, int& j) {
  if (label.size() < 4 || label[0] != 'x') return false;
  const auto us = label.find('_');
  if (us == std::string::npos) return false;
  const char* begin = label.data();
  auto r1 = std::from_chars(begin + 1, begin + us, k);
  auto r2 = std::from_chars(begin + us + 1, begin + label.size(), j);
  return r1.ec == std::errc() && r1.ptr == begin + us && r2.ec == std::errc() && r2.ptr == begin + label.size();
}

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json matrix(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec(m.row(i).transpose()));
  return rows;
}

json marginal_fields(const UnitVec& mu0, const std::vector<MarginalParams>& ms) {
  json out;
  out["mu0"] = vec(mu0.coords());
  out["mu1"] = json::array();
  out["kappa0"] = json::array();
  out["kappa1"] = json::array();
  out["nu"] = json::array();
  for (const auto& m : ms) {
    out["mu1"].push_back(vec(m.mu1.coords()));
    out["kappa0"].push_back(m.kappa0);
    out["kappa1"].push_back(m.kappa1);
    out["nu"].push_back(mu0.coords().dot(m.mu1.coords()));
  }
  out["lambda"] = nullptr;
  return out;
}

}  // namespace

std::string column_label(int k, int j) { return "x" + std::to_string(k) + "_" + std::to_string(j); }

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  std::filesystem::path out = path;
  out += ".json";
  return out;
}

void check_unit_norm(const DirectionalSample& sample, double tol) {
  for (Eigen::Index i = 0; i < sample.n(); ++i) {
    for (int k = 0; k < sample.K; ++k) {
      const double norm = sample.rows.row(i).segment(static_cast<Eigen::Index>(k) * sample.p, sample.p).norm();
      if (!(std::abs(norm - 1.0) <= tol)) {
        std::ostringstream msg;
        msg << "dataset: row " << i + 1 << ", marginal " << k + 1 << " has norm " << std::setprecision(17) << norm
            << ", not a unit vector";
        throw InvalidArgument(msg.str());
      }
    }
  }
}

void write_csv(std::ostream& out, const DirectionalSample& sample) {
  for (int k = 0; k < sample.K; ++k) {
    for (int j = 0; j < sample.p; ++j) {
      if (k > 0 || j > 0) out << ',';
      out << column_label(k + 1, j + 1);
    }
  }
  out << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < sample.n(); ++i) {
    for (Eigen::Index c = 0; c < sample.rows.cols(); ++c) {
      if (c > 0) out << ',';
      out << sample.rows(i, c);
    }
    out << '\n';
  }
}

void write_dataset(const std::filesystem::path& path, const DirectionalSample& sample) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("dataset: cannot open " + path.string() + " for writing");
  write_csv(out, sample);
  std::ofstream side(sidecar_path(path));
  if (!side) throw InvalidArgument("dataset: cannot write sidecar for " + path.string());
  side << json{{"p", sample.p}, {"K", sample.K}, {"n", sample.n()}}.dump(2) << '\n';
}

DirectionalSample read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("dataset: empty input");
  const std::vector<std::string> header = split_fields(line);
  int p = 0;
  int K = 0;
  for (std::size_t c = 0; c < header.size(); ++c) {
    int k = 0;
    int j = 0;
    if (!parse_label(header[c], k, j)) throw InvalidArgument("dataset: bad column label '" + header[c] + "'");
    if (k == 1) p = std::max(p, j);
    K = std::max(K, k);
  }
  if (p < 2 || K < 1 || header.size() != static_cast<std::size_t>(p) * K)
    throw InvalidArgument("dataset: header does not describe K blocks of p columns");
  for (int k = 0; k < K; ++k) {
    for (int j = 0; j < p; ++j) {
      if (header[static_cast<std::size_t>(k) * p + j] != column_label(k + 1, j + 1))
        throw InvalidArgument("dataset: expected column " + column_label(k + 1, j + 1));
    }
  }

  std::vector<double> values;
  Eigen::Index n = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != header.size())
      throw InvalidArgument("dataset: row " + std::to_string(n + 1) + " has " + std::to_string(fields.size()) +
                            " fields, expected " + std::to_string(header.size()));
    for (const auto& f : fields) {
      double v = 0.0;
      const auto r = std::from_chars(f.data(), f.data() + f.size(), v);
      if (r.ec != std::errc() || r.ptr != f.data() + f.size())
        throw InvalidArgument("dataset: row " + std::to_string(n + 1) + " has a non-numeric field '" + f + "'");
      values.push_back(v);
    }
    ++n;
  }
  Eigen::MatrixXd rows =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), n,
                                                                                            static_cast<Eigen::Index>(header.size()));
  DirectionalSample sample(p, K, std::move(rows));
  check_unit_norm(sample);
  return sample;
}

DirectionalSample read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("dataset: cannot open " + path.string());
  DirectionalSample sample = read_csv(in);
  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    std::ifstream s(side);
    json meta;
    try {
      meta = json::parse(s);
    } catch (const json::exception& e) {
      throw InvalidArgument("dataset: unreadable sidecar " + side.string() + ": " + e.what());
    }
    if (meta.value("p", sample.p) != sample.p || meta.value("K", sample.K) != sample.K ||
        meta.value("n", static_cast<long>(sample.n())) != static_cast<long>(sample.n()))
      throw InvalidArgument("dataset: sidecar " + side.string() + " disagrees with the CSV shape");
  }
  return sample;
}

json to_json(const ModelParams& params) {
  json out = std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, VmfParams>) {
          return json{{"mu0", nullptr}, {"mu1", json::array({vec(m.mu.coords())})}, {"kappa0", json::array({0.0})},
                      {"kappa1", json::array({m.kappa})}, {"nu", nullptr}, {"lambda", nullptr}};
        } else if constexpr (std::is_same_v<T, BmParams>) {
          return json{{"mu0", vec(m.mu.coords())}, {"mu1", nullptr}, {"kappa0", json::array({m.kappa})},
                      {"kappa1", json::array({0.0})}, {"nu", json::array({m.nu})}, {"lambda", nullptr}};
        } else if constexpr (std::is_same_v<T, S1Params> || std::is_same_v<T, S2Params>) {
          return marginal_fields(m.mu0, {MarginalParams{m.mu1, m.kappa0, m.kappa1}});
        } else if constexpr (std::is_same_v<T, MS2Params>) {
          json j = marginal_fields(m.mu0, m.marginals);
          j["lambda"] = matrix(m.lambda);
          return j;
        } else {
          return marginal_fields(m.mu0, m.marginals);
        }
      },
      params);
  out["model"] = to_string(kind_of(params));
  return out;
}

json to_json(const FitResult& fit) {
  json out = to_json(fit.params);
  out["negLogLik"] = fit.neg_log_lik;
  out["iters"] = fit.n_iters;
  out["converged"] = fit.converged;
  out["saturated"] = fit.saturated;
  return out;
}

json to_json(const TestResult& result) {
  return json{{"hypothesis", to_string(result.hypothesis.kind)},
              {"alternative", to_string(result.hypothesis.alternative)},
              {"Wn", result.W_n},
              {"df", result.df},
              {"pValue", result.p_value},
              {"L0", result.L0},
              {"L1", result.L1},
              {"converged", result.converged},
              {"nullFit", to_json(result.null_fit)},
              {"alternativeFit", to_json(result.alternative_fit)}};
}

}  // namespace smallsphere
