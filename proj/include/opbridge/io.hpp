#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "opbridge/analysis.hpp"
#include "opbridge/bridgecore.hpp"
#include "opbridge/errors.hpp"
#include "opbridge/sampler.hpp"
#include "opbridge/spectral.hpp"
#include "opbridge/uniqueness.hpp"

namespace opbridge {

using json = nlohmann::json;

// Fixed, locale-independent float formatting so identical runs emit identical
// bytes; 17 significant digits round-trip every double exactly.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Matrices <-> JSON nested arrays.

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty())
    throw InvalidInput("config field '" + field + "': expected a non-empty array of rows");
  const std::size_t nrows = j.size();
  std::size_t ncols = 0;
  if (j[0].is_array()) ncols = j[0].size();
  if (ncols == 0)
    throw InvalidInput("config field '" + field + "': row 1 must be a non-empty array of numbers");
  Matrix m(static_cast<Eigen::Index>(nrows), static_cast<Eigen::Index>(ncols));
  for (std::size_t i = 0; i < nrows; ++i) {
    if (!j[i].is_array() || j[i].size() != ncols)
      throw InvalidInput("config field '" + field + "': row " + std::to_string(i + 1) + " has " +
                         std::to_string(j[i].is_array() ? j[i].size() : 0) + " entries, expected " +
                         std::to_string(ncols));
    for (std::size_t k = 0; k < ncols; ++k) {
      if (!j[i][k].is_number())
        throw InvalidInput("config field '" + field + "': entry [" + std::to_string(i + 1) + "][" +
                           std::to_string(k + 1) + "] is not a number");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Model configuration.

struct ModelConfig {
  double T = 1.0;
  Matrix A;
  Matrix Sigma;
  std::string label;
  double grouping_tol = -1.0;  // negative: library default
};

inline ModelConfig parse_model_config(const json& j) {
  if (!j.is_object()) throw InvalidInput("config: top level must be a JSON object");
  ModelConfig c;
  if (!j.contains("T") || !j["T"].is_number())
    throw InvalidInput("config field 'T': required positive number missing or non-numeric");
  c.T = j["T"].get<double>();
  if (!j.contains("A")) throw InvalidInput("config field 'A': required d x d array missing");
  c.A = matrix_from_json(j["A"], "A");
  if (!j.contains("Sigma"))
    throw InvalidInput("config field 'Sigma': required d x m array missing");
  c.Sigma = matrix_from_json(j["Sigma"], "Sigma");
  if (j.contains("label")) {
    if (!j["label"].is_string()) throw InvalidInput("config field 'label': expected a string");
    c.label = j["label"].get<std::string>();
  }
  if (j.contains("grouping_tol")) {
    if (!j["grouping_tol"].is_number())
      throw InvalidInput("config field 'grouping_tol': expected a number");
    c.grouping_tol = j["grouping_tol"].get<double>();
  }
  return c;
}

inline ModelConfig load_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidInput("config '" + path + "': " + e.what());
  }
  try {
    return parse_model_config(j);
  } catch (const InvalidInput& e) {
    throw InvalidInput("config '" + path + "': " + e.what());
  }
}

inline BridgeModel model_from_config(const ModelConfig& c) {
  return BridgeModel::create(c.A, c.Sigma, c.T, c.grouping_tol);
}

// Hash of the canonical (whitespace-free) serialization of a config.
inline std::uint64_t config_hash(const json& j) {
  const std::string s = j.dump();
  return detail::fnv1a_bytes(s.data(), s.size());
}

// ---------------------------------------------------------------------------
// Report serialization.

inline json classification_to_json(const ClassificationReport& r) {
  return json{{"respec", r.respec},
              {"sigma_rank", r.sigma_rank},
              {"verdict", r.verdict},
              {"rule", r.rule},
              {"notes", r.notes}};
}

inline json covariance_to_json(const CovarianceReport& r) {
  json mats = json::array();
  for (const auto& m : r.matrices) mats.push_back(matrix_to_json(m));
  return json{{"times", r.times}, {"matrices", mats}, {"quad_error", r.quad_error}};
}

inline json quadvar_to_json(const QuadVarCurve& c) {
  return json{{"coordinate", c.coordinate},
              {"times", c.times},
              {"values", c.values},
              {"divergence_flag", to_string(c.divergence_flag)}};
}

inline json decomposition_to_json(const SpectralDecomposition& dec) {
  json blocks = json::array();
  for (const auto& b : dec.blocks) blocks.push_back(matrix_to_json(b));
  json sigmas = json::array();
  for (const auto& s : dec.projected_diffusions) sigmas.push_back(matrix_to_json(s));
  return json{{"real_parts", dec.real_parts},
              {"block_dims", dec.block_dims},
              {"basis", matrix_to_json(dec.basis)},
              {"blocks", blocks},
              {"projected_diffusions", sigmas}};
}

inline json comparison_to_json(const LawComparison& c) {
  return json{{"verdict", c.verdict},
              {"max_deviation", c.max_deviation},
              {"grid", c.grid},
              {"noise_match", c.noise_match},
              {"covariance_match", c.covariance_match},
              {"respec_match", c.respec_match},
              {"deviations", c.deviations},
              {"argmax_time", c.argmax_time},
              {"quad_error_floor", c.quad_error_floor},
              {"drift_distance", c.drift_distance},
              {"notes", c.notes}};
}

inline json respec_consistency_to_json(const RespecConsistencyReport& r) {
  return json{{"applicable", r.applicable},
              {"consistent", r.consistent},
              {"reason", r.reason},
              {"respec1", r.respec1},
              {"respec2", r.respec2}};
}

inline json commutator_to_json(const CommutatorReport& r) {
  return json{{"times", r.times},
              {"defects", r.defects},
              {"max_defect", r.max_defect},
              {"scale", r.scale},
              {"vanishes", r.vanishes}};
}

inline json convergence_to_json(const ConvergenceReport& r) {
  return json{{"level_times", r.level_times},
              {"mean_sq_norm", r.mean_sq_norm},
              {"tail_times", r.tail_times},
              {"tail_values", r.tail_values},
              {"monotone_tail", r.monotone_tail},
              {"final_below_tenth", r.final_below_tenth},
              {"converged", r.converged},
              {"m_cov_checked", r.m_cov_checked},
              {"m_cov_diff", r.m_cov_diff},
              {"m_cov_stabilizing", r.m_cov_stabilizing},
              {"statement", r.statement},
              {"notes", r.notes}};
}

inline json decay_to_json(const DecayReport& r) {
  return json{{"block_index", r.block_index},
              {"a_j", r.a_j},
              {"predicted_exponent_norm", r.predicted_exponent_norm},
              {"predicted_exponent_second_moment", r.predicted_exponent_second_moment},
              {"estimated_exponent", r.estimated_exponent},
              {"slope_stderr", r.slope_stderr},
              {"grid_window", r.grid_window},
              {"route", r.route}};
}

inline json probe_to_json(const ProbeReport& r) {
  return json{{"levels", r.levels},
              {"taus", r.taus},
              {"median_norms", r.median_norms},
              {"observed", r.observed},
              {"expected", r.expected},
              {"consistent", r.consistent},
              {"note", r.note}};
}

// ---------------------------------------------------------------------------
// CSV writers (byte-deterministic).

inline void write_paths_csv(std::ostream& out, const PathEnsemble& ens) {
  out << "path,t";
  for (int i = 1; i <= ens.dim(); ++i) out << ",x" << i;
  out << "\n";
  for (int p = 0; p < ens.n_paths(); ++p)
    for (int k = 0; k < ens.n_times(); ++k) {
      out << p << ',' << fmt_double(ens.times[k]);
      for (int i = 0; i < ens.dim(); ++i) out << ',' << fmt_double(ens.paths[p](k, i));
      out << "\n";
    }
}

inline void write_covariance_csv(std::ostream& out, const CovarianceReport& rep) {
  const int d = rep.matrices.empty() ? 0 : static_cast<int>(rep.matrices[0].rows());
  out << "t";
  for (int i = 1; i <= d; ++i)
    for (int j = 1; j <= d; ++j) out << ",u" << i << j;
  out << "\n";
  for (std::size_t k = 0; k < rep.times.size(); ++k) {
    out << fmt_double(rep.times[k]);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) out << ',' << fmt_double(rep.matrices[k](i, j));
    out << "\n";
  }
}

inline void write_quadvar_csv(std::ostream& out, const QuadVarCurve& c) {
  out << "t,value\n";
  for (std::size_t k = 0; k < c.times.size(); ++k)
    out << fmt_double(c.times[k]) << ',' << fmt_double(c.values[k]) << "\n";
}

}  // namespace opbridge
