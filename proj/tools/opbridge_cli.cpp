// Command-line front end: classify | simulate | analyze | decompose | compare.
// Exit codes: 0 success, 1 bad input or unmet precondition, 2 assertion
// (property check) failure, 3 numerical failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "opbridge/opbridge.hpp"

namespace fs = std::filesystem;
using opbridge::json;

namespace {

std::string iso_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Collects output files inside --out; removes partial outputs on failure and
// writes manifest.json last, as the completion marker.
class OutputDir {
 public:
  explicit OutputDir(std::string dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) fs::create_directories(dir_);
  }
  bool enabled() const { return !dir_.empty(); }

  void write_text(const std::string& name, const std::string& content) {
    if (!enabled()) return;
    const fs::path p = fs::path(dir_) / name;
    std::ofstream out(p, std::ios::binary);
    if (!out) throw opbridge::InvalidInput("cannot write output file '" + p.string() + "'");
    out << content;
    out.close();
    written_.push_back(p);
  }

  void finalize(const std::string& command, std::uint64_t cfg_hash, std::uint64_t seed,
                const std::string& started) {
    if (!enabled()) return;
    json manifest{{"command", command},
                  {"config_hash", cfg_hash},
                  {"master_seed", seed},
                  {"tool_version", OPBRIDGE_VERSION},
                  {"started_at", started},
                  {"finished_at", iso_now()},
                  {"outputs", json::array()}};
    for (const auto& p : written_) manifest["outputs"].push_back(p.filename().string());
    const fs::path p = fs::path(dir_) / "manifest.json";
    std::ofstream out(p, std::ios::binary);
    out << manifest.dump(2) << "\n";
  }

  void discard_partials() {
    for (const auto& p : written_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
    written_.clear();
  }

 private:
  std::string dir_;
  std::vector<fs::path> written_;
};

struct Options {
  std::string config;
  std::string against;
  std::string out;
  std::string grid;
  std::string scheme = "exact";
  std::string format = "csv";
  std::string analytic = "all";
  bool ensemble = false;
  bool pin_terminal = false;
  std::uint64_t seed = 0;
  int paths = 100;
};

json load_config_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw opbridge::InvalidInput("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw opbridge::InvalidInput("config '" + path + "': " + e.what());
  }
}

opbridge::BridgeModel load_model(const std::string& path, json* raw = nullptr) {
  const json j = load_config_json(path);
  if (raw) *raw = j;
  opbridge::ModelConfig cfg;
  try {
    cfg = opbridge::parse_model_config(j);
  } catch (const opbridge::InvalidInput& e) {
    throw opbridge::InvalidInput("config '" + path + "': " + e.what());
  }
  return opbridge::model_from_config(cfg);
}

std::vector<double> resolve_grid(const Options& opt, double horizon) {
  if (opt.grid.empty()) return opbridge::geometric_grid(horizon, 20);
  return opbridge::parse_grid_spec(opt.grid, horizon);
}

std::string ensemble_csv(const opbridge::PathEnsemble& ens) {
  std::ostringstream ss;
  opbridge::write_paths_csv(ss, ens);
  return ss.str();
}

json ensemble_json(const opbridge::PathEnsemble& ens) {
  json paths = json::array();
  for (const auto& p : ens.paths) paths.push_back(opbridge::matrix_to_json(p));
  return json{{"model_hash", ens.model_hash},     {"scheme", opbridge::to_string(ens.scheme)},
              {"times", ens.times},               {"paths", paths},
              {"master_seed", ens.master_seed},   {"per_path_seeds", ens.per_path_seeds},
              {"terminal_pinned", ens.terminal_pinned}, {"note", ens.note}};
}

int cmd_classify(const Options& opt) {
  json raw;
  const auto model = load_model(opt.config, &raw);
  const auto report = opbridge::classify(model);
  const json j = opbridge::classification_to_json(report);
  std::cout << j.dump(2) << "\n";
  OutputDir out(opt.out);
  const std::string started = iso_now();
  out.write_text("classification.json", j.dump(2) + "\n");
  out.finalize("classify", opbridge::config_hash(raw), opt.seed, started);
  return 0;
}

int cmd_simulate(const Options& opt) {
  if (opt.out.empty()) throw opbridge::InvalidInput("simulate: --out DIR is required");
  json raw;
  const auto model = load_model(opt.config, &raw);
  const auto grid = resolve_grid(opt, model.T);
  const std::string started = iso_now();

  opbridge::PathEnsemble ens;
  if (opt.scheme == "exact")
    ens = opbridge::sample_exact(model, grid, opt.paths, opt.seed);
  else if (opt.scheme == "euler")
    ens = opbridge::sample_euler(model, grid, opt.paths, opt.seed);
  else
    throw opbridge::InvalidInput("simulate: --scheme must be exact or euler");
  if (opt.pin_terminal) ens = opbridge::append_terminal_zero(ens, model);

  OutputDir out(opt.out);
  try {
    if (opt.format == "json")
      out.write_text("paths.json", ensemble_json(ens).dump() + "\n");
    else
      out.write_text("paths.csv", ensemble_csv(ens));
    const json extra{{"model_hash", ens.model_hash},
                     {"scheme", opbridge::to_string(ens.scheme)},
                     {"per_path_seeds", ens.per_path_seeds},
                     {"n_paths", ens.n_paths()},
                     {"n_times", ens.n_times()},
                     {"terminal_pinned", ens.terminal_pinned},
                     {"note", ens.note}};
    out.write_text("run.json", extra.dump(2) + "\n");
    out.finalize("simulate", opbridge::config_hash(raw), opt.seed, started);
  } catch (...) {
    out.discard_partials();
    throw;
  }
  std::cout << "wrote " << ens.n_paths() << " paths on " << ens.n_times() << " times ("
            << opbridge::to_string(ens.scheme) << ")"
            << (ens.note.empty() ? "" : "\nnote: " + ens.note) << "\n";
  return 0;
}

int cmd_decompose(const Options& opt) {
  json raw;
  const auto model = load_model(opt.config, &raw);
  const auto dec = opbridge::decompose(model.A, model.Sigma, model.spectrum.grouping_tol);
  const json j = opbridge::decomposition_to_json(dec);
  std::cout << j.dump(2) << "\n";
  OutputDir out(opt.out);
  const std::string started = iso_now();
  out.write_text("decomposition.json", j.dump(2) + "\n");
  out.finalize("decompose", opbridge::config_hash(raw), opt.seed, started);
  return 0;
}

int cmd_compare(const Options& opt) {
  if (opt.against.empty()) throw opbridge::InvalidInput("compare: --against PATH is required");
  json raw1, raw2;
  const auto m1 = load_model(opt.config, &raw1);
  const auto m2 = load_model(opt.against, &raw2);
  std::vector<double> grid;
  if (!opt.grid.empty()) grid = opbridge::parse_grid_spec(opt.grid, m1.T);
  const std::string started = iso_now();

  const auto cmp = opbridge::compare_laws(m1, m2, grid);
  const auto consistency = opbridge::respec_consistency(m1, m2, cmp);
  const auto defect = opbridge::commutator_defect(m1, m2, cmp.grid);

  json j = opbridge::comparison_to_json(cmp);
  j["respec_consistency"] = opbridge::respec_consistency_to_json(consistency);
  j["commutator_defect"] = opbridge::commutator_to_json(defect);

  OutputDir out(opt.out);
  try {
    out.write_text("comparison.json", j.dump(2) + "\n");
    const std::uint64_t h =
        opbridge::config_hash(json{{"config", raw1}, {"against", raw2}});
    out.finalize("compare", h, opt.seed, started);
  } catch (...) {
    out.discard_partials();
    throw;
  }
  std::cout << "verdict: " << cmp.verdict << " (max deviation "
            << opbridge::fmt_double(cmp.max_deviation) << ")\n";
  if (consistency.applicable && !consistency.consistent) {
    std::cerr << "assertion failed: " << consistency.reason << "\n";
    return 2;
  }
  return 0;
}

int cmd_analyze(const Options& opt) {
  if (!opt.against.empty()) return cmd_compare(opt);
  json raw;
  const auto model = load_model(opt.config, &raw);
  const std::string started = iso_now();
  OutputDir out(opt.out);
  std::vector<std::string> failures;

  const auto cls = opbridge::classify(model);
  json report{{"classification", opbridge::classification_to_json(cls)}};
  const bool bridge = cls.verdict == "bridge";
  const bool want_cov = opt.analytic == "all" || opt.analytic == "covariance";
  const bool want_qv = opt.analytic == "all" || opt.analytic == "quadvar";
  const bool want_decay = (opt.analytic == "all" || opt.analytic == "decay") && bridge;

  try {
    const auto grid = resolve_grid(opt, model.T);
    if (want_cov) {
      const auto cov = opbridge::covariance(model, grid);
      report["covariance"] = opbridge::covariance_to_json(cov);
      std::ostringstream ss;
      opbridge::write_covariance_csv(ss, cov);
      out.write_text("covariance.csv", ss.str());
    }
    if (want_qv) {
      json curves = json::array();
      for (int i = 1; i <= model.d; ++i) {
        const auto qv = opbridge::quadratic_variation(model, i, grid);
        curves.push_back(opbridge::quadvar_to_json(qv));
        std::ostringstream ss;
        opbridge::write_quadvar_csv(ss, qv);
        out.write_text("quadvar_x" + std::to_string(i) + ".csv", ss.str());
      }
      report["quadratic_variation"] = curves;
    }
    if (want_decay) {
      const auto dec = opbridge::decompose(model.A, model.Sigma, model.spectrum.grouping_tol);
      json decays = json::array();
      for (int b = 0; b < dec.block_count(); ++b) {
        const auto dr = opbridge::decay_exponent(model, b);
        decays.push_back(opbridge::decay_to_json(dr));
        if (std::abs(dr.estimated_exponent - dr.predicted_exponent_second_moment) > 0.1)
          failures.push_back("decay exponent of block " + std::to_string(b) + " is " +
                             opbridge::fmt_double(dr.estimated_exponent) + ", expected " +
                             opbridge::fmt_double(dr.predicted_exponent_second_moment) +
                             " within 0.1");
      }
      report["decay"] = decays;
    }
    if (opt.ensemble) {
      const auto ens = opbridge::sample_exact(model, opbridge::geometric_grid(model.T, 20),
                                              opt.paths, opt.seed);
      const auto conv = opbridge::convergence_diagnostic(ens, model);
      report["convergence"] = opbridge::convergence_to_json(conv);
      if (bridge && !conv.converged)
        failures.push_back("bridge-class model failed the convergence diagnostic");
      if (bridge) {
        const auto dec = opbridge::decompose(model.A, model.Sigma, model.spectrum.grouping_tol);
        json decays = json::array();
        for (int b = 0; b < dec.block_count(); ++b) {
          const auto dr = opbridge::decay_exponent_mc(model, ens, b);
          decays.push_back(opbridge::decay_to_json(dr));
          if (std::abs(dr.estimated_exponent - dr.predicted_exponent_second_moment) > 0.15)
            failures.push_back("sampled decay exponent of block " + std::to_string(b) + " is " +
                               opbridge::fmt_double(dr.estimated_exponent) + ", expected " +
                               opbridge::fmt_double(dr.predicted_exponent_second_moment) +
                               " within 0.15");
        }
        report["decay_mc"] = decays;
      }
    }
    report["assertion_failures"] = failures;
    out.write_text("analysis.json", report.dump(2) + "\n");
    out.finalize("analyze", opbridge::config_hash(raw), opt.seed, started);
  } catch (...) {
    out.discard_partials();
    throw;
  }

  std::cout << "verdict: " << cls.verdict << "\n";
  if (!opt.out.empty()) std::cout << "reports written to " << opt.out << "\n";
  for (const auto& f : failures) std::cerr << "assertion failed: " << f << "\n";
  return failures.empty() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bridge-type Gaussian processes with a matrix pull rate: covariance, "
               "spectral structure, sampling, classification, and law comparison"};
  app.require_subcommand(1);
  Options opt;

  const auto add_common = [&](CLI::App* sub, bool with_sampling) {
    sub->add_option("--config", opt.config, "model config JSON")->required();
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--grid", opt.grid, "grid spec: uniform:N[:endfrac] or geometric:K");
    if (with_sampling) {
      sub->add_option("--seed", opt.seed, "master seed (64-bit)");
      sub->add_option("--paths", opt.paths, "number of paths");
      sub->add_option("--format", opt.format, "csv or json")
          ->check(CLI::IsMember({"csv", "json"}));
    }
  };

  auto* c_classify = app.add_subcommand("classify", "bridge-property classification");
  add_common(c_classify, false);

  auto* c_simulate = app.add_subcommand("simulate", "sample paths (exact or Euler)");
  add_common(c_simulate, true);
  c_simulate->add_option("--scheme", opt.scheme, "exact or euler")
      ->check(CLI::IsMember({"exact", "euler"}));
  c_simulate->add_flag("--pin-terminal", opt.pin_terminal,
                       "append the terminal zero (bridge models only)");

  auto* c_analyze = app.add_subcommand("analyze", "covariance, quadratic variation, decay, "
                                                  "convergence diagnostics");
  add_common(c_analyze, true);
  c_analyze->add_option("--against", opt.against, "second config: switch to law comparison");
  c_analyze->add_option("--analytic", opt.analytic,
                        "which analytic reports: all|covariance|quadvar|decay|none")
      ->check(CLI::IsMember({"all", "covariance", "quadvar", "decay", "none"}));
  c_analyze->add_flag("--ensemble", opt.ensemble, "add Monte Carlo diagnostics");

  auto* c_decompose = app.add_subcommand("decompose", "spectral block structure of A");
  add_common(c_decompose, false);

  auto* c_compare = app.add_subcommand("compare", "law comparison of two models");
  add_common(c_compare, false);
  c_compare->add_option("--against", opt.against, "second model config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (c_classify->parsed()) return cmd_classify(opt);
    if (c_simulate->parsed()) return cmd_simulate(opt);
    if (c_analyze->parsed()) return cmd_analyze(opt);
    if (c_decompose->parsed()) return cmd_decompose(opt);
    if (c_compare->parsed()) return cmd_compare(opt);
  } catch (const opbridge::NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const opbridge::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {  // InvalidInput, PreconditionError, ...
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
