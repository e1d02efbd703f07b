#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "opbridge/grids.hpp"
#include "opbridge/io.hpp"
#include "opbridge/sampler.hpp"
#include "oracles.hpp"

using namespace opbridge;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int status = -1;
  std::string output;  // stdout and stderr combined
};

// Run the packaged command-line tool with the given arguments.
CmdResult run_cli(const std::string& args, const std::string& prefix = "") {
  const std::string cmd =
      (prefix.empty() ? "" : prefix + " ") + "'" + OPBRIDGE_CLI_PATH + "' " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CmdResult r;
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
  const int rc = pclose(pipe);
  r.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  return r;
}

fs::path fresh_dir(const std::string& tag) {
  static int counter = 0;
  const fs::path p = fs::temp_directory_path() /
                     ("opbridge_test_" + std::to_string(::getpid()) + "_" + tag + "_" +
                      std::to_string(counter++));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& content) {
  const fs::path p = dir / name;
  std::ofstream out(p);
  out << content;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) lines.push_back(line);
  return lines;
}

const char* kWiener = R"({"T": 1.0, "A": [[1.0]], "Sigma": [[1.0]]})";
const char* kSkew = R"({"T": 1.0, "A": [[0.0, 1.0], [-1.0, 0.0]],
                        "Sigma": [[1.0, 0.0], [0.0, 1.0]]})";
const char* kDiag = R"({"T": 1.0, "A": [[0.25, 0.0], [0.0, 0.75]],
                        "Sigma": [[1.0, 0.0], [0.0, 1.0]]})";
const char* kNormal = R"({"T": 1.0, "A": [[0.3, 0.2], [-0.2, 0.3]],
                          "Sigma": [[1.0, 0.0], [0.0, 1.0]]})";
const char* kNormalT = R"({"T": 1.0, "A": [[0.3, -0.2], [0.2, 0.3]],
                           "Sigma": [[1.0, 0.0], [0.0, 1.0]]})";

}  // namespace

TEST_CASE("matrices survive a JSON round trip", "[io]") {
  oracle::Rng rng(12);
  const Matrix m = oracle::random_matrix(rng, 3, 2);
  const Matrix back = matrix_from_json(matrix_to_json(m), "M");
  CHECK((m - back).norm() == 0.0);
}

TEST_CASE("config parsing points at the offending field", "[io]") {
  CHECK_THROWS_WITH(parse_model_config(json::parse(R"({"A": [[1]], "Sigma": [[1]]})")),
                    Catch::Matchers::ContainsSubstring("'T'"));
  CHECK_THROWS_WITH(parse_model_config(json::parse(R"({"T": 1, "Sigma": [[1]]})")),
                    Catch::Matchers::ContainsSubstring("'A'"));
  CHECK_THROWS_WITH(parse_model_config(json::parse(R"({"T": 1, "A": [[1]]})")),
                    Catch::Matchers::ContainsSubstring("'Sigma'"));
  // Ragged rows name the field and the row.
  CHECK_THROWS_WITH(
      parse_model_config(json::parse(R"({"T": 1, "A": [[1, 2], [3]], "Sigma": [[1]]})")),
      Catch::Matchers::ContainsSubstring("'A'") && Catch::Matchers::ContainsSubstring("row 2"));
  CHECK_THROWS_WITH(
      parse_model_config(json::parse(R"({"T": 1, "A": [[1, "x"]], "Sigma": [[1]]})")),
      Catch::Matchers::ContainsSubstring("not a number"));
  CHECK_THROWS_AS(parse_model_config(json::parse("[1, 2]")), InvalidInput);

  const auto cfg = parse_model_config(json::parse(kDiag));
  const auto mo = model_from_config(cfg);
  CHECK(mo.d == 2);
  CHECK(mo.T == 1.0);
}

TEST_CASE("float formatting is stable and round-trips", "[io]") {
  CHECK(fmt_double(0.5) == "0.5");
  CHECK(fmt_double(1.0) == "1");
  CHECK(std::stod(fmt_double(0.1)) == 0.1);
  const double awkward = 1.0 - std::ldexp(1.0, -20);
  CHECK(std::stod(fmt_double(awkward)) == awkward);
}

TEST_CASE("CSV writers emit the documented headers and row counts", "[io]") {
  Matrix a = Matrix::Zero(2, 2);
  a.diagonal() << 0.25, 0.75;
  const auto mo = BridgeModel::create(a, Matrix::Identity(2, 2), 1.0);
  const auto ens = sample_exact(mo, {0.0, 0.25, 0.5}, 4, 7);
  std::ostringstream ps;
  write_paths_csv(ps, ens);
  const auto plines = lines_of(ps.str());
  REQUIRE(plines.size() == 1 + 4 * 3);
  CHECK(plines[0] == "path,t,x1,x2");
  CHECK(plines[1].rfind("0,0,", 0) == 0);

  const auto rep = covariance(mo, {0.0, 0.5});
  std::ostringstream cs;
  write_covariance_csv(cs, rep);
  const auto clines = lines_of(cs.str());
  REQUIRE(clines.size() == 3);
  CHECK(clines[0] == "t,u11,u12,u21,u22");

  const auto qv = quadratic_variation(mo, 1, {0.0, 0.5});
  std::ostringstream qs;
  write_quadvar_csv(qs, qv);
  CHECK(lines_of(qs.str())[0] == "t,value");
}

TEST_CASE("classify subcommand reports the counterexample class", "[cli]") {
  const auto dir = fresh_dir("classify");
  const auto cfg = write_file(dir, "skew.json", kSkew);
  const auto r = run_cli("classify --config '" + cfg.string() + "'");
  CHECK(r.status == 0);
  CHECK(r.output.find("counterexample-class") != std::string::npos);

  const auto cfg2 = write_file(dir, "diag.json", kDiag);
  const auto r2 = run_cli("classify --config '" + cfg2.string() + "'");
  CHECK(r2.status == 0);
  CHECK(r2.output.find("\"bridge\"") != std::string::npos);
}

TEST_CASE("malformed configs exit with code 1 and a helpful message", "[cli]") {
  const auto dir = fresh_dir("badcfg");
  const auto broken = write_file(dir, "broken.json", "{\"T\": 1.0,");
  CHECK(run_cli("classify --config '" + broken.string() + "'").status == 1);

  const auto missing = write_file(dir, "missing.json", R"({"T": 1.0, "A": [[1.0]]})");
  const auto r = run_cli("classify --config '" + missing.string() + "'");
  CHECK(r.status == 1);
  CHECK(r.output.find("Sigma") != std::string::npos);

  CHECK(run_cli("classify --config '" + (dir / "absent.json").string() + "'").status == 1);
  CHECK(run_cli("").status == 1);  // a subcommand is required
}

TEST_CASE("simulate is deterministic and writes a complete manifest", "[cli]") {
  const auto dir = fresh_dir("simdet");
  const auto cfg = write_file(dir, "diag.json", kDiag);
  const auto out1 = dir / "run1";
  const auto out2 = dir / "run2";
  const std::string base = "simulate --config '" + cfg.string() +
                           "' --paths 10 --seed 42 --grid geometric:8 --out '";
  CHECK(run_cli(base + out1.string() + "'").status == 0);
  CHECK(run_cli(base + out2.string() + "'").status == 0);
  CHECK(slurp(out1 / "paths.csv") == slurp(out2 / "paths.csv"));

  const json manifest = json::parse(slurp(out1 / "manifest.json"));
  CHECK(manifest["command"] == "simulate");
  CHECK(manifest["master_seed"] == 42);
  const auto& outputs = manifest["outputs"];
  CHECK(std::find(outputs.begin(), outputs.end(), "paths.csv") != outputs.end());
  for (const auto& name : outputs) CHECK(fs::exists(out1 / name.get<std::string>()));
}

TEST_CASE("worker count does not change simulate output", "[cli]") {
  const auto dir = fresh_dir("simthreads");
  const auto cfg = write_file(dir, "diag.json", kDiag);
  const auto out1 = dir / "w1";
  const auto out8 = dir / "w8";
  const std::string base = "simulate --config '" + cfg.string() +
                           "' --paths 16 --seed 7 --grid geometric:10 --out '";
  CHECK(run_cli(base + out1.string() + "'", "OPBRIDGE_THREADS=1").status == 0);
  CHECK(run_cli(base + out8.string() + "'", "OPBRIDGE_THREADS=8").status == 0);
  CHECK(slurp(out1 / "paths.csv") == slurp(out8 / "paths.csv"));
}

TEST_CASE("terminal pinning through the command line", "[cli]") {
  const auto dir = fresh_dir("pin");
  const auto cfg = write_file(dir, "diag.json", kDiag);
  const auto out = dir / "pinned";
  const auto r = run_cli("simulate --config '" + cfg.string() +
                         "' --paths 3 --seed 1 --grid geometric:6 --pin-terminal --out '" +
                         out.string() + "'");
  CHECK(r.status == 0);
  const auto rows = lines_of(slurp(out / "paths.csv"));
  CHECK(rows.back() == "2,1,0,0");  // path 2 pinned to the origin at t = T

  const auto skew_cfg = write_file(dir, "skew.json", kSkew);
  const auto refused = run_cli("simulate --config '" + skew_cfg.string() +
                               "' --paths 3 --seed 1 --pin-terminal --out '" +
                               (dir / "refused").string() + "'");
  CHECK(refused.status == 1);
  CHECK(refused.output.find("real part") != std::string::npos);
}

TEST_CASE("euler grids produce the requested number of rows", "[cli]") {
  const auto dir = fresh_dir("euler");
  const auto cfg = write_file(dir, "wiener.json", kWiener);
  const auto out = dir / "out";
  const auto r = run_cli("simulate --config '" + cfg.string() +
                         "' --scheme euler --grid uniform:1000:0.9 --paths 3 --seed 9 --out '" +
                         out.string() + "'");
  CHECK(r.status == 0);
  const auto rows = lines_of(slurp(out / "paths.csv"));
  CHECK(rows.size() == 1 + 3 * 1001);
  CHECK(rows[0] == "path,t,x1");
}

TEST_CASE("analyze emits the parabola covariance for the unit-rate model", "[cli]") {
  const auto dir = fresh_dir("analyze");
  const auto cfg = write_file(dir, "wiener.json", kWiener);
  const auto out = dir / "out";
  const auto r = run_cli("analyze --config '" + cfg.string() +
                         "' --analytic covariance --grid geometric:12 --out '" + out.string() +
                         "'");
  CHECK(r.status == 0);
  const auto rows = lines_of(slurp(out / "covariance.csv"));
  REQUIRE(rows.size() >= 10);
  CHECK(rows[0] == "t,u11");
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto comma = rows[k].find(',');
    const double t = std::stod(rows[k].substr(0, comma));
    const double u = std::stod(rows[k].substr(comma + 1));
    CHECK(std::abs(u - t * (1.0 - t)) <= 1e-8);
  }
}

TEST_CASE("analyze --against reproduces the non-uniqueness verdict", "[cli]") {
  const auto dir = fresh_dir("against");
  const auto cfg1 = write_file(dir, "normal.json", kNormal);
  const auto cfg2 = write_file(dir, "normal_t.json", kNormalT);
  const auto out = dir / "out";
  const auto r = run_cli("analyze --config '" + cfg1.string() + "' --against '" + cfg2.string() +
                         "' --out '" + out.string() + "'");
  CHECK(r.status == 0);
  const json rep = json::parse(slurp(out / "comparison.json"));
  CHECK(rep["verdict"] == "same-law-despite-different-A");
  CHECK(rep["noise_match"] == true);
  CHECK(rep["respec_consistency"]["consistent"] == true);
  CHECK(rep["commutator_defect"]["vanishes"] == true);
}

TEST_CASE("decompose prints the clustered real parts", "[cli]") {
  const auto dir = fresh_dir("decompose");
  const auto cfg = write_file(dir, "diag.json", kDiag);
  const auto out = dir / "out";
  const auto r = run_cli("decompose --config '" + cfg.string() + "' --out '" + out.string() + "'");
  CHECK(r.status == 0);
  const json rep = json::parse(slurp(out / "decomposition.json"));
  REQUIRE(rep["real_parts"].size() == 2);
  CHECK(rep["real_parts"][0].get<double>() == Approx(0.25).margin(1e-12));
  CHECK(rep["real_parts"][1].get<double>() == Approx(0.75).margin(1e-12));
  CHECK(rep["block_dims"] == json::array({1, 1}));
}

TEST_CASE("invalid grid specs and schemes exit with code 1", "[cli]") {
  const auto dir = fresh_dir("badflags");
  const auto cfg = write_file(dir, "wiener.json", kWiener);
  CHECK(run_cli("simulate --config '" + cfg.string() + "' --grid bogus:7 --out '" +
                (dir / "g").string() + "'")
            .status == 1);
  CHECK(run_cli("simulate --config '" + cfg.string() + "' --grid uniform:-3 --out '" +
                (dir / "g2").string() + "'")
            .status == 1);
  CHECK(run_cli("simulate --config '" + cfg.string() + "' --scheme heun --out '" +
                (dir / "g3").string() + "'")
            .status == 1);
}

TEST_CASE("built-in mathematical assertion failures exit with code 2", "[cli]") {
  // Rate 0.02 is a genuine bridge, but its mean squared norm decays like
  // (T-t)^{0.04}: far too slowly to pass the tenfold-decrease diagnostic at
  // refinement level 20, so the analyze assertion fails deterministically.
  const auto dir = fresh_dir("exit2");
  const auto cfg = write_file(
      dir, "slow.json", R"({"T": 1.0, "A": [[0.02]], "Sigma": [[1.0]]})");
  const auto out = dir / "out";
  const auto r = run_cli("analyze --config '" + cfg.string() +
                         "' --analytic none --ensemble --paths 2000 --seed 3 --out '" +
                         out.string() + "'");
  CHECK(r.status == 2);
  CHECK(r.output.find("assertion failed") != std::string::npos);
}

TEST_CASE("commands write only inside the requested output directory", "[cli]") {
  const auto scratch = fresh_dir("cwd");
  const auto dir = fresh_dir("confine");
  const auto cfg = write_file(dir, "diag.json", kDiag);
  const auto out = dir / "out";
  const auto r = run_cli("simulate --config '" + cfg.string() +
                             "' --paths 2 --seed 1 --grid geometric:6 --out '" + out.string() +
                             "'",
                         "cd '" + scratch.string() + "' &&");
  CHECK(r.status == 0);
  CHECK(fs::is_empty(scratch));
  CHECK(fs::exists(out / "manifest.json"));
}
