// Spawns the installed CLI binary and checks file outputs, exit codes and
// determinism contracts.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = CALIBRA_CLI_PATH;

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run_cli(const std::string& args, const std::string& env = "") {
  const std::string out_path =
      (fs::temp_directory_path() / "calibra_cli_out.txt").string();
  const std::string cmd = env + kCli + " " + args + " > " + out_path + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = status < 0 ? status : (status >> 8) & 0xff;
  std::ifstream in(out_path);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("calibra_test_" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("weights: exactly determined example") {
  TempDir tmp;
  write_file(tmp.path / "ipd.csv", "x,y\n0,1\n1,3\n");
  write_file(tmp.path / "target.json", R"({"means":[0.25],"ybar0":1.0})");
  const std::string out = (tmp.path / "w.csv").string();

  auto r = run_cli("weights --ipd " + (tmp.path / "ipd.csv").string() + " --target " +
                   (tmp.path / "target.json").string() + " --method entropy --out " + out);
  CHECK(r.exit_code == 0);

  std::ifstream in(out);
  std::string header, row1, row2;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  CHECK(header == "row_id,weight");
  CHECK(row1.substr(0, 2) == "1,");
  CHECK(std::stod(row1.substr(2)) == doctest::Approx(0.75).epsilon(1e-10));
  CHECK(std::stod(row2.substr(2)) == doctest::Approx(0.25).epsilon(1e-10));

  const json diag = json::parse(slurp(out + ".diag.json"));
  CHECK(diag["ess"].get<double>() == doctest::Approx(1.6).epsilon(1e-9));
  CHECK(diag["converged"].get<bool>());
}

TEST_CASE("weights: uniform when target matches sample means") {
  TempDir tmp;
  write_file(tmp.path / "ipd.csv", "x,y\n-1,0\n0,1\n1,2\n");
  write_file(tmp.path / "target.json", R"({"means":[0.0]})");
  const std::string out = (tmp.path / "w.csv").string();
  auto r = run_cli("weights --ipd " + (tmp.path / "ipd.csv").string() + " --target " +
                   (tmp.path / "target.json").string() + " --out " + out);
  CHECK(r.exit_code == 0);
  const json diag = json::parse(slurp(out + ".diag.json"));
  CHECK(diag["ess"].get<double>() == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("weights: hull violation exits 2 with an imbalance report") {
  TempDir tmp;
  write_file(tmp.path / "ipd.csv", "x,y\n-1,0\n0,1\n1,2\n");
  write_file(tmp.path / "target.json", R"({"means":[4.0]})");
  auto r = run_cli("weights --ipd " + (tmp.path / "ipd.csv").string() + " --target " +
                   (tmp.path / "target.json").string() + " --out " +
                   (tmp.path / "w.csv").string());
  CHECK(r.exit_code == 2);
  CHECK(r.out.find("imbalance") != std::string::npos);
}

TEST_CASE("parse errors exit 3 with a line number") {
  TempDir tmp;
  write_file(tmp.path / "ipd.csv", "x,y\n0,1\noops,3\n");
  write_file(tmp.path / "target.json", R"({"means":[0.25]})");
  auto r = run_cli("weights --ipd " + (tmp.path / "ipd.csv").string() + " --target " +
                   (tmp.path / "target.json").string() + " --out " +
                   (tmp.path / "w.csv").string());
  CHECK(r.exit_code == 3);
  CHECK(r.out.find("line 3") != std::string::npos);

  // unknown flag is also a parse-class failure
  auto r2 = run_cli("weights --nope");
  CHECK(r2.exit_code == 3);
}

TEST_CASE("estimate: report fields, v0 SE, missing-summary exit 4") {
  TempDir tmp;
  write_file(tmp.path / "ipd.csv", "x,y\n0,1\n1,3\n");
  write_file(tmp.path / "target.json", R"({"means":[0.25],"ybar0":1.0})");
  const std::string out = (tmp.path / "report.json").string();

  auto r = run_cli("estimate --ipd " + (tmp.path / "ipd.csv").string() + " --target " +
                   (tmp.path / "target.json").string() +
                   " --estimand unanchored --variance v0 --out " + out);
  CHECK(r.exit_code == 0);
  const json rep = json::parse(slurp(out));
  CHECK(rep["estimate"].get<double>() == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(rep["unadjusted_estimate"].get<double>() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(rep["se"]["v0"].get<double>() ==
        doctest::Approx(std::sqrt(0.28125)).epsilon(1e-9));
  CHECK(rep["ess"].get<double>() == doctest::Approx(1.6).epsilon(1e-9));
  const auto ci = rep["ci95"]["v0"].get<std::vector<double>>();
  CHECK(ci[0] == doctest::Approx(0.5 - 1.96 * std::sqrt(0.28125)).epsilon(1e-9));
  CHECK(ci[1] == doctest::Approx(0.5 + 1.96 * std::sqrt(0.28125)).epsilon(1e-9));

  // ybar0 absent -> exit 4
  write_file(tmp.path / "target2.json", R"({"means":[0.25]})");
  auto r4 = run_cli("estimate --ipd " + (tmp.path / "ipd.csv").string() + " --target " +
                    (tmp.path / "target2.json").string() +
                    " --estimand unanchored --variance v0 --out " + out);
  CHECK(r4.exit_code == 4);
}

TEST_CASE("estimate: v2s with sbw weights is omitted with a caveat") {
  TempDir tmp;
  write_file(tmp.path / "ipd.csv", "x,y\n-1,0\n0,1\n1,2\n-0.5,0.4\n");
  write_file(tmp.path / "target.json", R"({"means":[0.1]})");
  const std::string out = (tmp.path / "report.json").string();
  auto r = run_cli("estimate --ipd " + (tmp.path / "ipd.csv").string() + " --target " +
                   (tmp.path / "target.json").string() +
                   " --method sbw --estimand mu1 --variance v0,v2s --out " + out);
  CHECK(r.exit_code == 0);
  const json rep = json::parse(slurp(out));
  CHECK(rep.contains("caveats"));
  CHECK(!rep["se"].contains("v2s"));
  CHECK(rep["se"].contains("v0"));
}

TEST_CASE("round trip: stored weights reproduce the estimate") {
  TempDir tmp;
  write_file(tmp.path / "ipd.csv", "a,b,y\n0.1,1.2,1\n-0.4,0.5,3\n0.9,-0.2,2\n0.3,0.8,0\n-0.2,0.1,1.5\n");
  write_file(tmp.path / "target.json", R"({"means":[0.12,0.5]})");
  const std::string wfile = (tmp.path / "w.csv").string();
  const std::string rep1 = (tmp.path / "r1.json").string();
  const std::string rep2 = (tmp.path / "r2.json").string();

  CHECK(run_cli("weights --ipd " + (tmp.path / "ipd.csv").string() + " --target " +
                (tmp.path / "target.json").string() + " --out " + wfile)
            .exit_code == 0);
  CHECK(run_cli("estimate --ipd " + (tmp.path / "ipd.csv").string() + " --target " +
                (tmp.path / "target.json").string() + " --variance v0 --out " + rep1)
            .exit_code == 0);
  CHECK(run_cli("estimate --ipd " + (tmp.path / "ipd.csv").string() + " --target " +
                (tmp.path / "target.json").string() + " --weights " + wfile +
                " --variance v0 --out " + rep2)
            .exit_code == 0);
  const double e1 = json::parse(slurp(rep1))["estimate"].get<double>();
  const double e2 = json::parse(slurp(rep2))["estimate"].get<double>();
  CHECK(std::abs(e1 - e2) <= 1e-12 * std::max(1.0, std::abs(e1)));
}

TEST_CASE("estimate: name-matched target columns") {
  TempDir tmp;
  write_file(tmp.path / "ipd.csv", "age,weight,y\n1,10,1\n2,20,2\n3,30,3\n");
  // names deliberately in the opposite order of the IPD columns
  write_file(tmp.path / "target.json",
             R"({"means":[20.0,2.0],"names":["weight","age"]})");
  const std::string out = (tmp.path / "report.json").string();
  auto r = run_cli("estimate --ipd " + (tmp.path / "ipd.csv").string() + " --target " +
                   (tmp.path / "target.json").string() + " --variance v0 --out " + out);
  CHECK(r.exit_code == 0);
  const json rep = json::parse(slurp(out));
  CHECK(rep["estimate"].get<double>() == doctest::Approx(2.0).epsilon(1e-8));

  write_file(tmp.path / "bad.json", R"({"means":[20.0,2.0],"names":["weight","height"]})");
  auto rb = run_cli("estimate --ipd " + (tmp.path / "ipd.csv").string() + " --target " +
                    (tmp.path / "bad.json").string() + " --variance v0 --out " + out);
  CHECK(rb.exit_code == 3);
}

TEST_CASE("simulate: config file, determinism under seeds and threads") {
  TempDir tmp;
  write_file(tmp.path / "sim.json", R"({
    "name": "mini",
    "seed": 5,
    "n_runs": 4,
    "bootstrap_replicates": 5,
    "scenarios": [
      {"n1": 40, "n0": 200, "p": 2, "b": 0.4, "beta": 0.3, "sigma_eps": 0.5,
       "y_model": "linear", "p_model": "normal"}
    ]
  })");
  const std::string d1 = (tmp.path / "out1").string();
  const std::string d2 = (tmp.path / "out2").string();
  const std::string d3 = (tmp.path / "out3").string();

  CHECK(run_cli("simulate --config " + (tmp.path / "sim.json").string() +
                " --out-dir " + d1)
            .exit_code == 0);
  CHECK(run_cli("simulate --config " + (tmp.path / "sim.json").string() +
                " --out-dir " + d2)
            .exit_code == 0);
  CHECK(run_cli("simulate --config " + (tmp.path / "sim.json").string() +
                " --out-dir " + d3,
                "CALIBRA_THREADS=3 ")
            .exit_code == 0);
  const std::string c1 = slurp(d1 + "/mini.csv");
  CHECK(c1 == slurp(d2 + "/mini.csv"));
  CHECK(c1 == slurp(d3 + "/mini.csv"));
  CHECK(c1.find("n1,beta,b,p,bias_unadj,bias_maic,cov_2s,cov_boot,se_2s,se_boot,"
                "se_maic,se_emp") == 0);
  CHECK(c1.find("\n40,") != std::string::npos);

  // n_runs = 0 rejected at parse
  write_file(tmp.path / "bad.json", R"({"n_runs":0,"scenarios":[{"n1":40,"p":2,"b":0.4}]})");
  CHECK(run_cli("simulate --config " + (tmp.path / "bad.json").string() +
                " --out-dir " + d1)
            .exit_code == 3);
  // invalid enum rejected at parse
  write_file(tmp.path / "bad2.json",
             R"({"n_runs":2,"scenarios":[{"n1":40,"p":2,"b":0.4,"y_model":"cubic"}]})");
  CHECK(run_cli("simulate --config " + (tmp.path / "bad2.json").string() +
                " --out-dir " + d1)
            .exit_code == 3);
}

TEST_CASE("compare: long table shape and determinism") {
  TempDir tmp;
  write_file(tmp.path / "cmp.json", R"({
    "name": "cmp",
    "seed": 6,
    "n_runs": 3,
    "methods": ["maic", "sbw", "el"],
    "d": 0.01,
    "scenarios": [
      {"n1": 30, "n0": 150, "p": 2, "b": 0.3, "beta": 0.3, "sigma_eps": 0.5,
       "y_model": "linear", "p_model": "normal"}
    ]
  })");
  const std::string d1 = (tmp.path / "o1").string();
  const std::string d2 = (tmp.path / "o2").string();
  CHECK(run_cli("compare --config " + (tmp.path / "cmp.json").string() + " --out-dir " + d1)
            .exit_code == 0);
  CHECK(run_cli("compare --config " + (tmp.path / "cmp.json").string() + " --out-dir " + d2,
                "CALIBRA_THREADS=2 ")
            .exit_code == 0);
  const std::string c1 = slurp(d1 + "/cmp.csv");
  CHECK(c1 == slurp(d2 + "/cmp.csv"));
  CHECK(c1.find("run,method,scenario,error") == 0);
  // 3 runs x 3 methods + header
  int lines = 0;
  for (char ch : c1) lines += ch == '\n';
  CHECK(lines == 10);
  CHECK(c1.find("maic") != std::string::npos);
  CHECK(c1.find("sbw") != std::string::npos);
  CHECK(c1.find("el") != std::string::npos);
}
