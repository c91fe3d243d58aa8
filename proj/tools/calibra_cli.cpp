// calibra command line: weights / estimate / simulate / compare.
// Exit codes: 0 success, 2 balance infeasible, 3 parse or usage error,
// 4 missing target summary, 1 anything else.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "calibra/calibra.h"
#include "table_io.hpp"

namespace {

using nlohmann::json;

constexpr uint64_t kDefaultSeed = 42;

int exit_code_for(calibra_status s) {
  switch (s) {
    case CALIBRA_OK: return 0;
    case CALIBRA_INFEASIBLE: return 2;
    case CALIBRA_PARSE_ERROR: return 3;
    case CALIBRA_MISSING_SUMMARY: return 4;
    default: return 1;
  }
}

int fail(calibra_status s, const std::string& context) {
  std::cerr << "calibra: " << context << ": " << calibra_last_error() << "\n";
  return exit_code_for(s);
}

int fail_parse(const ParseError& e) {
  std::cerr << "calibra: parse error";
  if (e.line > 0) std::cerr << " at line " << e.line;
  std::cerr << ": " << e.message << "\n";
  return 3;
}

struct DatasetDeleter {
  void operator()(calibra_dataset* d) const { calibra_dataset_free(d); }
};
struct TargetDeleter {
  void operator()(calibra_target* t) const { calibra_target_free(t); }
};
struct WeightsDeleter {
  void operator()(calibra_weights* w) const { calibra_weights_free(w); }
};
using DatasetPtr = std::unique_ptr<calibra_dataset, DatasetDeleter>;
using TargetPtr = std::unique_ptr<calibra_target, TargetDeleter>;
using WeightsPtr = std::unique_ptr<calibra_weights, WeightsDeleter>;

calibra_method method_from_flag(const std::string& name) {
  if (name == "maic" || name == "entropy") return CALIBRA_METHOD_ENTROPY;
  if (name == "sbw") return CALIBRA_METHOD_STABLE;
  if (name == "el") return CALIBRA_METHOD_EMPIRICAL_LIKELIHOOD;
  throw ParseError{"unknown method '" + name + "' (expected maic|entropy|sbw|el)", 0};
}

const char* method_label(int32_t m) {
  switch (m) {
    case CALIBRA_METHOD_ENTROPY: return "maic";
    case CALIBRA_METHOD_STABLE: return "sbw";
    default: return "el";
  }
}

calibra_estimand estimand_from_flag(const std::string& name) {
  if (name == "mu1") return CALIBRA_ESTIMAND_MU1;
  if (name == "unanchored") return CALIBRA_ESTIMAND_UNANCHORED;
  if (name == "generalize") return CALIBRA_ESTIMAND_GENERALIZE;
  if (name == "anchored") return CALIBRA_ESTIMAND_ANCHORED;
  if (name == "regression") return CALIBRA_ESTIMAND_REGRESSION;
  throw ParseError{"unknown estimand '" + name +
                       "' (expected mu1|unanchored|generalize|anchored|regression)",
                   0};
}

// "--d 0.005" broadcasts; "--d 0.005,0.01,..." is elementwise.
std::vector<double> tolerance_from_flag(const std::string& text, std::size_t p) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) vals.push_back(parse_double_field(tok, 0));
  if (vals.size() == 1) return std::vector<double>(p, vals[0]);
  if (vals.size() != p)
    throw ParseError{"--d needs 1 or " + std::to_string(p) + " values", 0};
  return vals;
}

int threads_from_env(int explicit_threads) {
  if (explicit_threads > 0) return explicit_threads;
  const char* env = std::getenv("CALIBRA_THREADS");
  if (!env) return 0;
  const int v = std::atoi(env);
  return v > 0 ? v : 0;
}

struct LoadedInputs {
  IpdTable ipd;
  DatasetPtr dataset;
  TargetPtr target;
};

LoadedInputs load_inputs(const std::string& ipd_path, const std::string& target_path) {
  LoadedInputs in;
  in.ipd = read_ipd_csv(ipd_path);
  const TargetFile tf = read_target_json(target_path);
  const std::vector<double> means = align_target_means(in.ipd, tf);

  calibra_dataset* d = nullptr;
  calibra_status s = calibra_dataset_create(
      in.ipd.x.data(), in.ipd.n, in.ipd.p, in.ipd.y.data(),
      in.ipd.arm.empty() ? nullptr : in.ipd.arm.data(), &d);
  if (s != CALIBRA_OK) throw ParseError{calibra_last_error(), 0};
  in.dataset.reset(d);

  calibra_target* t = nullptr;
  s = calibra_target_create(means.data(), means.size(), &t);
  if (s != CALIBRA_OK) throw ParseError{calibra_last_error(), 0};
  in.target.reset(t);
  if (tf.n0) calibra_target_set_n0(t, *tf.n0);
  if (tf.ybar0) calibra_target_set_ybar0(t, *tf.ybar0);
  if (tf.sigma0_sq) calibra_target_set_sigma0_sq(t, *tf.sigma0_sq);
  if (tf.mu02) calibra_target_set_mu02(t, *tf.mu02);
  return in;
}

// ---------------------------------------------------------------------------
// weights subcommand

struct WeightsArgs {
  std::string ipd, target, method = "maic", d, out = "weights.csv";
  uint64_t seed = kDefaultSeed;
};

int run_weights(const WeightsArgs& a) {
  try {
    LoadedInputs in = load_inputs(a.ipd, a.target);
    std::vector<double> d;
    const calibra_method m = method_from_flag(a.method);
    if (!a.d.empty()) {
      if (m != CALIBRA_METHOD_STABLE)
        throw ParseError{"--d applies to the stable method (sbw) only", 0};
      d = tolerance_from_flag(a.d, in.ipd.p);
    }

    calibra_weights* w = nullptr;
    const calibra_status s = calibra_solve_weights(
        in.dataset.get(), in.target.get(), m, d.empty() ? nullptr : d.data(),
        nullptr, &w);
    if (s != CALIBRA_OK) return fail(s, "solving weights");
    WeightsPtr weights(w);

    const std::size_t n = calibra_weights_size(w);
    std::vector<double> values(n);
    calibra_weights_values(w, values.data());

    std::ofstream out(a.out);
    if (!out) throw ParseError{"cannot write " + a.out, 0};
    out << "row_id,weight\n";
    for (std::size_t i = 0; i < n; ++i)
      out << (i + 1) << "," << fmt_full(values[i]) << "\n";

    std::vector<double> dual(calibra_weights_dual_size(w));
    if (!dual.empty()) calibra_weights_dual(w, dual.data());
    std::vector<double> imb(in.ipd.p);
    calibra_weights_imbalance(w, imb.data());

    json diag;
    diag["method"] = a.method == "entropy" ? "maic" : a.method;
    diag["converged"] = calibra_weights_converged(w) != 0;
    diag["n"] = n;
    diag["ess"] = calibra_weights_ess(w);
    diag["dual_params"] = dual;
    diag["imbalance"] = imb;
    diag["tolerance_d"] = d.empty() ? std::vector<double>(in.ipd.p, 0.0) : d;
    diag["covariates"] = in.ipd.covariate_names;
    const std::string diag_path = a.out + ".diag.json";
    std::ofstream dout(diag_path);
    dout << diag.dump(2) << "\n";

    std::cout << "wrote " << a.out << " (n=" << n
              << ", ess=" << fmt_short(calibra_weights_ess(w))
              << ", converged=" << (calibra_weights_converged(w) ? "yes" : "no")
              << "), diagnostics in " << diag_path << "\n";
    return calibra_weights_converged(w) ? 0 : 2;
  } catch (const ParseError& e) {
    return fail_parse(e);
  }
}

// ---------------------------------------------------------------------------
// estimate subcommand

struct EstimateArgs {
  std::string ipd, target, method = "maic", estimand = "mu1";
  std::string variance = "v0,v2s";
  std::string d, weights_file, out = "report.json";
  int boot_reps = 50;
  int anchor_arm = 2;
  uint64_t seed = kDefaultSeed;
  bool augment = false;
};

std::vector<double> read_weights_csv(const std::string& path, std::size_t n_expected) {
  std::ifstream in(path);
  if (!in) throw ParseError{"cannot open " + path, 0};
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError{"empty weights file", 1};
  ++lineno;
  std::vector<double> w;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 2) throw ParseError{"expected row_id,weight", lineno};
    w.push_back(parse_double_field(fields[1], lineno));
  }
  if (w.size() != n_expected)
    throw ParseError{"weights file has " + std::to_string(w.size()) +
                         " rows but IPD has " + std::to_string(n_expected),
                     0};
  return w;
}

int run_estimate(const EstimateArgs& a) {
  try {
    LoadedInputs in = load_inputs(a.ipd, a.target);
    const calibra_method m = method_from_flag(a.method);
    const calibra_estimand estimand = estimand_from_flag(a.estimand);
    std::vector<double> d;
    if (!a.d.empty()) {
      if (m != CALIBRA_METHOD_STABLE)
        throw ParseError{"--d applies to the stable method (sbw) only", 0};
      d = tolerance_from_flag(a.d, in.ipd.p);
    }

    std::set<std::string> requested;
    {
      std::stringstream ss(a.variance);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        if (tok != "v0" && tok != "vss" && tok != "v2s" && tok != "boot")
          throw ParseError{"unknown variance method '" + tok + "'", 0};
        requested.insert(tok);
      }
    }

    // weights: solved fresh or loaded from a previous `weights` run
    WeightsPtr weights;
    if (!a.weights_file.empty()) {
      const std::vector<double> wv = read_weights_csv(a.weights_file, in.ipd.n);
      calibra_weights* w = nullptr;
      const calibra_status s = calibra_weights_from_values(wv.data(), wv.size(), &w);
      if (s != CALIBRA_OK) return fail(s, "loading weights");
      weights.reset(w);
    } else if (estimand != CALIBRA_ESTIMAND_REGRESSION) {
      calibra_weights* w = nullptr;
      const calibra_status s = calibra_solve_weights(
          in.dataset.get(), in.target.get(), m, d.empty() ? nullptr : d.data(),
          nullptr, &w);
      if (s != CALIBRA_OK) return fail(s, "solving weights");
      weights.reset(w);
      if (!calibra_weights_converged(w)) {
        std::cerr << "calibra: weights did not converge\n";
        return 2;
      }
    }

    double estimate = 0.0;
    calibra_status s;
    if (estimand == CALIBRA_ESTIMAND_REGRESSION) {
      s = calibra_regression_estimate(in.dataset.get(), in.target.get(), &estimate,
                                      nullptr);
    } else {
      s = calibra_estimate(in.dataset.get(), in.target.get(), weights.get(), estimand,
                           a.anchor_arm, &estimate);
    }
    if (s != CALIBRA_OK) return fail(s, "estimating");

    double unadjusted = 0.0;
    s = calibra_unadjusted_estimate(in.dataset.get(), in.target.get(), estimand,
                                    a.anchor_arm, &unadjusted);
    if (s != CALIBRA_OK) return fail(s, "unadjusted estimate");

    json report;
    report["estimand"] = a.estimand;
    report["method"] = a.method == "entropy" ? "maic" : a.method;
    report["estimate"] = estimate;
    report["unadjusted_estimate"] = unadjusted;
    std::vector<std::string> caveats;

    if (weights) {
      const std::size_t n = calibra_weights_size(weights.get());
      std::vector<double> wv(n);
      calibra_weights_values(weights.get(), wv.data());
      report["ess"] = calibra_weights_ess(weights.get());
      report["converged"] = calibra_weights_converged(weights.get()) != 0;
      std::vector<double> imb(in.ipd.p);
      if (calibra_imbalance(in.dataset.get(), weights.get(), in.target.get(),
                            imb.data()) == CALIBRA_OK)
        report["imbalance"] = imb;
    } else {
      report["ess"] = in.ipd.n;  // unweighted regression uses every unit
    }

    // Variance methods apply to the weighted mean; delta estimands shift by
    // a fixed target constant, so the same SE serves mu1 and unanchored.
    const bool weighted_mean_like =
        estimand == CALIBRA_ESTIMAND_MU1 || estimand == CALIBRA_ESTIMAND_UNANCHORED;

    json se, ci95;
    auto record = [&](const std::string& name, double var) {
      double v = var;
      if (a.augment) {
        double augmented = 0.0;
        const calibra_status as = calibra_variance_augment(v, in.target.get(), &augmented);
        if (as != CALIBRA_OK) throw ParseError{calibra_last_error(), 0};
        v = augmented;
      }
      const double se_v = std::sqrt(v);
      se[name] = se_v;
      ci95[name] = {estimate - 1.96 * se_v, estimate + 1.96 * se_v};
    };

    for (const std::string& name : requested) {
      if (name == "boot") {
        double var = 0.0;
        uint32_t failures = 0;
        s = calibra_variance_bootstrap(in.dataset.get(), in.target.get(), m,
                                       d.empty() ? nullptr : d.data(), estimand,
                                       a.anchor_arm,
                                       static_cast<uint32_t>(a.boot_reps), a.seed, 0,
                                       nullptr, &var, &failures);
        if (s != CALIBRA_OK) return fail(s, "bootstrap variance");
        record("boot", var);
        report["boot_failures"] = failures;
        continue;
      }
      if (!weighted_mean_like) {
        caveats.push_back(name + " applies to the weighted mean only; use boot for " +
                          a.estimand);
        continue;
      }
      double mu1 = estimate;
      if (estimand != CALIBRA_ESTIMAND_MU1) {
        s = calibra_estimate(in.dataset.get(), in.target.get(), weights.get(),
                             CALIBRA_ESTIMAND_MU1, a.anchor_arm, &mu1);
        if (s != CALIBRA_OK) return fail(s, "weighted mean for variance");
      }
      if (name == "v0") {
        double var = 0.0;
        s = calibra_variance_naive(in.dataset.get(), weights.get(), mu1, &var);
        if (s != CALIBRA_OK) return fail(s, "naive variance");
        record("v0", var);
      } else if (name == "vss") {
        std::vector<double> fitted(in.ipd.n);
        double reg = 0.0;
        s = calibra_regression_estimate(in.dataset.get(), in.target.get(), &reg,
                                        fitted.data());
        if (s != CALIBRA_OK) return fail(s, "regression fit for vss");
        double var = 0.0;
        s = calibra_variance_survey(in.dataset.get(), weights.get(), fitted.data(), &var);
        if (s != CALIBRA_OK) return fail(s, "survey variance");
        record("vss", var);
      } else if (name == "v2s") {
        if (calibra_weights_method(weights.get()) != CALIBRA_METHOD_ENTROPY ||
            !a.weights_file.empty()) {
          caveats.push_back(
              "v2s is defined for freshly solved entropy (maic) weights; omitted");
          continue;
        }
        double var = 0.0;
        s = calibra_variance_two_step(in.dataset.get(), weights.get(), in.target.get(),
                                      mu1, &var);
        if (s != CALIBRA_OK) return fail(s, "two-step variance");
        record("v2s", var);
      }
    }

    report["se"] = se;
    report["ci95"] = ci95;
    if (!caveats.empty()) report["caveats"] = caveats;

    std::ofstream out(a.out);
    if (!out) throw ParseError{"cannot write " + a.out, 0};
    out << report.dump(2) << "\n";
    std::cout << "estimate " << fmt_full(estimate) << " written to " << a.out << "\n";
    return 0;
  } catch (const ParseError& e) {
    return fail_parse(e);
  }
}

// ---------------------------------------------------------------------------
// simulate / compare subcommands

struct NamedScenario {
  std::string label;
  calibra_scenario sc{};
  std::vector<double> m;  // storage the scenario points into
};

struct SimulateArgs {
  std::string preset, config, out_dir = ".", name;
  int runs = 0;        // 0 = keep preset/config value
  int boot_reps = -1;  // -1 = keep
  int threads = 0;
  uint64_t seed = kDefaultSeed;
  std::string d = "0.005";  // compare only
};

NamedScenario make_scenario(uint32_t n1, uint32_t p, std::vector<double> m, double beta,
                            double sigma, calibra_y_model ym, calibra_p_model pm,
                            uint32_t runs, uint32_t boot, uint64_t seed) {
  NamedScenario s;
  s.m = std::move(m);
  s.sc.n1 = n1;
  s.sc.n0 = 2000;
  s.sc.p = p;
  s.sc.m = s.m.data();
  s.sc.beta = beta;
  s.sc.sigma_eps = sigma;
  s.sc.y_model = ym;
  s.sc.p_model = pm;
  s.sc.n_runs = runs;
  s.sc.bootstrap_replicates = boot;
  s.sc.seed = seed;
  char buf[96];
  std::snprintf(buf, sizeof buf, "Y%c.P%c_b%.2f_p%u",
                ym == CALIBRA_Y_LINEAR ? 'R' : 'W',
                pm == CALIBRA_P_NORMAL ? 'R' : 'W', s.m.empty() ? 0.0 : s.m[0], p);
  s.label = buf;
  return s;
}

// The three model blocks: both correct, outcome model wrong, population
// model wrong. Linear outcomes use error SD 0.5; threshold outcomes are
// noiseless indicators of the linear score.
struct Block {
  calibra_y_model ym;
  calibra_p_model pm;
  double sigma;
};
const Block kBlocks[3] = {
    {CALIBRA_Y_LINEAR, CALIBRA_P_NORMAL, 0.5},
    {CALIBRA_Y_THRESHOLD, CALIBRA_P_NORMAL, 0.0},
    {CALIBRA_Y_LINEAR, CALIBRA_P_LOGNORMAL, 0.5},
};

std::vector<NamedScenario> preset_table1(uint32_t runs, uint32_t boot, uint64_t seed) {
  struct Row {
    uint32_t n1;
    double b;
    uint32_t p;
  };
  const Row rows[] = {{100, 0.5, 3}, {200, 0.5, 3},  {500, 0.5, 3}, {1000, 0.5, 3},
                      {200, 0.25, 3}, {500, 0.75, 3}, {500, 0.5, 5}, {500, 0.5, 7}};
  std::vector<NamedScenario> out;
  for (const Block& blk : kBlocks)
    for (const Row& r : rows)
      out.push_back(make_scenario(r.n1, r.p, std::vector<double>(r.p, r.b), 0.3,
                                  blk.sigma, blk.ym, blk.pm, runs, boot, seed));
  return out;
}

std::vector<NamedScenario> preset_table2(uint32_t runs, uint32_t boot, uint64_t seed) {
  struct Row {
    uint32_t n1;
    uint32_t p;
  };
  const Row rows[] = {{100, 3}, {200, 3}, {500, 3}, {1000, 3}, {500, 5}, {500, 7}};
  std::vector<NamedScenario> out;
  for (const Block& blk : kBlocks)
    for (const Row& r : rows) {
      std::vector<double> m(r.p, 0.25);
      m[0] = m[1] = 0.5;
      out.push_back(make_scenario(r.n1, r.p, std::move(m), 0.3, blk.sigma, blk.ym,
                                  blk.pm, runs, boot, seed));
    }
  return out;
}

std::vector<NamedScenario> preset_figure1(uint32_t runs, uint64_t seed) {
  std::vector<NamedScenario> out;
  for (const Block& blk : kBlocks)
    for (double b : {0.25, 0.5})
      for (uint32_t p : {4u, 7u})
        out.push_back(make_scenario(200, p, std::vector<double>(p, b), 0.3, blk.sigma,
                                    blk.ym, blk.pm, runs, 0, seed));
  return out;
}

calibra_y_model y_model_from(const std::string& s) {
  if (s == "linear") return CALIBRA_Y_LINEAR;
  if (s == "threshold") return CALIBRA_Y_THRESHOLD;
  throw ParseError{"y_model must be linear|threshold, got '" + s + "'", 0};
}

calibra_p_model p_model_from(const std::string& s) {
  if (s == "normal") return CALIBRA_P_NORMAL;
  if (s == "lognormal") return CALIBRA_P_LOGNORMAL;
  throw ParseError{"p_model must be normal|lognormal, got '" + s + "'", 0};
}

std::vector<NamedScenario> scenarios_from_config(const json& cfg, uint32_t runs,
                                                 uint32_t boot, uint64_t seed) {
  if (!cfg.contains("scenarios") || !cfg["scenarios"].is_array() ||
      cfg["scenarios"].empty())
    throw ParseError{"config needs a nonempty 'scenarios' array", 0};
  std::vector<NamedScenario> out;
  for (const json& sj : cfg["scenarios"]) {
    const uint32_t p = sj.at("p").get<uint32_t>();
    std::vector<double> m;
    if (sj.contains("m"))
      m = sj["m"].get<std::vector<double>>();
    else if (sj.contains("b"))
      m.assign(p, sj["b"].get<double>());
    else
      throw ParseError{"scenario needs 'm' (vector) or 'b' (scalar)", 0};
    if (m.size() != p) throw ParseError{"scenario 'm' length differs from p", 0};
    NamedScenario s = make_scenario(
        sj.at("n1").get<uint32_t>(), p, std::move(m),
        sj.value("beta", 0.3), sj.value("sigma_eps", 1.0),
        y_model_from(sj.value("y_model", std::string("linear"))),
        p_model_from(sj.value("p_model", std::string("normal"))), runs, boot, seed);
    if (sj.contains("n0")) s.sc.n0 = sj["n0"].get<uint32_t>();
    out.push_back(std::move(s));
  }
  return out;
}

int run_simulate(const SimulateArgs& a) {
  try {
    uint32_t runs = 2000, boot = 50;
    uint64_t seed = a.seed;
    std::string name;
    std::vector<NamedScenario> scenarios;

    if (!a.config.empty()) {
      std::ifstream in(a.config);
      if (!in) throw ParseError{"cannot open " + a.config, 0};
      json cfg;
      try {
        in >> cfg;
      } catch (const json::exception& e) {
        throw ParseError{std::string("invalid JSON: ") + e.what(), 0};
      }
      runs = cfg.value("n_runs", runs);
      boot = cfg.value("bootstrap_replicates", boot);
      seed = cfg.value("seed", seed);
      if (a.runs > 0) runs = static_cast<uint32_t>(a.runs);
      if (a.boot_reps >= 0) boot = static_cast<uint32_t>(a.boot_reps);
      if (runs == 0) throw ParseError{"n_runs must be at least 1", 0};
      scenarios = scenarios_from_config(cfg, runs, boot, seed);
      name = cfg.value("name", std::string("simulation"));
    } else if (a.preset == "table1" || a.preset == "table2") {
      if (a.runs > 0) runs = static_cast<uint32_t>(a.runs);
      if (a.boot_reps >= 0) boot = static_cast<uint32_t>(a.boot_reps);
      scenarios = a.preset == "table1" ? preset_table1(runs, boot, seed)
                                       : preset_table2(runs, boot, seed);
      name = a.preset;
    } else {
      throw ParseError{"simulate needs --config FILE or --preset table1|table2", 0};
    }
    if (!a.name.empty()) name = a.name;

    std::filesystem::create_directories(a.out_dir);
    const std::string path = a.out_dir + "/" + name + ".csv";
    std::ofstream out(path);
    if (!out) throw ParseError{"cannot write " + path, 0};
    out << "n1,beta,b,p,bias_unadj,bias_maic,cov_2s,cov_boot,se_2s,se_boot,"
           "se_maic,se_emp,y_model,p_model,n_runs,solver_failures\n";

    const int threads = threads_from_env(a.threads);
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
      const NamedScenario& s = scenarios[i];
      std::cerr << "scenario " << (i + 1) << "/" << scenarios.size() << " "
                << s.label << " n1=" << s.sc.n1 << " ...\n";
      calibra_sim_row row{};
      const calibra_status st = calibra_run_scenario(&s.sc, threads, &row);
      if (st != CALIBRA_OK) return fail(st, "scenario " + s.label);
      if (row.degenerate)
        std::cerr << "warning: scenario " << s.label
                  << " degenerate: " << row.solver_failures << " runs failed\n";
      out << s.sc.n1 << "," << fmt_short(s.sc.beta) << "," << fmt_short(s.m[0]) << ","
          << s.sc.p << "," << fmt_short(row.bias_unadjusted) << ","
          << fmt_short(row.bias_method) << "," << fmt_short(row.coverage_2s) << ","
          << fmt_short(row.coverage_boot) << "," << fmt_short(row.se_2s) << ","
          << fmt_short(row.se_boot) << "," << fmt_short(row.se_maic) << ","
          << fmt_short(row.se_empirical) << ","
          << (s.sc.y_model == CALIBRA_Y_LINEAR ? "linear" : "threshold") << ","
          << (s.sc.p_model == CALIBRA_P_NORMAL ? "normal" : "lognormal") << ","
          << s.sc.n_runs << "," << row.solver_failures << "\n";
    }
    std::cout << "wrote " << path << "\n";
    return 0;
  } catch (const ParseError& e) {
    return fail_parse(e);
  }
}

int run_compare(const SimulateArgs& a) {
  try {
    uint32_t runs = 1000;
    uint64_t seed = a.seed;
    std::string name = "figure1";
    std::vector<NamedScenario> scenarios;
    std::vector<int32_t> methods{CALIBRA_METHOD_ENTROPY, CALIBRA_METHOD_STABLE,
                                 CALIBRA_METHOD_EMPIRICAL_LIKELIHOOD};
    std::string d_flag = a.d;

    if (!a.config.empty()) {
      std::ifstream in(a.config);
      if (!in) throw ParseError{"cannot open " + a.config, 0};
      json cfg;
      try {
        in >> cfg;
      } catch (const json::exception& e) {
        throw ParseError{std::string("invalid JSON: ") + e.what(), 0};
      }
      runs = cfg.value("n_runs", runs);
      seed = cfg.value("seed", seed);
      if (a.runs > 0) runs = static_cast<uint32_t>(a.runs);
      if (runs == 0) throw ParseError{"n_runs must be at least 1", 0};
      scenarios = scenarios_from_config(cfg, runs, 0, seed);
      name = cfg.value("name", name);
      if (cfg.contains("methods")) {
        methods.clear();
        for (const json& mj : cfg["methods"])
          methods.push_back(method_from_flag(mj.get<std::string>()));
      }
      if (cfg.contains("d")) d_flag = fmt_full(cfg["d"].get<double>());
    } else if (a.preset == "figure1") {
      if (a.runs > 0) runs = static_cast<uint32_t>(a.runs);
      scenarios = preset_figure1(runs, seed);
    } else {
      throw ParseError{"compare needs --config FILE or --preset figure1", 0};
    }
    if (!a.name.empty()) name = a.name;

    std::filesystem::create_directories(a.out_dir);
    const std::string path = a.out_dir + "/" + name + ".csv";
    std::ofstream out(path);
    if (!out) throw ParseError{"cannot write " + path, 0};
    out << "run,method,scenario,error\n";

    const int threads = threads_from_env(a.threads);
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
      const NamedScenario& s = scenarios[i];
      std::cerr << "scenario " << (i + 1) << "/" << scenarios.size() << " "
                << s.label << " ...\n";
      const std::vector<double> d = tolerance_from_flag(d_flag, s.sc.p);
      calibra_comparison_row* rows = nullptr;
      size_t n_rows = 0;
      const calibra_status st =
          calibra_run_comparison(&s.sc, methods.data(), methods.size(), d.data(),
                                 threads, &rows, &n_rows);
      if (st != CALIBRA_OK) return fail(st, "comparison " + s.label);
      for (size_t r = 0; r < n_rows; ++r)
        out << rows[r].run << "," << method_label(rows[r].method) << "," << s.label
            << "," << fmt_full(rows[r].error) << "\n";
      calibra_comparison_rows_free(rows);
    }
    std::cout << "wrote " << path << "\n";
    return 0;
  } catch (const ParseError& e) {
    return fail_parse(e);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"calibra: covariate-balancing weights and indirect treatment comparison"};
  app.require_subcommand(1);

  WeightsArgs wa;
  CLI::App* weights = app.add_subcommand("weights", "solve balancing weights for trial IPD");
  weights->add_option("--ipd", wa.ipd, "IPD CSV (outcome column 'y', optional 'arm')")
      ->required();
  weights->add_option("--target", wa.target, "target summary JSON")->required();
  weights->add_option("--method", wa.method, "maic|entropy|sbw|el");
  weights->add_option("--d", wa.d, "balance slack (scalar or comma vector; sbw only)");
  weights->add_option("--out", wa.out, "output weights CSV");
  weights->add_option("--seed", wa.seed, "random seed");

  EstimateArgs ea;
  CLI::App* estimate = app.add_subcommand("estimate", "weighted effect estimate with SEs");
  estimate->add_option("--ipd", ea.ipd)->required();
  estimate->add_option("--target", ea.target)->required();
  estimate->add_option("--method", ea.method, "maic|entropy|sbw|el");
  estimate->add_option("--estimand", ea.estimand,
                       "mu1|unanchored|generalize|anchored|regression");
  estimate->add_option("--variance", ea.variance, "comma set of v0,vss,v2s,boot");
  estimate->add_option("--boot-reps", ea.boot_reps, "bootstrap replicates");
  estimate->add_option("--d", ea.d, "balance slack (sbw only)");
  estimate->add_option("--anchor-arm", ea.anchor_arm, "anchor arm label");
  estimate->add_option("--weights", ea.weights_file, "apply weights from a CSV");
  estimate->add_flag("--augment", ea.augment, "add sigma0_sq/n0 to each variance");
  estimate->add_option("--out", ea.out, "output report JSON");
  estimate->add_option("--seed", ea.seed, "random seed");

  SimulateArgs sa;
  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo summary tables");
  simulate->add_option("--preset", sa.preset, "table1|table2");
  simulate->add_option("--config", sa.config, "scenario config JSON");
  simulate->add_option("--runs", sa.runs, "override runs per scenario");
  simulate->add_option("--boot-reps", sa.boot_reps, "override bootstrap replicates");
  simulate->add_option("--out-dir", sa.out_dir, "output directory");
  simulate->add_option("--name", sa.name, "output file base name");
  simulate->add_option("--threads", sa.threads, "worker threads (0=auto)");
  simulate->add_option("--seed", sa.seed, "random seed");

  SimulateArgs ca;
  CLI::App* compare = app.add_subcommand("compare", "per-run method error table");
  compare->add_option("--preset", ca.preset, "figure1");
  compare->add_option("--config", ca.config, "scenario config JSON");
  compare->add_option("--runs", ca.runs, "override runs per scenario");
  compare->add_option("--d", ca.d, "stable-weight balance slack");
  compare->add_option("--out-dir", ca.out_dir, "output directory");
  compare->add_option("--name", ca.name, "output file base name");
  compare->add_option("--threads", ca.threads, "worker threads (0=auto)");
  compare->add_option("--seed", ca.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 3;
  }

  if (weights->parsed()) return run_weights(wa);
  if (estimate->parsed()) return run_estimate(ea);
  if (simulate->parsed()) return run_simulate(sa);
  if (compare->parsed()) return run_compare(ca);
  return 3;
}
