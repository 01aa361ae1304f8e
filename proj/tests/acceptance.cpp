// Acceptance criteria 1-10, one PASS/FAIL line each. Exit status 1 if any fails.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "inrun/checks.hpp"
#include "inrun/config.hpp"
#include "inrun/experiments.hpp"
#include "inrun/stats.hpp"

using namespace inrun;
namespace fs = std::filesystem;

namespace {

const fs::path kOut = fs::temp_directory_path() / "inrun_acceptance";

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "!") + what;
  }
};

std::string num(double x, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string sci(double x) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2e", x);
  return buf;
}

ExperimentConfig load(const std::string& name, const std::string& out) {
  auto cfg = parse_config_file(std::string(INRUN_CONFIG_DIR) + "/" + name);
  cfg.output_dir = (kOut / out).string();
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// File contents with wall-clock columns removed; throughput is the only nondeterministic output.
std::string untimed(const std::string& path) {
  std::istringstream in(slurp(path));
  std::string line, out;
  std::vector<bool> keep;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
    if (keep.empty())
      for (const auto& c : cells) keep.push_back(c != "sps" && c != "seconds_per_step" && c.find("slope") == std::string::npos &&
                                                c.find("intercept") == std::string::npos && c != "r_squared");
    for (std::size_t j = 0; j < cells.size(); ++j)
      if (j >= keep.size() || keep[j]) out += cells[j] + ",";
    out += "\n";
  }
  return out;
}

// First runs of each experiment, kept for the determinism criterion.
struct Reports {
  std::vector<std::pair<std::string, std::vector<std::string>>> runs;  // config file, CSV paths
};

int failures = 0;

void criterion(int id, double budget_s, const std::function<Verdict()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  v.require(secs < budget_s, "runtime " + num(secs, 1) + "s < " + num(budget_s, 0) + "s");
  if (!v.pass) ++failures;
  std::printf("criterion %2d %s  %s\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str());
  std::fflush(stdout);
}

const CheckResult& find(const std::vector<CheckResult>& all, const std::string& name) {
  for (const auto& c : all)
    if (c.name == name) return c;
  throw std::runtime_error("missing check " + name);
}

}  // namespace

int main() {
  fs::remove_all(kOut);
  Reports reports;
  FidelityResult fidelity;

  criterion(1, 60, [] {
    Verdict v;
    const auto checks = run_oracle_checks(8, 101, 100);
    for (const char* name : {"ghost_pairwise_dot", "ghost_weighted_dot"}) {
      const auto& c = find(checks, name);
      v.require(c.observed <= 1e-10, std::string(name) + " max rel err " + sci(c.observed) + " <= 1e-10 (100 instances)");
    }
    return v;
  });

  criterion(2, 60, [] {
    Verdict v;
    double gap = 0.0, eff = 0.0, sym = 0.0;
    for (std::size_t B = 2; B <= 8; ++B) {
      const auto checks = run_oracle_checks(B, 200 + B, 1);
      gap = std::max(gap, find(checks, "surrogate_shapley_equals_sgd_scores").observed);
      eff = std::max({eff, find(checks, "shapley_efficiency").observed, find(checks, "one_step_efficiency").observed});
      sym = std::max({sym, find(checks, "shapley_symmetry").observed, find(checks, "one_step_symmetry").observed});
    }
    v.require(gap <= 1e-9, "surrogate vs sgd scores " + sci(gap) + " <= 1e-9 (B = 2..8)");
    v.require(eff <= 1e-9, "efficiency " + sci(eff));
    v.require(sym <= 1e-9, "symmetry " + sci(sym));
    return v;
  });

  criterion(3, 300, [&] {
    Verdict v;
    const auto cfg = load("fidelity.ini", "fidelity");
    v.require(cfg.eta == 1e-4, "eta = 1e-4");
    fidelity = run_fidelity(cfg);
    reports.runs.push_back({"fidelity.ini", fidelity.files});
    const auto& exact = fidelity.correlations.at(ScoreMethod::adam_exact);
    const auto& sgd = fidelity.correlations.at(ScoreMethod::sgd_first_order);
    v.require(exact.n >= 500, "pairs " + std::to_string(exact.n) + " >= 500");
    v.require(exact.pearson_r >= 0.99, "adam_exact pearson " + num(exact.pearson_r) + " >= 0.99");
    v.require(exact.pearson_r - sgd.pearson_r >= 0.05, "sgd_first_order pearson " + num(sgd.pearson_r) + " lower by >= 0.05");
    v.require(fidelity.recheck_max_gap <= 1e-12, "oracle recheck gap " + sci(fidelity.recheck_max_gap) + " <= 1e-12");
    return v;
  });

  criterion(4, 60, [&] {
    Verdict v;
    std::vector<double> ghost, exact;
    for (const auto& r : fidelity.rows) {
      if (r.method == ScoreMethod::adam_ghost) ghost.push_back(r.predicted);
      if (r.method == ScoreMethod::adam_exact) exact.push_back(r.predicted);
    }
    v.require(!ghost.empty() && ghost.size() == exact.size(), "same " + std::to_string(exact.size()) + " pairs");
    const double r = ghost.size() >= 2 ? pearson(ghost, exact) : 0.0;
    v.require(r >= 0.95, "adam_ghost vs adam_exact pearson " + num(r) + " >= 0.95");
    const auto& frozen = find(run_oracle_checks(6, 400, 1), "ghost_frozen_second_moment");
    v.require(frozen.observed <= 1e-9, "frozen C_v rel err " + sci(frozen.observed) + " <= 1e-9");
    return v;
  });

  criterion(5, 900, [&] {
    Verdict v;
    const auto cfg = load("lr_sweep.ini", "lr_sweep");
    v.require(cfg.eta_grid.size() == 5 && cfg.eta_grid.front() == 1e-7 && cfg.eta_grid.back() == 1e-3,
              "5-point grid over [1e-7, 1e-3]");
    const auto sweep = run_lr_sweep(cfg);
    reports.runs.push_back({"lr_sweep.ini", sweep.files});
    double worst_adam = 1.0, worst_margin = 1.0;
    for (double eta : cfg.eta_grid) {
      double p[3] = {0, 0, 0};
      for (const auto& r : sweep.rows)
        if (r.eta == eta) p[static_cast<int>(r.method)] = r.pearson;
      worst_margin = std::min(worst_margin, p[1] - p[0]);
      worst_adam = std::min({worst_adam, p[1], p[2]});
    }
    v.require(worst_margin >= 0.0, "min adam_exact - sgd pearson " + num(worst_margin) + " >= 0");
    v.require(worst_adam >= 0.96, "min adam pearson " + num(worst_adam) + " >= 0.96");
    return v;
  });

  criterion(6, 1800, [&] {
    Verdict v;
    const auto cfg = load("optimizer_dependence.ini", "dependence");
    v.require(cfg.permutations >= 200, "K = " + std::to_string(cfg.permutations));
    v.require(cfg.data.n <= 60 && cfg.hidden.empty(), "N = " + std::to_string(cfg.data.n) + ", logistic");
    const auto dep = run_optimizer_dependence(cfg);
    reports.runs.push_back({"optimizer_dependence.ini", dep.files});
    v.require(dep.triples.size() == 3, "3 seed triples");
    std::string gaps;
    double worst = 1.0;
    for (const auto& t : dep.triples) {
      const double gap = t.same_pearson - t.cross.pearson_r;
      worst = std::min(worst, gap);
      gaps += (gaps.empty() ? "" : ",") + num(t.cross.pearson_r, 2) + "/" + num(t.same_pearson, 2);
    }
    v.require(worst >= 0.3, "cross/same pearson " + gaps + ", min gap " + num(worst, 3) + " >= 0.3");
    return v;
  });

  criterion(7, 1200, [&] {
    Verdict v;
    const auto cfg = load("pruning.ini", "pruning");
    v.require(cfg.data.flip_fraction == 0.15 && cfg.seeds == 3 && cfg.prune_method == ScoreMethod::adam_ghost,
              "15% flips, 3 seeds, adam_ghost");
    const auto res = run_pruning(cfg);
    reports.runs.push_back({"pruning.ini", res.files});
    for (double ratio : {0.1, 0.2, 0.3}) {
      const double b = res.mean_accuracy(ratio, "bottom");
      const double r = res.mean_accuracy(ratio, "random");
      const double t = res.mean_accuracy(ratio, "top");
      v.require(b >= r && r >= t, "r=" + num(ratio, 1) + " " + num(b, 3) + " >= " + num(r, 3) + " >= " + num(t, 3));
    }
    double worst = 1.0;
    for (double f : res.flipped_in_bottom) worst = std::min(worst, f);
    v.require(worst >= 0.6, "min flipped share in bottom 20% " + num(worst, 3) + " >= 0.6");
    return v;
  });

  criterion(8, 600, [&] {
    Verdict v;
    const auto cfg = load("efficiency.ini", "efficiency");
    v.require(cfg.batch_sizes == std::vector<std::size_t>{8, 16, 32, 64} && cfg.hidden == std::vector<std::size_t>{256, 256, 256},
              "3x256 MLP, B in {8,16,32,64}");
    const auto res = run_efficiency(cfg);
    reports.runs.push_back({"efficiency.ini", res.files});
    const auto& direct = res.time_fits.at("direct");
    const auto& ghost = res.time_fits.at("ghost");
    v.require(direct.r_squared >= 0.9, "direct R2 " + num(direct.r_squared, 3) + " >= 0.9");
    v.require(direct.slope >= 3.0 * ghost.slope, "slope direct/ghost " + num(direct.slope / ghost.slope, 2) + " >= 3");
    bool bounded = true;
    for (std::size_t B : cfg.batch_sizes) {
      const auto& g = res.at("ghost", B);
      bounded = bounded && g.largest_buffer_bytes < B * g.param_count * sizeof(double);
    }
    const auto& g64 = res.at("ghost", 64);
    v.require(bounded, "ghost largest buffer " + std::to_string(g64.largest_buffer_bytes) + " B < B*P doubles " +
                           std::to_string(64 * g64.param_count * sizeof(double)) + " B at B=64");
    const double ratio = res.at("ghost", 64).sps / res.at("standard", 64).sps;
    v.require(ratio >= 0.6, "ghost/standard sps at B=64 " + num(ratio, 3) + " >= 0.6");
    return v;
  });

  criterion(9, 300, [&] {
    Verdict v;
    const auto cfg = load("diagnostics.ini", "diagnostics");
    v.require(cfg.stress_steps == 10 && cfg.stress_samples >= 50 && cfg.steps >= 100, "10 steps, 50 samples, 100 steps");
    const auto res = run_diagnostics(cfg);
    reports.runs.push_back({"diagnostics.ini", res.files});
    const double p1 = res.records.at(0).p50;
    const double p100 = res.records.at(99).p50;
    v.require(p100 < p1, "P50 |u| step 1 " + num(p1) + " > step 100 " + num(p100));
    v.require(res.stress.spearman_rho >= 0.7, "stress spearman " + num(res.stress.spearman_rho) + " >= 0.7");
    return v;
  });

  criterion(10, 1800, [&] {
    // Rerun with a different thread count; timing-free CSVs must match byte for byte.
    Verdict v;
    const int threads = omp_get_max_threads();
    omp_set_num_threads(threads == 3 ? 2 : 3);
    std::size_t compared = 0;
    for (const auto& [file, paths] : reports.runs) {
      auto cfg = load(file, "rerun/" + file);
      std::vector<std::string> again;
      switch (cfg.kind) {
        case ExperimentKind::fidelity: again = run_fidelity(cfg).files; break;
        case ExperimentKind::lr_sweep: again = run_lr_sweep(cfg).files; break;
        case ExperimentKind::optimizer_dependence: again = run_optimizer_dependence(cfg).files; break;
        case ExperimentKind::pruning: again = run_pruning(cfg).files; break;
        case ExperimentKind::diagnostics: again = run_diagnostics(cfg).files; break;
        case ExperimentKind::efficiency: again = run_efficiency(cfg).files; break;
      }
      for (std::size_t i = 0; i < paths.size(); ++i) {
        const bool same = i < again.size() && untimed(paths[i]) == untimed(again[i]);
        if (!same) v.require(false, fs::path(paths[i]).filename().string() + " differs");
        ++compared;
      }
    }
    omp_set_num_threads(threads);
    v.require(compared >= 5, std::to_string(compared) + " CSV files byte-identical across reruns");
    return v;
  });

  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
