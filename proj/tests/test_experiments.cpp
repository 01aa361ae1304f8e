#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "inrun/config.hpp"
#include "inrun/data.hpp"
#include "inrun/error.hpp"
#include "inrun/experiments.hpp"

using namespace inrun;
namespace fs = std::filesystem;

namespace {

std::string scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("inrun_test_" + name);
  fs::remove_all(dir);
  return dir.string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string first_line(const std::string& path) {
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  return line;
}

ExperimentConfig parse_text(const std::string& text, std::ostream* log = nullptr) {
  std::istringstream in(text);
  return parse_config(in, "test.ini", log);
}

std::string error_of(const std::string& text) {
  try {
    parse_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

// Small, fast configuration shared by the experiment tests.
ExperimentConfig small(ExperimentKind kind, const std::string& out) {
  ExperimentConfig c;
  c.kind = kind;
  c.seed = 11;
  c.output_dir = out;
  c.data.n = 200;
  c.data.dim = 4;
  c.hidden = {8};
  c.steps = 20;
  c.batch_size = 8;
  c.score_steps = 4;
  c.eta = 1e-4;
  return c;
}

ExperimentConfig random_config(Rng& rng) {
  ExperimentConfig c;
  const ExperimentKind kinds[] = {ExperimentKind::fidelity,   ExperimentKind::lr_sweep, ExperimentKind::pruning,
                                  ExperimentKind::efficiency, ExperimentKind::diagnostics};
  c.kind = kinds[rng.below(5)];
  c.seed = rng.next_u64();
  c.output_dir = "out/r" + std::to_string(rng.below(1000));
  c.steps = 20 + rng.below(200);
  c.score_steps = 1 + rng.below(c.steps);
  c.eta_grid.clear();
  for (std::size_t i = 0, n = 1 + rng.below(5); i < n; ++i) c.eta_grid.push_back(std::pow(10.0, -7.0 + 4.0 * rng.uniform()));
  c.permutations = 1 + rng.below(500);
  c.truncation_tol = rng.uniform() * 1e-2;
  c.tmc_utility = rng.below(2) ? TmcUtility::final_loss : TmcUtility::trajectory_mean;
  c.seeds = 1 + rng.below(5);
  c.prune_ratios = {0.1 * static_cast<double>(1 + rng.below(3)), rng.uniform() * 0.5};
  c.batch_sizes = {1 + rng.below(64), 1 + rng.below(64)};
  c.repetitions = 5 + rng.below(5);
  c.warmup_steps = rng.below(3);
  c.timed_steps = 1 + rng.below(5);
  c.stress_steps = 1 + rng.below(10);
  c.stress_samples = 2 + rng.below(60);
  c.recheck_oracle = rng.below(2) == 1;
  c.data.kind = rng.below(2) ? DataKind::gaussian_mixture : DataKind::xor_rings;
  c.data.n = 10 + rng.below(5000);
  c.data.dim = 2 + rng.below(20);
  c.data.flip_fraction = 0.5 * rng.uniform();
  c.data.val_fraction = 0.4 * rng.uniform();
  c.data.test_fraction = 0.2 * rng.uniform();
  c.data.separation = 5.0 * rng.uniform();
  c.data.scale_spread = 6.0 * rng.uniform() - 3.0;
  if (rng.below(4) == 0) c.data_path = "data/set" + std::to_string(rng.below(100)) + ".csv";
  c.hidden.clear();
  for (std::size_t i = 0, n = rng.below(4); i < n; ++i) c.hidden.push_back(1 + rng.below(256));
  c.activation = rng.below(2) ? Activation::relu : Activation::tanh;
  c.bias = rng.below(2) == 1;
  c.optimizer = OptimizerKind::adam;
  c.eta = rng.uniform() * 1e-2 + 1e-9;
  c.sgd_eta = rng.uniform() + 1e-6;
  c.momentum = 0.9 * rng.uniform();
  c.beta1 = 0.99 * rng.uniform();
  c.beta2 = 0.999 * rng.uniform();
  c.epsilon = 1e-12 + rng.uniform() * 1e-6;
  c.bias_correction = rng.below(2) == 1;
  c.batch_size = 1 + rng.below(128);
  c.methods = {ScoreMethod::adam_ghost};
  if (rng.below(2)) c.methods.push_back(ScoreMethod::sgd_first_order);
  c.include_history = rng.below(2) == 1;
  c.val_samples = rng.below(100);
  return c;
}

}  // namespace

TEST_CASE("config: minimal file takes every default and echoes it") {
  std::ostringstream log;
  const auto cfg = parse_text("[experiment]\nname = fidelity\nseed = 5\n", &log);
  ExperimentConfig want;
  want.seed = 5;
  CHECK(cfg == want);
  CHECK(log.str().find("default optimizer.eta = 0.0001") != std::string::npos);
  CHECK(log.str().find("default model.hidden = 64,64") != std::string::npos);
  CHECK(log.str().find("default experiment.seed =") == std::string::npos);
}

TEST_CASE("config: errors name the key and the line") {
  const auto eta = error_of("[experiment]\nname = fidelity\n[optimizer]\neta = -1\n");
  CHECK(eta.find("test.ini:4") != std::string::npos);
  CHECK(eta.find("eta") != std::string::npos);

  const auto unknown = error_of("[experiment]\nname = fidelity\n[model]\ndepth = 3\n");
  CHECK(unknown.find("test.ini:4") != std::string::npos);
  CHECK(unknown.find("depth") != std::string::npos);

  CHECK(error_of("[experiment]\nseed = 1\n").find("name") != std::string::npos);
  CHECK(error_of("[experiment]\nname = fidelity\nname = pruning\n").find("duplicate") != std::string::npos);
  CHECK(error_of("[weights]\n").find("unknown section") != std::string::npos);
  CHECK(error_of("name = fidelity\n").find("before any section") != std::string::npos);
  CHECK(error_of("[experiment]\nname = fidelity\nseed = -3\n").find("seed") != std::string::npos);
  CHECK(error_of("[experiment]\nname = fidelity\n[dataset]\nflip_fraction = 0.7\n").find("flip_fraction") !=
        std::string::npos);
  // Cross-key checks still point at the line that set the key.
  const auto cross = error_of("[experiment]\nname = fidelity\n[optimizer]\nname = sgd\n[attribution]\nmethods = adam_ghost\n");
  CHECK(cross.find("test.ini:6") != std::string::npos);
}

TEST_CASE("config: comments, blank lines and an empty hidden list") {
  const auto cfg = parse_text("# run\n\n[experiment]\nname = pruning # trailing\n[model]\nhidden =\n");
  CHECK(cfg.kind == ExperimentKind::pruning);
  CHECK(cfg.hidden.empty());
}

TEST_CASE("config: parse -> serialize -> parse round-trips 50 random configs") {
  Rng rng(2024);
  for (int i = 0; i < 50; ++i) {
    const auto cfg = random_config(rng);
    REQUIRE_NOTHROW(cfg.validate());
    const std::string text = serialize_config(cfg);
    const auto back = parse_text(text);
    CHECK(back == cfg);
    CHECK(serialize_config(back) == text);
  }
}

TEST_CASE("config hash ignores the output directory only") {
  ExperimentConfig a;
  ExperimentConfig b = a;
  b.output_dir = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  b.seed = 1;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a).size() == 16);
}

TEST_CASE("gen-data: flip counts, metadata column and determinism") {
  DataSpec spec;
  spec.n = 2000;
  spec.flip_fraction = 0.15;
  spec.seed = 9;
  const auto d = generate(spec);
  CHECK(std::count(d.flipped.begin(), d.flipped.end(), true) == 300);

  spec.flip_fraction = 0.0;
  const auto clean = generate(spec);
  CHECK(std::none_of(clean.flipped.begin(), clean.flipped.end(), [](bool f) { return f; }));
  std::ostringstream a, b;
  write_csv(clean, a);
  write_csv(generate(spec), b);
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("f0,f1,f2,f3,f4,f5,f6,f7,f8,f9,label,split,flipped\n", 0) == 0);

  spec.n = 5;
  CHECK_THROWS_AS(generate(spec), ConfigError);
}

TEST_CASE("fidelity: degenerate configs are rejected") {
  auto cfg = small(ExperimentKind::fidelity, scratch_dir("fid_bad"));
  cfg.eta = 0.0;
  CHECK_THROWS_AS(run_fidelity(cfg), ConfigError);
  cfg.eta = 1e-4;
  cfg.optimizer = OptimizerKind::sgd;
  CHECK_THROWS_AS(run_fidelity(cfg), ConfigError);
  cfg.methods = {ScoreMethod::sgd_first_order};
  CHECK_NOTHROW(run_fidelity(cfg));
}

TEST_CASE("fidelity: rows, schema, oracle recheck and byte-identical reruns") {
  auto cfg = small(ExperimentKind::fidelity, scratch_dir("fid_a"));
  cfg.recheck_oracle = true;
  const auto a = run_fidelity(cfg);
  CHECK(a.rows.size() == cfg.score_steps * cfg.batch_size * cfg.methods.size());
  CHECK(a.recheck_max_gap <= 1e-12);
  CHECK(first_line(a.files[0]) == "step,sample_id,method,predicted,actual,config_hash,seed,version");
  CHECK(a.correlations.at(ScoreMethod::adam_exact).pearson_r >= 0.99);
  CHECK(a.correlations.at(ScoreMethod::adam_ghost).n == a.rows.size() / 3);

  auto again = cfg;
  again.output_dir = scratch_dir("fid_b");
  const auto b = run_fidelity(again);
  CHECK(slurp(a.files[0]) == slurp(b.files[0]));
}

TEST_CASE("lr sweep: a one-point grid reduces to fidelity") {
  auto cfg = small(ExperimentKind::lr_sweep, scratch_dir("sweep"));
  cfg.eta_grid = {cfg.eta};
  const auto sweep = run_lr_sweep(cfg);
  cfg.kind = ExperimentKind::fidelity;
  const auto fid = run_fidelity(cfg);
  REQUIRE(sweep.rows.size() == cfg.methods.size());
  for (const auto& row : sweep.rows) {
    CHECK(row.eta == cfg.eta);
    CHECK(row.pearson == fid.correlations.at(row.method).pearson_r);
    CHECK(row.spearman == fid.correlations.at(row.method).spearman_rho);
  }
  CHECK(first_line(sweep.files[0]) == "eta,method,pearson,spearman,config_hash,seed,version");
}

TEST_CASE("optimizer dependence: identical arms agree exactly") {
  auto cfg = small(ExperimentKind::optimizer_dependence, scratch_dir("dep"));
  cfg.data.n = 24;
  cfg.data.val_fraction = 0.5;
  cfg.hidden = {};
  cfg.arms = {OptimizerKind::sgd, OptimizerKind::sgd};
  cfg.permutations = 10;
  cfg.seeds = 1;
  cfg.steps = 5;
  const auto r = run_optimizer_dependence(cfg);
  REQUIRE(r.triples.size() == 1);
  CHECK(r.triples[0].first == r.triples[0].second);
  CHECK(r.triples[0].cross.pearson_r == doctest::Approx(1.0).epsilon(1e-12));

  cfg.hidden = {4, 4};
  CHECK_THROWS_AS(run_optimizer_dependence(cfg), ConfigError);
  cfg.hidden = {};
  cfg.data.n = 200;
  CHECK_THROWS_AS(run_optimizer_dependence(cfg), ConfigError);
}

TEST_CASE("pruning: ratio 0 leaves every strategy at the baseline") {
  auto cfg = small(ExperimentKind::pruning, scratch_dir("prune"));
  cfg.data.flip_fraction = 0.1;
  cfg.prune_ratios = {0.0, 0.2};
  cfg.seeds = 2;
  cfg.eta = 1e-2;
  const auto r = run_pruning(cfg);
  for (std::size_t s = 0; s < 2; ++s)
    for (const auto& row : r.rows)
      if (row.seed == s && row.ratio == 0.0) CHECK(row.val_accuracy == r.baseline_accuracy(s));
  CHECK(r.flipped_in_bottom.size() == 2);
  CHECK(r.rows.size() == 2 * (1 + 2 * 3));
  CHECK(first_line(r.files[0]) == "ratio,strategy,seed,val_accuracy,config_hash,seed,version");
}

TEST_CASE("efficiency: ghost buffers stay per-layer, direct buffers hold B x P") {
  auto cfg = small(ExperimentKind::efficiency, scratch_dir("eff"));
  cfg.hidden = {32, 32};
  cfg.batch_sizes = {4, 8};
  cfg.repetitions = 5;
  cfg.timed_steps = 1;
  const auto r = run_efficiency(cfg);
  for (std::size_t B : cfg.batch_sizes) {
    const auto& ghost = r.at("ghost", B);
    const auto& direct = r.at("direct", B);
    CHECK(r.at("standard", B).peak_extra_bytes == 0);
    CHECK(ghost.peak_extra_bytes < 2 * B * ghost.widest * sizeof(double));
    CHECK(ghost.largest_buffer_bytes < B * ghost.param_count * sizeof(double));
    CHECK(direct.peak_extra_bytes >= B * direct.param_count * sizeof(double));
    CHECK(ghost.sps > 0.0);
  }
  CHECK(first_line(r.files[0]).rfind("mode,batch_size,sps,peak_extra_bytes,", 0) == 0);
  cfg.repetitions = 3;
  CHECK_THROWS_AS(run_efficiency(cfg), ConfigError);
}

TEST_CASE("diagnostics: percentiles are ordered and the stress window is scored") {
  auto cfg = small(ExperimentKind::diagnostics, scratch_dir("diag"));
  cfg.eta = 1e-2;
  cfg.stress_steps = 3;
  cfg.stress_samples = 12;
  const auto r = run_diagnostics(cfg);
  REQUIRE(r.records.size() == cfg.steps);
  for (std::size_t t = 0; t < r.records.size(); ++t) {
    CHECK(r.records[t].step == static_cast<std::int64_t>(t + 1));
    CHECK(r.records[t].p10 <= r.records[t].p50);
    CHECK(r.records[t].p50 <= r.records[t].p90);
  }
  CHECK(r.stress_ids.size() == 12);
  CHECK(first_line(r.files[0]) == "step,p10,p50,p90,config_hash,seed,version");
  CHECK(first_line(r.files[1]) == "sample_id,ghost,exact,config_hash,seed,version");
}

TEST_CASE("diagnostics: |u| is exactly 1 after the first step when eps vanishes") {
  ModelSpec spec{{3, 4, 2}, Activation::tanh, LossKind::softmax_cross_entropy, true};
  Rng rng(3);
  Params p = init_params(spec, rng);
  Params g(p.layout());
  for (auto& x : g.flat()) x = rng.gaussian();
  AdamState s = make_adam(p.layout(), 1e-3, 0.9, 0.999, 1e-300);
  adam_step(p, s, g);
  const auto rec = perturbation_percentiles(s);
  CHECK(rec.step == 1);
  CHECK(rec.p10 == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(rec.p90 == doctest::Approx(1.0).epsilon(1e-15));
}
