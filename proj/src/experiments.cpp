#include "inrun/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "inrun/alloc.hpp"
#include "inrun/config.hpp"
#include "inrun/error.hpp"

namespace inrun {

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::fidelity: return "fidelity";
    case ExperimentKind::lr_sweep: return "lr-sweep";
    case ExperimentKind::optimizer_dependence: return "optimizer-dependence";
    case ExperimentKind::pruning: return "pruning";
    case ExperimentKind::efficiency: return "efficiency";
    case ExperimentKind::diagnostics: return "diagnostics";
  }
  return "?";
}

ExperimentKind parse_experiment(const std::string& s) {
  for (auto k : {ExperimentKind::fidelity, ExperimentKind::lr_sweep, ExperimentKind::optimizer_dependence,
                 ExperimentKind::pruning, ExperimentKind::efficiency, ExperimentKind::diagnostics})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown experiment '" + s + "'");
}

namespace {

// Keys for the seed derivation tree rooted at the config seed.
enum : std::uint64_t {
  kData = 1,
  kInit = 2,
  kBatches = 3,
  kPermutation = 4,
  kRandomPrune = 5,
  kStress = 6,
};

std::uint64_t derived_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  return Rng(seed).derive(keys).next_u64();
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const ExperimentConfig& cfg, const std::string& name, const std::string& columns)
      : path_((std::filesystem::path(cfg.output_dir) / name).string()),
        suffix_("," + config_hash(cfg) + "," + std::to_string(cfg.seed) + "," + kVersion) {
    std::filesystem::create_directories(cfg.output_dir);
    out_.open(path_, std::ios::binary);
    if (!out_) throw Error("cannot open '" + path_ + "' for writing");
    out_ << columns << ",config_hash,seed,version\n";
  }

  template <typename... Ts>
  void row(const Ts&... fields) {
    std::string line;
    ((line += cell(fields), line += ','), ...);
    line.pop_back();
    out_ << line << suffix_ << '\n';
  }

  std::string close() {
    out_.close();
    if (!out_) throw Error("failed writing '" + path_ + "'");
    return path_;
  }

 private:
  static std::string cell(double x) { return fmt(x); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  template <typename I>
    requires std::is_integral_v<I>
  static std::string cell(I x) { return std::to_string(x); }

  std::string path_;
  std::string suffix_;
  std::ofstream out_;
};

/// Epoch-wise shuffled mini-batches over a row set, keyed by (seed, epoch).
class BatchStream {
 public:
  BatchStream(std::vector<std::size_t> rows, std::size_t batch_size, std::uint64_t seed)
      : rows_(std::move(rows)), batch_size_(batch_size), seed_(seed), cursor_(rows_.size()) {
    if (rows_.empty()) throw DegenerateError("no training rows");
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> out;
    out.reserve(batch_size_);
    while (out.size() < batch_size_) {
      if (cursor_ >= rows_.size()) {
        Rng shuffle = Rng(seed_).derive({epoch_++});
        const auto perm = permutation(shuffle, rows_.size());
        order_.resize(rows_.size());
        for (std::size_t i = 0; i < rows_.size(); ++i) order_[i] = rows_[perm[i]];
        cursor_ = 0;
      }
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> rows_;
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::size_t cursor_;
  std::uint64_t epoch_ = 0;
};

Batch validation_batch(const ExperimentConfig& cfg, const Dataset& data) {
  auto rows = data.indices(Split::val);
  if (rows.empty()) throw ConfigError("dataset has no validation rows");
  if (cfg.val_samples > 0 && cfg.val_samples < rows.size()) rows.resize(cfg.val_samples);
  return data.gather(rows);
}

bool is_adam_method(ScoreMethod m) { return m != ScoreMethod::sgd_first_order; }

/// Scores one batch with `method` from the pre-step state.
std::vector<double> score_batch(ScoreMethod method, const ExperimentConfig& cfg, const BatchTrace& trace,
                                const ValGradient& val, const OptimizerState& state, std::size_t batch_size) {
  const double eta = learning_rate_of(state);
  switch (method) {
    case ScoreMethod::sgd_first_order:
      return sgd_inrun_scores(trace, val, eta / static_cast<double>(batch_size));
    case ScoreMethod::adam_exact:
      return adam_exact_scores(trace, val, std::get<AdamState>(state), eta, batch_size);
    case ScoreMethod::adam_ghost: {
      const GhostCoefficients coeffs(std::get<AdamState>(state));
      return adam_ghost_scores(trace, val, coeffs, eta, batch_size, GhostOptions{cfg.include_history});
    }
  }
  return {};
}

struct FidelityRun {
  std::vector<FidelityRow> rows;
  double recheck_max_gap = 0.0;
};

FidelityRun fidelity_trajectory(const ExperimentConfig& cfg, double eta) {
  const Dataset data = load_dataset(cfg);
  const ModelSpec spec = model_spec(cfg, data);
  const TrainerConfig tc = trainer_config(cfg, spec, cfg.optimizer, derived_seed(cfg.seed, {kInit}));
  TrainerConfig run_cfg = tc;
  run_cfg.learning_rate = eta;

  Rng init_rng(tc.init_seed);
  Params params = init_params(spec, init_rng);
  OptimizerState state = make_optimizer(run_cfg, params.layout());
  const Batch val = validation_batch(cfg, data);
  BatchStream stream(data.indices(Split::train), cfg.batch_size, derived_seed(cfg.seed, {kBatches}));

  FidelityRun out;
  const std::size_t first_scored = cfg.steps - cfg.score_steps;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto rows = stream.next();
    const Batch batch = data.gather(rows);
    auto back = backward_with_trace(spec, params, batch);
    if (step >= first_scored) {
      const auto t = static_cast<std::int64_t>(step + 1);
      const auto val_grad = ValGradient::compute(spec, params, val);
      const OneStepUtility truth(spec, snapshot(params, state), batch, val);
      std::vector<double> actual(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::size_t subset[1] = {i};
        actual[i] = truth(subset);
      }
      if (cfg.recheck_oracle) {
        const OneStepUtility again(spec, snapshot(params, state), batch, val);
        for (std::size_t i = 0; i < batch.size(); ++i) {
          const std::size_t subset[1] = {i};
          out.recheck_max_gap = std::max(out.recheck_max_gap, std::abs(again(subset) - actual[i]));
        }
      }
      for (ScoreMethod m : cfg.methods) {
        const auto predicted = score_batch(m, cfg, back.trace, val_grad, state, batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) out.rows.push_back({t, rows[i], m, predicted[i], actual[i]});
      }
    }
    optimizer_step(params, state, back.mean_grad);
    if (!params.all_finite()) throw NumericError("training diverged at step " + std::to_string(step + 1));
  }
  return out;
}

std::map<ScoreMethod, CorrelationReport> correlations_by_method(const ExperimentConfig& cfg,
                                                                const std::vector<FidelityRow>& rows) {
  std::map<ScoreMethod, CorrelationReport> out;
  for (ScoreMethod m : cfg.methods) {
    std::vector<double> p, a;
    for (const auto& r : rows)
      if (r.method == m) {
        p.push_back(r.predicted);
        a.push_back(r.actual);
      }
    out[m] = correlate(p, a);
  }
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  auto need = [](bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError(key + ": " + what);
  };
  need(std::isfinite(eta) && eta > 0.0, "eta", "must be > 0");
  need(std::isfinite(sgd_eta) && sgd_eta > 0.0, "sgd_eta", "must be > 0");
  need(momentum >= 0.0 && momentum < 1.0, "momentum", "must lie in [0, 1)");
  need(beta1 >= 0.0 && beta1 < 1.0, "beta1", "must lie in [0, 1)");
  need(beta2 >= 0.0 && beta2 < 1.0, "beta2", "must lie in [0, 1)");
  need(std::isfinite(epsilon) && epsilon > 0.0, "epsilon", "must be > 0");
  need(steps >= 1, "steps", "must be >= 1");
  need(batch_size >= 1, "batch_size", "must be >= 1");
  need(!methods.empty(), "methods", "must name at least one method");
  need(score_steps >= 1, "score_steps", "must be >= 1");
  need(!eta_grid.empty(), "eta_grid", "must not be empty");
  for (double e : eta_grid) need(std::isfinite(e) && e > 0.0, "eta_grid", "values must be > 0");
  need(!arms.empty(), "arms", "must not be empty");
  need(permutations >= 1, "permutations", "must be >= 1");
  need(std::isfinite(truncation_tol), "truncation_tol", "must be finite");
  need(seeds >= 1, "seeds", "must be >= 1");
  for (double r : prune_ratios) need(r >= 0.0 && r < 1.0, "prune_ratios", "values must lie in [0, 1)");
  need(!batch_sizes.empty(), "batch_sizes", "must not be empty");
  for (auto b : batch_sizes) need(b >= 1, "batch_sizes", "values must be >= 1");
  need(repetitions >= 1, "repetitions", "must be >= 1");
  need(timed_steps >= 1, "timed_steps", "must be >= 1");
  need(stress_steps >= 1, "stress_steps", "must be >= 1");
  need(stress_samples >= 2, "stress_samples", "must be >= 2");
  for (auto h : hidden) need(h >= 1, "hidden", "widths must be >= 1");
  if (data_path.empty()) data.validate();

  const bool scores_sgd = optimizer == OptimizerKind::sgd;
  if (kind == ExperimentKind::fidelity || kind == ExperimentKind::lr_sweep) {
    need(score_steps <= steps, "score_steps", "must not exceed steps");
    for (ScoreMethod m : methods)
      need(!(scores_sgd && is_adam_method(m)), "methods", to_string(m) + " needs optimizer = adam");
  }
  if (kind == ExperimentKind::pruning) {
    need(!prune_ratios.empty(), "prune_ratios", "must not be empty");
    need(!(scores_sgd && is_adam_method(prune_method)), "prune_method",
         to_string(prune_method) + " needs optimizer = adam");
  }
  if (kind == ExperimentKind::efficiency) need(repetitions >= 5, "repetitions", "efficiency needs >= 5");
  if (kind == ExperimentKind::diagnostics) {
    need(optimizer == OptimizerKind::adam, "optimizer", "diagnostics needs adam");
    need(stress_steps <= steps, "stress_steps", "must not exceed steps");
  }
  if (kind == ExperimentKind::optimizer_dependence) {
    need(hidden.size() <= 1, "hidden", "optimizer-dependence needs at most one hidden layer");
    need(arms.size() == 2, "arms", "optimizer-dependence compares exactly two arms");
  }
}

Dataset load_dataset(const ExperimentConfig& cfg) {
  if (!cfg.data_path.empty()) return read_csv(cfg.data_path);
  DataSpec spec = cfg.data;
  spec.seed = derived_seed(cfg.seed, {kData});
  return generate(spec);
}

ModelSpec model_spec(const ExperimentConfig& cfg, const Dataset& data) {
  if (!data.is_classification()) throw ConfigError("experiments need a classification dataset");
  ModelSpec spec;
  spec.layer_dims.push_back(data.dim());
  for (auto h : cfg.hidden) spec.layer_dims.push_back(h);
  spec.layer_dims.push_back(data.num_classes);
  spec.activation = cfg.activation;
  spec.loss = LossKind::softmax_cross_entropy;
  spec.bias = cfg.bias;
  spec.validate();
  return spec;
}

TrainerConfig trainer_config(const ExperimentConfig& cfg, const ModelSpec& spec, OptimizerKind kind,
                             std::uint64_t init_seed) {
  TrainerConfig tc;
  tc.spec = spec;
  tc.optimizer = kind;
  tc.learning_rate = kind == OptimizerKind::adam ? cfg.eta : cfg.sgd_eta;
  tc.beta1 = cfg.beta1;
  tc.beta2 = cfg.beta2;
  tc.epsilon = cfg.epsilon;
  tc.bias_correction = cfg.bias_correction;
  tc.momentum = cfg.momentum;
  tc.steps = cfg.steps;
  tc.batch_size = cfg.batch_size;
  tc.init_seed = init_seed;
  return tc;
}

std::string config_hash(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.output_dir.clear();
  const std::string text = serialize_config(c);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

FidelityResult run_fidelity(const ExperimentConfig& cfg) {
  cfg.validate();
  auto run = fidelity_trajectory(cfg, cfg.eta);
  FidelityResult res;
  res.correlations = correlations_by_method(cfg, run.rows);
  res.recheck_max_gap = run.recheck_max_gap;
  CsvWriter csv(cfg, "fidelity.csv", "step,sample_id,method,predicted,actual");
  for (const auto& r : run.rows) csv.row(r.step, r.sample_id, to_string(r.method), r.predicted, r.actual);
  res.files.push_back(csv.close());
  res.rows = std::move(run.rows);
  return res;
}

SweepResult run_lr_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  SweepResult res;
  for (double eta : cfg.eta_grid) {
    const auto run = fidelity_trajectory(cfg, eta);
    for (const auto& [m, c] : correlations_by_method(cfg, run.rows))
      res.rows.push_back({eta, m, c.pearson_r, c.spearman_rho});
  }
  CsvWriter csv(cfg, "sweep.csv", "eta,method,pearson,spearman");
  for (const auto& r : res.rows) csv.row(r.eta, to_string(r.method), r.pearson, r.spearman);
  res.files.push_back(csv.close());
  return res;
}

DependenceResult run_optimizer_dependence(const ExperimentConfig& cfg) {
  cfg.validate();
  DependenceResult res;
  CsvWriter scatter(cfg, "dependence.csv", "triple,sample_id,first,second,first_alt,second_alt");
  for (std::size_t k = 0; k < cfg.seeds; ++k) {
    ExperimentConfig arm_cfg = cfg;
    arm_cfg.seed = derived_seed(cfg.seed, {kData, k});
    const Dataset data = load_dataset(arm_cfg);
    const ModelSpec spec = model_spec(cfg, data);
    const auto train_rows = data.indices(Split::train);
    if (train_rows.size() > 60) throw ConfigError("optimizer-dependence needs at most 60 training rows");
    const std::uint64_t init_seed = derived_seed(cfg.seed, {kInit, k});

    auto estimate = [&](OptimizerKind kind, std::uint64_t perm_key) {
      TmcOptions opt;
      opt.permutations = cfg.permutations;
      opt.truncation_tol = cfg.truncation_tol;
      opt.utility = cfg.tmc_utility;
      opt.seed = derived_seed(cfg.seed, {kPermutation, k, perm_key});
      return tmc_shapley(data, trainer_config(cfg, spec, kind, init_seed), opt).values;
    };
    DependenceTriple t;
    t.first = estimate(cfg.arms[0], 0);
    t.second = estimate(cfg.arms[1], 0);
    t.first_alt = estimate(cfg.arms[0], 1);
    t.second_alt = estimate(cfg.arms[1], 1);
    t.cross = correlate(t.first, t.second);
    const auto same_a = correlate(t.first, t.first_alt);
    const auto same_b = correlate(t.second, t.second_alt);
    t.same_pearson = 0.5 * (same_a.pearson_r + same_b.pearson_r);
    t.same_spearman = 0.5 * (same_a.spearman_rho + same_b.spearman_rho);
    for (std::size_t i = 0; i < train_rows.size(); ++i)
      scatter.row(k, train_rows[i], t.first[i], t.second[i], t.first_alt[i], t.second_alt[i]);
    res.triples.push_back(std::move(t));
  }
  res.files.push_back(scatter.close());

  CsvWriter summary(cfg, "dependence_summary.csv",
                    "triple,first,second,cross_pearson,cross_spearman,same_pearson,same_spearman");
  for (std::size_t k = 0; k < res.triples.size(); ++k) {
    const auto& t = res.triples[k];
    summary.row(k, to_string(cfg.arms[0]), to_string(cfg.arms[1]), t.cross.pearson_r, t.cross.spearman_rho,
                t.same_pearson, t.same_spearman);
  }
  res.files.push_back(summary.close());
  return res;
}

double PruningResult::baseline_accuracy(std::size_t seed) const {
  for (const auto& r : rows)
    if (r.strategy == "none" && r.seed == seed) return r.val_accuracy;
  throw Error("no baseline row for seed " + std::to_string(seed));
}

double PruningResult::mean_accuracy(double ratio, const std::string& strategy) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows)
    if (r.ratio == ratio && r.strategy == strategy) {
      sum += r.val_accuracy;
      ++n;
    }
  if (n == 0) throw Error("no pruning rows for " + strategy + " at ratio " + fmt(ratio));
  return sum / static_cast<double>(n);
}

PruningResult run_pruning(const ExperimentConfig& cfg) {
  cfg.validate();
  const Dataset data = load_dataset(cfg);
  const ModelSpec spec = model_spec(cfg, data);
  const auto train_rows = data.indices(Split::train);
  const Batch val = validation_batch(cfg, data);
  const Batch val_all = data.all_of(Split::val);
  const std::size_t n_train = train_rows.size();
  const bool has_flips = !data.flipped.empty();

  struct Job {
    std::size_t seed;
    double ratio;
    std::string strategy;
    std::vector<std::size_t> kept;
    double accuracy = 0.0;
    std::vector<double> curve;
  };
  std::vector<Job> jobs;
  PruningResult res;

  for (std::size_t s = 0; s < cfg.seeds; ++s) {
    const std::uint64_t init_seed = derived_seed(cfg.seed, {kInit, s});
    TrainerConfig tc = trainer_config(cfg, spec, cfg.optimizer, init_seed);

    // Preliminary pass: ledger totals over a full training run.
    AttributionLedger ledger(data.size(), false);
    {
      Rng init_rng(init_seed);
      Params params = init_params(spec, init_rng);
      OptimizerState state = make_optimizer(tc, params.layout());
      BatchStream stream(train_rows, cfg.batch_size, derived_seed(cfg.seed, {kBatches, s}));
      for (std::size_t step = 0; step < cfg.steps; ++step) {
        const auto rows = stream.next();
        const Batch batch = data.gather(rows);
        auto back = backward_with_trace(spec, params, batch);
        const auto val_grad = ValGradient::compute(spec, params, val, cfg.prune_method == ScoreMethod::adam_exact);
        const auto scores = score_batch(cfg.prune_method, cfg, back.trace, val_grad, state, batch.size());
        ledger.accumulate(static_cast<std::int64_t>(step + 1), cfg.prune_method, rows, scores);
        optimizer_step(params, state, back.mean_grad);
      }
    }
    // Value = -(accumulated loss change): high value helped validation loss.
    const auto totals = ledger.totals(cfg.prune_method);
    std::vector<double> value(n_train);
    for (std::size_t i = 0; i < n_train; ++i) value[i] = -totals[train_rows[i]];
    std::vector<std::size_t> ascending(n_train);
    std::iota(ascending.begin(), ascending.end(), 0);
    std::stable_sort(ascending.begin(), ascending.end(),
                     [&](std::size_t a, std::size_t b) { return value[a] < value[b]; });

    if (has_flips) {
      std::size_t flipped = 0, in_bottom = 0;
      const auto cut = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n_train)));
      for (std::size_t i = 0; i < n_train; ++i) flipped += data.flipped[train_rows[i]] ? 1 : 0;
      for (std::size_t k = 0; k < cut; ++k) in_bottom += data.flipped[train_rows[ascending[k]]] ? 1 : 0;
      res.flipped_in_bottom.push_back(flipped ? static_cast<double>(in_bottom) / static_cast<double>(flipped) : 0.0);
    }

    jobs.push_back({s, 0.0, "none", train_rows, 0.0, {}});
    for (std::size_t r = 0; r < cfg.prune_ratios.size(); ++r) {
      const double ratio = cfg.prune_ratios[r];
      const auto n_drop = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n_train)));
      Rng random_rng = Rng(cfg.seed).derive({kRandomPrune, s, r});
      const auto shuffled = permutation(random_rng, n_train);
      for (const char* strategy : {"bottom", "random", "top"}) {
        std::vector<bool> drop(n_train, false);
        for (std::size_t k = 0; k < n_drop; ++k) {
          const std::string st = strategy;
          const std::size_t pos = st == "bottom" ? ascending[k] : st == "top" ? ascending[n_train - 1 - k] : shuffled[k];
          drop[pos] = true;
        }
        std::vector<std::size_t> kept;
        for (std::size_t i = 0; i < n_train; ++i)
          if (!drop[i]) kept.push_back(train_rows[i]);
        jobs.push_back({s, ratio, strategy, std::move(kept), 0.0, {}});
      }
    }
  }

  // Retrains are independent; each writes only its own slot.
#pragma omp parallel for schedule(dynamic)
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    auto& job = jobs[j];
    const TrainerConfig tc = trainer_config(cfg, spec, cfg.optimizer, derived_seed(cfg.seed, {kInit, job.seed}));
    const Params final_params = train_on(data, job.kept, tc, [&](std::size_t, const Params& p) {
      job.curve.push_back(forward(spec, p, val_all).mean_loss);
    });
    job.accuracy = accuracy(spec, final_params, val_all);
  }

  CsvWriter csv(cfg, "pruning.csv", "ratio,strategy,seed,val_accuracy");
  CsvWriter curves(cfg, "pruning_loss.csv", "ratio,strategy,seed,step,val_loss");
  for (const auto& job : jobs) {
    res.rows.push_back({job.ratio, job.strategy, job.seed, job.accuracy});
    csv.row(job.ratio, job.strategy, job.seed, job.accuracy);
    for (std::size_t t = 0; t < job.curve.size(); ++t) curves.row(job.ratio, job.strategy, job.seed, t + 1, job.curve[t]);
  }
  res.files.push_back(csv.close());
  res.files.push_back(curves.close());

  CsvWriter summary(cfg, "pruning_summary.csv", "ratio,strategy,mean,sd");
  std::vector<std::pair<double, std::string>> cells{{0.0, "none"}};
  for (double ratio : cfg.prune_ratios)
    for (const char* st : {"bottom", "random", "top"}) cells.emplace_back(ratio, st);
  for (const auto& [ratio, st] : cells) {
    std::vector<double> acc;
    for (const auto& r : res.rows)
      if (r.ratio == ratio && r.strategy == st) acc.push_back(r.val_accuracy);
    summary.row(ratio, st, mean(acc), acc.size() > 1 ? stddev(acc) : 0.0);
  }
  res.files.push_back(summary.close());
  if (has_flips) {
    CsvWriter flips(cfg, "pruning_flips.csv", "seed,flipped_in_bottom20");
    for (std::size_t s = 0; s < res.flipped_in_bottom.size(); ++s) flips.row(s, res.flipped_in_bottom[s]);
    res.files.push_back(flips.close());
  }
  return res;
}

const EfficiencyRow& EfficiencyResult::at(const std::string& mode, std::size_t batch_size) const {
  for (const auto& r : rows)
    if (r.mode == mode && r.batch_size == batch_size) return r;
  throw Error("no efficiency row for " + mode + " at B=" + std::to_string(batch_size));
}

EfficiencyResult run_efficiency(const ExperimentConfig& cfg) {
  cfg.validate();
  using Clock = std::chrono::steady_clock;
  const Dataset data = load_dataset(cfg);
  const ModelSpec spec = model_spec(cfg, data);
  const Batch val = validation_batch(cfg, data);
  const auto train_rows = data.indices(Split::train);
  const double tick = std::chrono::duration<double>(Clock::duration(1)).count();

  EfficiencyResult res;
  for (const char* mode_name : {"standard", "ghost", "direct"}) {
    const std::string mode = mode_name;
    for (std::size_t B : cfg.batch_sizes) {
      const std::uint64_t init_seed = derived_seed(cfg.seed, {kInit});
      Rng init_rng(init_seed);
      Params params = init_params(spec, init_rng);
      OptimizerState state = make_optimizer(trainer_config(cfg, spec, OptimizerKind::adam, init_seed), params.layout());
      BatchStream stream(train_rows, B, derived_seed(cfg.seed, {kBatches, B}));
      auto& acc = attribution_accountant();
      acc.reset();

      auto one_step = [&] {
        const auto rows = stream.next();
        const Batch batch = data.gather(rows);
        auto back = backward_with_trace(spec, params, batch);
        if (mode == "ghost") {
          const auto val_grad = ValGradient::compute(spec, params, val, false);
          const GhostCoefficients coeffs(std::get<AdamState>(state));
          const auto s = adam_ghost_scores(back.trace, val_grad, coeffs, cfg.eta, B);
          if (s.size() != B) throw Error("ghost scores have the wrong size");
        } else if (mode == "direct") {
          const auto val_grad = ValGradient::compute(spec, params, val, true);
          const auto s = adam_direct_scores(spec, params, batch, val_grad, std::get<AdamState>(state), cfg.eta);
          if (s.size() != B) throw Error("direct scores have the wrong size");
        }
        optimizer_step(params, state, back.mean_grad);
      };

      for (std::size_t w = 0; w < cfg.warmup_steps; ++w) one_step();
      std::vector<double> per_step;
      for (std::size_t r = 0; r < cfg.repetitions; ++r) {
        const auto start = Clock::now();
        for (std::size_t k = 0; k < cfg.timed_steps; ++k) one_step();
        const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
        if (elapsed < 100.0 * tick)
          throw DegenerateError("timed region is too short for the clock; enlarge the workload (" + mode +
                                ", B=" + std::to_string(B) + ")");
        per_step.push_back(elapsed / static_cast<double>(cfg.timed_steps));
      }
      EfficiencyRow row;
      row.mode = mode;
      row.batch_size = B;
      row.seconds_per_step = percentile(per_step, 50.0);
      row.sps = static_cast<double>(B) / row.seconds_per_step;
      row.peak_extra_bytes = acc.peak_bytes();
      row.largest_buffer_bytes = acc.largest_buffer_bytes();
      row.param_count = params.size();
      row.widest = spec.widest();
      res.rows.push_back(row);
    }
    std::vector<double> xs, ys;
    for (const auto& r : res.rows)
      if (r.mode == mode) {
        xs.push_back(static_cast<double>(r.batch_size));
        ys.push_back(r.seconds_per_step);
      }
    if (xs.size() >= 2) res.time_fits[mode] = linear_fit(xs, ys);
  }

  CsvWriter csv(cfg, "efficiency.csv",
                "mode,batch_size,sps,peak_extra_bytes,seconds_per_step,largest_buffer_bytes,param_count,widest");
  for (const auto& r : res.rows)
    csv.row(r.mode, r.batch_size, r.sps, r.peak_extra_bytes, r.seconds_per_step, r.largest_buffer_bytes,
            r.param_count, r.widest);
  res.files.push_back(csv.close());
  CsvWriter fits(cfg, "efficiency_fit.csv", "mode,slope,intercept,r_squared");
  for (const auto& [mode, f] : res.time_fits) fits.row(mode, f.slope, f.intercept, f.r_squared);
  res.files.push_back(fits.close());
  return res;
}

DiagnosticsRecord perturbation_percentiles(const AdamState& state) {
  const Params u = effective_update(state);
  std::vector<double> mag(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) mag[k] = std::abs(u[k]);
  DiagnosticsRecord rec;
  rec.step = state.step;
  rec.p10 = percentile(mag, 10.0);
  rec.p50 = percentile(mag, 50.0);
  rec.p90 = percentile(std::move(mag), 90.0);
  return rec;
}

DiagnosticsResult run_diagnostics(const ExperimentConfig& cfg) {
  cfg.validate();
  const Dataset data = load_dataset(cfg);
  const ModelSpec spec = model_spec(cfg, data);
  const Batch val = validation_batch(cfg, data);
  const auto train_rows = data.indices(Split::train);
  if (cfg.stress_samples > train_rows.size()) throw ConfigError("stress_samples: exceeds the training rows");

  const std::uint64_t init_seed = derived_seed(cfg.seed, {kInit});
  Rng init_rng(init_seed);
  Params params = init_params(spec, init_rng);
  OptimizerState state = make_optimizer(trainer_config(cfg, spec, OptimizerKind::adam, init_seed), params.layout());
  BatchStream stream(train_rows, cfg.batch_size, derived_seed(cfg.seed, {kBatches}));

  DiagnosticsResult res;
  Rng pick_rng = Rng(cfg.seed).derive({kStress});
  const auto pick = permutation(pick_rng, train_rows.size());
  for (std::size_t k = 0; k < cfg.stress_samples; ++k) res.stress_ids.push_back(train_rows[pick[k]]);
  std::sort(res.stress_ids.begin(), res.stress_ids.end());
  const Batch stress_batch = data.gather(res.stress_ids);
  res.stress_ghost.assign(cfg.stress_samples, 0.0);
  res.stress_exact.assign(cfg.stress_samples, 0.0);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (step < cfg.stress_steps) {
      // Each stressed sample is scored as one member of a batch of the training size.
      const auto& adam = std::get<AdamState>(state);
      const auto trace = backward_with_trace(spec, params, stress_batch).trace;
      const auto val_grad = ValGradient::compute(spec, params, val);
      const GhostCoefficients coeffs(adam);
      const auto ghost = adam_ghost_scores(trace, val_grad, coeffs, cfg.eta, cfg.batch_size,
                                           GhostOptions{cfg.include_history});
      const auto exact = adam_exact_scores(trace, val_grad, adam, cfg.eta, cfg.batch_size);
      for (std::size_t i = 0; i < cfg.stress_samples; ++i) {
        res.stress_ghost[i] += ghost[i];
        res.stress_exact[i] += exact[i];
      }
    }
    const Batch batch = data.gather(stream.next());
    const auto grad = backward_with_trace(spec, params, batch).mean_grad;
    optimizer_step(params, state, grad);
    if (!params.all_finite()) throw NumericError("training diverged at step " + std::to_string(step + 1));
    res.records.push_back(perturbation_percentiles(std::get<AdamState>(state)));
  }
  res.stress = correlate(res.stress_ghost, res.stress_exact);

  CsvWriter csv(cfg, "diagnostics.csv", "step,p10,p50,p90");
  for (const auto& r : res.records) csv.row(r.step, r.p10, r.p50, r.p90);
  res.files.push_back(csv.close());
  CsvWriter stress(cfg, "stress.csv", "sample_id,ghost,exact");
  for (std::size_t i = 0; i < res.stress_ids.size(); ++i)
    stress.row(res.stress_ids[i], res.stress_ghost[i], res.stress_exact[i]);
  res.files.push_back(stress.close());
  return res;
}

}  // namespace inrun
