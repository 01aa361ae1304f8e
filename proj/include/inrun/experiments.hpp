#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "inrun/attribution.hpp"
#include "inrun/data.hpp"
#include "inrun/model.hpp"
#include "inrun/optim.hpp"
#include "inrun/oracle.hpp"
#include "inrun/stats.hpp"

namespace inrun {

inline constexpr const char* kVersion = "inrun-0.1.0";

enum class ExperimentKind { fidelity, lr_sweep, optimizer_dependence, pruning, efficiency, diagnostics };
std::string to_string(ExperimentKind k);
ExperimentKind parse_experiment(const std::string& s);

/// Everything an experiment reads. Two runs with equal configs write
/// byte-identical reports (timing columns excepted).
struct ExperimentConfig {
  // [experiment]
  ExperimentKind kind = ExperimentKind::fidelity;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::size_t score_steps = 32;  // fidelity: the last score_steps steps are scored
  std::vector<double> eta_grid{1e-7, 1e-6, 1e-5, 1e-4, 1e-3};
  std::vector<OptimizerKind> arms{OptimizerKind::sgd, OptimizerKind::adam};
  std::size_t permutations = 200;
  double truncation_tol = 1e-3;
  TmcUtility tmc_utility = TmcUtility::final_loss;
  std::size_t seeds = 3;
  std::vector<double> prune_ratios{0.1, 0.2, 0.3};
  ScoreMethod prune_method = ScoreMethod::adam_ghost;
  std::vector<std::size_t> batch_sizes{8, 16, 32, 64};
  std::size_t repetitions = 5;
  std::size_t warmup_steps = 1;
  std::size_t timed_steps = 3;
  std::size_t stress_steps = 10;
  std::size_t stress_samples = 50;
  bool recheck_oracle = false;

  // [dataset]
  DataSpec data;             // data.seed is derived from `seed`, never read from the file
  std::string data_path;     // CSV dataset; replaces the generator when set

  // [model]
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::relu;
  bool bias = true;

  // [optimizer]
  OptimizerKind optimizer = OptimizerKind::adam;
  double eta = 1e-4;
  double sgd_eta = 0.1;  // learning rate of SGD arms when an experiment runs both optimizers
  double momentum = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool bias_correction = true;
  std::size_t steps = 200;
  std::size_t batch_size = 16;  // 0 = full batch where an experiment allows it

  // [attribution]
  std::vector<ScoreMethod> methods{ScoreMethod::sgd_first_order, ScoreMethod::adam_exact, ScoreMethod::adam_ghost};
  bool include_history = true;
  std::size_t val_samples = 0;  // 0 = every validation row

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Dataset named by the config (CSV or generated from the derived seed).
Dataset load_dataset(const ExperimentConfig& cfg);
ModelSpec model_spec(const ExperimentConfig& cfg, const Dataset& data);
TrainerConfig trainer_config(const ExperimentConfig& cfg, const ModelSpec& spec, OptimizerKind kind,
                             std::uint64_t init_seed);

/// FNV-1a 64 of the canonical serialization, output_dir excluded.
std::string config_hash(const ExperimentConfig& cfg);

struct FidelityRow {
  std::int64_t step = 0;
  std::size_t sample_id = 0;
  ScoreMethod method = ScoreMethod::adam_exact;
  double predicted = 0.0;
  double actual = 0.0;
};

struct FidelityResult {
  std::vector<FidelityRow> rows;
  std::map<ScoreMethod, CorrelationReport> correlations;
  double recheck_max_gap = 0.0;  // filled when recheck_oracle is on
  std::vector<std::string> files;
};

struct SweepRow {
  double eta = 0.0;
  ScoreMethod method = ScoreMethod::adam_exact;
  double pearson = 0.0;
  double spearman = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::string> files;
};

struct DependenceTriple {
  std::vector<double> first, second;          // arm values, permutation seed a
  std::vector<double> first_alt, second_alt;  // same arms, permutation seed b
  CorrelationReport cross;                    // first vs second
  double same_pearson = 0.0;                  // mean of first/first_alt and second/second_alt
  double same_spearman = 0.0;
};

struct DependenceResult {
  std::vector<DependenceTriple> triples;
  std::vector<std::string> files;
};

struct PruningRow {
  double ratio = 0.0;
  std::string strategy;  // bottom, random, top
  std::size_t seed = 0;
  double val_accuracy = 0.0;
};

struct PruningResult {
  std::vector<PruningRow> rows;
  std::vector<double> flipped_in_bottom;  // per seed: share of flipped rows in the bottom 20% of values
  double baseline_accuracy(std::size_t seed) const;
  double mean_accuracy(double ratio, const std::string& strategy) const;
  std::vector<std::string> files;
};

struct EfficiencyRow {
  std::string mode;  // standard, ghost, direct
  std::size_t batch_size = 0;
  double seconds_per_step = 0.0;
  double sps = 0.0;
  std::size_t peak_extra_bytes = 0;
  std::size_t largest_buffer_bytes = 0;
  std::size_t param_count = 0;
  std::size_t widest = 0;
};

struct EfficiencyResult {
  std::vector<EfficiencyRow> rows;
  std::map<std::string, LinearFit> time_fits;  // per mode: seconds per step vs batch size
  const EfficiencyRow& at(const std::string& mode, std::size_t batch_size) const;
  std::vector<std::string> files;
};

/// Percentiles of |u|, u = m_hat / (sqrt(v_hat) + eps), after step `step`.
struct DiagnosticsRecord {
  std::int64_t step = 0;
  double p10 = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
};

DiagnosticsRecord perturbation_percentiles(const AdamState& state);

struct DiagnosticsResult {
  std::vector<DiagnosticsRecord> records;
  std::vector<std::size_t> stress_ids;
  std::vector<double> stress_ghost, stress_exact;  // per-sample totals over the stress window
  CorrelationReport stress;
  std::vector<std::string> files;
};

FidelityResult run_fidelity(const ExperimentConfig& cfg);
SweepResult run_lr_sweep(const ExperimentConfig& cfg);
DependenceResult run_optimizer_dependence(const ExperimentConfig& cfg);
PruningResult run_pruning(const ExperimentConfig& cfg);
EfficiencyResult run_efficiency(const ExperimentConfig& cfg);
DiagnosticsResult run_diagnostics(const ExperimentConfig& cfg);

}  // namespace inrun
