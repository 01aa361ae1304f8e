#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "inrun/model.hpp"
#include "inrun/optim.hpp"

namespace inrun {

/// Local utility of one optimizer step taken from a frozen snapshot with only
/// the subset S of the batch:  U(S) = l_val(w'(S)) - l_val(w).
///
/// The step consumes sum_{z in S} g(z) / B with B the FULL batch size, so the
/// first-order term is additive over samples. Per-sample gradients are
/// materialized once at construction. Every evaluation starts from a private
/// copy of the snapshot; the snapshot itself is never modified.
class OneStepUtility {
 public:
  OneStepUtility(ModelSpec spec, StateSnapshot snap, Batch batch, Batch val);

  double operator()(std::span<const std::size_t> subset) const;
  /// Subset given as a bitmask over the batch rows (bit i = row i).
  double of_mask(std::uint64_t mask) const;

  std::size_t batch_size() const { return grads_.size(); }
  OptimizerKind kind() const { return kind_of(snap_.state); }
  double loss_before() const { return loss_before_; }
  const std::vector<Params>& sample_gradients() const { return grads_; }
  const StateSnapshot& snapshot() const { return snap_; }

 private:
  double apply(const Params& step_grad) const;

  ModelSpec spec_;
  StateSnapshot snap_;
  Batch val_;
  std::vector<Params> grads_;
  double loss_before_ = 0.0;
};

/// Convenience form: one evaluation of U(S).
double one_step_utility_change(const ModelSpec& spec, const StateSnapshot& snap, const Batch& batch,
                               std::span<const std::size_t> subset, const Batch& val);

struct ShapleyEstimate {
  std::vector<double> values;
  std::vector<double> std_errors;  // per sample; zero for the exhaustive estimator
  std::string estimator;           // "exhaustive" or "tmc"
  std::size_t permutations = 0;
  double truncation_tol = 0.0;
  std::uint64_t seed = 0;
  std::size_t skipped_permutations = 0;
};

inline constexpr std::size_t kMaxExhaustivePlayers = 12;

/// Exact Shapley values of an arbitrary set function on n <= 12 players.
/// The utility is evaluated once per subset, masks in increasing order.
ShapleyEstimate exhaustive_shapley(std::size_t n, const std::function<double(std::uint64_t mask)>& utility);

/// Exact Shapley values of the one-step utility over the batch rows.
ShapleyEstimate exhaustive_shapley(const OneStepUtility& utility);

/// Everything needed to retrain a model from scratch on a subset.
struct TrainerConfig {
  ModelSpec spec;
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool bias_correction = true;
  double momentum = 0.0;
  std::size_t steps = 50;
  std::size_t batch_size = 0;  // 0 = full batch
  std::uint64_t init_seed = 0;
};

OptimizerState make_optimizer(const TrainerConfig& cfg, const ParamLayout& layout);

/// Trains from the config's deterministic initialization on the given rows.
/// Mini-batches (when batch_size > 0) are drawn from a stream keyed by
/// (init_seed, epoch); an empty row set returns the initialization.
/// `on_step` (optional) sees the parameters after every update.
Params train_on(const Dataset& data, std::span<const std::size_t> rows, const TrainerConfig& cfg,
                const std::function<void(std::size_t step, const Params&)>& on_step = {});

enum class TmcUtility {
  final_loss,       // l_val(w_T(S)) - l_val(w_0)
  trajectory_mean,  // mean over t = 1..T of l_val(w_t(S)) - l_val(w_0)
};
std::string to_string(TmcUtility u);
TmcUtility parse_tmc_utility(const std::string& s);

struct TmcOptions {
  std::size_t permutations = 200;
  double truncation_tol = 1e-3;  // <= 0 disables truncation
  std::uint64_t seed = 0;
  TmcUtility utility = TmcUtility::final_loss;
};

/// Retraining utility of a subset of the dataset's training rows.
class RetrainUtility {
 public:
  RetrainUtility(const Dataset& data, TrainerConfig cfg, TmcUtility kind);
  double operator()(std::span<const std::size_t> rows) const;
  const std::vector<std::size_t>& train_rows() const { return train_rows_; }

 private:
  const Dataset* data_;
  TrainerConfig cfg_;
  TmcUtility kind_;
  Batch val_;
  std::vector<std::size_t> train_rows_;
  double base_loss_ = 0.0;
};

/// Truncated Monte Carlo Shapley over the training split. Values are indexed
/// by position in `data.indices(Split::train)`.
ShapleyEstimate tmc_shapley(const Dataset& data, const TrainerConfig& cfg, const TmcOptions& options);

}  // namespace inrun
