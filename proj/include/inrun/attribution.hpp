#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "inrun/model.hpp"
#include "inrun/optim.hpp"

namespace inrun {

// Per-step In-Run Shapley scores. Every score is a first-order estimate of the
// change in validation loss caused by one sample's share of the step, so a
// negative score means the sample helped.

enum class ScoreMethod { sgd_first_order, adam_exact, adam_ghost };
std::string to_string(ScoreMethod m);
ScoreMethod parse_method(const std::string& s);

/// Validation-side gradient: the per-layer trace of the V validation samples
/// and, optionally, their materialized mean gradient (the ghost paths never
/// read it).
struct ValGradient {
  BatchTrace trace;
  std::optional<Params> gradient;

  static ValGradient compute(const ModelSpec& spec, const Params& params, const Batch& val_batch,
                             bool materialize = true);
  const Params& materialized() const;
};

/// Dense per-sample gradient delta_i a_i^T (plus bias rows) rebuilt from a trace.
Params reconstruct_gradient(const ParamLayout& layout, const BatchTrace& trace, std::size_t sample);

/// <g_i, g_val> for every sample from error and activation correlations.
std::vector<double> ghost_pairwise_dot(const BatchTrace& trace, const ValGradient& val);

/// <g_i, u> for every sample as sum_l delta_i^T U^(l) a_i, u Params-shaped.
std::vector<double> ghost_weighted_dot(const BatchTrace& trace, const Params& u);

/// -eta * <g_i, g_val>.
std::vector<double> sgd_inrun_scores(const BatchTrace& trace, const ValGradient& val, double eta);

/// The Adam scalars for the upcoming step t = state.step + 1 together with
/// views of the shared history. A and m_{t-1} are not copied: A_k is computed
/// on demand from v_{t-1}, so building coefficients allocates nothing.
class GhostCoefficients {
 public:
  explicit GhostCoefficients(const AdamState& state);

  double c_m1 = 0.0;  // beta1 / (1 - beta1^t)
  double c_m2 = 0.0;  // (1 - beta1) / (1 - beta1^t)
  double c_v = 0.0;   // (1 - beta2) / (1 - beta2^t)
  double epsilon = 0.0;
  std::int64_t t = 0;

  /// A_k = sqrt(v_hat_{t-1,k}) + eps, v_hat_{t-1} = v_{t-1} / (1 - beta2^{t-1}) (0 at t = 1).
  double preconditioner(std::size_t k) const;
  double history(std::size_t k) const { return history_[k]; }
  const ParamLayout& layout() const { return *layout_; }
  std::size_t size() const { return history_.size(); }

  Params materialize_preconditioner() const;

 private:
  const ParamLayout* layout_;
  std::span<const double> history_;
  std::span<const double> second_moment_;
  double v_correction_ = 1.0;
};

enum class ExactVariant {
  closed_form,            // m_hat_t(z) / (sqrt(v_hat_t(z)) + eps)
  frozen_preconditioner,  // m_hat_t(z) / A: second moment held at history
  untruncated_linear,     // (1/A - C_v g^2 / (2 A^3)) * m_hat_t(z), quadratic term kept
};

/// Reference Adam scores. The per-sample perturbation is g(z)/B applied to the
/// shared pre-step moments; per-sample gradients are materialized one at a time.
std::vector<double> adam_exact_scores(const BatchTrace& trace, const ValGradient& val, const AdamState& state,
                                      double eta, std::size_t batch_size,
                                      ExactVariant variant = ExactVariant::closed_form);

/// -eta * <g_val, C_m1 m_{t-1} / A>, shared by every sample of the step.
double ghost_history_term(const ValGradient& val, const GhostCoefficients& coeffs, double eta);

struct GhostOptions {
  // Drop the shared history term (it cancels in within-step rankings).
  bool include_history = true;
};

/// Linearized scores: history term + -eta/B * <g(z), (C_m2 / A) * g_val>.
/// Streams the preconditioned validation gradient in row blocks; no
/// Params-sized or per-sample-gradient buffer is allocated.
std::vector<double> adam_ghost_scores(const BatchTrace& trace, const ValGradient& val,
                                      const GhostCoefficients& coeffs, double eta, std::size_t batch_size,
                                      const GhostOptions& options = {});

/// Naive baseline: per-sample backward passes, all B gradients and a private
/// copy of the optimizer moments per sample. O(B * P) memory.
std::vector<double> adam_direct_scores(const ModelSpec& spec, const Params& params, const Batch& batch,
                                       const ValGradient& val, const AdamState& state, double eta);

struct LedgerRecord {
  std::int64_t step = 0;
  std::size_t sample_id = 0;
  ScoreMethod method = ScoreMethod::sgd_first_order;
  double score = 0.0;
};

/// Running phi_z per method, summed over steps.
class AttributionLedger {
 public:
  explicit AttributionLedger(std::size_t num_samples, bool keep_records = true);

  void accumulate(std::int64_t step, ScoreMethod method, std::span<const std::size_t> sample_ids,
                  std::span<const double> scores);

  double total(std::size_t sample_id, ScoreMethod method) const;
  std::vector<double> totals(ScoreMethod method) const;
  const std::vector<LedgerRecord>& records() const { return records_; }
  /// Number of distinct steps seen.
  std::size_t steps() const { return steps_seen_.size(); }
  std::size_t num_samples() const { return num_samples_; }

 private:
  std::size_t num_samples_;
  bool keep_records_;
  std::map<ScoreMethod, std::vector<double>> totals_;
  std::vector<LedgerRecord> records_;
  std::set<std::int64_t> steps_seen_;
};

}  // namespace inrun
