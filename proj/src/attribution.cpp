#include "inrun/attribution.hpp"

#include <algorithm>
#include <cmath>

#include "inrun/alloc.hpp"
#include "inrun/error.hpp"
#include "inrun/kernels.hpp"

namespace inrun {

std::string to_string(ScoreMethod m) {
  switch (m) {
    case ScoreMethod::sgd_first_order: return "sgd_first_order";
    case ScoreMethod::adam_exact: return "adam_exact";
    case ScoreMethod::adam_ghost: return "adam_ghost";
  }
  return "?";
}

ScoreMethod parse_method(const std::string& s) {
  if (s == "sgd_first_order") return ScoreMethod::sgd_first_order;
  if (s == "adam_exact") return ScoreMethod::adam_exact;
  if (s == "adam_ghost") return ScoreMethod::adam_ghost;
  throw ConfigError("unknown attribution method '" + s + "'");
}

ValGradient ValGradient::compute(const ModelSpec& spec, const Params& params, const Batch& val_batch,
                                 bool materialize) {
  auto res = backward_with_trace(spec, params, val_batch);
  ValGradient v;
  v.trace = std::move(res.trace);
  if (materialize) v.gradient = std::move(res.mean_grad);
  return v;
}

const Params& ValGradient::materialized() const {
  if (!gradient) throw Error("validation gradient was not materialized");
  return *gradient;
}

namespace {

void check_compatible(const BatchTrace& a, const BatchTrace& b) {
  if (a.num_layers() != b.num_layers() || a.bias != b.bias) throw DimensionError("trace architectures differ");
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    if (a.activations[l].cols() != b.activations[l].cols() || a.errors[l].cols() != b.errors[l].cols())
      throw DimensionError("trace architectures differ at layer " + std::to_string(l));
  }
}

void check_layout(const BatchTrace& trace, const ParamLayout& layout) {
  if (trace.num_layers() != layout.num_layers()) throw DimensionError("trace and parameter layout differ in depth");
  for (std::size_t l = 0; l < trace.num_layers(); ++l) {
    const auto& s = layout.layer(l);
    if (trace.activations[l].cols() != s.cols || trace.errors[l].cols() != s.rows || trace.bias != s.bias)
      throw DimensionError("trace and parameter layout differ at layer " + std::to_string(l));
  }
}

}  // namespace

Params reconstruct_gradient(const ParamLayout& layout, const BatchTrace& trace, std::size_t sample) {
  check_layout(trace, layout);
  if (sample >= trace.batch_size()) throw DimensionError("sample index out of range");
  Params g(layout);
  for (std::size_t l = 0; l < layout.num_layers(); ++l) {
    const auto& s = layout.layer(l);
    auto e = trace.errors[l].row(sample);
    auto a = trace.activations[l].row(sample);
    auto w = g.weight(l);
    for (std::size_t r = 0; r < s.rows; ++r)
      for (std::size_t c = 0; c < s.cols; ++c) w[r * s.cols + c] = e[r] * a[c];
    if (s.bias) std::copy(e.begin(), e.end(), g.bias(l).begin());
  }
  return g;
}

std::vector<double> ghost_pairwise_dot(const BatchTrace& trace, const ValGradient& val) {
  check_compatible(trace, val.trace);
  const std::size_t B = trace.batch_size();
  const std::size_t V = val.trace.batch_size();
  TrackedBuffer out(B);
  for (std::size_t l = 0; l < trace.num_layers(); ++l) {
    kernels::parallel::ghost_pair_layer(B, V, trace.activations[l].cols(), trace.errors[l].cols(),
                                        trace.activations[l].data().data(), trace.errors[l].data().data(),
                                        val.trace.activations[l].data().data(), val.trace.errors[l].data().data(),
                                        trace.bias, out.data());
  }
  return out.to_vector();
}

std::vector<double> ghost_weighted_dot(const BatchTrace& trace, const Params& u) {
  check_layout(trace, u.layout());
  const std::size_t B = trace.batch_size();
  TrackedBuffer out(B);
  for (std::size_t l = 0; l < trace.num_layers(); ++l) {
    const auto& s = u.layout().layer(l);
    kernels::parallel::ghost_weighted_block(B, s.cols, s.rows, 0, s.rows, trace.activations[l].data().data(),
                                            trace.errors[l].data().data(), u.weight(l).data(),
                                            s.bias ? u.bias(l).data() : nullptr, out.data());
  }
  return out.to_vector();
}

std::vector<double> sgd_inrun_scores(const BatchTrace& trace, const ValGradient& val, double eta) {
  auto dots = ghost_pairwise_dot(trace, val);
  for (auto& d : dots) d *= -eta;
  return dots;
}

GhostCoefficients::GhostCoefficients(const AdamState& state)
    : layout_(&state.m.layout()), history_(state.m.flat()), second_moment_(state.v.flat()) {
  t = state.step + 1;
  epsilon = state.epsilon;
  const double c1 = state.bias_correction ? bias_correction_factor(state.beta1, t) : 1.0;
  const double c2 = state.bias_correction ? bias_correction_factor(state.beta2, t) : 1.0;
  c_m1 = state.beta1 / c1;
  c_m2 = (1.0 - state.beta1) / c1;
  c_v = (1.0 - state.beta2) / c2;
  // bias_correction_factor(beta, 0) == 1 and v_0 == 0, so A = eps at t = 1.
  v_correction_ = state.bias_correction ? bias_correction_factor(state.beta2, state.step) : 1.0;
}

double GhostCoefficients::preconditioner(std::size_t k) const {
  return std::sqrt(second_moment_[k] / v_correction_) + epsilon;
}

Params GhostCoefficients::materialize_preconditioner() const {
  Params a(*layout_);
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = preconditioner(k);
  return a;
}

std::vector<double> adam_exact_scores(const BatchTrace& trace, const ValGradient& val, const AdamState& state,
                                      double eta, std::size_t batch_size, ExactVariant variant) {
  const Params& gval = val.materialized();
  const ParamLayout& layout = gval.layout();
  check_layout(trace, layout);
  gval.require_same_layout(state.m, "adam_exact_scores");
  if (batch_size == 0) throw DimensionError("batch size must be positive");

  const GhostCoefficients coeffs(state);
  const std::int64_t t = state.step + 1;
  const double c1 = state.bias_correction ? bias_correction_factor(state.beta1, t) : 1.0;
  const double c2 = state.bias_correction ? bias_correction_factor(state.beta2, t) : 1.0;
  const double inv_b = 1.0 / static_cast<double>(batch_size);
  const std::size_t B = trace.batch_size();
  const std::size_t P = layout.size();

  std::vector<double> scores(B, 0.0);
  const auto n = static_cast<long long>(B);
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const Params g = reconstruct_gradient(layout, trace, i);
    double acc = 0.0;
    for (std::size_t k = 0; k < P; ++k) {
      const double gh = g[k] * inv_b;
      const double m_t = state.beta1 * state.m[k] + (1.0 - state.beta1) * gh;
      double u = 0.0;
      switch (variant) {
        case ExactVariant::closed_form: {
          const double v_t = state.beta2 * state.v[k] + (1.0 - state.beta2) * gh * gh;
          u = (m_t / c1) / (std::sqrt(v_t / c2) + state.epsilon);
          break;
        }
        case ExactVariant::frozen_preconditioner:
          u = (m_t / c1) / coeffs.preconditioner(k);
          break;
        case ExactVariant::untruncated_linear: {
          const double a = coeffs.preconditioner(k);
          u = (1.0 / a - coeffs.c_v * gh * gh / (2.0 * a * a * a)) * (m_t / c1);
          break;
        }
      }
      acc += gval[k] * u;
    }
    scores[i] = -eta * acc;
  }
  for (double s : scores)
    if (!std::isfinite(s)) throw NumericError("non-finite adam_exact score");
  return scores;
}

namespace {

// Row j of the mean validation gradient for layer l, written into `row`.
// Bias entry (when present) returned separately.
double val_gradient_row(const BatchTrace& val, std::size_t l, std::size_t j, std::span<double> row) {
  const auto& acts = val.activations[l];
  const auto& errs = val.errors[l];
  const std::size_t V = val.batch_size();
  const double inv_v = 1.0 / static_cast<double>(V);
  std::fill(row.begin(), row.end(), 0.0);
  double bias = 0.0;
  for (std::size_t v = 0; v < V; ++v) {
    const double e = errs.at(v, j) * inv_v;
    auto a = acts.row(v);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += e * a[c];
    bias += e;
  }
  return bias;
}

}  // namespace

double ghost_history_term(const ValGradient& val, const GhostCoefficients& coeffs, double eta) {
  const ParamLayout& layout = coeffs.layout();
  check_layout(val.trace, layout);
  double h = 0.0;
  std::size_t widest = 0;
  for (const auto& s : layout.layers()) widest = std::max(widest, s.cols);
  TrackedBuffer row(widest);
  for (std::size_t l = 0; l < layout.num_layers(); ++l) {
    const auto& s = layout.layer(l);
    auto r = row.span().first(s.cols);
    for (std::size_t j = 0; j < s.rows; ++j) {
      const double gb = val_gradient_row(val.trace, l, j, r);
      const std::size_t base = s.weight_offset + j * s.cols;
      for (std::size_t c = 0; c < s.cols; ++c) h += r[c] * coeffs.c_m1 * coeffs.history(base + c) / coeffs.preconditioner(base + c);
      if (s.bias) {
        const std::size_t k = s.bias_offset + j;
        h += gb * coeffs.c_m1 * coeffs.history(k) / coeffs.preconditioner(k);
      }
    }
  }
  return -eta * h;
}

std::vector<double> adam_ghost_scores(const BatchTrace& trace, const ValGradient& val,
                                      const GhostCoefficients& coeffs, double eta, std::size_t batch_size,
                                      const GhostOptions& options) {
  const ParamLayout& layout = coeffs.layout();
  check_layout(trace, layout);
  check_compatible(trace, val.trace);
  if (batch_size == 0) throw DimensionError("batch size must be positive");
  const std::size_t B = trace.batch_size();

  // Rows of the preconditioned validation gradient are built block by block;
  // a block never exceeds B rows, which keeps scratch at O(B * widest).
  std::size_t widest = 0;
  for (const auto& s : layout.layers()) widest = std::max(widest, s.cols);
  const std::size_t block = std::max<std::size_t>(1, B);
  TrackedBuffer u_rows(block * widest);
  TrackedBuffer u_bias(block);
  TrackedBuffer linear(B);
  double history = 0.0;

  for (std::size_t l = 0; l < layout.num_layers(); ++l) {
    const auto& s = layout.layer(l);
    for (std::size_t r0 = 0; r0 < s.rows; r0 += block) {
      const std::size_t rows = std::min(block, s.rows - r0);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t j = r0 + r;
        auto row = u_rows.span().subspan(r * s.cols, s.cols);
        const double gb = val_gradient_row(val.trace, l, j, row);
        const std::size_t base = s.weight_offset + j * s.cols;
        for (std::size_t c = 0; c < s.cols; ++c) {
          const double a = coeffs.preconditioner(base + c);
          history += row[c] * coeffs.c_m1 * coeffs.history(base + c) / a;
          row[c] *= coeffs.c_m2 / a;
        }
        if (s.bias) {
          const std::size_t k = s.bias_offset + j;
          const double a = coeffs.preconditioner(k);
          history += gb * coeffs.c_m1 * coeffs.history(k) / a;
          u_bias[r] = gb * coeffs.c_m2 / a;
        }
      }
      kernels::parallel::ghost_weighted_block(B, s.cols, s.rows, r0, rows, trace.activations[l].data().data(),
                                              trace.errors[l].data().data(), u_rows.data(),
                                              s.bias ? u_bias.data() : nullptr, linear.data());
    }
  }

  const double shared = options.include_history ? -eta * history : 0.0;
  const double scale = -eta / static_cast<double>(batch_size);
  std::vector<double> scores(B);
  for (std::size_t i = 0; i < B; ++i) {
    scores[i] = shared + scale * linear[i];
    if (!std::isfinite(scores[i])) throw NumericError("non-finite adam_ghost score");
  }
  return scores;
}

std::vector<double> adam_direct_scores(const ModelSpec& spec, const Params& params, const Batch& batch,
                                       const ValGradient& val, const AdamState& state, double eta) {
  const Params& gval = val.materialized();
  const std::size_t B = batch.size();
  const std::size_t P = params.size();
  const double inv_b = 1.0 / static_cast<double>(B);

  // Sequential single-sample backward passes, every gradient kept.
  TrackedBuffer grads(B * P);
  for (std::size_t i = 0; i < B; ++i) {
    const std::size_t row = i;
    Batch one;
    one.features = Tensor({1, batch.features.cols()});
    std::copy_n(batch.features.row(row).begin(), batch.features.cols(), one.features.row(0).begin());
    if (!batch.classes.empty()) one.classes = {batch.classes[row]};
    if (batch.targets.size()) {
      one.targets = Tensor({1, batch.targets.cols()});
      std::copy_n(batch.targets.row(row).begin(), batch.targets.cols(), one.targets.row(0).begin());
    }
    const auto g = backward_with_trace(spec, params, one).mean_grad;
    std::copy(g.flat().begin(), g.flat().end(), grads.data() + i * P);
  }

  // Independent optimizer state per sample, stepped with that sample's share.
  std::vector<double> scores(B);
  TrackedBuffer m(P);
  TrackedBuffer v(P);
  const std::int64_t t = state.step + 1;
  const double c1 = state.bias_correction ? bias_correction_factor(state.beta1, t) : 1.0;
  const double c2 = state.bias_correction ? bias_correction_factor(state.beta2, t) : 1.0;
  for (std::size_t i = 0; i < B; ++i) {
    std::copy(state.m.flat().begin(), state.m.flat().end(), m.data());
    std::copy(state.v.flat().begin(), state.v.flat().end(), v.data());
    const double* g = grads.data() + i * P;
    double acc = 0.0;
    for (std::size_t k = 0; k < P; ++k) {
      const double gh = g[k] * inv_b;
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * gh;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * gh * gh;
      acc += gval[k] * (m[k] / c1) / (std::sqrt(v[k] / c2) + state.epsilon);
    }
    scores[i] = -eta * acc;
  }
  return scores;
}

AttributionLedger::AttributionLedger(std::size_t num_samples, bool keep_records)
    : num_samples_(num_samples), keep_records_(keep_records) {}

void AttributionLedger::accumulate(std::int64_t step, ScoreMethod method, std::span<const std::size_t> sample_ids,
                                   std::span<const double> scores) {
  if (sample_ids.size() != scores.size()) throw DimensionError("ledger: ids and scores differ in length");
  for (auto id : sample_ids)
    if (id >= num_samples_) throw DimensionError("ledger: unknown sample id " + std::to_string(id));
  auto& totals = totals_[method];
  if (totals.empty()) totals.assign(num_samples_, 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    totals[sample_ids[i]] += scores[i];
    if (keep_records_) records_.push_back({step, sample_ids[i], method, scores[i]});
  }
  steps_seen_.insert(step);
}

double AttributionLedger::total(std::size_t sample_id, ScoreMethod method) const {
  if (sample_id >= num_samples_) throw DimensionError("ledger: unknown sample id " + std::to_string(sample_id));
  auto it = totals_.find(method);
  return it == totals_.end() ? 0.0 : it->second[sample_id];
}

std::vector<double> AttributionLedger::totals(ScoreMethod method) const {
  auto it = totals_.find(method);
  return it == totals_.end() ? std::vector<double>(num_samples_, 0.0) : it->second;
}

}  // namespace inrun
