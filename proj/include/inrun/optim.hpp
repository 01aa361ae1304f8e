#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>

#include "inrun/model.hpp"

namespace inrun {

struct SgdState {
  double learning_rate = 0.1;
  double momentum = 0.0;
  Params velocity;
};

/// Adam moments plus hyperparameters. `step` counts completed updates, so the
/// next call to adam_step runs update number step + 1.
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool bias_correction = true;
  std::int64_t step = 0;
  Params m;
  Params v;
};

SgdState make_sgd(const ParamLayout& layout, double learning_rate, double momentum = 0.0);
AdamState make_adam(const ParamLayout& layout, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                    double epsilon = 1e-8, bool bias_correction = true);

/// mu = 0: w -= lr * g.  mu > 0: vel = mu * vel + g; w -= lr * vel.
void sgd_step(Params& params, SgdState& state, const Params& grad);
void adam_step(Params& params, AdamState& state, const Params& grad);

enum class OptimizerKind { sgd, adam };
std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& s);

using OptimizerState = std::variant<SgdState, AdamState>;

OptimizerKind kind_of(const OptimizerState& state);
double learning_rate_of(const OptimizerState& state);
void optimizer_step(Params& params, OptimizerState& state, const Params& grad);

/// Deep copy of parameters and optimizer state. Immutable once taken.
struct StateSnapshot {
  Params params;
  OptimizerState state;
};

StateSnapshot snapshot(const Params& params, const OptimizerState& state);
std::pair<Params, OptimizerState> restore(const StateSnapshot& snap);

/// 1 - beta^t, with the t = 0 case defined as 1 so an empty history is not rescaled.
double bias_correction_factor(double beta, std::int64_t t);

/// Elementwise effective update u = m_hat / (sqrt(v_hat) + eps) of the current state.
Params effective_update(const AdamState& state);

}  // namespace inrun
