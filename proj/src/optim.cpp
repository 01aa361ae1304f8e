#include "inrun/optim.hpp"

#include <cmath>

#include "inrun/error.hpp"

namespace inrun {

namespace {

void check_grad(const Params& params, const Params& grad, const char* what) {
  params.require_same_layout(grad, what);
  if (!grad.all_finite()) throw NumericError(std::string(what) + ": non-finite gradient");
}

}  // namespace

SgdState make_sgd(const ParamLayout& layout, double learning_rate, double momentum) {
  if (!(learning_rate > 0.0)) throw ConfigError("sgd learning rate must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("sgd momentum must lie in [0, 1)");
  return SgdState{learning_rate, momentum, Params(layout)};
}

AdamState make_adam(const ParamLayout& layout, double learning_rate, double beta1, double beta2, double epsilon,
                    bool bias_correction) {
  if (!(learning_rate > 0.0)) throw ConfigError("adam learning rate must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be > 0");
  AdamState s;
  s.learning_rate = learning_rate;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  s.bias_correction = bias_correction;
  s.m = Params(layout);
  s.v = Params(layout);
  return s;
}

void sgd_step(Params& params, SgdState& state, const Params& grad) {
  check_grad(params, grad, "sgd_step");
  if (state.momentum == 0.0) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= state.learning_rate * grad[i];
    return;
  }
  params.require_same_layout(state.velocity, "sgd_step velocity");
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.velocity[i] = state.momentum * state.velocity[i] + grad[i];
    params[i] -= state.learning_rate * state.velocity[i];
  }
}

double bias_correction_factor(double beta, std::int64_t t) {
  if (t <= 0) return 1.0;
  return 1.0 - std::pow(beta, static_cast<double>(t));
}

void adam_step(Params& params, AdamState& state, const Params& grad) {
  check_grad(params, grad, "adam_step");
  params.require_same_layout(state.m, "adam_step m");
  params.require_same_layout(state.v, "adam_step v");
  state.step += 1;
  const double c1 = state.bias_correction ? bias_correction_factor(state.beta1, state.step) : 1.0;
  const double c2 = state.bias_correction ? bias_correction_factor(state.beta2, state.step) : 1.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + s + "'");
}

OptimizerKind kind_of(const OptimizerState& state) {
  return std::holds_alternative<SgdState>(state) ? OptimizerKind::sgd : OptimizerKind::adam;
}

double learning_rate_of(const OptimizerState& state) {
  return std::visit([](const auto& s) { return s.learning_rate; }, state);
}

void optimizer_step(Params& params, OptimizerState& state, const Params& grad) {
  if (auto* s = std::get_if<SgdState>(&state)) {
    sgd_step(params, *s, grad);
  } else {
    adam_step(params, std::get<AdamState>(state), grad);
  }
}

StateSnapshot snapshot(const Params& params, const OptimizerState& state) { return StateSnapshot{params, state}; }

std::pair<Params, OptimizerState> restore(const StateSnapshot& snap) { return {snap.params, snap.state}; }

Params effective_update(const AdamState& state) {
  Params u = Params::zeros_like(state.m);
  const double c1 = state.bias_correction ? bias_correction_factor(state.beta1, state.step) : 1.0;
  const double c2 = state.bias_correction ? bias_correction_factor(state.beta2, state.step) : 1.0;
  for (std::size_t i = 0; i < u.size(); ++i)
    u[i] = (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + state.epsilon);
  return u;
}

}  // namespace inrun
