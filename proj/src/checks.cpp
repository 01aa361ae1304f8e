#include "inrun/checks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "inrun/attribution.hpp"
#include "inrun/error.hpp"
#include "inrun/oracle.hpp"

namespace inrun {

namespace {

double vec_rel_err(const std::vector<double>& got, const std::vector<double>& want) {
  double scale = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) {
    scale = std::max(scale, std::abs(want[i]));
    diff = std::max(diff, std::abs(got[i] - want[i]));
  }
  return scale == 0.0 ? diff : diff / scale;
}

ModelSpec random_spec(Rng& rng) {
  ModelSpec spec;
  const std::size_t layers = 1 + rng.below(3);
  spec.layer_dims.push_back(1 + rng.below(7));
  for (std::size_t l = 0; l + 1 < layers; ++l) spec.layer_dims.push_back(1 + rng.below(7));
  const auto act = rng.below(3);
  spec.activation = act == 0 ? Activation::relu : act == 1 ? Activation::tanh : Activation::identity;
  spec.bias = rng.below(2) == 1;
  if (rng.below(2) == 0) {
    spec.loss = LossKind::softmax_cross_entropy;
    spec.layer_dims.push_back(2 + rng.below(3));
  } else {
    spec.loss = LossKind::mse;
    spec.layer_dims.push_back(1 + rng.below(3));
  }
  return spec;
}

Batch random_batch(const ModelSpec& spec, Rng& rng, std::size_t n) {
  Batch b;
  b.features = gaussian(rng, {n, spec.input_dim()});
  if (spec.loss == LossKind::softmax_cross_entropy) {
    for (std::size_t i = 0; i < n; ++i) b.classes.push_back(static_cast<int>(rng.below(spec.output_dim())));
  } else {
    b.targets = gaussian(rng, {n, spec.output_dim()});
  }
  return b;
}

Params random_params(const ModelSpec& spec, Rng& rng) {
  Params p = init_params(spec, rng);
  for (auto& x : p.flat()) x += 0.1 * rng.gaussian();
  return p;
}

double flat_dot(const Params& a, const Params& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

AdamState warmed_adam(const ModelSpec& spec, const Params& params, Rng& rng, int steps) {
  AdamState s = make_adam(params.layout(), 1e-3);
  Params scratch = params;
  for (int t = 0; t < steps; ++t) adam_step(scratch, s, backward_with_trace(spec, params, random_batch(spec, rng, 8)).mean_grad);
  return s;
}

CheckResult make(std::string name, double observed, double tol, std::string detail) {
  return {std::move(name), observed, tol, observed <= tol, std::move(detail)};
}

}  // namespace

std::vector<CheckResult> run_oracle_checks(std::size_t batch, std::uint64_t seed, std::size_t instances) {
  if (batch < 2 || batch > kMaxExhaustivePlayers)
    throw ConfigError("batch must lie in [2, " + std::to_string(kMaxExhaustivePlayers) + "]");
  if (instances == 0) throw ConfigError("instances must be >= 1");
  const Rng root(seed);
  std::vector<CheckResult> out;

  {
    Rng rng = root.derive({1});
    double pair_worst = 0.0, weighted_worst = 0.0;
    for (std::size_t trial = 0; trial < instances; ++trial) {
      const ModelSpec spec = random_spec(rng);
      const Params params = random_params(spec, rng);
      const Batch b = random_batch(spec, rng, 1 + rng.below(16));
      const auto res = backward_with_trace(spec, params, b);
      const auto val = ValGradient::compute(spec, params, random_batch(spec, rng, 1 + rng.below(4)));
      Params u(params.layout());
      for (auto& x : u.flat()) x = rng.gaussian();
      const auto per = per_sample_gradients(spec, params, b);
      std::vector<double> want_pair, want_weighted;
      for (const auto& g : per) {
        want_pair.push_back(flat_dot(g, val.materialized()));
        want_weighted.push_back(flat_dot(g, u));
      }
      pair_worst = std::max(pair_worst, vec_rel_err(ghost_pairwise_dot(res.trace, val), want_pair));
      weighted_worst = std::max(weighted_worst, vec_rel_err(ghost_weighted_dot(res.trace, u), want_weighted));
    }
    const std::string detail = std::to_string(instances) + " random networks vs materialized gradients";
    out.push_back(make("ghost_pairwise_dot", pair_worst, 1e-10, detail));
    out.push_back(make("ghost_weighted_dot", weighted_worst, 1e-10, detail));
  }

  {
    Rng rng = root.derive({2});
    const ModelSpec spec{{4, 6, 3}, Activation::tanh, LossKind::softmax_cross_entropy, true};
    const Params params = random_params(spec, rng);
    Batch b = random_batch(spec, rng, batch);
    // Rows 0 and 1 are the same sample, so symmetry has something to test.
    std::copy_n(b.features.row(0).begin(), b.features.cols(), b.features.row(1).begin());
    b.classes[1] = b.classes[0];
    const Batch vb = random_batch(spec, rng, 5);
    const double eta = 0.1;
    const auto res = backward_with_trace(spec, params, b);
    const auto val = ValGradient::compute(spec, params, vb);
    std::vector<double> dots;
    for (const auto& g : per_sample_gradients(spec, params, b)) dots.push_back(flat_dot(g, val.materialized()));
    const double B = static_cast<double>(batch);
    auto surrogate = [&](std::uint64_t mask) {
      double s = 0.0;
      for (std::size_t i = 0; i < batch; ++i)
        if (mask & (std::uint64_t{1} << i)) s += dots[i] / B;
      return -eta * s;
    };
    const auto est = exhaustive_shapley(batch, surrogate);
    const auto sgd = sgd_inrun_scores(res.trace, val, eta / B);
    double gap = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
      gap = std::max(gap, std::abs(est.values[i] - sgd[i]));
      sum += est.values[i];
    }
    const std::string players = std::to_string(batch) + " players";
    out.push_back(make("surrogate_shapley_equals_sgd_scores", gap, 1e-9, players + ", absolute"));
    out.push_back(make("shapley_efficiency", std::abs(sum - surrogate((std::uint64_t{1} << batch) - 1)), 1e-9, players));
    out.push_back(make("shapley_symmetry", std::abs(est.values[0] - est.values[1]), 1e-9, players + ", rows 0 and 1 equal"));

    // Same axioms on the true one-step utility, which is not additive.
    const OneStepUtility truth(spec, snapshot(params, OptimizerState(make_adam(params.layout(), 1e-2))), b, vb);
    const auto exact = exhaustive_shapley(truth);
    double esum = 0.0;
    for (double v : exact.values) esum += v;
    out.push_back(make("one_step_efficiency", std::abs(esum - truth.of_mask((std::uint64_t{1} << batch) - 1)), 1e-9,
                       players + ", adam one-step utility"));
    out.push_back(make("one_step_symmetry", std::abs(exact.values[0] - exact.values[1]), 1e-9,
                       players + ", adam one-step utility"));

    const OneStepUtility again(spec, truth.snapshot(), b, vb);
    double iso = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
      const std::size_t subset[1] = {i};
      iso = std::max(iso, std::abs(again(subset) - truth(subset)));
    }
    out.push_back(make("snapshot_isolation", iso, 1e-12, "second oracle invocation"));
  }

  {
    Rng rng = root.derive({3});
    double worst = 0.0;
    for (int trial = 0; trial < 30; ++trial) {
      const ModelSpec spec{{5, 7, 3}, Activation::relu, LossKind::softmax_cross_entropy, true};
      const Params params = random_params(spec, rng);
      const Batch b = random_batch(spec, rng, 1 + rng.below(16));
      const auto res = backward_with_trace(spec, params, b);
      const auto val = ValGradient::compute(spec, params, random_batch(spec, rng, 3));
      const AdamState s = warmed_adam(spec, params, rng, 1 + static_cast<int>(rng.below(10)));
      GhostCoefficients coeffs(s);
      coeffs.c_v = 0.0;
      const auto ghost = adam_ghost_scores(res.trace, val, coeffs, 1e-3, b.size());
      const auto exact = adam_exact_scores(res.trace, val, s, 1e-3, b.size(), ExactVariant::frozen_preconditioner);
      worst = std::max(worst, vec_rel_err(ghost, exact));
    }
    out.push_back(make("ghost_frozen_second_moment", worst, 1e-9, "30 instances, C_v = 0, matched preconditioner"));
  }
  return out;
}

}  // namespace inrun
