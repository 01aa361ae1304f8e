#include <cmath>

#include "doctest.h"
#include "inrun/error.hpp"
#include "inrun/optim.hpp"
#include "test_util.hpp"

using namespace inrun;
using namespace inrun::testing;

namespace {

ModelSpec scalar_spec() { return ModelSpec{{1, 1}, Activation::identity, LossKind::mse, false}; }

Params scalar(double x) { return Params(ParamLayout(scalar_spec()), {x}); }

}  // namespace

TEST_CASE("sgd: null update and scalar arithmetic") {
  auto s = make_sgd(scalar(0).layout(), 0.1);
  Params w = scalar(1.0);
  sgd_step(w, s, scalar(0.0));
  CHECK(w[0] == 1.0);
  sgd_step(w, s, scalar(2.0));
  CHECK(w[0] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("sgd: momentum recursion 1 -> 0.9 -> 0.71") {
  auto s = make_sgd(scalar(0).layout(), 0.1, 0.9);
  Params w = scalar(1.0);
  sgd_step(w, s, scalar(1.0));
  CHECK(w[0] == doctest::Approx(0.9).epsilon(1e-15));
  sgd_step(w, s, scalar(1.0));
  CHECK(w[0] == doctest::Approx(0.71).epsilon(1e-15));
}

TEST_CASE("sgd: shape mismatch and non-finite gradient") {
  ModelSpec two{{2, 1}, Activation::identity, LossKind::mse, false};
  auto s = make_sgd(scalar(0).layout(), 0.1);
  Params w = scalar(1.0);
  CHECK_THROWS_AS(sgd_step(w, s, Params(ParamLayout(two))), DimensionError);
  CHECK_THROWS_AS(sgd_step(w, s, scalar(NAN)), NumericError);
  CHECK_THROWS_AS(make_sgd(w.layout(), 0.0), ConfigError);
  CHECK_THROWS_AS(make_sgd(w.layout(), 0.1, 1.0), ConfigError);
}

TEST_CASE("adam: zero gradient from zero state leaves params unchanged") {
  auto s = make_adam(scalar(0).layout(), 0.1);
  Params w = scalar(1.0);
  adam_step(w, s, scalar(0.0));
  CHECK(w[0] == 1.0);
  CHECK(s.step == 1);
}

TEST_CASE("adam: first step hand values with and without bias correction") {
  auto s = make_adam(scalar(0).layout(), 0.1, 0.9, 0.999, 1e-8, true);
  Params w = scalar(1.0);
  adam_step(w, s, scalar(0.5));
  CHECK(s.m[0] == doctest::Approx(0.05).epsilon(1e-14));
  CHECK(s.v[0] == doctest::Approx(0.00025).epsilon(1e-14));
  CHECK(w[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
  CHECK(std::abs(w[0] - 0.9) < 1e-8);

  auto raw = make_adam(scalar(0).layout(), 0.1, 0.9, 0.999, 1e-8, false);
  Params w2 = scalar(1.0);
  adam_step(w2, raw, scalar(0.5));
  CHECK(w2[0] == doctest::Approx(1.0 - 0.1 * 0.05 / (std::sqrt(0.00025) + 1e-8)).epsilon(1e-14));
  CHECK(std::abs(w2[0] - 0.6838) < 1e-4);
}

TEST_CASE("adam: first update has magnitude ~eta and opposite sign") {
  Rng rng(31);
  for (int i = 0; i < 100; ++i) {
    const double g = (rng.uniform() - 0.5) * std::pow(10.0, 4.0 * rng.uniform() - 2.0);
    if (g == 0.0) continue;
    auto s = make_adam(scalar(0).layout(), 0.01);
    Params w = scalar(0.0);
    adam_step(w, s, scalar(g));
    const double expected = 0.01 * std::abs(g) / (std::abs(g) + 1e-8);
    CHECK(std::abs(std::abs(w[0]) - expected) <= 1e-15);
    CHECK((w[0] < 0) == (g > 0));
    CHECK(s.v[0] >= 0.0);
  }
}

TEST_CASE("adam: v stays non-negative and t counts steps") {
  Rng rng(32);
  ModelSpec spec{{4, 3}, Activation::identity, LossKind::mse, true};
  Params w = random_params(spec, rng);
  auto s = make_adam(w.layout(), 1e-2);
  for (int t = 1; t <= 30; ++t) {
    Params g = Params::zeros_like(w);
    for (auto& x : g.flat()) x = 3.0 * rng.gaussian();
    adam_step(w, s, g);
    CHECK(s.step == t);
    for (double v : s.v.flat()) CHECK(v >= 0.0);
  }
}

TEST_CASE("adam: beta=0 with large eps moves along -g") {
  auto s = make_adam(scalar(0).layout(), 0.1, 0.0, 0.0, 1e6, true);
  Params w = scalar(0.0);
  adam_step(w, s, scalar(-3.0));
  CHECK(w[0] > 0.0);
  CHECK(w[0] == doctest::Approx(0.1 * 3.0 / (3.0 + 1e6)));
}

TEST_CASE("snapshot and restore replay bit-identical trajectories") {
  Rng rng(33);
  ModelSpec spec{{3, 5, 2}, Activation::tanh, LossKind::softmax_cross_entropy, true};
  Params w = random_params(spec, rng);
  OptimizerState st = make_adam(w.layout(), 1e-2);
  Batch b1 = random_batch(spec, rng, 6), b2 = random_batch(spec, rng, 6);

  auto run = [&](Params p, OptimizerState s, const Batch& b, int steps) {
    for (int i = 0; i < steps; ++i) optimizer_step(p, s, backward_with_trace(spec, p, b).mean_grad);
    return p;
  };

  Params mid = run(w, st, b1, 0);
  OptimizerState s_mid = st;
  for (int i = 0; i < 50; ++i) optimizer_step(mid, s_mid, backward_with_trace(spec, mid, b1).mean_grad);
  CHECK(std::get<AdamState>(s_mid).step == 50);
  const StateSnapshot snap = snapshot(mid, s_mid);

  auto [p1, s1] = restore(snap);
  auto [p2, s2] = restore(snap);
  const Params a = run(p1, s1, b1, 10);
  const Params b = run(p2, s2, b1, 10);
  CHECK(a == b);
  const Params c = run(snap.params, snap.state, b2, 10);
  CHECK_FALSE(a == c);
  CHECK(run(snap.params, snap.state, b2, 10) == c);
  CHECK(snap.params == mid);

  // one step after restore equals one step taken directly
  Params direct = mid;
  OptimizerState sd = s_mid;
  optimizer_step(direct, sd, backward_with_trace(spec, direct, b1).mean_grad);
  CHECK(run(snap.params, snap.state, b1, 1) == direct);
}

TEST_CASE("effective update at t = 1 is sign(g) up to eps") {
  Rng rng(34);
  ModelSpec spec{{5, 4}, Activation::identity, LossKind::mse, true};
  Params w = random_params(spec, rng);
  auto s = make_adam(w.layout(), 1e-3);
  Params g = Params::zeros_like(w);
  for (auto& x : g.flat()) x = rng.gaussian();
  g[0] = 0.0;
  adam_step(w, s, g);
  const Params u = effective_update(s);
  CHECK(u[0] == 0.0);
  for (std::size_t k = 1; k < u.size(); ++k) CHECK(std::abs(std::abs(u[k]) - 1.0) <= 1e-6);
}

TEST_CASE("bias correction factor") {
  CHECK(bias_correction_factor(0.9, 0) == 1.0);
  CHECK(bias_correction_factor(0.9, 1) == doctest::Approx(0.1));
  CHECK(bias_correction_factor(0.9, 2) == doctest::Approx(0.19));
}
