#include "inrun/oracle.hpp"

#include <bit>
#include <cmath>
#include <iostream>

#include "inrun/error.hpp"
#include "inrun/stats.hpp"

namespace inrun {

OneStepUtility::OneStepUtility(ModelSpec spec, StateSnapshot snap, Batch batch, Batch val)
    : spec_(std::move(spec)), snap_(std::move(snap)), val_(std::move(val)) {
  grads_ = per_sample_gradients(spec_, snap_.params, batch);
  loss_before_ = forward(spec_, snap_.params, val_).mean_loss;
}

double OneStepUtility::apply(const Params& step_grad) const {
  auto [params, state] = restore(snap_);
  optimizer_step(params, state, step_grad);
  return forward(spec_, params, val_).mean_loss - loss_before_;
}

double OneStepUtility::operator()(std::span<const std::size_t> subset) const {
  const double inv_b = 1.0 / static_cast<double>(grads_.size());
  Params g = Params::zeros_like(snap_.params);
  for (auto idx : subset) {
    if (idx >= grads_.size()) throw DimensionError("subset index outside the batch");
    const auto& gi = grads_[idx];
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += gi[k] * inv_b;
  }
  return apply(g);
}

double OneStepUtility::of_mask(std::uint64_t mask) const {
  std::vector<std::size_t> subset;
  for (std::size_t i = 0; i < grads_.size(); ++i)
    if (mask & (std::uint64_t{1} << i)) subset.push_back(i);
  return (*this)(subset);
}

double one_step_utility_change(const ModelSpec& spec, const StateSnapshot& snap, const Batch& batch,
                               std::span<const std::size_t> subset, const Batch& val) {
  return OneStepUtility(spec, snap, batch, val)(subset);
}

ShapleyEstimate exhaustive_shapley(std::size_t n, const std::function<double(std::uint64_t mask)>& utility) {
  if (n == 0) throw DegenerateError("exhaustive Shapley needs at least one player");
  if (n > kMaxExhaustivePlayers)
    throw DimensionError("exhaustive Shapley limited to " + std::to_string(kMaxExhaustivePlayers) + " players, got " +
                         std::to_string(n));
  const std::uint64_t count = std::uint64_t{1} << n;
  std::vector<double> u(count);
  for (std::uint64_t mask = 0; mask < count; ++mask) u[mask] = utility(mask);

  // weight(s) = s! (n - s - 1)! / n!
  std::vector<double> weight(n);
  for (std::size_t s = 0; s < n; ++s) {
    double w = 1.0 / static_cast<double>(n);
    // 1 / (n * C(n-1, s))
    double binom = 1.0;
    for (std::size_t k = 1; k <= s; ++k) binom = binom * static_cast<double>(n - 1 - s + k) / static_cast<double>(k);
    weight[s] = w / binom;
  }

  ShapleyEstimate est;
  est.values.assign(n, 0.0);
  est.std_errors.assign(n, 0.0);
  est.estimator = "exhaustive";
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t bit = std::uint64_t{1} << i;
    double phi = 0.0;
    for (std::uint64_t mask = 0; mask < count; ++mask) {
      if (mask & bit) continue;
      const auto s = static_cast<std::size_t>(std::popcount(mask));
      phi += weight[s] * (u[mask | bit] - u[mask]);
    }
    est.values[i] = phi;
  }
  return est;
}

ShapleyEstimate exhaustive_shapley(const OneStepUtility& utility) {
  return exhaustive_shapley(utility.batch_size(), [&](std::uint64_t mask) { return utility.of_mask(mask); });
}

OptimizerState make_optimizer(const TrainerConfig& cfg, const ParamLayout& layout) {
  if (cfg.optimizer == OptimizerKind::sgd) return make_sgd(layout, cfg.learning_rate, cfg.momentum);
  return make_adam(layout, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon, cfg.bias_correction);
}

Params train_on(const Dataset& data, std::span<const std::size_t> rows, const TrainerConfig& cfg,
                const std::function<void(std::size_t, const Params&)>& on_step) {
  Rng init_rng(cfg.init_seed);
  Params params = init_params(cfg.spec, init_rng);
  if (rows.empty()) return params;
  OptimizerState state = make_optimizer(cfg, params.layout());

  const bool full = cfg.batch_size == 0 || cfg.batch_size >= rows.size();
  const Batch full_batch = full ? data.gather(rows) : Batch{};
  std::vector<std::size_t> order;
  std::size_t cursor = rows.size();
  std::size_t epoch = 0;
  std::vector<std::size_t> batch_rows;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Params grad;
    if (full) {
      grad = backward_with_trace(cfg.spec, params, full_batch).mean_grad;
    } else {
      batch_rows.clear();
      while (batch_rows.size() < cfg.batch_size) {
        if (cursor >= rows.size()) {
          Rng shuffle = Rng(cfg.init_seed).derive({0x5348, epoch++});
          auto perm = permutation(shuffle, rows.size());
          order.assign(rows.size(), 0);
          for (std::size_t i = 0; i < rows.size(); ++i) order[i] = rows[perm[i]];
          cursor = 0;
        }
        batch_rows.push_back(order[cursor++]);
      }
      grad = backward_with_trace(cfg.spec, params, data.gather(batch_rows)).mean_grad;
    }
    optimizer_step(params, state, grad);
    if (on_step) on_step(step + 1, params);
  }
  return params;
}

std::string to_string(TmcUtility u) { return u == TmcUtility::final_loss ? "final" : "trajectory"; }

TmcUtility parse_tmc_utility(const std::string& s) {
  if (s == "final") return TmcUtility::final_loss;
  if (s == "trajectory") return TmcUtility::trajectory_mean;
  throw ConfigError("unknown tmc utility '" + s + "'");
}

RetrainUtility::RetrainUtility(const Dataset& data, TrainerConfig cfg, TmcUtility kind)
    : data_(&data), cfg_(std::move(cfg)), kind_(kind) {
  val_ = data.all_of(Split::val);
  if (val_.size() == 0) throw DegenerateError("retraining utility needs a validation split");
  train_rows_ = data.indices(Split::train);
  Rng init_rng(cfg_.init_seed);
  base_loss_ = forward(cfg_.spec, init_params(cfg_.spec, init_rng), val_).mean_loss;
}

double RetrainUtility::operator()(std::span<const std::size_t> rows) const {
  if (rows.empty()) return 0.0;
  double traj = 0.0;
  std::function<void(std::size_t, const Params&)> hook;
  if (kind_ == TmcUtility::trajectory_mean)
    hook = [&](std::size_t, const Params& p) { traj += forward(cfg_.spec, p, val_).mean_loss - base_loss_; };
  const Params trained = train_on(*data_, rows, cfg_, hook);
  if (kind_ == TmcUtility::trajectory_mean) return traj / static_cast<double>(std::max<std::size_t>(cfg_.steps, 1));
  return forward(cfg_.spec, trained, val_).mean_loss - base_loss_;
}

ShapleyEstimate tmc_shapley(const Dataset& data, const TrainerConfig& cfg, const TmcOptions& options) {
  if (options.permutations == 0) throw ConfigError("tmc needs at least one permutation");
  const RetrainUtility utility(data, cfg, options.utility);
  const auto& rows = utility.train_rows();
  const std::size_t n = rows.size();
  if (n == 0) throw DegenerateError("tmc needs training rows");
  const double full = utility(rows);
  const bool truncate = options.truncation_tol > 0.0;

  const std::size_t K = options.permutations;
  std::vector<double> marginals(K * n, 0.0);
  std::vector<char> ok(K, 1);
  const Rng root(options.seed);
  const auto k_count = static_cast<long long>(K);
#pragma omp parallel for schedule(dynamic)
  for (long long kk = 0; kk < k_count; ++kk) {
    const auto k = static_cast<std::size_t>(kk);
    Rng stream = root.derive({k});
    const auto perm = permutation(stream, n);
    std::vector<std::size_t> prefix;
    prefix.reserve(n);
    double prev = 0.0;
    try {
      for (std::size_t pos = 0; pos < n; ++pos) {
        const std::size_t player = perm[pos];
        if (truncate && std::abs(full - prev) < options.truncation_tol) break;  // remaining marginals stay 0
        prefix.push_back(rows[player]);
        const double cur = utility(prefix);
        if (!std::isfinite(cur)) throw NumericError("non-finite utility");
        marginals[k * n + player] = cur - prev;
        prev = cur;
      }
    } catch (const Error& e) {
      ok[k] = 0;
    }
  }

  ShapleyEstimate est;
  est.estimator = "tmc";
  est.truncation_tol = options.truncation_tol;
  est.seed = options.seed;
  est.values.assign(n, 0.0);
  est.std_errors.assign(n, 0.0);
  std::size_t used = 0;
  for (std::size_t k = 0; k < K; ++k) {
    if (!ok[k]) {
      std::cerr << "tmc: permutation " << k << " skipped (non-finite training)\n";
      ++est.skipped_permutations;
      continue;
    }
    ++used;
  }
  est.permutations = used;
  if (used == 0) throw NumericError("tmc: every permutation diverged");
  std::vector<double> column;
  column.reserve(used);
  for (std::size_t i = 0; i < n; ++i) {
    column.clear();
    for (std::size_t k = 0; k < K; ++k)
      if (ok[k]) column.push_back(marginals[k * n + i]);
    est.values[i] = mean(column);
    est.std_errors[i] = used > 1 ? stddev(column) / std::sqrt(static_cast<double>(used)) : 0.0;
  }
  return est;
}

}  // namespace inrun
