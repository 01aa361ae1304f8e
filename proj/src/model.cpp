#include "inrun/model.hpp"

#include <algorithm>
#include <cmath>

#include "inrun/error.hpp"
#include "inrun/kernels.hpp"

namespace inrun {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

std::string to_string(LossKind k) {
  return k == LossKind::softmax_cross_entropy ? "softmax_cross_entropy" : "mse";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

LossKind parse_loss(const std::string& s) {
  if (s == "softmax_cross_entropy" || s == "cross_entropy") return LossKind::softmax_cross_entropy;
  if (s == "mse") return LossKind::mse;
  throw ConfigError("unknown loss '" + s + "'");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

std::size_t ModelSpec::widest() const { return *std::max_element(layer_dims.begin(), layer_dims.end()); }

void ModelSpec::validate() const {
  if (layer_dims.size() < 2) throw DimensionError("model needs at least one layer (two widths)");
  for (auto d : layer_dims)
    if (d == 0) throw DimensionError("layer widths must be >= 1");
  if (loss == LossKind::softmax_cross_entropy && output_dim() < 2)
    throw DimensionError("softmax cross-entropy needs at least two outputs");
}

ParamLayout::ParamLayout(const ModelSpec& spec) {
  spec.validate();
  std::size_t offset = 0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    LayerSlice s;
    s.rows = spec.layer_dims[l + 1];
    s.cols = spec.layer_dims[l];
    s.weight_offset = offset;
    offset += s.weight_size();
    s.bias = spec.bias;
    s.bias_offset = offset;
    if (spec.bias) offset += s.rows;
    layers_.push_back(s);
  }
  total_ = offset;
}

Params::Params(ParamLayout layout) : layout_(std::move(layout)), values_(layout_.size(), 0.0) {}

Params::Params(ParamLayout layout, std::vector<double> values) : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_.size())
    throw DimensionError("parameter vector of length " + std::to_string(values_.size()) + " does not match layout of size " +
                         std::to_string(layout_.size()));
}

std::span<double> Params::weight(std::size_t l) {
  const auto& s = layout_.layer(l);
  return flat().subspan(s.weight_offset, s.weight_size());
}

std::span<const double> Params::weight(std::size_t l) const {
  const auto& s = layout_.layer(l);
  return flat().subspan(s.weight_offset, s.weight_size());
}

std::span<double> Params::bias(std::size_t l) {
  const auto& s = layout_.layer(l);
  return s.bias ? flat().subspan(s.bias_offset, s.rows) : std::span<double>{};
}

std::span<const double> Params::bias(std::size_t l) const {
  const auto& s = layout_.layer(l);
  return s.bias ? flat().subspan(s.bias_offset, s.rows) : std::span<const double>{};
}

Tensor Params::weight_matrix(std::size_t l) const {
  const auto& s = layout_.layer(l);
  auto w = weight(l);
  return Tensor({s.rows, s.cols}, std::vector<double>(w.begin(), w.end()));
}

Tensor Params::bias_vector(std::size_t l) const {
  auto b = bias(l);
  return Tensor::vector(std::vector<double>(b.begin(), b.end()));
}

Params Params::from_layers(const ParamLayout& layout, const std::vector<Tensor>& weights, const std::vector<Tensor>& biases) {
  if (weights.size() != layout.num_layers()) throw DimensionError("from_layers: wrong number of weight matrices");
  Params p(layout);
  for (std::size_t l = 0; l < layout.num_layers(); ++l) {
    const auto& s = layout.layer(l);
    if (weights[l].shape() != std::vector<std::size_t>{s.rows, s.cols})
      throw DimensionError("from_layers: weight shape mismatch at layer " + std::to_string(l));
    std::copy(weights[l].data().begin(), weights[l].data().end(), p.weight(l).begin());
    if (s.bias) {
      if (l >= biases.size() || biases[l].size() != s.rows)
        throw DimensionError("from_layers: bias shape mismatch at layer " + std::to_string(l));
      std::copy(biases[l].data().begin(), biases[l].data().end(), p.bias(l).begin());
    }
  }
  return p;
}

void Params::require_same_layout(const Params& other, const char* what) const {
  if (!(layout_ == other.layout_)) throw DimensionError(std::string(what) + ": parameter layouts differ");
}

bool Params::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

Params init_params(const ModelSpec& spec, Rng& rng) {
  Params p{ParamLayout(spec)};
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(spec.layer_dims[l]));
    for (auto& w : p.weight(l)) w = sd * rng.gaussian();
  }
  return p;
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

Batch Dataset::gather(std::span<const std::size_t> rows) const {
  Batch b;
  const std::size_t d = dim();
  b.features = Tensor({rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= size()) throw DimensionError("gather: row index out of range");
    std::copy_n(features.row(rows[r]).begin(), d, b.features.row(r).begin());
  }
  if (is_classification()) {
    b.classes.reserve(rows.size());
    for (auto r : rows) b.classes.push_back(classes[r]);
  } else {
    const std::size_t t = targets.cols();
    b.targets = Tensor({rows.size(), t});
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy_n(targets.row(rows[r]).begin(), t, b.targets.row(r).begin());
  }
  return b;
}

Batch Dataset::all_of(Split s) const {
  const auto idx = indices(s);
  return gather(idx);
}

void Dataset::validate() const {
  const std::size_t n = size();
  if (features.rank() != 2) throw DimensionError("dataset features must be a matrix");
  if (is_classification()) {
    if (classes.size() != n) throw DimensionError("dataset: label count differs from feature rows");
    for (int c : classes)
      if (c < 0 || static_cast<std::size_t>(c) >= num_classes) throw DimensionError("dataset: class label out of range");
  } else if (targets.rows() != n) {
    throw DimensionError("dataset: target count differs from feature rows");
  }
  if (split.size() != n) throw DimensionError("dataset: split tags do not cover every row");
  if (!flipped.empty() && flipped.size() != n) throw DimensionError("dataset: flipped flags do not cover every row");
  features.check_finite("dataset features");
}

namespace {

struct Activations {
  std::vector<Tensor> inputs;  // per layer, B x d_{l-1}
  std::vector<Tensor> pre;     // per layer, B x d_l
};

double activate(Activation a, double z) {
  switch (a) {
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::tanh: return std::tanh(z);
    case Activation::identity: return z;
  }
  return z;
}

// Derivative in terms of the pre-activation; relu'(0) := 0.
double activate_grad(Activation a, double z) {
  switch (a) {
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

void check_batch(const ModelSpec& spec, const Params& params, const Batch& batch) {
  spec.validate();
  if (!(params.layout() == ParamLayout(spec))) throw DimensionError("parameters do not match the model spec");
  if (batch.features.rank() != 2 || batch.features.cols() != spec.input_dim())
    throw DimensionError("feature width " + std::to_string(batch.features.cols()) + " does not match input width " +
                         std::to_string(spec.input_dim()));
  if (batch.size() == 0) throw DimensionError("empty batch");
  if (spec.loss == LossKind::softmax_cross_entropy) {
    if (batch.classes.size() != batch.size()) throw DimensionError("batch needs one class label per row");
    for (int c : batch.classes)
      if (c < 0 || static_cast<std::size_t>(c) >= spec.output_dim()) throw DimensionError("class label out of range");
  } else if (batch.targets.rows() != batch.size() || batch.targets.cols() != spec.output_dim()) {
    throw DimensionError("batch targets must be B x output width");
  }
}

Activations run_forward(const ModelSpec& spec, const Params& params, const Batch& batch) {
  Activations acts;
  const std::size_t B = batch.size();
  Tensor input = batch.features;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto& s = params.layout().layer(l);
    Tensor z({B, s.rows});
    kernels::parallel::gemm_nt(B, s.cols, s.rows, input.data().data(), params.weight(l).data(), z.data().data());
    if (s.bias) {
      auto b = params.bias(l);
      for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < s.rows; ++j) z.at(i, j) += b[j];
    }
    z.check_finite("forward pre-activation");
    Tensor next = z;
    if (l + 1 < spec.num_layers())
      for (auto& x : next.data()) x = activate(spec.activation, x);
    acts.inputs.push_back(std::move(input));
    acts.pre.push_back(std::move(z));
    input = std::move(next);
  }
  return acts;
}

// Per-sample losses and d loss_i / d output_i.
std::vector<double> loss_and_grad(const ModelSpec& spec, const Batch& batch, const Tensor& out, Tensor* grad) {
  const std::size_t B = out.rows();
  const std::size_t k = out.cols();
  std::vector<double> losses(B);
  if (grad) *grad = Tensor({B, k});
  for (std::size_t i = 0; i < B; ++i) {
    auto z = out.row(i);
    if (spec.loss == LossKind::softmax_cross_entropy) {
      const double zmax = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (double v : z) sum += std::exp(v - zmax);
      const double lse = zmax + std::log(sum);
      const auto y = static_cast<std::size_t>(batch.classes[i]);
      losses[i] = lse - z[y];
      if (grad) {
        for (std::size_t j = 0; j < k; ++j) grad->at(i, j) = std::exp(z[j] - lse) - (j == y ? 1.0 : 0.0);
      }
    } else {
      auto t = batch.targets.row(i);
      double l = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double r = z[j] - t[j];
        l += 0.5 * r * r;
        if (grad) grad->at(i, j) = r;
      }
      losses[i] = l;
    }
    if (!std::isfinite(losses[i])) throw NumericError("non-finite loss");
  }
  return losses;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

ForwardResult forward(const ModelSpec& spec, const Params& params, const Batch& batch) {
  check_batch(spec, params, batch);
  auto acts = run_forward(spec, params, batch);
  ForwardResult r;
  r.outputs = std::move(acts.pre.back());
  r.losses = loss_and_grad(spec, batch, r.outputs, nullptr);
  r.mean_loss = mean_of(r.losses);
  return r;
}

BackwardResult backward_with_trace(const ModelSpec& spec, const Params& params, const Batch& batch) {
  check_batch(spec, params, batch);
  auto acts = run_forward(spec, params, batch);
  const std::size_t B = batch.size();
  const std::size_t L = spec.num_layers();

  BackwardResult res;
  res.mean_grad = Params(params.layout());
  res.trace.bias = spec.bias;
  res.trace.errors.resize(L);
  Tensor delta;
  res.trace.losses = loss_and_grad(spec, batch, acts.pre.back(), &delta);
  res.mean_loss = mean_of(res.trace.losses);

  const double inv_b = 1.0 / static_cast<double>(B);
  for (std::size_t l = L; l-- > 0;) {
    const auto& s = params.layout().layer(l);
    auto gw = res.mean_grad.weight(l);
    kernels::parallel::gemm_tn(s.rows, B, s.cols, delta.data().data(), acts.inputs[l].data().data(), gw.data());
    for (auto& g : gw) g *= inv_b;
    if (s.bias) {
      auto gb = res.mean_grad.bias(l);
      for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < s.rows; ++j) gb[j] += delta.at(i, j);
      for (auto& g : gb) g *= inv_b;
    }
    if (l > 0) {
      Tensor prev({B, s.cols});
      kernels::parallel::gemm_nn(B, s.rows, s.cols, delta.data().data(), params.weight(l).data(), prev.data().data());
      const auto& z = acts.pre[l - 1];
      for (std::size_t i = 0; i < prev.size(); ++i) prev[i] *= activate_grad(spec.activation, z[i]);
      res.trace.errors[l] = std::move(delta);
      delta = std::move(prev);
    } else {
      res.trace.errors[l] = std::move(delta);
    }
  }
  res.trace.activations = std::move(acts.inputs);
  if (!res.mean_grad.all_finite()) throw NumericError("non-finite gradient");
  return res;
}

std::vector<Params> per_sample_gradients(const ModelSpec& spec, const Params& params, const Batch& batch) {
  check_batch(spec, params, batch);
  std::vector<Params> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Batch one;
    one.features = Tensor({1, batch.features.cols()});
    std::copy_n(batch.features.row(i).begin(), batch.features.cols(), one.features.row(0).begin());
    if (!batch.classes.empty()) one.classes = {batch.classes[i]};
    if (batch.targets.size()) {
      one.targets = Tensor({1, batch.targets.cols()});
      std::copy_n(batch.targets.row(i).begin(), batch.targets.cols(), one.targets.row(0).begin());
    }
    out.push_back(backward_with_trace(spec, params, one).mean_grad);
  }
  return out;
}

double accuracy(const ModelSpec& spec, const Params& params, const Batch& batch) {
  if (batch.classes.empty()) throw DimensionError("accuracy needs class labels");
  auto r = forward(spec, params, batch);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto z = r.outputs.row(i);
    const auto pred = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    if (pred == batch.classes[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(batch.size());
}

}  // namespace inrun
