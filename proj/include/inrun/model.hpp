#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "inrun/rng.hpp"
#include "inrun/tensor.hpp"

namespace inrun {

enum class Activation { relu, tanh, identity };
enum class LossKind { softmax_cross_entropy, mse };

std::string to_string(Activation a);
std::string to_string(LossKind k);
Activation parse_activation(const std::string& s);
LossKind parse_loss(const std::string& s);

/// Fully-connected stack d_0 -> d_1 -> ... -> d_L. The activation follows every
/// layer except the last; the loss is applied to the last layer's output.
struct ModelSpec {
  std::vector<std::size_t> layer_dims;
  Activation activation = Activation::relu;
  LossKind loss = LossKind::softmax_cross_entropy;
  bool bias = true;

  std::size_t num_layers() const { return layer_dims.empty() ? 0 : layer_dims.size() - 1; }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  std::size_t widest() const;
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

/// Where layer l lives inside the flat parameter vector. W^(l) is rows x cols
/// (d_l x d_{l-1}) row-major, followed by b^(l) when the model has biases.
struct LayerSlice {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
  bool bias = false;
  std::size_t weight_size() const { return rows * cols; }
  bool operator==(const LayerSlice&) const = default;
};

class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(const ModelSpec& spec);

  std::size_t size() const { return total_; }
  std::size_t num_layers() const { return layers_.size(); }
  const LayerSlice& layer(std::size_t l) const { return layers_[l]; }
  const std::vector<LayerSlice>& layers() const { return layers_; }
  bool operator==(const ParamLayout&) const = default;

 private:
  std::vector<LayerSlice> layers_;
  std::size_t total_ = 0;
};

/// Flat parameter (or parameter-shaped) vector with per-layer views.
class Params {
 public:
  Params() = default;
  explicit Params(ParamLayout layout);
  Params(ParamLayout layout, std::vector<double> values);

  static Params zeros_like(const Params& p) { return Params(p.layout_); }

  const ParamLayout& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }
  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> weight(std::size_t l);
  std::span<const double> weight(std::size_t l) const;
  std::span<double> bias(std::size_t l);
  std::span<const double> bias(std::size_t l) const;

  /// Per-layer copies: W^(l) as a d_l x d_{l-1} matrix, b^(l) as a vector (empty without bias).
  Tensor weight_matrix(std::size_t l) const;
  Tensor bias_vector(std::size_t l) const;
  static Params from_layers(const ParamLayout& layout, const std::vector<Tensor>& weights,
                            const std::vector<Tensor>& biases);

  void require_same_layout(const Params& other, const char* what) const;
  bool all_finite() const;
  bool operator==(const Params&) const = default;

 private:
  ParamLayout layout_;
  std::vector<double> values_;
};

/// W ~ N(0, 1/d_in), biases zero.
Params init_params(const ModelSpec& spec, Rng& rng);

enum class Split : std::uint8_t { train, val, test };
std::string to_string(Split s);

/// Features plus labels: integer classes for softmax models, float targets
/// (N x d_L) for regression.
struct Batch {
  Tensor features;
  std::vector<int> classes;
  Tensor targets;
  std::size_t size() const { return features.rows(); }
};

struct Dataset {
  Tensor features;               // N x d_0
  std::vector<int> classes;      // N entries for classification, else empty
  Tensor targets;                // N x d_L for regression, else empty
  std::vector<Split> split;      // N entries
  std::vector<bool> flipped;     // N entries; true where the label was corrupted
  std::size_t num_classes = 0;   // 0 for regression

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
  bool is_classification() const { return !classes.empty(); }
  std::vector<std::size_t> indices(Split s) const;
  Batch gather(std::span<const std::size_t> rows) const;
  Batch all_of(Split s) const;
  void validate() const;
};

/// Inputs and pre-activation errors for every layer and sample of one batch.
/// errors[l] row i is d loss_i / d z_i^(l) for the INDIVIDUAL loss of sample
/// i, so delta_i a_i^T is that sample's weight gradient.
struct BatchTrace {
  std::vector<Tensor> activations;  // layer l: B x d_{l-1} (layer input)
  std::vector<Tensor> errors;       // layer l: B x d_l
  std::vector<double> losses;       // B
  bool bias = false;

  std::size_t batch_size() const { return losses.size(); }
  std::size_t num_layers() const { return activations.size(); }
};

struct ForwardResult {
  std::vector<double> losses;
  double mean_loss = 0.0;
  Tensor outputs;  // B x d_L
};

ForwardResult forward(const ModelSpec& spec, const Params& params, const Batch& batch);

struct BackwardResult {
  Params mean_grad;
  BatchTrace trace;
  double mean_loss = 0.0;
};

BackwardResult backward_with_trace(const ModelSpec& spec, const Params& params, const Batch& batch);

/// One independent single-sample backward pass per row of the batch.
std::vector<Params> per_sample_gradients(const ModelSpec& spec, const Params& params, const Batch& batch);

/// Fraction of rows whose argmax output equals the class label.
double accuracy(const ModelSpec& spec, const Params& params, const Batch& batch);

}  // namespace inrun
