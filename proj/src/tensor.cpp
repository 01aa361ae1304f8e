#include "inrun/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "inrun/error.hpp"
#include "inrun/kernels.hpp"

namespace inrun {

namespace {

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw DimensionError(std::string(what) + ": expected a matrix, got shape " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size())
    throw DimensionError("tensor shape " + shape_str(shape_) + " does not hold " + std::to_string(data_.size()) + " elements");
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) { return Tensor({values.size()}, std::vector<double>(values)); }

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::rows() const { return shape_.empty() ? 0 : shape_[0]; }

std::size_t Tensor::cols() const {
  if (shape_.size() < 2) return 1;
  return shape_product(shape_) / shape_[0];
}

std::span<double> Tensor::row(std::size_t r) { return data().subspan(r * cols(), cols()); }
std::span<const double> Tensor::row(std::size_t r) const { return data().subspan(r * cols(), cols()); }

bool Tensor::all_finite() const {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

const Tensor& Tensor::check_finite(std::string_view what) const {
  if (!all_finite()) throw NumericError("non-finite value in " + std::string(what));
  return *this;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor c({a.rows(), b.cols()});
  kernels::parallel::gemm_nn(a.rows(), a.cols(), b.cols(), a.data().data(), b.data().data(), c.data().data());
  c.check_finite("matmul");
  return c;
}

Tensor matmul_abt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_abt");
  require_matrix(b, "matmul_abt");
  if (a.cols() != b.cols())
    throw DimensionError("matmul_abt: inner dimensions " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  Tensor c({a.rows(), b.rows()});
  kernels::parallel::gemm_nt(a.rows(), a.cols(), b.rows(), a.data().data(), b.data().data(), c.data().data());
  c.check_finite("matmul_abt");
  return c;
}

Tensor matmul_atb(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_atb");
  require_matrix(b, "matmul_atb");
  if (a.rows() != b.rows())
    throw DimensionError("matmul_atb: inner dimensions " + shape_str(a.shape()) + "^T x " + shape_str(b.shape()));
  Tensor c({a.cols(), b.cols()});
  kernels::parallel::gemm_tn(a.cols(), a.rows(), b.cols(), a.data().data(), b.data().data(), c.data().data());
  c.check_finite("matmul_atb");
  return c;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  c.check_finite("add");
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
  c.check_finite("sub");
  return c;
}

Tensor scale(const Tensor& a, double s) {
  Tensor c = a;
  for (auto& x : c.data()) x *= s;
  c.check_finite("scale");
  return c;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw DimensionError("dot: length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  return dot(a.data(), b.data());
}

double norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace inrun
