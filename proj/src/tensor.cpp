#include "contextshot/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "contextshot/error.hpp"

namespace cshot {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != product(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows() on non-matrix " + shape_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols() on non-matrix " + shape_string(shape_));
  return shape_[1];
}

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_inplace(const Tensor& o) {
  require_same_shape(*this, o, "add_inplace");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
}

double Tensor::squared_norm() const { return dot(data_, data_); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || (b.rank() != 1 && b.rank() != 2) || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  if (b.rank() == 1) {
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
      out[i] = dot(a.data().subspan(i * k, k), b.data());
    }
    return out;
  }
  const std::size_t n = b.shape()[1];
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a.at(i, p);
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += aip * b.at(p, j);
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose of non-matrix " + shape_string(a.shape()));
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor softmax(const Tensor& v) {
  if (v.size() == 0) throw DomainError("softmax of empty input");
  const double mx = *std::max_element(v.data().begin(), v.data().end());
  Tensor out = v;
  double sum = 0.0;
  for (double& x : out.data()) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : out.data()) x /= sum;
  return out;
}

Tensor log_softmax(const Tensor& v) {
  if (v.size() == 0) throw DomainError("log_softmax of empty input");
  const double mx = *std::max_element(v.data().begin(), v.data().end());
  double sum = 0.0;
  for (double x : v.data()) sum += std::exp(x - mx);
  const double lse = mx + std::log(sum);
  Tensor out = v;
  for (double& x : out.data()) x -= lse;
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor elementwise(Unary op, const Tensor& a) {
  Tensor out = a;
  for (double& x : out.data()) x = op == Unary::Tanh ? std::tanh(x) : sigmoid(x);
  return out;
}

Tensor elementwise(Binary op, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "elementwise");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (op) {
      case Binary::Add: out[i] += b[i]; break;
      case Binary::Sub: out[i] -= b[i]; break;
      case Binary::Mul: out[i] *= b[i]; break;
    }
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (double& x : out.data()) x *= s;
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace cshot
