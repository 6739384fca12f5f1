#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace cshot {

// Dense row-major tensor of doubles. Rank 0 (scalar), 1 (vector) and
// 2 (matrix) are the only ranks the model needs.
class Tensor {
 public:
  Tensor() : shape_{}, data_(1, 0.0) {}
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_, 0.0); }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double item() const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  bool same_shape(const Tensor& o) const noexcept { return shape_ == o.shape_; }
  Tensor reshaped(std::vector<std::size_t> shape) const;
  void fill(double v);
  void add_inplace(const Tensor& o);
  double squared_norm() const;
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// Plain (non-differentiable) kernels. The autodiff layer reuses these.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor softmax(const Tensor& v);
Tensor log_softmax(const Tensor& v);

enum class Unary { Tanh, Sigmoid };
enum class Binary { Add, Sub, Mul };

Tensor elementwise(Unary op, const Tensor& a);
Tensor elementwise(Binary op, const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

double dot(std::span<const double> a, std::span<const double> b);
double sigmoid(double x);

}  // namespace cshot
