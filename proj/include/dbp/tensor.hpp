#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dbp {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Immutable once built, so copies share storage.
class Tensor {
 public:
  /// A single zero.
  Tensor();
  explicit Tensor(Shape shape);
  Tensor(Shape shape, Eigen::ArrayXd data);
  Tensor(Shape shape, std::span<const double> data);

  static Tensor scalar(double v);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor from_vector(const std::vector<double>& values);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v);
  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(data_->size()); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  const Eigen::ArrayXd& array() const noexcept { return *data_; }
  std::span<const double> values() const noexcept { return {data_->data(), size()}; }
  double operator[](std::size_t i) const { return (*data_)[static_cast<Eigen::Index>(i)]; }
  double at(std::size_t i) const;
  double item() const;

  Tensor reshaped(Shape shape) const;
  bool all_finite() const;
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

 private:
  Tensor(Shape shape, std::shared_ptr<const Eigen::ArrayXd> data);

  Shape shape_;
  std::shared_ptr<const Eigen::ArrayXd> data_;
};

// Non-differentiable helpers. Reductions run strictly left to right.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, double s);

double sum(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
Tensor sign(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor clamp(const Tensor& a, const Tensor& lo, const Tensor& hi);

/// True iff shapes match and every element has the identical bit pattern.
bool bitwise_equal(const Tensor& a, const Tensor& b);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace dbp
