#include "dbp/tensor.hpp"

#include "dbp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace dbp {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
  }
}

}  // namespace

Tensor::Tensor() : shape_{1}, data_(std::make_shared<const Eigen::ArrayXd>(Eigen::ArrayXd::Zero(1))) {}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_ = std::make_shared<const Eigen::ArrayXd>(Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(shape_size(shape_))));
}

Tensor::Tensor(Shape shape, Eigen::ArrayXd data) : Tensor(std::move(shape), std::make_shared<const Eigen::ArrayXd>(std::move(data))) {}

Tensor::Tensor(Shape shape, std::shared_ptr<const Eigen::ArrayXd> data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (shape_size(shape_) != static_cast<std::size_t>(data_->size())) {
    throw ShapeError("shape " + shape_string(shape_) + " does not match " +
                     std::to_string(data_->size()) + " elements");
  }
}

Tensor::Tensor(Shape shape, std::span<const double> data)
    : Tensor(std::move(shape),
             Eigen::ArrayXd(Eigen::Map<const Eigen::ArrayXd>(data.data(),
                                                             static_cast<Eigen::Index>(data.size())))) {}

Tensor Tensor::scalar(double v) { return Tensor({1}, Eigen::ArrayXd::Constant(1, v)); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::span<const double>(values.begin(), values.size()));
}

Tensor Tensor::from_vector(const std::vector<double>& values) {
  return Tensor({values.size()}, std::span<const double>(values));
}

Tensor Tensor::full(Shape shape, double v) {
  const auto n = static_cast<Eigen::Index>(shape_size(shape));
  return Tensor(std::move(shape), Eigen::ArrayXd::Constant(n, v));
}

double Tensor::at(std::size_t i) const {
  if (i >= size()) throw RangeError("tensor index " + std::to_string(i) + " out of range");
  return (*data_)[static_cast<Eigen::Index>(i)];
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return (*data_)[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const { return data_->isFinite().all(); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "operator+");
  return Tensor(a.shape(), a.array() + b.array());
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "operator-");
  return Tensor(a.shape(), a.array() - b.array());
}

Tensor operator*(double s, const Tensor& a) { return Tensor(a.shape(), s * a.array()); }

Tensor operator*(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "operator*");
  return Tensor(a.shape(), a.array() * b.array());
}

Tensor operator/(const Tensor& a, double s) { return Tensor(a.shape(), a.array() / s); }

double sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return acc;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  return acc;
}

double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor sign(const Tensor& a) {
  return Tensor(a.shape(), a.array().unaryExpr([](double v) {
    return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  }));
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return Tensor(a.shape(), a.array().max(lo).min(hi));
}

Tensor clamp(const Tensor& a, const Tensor& lo, const Tensor& hi) {
  require_same_shape(a, lo, "clamp");
  require_same_shape(a, hi, "clamp");
  return Tensor(a.shape(), a.array().max(lo.array()).min(hi.array()));
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.array().data(), b.array().data(), a.size() * sizeof(double)) == 0;
}

}  // namespace dbp
