#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace gradcredit::ad {

/// Dense row-major array of 64-bit reals. Operations in this library use
/// rank 1 (treated as a 1 x n row) or rank 2 arrays.
class Array {
 public:
  Array() = default;
  explicit Array(std::vector<std::size_t> shape, double fill = 0.0);
  Array(std::vector<std::size_t> shape, std::vector<double> values);

  static Array scalar(double value);
  static Array matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Array row(std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool is_scalar() const { return values_.size() == 1; }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  std::span<const double> row_span(std::size_t r) const;
  std::span<double> row_span(std::size_t r);

  bool all_finite() const;
  bool same_shape(const Array& other) const { return shape_ == other.shape_; }
  std::string shape_string() const;

  friend bool operator==(const Array&, const Array&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

}  // namespace gradcredit::ad
