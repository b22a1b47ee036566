#include "gradcredit/autodiff/array.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "gradcredit/error.hpp"

namespace gradcredit::ad {

namespace {

std::size_t extent_product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_extents(const std::vector<std::size_t>& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw ConfigError("array rank must be 1 or 2, got " + std::to_string(shape.size()));
  }
  for (std::size_t e : shape) {
    if (e == 0) throw ConfigError("array extents must be positive");
  }
}

}  // namespace

Array::Array(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  values_.assign(extent_product(shape_), fill);
}

Array::Array(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_extents(shape_);
  if (extent_product(shape_) != values_.size()) {
    throw ConfigError("array of shape " + shape_string() + " cannot hold " +
                      std::to_string(values_.size()) + " values");
  }
}

Array Array::scalar(double value) { return Array({1, 1}, std::vector<double>{value}); }

Array Array::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Array({rows, cols}, fill);
}

Array Array::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Array({rows, cols}, std::move(values));
}

Array Array::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Array({1, n}, std::move(values));
}

std::size_t Array::rows() const { return shape_.size() == 2 ? shape_[0] : 1; }

std::size_t Array::cols() const { return shape_.empty() ? 0 : shape_.back(); }

std::span<const double> Array::row_span(std::size_t r) const {
  return std::span<const double>(values_).subspan(r * cols(), cols());
}

std::span<double> Array::row_span(std::size_t r) {
  return std::span<double>(values_).subspan(r * cols(), cols());
}

bool Array::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Array::shape_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

}  // namespace gradcredit::ad
