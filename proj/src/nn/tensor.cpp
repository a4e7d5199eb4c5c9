#include "dfx/nn/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "dfx/core/error.hpp"

namespace dfx::nn {

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s + "]";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), values_(shape_size(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_size(shape_))
    throw ConfigError("tensor of shape " + shape_string(shape_) + " cannot hold " + std::to_string(values_.size()) +
                      " values");
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::filled(Shape shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

double Tensor::item() const {
  if (values_.size() != 1) throw ConfigError("item() on a tensor of shape " + shape_string(shape_));
  return values_[0];
}

bool Tensor::all_finite() const noexcept {
  // v - v is 0 for finite v and NaN otherwise; four lanes keep it vectorizable.
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  const std::size_t n = values_.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    for (std::size_t k = 0; k < 4; ++k) acc[k] += values_[i + k] - values_[i + k];
  for (; i < n; ++i) acc[0] += values_[i] - values_[i];
  return acc[0] + acc[1] + acc[2] + acc[3] == 0.0;
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

}  // namespace dfx::nn
