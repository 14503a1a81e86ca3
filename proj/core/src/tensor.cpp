#include "crfu/tensor.hpp"

#include <cmath>
#include <sstream>

#include "crfu/errors.hpp"

namespace crfu {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<float> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  if (shape_product(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str());
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
}

Tensor Tensor::full(std::vector<std::size_t> shape, float value) {
  std::size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<float>(n, value));
}

Tensor Tensor::scalar(float value) { return Tensor({1}, {value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<float> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::size() const { return shape_product(shape); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rank-2 tensor expected, got " + shape_str());
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("rank-2 tensor expected, got " + shape_str());
  return shape[1];
}

float& Tensor::at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
float Tensor::at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

std::span<float> Tensor::row(std::size_t r) {
  return std::span<float>(data.data() + r * cols(), cols());
}

std::span<const float> Tensor::row(std::size_t r) const {
  return std::span<const float>(data.data() + r * cols(), cols());
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void ensure_finite(std::span<const float> values, const std::string& what) {
  for (float v : values) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite value in " + what);
    }
  }
}

void ensure_finite(const Tensor& t, const std::string& what) {
  ensure_finite(std::span<const float>(t.data.data(), t.data.size()), what);
}

}  // namespace crfu
