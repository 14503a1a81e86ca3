#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace crfu {

/// Dense row-major float tensor. The universal numeric carrier; rank 2
/// ([batch, features]) covers nearly everything in practice.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_, std::vector<float> data_);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, float value);
  static Tensor scalar(float value);
  /// Rank-2 convenience: rows x cols from a flat row-major list.
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<float> values);

  std::size_t size() const;
  std::size_t rank() const { return shape.size(); }
  bool is_scalar() const { return size() == 1; }

  // Rank-2 accessors; throw on rank mismatch.
  std::size_t rows() const;
  std::size_t cols() const;
  float& at(std::size_t r, std::size_t c);
  float at(std::size_t r, std::size_t c) const;
  std::span<float> row(std::size_t r);
  std::span<const float> row(std::size_t r) const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  std::string shape_str() const;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

/// Throws NumericError if any element is NaN or infinite.
void ensure_finite(const Tensor& t, const std::string& what);
void ensure_finite(std::span<const float> values, const std::string& what);

}  // namespace crfu
