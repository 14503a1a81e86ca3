#pragma once

#include <map>
#include <string>

#include "crfu/tensor.hpp"

namespace crfu {

/// Named parameter collection with deterministic (name-sorted) iteration.
/// Shapes are fixed at add() time; updates go through values in place.
class ParamSet {
 public:
  void add(std::string name, Tensor value);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  const std::map<std::string, Tensor>& all() const { return params_; }
  std::size_t count() const { return params_.size(); }
  /// Total number of scalar parameters.
  std::size_t scalar_count() const;

 private:
  std::map<std::string, Tensor> params_;
};

}  // namespace crfu
