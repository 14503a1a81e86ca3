#include "crfu/params.hpp"

#include "crfu/errors.hpp"

namespace crfu {

void ParamSet::add(std::string name, Tensor value) {
  auto [it, inserted] = params_.emplace(std::move(name), std::move(value));
  if (!inserted) throw InputError("duplicate parameter name: " + it->first);
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw InputError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw InputError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

}  // namespace crfu
