#include "bima/param_store.hpp"

#include "bima/error.hpp"

namespace bima::nn {

std::size_t ParamStore::add(std::string name, Tensor value) {
  if (find(name)) throw ParameterError("duplicate parameter name '" + name + "'");
  Tensor grad = Tensor::zeros_like(value);
  entries_.push_back({std::move(name), std::move(value), std::move(grad)});
  return entries_.size() - 1;
}

std::optional<std::size_t> ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t ParamStore::index(const std::string& name) const {
  if (auto i = find(name)) return *i;
  throw LookupError("no parameter named '" + name + "'");
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

bool ParamStore::all_finite() const {
  for (const auto& e : entries_) {
    if (!e.value.all_finite()) return false;
  }
  return true;
}

}  // namespace bima::nn
