#include "vsgg/params.hpp"

#include <cmath>

#include "vsgg/errors.hpp"

namespace vsgg {

Tensor ParamStore::insert(const std::string& name, Tensor t) {
  auto [it, inserted] = params_.emplace(name, t);
  if (!inserted) throw ContractError("ParamStore: duplicate parameter " + name);
  return it->second;
}

Tensor ParamStore::weight(const std::string& name, int64_t fan_in, Shape shape) {
  if (fan_in < 1) throw ContractError("ParamStore::weight: fan_in must be >= 1");
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  Rng rng(derive_seed(init_seed_, "init:" + name));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return insert(name, std::move(t));
}

Tensor ParamStore::zeros(const std::string& name, Shape shape) {
  return insert(name, Tensor::zeros(std::move(shape), /*requires_grad=*/true));
}

Tensor ParamStore::constant(const std::string& name, Shape shape, double value) {
  return insert(name, Tensor::full(std::move(shape), value, /*requires_grad=*/true));
}

bool ParamStore::contains(const std::string& name) const {
  return params_.count(name) != 0;
}

Tensor ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw ContractError("ParamStore: unknown parameter " + name);
  return it->second;
}

std::vector<Tensor> ParamStore::all() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(t);
  return out;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(name);
  return out;
}

void ParamStore::zero_grads() {
  for (auto& [name, t] : params_) {
    Tensor copy = t;
    copy.zero_grad();
  }
}

}  // namespace vsgg
