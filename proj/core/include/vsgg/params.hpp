#pragma once

#include <map>
#include <string>
#include <vector>

#include "vsgg/rng.hpp"
#include "vsgg/tensor.hpp"

namespace vsgg {

// Named registry of learnable leaves. Iteration order is the sorted name
// order, which keeps optimizer state, checkpoints and logs deterministic.
class ParamStore {
 public:
  explicit ParamStore(uint64_t init_seed) : init_seed_(init_seed) {}

  // Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)], seeded per name so
  // adding parameters never shifts the streams of existing ones.
  Tensor weight(const std::string& name, int64_t fan_in, Shape shape);
  // Zero-initialized parameter (biases, norm offsets).
  Tensor zeros(const std::string& name, Shape shape);
  // Parameter filled with a constant (layer-norm gains).
  Tensor constant(const std::string& name, Shape shape, double value);

  bool contains(const std::string& name) const;
  Tensor at(const std::string& name) const;
  std::vector<Tensor> all() const;
  std::vector<std::string> names() const;
  const std::map<std::string, Tensor>& entries() const { return params_; }

  void zero_grads();

 private:
  Tensor insert(const std::string& name, Tensor t);

  uint64_t init_seed_;
  std::map<std::string, Tensor> params_;
};

}  // namespace vsgg
