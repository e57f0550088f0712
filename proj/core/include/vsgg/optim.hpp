#pragma once

#include <cstdint>
#include <vector>

#include "vsgg/tensor.hpp"

namespace vsgg {

// Decoupled-weight-decay Adam. Moment buffers are keyed by position in the
// parameter list, which must stay stable across steps.
class AdamW {
 public:
  struct Options {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
  };

  AdamW(std::vector<Tensor> params, Options opts);

  // Applies one update from the populated grads. Throws ContractError if a
  // parameter has no grad buffer. Identical state + grads give bit-identical
  // results.
  void step();
  void zero_grad();

  int64_t step_count() const { return step_; }
  double lr() const { return opts_.lr; }
  void set_lr(double lr) { opts_.lr = lr; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  Options opts_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  int64_t step_ = 0;
};

}  // namespace vsgg
