#include "vsgg/optim.hpp"

#include <cmath>

#include "vsgg/errors.hpp"

namespace vsgg {

AdamW::AdamW(std::vector<Tensor> params, Options opts)
    : params_(std::move(params)), opts_(opts) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].values().size(), 0.0);
    v_[i].assign(params_[i].values().size(), 0.0);
  }
}

void AdamW::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad())
      throw ContractError("AdamW::step: parameter has no grad");
    auto& vals = p.values();
    const auto& g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < vals.size(); ++j) {
      vals[j] -= opts_.lr * opts_.weight_decay * vals[j];
      m[j] = opts_.beta1 * m[j] + (1.0 - opts_.beta1) * g[j];
      v[j] = opts_.beta2 * v[j] + (1.0 - opts_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      vals[j] -= opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps);
    }
  }
}

void AdamW::zero_grad() {
  // Allocates missing buffers too: a parameter outside the current graph
  // (the MDU at epoch 1, say) legitimately has an all-zero gradient.
  for (auto& p : params_) {
    p.grad();
    p.zero_grad();
  }
}

}  // namespace vsgg
