#include "vsgg/gmm_head.hpp"

#include "vsgg/errors.hpp"
#include "vsgg/rng.hpp"

namespace vsgg {

GmmHeadWeights make_gmm_head_weights(ParamStore& store,
                                     const std::string& prefix, int64_t d_rel,
                                     int64_t classes, int64_t components,
                                     int64_t hidden) {
  if (components < 1)
    throw ConfigError("gmm head: components must be >= 1");
  if (hidden < 1) throw ConfigError("gmm head: hidden must be >= 1");
  GmmHeadWeights w;
  w.components = components;
  auto head = [&](const std::string& name, std::vector<Tensor>& w1,
                  std::vector<Tensor>& b1, std::vector<Tensor>& w2,
                  std::vector<Tensor>& b2) {
    w1.push_back(store.weight(name + ".w1", d_rel, {d_rel, hidden}));
    b1.push_back(store.zeros(name + ".b1", {hidden}));
    w2.push_back(store.weight(name + ".w2", hidden, {hidden, classes}));
    b2.push_back(store.zeros(name + ".b2", {classes}));
  };
  for (int64_t k = 0; k < components; ++k) {
    const std::string kp = prefix + ".k" + std::to_string(k);
    head(kp + ".mu", w.mu_w1, w.mu_b1, w.mu_w2, w.mu_b2);
    head(kp + ".sigma", w.sigma_w1, w.sigma_b1, w.sigma_w2, w.sigma_b2);
    head(kp + ".pi", w.pi_w1, w.pi_b1, w.pi_w2, w.pi_b2);
  }
  return w;
}

GmmOutput gmm_params(const Tensor& z, const GmmHeadWeights& weights) {
  if (z.rank() != 2) throw DimensionError("gmm_params: z must be [N, d_rel]");
  auto ffn = [&](const Tensor& w1, const Tensor& b1, const Tensor& w2,
                 const Tensor& b2) {
    return add_rowvec(matmul(relu(add_rowvec(matmul(z, w1), b1)), w2), b2);
  };
  std::vector<Tensor> mu_parts, sigma_parts, pi_parts;
  for (int64_t k = 0; k < weights.components; ++k) {
    const auto ki = static_cast<size_t>(k);
    mu_parts.push_back(
        ffn(weights.mu_w1[ki], weights.mu_b1[ki], weights.mu_w2[ki], weights.mu_b2[ki]));
    sigma_parts.push_back(ffn(weights.sigma_w1[ki], weights.sigma_b1[ki],
                              weights.sigma_w2[ki], weights.sigma_b2[ki]));
    pi_parts.push_back(
        ffn(weights.pi_w1[ki], weights.pi_b1[ki], weights.pi_w2[ki], weights.pi_b2[ki]));
  }
  GmmOutput out;
  out.mu = stack_last(mu_parts);
  out.sigma = sigmoid(stack_last(sigma_parts));
  out.pi = softmax(stack_last(pi_parts), -1);
  return out;
}

Tensor aleatoric(const Tensor& pi, const Tensor& sigma) {
  return sum_last(mul(pi, sigma));
}

Tensor epistemic(const Tensor& pi, const Tensor& mu) {
  const int64_t k = pi.dim(-1);
  Tensor mixture_mean = sum_last(mul(pi, mu));  // [N, C]
  Tensor spread = sub(mu, repeat_last(mixture_mean, k));
  return sum_last(mul(pi, square(spread)));
}

TrainScores train_scores(const GmmOutput& params, const Tensor& eps) {
  if (eps.shape() != params.mu.shape())
    throw DimensionError("train_scores: eps shape must match mu");
  TrainScores out;
  out.c_hat = add(params.mu, mul(eps, sqrt(params.sigma)));
  out.scores = sum_last(mul(params.pi, sigmoid(out.c_hat)));
  return out;
}

Tensor infer_scores(const GmmOutput& params) {
  return sum_last(mul(params.pi, sigmoid(params.mu)));
}

Tensor predicate_loss(const Tensor& scores, const Tensor& targets) {
  if (scores.shape() != targets.shape())
    throw DimensionError("predicate_loss: target shape mismatch");
  Tensor p = clamp(scores, 1e-12, 1.0 - 1e-12);
  Tensor positive = mul(targets, log(p));
  Tensor negative = mul(rsub_scalar(1.0, targets), log(rsub_scalar(1.0, p)));
  return scale(sum_all(add(positive, negative)), -1.0);
}

Tensor sample_epsilon(Rng& rng, int64_t pairs, int64_t classes,
                      int64_t components) {
  Tensor eps = Tensor::zeros({pairs, classes, components});
  for (auto& v : eps.values()) v = rng.normal();
  return eps;
}

}  // namespace vsgg
