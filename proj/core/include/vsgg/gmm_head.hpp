#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vsgg/params.hpp"
#include "vsgg/tensor.hpp"

namespace vsgg {

// K-component mixture classification head. Every per-class quantity is laid
// out [pairs, classes, components].
struct GmmHeadWeights {
  int64_t components = 0;
  // Per component, 2-layer FFN projections z -> classes for each of the
  // mean, variance and mixture-weight functions.
  std::vector<Tensor> mu_w1, mu_b1, mu_w2, mu_b2;
  std::vector<Tensor> sigma_w1, sigma_b1, sigma_w2, sigma_b2;
  std::vector<Tensor> pi_w1, pi_b1, pi_w2, pi_b2;
};

GmmHeadWeights make_gmm_head_weights(ParamStore& store,
                                     const std::string& prefix, int64_t d_rel,
                                     int64_t classes, int64_t components,
                                     int64_t hidden);

struct GmmOutput {
  Tensor mu;     // [N, C, K], logit units
  Tensor sigma;  // [N, C, K], sigmoid-bounded in (0,1)
  Tensor pi;     // [N, C, K], simplex over K
};

// mu = f_mu(z), sigma = sigmoid(f_sigma(z)), pi = softmax_K(f_pi(z)).
GmmOutput gmm_params(const Tensor& z, const GmmHeadWeights& weights);

// U_al = sum_k pi_k sigma_k, per (pair, class).
Tensor aleatoric(const Tensor& pi, const Tensor& sigma);
// U_ep = sum_k pi_k (mu_k - sum_j pi_j mu_j)^2, per (pair, class).
Tensor epistemic(const Tensor& pi, const Tensor& mu);

struct TrainScores {
  Tensor c_hat;   // mu + eps * sqrt(sigma), [N, C, K]
  Tensor scores;  // sum_k pi_k sigmoid(c_hat_k), [N, C]
};

// Reparameterized sampling; `eps` holds one recorded standard-normal draw
// per (pair, class, component) so a step replays exactly.
TrainScores train_scores(const GmmOutput& params, const Tensor& eps);

// Inference rule: sum_k pi_k sigmoid(mu_k); equals train_scores at eps = 0.
Tensor infer_scores(const GmmOutput& params);

// Multi-label binary cross entropy on mixture scores, summed over pairs and
// classes. Scores are clamped to [1e-12, 1 - 1e-12] before the logs.
Tensor predicate_loss(const Tensor& scores, const Tensor& targets);

// Draws a [N, C, K] standard-normal tensor from `rng`.
class Rng;
Tensor sample_epsilon(Rng& rng, int64_t pairs, int64_t classes,
                      int64_t components);

}  // namespace vsgg
