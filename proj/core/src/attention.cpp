#include "vsgg/attention.hpp"

#include <cmath>

#include "vsgg/errors.hpp"

namespace vsgg {

namespace {
constexpr double kMaskLogit = -1e30;
}

MultiHeadConfig MultiHeadConfig::balanced(int64_t model_dim, int64_t heads,
                                          int64_t ffn_hidden, int64_t layers) {
  if (heads < 1 || model_dim % heads != 0)
    throw ConfigError("multi-head config: heads must divide model_dim");
  MultiHeadConfig cfg;
  cfg.model_dim = model_dim;
  cfg.heads = heads;
  cfg.dim_q = cfg.dim_k = cfg.dim_v = model_dim / heads;
  cfg.ffn_hidden = ffn_hidden;
  cfg.layers = layers;
  cfg.validate();
  return cfg;
}

void MultiHeadConfig::validate() const {
  if (model_dim < 1 || heads < 1 || layers < 1)
    throw ConfigError("multi-head config: nonpositive extent");
  if (dim_q != dim_k)
    throw ConfigError("multi-head config: dim_q must equal dim_k");
  if (dim_q < 1 || dim_v < 1 || ffn_hidden < 1)
    throw ConfigError("multi-head config: nonpositive head/ffn dims");
}

MultiHeadWeights make_multi_head_weights(ParamStore& store,
                                         const std::string& prefix,
                                         const MultiHeadConfig& cfg) {
  cfg.validate();
  MultiHeadWeights w;
  for (int64_t h = 0; h < cfg.heads; ++h) {
    const std::string hp = prefix + ".h" + std::to_string(h);
    MultiHeadWeights::Head head;
    head.wq = store.weight(hp + ".wq", cfg.model_dim, {cfg.model_dim, cfg.dim_q});
    head.wk = store.weight(hp + ".wk", cfg.model_dim, {cfg.model_dim, cfg.dim_k});
    head.wv = store.weight(hp + ".wv", cfg.model_dim, {cfg.model_dim, cfg.dim_v});
    w.heads.push_back(std::move(head));
  }
  w.wh = store.weight(prefix + ".wh", cfg.heads * cfg.dim_v,
                      {cfg.heads * cfg.dim_v, cfg.model_dim});
  return w;
}

EncoderLayerWeights make_encoder_layer_weights(ParamStore& store,
                                               const std::string& prefix,
                                               const MultiHeadConfig& cfg) {
  EncoderLayerWeights w;
  w.mha = make_multi_head_weights(store, prefix + ".mha", cfg);
  w.ln1_gain = store.constant(prefix + ".ln1.gain", {cfg.model_dim}, 1.0);
  w.ln1_bias = store.zeros(prefix + ".ln1.bias", {cfg.model_dim});
  w.ffn_w1 = store.weight(prefix + ".ffn.w1", cfg.model_dim,
                          {cfg.model_dim, cfg.ffn_hidden});
  w.ffn_b1 = store.zeros(prefix + ".ffn.b1", {cfg.ffn_hidden});
  w.ffn_w2 = store.weight(prefix + ".ffn.w2", cfg.ffn_hidden,
                          {cfg.ffn_hidden, cfg.model_dim});
  w.ffn_b2 = store.zeros(prefix + ".ffn.b2", {cfg.model_dim});
  w.ln2_gain = store.constant(prefix + ".ln2.gain", {cfg.model_dim}, 1.0);
  w.ln2_bias = store.zeros(prefix + ".ln2.bias", {cfg.model_dim});
  return w;
}

std::vector<EncoderLayerWeights> make_encoder_stack_weights(
    ParamStore& store, const std::string& prefix, const MultiHeadConfig& cfg) {
  std::vector<EncoderLayerWeights> layers;
  for (int64_t l = 0; l < cfg.layers; ++l)
    layers.push_back(
        make_encoder_layer_weights(store, prefix + ".l" + std::to_string(l), cfg));
  return layers;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const KeyPadding* key_padding) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    throw DimensionError("attention: expects rank-2 Q, K, V");
  if (q.dim(1) != k.dim(1))
    throw DimensionError("attention: Q/K feature dims differ");
  if (k.dim(0) != v.dim(0))
    throw DimensionError("attention: K/V row counts differ");
  const int64_t keys = k.dim(0);
  if (key_padding) {
    if (static_cast<int64_t>(key_padding->size()) != keys)
      throw DimensionError("attention: mask length mismatch");
    bool any_valid = false;
    for (uint8_t padded : *key_padding) any_valid |= !padded;
    if (!any_valid) throw ContractError("attention: all keys masked");
  }

  Tensor logits =
      scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(q.dim(1))));
  if (key_padding) {
    std::vector<double> bias(static_cast<size_t>(keys), 0.0);
    for (int64_t j = 0; j < keys; ++j)
      if ((*key_padding)[static_cast<size_t>(j)]) bias[static_cast<size_t>(j)] = kMaskLogit;
    logits = add_rowvec(logits, Tensor::from({keys}, std::move(bias)));
  }
  return matmul(softmax(logits, -1), v);
}

Tensor multi_head(const Tensor& xq, const Tensor& xk, const Tensor& xv,
                  const MultiHeadWeights& w, const KeyPadding* key_padding) {
  if (w.heads.empty()) throw ContractError("multi_head: no heads");
  std::vector<Tensor> outs;
  outs.reserve(w.heads.size());
  for (const auto& head : w.heads) {
    outs.push_back(attention(matmul(xq, head.wq), matmul(xk, head.wk),
                             matmul(xv, head.wv), key_padding));
  }
  return matmul(outs.size() == 1 ? outs[0] : concat_cols(outs), w.wh);
}

Tensor encoder_layer(const Tensor& qk_input, const Tensor& v_input,
                     const EncoderLayerWeights& w,
                     const KeyPadding* key_padding, double ln_eps) {
  Tensor attended = multi_head(qk_input, qk_input, v_input, w.mha, key_padding);
  Tensor h = layer_norm(add(v_input, attended), w.ln1_gain, w.ln1_bias, ln_eps);
  Tensor f = ffn2(h, w.ffn_w1, w.ffn_b1, w.ffn_w2, w.ffn_b2);
  return layer_norm(add(h, f), w.ln2_gain, w.ln2_bias, ln_eps);
}

Tensor ffn2(const Tensor& x, const Tensor& w1, const Tensor& b1,
            const Tensor& w2, const Tensor& b2) {
  return add_rowvec(matmul(relu(add_rowvec(matmul(x, w1), b1)), w2), b2);
}

Tensor sinusoidal_positions(int64_t length, int64_t dim) {
  if (dim < 2 || dim % 2 != 0)
    throw ContractError("sinusoidal_positions: dim must be even and >= 2");
  if (length < 0) throw ContractError("sinusoidal_positions: negative length");
  Tensor pe = Tensor::zeros({length, dim});
  auto& vals = pe.values();
  for (int64_t t = 0; t < length; ++t) {
    for (int64_t i = 0; i < dim / 2; ++i) {
      const double rate =
          std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(dim));
      const double angle = static_cast<double>(t) / rate;
      vals[static_cast<size_t>(t * dim + 2 * i)] = std::sin(angle);
      vals[static_cast<size_t>(t * dim + 2 * i + 1)] = std::cos(angle);
    }
  }
  return pe;
}

}  // namespace vsgg
