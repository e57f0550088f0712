#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vsgg/params.hpp"
#include "vsgg/tensor.hpp"

namespace vsgg {

// Key-padding mask: one flag per key row, true = padded slot. Padded keys
// receive an additive -1e30 logit before the softmax and are also excluded
// from losses by the callers.
using KeyPadding = std::vector<uint8_t>;

struct MultiHeadConfig {
  int64_t model_dim = 0;   // D
  int64_t heads = 1;       // H
  int64_t dim_q = 0;       // per-head query dim (== dim_k)
  int64_t dim_k = 0;
  int64_t dim_v = 0;
  int64_t ffn_hidden = 0;
  int64_t layers = 1;

  static MultiHeadConfig balanced(int64_t model_dim, int64_t heads,
                                  int64_t ffn_hidden, int64_t layers);
  void validate() const;
};

struct MultiHeadWeights {
  struct Head {
    Tensor wq, wk, wv;  // [D, dim_q] / [D, dim_k] / [D, dim_v]
  };
  std::vector<Head> heads;
  Tensor wh;  // [H*dim_v, D]
};

struct EncoderLayerWeights {
  MultiHeadWeights mha;
  Tensor ln1_gain, ln1_bias;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Tensor ln2_gain, ln2_bias;
};

// Registers the weights under `prefix` in the store.
MultiHeadWeights make_multi_head_weights(ParamStore& store,
                                         const std::string& prefix,
                                         const MultiHeadConfig& cfg);
EncoderLayerWeights make_encoder_layer_weights(ParamStore& store,
                                               const std::string& prefix,
                                               const MultiHeadConfig& cfg);
std::vector<EncoderLayerWeights> make_encoder_stack_weights(
    ParamStore& store, const std::string& prefix, const MultiHeadConfig& cfg);

// Softmax(Q K^T / sqrt(dim_k)) V. Throws ContractError when every key is
// padded (the softmax row would be over an empty set).
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const KeyPadding* key_padding = nullptr);

// Concat over heads of attention(Xq Wq_i, Xk Wk_i, Xv Wv_i), times W_H.
Tensor multi_head(const Tensor& xq, const Tensor& xk, const Tensor& xv,
                  const MultiHeadWeights& w,
                  const KeyPadding* key_padding = nullptr);

// Post-norm transformer block. `qk_input` feeds the attention queries/keys,
// `v_input` feeds the values and the residual path; self-attention passes the
// same tensor for both, the temporal decoder passes values without the
// positional term.
Tensor encoder_layer(const Tensor& qk_input, const Tensor& v_input,
                     const EncoderLayerWeights& w,
                     const KeyPadding* key_padding = nullptr,
                     double ln_eps = 1e-5);

// relu(x W1 + b1) W2 + b2
Tensor ffn2(const Tensor& x, const Tensor& w1, const Tensor& b1,
            const Tensor& w2, const Tensor& b2);

// Fixed sinusoidal table: pe[t, 2i] = sin(t / 10000^(2i/D)),
// pe[t, 2i+1] = cos(t / 10000^(2i/D)). D must be even.
Tensor sinusoidal_positions(int64_t length, int64_t dim);

}  // namespace vsgg
