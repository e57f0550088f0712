#include "vsgg/peg.hpp"

#include "vsgg/errors.hpp"

namespace vsgg {

FfnWeights make_ffn_weights(ParamStore& store, const std::string& prefix,
                            int64_t in_dim, int64_t hidden, int64_t out_dim) {
  FfnWeights w;
  w.w1 = store.weight(prefix + ".w1", in_dim, {in_dim, hidden});
  w.b1 = store.zeros(prefix + ".b1", {hidden});
  w.w2 = store.weight(prefix + ".w2", hidden, {hidden, out_dim});
  w.b2 = store.zeros(prefix + ".b2", {out_dim});
  return w;
}

Tensor apply_ffn(const Tensor& x, const FfnWeights& w) {
  return ffn2(x, w.w1, w.b1, w.w2, w.b2);
}

PegInputWeights make_peg_input_weights(ParamStore& store,
                                       const std::string& prefix,
                                       int64_t feat_dim, int64_t d_v,
                                       int64_t d_u) {
  PegInputWeights w;
  w.f_v = make_ffn_weights(store, prefix + ".f_v", feat_dim, feat_dim, d_v);
  w.f_box = make_ffn_weights(store, prefix + ".f_box", 8, feat_dim, feat_dim);
  w.f_u = make_ffn_weights(store, prefix + ".f_u", feat_dim, feat_dim, d_u);
  return w;
}

PairInput build_pair_input(const DetectedObject& subject,
                           const DetectedObject& object,
                           const std::vector<double>& union_feature,
                           const Tensor& subject_sem, const Tensor& object_sem,
                           const PegInputWeights& weights, bool use_det_boxes) {
  if (subject.frame != object.frame)
    throw ContractError("build_pair_input: subject and object frames differ");
  if (&subject == &object)
    throw ContractError("build_pair_input: subject and object must differ");

  const int64_t feat_dim = static_cast<int64_t>(subject.feature.size());
  Tensor v_s = Tensor::from({1, feat_dim}, subject.feature);
  Tensor v_o = Tensor::from({1, feat_dim}, object.feature);
  Tensor u = Tensor::from({1, static_cast<int64_t>(union_feature.size())},
                          union_feature);

  const auto& sb = use_det_boxes ? subject.det_box : subject.gt_box;
  const auto& ob = use_det_boxes ? object.det_box : object.gt_box;
  Tensor boxes = Tensor::from(
      {1, 8}, {sb[0], sb[1], sb[2], sb[3], ob[0], ob[1], ob[2], ob[3]});

  Tensor union_path = apply_ffn(add(u, apply_ffn(boxes, weights.f_box)), weights.f_u);
  PairInput out;
  out.frame = subject.frame;
  out.r = concat_cols({apply_ffn(v_s, weights.f_v), apply_ffn(v_o, weights.f_v),
                       union_path, subject_sem, object_sem});
  return out;
}

Tensor spatial_encode(const Tensor& frame_pairs,
                      const std::vector<EncoderLayerWeights>& layers,
                      double ln_eps) {
  if (frame_pairs.rank() != 2 || frame_pairs.dim(0) < 1)
    throw ContractError("spatial_encode: need at least one pair");
  Tensor x = frame_pairs;
  for (const auto& layer : layers) x = encoder_layer(x, x, layer, nullptr, ln_eps);
  return x;
}

std::vector<TemporalWindow> build_windows(int64_t frame_count, int64_t eta,
                                          int64_t stride) {
  if (eta < 1) throw ContractError("build_windows: eta must be >= 1");
  if (stride < 1) throw ContractError("build_windows: stride must be >= 1");
  std::vector<TemporalWindow> windows;
  if (frame_count == 0) return windows;

  int64_t start = 0;
  int64_t covered = -1;
  while (start + eta <= frame_count) {
    windows.push_back({static_cast<int>(start), static_cast<int>(eta)});
    covered = start + eta - 1;
    start += stride;
  }
  if (covered < frame_count - 1) {
    // Final short window over the leftover frames.
    int64_t s = std::min(start, frame_count - 1);
    windows.push_back({static_cast<int>(s), static_cast<int>(frame_count - s)});
  }
  return windows;
}

Tensor temporal_decode(const Tensor& window_slots,
                       const std::vector<int64_t>& slot_offsets,
                       const Tensor& temporal_encoding,
                       const std::vector<EncoderLayerWeights>& layers,
                       double ln_eps) {
  if (window_slots.rank() != 2 || window_slots.dim(0) < 1)
    throw ContractError("temporal_decode: empty window");
  if (static_cast<int64_t>(slot_offsets.size()) != window_slots.dim(0))
    throw ContractError("temporal_decode: offset count mismatch");
  for (int64_t off : slot_offsets) {
    if (off < 0 || off >= temporal_encoding.dim(0))
      throw ContractError("temporal_decode: slot offset outside the window");
  }
  Tensor x = window_slots;
  Tensor enc = gather_rows(temporal_encoding, slot_offsets);
  for (const auto& layer : layers)
    x = encoder_layer(add(x, enc), x, layer, nullptr, ln_eps);
  return x;
}

}  // namespace vsgg
