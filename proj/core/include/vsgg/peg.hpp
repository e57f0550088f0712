#pragma once

#include <cstdint>
#include <vector>

#include "vsgg/annotations.hpp"
#include "vsgg/attention.hpp"
#include "vsgg/tensor.hpp"

namespace vsgg {

struct FfnWeights {
  Tensor w1, b1, w2, b2;
};

FfnWeights make_ffn_weights(ParamStore& store, const std::string& prefix,
                            int64_t in_dim, int64_t hidden, int64_t out_dim);

Tensor apply_ffn(const Tensor& x, const FfnWeights& w);

// Input projections for pair representations: f_v projects proposal
// features to d_v, f_box lifts the 8 box coordinates into union-feature
// space, f_u projects the summed union path to d_u.
struct PegInputWeights {
  FfnWeights f_v;    // feat_dim -> d_v
  FfnWeights f_box;  // 8 -> feat_dim
  FfnWeights f_u;    // feat_dim -> d_u
};

PegInputWeights make_peg_input_weights(ParamStore& store,
                                       const std::string& prefix,
                                       int64_t feat_dim, int64_t d_v,
                                       int64_t d_u);

struct PairInput {
  int frame = 0;
  int subject = 0;
  int object = 0;
  Tensor r;  // [1, 2*d_v + d_u + 2*d_s]
};

// Concat(f_v(v_subj), f_v(v_obj), f_u(u + f_box(boxes)), s_subj, s_obj).
// Both detections must come from the same frame and differ.
PairInput build_pair_input(const DetectedObject& subject,
                           const DetectedObject& object,
                           const std::vector<double>& union_feature,
                           const Tensor& subject_sem, const Tensor& object_sem,
                           const PegInputWeights& weights, bool use_det_boxes);

// n encoder layers over one frame's pair set. Pairs within a frame are
// unordered, so no positional encoding is added here.
Tensor spatial_encode(const Tensor& frame_pairs,
                      const std::vector<EncoderLayerWeights>& layers,
                      double ln_eps = 1e-5);

struct TemporalWindow {
  int start = 0;   // first frame (0-based)
  int length = 0;  // <= eta; the final window may be shorter
};

// Sliding windows over frames 0..frame_count-1 at `stride` (stride == eta
// gives the non-overlapping reading; stride 1 the dense one). A final short
// window covers leftover frames. frame_count == 0 gives an empty list.
std::vector<TemporalWindow> build_windows(int64_t frame_count, int64_t eta,
                                          int64_t stride);

// n decoder layers where queries/keys carry the learnable temporal encoding
// of each slot's frame offset inside the window and values do not.
// `slot_offsets[i]` is the member frame minus the window start.
Tensor temporal_decode(const Tensor& window_slots,
                       const std::vector<int64_t>& slot_offsets,
                       const Tensor& temporal_encoding,  // [eta, d_rel]
                       const std::vector<EncoderLayerWeights>& layers,
                       double ln_eps = 1e-5);

}  // namespace vsgg
