#pragma once

#include <cstdint>
#include <vector>

#include "vsgg/annotations.hpp"
#include "vsgg/attention.hpp"
#include "vsgg/tensor.hpp"

namespace vsgg {

// One per-class object sequence across the frames of a video. Members index
// into the flat detection list handed to build_sequences; they are ordered by
// frame, then confidence descending within a frame.
struct ObjectSequence {
  int64_t detector_class = 0;
  std::vector<int> members;
  std::vector<int> frames;  // frame of each member, ascending
};

struct SequenceBatch {
  std::vector<ObjectSequence> sequences;  // ordered by detector class
  int64_t padded_len = 0;                 // max member count over sequences

  int64_t total_members() const;
};

// Groups detections into one sequence per detector-predicted class present in
// the video. Empty input gives an empty batch.
SequenceBatch build_sequences(const std::vector<DetectedObject>& objects);

struct OspuWeights {
  std::vector<EncoderLayerWeights> encoder;
  Tensor cls_w1, cls_b1, cls_w2, cls_b2;  // 2-layer classification FFN
};

OspuWeights make_ospu_weights(ParamStore& store, const std::string& prefix,
                              const MultiHeadConfig& cfg, int64_t cls_hidden,
                              int64_t object_classes);

struct OspuResult {
  Tensor embeddings;  // [n_objects, D], row i belongs to input object i
  Tensor logits;      // [n_objects, object_classes]
  Tensor loss;        // scalar cross-entropy over unpadded slots
};

// Runs the zero-padded per-class batch through the sequence encoder with
// fixed sinusoidal positions indexed by frame, then the classifier head.
// `features` holds one row per detection (same order as build_sequences
// input); `gt_classes` supplies the labels for the loss. Throws
// ContractError on an empty batch.
OspuResult encode_and_classify(const SequenceBatch& batch,
                               const Tensor& features,
                               const std::vector<int64_t>& gt_classes,
                               const OspuWeights& weights,
                               const Tensor& positional,  // [>=T, D]
                               double ln_eps = 1e-5);

// Intra-video supervised contrastive loss over embedding rows: squared
// distance for same-label pairs, hinge max(0, 1 - d^2) for different labels.
// Pairs are counted once (i < j).
Tensor intra_contrastive(const Tensor& embeddings,
                         const std::vector<int64_t>& labels);

}  // namespace vsgg
