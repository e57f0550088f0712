#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "vsgg/annotations.hpp"
#include "vsgg/attention.hpp"
#include "vsgg/gmm_head.hpp"
#include "vsgg/memory.hpp"
#include "vsgg/metrics.hpp"
#include "vsgg/ospu.hpp"
#include "vsgg/peg.hpp"

namespace vsgg {

struct ModelConfig {
  int64_t object_classes = 0;
  int64_t predicate_classes = 0;
  int64_t feat_dim = 64;
  int64_t d_v = 32;
  int64_t d_u = 32;
  int64_t d_s = 16;
  int64_t heads = 8;
  int64_t seq_layers = 1;
  int64_t spa_layers = 1;
  int64_t dec_layers = 1;
  int64_t ffn_hidden = 128;
  int64_t cls_hidden = 64;
  int64_t eta = 2;
  int64_t window_stride = 0;  // 0 -> eta (non-overlapping windows)
  int64_t gmm_components = 4;
  int64_t gmm_hidden = 0;  // 0 -> max(d_rel/2, 8)
  double lambda = 0.5;
  TaskMode task = TaskMode::kSgCls;
  bool use_mdu = true;
  bool use_gmm = true;
  bool use_ospu = true;
  bool use_intra = true;
  double ln_eps = 1e-5;
  int64_t max_frames = 256;  // length of the fixed positional table

  int64_t d_rel() const { return 2 * d_v + d_u + 2 * d_s; }
  int64_t stride() const { return window_stride > 0 ? window_stride : eta; }
  void validate() const;
};

// The full pipeline: object sequences -> pair embeddings -> (training-only
// memory diffusion) -> mixture classification head.
class Model {
 public:
  Model(ModelConfig config, uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  struct TrainForward {
    Tensor loss_total;
    Tensor loss_pred, loss_obj, loss_intra;
    double mean_u_al = 0.0;  // over pairs x classes, this video
    double mean_u_ep = 0.0;
    int64_t pair_count = 0;
  };

  // Builds the full training graph for one video (batch size 1). Epochs
  // start at 1; `bank` must be present when the schedule says diffuse.
  // Fresh noise is drawn from `eps_rng` unless `frozen_eps` is provided
  // (gradient checks, replays).
  TrainForward train_step(const VideoAnnotation& video, int epoch,
                          const MemoryBank* bank, Rng* eps_rng,
                          const Tensor* frozen_eps = nullptr);

  struct FrameInference {
    std::vector<PairScores> pairs;
    std::vector<int64_t> object_classes;  // per frame object, -1 if no pairs
    std::vector<double> object_scores;
  };

  // Inference pass: memory diffusion bypassed, scores from the closed-form
  // rule (no sampling).
  std::vector<FrameInference> infer_video(const VideoAnnotation& video);

  // Runs the frozen current weights over the training set and rebuilds the
  // prototype bank (the epoch-alpha bank from epoch alpha-1 weights).
  // Training labels (observed) select the contributors. Epoch must be >= 2.
  MemoryBank compute_memory_bank(const std::vector<VideoAnnotation>& videos,
                                 int epoch);

 private:
  struct PipelineOut {
    // Per frame: pair-slot rows of r_tem gathered back, one Tensor [K(t), D].
    std::vector<Tensor> frame_pair_embeddings;  // undefined when no pairs
    std::vector<std::vector<int64_t>> frame_pair_indices;
    Tensor object_logits;                  // [n_objects, C_o]; undefined in predcls
    Tensor object_embeddings;              // OSPU output (undefined without OSPU)
    std::vector<int64_t> flat_gt_classes;  // per flat object
    std::vector<std::pair<int, int>> flat_to_frame_obj;
    std::vector<int64_t> semantic_classes;  // per flat object: index into table
    Tensor intra_loss;                      // undefined unless OSPU + intra
    Tensor object_loss;                     // undefined in predcls
  };

  PipelineOut run_pipeline(const VideoAnnotation& video);
  // Stacks every pair embedding of the video into [N, d_rel] (frame order).
  Tensor collect_pairs(const PipelineOut& out,
                       std::vector<const PairAnnotation*>* pair_refs) const;

  ModelConfig config_;
  ParamStore params_;
  Tensor positional_;  // fixed sinusoidal table [max_frames, feat_dim]

  std::optional<OspuWeights> ospu_;
  std::optional<FfnWeights> frame_cls_;  // per-frame ablation classifier
  PegInputWeights peg_input_;
  Tensor semantic_table_;  // [C_o, d_s]
  std::vector<EncoderLayerWeights> spa_enc_;
  std::vector<EncoderLayerWeights> temp_dec_;
  Tensor temporal_encoding_;  // [eta, d_rel]
  std::optional<MduWeights> mdu_;
  std::optional<GmmHeadWeights> gmm_;
  std::optional<FfnWeights> ffn_head_;  // plain-head ablation
};

// GT triplets for the metric harness, frame-aligned with infer_video output.
std::vector<FrameGroundTruth> ground_truth_frames(const VideoAnnotation& video);

}  // namespace vsgg
