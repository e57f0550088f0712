#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vsgg/annotations.hpp"
#include "vsgg/model.hpp"

namespace vsgg {

// One run's configuration. Defaults follow the published recipe: 10 epochs,
// batch size 1 video, initial learning rate 1e-5, lambda and mixture size
// resolved per task (0.5/0.3/0.5 and 6/4/4).
struct RunConfig {
  TaskMode task = TaskMode::kSgCls;
  int epochs = 10;
  double lr = 1e-5;
  double lambda = -1.0;        // < 0 -> per-task default
  int64_t gmm_components = 0;  // 0 -> per-task default
  int64_t eta = 2;
  int64_t window_stride = 0;  // 0 -> eta
  uint64_t seed = 7;
  bool use_mdu = true;
  bool use_gmm = true;
  bool use_ospu = true;
  bool use_intra = true;

  int64_t d_v = 32, d_u = 32, d_s = 16;
  int64_t heads = 8;
  int64_t seq_layers = 1, spa_layers = 1, dec_layers = 1;
  int64_t ffn_hidden = 128, cls_hidden = 64;
  int64_t gmm_hidden = 0;  // 0 -> max(d_rel/2, 8)

  // Plateau rule: halve the lr after `plateau_epochs` epochs without a
  // train-loss improvement above `plateau_tol`.
  double plateau_tol = 1e-4;
  int plateau_epochs = 2;
  double lr_decay = 0.5;

  double weight_decay = 1e-4;

  double resolved_lambda() const;
  int64_t resolved_components() const;
  ModelConfig to_model_config(const AnnotationHeader& header) const;
};

struct EpochStats {
  int epoch = 0;
  double loss_total = 0.0;
  double loss_pred = 0.0;
  double loss_obj = 0.0;
  double loss_intra = 0.0;
  double mean_u_al = 0.0;
  double mean_u_ep = 0.0;
  double lr = 0.0;
  int64_t bank_active_classes = -1;  // -1 when no bank this epoch
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  std::shared_ptr<Model> model;
  std::vector<int64_t> train_counts;  // observed labels, drives the splits
};

// Trains on the file's videos in order (batch size 1). When `out_dir` is
// nonempty, writes per-epoch checkpoints, bank dumps, train_counts.json and
// training_log.json there. Throws NumericError on a non-finite loss.
TrainResult train_model(const RunConfig& config, const AnnotationFile& data,
                        const std::string& out_dir = "");

void write_training_log(const std::vector<EpochStats>& stats,
                        const std::string& path);
std::vector<EpochStats> read_training_log(const std::string& path);

struct EvalOptions {
  std::vector<int> ks{10, 20, 50};
  double iou_threshold = 0.5;
  MrPooling pooling = MrPooling::kPooled;
  // Absolute split thresholds; when head_min == 0 the quantile rule over
  // train_counts applies.
  SplitThresholds thresholds{0, 0};
};

struct EvalResult {
  MetricReport report;
  std::vector<FramePrediction> predictions;
  std::vector<FrameGroundTruth> ground_truth;
};

EvalResult evaluate_model(Model& model, const AnnotationFile& data,
                          const std::vector<int64_t>& train_counts,
                          const EvalOptions& options = {});

// Cross-frame classification flips summed over persistent objects (same
// index in consecutive frames), the temporal-consistency surrogate.
int64_t count_prediction_flips(Model& model, const AnnotationFile& data);

// Plain-text tables + x/y plot data derived from a run directory; every
// value is re-serialized with the same JSON writer that produced the log,
// so the table bytes match the log bytes.
struct RunReport {
  std::string uncertainty_table;  // epoch, mean U_al, mean U_ep
  std::string loss_curve;         // "epoch loss" rows
  std::string per_class_recall;   // "class recall" rows (when report.json exists)
};

RunReport summarize_run(const std::string& run_dir);

}  // namespace vsgg
