#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vsgg {

enum class TaskMode { kPredCls, kSgCls, kSgDet };
enum class Regime { kWithConstraint, kNoConstraints };
// With-Constraint mean recall can pool matches per class across frames (the
// reference behavior) or average per-frame per-class recalls.
enum class MrPooling { kPooled, kPerFrame };

std::string to_string(TaskMode mode);
TaskMode task_mode_from_string(const std::string& name);

struct BoxEntity {
  std::array<double, 4> box{};
  int64_t cls = 0;
  double score = 1.0;
};

// Per-pair predicate score vector, the unit the ranking consumes.
struct PairScores {
  int pair_index = 0;
  BoxEntity subject, object;
  std::vector<double> predicate_scores;
};

struct FramePrediction {
  int64_t video = 0;
  int frame = 0;
  std::vector<PairScores> pairs;
};

struct TripletCandidate {
  int pair_index = 0;
  int64_t predicate = 0;
  double predicate_score = 0.0;
  double composite = 0.0;  // subject * predicate * object scores
  BoxEntity subject, object;
};

struct GtTriplet {
  int pair_index = 0;
  int64_t subject_class = 0;
  int64_t predicate = 0;
  int64_t object_class = 0;
  std::array<double, 4> subject_box{};
  std::array<double, 4> object_box{};
};

struct FrameGroundTruth {
  int64_t video = 0;
  int frame = 0;
  std::vector<GtTriplet> triplets;
};

// With Constraint admits only each pair's top-scoring predicate; No
// Constraints admits every (pair, predicate). Sorted by composite score
// descending, ties broken by (pair index, predicate index) ascending.
std::vector<TripletCandidate> rank_triplets(const std::vector<PairScores>& pairs,
                                            Regime regime);

double iou(const std::array<double, 4>& a, const std::array<double, 4>& b);

// Image-based Recall@K: per frame the fraction of GT triplets matched by the
// top-K candidates (greedy in rank order, each GT matched once), averaged
// over frames with at least one GT triplet. PREDCLS/SGCLS match pairs by
// identity; SGDET by class + IoU >= iou_threshold on both boxes.
double recall_at_k(const std::vector<FramePrediction>& predictions,
                   const std::vector<FrameGroundTruth>& ground_truth, int k,
                   TaskMode mode, Regime regime, double iou_threshold = 0.5);

struct MeanRecallResult {
  double mean_recall = 0.0;
  std::vector<double> per_class_recall;  // meaningful where class_present
  std::vector<uint8_t> class_present;    // >= 1 GT instance
  std::vector<int64_t> gt_counts;        // eval GT instances per class
};

MeanRecallResult mean_recall_at_k(
    const std::vector<FramePrediction>& predictions,
    const std::vector<FrameGroundTruth>& ground_truth, int k, TaskMode mode,
    Regime regime, double iou_threshold = 0.5,
    MrPooling pooling = MrPooling::kPooled);

// ---- HEAD / BODY / TAIL -----------------------------------------------

struct SplitThresholds {
  int64_t head_min = 0;  // count >= head_min -> HEAD
  int64_t body_min = 0;  // body_min <= count < head_min -> BODY, else TAIL
};

// Count-quantile cut points for synthetic corpora: top 20% of classes by
// training count -> HEAD, middle 50% -> BODY, bottom 30% -> TAIL.
SplitThresholds quantile_thresholds(const std::vector<int64_t>& train_counts);

struct SplitMeans {
  std::optional<double> head, body, tail;  // absent when the bucket is empty
};

// Buckets classes by training-sample count and averages recall per bucket.
// Classes absent from the eval ground truth are skipped.
SplitMeans split_report(const std::vector<double>& per_class_recall,
                        const std::vector<uint8_t>& class_present,
                        const std::vector<int64_t>& train_counts,
                        const SplitThresholds& thresholds);

// ---- report assembly and files ------------------------------------------

struct MetricReport {
  TaskMode task = TaskMode::kPredCls;
  std::vector<int> ks{10, 20, 50};
  SplitThresholds thresholds;
  std::vector<int64_t> train_counts;  // per predicate class
  std::vector<int64_t> gt_counts;     // eval GT per predicate class

  struct Entry {
    double recall = 0.0;
    double mean_recall = 0.0;
    std::vector<double> per_class_recall;
    std::vector<uint8_t> class_present;
    SplitMeans split;
  };
  // regime -> K -> entry; regimes keyed "with_constraint"/"no_constraints"
  std::map<std::string, std::map<int, Entry>> entries;
};

MetricReport build_metric_report(
    const std::vector<FramePrediction>& predictions,
    const std::vector<FrameGroundTruth>& ground_truth, TaskMode mode,
    const std::vector<int64_t>& train_counts, const SplitThresholds& thresholds,
    const std::vector<int>& ks = {10, 20, 50}, double iou_threshold = 0.5,
    MrPooling pooling = MrPooling::kPooled);

void write_metric_report(const MetricReport& report, const std::string& path);
MetricReport read_metric_report(const std::string& path);

// Prediction dump, JSON Lines: one record per frame with the ranked
// candidate list (subject/predicate/object with boxes, classes, scores).
void write_predictions(const std::vector<FramePrediction>& predictions,
                       Regime regime, const std::string& path);

}  // namespace vsgg
