#include "vsgg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "vsgg/errors.hpp"

namespace vsgg {

namespace {

using ordered_json = nlohmann::ordered_json;

bool boxes_match(const TripletCandidate& cand, const GtTriplet& gt,
                 TaskMode mode, double iou_threshold) {
  if (mode == TaskMode::kSgDet) {
    return iou(cand.subject.box, gt.subject_box) >= iou_threshold &&
           iou(cand.object.box, gt.object_box) >= iou_threshold;
  }
  return cand.pair_index == gt.pair_index;
}

bool candidate_matches(const TripletCandidate& cand, const GtTriplet& gt,
                       TaskMode mode, double iou_threshold) {
  return cand.predicate == gt.predicate &&
         cand.subject.cls == gt.subject_class &&
         cand.object.cls == gt.object_class &&
         boxes_match(cand, gt, mode, iou_threshold);
}

// Greedy matcher: walks candidates in rank order, each consuming the first
// still-unmatched GT triplet it matches. Returns per-GT matched flags.
std::vector<uint8_t> match_top_k(const std::vector<TripletCandidate>& ranked,
                                 const std::vector<GtTriplet>& gts, int k,
                                 TaskMode mode, double iou_threshold) {
  std::vector<uint8_t> matched(gts.size(), 0);
  const size_t limit = std::min(ranked.size(), static_cast<size_t>(k));
  for (size_t c = 0; c < limit; ++c) {
    for (size_t g = 0; g < gts.size(); ++g) {
      if (matched[g]) continue;
      if (candidate_matches(ranked[c], gts[g], mode, iou_threshold)) {
        matched[g] = 1;
        break;
      }
    }
  }
  return matched;
}

void check_aligned(const std::vector<FramePrediction>& predictions,
                   const std::vector<FrameGroundTruth>& ground_truth) {
  if (predictions.size() != ground_truth.size())
    throw ContractError("metrics: prediction/ground-truth frame counts differ");
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].video != ground_truth[i].video ||
        predictions[i].frame != ground_truth[i].frame)
      throw ContractError("metrics: frame alignment mismatch at index " +
                          std::to_string(i));
  }
}

ordered_json entity_to_json(const BoxEntity& e) {
  ordered_json j;
  j["box"] = ordered_json{e.box[0], e.box[1], e.box[2], e.box[3]};
  j["class"] = e.cls;
  j["score"] = e.score;
  return j;
}

}  // namespace

std::string to_string(TaskMode mode) {
  switch (mode) {
    case TaskMode::kPredCls: return "predcls";
    case TaskMode::kSgCls: return "sgcls";
    case TaskMode::kSgDet: return "sgdet";
  }
  return "unknown";
}

TaskMode task_mode_from_string(const std::string& name) {
  if (name == "predcls") return TaskMode::kPredCls;
  if (name == "sgcls") return TaskMode::kSgCls;
  if (name == "sgdet") return TaskMode::kSgDet;
  throw ConfigError("unknown task mode: " + name +
                    " (expected predcls|sgcls|sgdet)");
}

std::vector<TripletCandidate> rank_triplets(const std::vector<PairScores>& pairs,
                                            Regime regime) {
  std::vector<TripletCandidate> out;
  for (const auto& pair : pairs) {
    const auto& scores = pair.predicate_scores;
    if (scores.empty()) continue;
    size_t begin = 0, end = scores.size();
    if (regime == Regime::kWithConstraint) {
      size_t best = 0;
      for (size_t p = 1; p < scores.size(); ++p)
        if (scores[p] > scores[best]) best = p;
      begin = best;
      end = best + 1;
    }
    for (size_t p = begin; p < end; ++p) {
      TripletCandidate cand;
      cand.pair_index = pair.pair_index;
      cand.predicate = static_cast<int64_t>(p);
      cand.predicate_score = scores[p];
      cand.composite = pair.subject.score * scores[p] * pair.object.score;
      cand.subject = pair.subject;
      cand.object = pair.object;
      out.push_back(std::move(cand));
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const TripletCandidate& a, const TripletCandidate& b) {
                     if (a.composite != b.composite)
                       return a.composite > b.composite;
                     if (a.pair_index != b.pair_index)
                       return a.pair_index < b.pair_index;
                     return a.predicate < b.predicate;
                   });
  return out;
}

double iou(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  const double ix = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
  const double iy = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
  const double inter = ix * iy;
  const double area_a = (a[2] - a[0]) * (a[3] - a[1]);
  const double area_b = (b[2] - b[0]) * (b[3] - b[1]);
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double recall_at_k(const std::vector<FramePrediction>& predictions,
                   const std::vector<FrameGroundTruth>& ground_truth, int k,
                   TaskMode mode, Regime regime, double iou_threshold) {
  if (k <= 0) throw ContractError("recall_at_k: K must be positive");
  check_aligned(predictions, ground_truth);
  double total = 0.0;
  int64_t frames = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    const auto& gts = ground_truth[i].triplets;
    if (gts.empty()) continue;
    auto ranked = rank_triplets(predictions[i].pairs, regime);
    auto matched = match_top_k(ranked, gts, k, mode, iou_threshold);
    int64_t hit = 0;
    for (uint8_t m : matched) hit += m;
    total += static_cast<double>(hit) / static_cast<double>(gts.size());
    ++frames;
  }
  return frames > 0 ? total / static_cast<double>(frames) : 0.0;
}

MeanRecallResult mean_recall_at_k(
    const std::vector<FramePrediction>& predictions,
    const std::vector<FrameGroundTruth>& ground_truth, int k, TaskMode mode,
    Regime regime, double iou_threshold, MrPooling pooling) {
  if (k <= 0) throw ContractError("mean_recall_at_k: K must be positive");
  check_aligned(predictions, ground_truth);

  int64_t classes = 0;
  int64_t total_gt = 0;
  for (const auto& fg : ground_truth)
    for (const auto& gt : fg.triplets) {
      classes = std::max(classes, gt.predicate + 1);
      ++total_gt;
    }
  if (total_gt == 0)
    throw ContractError("mean_recall_at_k: no ground-truth triplets");

  MeanRecallResult result;
  result.per_class_recall.assign(static_cast<size_t>(classes), 0.0);
  result.class_present.assign(static_cast<size_t>(classes), 0);
  result.gt_counts.assign(static_cast<size_t>(classes), 0);

  // Pooled counters and per-frame accumulators.
  std::vector<int64_t> matched_per_class(static_cast<size_t>(classes), 0);
  std::vector<double> frame_recall_sum(static_cast<size_t>(classes), 0.0);
  std::vector<int64_t> frame_count(static_cast<size_t>(classes), 0);

  for (size_t i = 0; i < predictions.size(); ++i) {
    const auto& gts = ground_truth[i].triplets;
    if (gts.empty()) continue;
    auto ranked = rank_triplets(predictions[i].pairs, regime);
    auto matched = match_top_k(ranked, gts, k, mode, iou_threshold);

    std::vector<int64_t> frame_gt(static_cast<size_t>(classes), 0);
    std::vector<int64_t> frame_hit(static_cast<size_t>(classes), 0);
    for (size_t g = 0; g < gts.size(); ++g) {
      const auto cls = static_cast<size_t>(gts[g].predicate);
      result.gt_counts[cls] += 1;
      frame_gt[cls] += 1;
      if (matched[g]) {
        matched_per_class[cls] += 1;
        frame_hit[cls] += 1;
      }
    }
    for (size_t c = 0; c < static_cast<size_t>(classes); ++c) {
      if (frame_gt[c] == 0) continue;
      frame_recall_sum[c] += static_cast<double>(frame_hit[c]) /
                             static_cast<double>(frame_gt[c]);
      frame_count[c] += 1;
    }
  }

  double sum = 0.0;
  int64_t present = 0;
  for (size_t c = 0; c < static_cast<size_t>(classes); ++c) {
    if (result.gt_counts[c] == 0) continue;
    result.class_present[c] = 1;
    result.per_class_recall[c] =
        pooling == MrPooling::kPooled
            ? static_cast<double>(matched_per_class[c]) /
                  static_cast<double>(result.gt_counts[c])
            : frame_recall_sum[c] / static_cast<double>(frame_count[c]);
    sum += result.per_class_recall[c];
    ++present;
  }
  result.mean_recall = sum / static_cast<double>(present);
  return result;
}

SplitThresholds quantile_thresholds(const std::vector<int64_t>& train_counts) {
  if (train_counts.empty())
    throw ContractError("quantile_thresholds: no classes");
  std::vector<int64_t> sorted = train_counts;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const auto c = static_cast<double>(sorted.size());
  const auto n_head = std::max<size_t>(1, static_cast<size_t>(std::llround(0.2 * c)));
  const auto n_tail = std::max<size_t>(1, static_cast<size_t>(std::llround(0.3 * c)));
  const size_t head_edge = std::min(n_head, sorted.size()) - 1;
  const size_t body_edge =
      std::min(sorted.size() - std::min(n_tail, sorted.size() - 1), sorted.size()) - 1;
  SplitThresholds t;
  // Clamps keep head_min > body_min > 0 even on degenerate count profiles.
  t.head_min = std::max<int64_t>(sorted[head_edge], 2);
  t.body_min = std::clamp<int64_t>(sorted[body_edge], 1, t.head_min - 1);
  return t;
}

SplitMeans split_report(const std::vector<double>& per_class_recall,
                        const std::vector<uint8_t>& class_present,
                        const std::vector<int64_t>& train_counts,
                        const SplitThresholds& thresholds) {
  if (thresholds.head_min <= thresholds.body_min || thresholds.body_min <= 0)
    throw ContractError("split_report: need head_min > body_min > 0");
  if (per_class_recall.size() != class_present.size())
    throw ContractError("split_report: present mask size mismatch");
  if (per_class_recall.size() > train_counts.size())
    throw ContractError("split_report: missing training counts");

  double sums[3] = {0, 0, 0};
  int64_t counts[3] = {0, 0, 0};
  for (size_t c = 0; c < per_class_recall.size(); ++c) {
    if (!class_present[c]) continue;
    int bucket;
    if (train_counts[c] >= thresholds.head_min) {
      bucket = 0;
    } else if (train_counts[c] >= thresholds.body_min) {
      bucket = 1;
    } else {
      bucket = 2;
    }
    sums[bucket] += per_class_recall[c];
    counts[bucket] += 1;
  }
  SplitMeans means;
  if (counts[0] > 0) means.head = sums[0] / static_cast<double>(counts[0]);
  if (counts[1] > 0) means.body = sums[1] / static_cast<double>(counts[1]);
  if (counts[2] > 0) means.tail = sums[2] / static_cast<double>(counts[2]);
  return means;
}

MetricReport build_metric_report(
    const std::vector<FramePrediction>& predictions,
    const std::vector<FrameGroundTruth>& ground_truth, TaskMode mode,
    const std::vector<int64_t>& train_counts, const SplitThresholds& thresholds,
    const std::vector<int>& ks, double iou_threshold, MrPooling pooling) {
  MetricReport report;
  report.task = mode;
  report.ks = ks;
  report.thresholds = thresholds;
  report.train_counts = train_counts;

  const std::pair<std::string, Regime> regimes[] = {
      {"with_constraint", Regime::kWithConstraint},
      {"no_constraints", Regime::kNoConstraints}};
  for (const auto& [name, regime] : regimes) {
    for (int k : ks) {
      MetricReport::Entry entry;
      entry.recall = recall_at_k(predictions, ground_truth, k, mode, regime,
                                 iou_threshold);
      auto mr = mean_recall_at_k(predictions, ground_truth, k, mode, regime,
                                 iou_threshold, pooling);
      entry.mean_recall = mr.mean_recall;
      entry.per_class_recall = mr.per_class_recall;
      entry.class_present = mr.class_present;
      entry.split = split_report(mr.per_class_recall, mr.class_present,
                                 train_counts, thresholds);
      if (report.gt_counts.empty()) report.gt_counts = mr.gt_counts;
      report.entries[name][k] = std::move(entry);
    }
  }
  return report;
}

void write_metric_report(const MetricReport& report, const std::string& path) {
  ordered_json j;
  j["task"] = to_string(report.task);
  j["ks"] = report.ks;
  j["thresholds"] = {{"head_min", report.thresholds.head_min},
                     {"body_min", report.thresholds.body_min}};
  j["train_counts"] = report.train_counts;
  j["gt_counts"] = report.gt_counts;
  for (const auto& [regime, by_k] : report.entries) {
    ordered_json jr;
    for (const auto& [k, entry] : by_k) {
      ordered_json je;
      je["recall"] = entry.recall;
      je["mean_recall"] = entry.mean_recall;
      je["per_class_recall"] = entry.per_class_recall;
      je["class_present"] = entry.class_present;
      ordered_json js;
      if (entry.split.head) js["head"] = *entry.split.head;
      if (entry.split.body) js["body"] = *entry.split.body;
      if (entry.split.tail) js["tail"] = *entry.split.tail;
      je["split"] = std::move(js);
      jr[std::to_string(k)] = std::move(je);
    }
    j[regime] = std::move(jr);
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ParseError("report: cannot open " + path + " for write");
  os << j.dump(2) << "\n";
}

MetricReport read_metric_report(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("report: cannot open " + path);
  ordered_json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("report " + path + ": " + e.what());
  }
  MetricReport report;
  try {
    report.task = task_mode_from_string(j.at("task").get<std::string>());
    report.ks = j.at("ks").get<std::vector<int>>();
    report.thresholds.head_min = j.at("thresholds").at("head_min").get<int64_t>();
    report.thresholds.body_min = j.at("thresholds").at("body_min").get<int64_t>();
    report.train_counts = j.at("train_counts").get<std::vector<int64_t>>();
    report.gt_counts = j.at("gt_counts").get<std::vector<int64_t>>();
    for (const std::string regime : {"with_constraint", "no_constraints"}) {
      for (const auto& [kstr, je] : j.at(regime).items()) {
        MetricReport::Entry entry;
        entry.recall = je.at("recall").get<double>();
        entry.mean_recall = je.at("mean_recall").get<double>();
        entry.per_class_recall = je.at("per_class_recall").get<std::vector<double>>();
        entry.class_present = je.at("class_present").get<std::vector<uint8_t>>();
        const auto& js = je.at("split");
        if (js.contains("head")) entry.split.head = js.at("head").get<double>();
        if (js.contains("body")) entry.split.body = js.at("body").get<double>();
        if (js.contains("tail")) entry.split.tail = js.at("tail").get<double>();
        report.entries[regime][std::stoi(kstr)] = std::move(entry);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("report " + path + ": " + e.what());
  }
  return report;
}

void write_predictions(const std::vector<FramePrediction>& predictions,
                       Regime regime, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ParseError("predictions: cannot open " + path + " for write");
  for (const auto& frame : predictions) {
    ordered_json j;
    j["video"] = frame.video;
    j["frame"] = frame.frame;
    ordered_json cands = ordered_json::array();
    for (const auto& cand : rank_triplets(frame.pairs, regime)) {
      ordered_json jc;
      jc["subject"] = entity_to_json(cand.subject);
      ordered_json jp;
      jp["class"] = cand.predicate;
      jp["score"] = cand.predicate_score;
      jc["predicate"] = std::move(jp);
      jc["object"] = entity_to_json(cand.object);
      jc["pair"] = cand.pair_index;
      jc["composite"] = cand.composite;
      cands.push_back(std::move(jc));
    }
    j["candidates"] = std::move(cands);
    os << j.dump() << "\n";
  }
}

}  // namespace vsgg
