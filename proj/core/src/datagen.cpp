#include "vsgg/datagen.hpp"

#include <algorithm>
#include <cmath>

#include "vsgg/errors.hpp"
#include "vsgg/rng.hpp"

namespace vsgg {

namespace {

// The chance that a pair keeps its predicate set on the next frame.
constexpr double kPairPersistence = 0.8;

void check_rate(double v, const char* field) {
  if (!(v >= 0.0 && v <= 1.0))
    throw ConfigError(std::string("generator config: ") + field +
                      " must lie in [0,1], got " + std::to_string(v));
}

std::array<double, 4> clip_box(double cx, double cy, double w, double h) {
  double x1 = std::clamp(cx - w / 2, 0.0, 1.0 - 1e-3);
  double y1 = std::clamp(cy - h / 2, 0.0, 1.0 - 1e-3);
  double x2 = std::clamp(cx + w / 2, x1 + 1e-3, 1.0);
  double y2 = std::clamp(cy + h / 2, y1 + 1e-3, 1.0);
  return {x1, y1, x2, y2};
}

std::vector<int64_t> sorted_unique(std::vector<int64_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

struct ClassVectors {
  std::vector<std::vector<double>> object_centroids;
  std::vector<std::vector<double>> predicate_directions;
};

ClassVectors make_class_vectors(const GeneratorConfig& cfg) {
  ClassVectors out;
  Rng rng(derive_seed(cfg.world_seed, "class-vectors"));
  out.object_centroids.resize(static_cast<size_t>(cfg.object_classes));
  for (auto& c : out.object_centroids) {
    c.resize(static_cast<size_t>(cfg.feature_dim));
    for (auto& v : c) v = rng.normal();
  }
  // Shared basis: predicate classes overlap instead of being orthogonal.
  const int64_t rank = std::min(cfg.predicate_rank, cfg.predicate_classes);
  std::vector<std::vector<double>> basis(static_cast<size_t>(rank));
  for (auto& b : basis) {
    b.resize(static_cast<size_t>(cfg.feature_dim));
    for (auto& v : b) v = rng.normal();
  }
  out.predicate_directions.resize(static_cast<size_t>(cfg.predicate_classes));
  for (auto& d : out.predicate_directions) {
    d.assign(static_cast<size_t>(cfg.feature_dim), 0.0);
    for (int64_t r = 0; r < rank; ++r) {
      const double coeff = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(rank)));
      for (size_t i = 0; i < d.size(); ++i)
        d[i] += coeff * basis[static_cast<size_t>(r)][i];
    }
  }
  return out;
}

std::vector<int64_t> sample_label_set(Rng& rng, const std::vector<double>& cdf,
                                      const GeneratorConfig& cfg) {
  std::vector<int64_t> labels{rng.zipf(cdf)};
  const int64_t cap = std::min<int64_t>(cfg.predicate_classes, 4);
  while (static_cast<int64_t>(labels.size()) < cap &&
         rng.chance(cfg.multi_label_rate)) {
    int64_t extra = rng.zipf(cdf);
    if (std::find(labels.begin(), labels.end(), extra) == labels.end())
      labels.push_back(extra);
  }
  return sorted_unique(std::move(labels));
}

std::vector<int64_t> corrupt_labels(Rng& rng, const std::vector<int64_t>& gt,
                                    const GeneratorConfig& cfg, bool bursty) {
  double flip_rate = cfg.flip_rate;
  if (cfg.flip_on_burst_only) {
    // Concentrate the same average flip mass on burst-degraded pairs.
    const double bursty_frac =
        1.0 - (1.0 - cfg.burst_prob) * (1.0 - cfg.burst_prob);
    flip_rate = bursty ? std::min(1.0, cfg.flip_rate / std::max(bursty_frac, 1e-9))
                       : 0.0;
  }
  std::vector<int64_t> observed;
  for (int64_t label : gt) {
    if (rng.chance(cfg.missing_rate)) continue;
    if (rng.chance(flip_rate) && cfg.predicate_classes > 1) {
      int64_t other = rng.uniform_int(0, cfg.predicate_classes - 2);
      if (other >= label) ++other;
      observed.push_back(other);
    } else {
      observed.push_back(label);
    }
  }
  return sorted_unique(std::move(observed));
}

VideoAnnotation generate_video(const GeneratorConfig& cfg,
                               const ClassVectors& classes,
                               const std::vector<double>& zipf_cdf,
                               int64_t video_id) {
  Rng rng(derive_seed(cfg.seed, "video", static_cast<uint64_t>(video_id)));
  VideoAnnotation video;
  video.id = video_id;

  const int64_t n_obj = rng.uniform_int(cfg.objects_min, cfg.objects_max);
  struct ObjectState {
    int64_t gt_class;
    double cx, cy, w, h;
    std::vector<double> drift;
  };
  std::vector<ObjectState> objects(static_cast<size_t>(n_obj));
  for (auto& o : objects) {
    o.gt_class = rng.uniform_int(0, cfg.object_classes - 1);
    o.cx = rng.uniform(0.2, 0.8);
    o.cy = rng.uniform(0.2, 0.8);
    o.w = rng.uniform(0.1, 0.35);
    o.h = rng.uniform(0.1, 0.35);
    o.drift.assign(static_cast<size_t>(cfg.feature_dim), 0.0);
  }

  const int64_t pair_count = cfg.all_pairs ? n_obj * (n_obj - 1) : n_obj - 1;
  std::vector<std::vector<int64_t>> pair_labels(
      static_cast<size_t>(std::max<int64_t>(pair_count, 0)));

  for (int64_t t = 0; t < cfg.frames_per_video; ++t) {
    FrameAnnotation frame;
    frame.frame = static_cast<int>(t);
    std::vector<uint8_t> frame_burst;

    for (auto& o : objects) {
      o.cx = std::clamp(o.cx + rng.normal(0.0, 0.03), 0.05, 0.95);
      o.cy = std::clamp(o.cy + rng.normal(0.0, 0.03), 0.05, 0.95);
      for (auto& d : o.drift) d += rng.normal(0.0, cfg.feature_jitter / 2);

      DetectedObject det;
      det.frame = frame.frame;
      det.gt_class = o.gt_class;
      det.gt_box = clip_box(o.cx, o.cy, o.w, o.h);
      det.det_box = clip_box(o.cx + rng.normal(0.0, 0.02),
                             o.cy + rng.normal(0.0, 0.02), o.w, o.h);
      const bool burst = rng.chance(cfg.burst_prob);
      frame_burst.push_back(burst);
      det.feature.resize(static_cast<size_t>(cfg.feature_dim));
      const auto& centroid =
          classes.object_centroids[static_cast<size_t>(o.gt_class)];
      for (size_t d = 0; d < det.feature.size(); ++d) {
        det.feature[d] =
            centroid[d] + o.drift[d] + rng.normal(0.0, cfg.feature_jitter);
        if (burst) det.feature[d] += rng.normal(0.0, 5.0 * cfg.feature_jitter);
      }
      // Bursts stand in for motion blur: the detector both misfires and
      // loses confidence on those frames.
      const double flip_p = burst ? 0.5 : 0.02;
      if (cfg.object_classes > 1 && rng.chance(flip_p)) {
        int64_t other = rng.uniform_int(0, cfg.object_classes - 2);
        if (other >= o.gt_class) ++other;
        det.det_class = other;
      } else {
        det.det_class = o.gt_class;
      }
      det.confidence = burst ? rng.uniform(0.3, 0.7) : rng.uniform(0.75, 0.95);
      frame.objects.push_back(std::move(det));
    }

    auto emit_pair = [&](int subject, int object, int64_t pair_slot) {
      auto& labels = pair_labels[static_cast<size_t>(pair_slot)];
      if (labels.empty() || !rng.chance(kPairPersistence))
        labels = sample_label_set(rng, zipf_cdf, cfg);

      PairAnnotation pair;
      pair.subject = subject;
      pair.object = object;
      pair.gt_predicates = labels;
      const bool bursty = frame_burst[static_cast<size_t>(subject)] ||
                          frame_burst[static_cast<size_t>(object)];
      pair.observed_predicates = corrupt_labels(rng, labels, cfg, bursty);
      pair.union_feature.resize(static_cast<size_t>(cfg.feature_dim));
      const auto& vs = frame.objects[static_cast<size_t>(subject)].feature;
      const auto& vo = frame.objects[static_cast<size_t>(object)].feature;
      for (size_t d = 0; d < pair.union_feature.size(); ++d) {
        double sig = 0.0;
        for (int64_t p : labels)
          sig += classes.predicate_directions[static_cast<size_t>(p)][d];
        sig /= static_cast<double>(labels.size());
        pair.union_feature[d] =
            0.5 * (vs[d] + vo[d]) + sig + rng.normal(0.0, cfg.union_noise);
      }
      frame.pairs.push_back(std::move(pair));
    };

    if (cfg.all_pairs) {
      int64_t slot = 0;
      for (int s = 0; s < n_obj; ++s)
        for (int o = 0; o < n_obj; ++o)
          if (s != o) emit_pair(s, o, slot++);
    } else {
      for (int o = 1; o < n_obj; ++o) emit_pair(0, o, o - 1);
    }

    video.frames.push_back(std::move(frame));
  }
  return video;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (object_classes < 1) throw ConfigError("generator config: object_classes must be >= 1");
  if (predicate_classes < 1)
    throw ConfigError("generator config: predicate_classes must be >= 1");
  if (videos < 0) throw ConfigError("generator config: videos must be >= 0");
  if (frames_per_video < 1)
    throw ConfigError("generator config: frames_per_video must be >= 1");
  if (objects_min < 1 || objects_max < objects_min)
    throw ConfigError("generator config: need 1 <= objects_min <= objects_max");
  if (zipf_exponent <= 0.0)
    throw ConfigError("generator config: zipf_exponent must be > 0");
  check_rate(multi_label_rate, "multi_label_rate");
  check_rate(missing_rate, "missing_rate");
  check_rate(flip_rate, "flip_rate");
  check_rate(burst_prob, "burst_prob");
  if (feature_jitter < 0.0)
    throw ConfigError("generator config: feature_jitter must be >= 0");
  if (union_noise < 0.0)
    throw ConfigError("generator config: union_noise must be >= 0");
  if (predicate_rank < 1)
    throw ConfigError("generator config: predicate_rank must be >= 1");
  if (feature_dim < 1) throw ConfigError("generator config: feature_dim must be >= 1");
}

AnnotationFile generate(const GeneratorConfig& config) {
  config.validate();
  AnnotationFile out;
  out.header.object_classes = config.object_classes;
  out.header.predicate_classes = config.predicate_classes;
  out.header.feature_dim = config.feature_dim;
  out.header.video_count = config.videos;

  const ClassVectors classes = make_class_vectors(config);
  const auto cdf = Rng::zipf_cdf(config.predicate_classes, config.zipf_exponent);
  out.videos.reserve(static_cast<size_t>(config.videos));
  for (int64_t v = 0; v < config.videos; ++v)
    out.videos.push_back(generate_video(config, classes, cdf, v));
  return out;
}

}  // namespace vsgg
