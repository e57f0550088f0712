#pragma once

#include <cstdint>

#include "vsgg/annotations.hpp"

namespace vsgg {

// Synthetic long-tailed video corpus. Predicate frequencies follow
// rank^(-zipf_exponent); label noise models missing annotations and label
// flips; feature noise models drift and motion-blur bursts. Output is a pure
// function of (config, seed).
struct GeneratorConfig {
  int64_t object_classes = 5;
  int64_t predicate_classes = 12;
  int64_t videos = 50;
  int64_t frames_per_video = 8;
  int64_t objects_min = 2;
  int64_t objects_max = 4;
  double zipf_exponent = 1.5;
  double multi_label_rate = 0.3;
  double missing_rate = 0.0;
  double flip_rate = 0.0;
  double feature_jitter = 0.1;
  double burst_prob = 0.1;
  // Pair-specific Gaussian offset on the union feature; the predicate
  // signal-to-noise knob.
  double union_noise = 0.75;
  // When set, label flips concentrate on pairs whose endpoints had a blur
  // burst that frame (annotators mislabel blurred content); the average
  // flip rate stays at flip_rate.
  bool flip_on_burst_only = false;
  // Predicate directions live in a shared low-rank basis, so classes
  // overlap in feature space the way co-occurring relationships do.
  int64_t predicate_rank = 4;
  int64_t feature_dim = 64;
  uint64_t seed = 7;
  // Class geometry (object centroids, predicate directions) derives from
  // this seed alone, so train and test corpora generated with different
  // `seed` values but one `world_seed` describe the same world.
  uint64_t world_seed = 7;
  bool all_pairs = false;  // default: object 0 is the designated subject

  void validate() const;  // throws ConfigError naming the offending field
};

AnnotationFile generate(const GeneratorConfig& config);

}  // namespace vsgg
