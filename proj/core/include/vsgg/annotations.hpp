#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace vsgg {

// One detector proposal. Boxes are [x1,y1,x2,y2] in normalized image
// coordinates with x1<x2, y1<y2. `det_*` fields are what a detector would
// emit; `gt_*` fields are the annotation truth.
struct DetectedObject {
  int frame = 0;
  std::array<double, 4> gt_box{};
  std::array<double, 4> det_box{};
  std::vector<double> feature;
  int64_t det_class = 0;
  double confidence = 1.0;
  int64_t gt_class = -1;  // -1 when unknown

  bool operator==(const DetectedObject&) const = default;
};

// One subject-object pair within a frame. Predicate label sets are
// multi-label; `gt_predicates` is never empty, `observed_predicates` may be
// (missing annotation).
struct PairAnnotation {
  int subject = 0;
  int object = 0;
  std::vector<int64_t> gt_predicates;
  std::vector<int64_t> observed_predicates;
  std::vector<double> union_feature;

  bool operator==(const PairAnnotation&) const = default;
};

struct FrameAnnotation {
  int frame = 0;
  std::vector<DetectedObject> objects;
  std::vector<PairAnnotation> pairs;

  bool operator==(const FrameAnnotation&) const = default;
};

struct VideoAnnotation {
  int64_t id = 0;
  std::vector<FrameAnnotation> frames;

  bool operator==(const VideoAnnotation&) const = default;
};

// Corpus-level header carried as the first JSONL record.
struct AnnotationHeader {
  int64_t object_classes = 0;
  int64_t predicate_classes = 0;
  int64_t feature_dim = 0;
  int64_t video_count = 0;

  bool operator==(const AnnotationHeader&) const = default;
};

struct AnnotationFile {
  AnnotationHeader header;
  std::vector<VideoAnnotation> videos;

  bool operator==(const AnnotationFile&) const = default;
};

// JSON Lines, one video per line after a header record. Read and write are
// exact inverses; malformed records raise ParseError naming the line.
void write_annotations(const AnnotationFile& file, const std::string& path);
AnnotationFile read_annotations(const std::string& path);

// Per-predicate-class label counts over all pairs of all videos. `observed`
// selects the noisy training labels instead of the ground truth.
std::vector<int64_t> count_predicate_labels(const AnnotationFile& file,
                                            bool observed);

}  // namespace vsgg
