#include "vsgg/annotations.hpp"

#include <fstream>

#include <json.hpp>

#include "vsgg/errors.hpp"

namespace vsgg {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json box_to_json(const std::array<double, 4>& b) {
  return ordered_json{b[0], b[1], b[2], b[3]};
}

std::array<double, 4> box_from_json(const ordered_json& j) {
  if (!j.is_array() || j.size() != 4)
    throw ParseError("box must be a 4-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
          j[3].get<double>()};
}

ordered_json video_to_json(const VideoAnnotation& v) {
  ordered_json jv;
  jv["id"] = v.id;
  ordered_json frames = ordered_json::array();
  for (const auto& f : v.frames) {
    ordered_json jf;
    jf["t"] = f.frame;
    ordered_json objs = ordered_json::array();
    for (const auto& o : f.objects) {
      ordered_json jo;
      jo["gt_class"] = o.gt_class;
      jo["det_class"] = o.det_class;
      jo["confidence"] = o.confidence;
      jo["gt_box"] = box_to_json(o.gt_box);
      jo["det_box"] = box_to_json(o.det_box);
      jo["feature"] = o.feature;
      objs.push_back(std::move(jo));
    }
    jf["objects"] = std::move(objs);
    ordered_json pairs = ordered_json::array();
    for (const auto& p : f.pairs) {
      ordered_json jp;
      jp["subject"] = p.subject;
      jp["object"] = p.object;
      jp["gt_predicates"] = p.gt_predicates;
      jp["observed_predicates"] = p.observed_predicates;
      jp["union_feature"] = p.union_feature;
      pairs.push_back(std::move(jp));
    }
    jf["pairs"] = std::move(pairs);
    frames.push_back(std::move(jf));
  }
  jv["frames"] = std::move(frames);
  return jv;
}

VideoAnnotation video_from_json(const ordered_json& jv) {
  VideoAnnotation v;
  v.id = jv.at("id").get<int64_t>();
  for (const auto& jf : jv.at("frames")) {
    FrameAnnotation f;
    f.frame = jf.at("t").get<int>();
    for (const auto& jo : jf.at("objects")) {
      DetectedObject o;
      o.frame = f.frame;
      o.gt_class = jo.at("gt_class").get<int64_t>();
      o.det_class = jo.at("det_class").get<int64_t>();
      o.confidence = jo.at("confidence").get<double>();
      o.gt_box = box_from_json(jo.at("gt_box"));
      o.det_box = box_from_json(jo.at("det_box"));
      o.feature = jo.at("feature").get<std::vector<double>>();
      f.objects.push_back(std::move(o));
    }
    for (const auto& jp : jf.at("pairs")) {
      PairAnnotation p;
      p.subject = jp.at("subject").get<int>();
      p.object = jp.at("object").get<int>();
      p.gt_predicates = jp.at("gt_predicates").get<std::vector<int64_t>>();
      p.observed_predicates =
          jp.at("observed_predicates").get<std::vector<int64_t>>();
      p.union_feature = jp.at("union_feature").get<std::vector<double>>();
      if (p.subject < 0 || p.object < 0 ||
          p.subject >= static_cast<int>(f.objects.size()) ||
          p.object >= static_cast<int>(f.objects.size()))
        throw ParseError("pair references an object index outside the frame");
      f.pairs.push_back(std::move(p));
    }
    v.frames.push_back(std::move(f));
  }
  return v;
}

}  // namespace

void write_annotations(const AnnotationFile& file, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ParseError("annotations: cannot open " + path + " for write");
  ordered_json header;
  header["schema"] = "vsgg-annotations";
  header["version"] = 1;
  header["object_classes"] = file.header.object_classes;
  header["predicate_classes"] = file.header.predicate_classes;
  header["feature_dim"] = file.header.feature_dim;
  header["videos"] = file.header.video_count;
  os << header.dump() << "\n";
  for (const auto& v : file.videos) os << video_to_json(v).dump() << "\n";
  if (!os) throw ParseError("annotations: write failed for " + path);
}

AnnotationFile read_annotations(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("annotations: cannot open " + path);
  AnnotationFile out;
  std::string line;
  int64_t line_no = 0;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (!have_header) {
        if (j.value("schema", "") != "vsgg-annotations")
          throw ParseError("missing vsgg-annotations header record");
        if (j.at("version").get<int>() != 1)
          throw ParseError("unsupported schema version");
        out.header.object_classes = j.at("object_classes").get<int64_t>();
        out.header.predicate_classes = j.at("predicate_classes").get<int64_t>();
        out.header.feature_dim = j.at("feature_dim").get<int64_t>();
        out.header.video_count = j.at("videos").get<int64_t>();
        have_header = true;
      } else {
        out.videos.push_back(video_from_json(j));
      }
    } catch (const ParseError&) {
      throw;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header)
    throw ParseError(path + ":1: missing vsgg-annotations header record");
  if (static_cast<int64_t>(out.videos.size()) != out.header.video_count)
    throw ParseError(path + ":" + std::to_string(line_no + 1) +
                     ": expected " + std::to_string(out.header.video_count) +
                     " videos, file ends after " +
                     std::to_string(out.videos.size()));
  return out;
}

std::vector<int64_t> count_predicate_labels(const AnnotationFile& file,
                                            bool observed) {
  std::vector<int64_t> counts(
      static_cast<size_t>(file.header.predicate_classes), 0);
  for (const auto& v : file.videos)
    for (const auto& f : v.frames)
      for (const auto& p : f.pairs) {
        const auto& labels = observed ? p.observed_predicates : p.gt_predicates;
        for (int64_t c : labels) counts.at(static_cast<size_t>(c)) += 1;
      }
  return counts;
}

}  // namespace vsgg
