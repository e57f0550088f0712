#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "vsgg/checkpoint.hpp"
#include "vsgg/datagen.hpp"
#include "vsgg/engine.hpp"
#include "vsgg/errors.hpp"

using namespace vsgg;

namespace {

AnnotationFile small_corpus(uint64_t seed, int videos = 6) {
  GeneratorConfig cfg;
  cfg.object_classes = 3;
  cfg.predicate_classes = 5;
  cfg.videos = videos;
  cfg.frames_per_video = 4;
  cfg.objects_min = 2;
  cfg.objects_max = 3;
  cfg.feature_dim = 8;
  cfg.seed = seed;
  return generate(cfg);
}

RunConfig small_run(TaskMode task) {
  RunConfig rc;
  rc.task = task;
  rc.epochs = 3;
  rc.lr = 1e-3;
  rc.d_v = 4;
  rc.d_u = 4;
  rc.d_s = 2;
  rc.heads = 2;
  rc.ffn_hidden = 16;
  rc.cls_hidden = 8;
  rc.gmm_components = 2;
  rc.seed = 21;
  return rc;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE("engine") {

TEST_CASE("per-task defaults follow the published recipe") {
  RunConfig rc;
  rc.task = TaskMode::kPredCls;
  CHECK(rc.resolved_lambda() == 0.5);
  CHECK(rc.resolved_components() == 6);
  rc.task = TaskMode::kSgCls;
  CHECK(rc.resolved_lambda() == 0.3);
  CHECK(rc.resolved_components() == 4);
  rc.task = TaskMode::kSgDet;
  CHECK(rc.resolved_lambda() == 0.5);
  CHECK(rc.resolved_components() == 4);
  CHECK(rc.epochs == 10);
  CHECK(rc.lr == 1e-5);
}

TEST_CASE("training runs, logs and checkpoints deterministically") {
  auto data = small_corpus(31);
  auto dir1 = std::filesystem::temp_directory_path() / "vsgg_run1";
  auto dir2 = std::filesystem::temp_directory_path() / "vsgg_run2";
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);

  auto rc = small_run(TaskMode::kSgCls);
  auto r1 = train_model(rc, data, dir1.string());
  auto r2 = train_model(rc, data, dir2.string());

  REQUIRE(r1.epochs.size() == 3);
  for (const auto& s : r1.epochs) CHECK(std::isfinite(s.loss_total));
  CHECK(r1.epochs[0].bank_active_classes == -1);  // epoch 1: no bank
  CHECK(r1.epochs[1].bank_active_classes > 0);

  CHECK(slurp(dir1 / "checkpoint_final.ckpt") ==
        slurp(dir2 / "checkpoint_final.ckpt"));
  CHECK(slurp(dir1 / "training_log.json") == slurp(dir2 / "training_log.json"));
  CHECK(std::filesystem::exists(dir1 / "bank_epoch_002.txt"));
  CHECK(std::filesystem::exists(dir1 / "train_counts.json"));

  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("mdu off matches lambda=1 bit-for-bit on shared parameters") {
  auto data = small_corpus(32);
  auto rc_off = small_run(TaskMode::kSgCls);
  rc_off.use_mdu = false;
  auto rc_one = small_run(TaskMode::kSgCls);
  rc_one.lambda = 1.0;

  auto off = train_model(rc_off, data);
  auto one = train_model(rc_one, data);
  REQUIRE(off.epochs.size() == one.epochs.size());
  for (size_t e = 0; e < off.epochs.size(); ++e)
    CHECK(off.epochs[e].loss_total == one.epochs[e].loss_total);  // exact

  for (const auto& name : off.model->params().names()) {
    const auto& a = off.model->params().at(name).values();
    const auto& b = one.model->params().at(name).values();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("training loss decreases on a learnable corpus") {
  auto data = small_corpus(33, 10);
  auto rc = small_run(TaskMode::kSgCls);
  rc.epochs = 4;
  rc.lr = 2e-3;
  auto result = train_model(rc, data);
  CHECK(result.epochs.back().loss_total < result.epochs.front().loss_total);
}

TEST_CASE("checkpoint restores the exact model for evaluation") {
  auto data = small_corpus(34);
  auto dir = std::filesystem::temp_directory_path() / "vsgg_run_ckpt";
  std::filesystem::remove_all(dir);
  auto rc = small_run(TaskMode::kSgCls);
  auto trained = train_model(rc, data, dir.string());

  auto eval_data = small_corpus(99, 3);
  auto direct = evaluate_model(*trained.model, eval_data, trained.train_counts);

  Model restored(rc.to_model_config(data.header), derive_seed(rc.seed, "init"));
  load_checkpoint(restored.params(), (dir / "checkpoint_final.ckpt").string());
  auto loaded = evaluate_model(restored, eval_data, trained.train_counts);

  for (const auto& [regime, by_k] : direct.report.entries)
    for (const auto& [k, entry] : by_k) {
      CHECK(entry.recall == loaded.report.entries.at(regime).at(k).recall);
      CHECK(entry.mean_recall ==
            loaded.report.entries.at(regime).at(k).mean_recall);
    }
  std::filesystem::remove_all(dir);
}

TEST_CASE("evaluation report is deterministic across invocations") {
  auto data = small_corpus(35);
  auto rc = small_run(TaskMode::kPredCls);
  rc.epochs = 2;
  auto trained = train_model(rc, data);
  auto eval_data = small_corpus(98, 3);

  auto p1 = std::filesystem::temp_directory_path() / "vsgg_rep1.json";
  auto p2 = std::filesystem::temp_directory_path() / "vsgg_rep2.json";
  write_metric_report(
      evaluate_model(*trained.model, eval_data, trained.train_counts).report,
      p1.string());
  write_metric_report(
      evaluate_model(*trained.model, eval_data, trained.train_counts).report,
      p2.string());
  CHECK(slurp(p1) == slurp(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("oracle predictions give perfect predcls recall") {
  // Predictions forced to ground truth: R@50 must be exactly 1 in PREDCLS.
  auto data = small_corpus(36, 2);
  std::vector<FramePrediction> preds;
  std::vector<FrameGroundTruth> gts;
  for (const auto& video : data.videos) {
    auto frame_gts = ground_truth_frames(video);
    for (size_t f = 0; f < video.frames.size(); ++f) {
      FramePrediction fp;
      fp.video = video.id;
      fp.frame = video.frames[f].frame;
      const auto& frame = video.frames[f];
      for (size_t p = 0; p < frame.pairs.size(); ++p) {
        const auto& pair = frame.pairs[p];
        PairScores ps;
        ps.pair_index = static_cast<int>(p);
        const auto& so = frame.objects[static_cast<size_t>(pair.subject)];
        const auto& oo = frame.objects[static_cast<size_t>(pair.object)];
        ps.subject = {so.gt_box, so.gt_class, 1.0};
        ps.object = {oo.gt_box, oo.gt_class, 1.0};
        ps.predicate_scores.assign(
            static_cast<size_t>(data.header.predicate_classes), 0.0);
        for (int64_t cls : pair.gt_predicates)
          ps.predicate_scores[static_cast<size_t>(cls)] = 1.0;
        fp.pairs.push_back(std::move(ps));
      }
      preds.push_back(std::move(fp));
      gts.push_back(std::move(frame_gts[f]));
    }
  }
  double r = recall_at_k(preds, gts, 50, TaskMode::kPredCls,
                         Regime::kNoConstraints);
  CHECK(r == doctest::Approx(1.0));
}

TEST_CASE("flip counting is nonnegative and bounded") {
  auto data = small_corpus(37, 3);
  auto rc = small_run(TaskMode::kSgCls);
  rc.epochs = 1;
  auto trained = train_model(rc, data);
  int64_t flips = count_prediction_flips(*trained.model, data);
  int64_t bound = 0;
  for (const auto& v : data.videos)
    for (size_t f = 1; f < v.frames.size(); ++f)
      bound += static_cast<int64_t>(
          std::min(v.frames[f - 1].objects.size(), v.frames[f].objects.size()));
  CHECK(flips >= 0);
  CHECK(flips <= bound);
}

TEST_CASE("run summary tables echo the log bytes") {
  auto data = small_corpus(38);
  auto dir = std::filesystem::temp_directory_path() / "vsgg_run_report";
  std::filesystem::remove_all(dir);
  auto rc = small_run(TaskMode::kSgCls);
  rc.epochs = 3;
  auto trained = train_model(rc, data, dir.string());

  auto eval_data = small_corpus(97, 2);
  auto result = evaluate_model(*trained.model, eval_data, trained.train_counts);
  write_metric_report(result.report, (dir / "report.json").string());

  auto report = summarize_run(dir.string());
  // 3 epochs -> header + 3 rows.
  CHECK(std::count(report.uncertainty_table.begin(),
                   report.uncertainty_table.end(), '\n') == 4);
  // Each u_al figure must appear verbatim inside the raw log text.
  auto log_text = slurp(dir / "training_log.json");
  std::istringstream lines(report.uncertainty_table);
  std::string line;
  std::getline(lines, line);  // header
  while (std::getline(lines, line)) {
    auto tab1 = line.find('\t');
    auto tab2 = line.find('\t', tab1 + 1);
    std::string u_al = line.substr(tab1 + 1, tab2 - tab1 - 1);
    CHECK(log_text.find(u_al) != std::string::npos);
  }
  CHECK_FALSE(report.per_class_recall.empty());

  CHECK_THROWS_AS(summarize_run((dir / "missing").string()), ParseError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("non-finite loss aborts with a numeric error") {
  auto data = small_corpus(39, 2);
  auto rc = small_run(TaskMode::kSgCls);
  rc.lr = 1e18;  // blows the parameters up within an epoch or two
  rc.epochs = 6;
  CHECK_THROWS_AS(train_model(rc, data), NumericError);
}

}  // TEST_SUITE
