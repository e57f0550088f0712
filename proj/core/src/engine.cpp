#include "vsgg/engine.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vsgg/checkpoint.hpp"
#include "vsgg/errors.hpp"
#include "vsgg/optim.hpp"
#include "vsgg/rng.hpp"

namespace vsgg {

namespace {

using ordered_json = nlohmann::ordered_json;

int log_level() {
  const char* env = std::getenv("VSGG_LOG");
  if (env == nullptr) return 1;
  std::string v(env);
  if (v == "quiet" || v == "0") return 0;
  if (v == "debug" || v == "2") return 2;
  return 1;
}

std::string epoch_checkpoint_path(const std::string& out_dir, int epoch) {
  char name[64];
  std::snprintf(name, sizeof(name), "checkpoint_epoch_%03d.ckpt", epoch);
  return (std::filesystem::path(out_dir) / name).string();
}

ordered_json stats_to_json(const EpochStats& s) {
  ordered_json j;
  j["epoch"] = s.epoch;
  j["loss_total"] = s.loss_total;
  j["loss_pred"] = s.loss_pred;
  j["loss_obj"] = s.loss_obj;
  j["loss_intra"] = s.loss_intra;
  j["mean_u_al"] = s.mean_u_al;
  j["mean_u_ep"] = s.mean_u_ep;
  j["lr"] = s.lr;
  j["bank_active_classes"] = s.bank_active_classes;
  return j;
}

}  // namespace

double RunConfig::resolved_lambda() const {
  if (lambda >= 0.0) return lambda;
  return task == TaskMode::kSgCls ? 0.3 : 0.5;
}

int64_t RunConfig::resolved_components() const {
  if (gmm_components > 0) return gmm_components;
  return task == TaskMode::kPredCls ? 6 : 4;
}

ModelConfig RunConfig::to_model_config(const AnnotationHeader& header) const {
  ModelConfig cfg;
  cfg.object_classes = header.object_classes;
  cfg.predicate_classes = header.predicate_classes;
  cfg.feat_dim = header.feature_dim;
  cfg.d_v = d_v;
  cfg.d_u = d_u;
  cfg.d_s = d_s;
  cfg.heads = heads;
  cfg.seq_layers = seq_layers;
  cfg.spa_layers = spa_layers;
  cfg.dec_layers = dec_layers;
  cfg.ffn_hidden = ffn_hidden;
  cfg.cls_hidden = cls_hidden;
  cfg.eta = eta;
  cfg.window_stride = window_stride;
  cfg.gmm_components = resolved_components();
  cfg.gmm_hidden = gmm_hidden;
  cfg.lambda = resolved_lambda();
  cfg.task = task;
  cfg.use_mdu = use_mdu;
  cfg.use_gmm = use_gmm;
  cfg.use_ospu = use_ospu;
  cfg.use_intra = use_intra;
  return cfg;
}

TrainResult train_model(const RunConfig& config, const AnnotationFile& data,
                        const std::string& out_dir) {
  if (config.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  const int verbosity = log_level();
  const bool artifacts = !out_dir.empty();
  if (artifacts) std::filesystem::create_directories(out_dir);

  TrainResult result;
  result.train_counts = count_predicate_labels(data, /*observed=*/true);
  result.model = std::make_shared<Model>(
      config.to_model_config(data.header),
      derive_seed(config.seed, "init"));
  Model& model = *result.model;

  AdamW optimizer(model.params().all(),
                  {.lr = config.lr, .weight_decay = config.weight_decay});

  double best_loss = std::numeric_limits<double>::infinity();
  int stale_epochs = 0;
  std::optional<MemoryBank> bank;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = optimizer.lr();

    if (model.config().use_mdu &&
        mdu_schedule(epoch, true) == MduAction::kDiffuse) {
      bank = model.compute_memory_bank(data.videos, epoch);
      stats.bank_active_classes = bank->active_classes();
      if (artifacts) {
        char name[48];
        std::snprintf(name, sizeof(name), "bank_epoch_%03d.txt", epoch);
        write_bank(*bank, (std::filesystem::path(out_dir) / name).string());
      }
    }

    double total = 0.0, pred = 0.0, obj = 0.0, intra = 0.0;
    double u_al = 0.0, u_ep = 0.0;
    int64_t u_samples = 0;
    int64_t step = 0;
    for (const auto& video : data.videos) {
      Rng eps_rng(derive_seed(config.seed, "eps",
                              static_cast<uint64_t>(epoch),
                              static_cast<uint64_t>(step)));
      auto fwd = model.train_step(video, epoch, bank ? &*bank : nullptr,
                                  &eps_rng);
      const double loss = fwd.loss_total.value();
      if (!std::isfinite(loss)) {
        throw NumericError("train: non-finite loss at epoch " +
                           std::to_string(epoch) + ", step " +
                           std::to_string(step) + " (video " +
                           std::to_string(video.id) + ")");
      }
      optimizer.zero_grad();
      backward(fwd.loss_total);
      optimizer.step();

      total += loss;
      pred += fwd.loss_pred.value();
      obj += fwd.loss_obj.value();
      intra += fwd.loss_intra.value();
      if (fwd.pair_count > 0 && model.config().use_gmm) {
        u_al += fwd.mean_u_al;
        u_ep += fwd.mean_u_ep;
        ++u_samples;
      }
      ++step;
      if (verbosity >= 2)
        std::fprintf(stderr, "[train] epoch %d step %lld loss %.6f\n", epoch,
                     static_cast<long long>(step), loss);
    }
    const double steps = static_cast<double>(std::max<int64_t>(step, 1));
    stats.loss_total = total / steps;
    stats.loss_pred = pred / steps;
    stats.loss_obj = obj / steps;
    stats.loss_intra = intra / steps;
    if (u_samples > 0) {
      stats.mean_u_al = u_al / static_cast<double>(u_samples);
      stats.mean_u_ep = u_ep / static_cast<double>(u_samples);
    }
    result.epochs.push_back(stats);

    if (verbosity >= 1)
      std::fprintf(stderr,
                   "[train] epoch %d/%d loss %.6f (pred %.4f obj %.4f intra "
                   "%.4f) u_al %.4f lr %.2e\n",
                   epoch, config.epochs, stats.loss_total, stats.loss_pred,
                   stats.loss_obj, stats.loss_intra, stats.mean_u_al, stats.lr);

    if (artifacts)
      save_checkpoint(model.params(), epoch_checkpoint_path(out_dir, epoch));

    // Plateau rule on the mean train loss.
    if (best_loss - stats.loss_total > config.plateau_tol) {
      best_loss = stats.loss_total;
      stale_epochs = 0;
    } else {
      ++stale_epochs;
      if (stale_epochs >= config.plateau_epochs) {
        optimizer.set_lr(optimizer.lr() * config.lr_decay);
        stale_epochs = 0;
        if (verbosity >= 1)
          std::fprintf(stderr, "[train] plateau: lr -> %.2e\n", optimizer.lr());
      }
    }
  }

  if (artifacts) {
    save_checkpoint(model.params(),
                    (std::filesystem::path(out_dir) / "checkpoint_final.ckpt")
                        .string());
    write_training_log(result.epochs,
                       (std::filesystem::path(out_dir) / "training_log.json")
                           .string());
    ordered_json counts = result.train_counts;
    std::ofstream os(std::filesystem::path(out_dir) / "train_counts.json");
    os << counts.dump() << "\n";
  }
  return result;
}

void write_training_log(const std::vector<EpochStats>& stats,
                        const std::string& path) {
  ordered_json j = ordered_json::array();
  for (const auto& s : stats) j.push_back(stats_to_json(s));
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ParseError("training log: cannot open " + path + " for write");
  os << j.dump(2) << "\n";
}

std::vector<EpochStats> read_training_log(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("training log: cannot open " + path);
  ordered_json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("training log " + path + ": " + e.what());
  }
  std::vector<EpochStats> out;
  for (const auto& je : j) {
    EpochStats s;
    s.epoch = je.at("epoch").get<int>();
    s.loss_total = je.at("loss_total").get<double>();
    s.loss_pred = je.at("loss_pred").get<double>();
    s.loss_obj = je.at("loss_obj").get<double>();
    s.loss_intra = je.at("loss_intra").get<double>();
    s.mean_u_al = je.at("mean_u_al").get<double>();
    s.mean_u_ep = je.at("mean_u_ep").get<double>();
    s.lr = je.at("lr").get<double>();
    s.bank_active_classes = je.at("bank_active_classes").get<int64_t>();
    out.push_back(s);
  }
  return out;
}

EvalResult evaluate_model(Model& model, const AnnotationFile& data,
                          const std::vector<int64_t>& train_counts,
                          const EvalOptions& options) {
  EvalResult result;
  for (const auto& video : data.videos) {
    auto frames = model.infer_video(video);
    auto gts = ground_truth_frames(video);
    for (size_t f = 0; f < frames.size(); ++f) {
      FramePrediction fp;
      fp.video = video.id;
      fp.frame = video.frames[f].frame;
      fp.pairs = std::move(frames[f].pairs);
      result.predictions.push_back(std::move(fp));
      result.ground_truth.push_back(std::move(gts[f]));
    }
  }
  SplitThresholds thresholds = options.thresholds;
  if (thresholds.head_min <= 0) thresholds = quantile_thresholds(train_counts);
  result.report = build_metric_report(
      result.predictions, result.ground_truth, model.config().task,
      train_counts, thresholds, options.ks, options.iou_threshold,
      options.pooling);
  return result;
}

int64_t count_prediction_flips(Model& model, const AnnotationFile& data) {
  int64_t flips = 0;
  for (const auto& video : data.videos) {
    auto frames = model.infer_video(video);
    for (size_t f = 1; f < frames.size(); ++f) {
      const auto& prev = frames[f - 1].object_classes;
      const auto& cur = frames[f].object_classes;
      const size_t shared = std::min(prev.size(), cur.size());
      for (size_t o = 0; o < shared; ++o)
        if (prev[o] >= 0 && cur[o] >= 0 && prev[o] != cur[o]) ++flips;
    }
  }
  return flips;
}

RunReport summarize_run(const std::string& run_dir) {
  namespace fs = std::filesystem;
  const auto log_path = fs::path(run_dir) / "training_log.json";
  if (!fs::exists(log_path))
    throw ParseError("report: no training_log.json under " + run_dir);
  auto stats = read_training_log(log_path.string());

  // Dump every number through the same JSON writer that wrote the log so
  // the table text matches the log bytes.
  auto num = [](double v) { return ordered_json(v).dump(); };

  RunReport report;
  std::ostringstream unc;
  unc << "epoch\tmean_u_al\tmean_u_ep\n";
  for (const auto& s : stats)
    unc << s.epoch << "\t" << num(s.mean_u_al) << "\t" << num(s.mean_u_ep)
        << "\n";
  report.uncertainty_table = unc.str();

  std::ostringstream curve;
  curve << "# epoch loss_total\n";
  for (const auto& s : stats)
    curve << s.epoch << " " << num(s.loss_total) << "\n";
  report.loss_curve = curve.str();

  const auto report_path = fs::path(run_dir) / "report.json";
  if (fs::exists(report_path)) {
    auto metric = read_metric_report(report_path.string());
    std::ostringstream bars;
    bars << "# class recall@" << metric.ks.front() << " (with constraint)\n";
    const auto& entry = metric.entries.at("with_constraint").at(metric.ks.front());
    for (size_t c = 0; c < entry.per_class_recall.size(); ++c) {
      if (!entry.class_present[c]) continue;
      bars << c << " " << num(entry.per_class_recall[c]) << "\n";
    }
    report.per_class_recall = bars.str();
  }
  return report;
}

}  // namespace vsgg
