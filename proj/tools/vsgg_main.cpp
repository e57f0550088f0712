// Command-line front end: generate / train / eval / report.
// Exit codes: 0 success, 2 config or input error, 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vsgg/checkpoint.hpp"
#include "vsgg/datagen.hpp"
#include "vsgg/engine.hpp"
#include "vsgg/errors.hpp"

namespace fs = std::filesystem;
using namespace vsgg;

namespace {

struct CliState {
  GeneratorConfig gen;
  std::string gen_out;

  RunConfig run;
  std::string task_name = "sgcls";
  std::string data_path;
  std::string run_out;

  std::string checkpoint_path;
  std::string eval_out;
  std::string train_data_path;
  std::string counts_path;
  std::string predictions_path;
  std::string pooling = "pooled";
  int64_t head_min = 0;
  int64_t body_min = 0;
  double iou_threshold = 0.5;

  std::string report_dir;
};

void add_model_shape_flags(CLI::App* cmd, RunConfig& run) {
  cmd->add_option("--lr", run.lr, "Initial learning rate");
  cmd->add_option("--lambda", run.lambda,
                  "Memory-diffusion residual weight in (0,1]; default per task");
  cmd->add_option("--gmm-k", run.gmm_components,
                  "Mixture components; default per task");
  cmd->add_option("--eta", run.eta, "Temporal window length");
  cmd->add_option("--stride", run.window_stride,
                  "Window stride (0 = eta, non-overlapping)");
  cmd->add_option("--seed", run.seed, "Root seed");
  cmd->add_flag("--no-mdu", [&run](int64_t) { run.use_mdu = false; },
                "Disable memory-guided debiasing");
  cmd->add_flag("--no-gmm", [&run](int64_t) { run.use_gmm = false; },
                "Replace the mixture head with a plain FFN head");
  cmd->add_flag("--no-ospu", [&run](int64_t) { run.use_ospu = false; },
                "Replace sequence encoding with a per-frame classifier");
  cmd->add_flag("--no-intra", [&run](int64_t) { run.use_intra = false; },
                "Drop the intra-video contrastive loss");
  cmd->add_option("--d-v", run.d_v, "Projected proposal feature dim");
  cmd->add_option("--d-u", run.d_u, "Projected union feature dim");
  cmd->add_option("--d-s", run.d_s, "Semantic embedding dim");
  cmd->add_option("--heads", run.heads, "Attention heads");
  cmd->add_option("--seq-layers", run.seq_layers, "Sequence encoder layers");
  cmd->add_option("--spa-layers", run.spa_layers, "Spatial encoder layers");
  cmd->add_option("--dec-layers", run.dec_layers, "Temporal decoder layers");
  cmd->add_option("--ffn-hidden", run.ffn_hidden, "Encoder FFN hidden dim");
  cmd->add_option("--cls-hidden", run.cls_hidden, "Classifier hidden dim");
}

int run_generate(const CliState& state) {
  auto file = generate(state.gen);
  write_annotations(file, state.gen_out);
  std::printf("wrote %lld videos to %s\n",
              static_cast<long long>(file.header.video_count),
              state.gen_out.c_str());
  return 0;
}

int run_train(CliState& state) {
  state.run.task = task_mode_from_string(state.task_name);
  auto data = read_annotations(state.data_path);
  auto result = train_model(state.run, data, state.run_out);
  std::printf("trained %d epochs; final loss %.6f; artifacts in %s\n",
              static_cast<int>(result.epochs.size()),
              result.epochs.back().loss_total, state.run_out.c_str());
  return 0;
}

int run_eval(CliState& state) {
  state.run.task = task_mode_from_string(state.task_name);
  auto data = read_annotations(state.data_path);

  Model model(state.run.to_model_config(data.header),
              derive_seed(state.run.seed, "init"));
  load_checkpoint(model.params(), state.checkpoint_path);

  std::vector<int64_t> train_counts;
  if (!state.train_data_path.empty()) {
    train_counts =
        count_predicate_labels(read_annotations(state.train_data_path), true);
  } else if (!state.counts_path.empty()) {
    std::ifstream is(state.counts_path);
    if (!is) throw ParseError("cannot open counts file " + state.counts_path);
    nlohmann::json j;
    is >> j;
    train_counts = j.get<std::vector<int64_t>>();
  } else {
    train_counts = count_predicate_labels(data, false);
  }

  EvalOptions options;
  options.iou_threshold = state.iou_threshold;
  options.thresholds = {state.head_min, state.body_min};
  if (state.pooling == "perframe") {
    options.pooling = MrPooling::kPerFrame;
  } else if (state.pooling != "pooled") {
    throw ConfigError("--pooling must be pooled or perframe");
  }

  auto result = evaluate_model(model, data, train_counts, options);
  write_metric_report(result.report, state.eval_out);
  if (!state.predictions_path.empty())
    write_predictions(result.predictions, Regime::kNoConstraints,
                      state.predictions_path);

  const auto& wc = result.report.entries.at("with_constraint");
  std::printf("task %s | with constraint:", to_string(model.config().task).c_str());
  for (const auto& [k, entry] : wc)
    std::printf("  R@%d %.4f mR@%d %.4f", k, entry.recall, k, entry.mean_recall);
  std::printf("\nreport written to %s\n", state.eval_out.c_str());
  return 0;
}

int run_report(const CliState& state) {
  auto report = summarize_run(state.report_dir);
  const auto out_dir = fs::path(state.report_dir) / "report";
  fs::create_directories(out_dir);
  auto dump = [&](const std::string& name, const std::string& text) {
    std::ofstream os(out_dir / name, std::ios::trunc);
    os << text;
  };
  dump("uncertainty.tsv", report.uncertainty_table);
  dump("loss_curve.tsv", report.loss_curve);
  if (!report.per_class_recall.empty())
    dump("per_class_recall.tsv", report.per_class_recall);

  std::cout << report.uncertainty_table;
  std::cout << report.loss_curve;
  if (!report.per_class_recall.empty()) std::cout << report.per_class_recall;
  std::printf("plot data written to %s\n", out_dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unbiased video scene-graph pipeline"};
  app.require_subcommand(1);
  CliState state;

  auto* gen = app.add_subcommand("generate", "Write a synthetic corpus");
  gen->set_config("--config");
  gen->add_option("--out", state.gen_out, "Output annotation JSONL")->required();
  gen->add_option("--object-classes", state.gen.object_classes);
  gen->add_option("--predicate-classes", state.gen.predicate_classes);
  gen->add_option("--videos", state.gen.videos);
  gen->add_option("--frames", state.gen.frames_per_video);
  gen->add_option("--objects-min", state.gen.objects_min);
  gen->add_option("--objects-max", state.gen.objects_max);
  gen->add_option("--zipf", state.gen.zipf_exponent);
  gen->add_option("--multi-label-rate", state.gen.multi_label_rate);
  gen->add_option("--missing-rate", state.gen.missing_rate);
  gen->add_option("--flip-rate", state.gen.flip_rate);
  gen->add_option("--jitter", state.gen.feature_jitter);
  gen->add_option("--burst-prob", state.gen.burst_prob);
  gen->add_option("--union-noise", state.gen.union_noise);
  gen->add_flag("--flip-on-burst", state.gen.flip_on_burst_only,
                "Concentrate label flips on blur-burst pairs");
  gen->add_option("--predicate-rank", state.gen.predicate_rank);
  gen->add_option("--feat-dim", state.gen.feature_dim);
  gen->add_option("--seed", state.gen.seed);
  gen->add_option("--world-seed", state.gen.world_seed,
                  "Seed for class geometry shared across corpora");
  gen->add_flag("--all-pairs", state.gen.all_pairs,
                "Pair every object ordered pair instead of subject-centric");

  auto* train = app.add_subcommand("train", "Train on an annotation file");
  train->set_config("--config");
  train->add_option("--data", state.data_path, "Training annotations")->required();
  train->add_option("--out", state.run_out, "Run directory")->required();
  train->add_option("--task", state.task_name, "predcls|sgcls|sgdet");
  train->add_option("--epochs", state.run.epochs);
  add_model_shape_flags(train, state.run);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->set_config("--config");
  eval->add_option("--checkpoint", state.checkpoint_path)->required();
  eval->add_option("--data", state.data_path, "Evaluation annotations")->required();
  eval->add_option("--out", state.eval_out, "Report JSON path")->required();
  eval->add_option("--task", state.task_name, "predcls|sgcls|sgdet");
  eval->add_option("--train-data", state.train_data_path,
                   "Training annotations for split counts");
  eval->add_option("--counts", state.counts_path,
                   "train_counts.json from a run directory");
  eval->add_option("--predictions", state.predictions_path,
                   "Optional ranked-candidate JSONL dump");
  eval->add_option("--pooling", state.pooling, "pooled|perframe");
  eval->add_option("--head-min", state.head_min,
                   "Absolute HEAD threshold (0 = quantile rule)");
  eval->add_option("--body-min", state.body_min, "Absolute BODY threshold");
  eval->add_option("--iou", state.iou_threshold, "SGDET IoU threshold");
  add_model_shape_flags(eval, state.run);

  auto* report = app.add_subcommand("report", "Summarize a run directory");
  report->add_option("--run", state.report_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return run_generate(state);
    if (train->parsed()) return run_train(state);
    if (eval->parsed()) return run_eval(state);
    if (report->parsed()) return run_report(state);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
