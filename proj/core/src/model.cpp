#include "vsgg/model.hpp"

#include <algorithm>
#include <cmath>

#include "vsgg/errors.hpp"
#include "vsgg/rng.hpp"

namespace vsgg {

namespace {

// Mean cross-entropy of softmaxed logits against integer labels.
Tensor cross_entropy_mean(const Tensor& logits,
                          const std::vector<int64_t>& labels) {
  const int64_t n = logits.dim(0), classes = logits.dim(1);
  Tensor onehot = Tensor::zeros({n, classes});
  for (int64_t i = 0; i < n; ++i) {
    int64_t y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= classes)
      throw ContractError("cross_entropy: label out of range");
    onehot.values()[static_cast<size_t>(i * classes + y)] = 1.0;
  }
  Tensor logp = log(clamp(softmax(logits, -1), 1e-12, 1.0));
  return scale(sum_all(mul(logp, onehot)), -1.0 / static_cast<double>(n));
}

int64_t argmax_row(const std::vector<double>& values, int64_t row,
                   int64_t width) {
  int64_t best = 0;
  for (int64_t c = 1; c < width; ++c)
    if (values[static_cast<size_t>(row * width + c)] >
        values[static_cast<size_t>(row * width + best)])
      best = c;
  return best;
}

double softmax_prob_at(const std::vector<double>& values, int64_t row,
                       int64_t width, int64_t index) {
  double mx = values[static_cast<size_t>(row * width)];
  for (int64_t c = 1; c < width; ++c)
    mx = std::max(mx, values[static_cast<size_t>(row * width + c)]);
  double total = 0.0;
  for (int64_t c = 0; c < width; ++c)
    total += std::exp(values[static_cast<size_t>(row * width + c)] - mx);
  return std::exp(values[static_cast<size_t>(row * width + index)] - mx) / total;
}

}  // namespace

void ModelConfig::validate() const {
  if (object_classes < 1 || predicate_classes < 1)
    throw ConfigError("model config: class counts must be >= 1");
  if (feat_dim < 1 || d_v < 1 || d_u < 1 || d_s < 1)
    throw ConfigError("model config: nonpositive dims");
  if (d_rel() % heads != 0 || feat_dim % heads != 0)
    throw ConfigError("model config: heads must divide feat_dim and d_rel");
  if (eta < 1) throw ConfigError("model config: eta must be >= 1");
  if (gmm_components < 1)
    throw ConfigError("model config: gmm_components must be >= 1");
  validate_lambda(lambda);
}

Model::Model(ModelConfig config, uint64_t init_seed)
    : config_(std::move(config)), params_(init_seed) {
  config_.validate();
  positional_ = sinusoidal_positions(config_.max_frames, config_.feat_dim);

  const bool classify_objects = config_.task != TaskMode::kPredCls;
  if (classify_objects) {
    if (config_.use_ospu) {
      auto cfg = MultiHeadConfig::balanced(config_.feat_dim, config_.heads,
                                           config_.ffn_hidden,
                                           config_.seq_layers);
      ospu_ = make_ospu_weights(params_, "ospu", cfg, config_.cls_hidden,
                                config_.object_classes);
    } else {
      frame_cls_ = make_ffn_weights(params_, "frame_cls", config_.feat_dim,
                                    config_.cls_hidden, config_.object_classes);
    }
  }

  peg_input_ = make_peg_input_weights(params_, "peg.in", config_.feat_dim,
                                      config_.d_v, config_.d_u);
  semantic_table_ = params_.weight("peg.sem", config_.d_s,
                                   {config_.object_classes, config_.d_s});
  auto rel_cfg = MultiHeadConfig::balanced(config_.d_rel(), config_.heads,
                                           config_.ffn_hidden,
                                           config_.spa_layers);
  spa_enc_ = make_encoder_stack_weights(params_, "peg.spa_enc", rel_cfg);
  auto dec_cfg = MultiHeadConfig::balanced(config_.d_rel(), config_.heads,
                                           config_.ffn_hidden,
                                           config_.dec_layers);
  temp_dec_ = make_encoder_stack_weights(params_, "peg.temp_dec", dec_cfg);
  temporal_encoding_ =
      params_.weight("peg.e_r", config_.d_rel(), {config_.eta, config_.d_rel()});

  if (config_.use_mdu)
    mdu_ = make_mdu_weights(params_, "mdu", config_.d_rel(), config_.lambda);

  const int64_t head_hidden =
      config_.gmm_hidden > 0 ? config_.gmm_hidden
                             : std::max<int64_t>(config_.d_rel() / 2, 8);
  if (config_.use_gmm) {
    gmm_ = make_gmm_head_weights(params_, "head", config_.d_rel(),
                                 config_.predicate_classes,
                                 config_.gmm_components, head_hidden);
  } else {
    ffn_head_ = make_ffn_weights(params_, "head", config_.d_rel(), head_hidden,
                                 config_.predicate_classes);
  }
}

Model::PipelineOut Model::run_pipeline(const VideoAnnotation& video) {
  PipelineOut out;
  const auto frames = static_cast<int64_t>(video.frames.size());
  if (frames > config_.max_frames)
    throw ContractError("model: video longer than the positional table");

  // Flatten detections in (frame, object) order.
  std::vector<DetectedObject> flat;
  for (int f = 0; f < frames; ++f) {
    const auto& frame = video.frames[static_cast<size_t>(f)];
    for (int o = 0; o < static_cast<int>(frame.objects.size()); ++o) {
      flat.push_back(frame.objects[static_cast<size_t>(o)]);
      out.flat_to_frame_obj.emplace_back(f, o);
      out.flat_gt_classes.push_back(frame.objects[static_cast<size_t>(o)].gt_class);
    }
  }
  const auto n_objects = static_cast<int64_t>(flat.size());

  Tensor features = Tensor::zeros({n_objects, config_.feat_dim});
  for (int64_t i = 0; i < n_objects; ++i) {
    const auto& feat = flat[static_cast<size_t>(i)].feature;
    if (static_cast<int64_t>(feat.size()) != config_.feat_dim)
      throw ContractError("model: feature dim mismatch in annotations");
    std::copy(feat.begin(), feat.end(),
              features.values().begin() + i * config_.feat_dim);
  }

  // Object classification path.
  out.semantic_classes.resize(static_cast<size_t>(n_objects));
  if (config_.task == TaskMode::kPredCls) {
    for (int64_t i = 0; i < n_objects; ++i) {
      int64_t cls = out.flat_gt_classes[static_cast<size_t>(i)];
      if (cls < 0 || cls >= config_.object_classes)
        throw ContractError("model: predcls requires ground-truth classes");
      out.semantic_classes[static_cast<size_t>(i)] = cls;
    }
  } else if (n_objects > 0) {
    if (config_.use_ospu) {
      auto batch = build_sequences(flat);
      auto enc = encode_and_classify(batch, features, out.flat_gt_classes,
                                     *ospu_, positional_, config_.ln_eps);
      out.object_logits = enc.logits;
      out.object_embeddings = enc.embeddings;
      out.object_loss = enc.loss;
      if (config_.use_intra)
        out.intra_loss = intra_contrastive(enc.embeddings, out.flat_gt_classes);
    } else {
      out.object_logits = apply_ffn(features, *frame_cls_);
      out.object_loss = cross_entropy_mean(out.object_logits,
                                           out.flat_gt_classes);
    }
    for (int64_t i = 0; i < n_objects; ++i)
      out.semantic_classes[static_cast<size_t>(i)] =
          argmax_row(out.object_logits.values(), i, config_.object_classes);
  }

  // Pair representations, frame by frame.
  std::vector<int64_t> flat_index_of(static_cast<size_t>(n_objects));
  {
    int64_t i = 0;
    for (auto& idx : flat_index_of) idx = i++;
  }
  // v-projections batched over all detections.
  Tensor v_proj =
      n_objects > 0 ? apply_ffn(features, peg_input_.f_v) : Tensor();
  Tensor sem_rows =
      n_objects > 0 ? gather_rows(semantic_table_, out.semantic_classes)
                    : Tensor();

  std::vector<int64_t> frame_flat_base(static_cast<size_t>(frames), 0);
  {
    int64_t base = 0;
    for (int f = 0; f < frames; ++f) {
      frame_flat_base[static_cast<size_t>(f)] = base;
      base += static_cast<int64_t>(video.frames[static_cast<size_t>(f)].objects.size());
    }
  }

  std::vector<Tensor> frame_spa(static_cast<size_t>(frames));
  out.frame_pair_indices.resize(static_cast<size_t>(frames));
  const bool det_boxes = config_.task == TaskMode::kSgDet;
  for (int f = 0; f < frames; ++f) {
    const auto& frame = video.frames[static_cast<size_t>(f)];
    const auto pairs = static_cast<int64_t>(frame.pairs.size());
    if (pairs == 0) continue;

    std::vector<int64_t> subj_idx, obj_idx;
    Tensor unions = Tensor::zeros({pairs, config_.feat_dim});
    Tensor boxes = Tensor::zeros({pairs, 8});
    for (int64_t p = 0; p < pairs; ++p) {
      const auto& pair = frame.pairs[static_cast<size_t>(p)];
      if (pair.subject == pair.object)
        throw ContractError("model: pair with identical endpoints");
      const int64_t base = frame_flat_base[static_cast<size_t>(f)];
      subj_idx.push_back(base + pair.subject);
      obj_idx.push_back(base + pair.object);
      if (static_cast<int64_t>(pair.union_feature.size()) != config_.feat_dim)
        throw ContractError("model: union feature dim mismatch");
      std::copy(pair.union_feature.begin(), pair.union_feature.end(),
                unions.values().begin() + p * config_.feat_dim);
      const auto& so = frame.objects[static_cast<size_t>(pair.subject)];
      const auto& oo = frame.objects[static_cast<size_t>(pair.object)];
      const auto& sb = det_boxes ? so.det_box : so.gt_box;
      const auto& ob = det_boxes ? oo.det_box : oo.gt_box;
      double* row = boxes.values().data() + p * 8;
      row[0] = sb[0]; row[1] = sb[1]; row[2] = sb[2]; row[3] = sb[3];
      row[4] = ob[0]; row[5] = ob[1]; row[6] = ob[2]; row[7] = ob[3];
      out.frame_pair_indices[static_cast<size_t>(f)].push_back(p);
    }

    Tensor union_path = apply_ffn(
        add(unions, apply_ffn(boxes, peg_input_.f_box)), peg_input_.f_u);
    Tensor r_frame = concat_cols({gather_rows(v_proj, subj_idx),
                                  gather_rows(v_proj, obj_idx), union_path,
                                  gather_rows(sem_rows, subj_idx),
                                  gather_rows(sem_rows, obj_idx)});
    frame_spa[static_cast<size_t>(f)] =
        spatial_encode(r_frame, spa_enc_, config_.ln_eps);
  }

  // Temporal windows; each frame's final embedding comes from the last
  // window containing it (only one exists at the default stride).
  out.frame_pair_embeddings.assign(static_cast<size_t>(frames), Tensor());
  for (const auto& window : build_windows(frames, config_.eta, config_.stride())) {
    std::vector<Tensor> blocks;
    std::vector<int64_t> offsets;
    std::vector<int> member_frames;
    for (int f = window.start; f < window.start + window.length; ++f) {
      const Tensor& spa = frame_spa[static_cast<size_t>(f)];
      if (!spa.defined()) continue;
      blocks.push_back(spa);
      for (int64_t s = 0; s < spa.dim(0); ++s)
        offsets.push_back(f - window.start);
      member_frames.push_back(f);
    }
    if (blocks.empty()) continue;
    Tensor z = blocks.size() == 1 ? blocks[0] : concat_rows(blocks);
    Tensor decoded = temporal_decode(z, offsets, temporal_encoding_, temp_dec_,
                                     config_.ln_eps);
    int64_t at = 0;
    for (int f : member_frames) {
      const int64_t k = frame_spa[static_cast<size_t>(f)].dim(0);
      out.frame_pair_embeddings[static_cast<size_t>(f)] =
          slice_rows(decoded, at, at + k);
      at += k;
    }
  }
  return out;
}

Tensor Model::collect_pairs(const PipelineOut& out,
                            std::vector<const PairAnnotation*>* pair_refs) const {
  std::vector<Tensor> blocks;
  for (const auto& block : out.frame_pair_embeddings)
    if (block.defined()) blocks.push_back(block);
  if (blocks.empty()) return Tensor();
  return blocks.size() == 1 ? blocks[0] : concat_rows(blocks);
}

Model::TrainForward Model::train_step(const VideoAnnotation& video, int epoch,
                                      const MemoryBank* bank, Rng* eps_rng,
                                      const Tensor* frozen_eps) {
  auto pipeline = run_pipeline(video);
  TrainForward fwd;

  Tensor r_all = collect_pairs(pipeline, nullptr);
  std::vector<const PairAnnotation*> pair_refs;
  for (size_t f = 0; f < video.frames.size(); ++f) {
    if (!pipeline.frame_pair_embeddings[f].defined()) continue;
    for (int64_t p : pipeline.frame_pair_indices[f])
      pair_refs.push_back(&video.frames[f].pairs[static_cast<size_t>(p)]);
  }

  if (r_all.defined()) {
    fwd.pair_count = r_all.dim(0);

    Tensor z = r_all;
    if (config_.use_mdu &&
        mdu_schedule(epoch, /*training=*/true) == MduAction::kDiffuse) {
      if (bank == nullptr)
        throw ContractError("train_step: epoch >= 2 needs a memory bank");
      z = memory_diffuse(r_all, *bank, *mdu_);
    }

    Tensor targets = Tensor::zeros({fwd.pair_count, config_.predicate_classes});
    for (int64_t i = 0; i < fwd.pair_count; ++i)
      for (int64_t cls : pair_refs[static_cast<size_t>(i)]->observed_predicates)
        targets.values()[static_cast<size_t>(
            i * config_.predicate_classes + cls)] = 1.0;

    if (config_.use_gmm) {
      auto gparams = gmm_params(z, *gmm_);
      Tensor eps;
      if (frozen_eps != nullptr) {
        eps = *frozen_eps;
      } else {
        if (eps_rng == nullptr)
          throw ContractError("train_step: need an epsilon source");
        eps = sample_epsilon(*eps_rng, fwd.pair_count,
                             config_.predicate_classes, config_.gmm_components);
      }
      auto scores = train_scores(gparams, eps);
      fwd.loss_pred = predicate_loss(scores.scores, targets);
      fwd.mean_u_al = mean_all(aleatoric(gparams.pi, gparams.sigma)).value();
      fwd.mean_u_ep = mean_all(epistemic(gparams.pi, gparams.mu)).value();
    } else {
      fwd.loss_pred = predicate_loss(sigmoid(apply_ffn(z, *ffn_head_)), targets);
    }
  } else {
    fwd.loss_pred = Tensor::scalar(0.0);
  }

  Tensor total = fwd.loss_pred;
  if (pipeline.object_loss.defined()) {
    fwd.loss_obj = pipeline.object_loss;
    total = add(total, fwd.loss_obj);
  } else {
    fwd.loss_obj = Tensor::scalar(0.0);
  }
  if (pipeline.intra_loss.defined()) {
    fwd.loss_intra = pipeline.intra_loss;
    total = add(total, fwd.loss_intra);
  } else {
    fwd.loss_intra = Tensor::scalar(0.0);
  }
  fwd.loss_total = total;
  return fwd;
}

std::vector<Model::FrameInference> Model::infer_video(
    const VideoAnnotation& video) {
  auto pipeline = run_pipeline(video);

  std::vector<FrameInference> result(video.frames.size());

  // Object predictions per frame.
  std::vector<std::vector<int64_t>> cls_by_frame(video.frames.size());
  std::vector<std::vector<double>> score_by_frame(video.frames.size());
  for (size_t f = 0; f < video.frames.size(); ++f) {
    cls_by_frame[f].assign(video.frames[f].objects.size(), -1);
    score_by_frame[f].assign(video.frames[f].objects.size(), 1.0);
  }
  for (size_t i = 0; i < pipeline.flat_to_frame_obj.size(); ++i) {
    auto [f, o] = pipeline.flat_to_frame_obj[i];
    const auto& object = video.frames[static_cast<size_t>(f)]
                             .objects[static_cast<size_t>(o)];
    int64_t cls;
    double score;
    if (config_.task == TaskMode::kPredCls) {
      cls = object.gt_class;
      score = 1.0;
    } else {
      cls = pipeline.semantic_classes[i];
      score = softmax_prob_at(pipeline.object_logits.values(),
                              static_cast<int64_t>(i), config_.object_classes,
                              cls);
      if (config_.task == TaskMode::kSgDet) score *= object.confidence;
    }
    cls_by_frame[static_cast<size_t>(f)][static_cast<size_t>(o)] = cls;
    score_by_frame[static_cast<size_t>(f)][static_cast<size_t>(o)] = score;
  }

  // Predicate scores: inference rule over the direct embeddings.
  Tensor r_all = collect_pairs(pipeline, nullptr);
  std::vector<double> pred_scores;
  if (r_all.defined()) {
    Tensor scores = config_.use_gmm
                        ? infer_scores(gmm_params(r_all, *gmm_))
                        : sigmoid(apply_ffn(r_all, *ffn_head_));
    pred_scores = scores.values();
  }

  const bool det_boxes = config_.task == TaskMode::kSgDet;
  int64_t cursor = 0;
  for (size_t f = 0; f < video.frames.size(); ++f) {
    const auto& frame = video.frames[f];
    result[f].object_classes = cls_by_frame[f];
    result[f].object_scores = score_by_frame[f];
    if (!pipeline.frame_pair_embeddings[f].defined()) continue;
    for (int64_t p : pipeline.frame_pair_indices[f]) {
      const auto& pair = frame.pairs[static_cast<size_t>(p)];
      PairScores ps;
      ps.pair_index = static_cast<int>(p);
      const auto& so = frame.objects[static_cast<size_t>(pair.subject)];
      const auto& oo = frame.objects[static_cast<size_t>(pair.object)];
      ps.subject.box = det_boxes ? so.det_box : so.gt_box;
      ps.object.box = det_boxes ? oo.det_box : oo.gt_box;
      ps.subject.cls = cls_by_frame[f][static_cast<size_t>(pair.subject)];
      ps.object.cls = cls_by_frame[f][static_cast<size_t>(pair.object)];
      ps.subject.score = score_by_frame[f][static_cast<size_t>(pair.subject)];
      ps.object.score = score_by_frame[f][static_cast<size_t>(pair.object)];
      ps.predicate_scores.assign(
          pred_scores.begin() + cursor * config_.predicate_classes,
          pred_scores.begin() + (cursor + 1) * config_.predicate_classes);
      result[f].pairs.push_back(std::move(ps));
      ++cursor;
    }
  }
  return result;
}

MemoryBank Model::compute_memory_bank(
    const std::vector<VideoAnnotation>& videos, int epoch) {
  if (epoch < 2)
    throw ContractError(
        "compute_memory_bank: no previous-epoch weights exist at epoch 1");
  BankAccumulator acc(config_.predicate_classes, config_.d_rel());
  std::vector<double> row_buf(static_cast<size_t>(config_.d_rel()));
  for (const auto& video : videos) {
    auto pipeline = run_pipeline(video);
    for (size_t f = 0; f < video.frames.size(); ++f) {
      const Tensor& block = pipeline.frame_pair_embeddings[f];
      if (!block.defined()) continue;
      const auto& values = block.values();
      for (size_t slot = 0; slot < pipeline.frame_pair_indices[f].size(); ++slot) {
        const auto& pair =
            video.frames[f].pairs[static_cast<size_t>(
                pipeline.frame_pair_indices[f][slot])];
        if (pair.observed_predicates.empty()) continue;
        std::copy(values.begin() + static_cast<int64_t>(slot) * config_.d_rel(),
                  values.begin() + static_cast<int64_t>(slot + 1) * config_.d_rel(),
                  row_buf.begin());
        acc.add(row_buf, pair.observed_predicates);
      }
    }
  }
  return acc.finalize(epoch - 1);
}

std::vector<FrameGroundTruth> ground_truth_frames(const VideoAnnotation& video) {
  std::vector<FrameGroundTruth> out;
  for (const auto& frame : video.frames) {
    FrameGroundTruth fg;
    fg.video = video.id;
    fg.frame = frame.frame;
    for (size_t p = 0; p < frame.pairs.size(); ++p) {
      const auto& pair = frame.pairs[p];
      const auto& so = frame.objects[static_cast<size_t>(pair.subject)];
      const auto& oo = frame.objects[static_cast<size_t>(pair.object)];
      for (int64_t predicate : pair.gt_predicates) {
        GtTriplet gt;
        gt.pair_index = static_cast<int>(p);
        gt.subject_class = so.gt_class;
        gt.object_class = oo.gt_class;
        gt.predicate = predicate;
        gt.subject_box = so.gt_box;
        gt.object_box = oo.gt_box;
        fg.triplets.push_back(gt);
      }
    }
    out.push_back(std::move(fg));
  }
  return out;
}

}  // namespace vsgg
