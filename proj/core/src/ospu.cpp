#include "vsgg/ospu.hpp"

#include <algorithm>
#include <map>

#include "vsgg/errors.hpp"

namespace vsgg {

int64_t SequenceBatch::total_members() const {
  int64_t n = 0;
  for (const auto& s : sequences) n += static_cast<int64_t>(s.members.size());
  return n;
}

SequenceBatch build_sequences(const std::vector<DetectedObject>& objects) {
  std::map<int64_t, std::vector<int>> by_class;
  for (size_t i = 0; i < objects.size(); ++i)
    by_class[objects[i].det_class].push_back(static_cast<int>(i));

  SequenceBatch batch;
  for (auto& [cls, members] : by_class) {
    std::sort(members.begin(), members.end(), [&](int a, int b) {
      const auto& oa = objects[static_cast<size_t>(a)];
      const auto& ob = objects[static_cast<size_t>(b)];
      if (oa.frame != ob.frame) return oa.frame < ob.frame;
      if (oa.confidence != ob.confidence) return oa.confidence > ob.confidence;
      return a < b;
    });
    ObjectSequence seq;
    seq.detector_class = cls;
    seq.members = std::move(members);
    for (int m : seq.members)
      seq.frames.push_back(objects[static_cast<size_t>(m)].frame);
    batch.padded_len =
        std::max(batch.padded_len, static_cast<int64_t>(seq.members.size()));
    batch.sequences.push_back(std::move(seq));
  }
  return batch;
}

OspuWeights make_ospu_weights(ParamStore& store, const std::string& prefix,
                              const MultiHeadConfig& cfg, int64_t cls_hidden,
                              int64_t object_classes) {
  OspuWeights w;
  w.encoder = make_encoder_stack_weights(store, prefix + ".seq_enc", cfg);
  w.cls_w1 = store.weight(prefix + ".cls.w1", cfg.model_dim,
                          {cfg.model_dim, cls_hidden});
  w.cls_b1 = store.zeros(prefix + ".cls.b1", {cls_hidden});
  w.cls_w2 =
      store.weight(prefix + ".cls.w2", cls_hidden, {cls_hidden, object_classes});
  w.cls_b2 = store.zeros(prefix + ".cls.b2", {object_classes});
  return w;
}

OspuResult encode_and_classify(const SequenceBatch& batch,
                               const Tensor& features,
                               const std::vector<int64_t>& gt_classes,
                               const OspuWeights& weights,
                               const Tensor& positional, double ln_eps) {
  const int64_t n = batch.total_members();
  if (n == 0) throw ContractError("encode_and_classify: all slots padded");
  if (features.rank() != 2)
    throw DimensionError("encode_and_classify: features must be [n, D]");
  const int64_t dim = features.dim(1);

  // Encode each padded sequence; collect unpadded rows in slot order.
  std::vector<Tensor> slot_rows;
  std::vector<int64_t> slot_to_flat;
  for (const auto& seq : batch.sequences) {
    const int64_t len = static_cast<int64_t>(seq.members.size());
    std::vector<int64_t> member_idx(seq.members.begin(), seq.members.end());
    Tensor x = gather_rows(features, member_idx);
    std::vector<int64_t> frame_idx(seq.frames.begin(), seq.frames.end());
    x = add(x, gather_rows(positional, frame_idx));
    KeyPadding mask(static_cast<size_t>(batch.padded_len), 0);
    if (len < batch.padded_len) {
      // Zero-pad to the batch width; padded slots are masked out of the
      // attention and never read back.
      Tensor pad = Tensor::zeros({batch.padded_len - len, dim});
      x = concat_rows({x, pad});
      for (int64_t s = len; s < batch.padded_len; ++s)
        mask[static_cast<size_t>(s)] = 1;
    }
    for (const auto& layer : weights.encoder)
      x = encoder_layer(x, x, layer, &mask, ln_eps);
    slot_rows.push_back(len == batch.padded_len ? x : slice_rows(x, 0, len));
    for (int m : seq.members) slot_to_flat.push_back(m);
  }

  Tensor stacked =
      slot_rows.size() == 1 ? slot_rows[0] : concat_rows(slot_rows);
  // Reorder slot-major rows back to the flat detection order.
  std::vector<int64_t> flat_to_slot(static_cast<size_t>(n));
  for (size_t s = 0; s < slot_to_flat.size(); ++s)
    flat_to_slot[static_cast<size_t>(slot_to_flat[s])] = static_cast<int64_t>(s);
  Tensor embeddings = gather_rows(stacked, flat_to_slot);

  Tensor logits = ffn2(embeddings, weights.cls_w1, weights.cls_b1,
                       weights.cls_w2, weights.cls_b2);

  if (static_cast<int64_t>(gt_classes.size()) != n)
    throw ContractError("encode_and_classify: label count mismatch");
  const int64_t n_classes = logits.dim(1);
  Tensor onehot = Tensor::zeros({n, n_classes});
  for (int64_t i = 0; i < n; ++i) {
    int64_t y = gt_classes[static_cast<size_t>(i)];
    if (y < 0 || y >= n_classes)
      throw ContractError("encode_and_classify: label out of range");
    onehot.values()[static_cast<size_t>(i * n_classes + y)] = 1.0;
  }
  Tensor logp = log(clamp(softmax(logits, -1), 1e-12, 1.0));
  Tensor loss = scale(sum_all(mul(logp, onehot)), -1.0 / static_cast<double>(n));

  return {embeddings, logits, loss};
}

Tensor intra_contrastive(const Tensor& embeddings,
                         const std::vector<int64_t>& labels) {
  if (embeddings.rank() != 2)
    throw DimensionError("intra_contrastive: embeddings must be [n, D]");
  const int64_t n = embeddings.dim(0);
  if (n < 1) throw ContractError("intra_contrastive: no embeddings");
  if (static_cast<int64_t>(labels.size()) != n)
    throw ContractError("intra_contrastive: label count mismatch");

  std::vector<Tensor> rows;
  rows.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) rows.push_back(row(embeddings, i));

  std::vector<Tensor> terms;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = i + 1; j < n; ++j) {
      Tensor d2 = sum_all(square(sub(rows[static_cast<size_t>(i)],
                                     rows[static_cast<size_t>(j)])));
      if (labels[static_cast<size_t>(i)] == labels[static_cast<size_t>(j)]) {
        terms.push_back(d2);
      } else {
        terms.push_back(relu(rsub_scalar(1.0, d2)));
      }
    }
  }
  if (terms.empty()) return Tensor::scalar(0.0);
  Tensor total = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return total;
}

}  // namespace vsgg
