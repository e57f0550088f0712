#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vsgg/params.hpp"
#include "vsgg/tensor.hpp"

namespace vsgg {

// Per-predicate-class prototype centroids. Classes with no contributors keep
// a zero prototype and are masked out of the diffusion attention.
struct MemoryBank {
  int64_t dim = 0;
  std::vector<std::vector<double>> prototypes;  // one per predicate class
  std::vector<int64_t> counts;                  // contributor counts
  int source_epoch = 0;                         // epoch whose weights built it

  int64_t class_count() const { return static_cast<int64_t>(prototypes.size()); }
  int64_t active_classes() const;
};

// Streams embeddings once; bounded memory (running sums + counts). A
// multi-label pair contributes to every class it carries.
class BankAccumulator {
 public:
  BankAccumulator(int64_t classes, int64_t dim);

  void add(const std::vector<double>& embedding,
           const std::vector<int64_t>& labels);
  MemoryBank finalize(int source_epoch) const;

 private:
  int64_t dim_;
  std::vector<std::vector<double>> sums_;
  std::vector<int64_t> counts_;
};

struct MduWeights {
  Tensor wq, wk, wv;  // square d_rel matrices
  double lambda = 0.5;
};

// Throws ConfigError unless 0 < lambda <= 1.
MduWeights make_mdu_weights(ParamStore& store, const std::string& prefix,
                            int64_t d_rel, double lambda);
void validate_lambda(double lambda);

// r_mem = Attention(r Wq, Omega Wk, Omega Wv) over classes with contributors;
// returns lambda * r + (1 - lambda) * r_mem. The bank is a frozen snapshot:
// gradients flow into r and the W matrices only. Throws ContractError when
// every prototype is masked.
Tensor memory_diffuse(const Tensor& r, const MemoryBank& bank,
                      const MduWeights& weights);

enum class MduAction { kBypass, kDiffuse };

// Epoch 1 trains without memory; later epochs diffuse with the previous
// epoch's bank; inference always bypasses.
MduAction mdu_schedule(int epoch, bool training);

// Bank dump: one line per class, "class count v0 v1 ...".
void write_bank(const MemoryBank& bank, const std::string& path);
MemoryBank read_bank(const std::string& path);

}  // namespace vsgg
