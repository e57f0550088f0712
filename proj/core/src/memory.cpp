#include "vsgg/memory.hpp"

#include <fstream>
#include <sstream>

#include "vsgg/attention.hpp"
#include "vsgg/errors.hpp"

namespace vsgg {

int64_t MemoryBank::active_classes() const {
  int64_t n = 0;
  for (int64_t c : counts) n += c > 0;
  return n;
}

BankAccumulator::BankAccumulator(int64_t classes, int64_t dim) : dim_(dim) {
  if (classes < 1 || dim < 1)
    throw ContractError("BankAccumulator: nonpositive extents");
  sums_.assign(static_cast<size_t>(classes),
               std::vector<double>(static_cast<size_t>(dim), 0.0));
  counts_.assign(static_cast<size_t>(classes), 0);
}

void BankAccumulator::add(const std::vector<double>& embedding,
                          const std::vector<int64_t>& labels) {
  if (static_cast<int64_t>(embedding.size()) != dim_)
    throw ContractError("BankAccumulator::add: dimension mismatch");
  for (int64_t label : labels) {
    if (label < 0 || label >= static_cast<int64_t>(sums_.size()))
      throw ContractError("BankAccumulator::add: label out of range");
    auto& sum = sums_[static_cast<size_t>(label)];
    for (size_t d = 0; d < embedding.size(); ++d) sum[d] += embedding[d];
    counts_[static_cast<size_t>(label)] += 1;
  }
}

MemoryBank BankAccumulator::finalize(int source_epoch) const {
  MemoryBank bank;
  bank.dim = dim_;
  bank.counts = counts_;
  bank.source_epoch = source_epoch;
  bank.prototypes.resize(sums_.size());
  for (size_t c = 0; c < sums_.size(); ++c) {
    bank.prototypes[c].assign(static_cast<size_t>(dim_), 0.0);
    if (counts_[c] > 0) {
      for (size_t d = 0; d < bank.prototypes[c].size(); ++d)
        bank.prototypes[c][d] = sums_[c][d] / static_cast<double>(counts_[c]);
    }
  }
  return bank;
}

void validate_lambda(double lambda) {
  if (!(lambda > 0.0 && lambda <= 1.0))
    throw ConfigError("lambda must lie in (0, 1], got " + std::to_string(lambda));
}

MduWeights make_mdu_weights(ParamStore& store, const std::string& prefix,
                            int64_t d_rel, double lambda) {
  validate_lambda(lambda);
  MduWeights w;
  w.wq = store.weight(prefix + ".wq", d_rel, {d_rel, d_rel});
  w.wk = store.weight(prefix + ".wk", d_rel, {d_rel, d_rel});
  w.wv = store.weight(prefix + ".wv", d_rel, {d_rel, d_rel});
  w.lambda = lambda;
  return w;
}

Tensor memory_diffuse(const Tensor& r, const MemoryBank& bank,
                      const MduWeights& weights) {
  validate_lambda(weights.lambda);
  if (r.rank() != 2 || r.dim(1) != bank.dim)
    throw DimensionError("memory_diffuse: embedding dim mismatch");
  if (bank.active_classes() == 0)
    throw ContractError("memory_diffuse: every prototype is masked");

  const int64_t classes = bank.class_count();
  std::vector<double> flat;
  flat.reserve(static_cast<size_t>(classes * bank.dim));
  KeyPadding mask(static_cast<size_t>(classes), 0);
  for (int64_t c = 0; c < classes; ++c) {
    const auto& proto = bank.prototypes[static_cast<size_t>(c)];
    flat.insert(flat.end(), proto.begin(), proto.end());
    mask[static_cast<size_t>(c)] = bank.counts[static_cast<size_t>(c)] == 0;
  }
  Tensor omega = Tensor::from({classes, bank.dim}, std::move(flat));

  Tensor r_mem = attention(matmul(r, weights.wq), matmul(omega, weights.wk),
                           matmul(omega, weights.wv), &mask);
  return add(scale(r, weights.lambda), scale(r_mem, 1.0 - weights.lambda));
}

MduAction mdu_schedule(int epoch, bool training) {
  if (epoch < 1) throw ContractError("mdu_schedule: epochs start at 1");
  if (!training) return MduAction::kBypass;
  return epoch == 1 ? MduAction::kBypass : MduAction::kDiffuse;
}

void write_bank(const MemoryBank& bank, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ParseError("bank: cannot open " + path + " for write");
  os << "# predicate-class prototypes, epoch " << bank.source_epoch << "\n";
  os << bank.class_count() << " " << bank.dim << "\n";
  os.precision(17);
  for (int64_t c = 0; c < bank.class_count(); ++c) {
    os << c << " " << bank.counts[static_cast<size_t>(c)];
    for (double v : bank.prototypes[static_cast<size_t>(c)]) os << " " << v;
    os << "\n";
  }
}

MemoryBank read_bank(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("bank: cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw ParseError("bank: empty file " + path);
  MemoryBank bank;
  {
    std::sscanf(line.c_str(), "# predicate-class prototypes, epoch %d",
                &bank.source_epoch);
  }
  int64_t classes = 0;
  if (!(is >> classes >> bank.dim))
    throw ParseError("bank: malformed dimensions in " + path);
  bank.prototypes.resize(static_cast<size_t>(classes));
  bank.counts.resize(static_cast<size_t>(classes));
  for (int64_t c = 0; c < classes; ++c) {
    int64_t id = 0;
    if (!(is >> id >> bank.counts[static_cast<size_t>(c)]))
      throw ParseError("bank: truncated record in " + path);
    auto& proto = bank.prototypes[static_cast<size_t>(c)];
    proto.resize(static_cast<size_t>(bank.dim));
    for (auto& v : proto)
      if (!(is >> v)) throw ParseError("bank: truncated payload in " + path);
  }
  return bank;
}

}  // namespace vsgg
