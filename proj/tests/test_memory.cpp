#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "vsgg/attention.hpp"
#include "vsgg/errors.hpp"
#include "vsgg/memory.hpp"
#include "vsgg/rng.hpp"

using namespace vsgg;

namespace {

Tensor random_matrix(Shape shape, Rng& rng, bool grad = false) {
  Tensor t = Tensor::zeros(std::move(shape), grad);
  for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

MduWeights identity_mdu(int64_t dim, double lambda) {
  std::vector<double> eye(static_cast<size_t>(dim * dim), 0.0);
  for (int64_t i = 0; i < dim; ++i) eye[static_cast<size_t>(i * dim + i)] = 1.0;
  MduWeights w;
  w.wq = Tensor::from({dim, dim}, eye);
  w.wk = Tensor::from({dim, dim}, eye);
  w.wv = Tensor::from({dim, dim}, eye);
  w.lambda = lambda;
  return w;
}

}  // namespace

TEST_SUITE("memory") {

TEST_CASE("single contributor makes the prototype equal that embedding") {
  BankAccumulator acc(3, 4);
  acc.add({1, 2, 3, 4}, {1});
  auto bank = acc.finalize(2);
  CHECK(bank.prototypes[1] == std::vector<double>{1, 2, 3, 4});
  CHECK(bank.counts == std::vector<int64_t>{0, 1, 0});
  CHECK(bank.active_classes() == 1);
}

TEST_CASE("opposite contributors cancel to the zero prototype") {
  BankAccumulator acc(2, 3);
  acc.add({1, -2, 5}, {0});
  acc.add({-1, 2, -5}, {0});
  auto bank = acc.finalize(2);
  for (double v : bank.prototypes[0]) CHECK(v == doctest::Approx(0.0));
  CHECK(bank.counts[0] == 2);
}

TEST_CASE("multi-label embeddings contribute to every carried class") {
  BankAccumulator acc(4, 2);
  acc.add({2, 6}, {1, 3});
  acc.add({4, 2}, {3});
  auto bank = acc.finalize(5);
  CHECK(bank.prototypes[1] == std::vector<double>{2, 6});
  CHECK(bank.prototypes[3] == std::vector<double>{3, 4});  // mean of the two
  CHECK(bank.counts == std::vector<int64_t>{0, 1, 0, 2});
  CHECK(bank.source_epoch == 5);
}

TEST_CASE("bank equals a brute-force recomputation over an enumerated set") {
  Rng rng(41);
  const int64_t classes = 5, dim = 6;
  std::vector<std::vector<double>> embeddings;
  std::vector<std::vector<int64_t>> labels;
  for (int i = 0; i < 30; ++i) {
    std::vector<double> e;
    for (int64_t d = 0; d < dim; ++d) e.push_back(rng.uniform(-2, 2));
    std::vector<int64_t> ls{rng.uniform_int(0, classes - 1)};
    if (rng.chance(0.4)) ls.push_back(rng.uniform_int(0, classes - 1));
    if (ls.size() == 2 && ls[0] == ls[1]) ls.pop_back();
    embeddings.push_back(e);
    labels.push_back(ls);
  }

  BankAccumulator acc(classes, dim);
  for (size_t i = 0; i < embeddings.size(); ++i) acc.add(embeddings[i], labels[i]);
  auto bank = acc.finalize(2);

  // Oracle: independent dumb mean per class.
  for (int64_t c = 0; c < classes; ++c) {
    std::vector<double> mean(static_cast<size_t>(dim), 0.0);
    int64_t count = 0;
    for (size_t i = 0; i < embeddings.size(); ++i) {
      bool carries = false;
      for (int64_t l : labels[i]) carries |= (l == c);
      if (!carries) continue;
      ++count;
      for (int64_t d = 0; d < dim; ++d)
        mean[static_cast<size_t>(d)] += embeddings[i][static_cast<size_t>(d)];
    }
    CHECK(bank.counts[static_cast<size_t>(c)] == count);
    for (int64_t d = 0; d < dim; ++d) {
      double expect = count > 0 ? mean[static_cast<size_t>(d)] / count : 0.0;
      CHECK(bank.prototypes[static_cast<size_t>(c)][static_cast<size_t>(d)] ==
            doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("lambda = 1 leaves the embedding unchanged") {
  Rng rng(43);
  const int64_t dim = 6;
  BankAccumulator acc(3, dim);
  acc.add({1, 0, 0, 1, 0, 0}, {0});
  acc.add({0, 1, 0, 0, 1, 0}, {2});
  auto bank = acc.finalize(2);

  ParamStore store(44);
  auto w = make_mdu_weights(store, "mdu", dim, 1.0);
  Tensor r = random_matrix({2, dim}, rng);
  Tensor out = memory_diffuse(r, bank, w);
  for (size_t i = 0; i < r.values().size(); ++i)
    CHECK(out.values()[i] == doctest::Approx(r.values()[i]).epsilon(1e-12));
}

TEST_CASE("single unmasked prototype reduces to its projected value row") {
  const int64_t dim = 4;
  BankAccumulator acc(3, dim);
  acc.add({0.5, -1.0, 2.0, 0.25}, {1});
  auto bank = acc.finalize(2);

  Rng rng(45);
  auto w = identity_mdu(dim, 0.25);
  Tensor r = random_matrix({3, dim}, rng);
  Tensor out = memory_diffuse(r, bank, w);
  // Softmax over one unmasked key is 1, so r_mem = omega * Wv = omega.
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t c = 0; c < dim; ++c) {
      double expect =
          0.25 * r.at(i, c) + 0.75 * bank.prototypes[1][static_cast<size_t>(c)];
      CHECK(out.at(i, c) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("three prototypes match the attention-then-blend oracle") {
  Rng rng(47);
  const int64_t dim = 5;
  BankAccumulator acc(3, dim);
  for (int c = 0; c < 3; ++c) {
    std::vector<double> e;
    for (int64_t d = 0; d < dim; ++d) e.push_back(rng.uniform(-1, 1));
    acc.add(e, {c});
  }
  auto bank = acc.finalize(3);

  ParamStore store(48);
  auto w = make_mdu_weights(store, "mdu", dim, 0.5);
  Tensor r = random_matrix({2, dim}, rng);
  Tensor out = memory_diffuse(r, bank, w);

  std::vector<double> flat;
  for (const auto& p : bank.prototypes) flat.insert(flat.end(), p.begin(), p.end());
  Tensor omega = Tensor::from({3, dim}, flat);
  Tensor r_mem =
      attention(matmul(r, w.wq), matmul(omega, w.wk), matmul(omega, w.wv));
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t c = 0; c < dim; ++c)
      CHECK(out.at(i, c) ==
            doctest::Approx(0.5 * r.at(i, c) + 0.5 * r_mem.at(i, c)).epsilon(1e-12));
}

TEST_CASE("fully masked bank is a contract error") {
  BankAccumulator acc(3, 2);
  auto bank = acc.finalize(2);
  ParamStore store(49);
  auto w = make_mdu_weights(store, "mdu", 2, 0.5);
  Tensor r = Tensor::zeros({1, 2});
  CHECK_THROWS_AS(memory_diffuse(r, bank, w), ContractError);
}

TEST_CASE("lambda outside (0,1] is rejected") {
  ParamStore store(50);
  CHECK_THROWS_AS(make_mdu_weights(store, "a", 2, 0.0), ConfigError);
  ParamStore store2(51);
  CHECK_THROWS_AS(make_mdu_weights(store2, "b", 2, 1.5), ConfigError);
  ParamStore store3(52);
  CHECK_NOTHROW(make_mdu_weights(store3, "c", 2, 1.0));
}

TEST_CASE("schedule: first epoch bypasses, later epochs diffuse, inference bypasses") {
  CHECK(mdu_schedule(1, true) == MduAction::kBypass);
  CHECK(mdu_schedule(2, true) == MduAction::kDiffuse);
  CHECK(mdu_schedule(7, true) == MduAction::kDiffuse);
  CHECK(mdu_schedule(1, false) == MduAction::kBypass);
  CHECK(mdu_schedule(9, false) == MduAction::kBypass);
  CHECK_THROWS_AS(mdu_schedule(0, true), ContractError);
}

TEST_CASE("gradient splits lambda to the direct path on a 2-prototype toy") {
  const int64_t dim = 3;
  BankAccumulator acc(2, dim);
  acc.add({0.3, -0.4, 0.9}, {0});
  acc.add({-0.7, 0.2, 0.1}, {1});
  auto bank = acc.finalize(2);

  Rng rng(53);
  ParamStore store(54);
  const double lambda = 0.3;
  auto w = make_mdu_weights(store, "mdu", dim, lambda);
  Tensor readout = random_matrix({1, dim}, rng);

  // d/dr of readout . (lambda r + (1-lambda) A(r)) splits into lambda times
  // the direct grad plus (1-lambda) times the attention-path grad, measured
  // here by differencing the two paths in isolation.
  Tensor r = random_matrix({1, dim}, rng, /*grad=*/true);
  Tensor out = memory_diffuse(r, bank, w);
  Tensor loss = sum_all(mul(readout, out));
  backward(loss);
  const std::vector<double> full_grad = r.grad();

  // Direct path alone.
  Tensor r2 = Tensor::from({1, dim}, r.values(), true);
  backward(sum_all(mul(readout, scale(r2, 1.0))));
  const std::vector<double> direct_grad = r2.grad();

  // Attention path alone (lambda excluded).
  std::vector<double> flat;
  for (const auto& p : bank.prototypes) flat.insert(flat.end(), p.begin(), p.end());
  Tensor omega = Tensor::from({2, dim}, flat);
  Tensor r3 = Tensor::from({1, dim}, r.values(), true);
  Tensor mem = attention(matmul(r3, w.wq), matmul(omega, w.wk), matmul(omega, w.wv));
  backward(sum_all(mul(readout, mem)));
  const std::vector<double> mem_grad = r3.grad();

  for (size_t i = 0; i < full_grad.size(); ++i)
    CHECK(full_grad[i] == doctest::Approx(lambda * direct_grad[i] +
                                          (1 - lambda) * mem_grad[i])
                              .epsilon(1e-10));

  // And the same split against central finite differences.
  auto f = [&] {
    return sum_all(mul(readout, memory_diffuse(r, bank, w)));
  };
  double h = 1e-6;
  for (size_t j = 0; j < r.values().size(); ++j) {
    double keep = r.values()[j];
    r.values()[j] = keep + h;
    double up = f().value();
    r.values()[j] = keep - h;
    double down = f().value();
    r.values()[j] = keep;
    CHECK(full_grad[j] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-4));
  }
}

TEST_CASE("bank file round trip") {
  BankAccumulator acc(3, 2);
  acc.add({0.125, -2.5}, {0, 2});
  acc.add({1.0, 3.0}, {2});
  auto bank = acc.finalize(4);
  auto path = std::filesystem::temp_directory_path() / "vsgg_bank.txt";
  write_bank(bank, path.string());
  auto loaded = read_bank(path.string());
  CHECK(loaded.source_epoch == 4);
  CHECK(loaded.counts == bank.counts);
  REQUIRE(loaded.prototypes.size() == bank.prototypes.size());
  for (size_t c = 0; c < bank.prototypes.size(); ++c)
    for (size_t d = 0; d < bank.prototypes[c].size(); ++d)
      CHECK(loaded.prototypes[c][d] == doctest::Approx(bank.prototypes[c][d]));
  std::filesystem::remove(path);
}

}  // TEST_SUITE
