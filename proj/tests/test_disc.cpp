#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "milgan/disc.hpp"
#include "milgan/rng.hpp"

using namespace milgan;

namespace {

// Linearly separable toy channels: real rows hover around +1, fake around -1.
std::vector<Tensor> toy_batch(int count, int t_len, int k, double mean, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> out;
  for (int i = 0; i < count; ++i) {
    Tensor seq({t_len, k});
    for (std::int64_t x = 0; x < seq.size(); ++x) seq.at(x) = mean + 0.3 * rng.gaussian();
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace

TEST_CASE("zero weights score exactly one half") {
  DiscParams p = init_disc(4, 8, 1);
  for (const auto& name : p.store.names()) p.store.param(name).fill(0.0);
  Rng rng(2);
  const Tensor seq = Tensor::uniform({5, 4}, rng, -1, 1);
  CHECK(score(p, seq, Modality::txt) == 0.5);
}

TEST_CASE("score is deterministic and strictly inside (0,1)") {
  DiscParams p = init_disc(3, 16, 3);
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor seq = Tensor::uniform({4, 3}, rng, -50.0, 50.0);
    const double s1 = score(p, seq, Modality::img);
    const double s2 = score(p, seq, Modality::img);
    CHECK(s1 == s2);
    CHECK(s1 > 0.0);
    CHECK(s1 < 1.0);
  }
}

TEST_CASE("sequences shorter than the widest filter are rejected") {
  DiscParams p = init_disc(3, 4, 4);
  Rng rng(4);
  const Tensor seq = Tensor::uniform({2, 3}, rng, -1, 1);
  CHECK_THROWS_AS(score(p, seq, Modality::txt), ShapeError);
}

namespace {

// Max-over-time is only piecewise differentiable; near-tied window responses
// make central differences straddle the kink. Keep draws whose pooling
// margins are comfortably wider than the probe step.
bool pooling_margins_ok(const DiscParams& p, const Tensor& seq, Modality m, double margin) {
  std::vector<Tensor> banks;
  for (int w : p.widths) banks.push_back(p.store.param(p.param_name(m, "conv" + std::to_string(w))));
  for (const Tensor& bank : banks) {
    const std::int64_t maps = bank.extent(0);
    const std::int64_t w = bank.extent(1);
    const std::int64_t windows = seq.rows() - w + 1;
    for (std::int64_t map = 0; map < maps; ++map) {
      double best = -1e300, second = -1e300;
      for (std::int64_t pos = 0; pos < windows; ++pos) {
        double r = 0.0;
        for (std::int64_t dt = 0; dt < w; ++dt) {
          for (std::int64_t c = 0; c < seq.cols(); ++c) {
            r += seq.at(pos + dt, c) * bank.at((map * w + dt) * seq.cols() + c);
          }
        }
        if (r > best) {
          second = best;
          best = r;
        } else if (r > second) {
          second = r;
        }
      }
      if (windows > 1 && best - second < margin) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("score gradient passes finite differences") {
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 12 && checked < 5; ++seed) {
    DiscParams p = init_disc(3, 2, seed);
    Rng rng(seed + 10);
    const Tensor seq = Tensor::uniform({5, 3}, rng, -1, 1);
    if (!pooling_margins_ok(p, seq, Modality::txt, 1e-2)) continue;  // tie: not differentiable
    ++checked;
    auto loss = [&]() {
      p.store.zero_grads();
      const double s = score(p, seq, Modality::txt);
      return score_with_grad(p, seq, Modality::txt, s * (1.0 - s));  // dz = ds/dz
    };
    CHECK(grad_check(loss, p.store, 1e-4) < 1e-4);
  }
  CHECK(checked == 5);
}

TEST_CASE("pretrain_xent with zero epochs leaves parameters unchanged") {
  DiscParams p = init_disc(3, 4, 5);
  const Tensor before = p.store.param("txt.conv2");
  pretrain_xent(p, toy_batch(4, 4, 3, 1.0, 1), toy_batch(4, 4, 3, -1.0, 2), Modality::txt, 0, 0.1, 1);
  CHECK(p.store.param("txt.conv2") == before);
}

TEST_CASE("cross-entropy pretraining separates the separable toy set") {
  DiscParams p = init_disc(3, 8, 6);
  const auto real = toy_batch(12, 4, 3, 1.0, 11);
  const auto fake = toy_batch(12, 4, 3, -1.0, 12);
  DiscTrainLog log;
  pretrain_xent(p, real, fake, Modality::txt, 300, 0.5, 1, &log);
  CHECK(log.epoch_loss.back() <= log.epoch_loss.front());
  CHECK(mean_score(p, real, Modality::txt) > 0.9);
  CHECK(mean_score(p, fake, Modality::txt) < 0.1);
}

TEST_CASE("pretraining is reproducible") {
  const auto real = toy_batch(6, 4, 3, 1.0, 21);
  const auto fake = toy_batch(6, 4, 3, -1.0, 22);
  DiscParams a = init_disc(3, 4, 7);
  DiscParams b = init_disc(3, 4, 7);
  pretrain_xent(a, real, fake, Modality::mm, 50, 0.3, 9);
  pretrain_xent(b, real, fake, Modality::mm, 50, 0.3, 9);
  for (const auto& name : a.store.names()) CHECK(a.store.param(name) == b.store.param(name));
}

TEST_CASE("identical real and fake batches cancel the gap gradient") {
  DiscParams p = init_disc(3, 4, 8);
  const auto batch = toy_batch(5, 4, 3, 0.5, 31);
  const std::map<std::string, Tensor> before = p.store.all_params();
  const double obj = train_step_gap(p, batch, batch, Modality::txt, 0.5);
  // symmetric terms cancel; only summation-order noise remains
  for (const auto& [name, t] : before) {
    const Tensor& after = p.store.param(name);
    for (std::int64_t i = 0; i < t.size(); ++i) {
      CHECK(std::fabs(after.at(i) - t.at(i)) < 1e-14);
    }
  }
  CHECK(obj == doctest::Approx(-1.0).epsilon(1e-12));  // -mean(s) - mean(1-s) on equal batches
}

TEST_CASE("gap training widens the real-fake separation") {
  DiscParams p = init_disc(3, 8, 9);
  const auto real = toy_batch(12, 4, 3, 1.0, 41);
  const auto fake = toy_batch(12, 4, 3, -1.0, 42);
  const double gap0 =
      mean_score(p, real, Modality::txt) - mean_score(p, fake, Modality::txt);
  for (int step = 0; step < 200; ++step) {
    train_step_gap(p, real, fake, Modality::txt, 1.0);
  }
  const double gap1 =
      mean_score(p, real, Modality::txt) - mean_score(p, fake, Modality::txt);
  CHECK(gap1 > gap0);
  CHECK(gap1 > 0.8);
}

TEST_CASE("the gap objective value matches an independent recomputation") {
  DiscParams p = init_disc(3, 4, 10);
  const auto real = toy_batch(5, 4, 3, 0.8, 51);
  const auto fake = toy_batch(7, 4, 3, -0.8, 52);

  double expect = 0.0;
  for (const auto& s : real) expect -= score(p, s, Modality::img) / 5.0;
  for (const auto& s : fake) expect -= (1.0 - score(p, s, Modality::img)) / 7.0;

  DiscParams q = init_disc(3, 4, 10);
  const double got = train_step_gap(q, real, fake, Modality::img, 0.1);
  CHECK(got == expect);
}

TEST_CASE("train_step_gap with rate zero leaves parameters unchanged") {
  DiscParams p = init_disc(3, 4, 11);
  const auto real = toy_batch(4, 4, 3, 1.0, 61);
  const auto fake = toy_batch(4, 4, 3, -1.0, 62);
  const std::map<std::string, Tensor> before = p.store.all_params();
  train_step_gap(p, real, fake, Modality::txt, 0.0);
  for (const auto& [name, t] : before) CHECK(p.store.param(name) == t);
}

TEST_CASE("gap training widens separation across many seeds") {
  int ok = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    DiscParams p = init_disc(3, 8, seed + 100);
    const auto real = toy_batch(10, 4, 3, 1.0, seed * 2 + 1);
    const auto fake = toy_batch(10, 4, 3, -1.0, seed * 2 + 2);
    const double gap0 = mean_score(p, real, Modality::txt) - mean_score(p, fake, Modality::txt);
    for (int step = 0; step < 200; ++step) train_step_gap(p, real, fake, Modality::txt, 1.0);
    const double gap1 = mean_score(p, real, Modality::txt) - mean_score(p, fake, Modality::txt);
    if (gap1 > gap0 && gap1 > 0.8) ++ok;
  }
  CHECK(ok >= 9);
}

TEST_CASE("discriminator checkpoint round-trips bit-exactly") {
  DiscParams p = init_disc(5, 6, 12);
  const std::string path = "/tmp/milgan_test_disc.ck";
  save_disc(p, path);
  const DiscParams q = load_disc(path);
  std::remove(path.c_str());
  CHECK(q.k == p.k);
  CHECK(q.maps == p.maps);
  CHECK(q.widths == p.widths);
  for (const auto& name : p.store.names()) CHECK(q.store.param(name) == p.store.param(name));
}
