#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "milgan/eval.hpp"
#include "milgan/rng.hpp"

using namespace milgan;

namespace {

Tensor random_matrix(std::int64_t rows, std::int64_t cols, std::uint64_t seed) {
  Rng rng(seed);
  return Tensor::uniform({rows, cols}, rng, -2.0, 2.0);
}

ModalSequence wrap(const Tensor& t) { return ModalSequence{t, t, Tensor(t.shape())}; }

}  // namespace

TEST_CASE("self-similarity of a nonzero matrix is one") {
  const Tensor a = random_matrix(3, 4, 1);
  CHECK(frob_cosine(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sum_sim({a}, {a}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("M identical nonzero sequences crossed give M squared") {
  const Tensor a = random_matrix(4, 3, 2);
  const std::vector<Tensor> side(5, a);
  CHECK(sum_sim(side, side) == doctest::Approx(25.0).epsilon(1e-12));
}

TEST_CASE("negated matrices contribute minus one") {
  const Tensor a = random_matrix(3, 3, 3);
  Tensor neg(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) neg.at(i) = -a.at(i);
  CHECK(frob_cosine(a, neg) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("sum_sim matches a long-double naive recomputation") {
  Rng rng(4);
  std::vector<Tensor> ref, gen;
  for (int i = 0; i < 6; ++i) ref.push_back(Tensor::uniform({3, 4}, rng, -2, 2));
  for (int i = 0; i < 5; ++i) gen.push_back(Tensor::uniform({3, 4}, rng, -2, 2));

  long double expect = 0.0L;
  for (const auto& a : ref) {
    for (const auto& b : gen) {
      long double ab = 0.0L, aa = 0.0L, bb = 0.0L;
      for (std::int64_t i = 0; i < a.size(); ++i) {
        ab += static_cast<long double>(a.at(i)) * b.at(i);
        aa += static_cast<long double>(a.at(i)) * a.at(i);
        bb += static_cast<long double>(b.at(i)) * b.at(i);
      }
      expect += ab / (sqrtl(aa) * sqrtl(bb));
    }
  }
  CHECK(std::fabs(sum_sim(ref, gen) - static_cast<double>(expect)) < 1e-9);
}

TEST_CASE("sum_sim is symmetric and scale-invariant") {
  Rng rng(5);
  std::vector<Tensor> a, b;
  for (int i = 0; i < 4; ++i) a.push_back(Tensor::uniform({2, 3}, rng, -1, 1));
  for (int i = 0; i < 3; ++i) b.push_back(Tensor::uniform({2, 3}, rng, -1, 1));
  CHECK(sum_sim(a, b) == doctest::Approx(sum_sim(b, a)).epsilon(1e-12));

  std::vector<Tensor> scaled = b;
  for (std::int64_t i = 0; i < scaled[1].size(); ++i) scaled[1].at(i) *= 37.5;
  CHECK(sum_sim(a, scaled) == doctest::Approx(sum_sim(a, b)).epsilon(1e-9));
}

TEST_CASE("zero-norm matrices contribute zero") {
  const Tensor zero({2, 2});
  const Tensor a = random_matrix(2, 2, 6);
  CHECK(frob_cosine(zero, a) == 0.0);
  CHECK(frob_cosine(a, zero) == 0.0);
  CHECK(sum_sim({zero, a}, {a}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("distinct nonzero sequences stay within bounds and the diagonal is M") {
  Rng rng(7);
  std::vector<Tensor> xs;
  for (int i = 0; i < 6; ++i) xs.push_back(Tensor::uniform({3, 2}, rng, -1, 1));
  const double total = sum_sim(xs, xs);
  CHECK(total <= 36.0 + 1e-9);
  CHECK(total >= -36.0 - 1e-9);
  double diag = 0.0;
  for (const auto& x : xs) diag += frob_cosine(x, x);
  CHECK(diag == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("shape mismatches are reported") {
  CHECK_THROWS_AS(frob_cosine(Tensor({2, 2}), Tensor({3, 2})), ShapeError);
}

TEST_CASE("eval report total equals the sum of its contributions") {
  Rng rng(8);
  std::vector<ModalSequence> ref, gen;
  for (int i = 0; i < 4; ++i) ref.push_back(wrap(Tensor::uniform({3, 3}, rng, -1, 1)));
  for (int i = 0; i < 3; ++i) gen.push_back(wrap(Tensor::uniform({3, 3}, rng, -1, 1)));
  const EvalReport report = make_eval_report(ref, gen, Modality::txt, nullptr, nullptr, {});
  REQUIRE(report.contributions.size() == 12);
  long double total = 0.0L;
  for (const auto& c : report.contributions) total += c.value;
  CHECK(std::fabs(report.total - static_cast<double>(total)) < 1e-9);
  CHECK(report.ref_count == 4);
  CHECK(report.gen_count == 3);
}

TEST_CASE("report audits catch structural violations") {
  Tensor good({2, 2});
  good.at(1, 0) = 1.0;
  ModalSequence ok{good, good, Tensor({2, 2})};

  Tensor bad_first({2, 2});
  bad_first.at(0, 0) = 0.5;  // nonzero first row
  ModalSequence bad{bad_first, bad_first, Tensor::matrix(2, 2, {9, 9, 9, 9})};  // mm inconsistent

  const std::vector<std::vector<int>> nodes{{0, 1, 1}};  // repeat violation
  const EvalReport report = make_eval_report({ok}, {bad}, Modality::txt, &nodes, nullptr, {});
  CHECK(report.nonzero_first_rows == 1);
  CHECK(report.mm_mismatches == 1);
  CHECK(report.repeat_violations == 1);
  CHECK(report.zero_norm_pairs == 0);

  const std::string json_text = report_to_json(report);
  CHECK(json_text.find("\"repeat_violations\": 1") != std::string::npos);
}

TEST_CASE("baseline_random starts where told and never repeats") {
  const SynthCorpus synth = synth_corpus(9, 4, 5, 3, 5, 9);
  const CandidateSet cand = make_candidates(synth.train);

  const auto single = baseline_random(cand, {3}, 1, 5);
  REQUIRE(single.size() == 1);
  CHECK(single[0].nodes == std::vector<int>{3});

  std::vector<int> starts(1000, 2);
  const auto many = baseline_random(cand, starts, 5, 6);
  for (const auto& sl : many) {
    CHECK(sl.nodes[0] == 2);
    std::set<int> seen(sl.nodes.begin(), sl.nodes.end());
    CHECK(seen.size() == sl.nodes.size());
  }
}

TEST_CASE("random baseline similarity sits near zero, far below self-similarity") {
  const SynthCorpus synth = synth_corpus(12, 6, 5, 4, 40, 10);
  const CandidateSet cand = make_candidates(synth.train);
  std::vector<ModalSequence> demos;
  for (const auto& sl : synth.train.storylines) {
    demos.push_back(to_modal_sequence(cand, sl.nodes, true));
  }
  std::vector<int> starts;
  for (int i = 0; i < 40; ++i) starts.push_back(i % cand.count());
  std::vector<ModalSequence> random_seqs;
  for (const auto& sl : baseline_random(cand, starts, 4, 11)) {
    random_seqs.push_back(to_modal_sequence(cand, sl.nodes, true));
  }
  const double self_sim = sum_sim(demos, demos, Modality::txt);
  const double rand_sim = sum_sim(demos, random_seqs, Modality::txt);
  CHECK(rand_sim < 0.5 * self_sim);                       // ordering transfers
  CHECK(std::fabs(rand_sim) < 0.5 * static_cast<double>(demos.size() * random_seqs.size()));
}

TEST_CASE("pg baseline with zero rate returns the pretrained parameters") {
  const SynthCorpus synth = synth_corpus(7, 4, 5, 3, 12, 12);
  TrainConfig cfg;
  cfg.t_len = 3;
  cfg.hidden = 4;
  cfg.pretrain_g_epochs = 10;
  cfg.rounds = 3;
  cfg.g_batch = 4;
  cfg.alpha = 0.0;
  cfg.seed = 4;

  const GeneratorParams pg = baseline_pg_similarity(synth.train, cfg);

  // the same pretraining path, no reinforcement
  EventCorpus local = synth.train;
  substitute_missing_image_vecs(local);
  std::vector<Storyline> windows;
  for (const auto& sl : local.storylines) {
    for (auto& w : slice_windows(sl, cfg.t_len)) windows.push_back(std::move(w));
  }
  const CandidateSet cand = make_candidates(local);
  GeneratorParams expect = init_generator(local.k, cfg.hidden, derive_seed(cfg.seed, {0x11}));
  mle_pretrain(expect, windows, cand, cfg.pretrain_g_epochs, cfg.pretrain_rate,
               derive_seed(cfg.seed, {0x12}));
  for (const auto& name : expect.store.names()) {
    CHECK(pg.store.param(name) == expect.store.param(name));
  }
}

TEST_CASE("an exact training replica earns similarity reward one") {
  // the reward inside the pg baseline is the best cosine against the demos;
  // replicating a demonstration window scores exactly 1
  const SynthCorpus synth = synth_corpus(7, 4, 5, 3, 12, 13);
  const CandidateSet cand = make_candidates(synth.train);
  const Tensor demo = to_modal_sequence(cand, synth.train.storylines[0].nodes, true).txt;
  CHECK(frob_cosine(demo, demo) == doctest::Approx(1.0).epsilon(1e-12));
}
