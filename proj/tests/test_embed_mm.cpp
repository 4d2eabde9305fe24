#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "milgan/embed_mm.hpp"
#include "milgan/rng.hpp"

using namespace milgan;

namespace {

MMParams small_params(std::uint64_t seed, std::int64_t j = 3, std::int64_t v = 5, std::int64_t k = 4,
                      std::int64_t d = 2) {
  Rng rng(seed);
  return init_mm_params(j, Tensor::uniform({v, k}, rng, -1.0, 1.0), d, seed);
}

// Two image classes with a class-determined next word. START=0; class c's
// items read [0, c+1] with image near the class axis.
std::vector<MMCorpusItem> class_corpus(int items_per_class, double noise, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<MMCorpusItem> items;
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < items_per_class; ++i) {
      MMCorpusItem item;
      item.description = {0, c + 1};
      item.image_feat = Tensor::vec({c == 0 ? 1.0 : 0.0, c == 0 ? 0.0 : 1.0});
      item.image_feat.at(0) += noise * rng.gaussian();
      item.image_feat.at(1) += noise * rng.gaussian();
      items.push_back(std::move(item));
    }
  }
  return items;
}

}  // namespace

TEST_CASE("cond_word_matrix with identity diagonal reduces to U^T V") {
  MMParams p = small_params(1);
  // sigma . image == all-ones
  Tensor& sigma = p.store.param("sigma");
  sigma.fill(0.0);
  for (std::int64_t f = 0; f < p.j; ++f) sigma.at(f, 0) = 1.0;
  const Tensor image = Tensor::vec({1.0, 0.0});

  const Tensor got = cond_word_matrix(p, image);
  const Tensor& u = p.store.param("U");
  const Tensor& v = p.store.param("V");
  for (std::int64_t w = 0; w < p.v; ++w) {
    for (std::int64_t c = 0; c < p.k; ++c) {
      double expect = 0.0;
      for (std::int64_t f = 0; f < p.j; ++f) expect += u.at(f, w) * v.at(f, c);
      CHECK(got.at(w, c) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("cond_word_matrix annihilates a zero image") {
  MMParams p = small_params(2);
  const Tensor got = cond_word_matrix(p, Tensor({2}));
  for (std::int64_t i = 0; i < got.size(); ++i) CHECK(got.at(i) == 0.0);
}

TEST_CASE("cond_word_matrix equals the naive triple loop") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    MMParams p = small_params(seed);
    Rng rng(seed + 100);
    const Tensor image = Tensor::uniform({p.d}, rng, -2.0, 2.0);
    const Tensor got = cond_word_matrix(p, image);

    const Tensor& u = p.store.param("U");
    const Tensor& v = p.store.param("V");
    const Tensor& sigma = p.store.param("sigma");
    for (std::int64_t w = 0; w < p.v; ++w) {
      for (std::int64_t c = 0; c < p.k; ++c) {
        double expect = 0.0;
        for (std::int64_t f = 0; f < p.j; ++f) {
          double diag = 0.0;
          for (std::int64_t x = 0; x < p.d; ++x) diag += sigma.at(f, x) * image.at(x);
          expect += u.at(f, w) * diag * v.at(f, c);
        }
        CHECK(got.at(w, c) == doctest::Approx(expect).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("cond_word_matrix rejects a wrong image dimension") {
  MMParams p = small_params(3);
  CHECK_THROWS_AS(cond_word_matrix(p, Tensor({5})), ShapeError);
}

TEST_CASE("context_vector degenerate and uniform cases") {
  MMParams p = small_params(4);
  // single word: that word's embedding row
  const Tensor c1 = context_vector(p, {2});
  for (std::int64_t c = 0; c < p.k; ++c) CHECK(c1.at(c) == doctest::Approx(p.word_embed.at(2, c)));

  // two identical words: the same row regardless of the weights
  const Tensor c2 = context_vector(p, {3, 3});
  for (std::int64_t c = 0; c < p.k; ++c) {
    CHECK(c2.at(c) == doctest::Approx(p.word_embed.at(3, c)).epsilon(1e-12));
  }

  // zero logits -> uniform weights -> plain average over two positions
  const Tensor c3 = context_vector(p, {0, 1});
  for (std::int64_t c = 0; c < p.k; ++c) {
    CHECK(c3.at(c) ==
          doctest::Approx(0.5 * (p.word_embed.at(0, c) + p.word_embed.at(1, c))).epsilon(1e-12));
  }

  CHECK_THROWS_AS(context_vector(p, {}), DataError);
}

TEST_CASE("ctx_weights stay on the simplex") {
  MMParams p = small_params(5);
  Rng rng(55);
  p.store.param("ctx_logits") = Tensor::uniform({p.ctx_window}, rng, -3.0, 3.0);
  const Tensor w = p.ctx_weights();
  double total = 0.0;
  for (std::int64_t i = 0; i < w.size(); ++i) {
    CHECK(w.at(i) > 0.0);
    total += w.at(i);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("predict_next is a probability vector; zero image gives uniform") {
  MMParams p = small_params(6);
  Rng rng(66);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor image = Tensor::uniform({p.d}, rng, -2.0, 2.0);
    const Tensor probs = predict_next(p, {0, 2, 4, 1}, image);
    double total = 0.0;
    for (std::int64_t i = 0; i < probs.size(); ++i) {
      CHECK(probs.at(i) >= 0.0);
      total += probs.at(i);
    }
    CHECK(std::fabs(total - 1.0) < 1e-12);
  }
  const Tensor uniform = predict_next(p, {1, 2}, Tensor({p.d}));
  for (std::int64_t i = 0; i < uniform.size(); ++i) {
    CHECK(uniform.at(i) == doctest::Approx(1.0 / static_cast<double>(p.v)).epsilon(1e-12));
  }
}

TEST_CASE("predict_next logits agree with the conditioned word matrix") {
  MMParams p = small_params(7);
  Rng rng(77);
  const Tensor image = Tensor::uniform({p.d}, rng, -1.0, 1.0);
  const std::vector<int> context{1, 3};
  const Tensor probs = predict_next(p, context, image);

  // logits via Psi(I) . C reproduce the same distribution
  const Tensor psi_matrix = cond_word_matrix(p, image);
  const Tensor c = context_vector(p, context);
  Tensor logits({p.v});
  for (std::int64_t w = 0; w < p.v; ++w) {
    double total = 0.0;
    for (std::int64_t x = 0; x < p.k; ++x) total += psi_matrix.at(w, x) * c.at(x);
    logits.at(w) = total;
  }
  const Tensor expect = softmax(logits);
  for (std::int64_t w = 0; w < p.v; ++w) {
    CHECK(probs.at(w) == doctest::Approx(expect.at(w)).epsilon(1e-9));
  }
}

TEST_CASE("train_mm with zero epochs leaves parameters unchanged") {
  MMParams p = small_params(8);
  const auto items = class_corpus(4, 0.05, 8);
  const Tensor u_before = p.store.param("U");
  MMParams after = train_mm(items, std::move(p), 0, 0.1, 8);
  CHECK(after.store.param("U") == u_before);
}

TEST_CASE("image conditioning beats the image-blind model by at least 20%") {
  const auto items = class_corpus(30, 0.05, 42);
  MMParams p = small_params(42, 8, 6, 4, 2);
  MMTrainLog log;
  p = train_mm(items, std::move(p), 80, 0.5, 42, &log);
  REQUIRE(log.epoch_nll.size() == 80);
  CHECK(log.epoch_nll.back() <= log.epoch_nll.front());

  const double conditioned = mm_nll(p, items);
  const double blind = mm_nll(p, items, /*zero_image=*/true);
  CHECK(conditioned < 0.8 * blind);

  // held-out items with fresh image noise: class determines the argmax
  const auto held_out = class_corpus(50, 0.05, 777);
  int hits = 0;
  for (const auto& item : held_out) {
    const Tensor probs = predict_next(p, {item.description[0]}, item.image_feat);
    int best = 0;
    for (std::int64_t w = 1; w < probs.size(); ++w) {
      if (probs.at(w) > probs.at(best)) best = static_cast<int>(w);
    }
    if (best == item.description[1]) ++hits;
  }
  CHECK(hits >= 95);  // of 100
}

TEST_CASE("train_mm is seed-deterministic") {
  const auto items = class_corpus(10, 0.1, 5);
  MMParams a = train_mm(items, small_params(9), 10, 0.2, 123);
  MMParams b = train_mm(items, small_params(9), 10, 0.2, 123);
  for (const auto& name : a.store.names()) {
    CHECK(a.store.param(name) == b.store.param(name));
  }
}

TEST_CASE("training gradient passes finite differences on a 2-item corpus") {
  std::vector<MMCorpusItem> items;
  {
    Rng rng(31);
    for (int i = 0; i < 2; ++i) {
      MMCorpusItem item;
      item.description = {i, 3 - i, 4};
      item.image_feat = Tensor::uniform({2}, rng, -1.0, 1.0);
      items.push_back(std::move(item));
    }
  }
  MMParams p = small_params(31);
  auto loss = [&]() { return mm_loss_and_grads(p, items); };
  CHECK(grad_check(loss, p.store, 1e-5) < 1e-4);
}

TEST_CASE("embed_image is linear and zero at zero") {
  MMParams p = small_params(10);
  const Tensor zero = embed_image(p, Tensor({p.d}));
  for (std::int64_t i = 0; i < zero.size(); ++i) CHECK(zero.at(i) == 0.0);

  Rng rng(11);
  const Tensor image = Tensor::uniform({p.d}, rng, -1.0, 1.0);
  const Tensor e1 = embed_image(p, image);
  Tensor scaled(image);
  for (std::int64_t i = 0; i < scaled.size(); ++i) scaled.at(i) *= 2.5;
  const Tensor e2 = embed_image(p, scaled);
  for (std::int64_t i = 0; i < e1.size(); ++i) {
    CHECK(e2.at(i) == doctest::Approx(2.5 * e1.at(i)).epsilon(1e-9));
  }
}

TEST_CASE("trained embeddings separate the planted classes") {
  const auto items = class_corpus(30, 0.05, 13);
  MMParams p = train_mm(items, small_params(13, 8, 6, 4, 2), 80, 0.5, 13);

  auto cosine = [](const Tensor& a, const Tensor& b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
      ab += a.at(i) * b.at(i);
      aa += a.at(i) * a.at(i);
      bb += b.at(i) * b.at(i);
    }
    return ab / std::sqrt(aa * bb);
  };
  const auto fresh = class_corpus(10, 0.05, 555);
  std::vector<Tensor> class_a, class_b;
  for (const auto& item : fresh) {
    (item.description[1] == 1 ? class_a : class_b).push_back(embed_image(p, item.image_feat));
  }
  double within = 0.0, across = 0.0;
  int nw = 0, na = 0;
  for (std::size_t i = 0; i < class_a.size(); ++i) {
    for (std::size_t j = i + 1; j < class_a.size(); ++j) {
      within += cosine(class_a[i], class_a[j]);
      ++nw;
    }
    for (const auto& b : class_b) {
      across += cosine(class_a[i], b);
      ++na;
    }
  }
  CHECK(within / nw > across / na);
}

TEST_CASE("mm checkpoint round-trips bit-exactly") {
  MMParams p = train_mm(class_corpus(5, 0.1, 3), small_params(14), 5, 0.2, 3);
  const std::string path = "/tmp/milgan_test_mm.ck";
  save_mm(p, path);
  const MMParams q = load_mm(path);
  std::remove(path.c_str());
  CHECK(q.j == p.j);
  CHECK(q.v == p.v);
  CHECK(q.k == p.k);
  CHECK(q.d == p.d);
  CHECK(q.word_embed == p.word_embed);
  for (const auto& name : p.store.names()) CHECK(q.store.param(name) == p.store.param(name));
}

TEST_CASE("mm items derive from storyline transitions") {
  const SynthCorpus synth = synth_corpus(6, 4, 5, 3, 4, 17);
  const auto items = mm_items_from_corpus(synth.train);
  CHECK(items.size() == synth.train.storylines.size() * 2);  // T=3 gives 2 transitions
  for (const auto& item : items) {
    CHECK(item.description.size() == 2);
    CHECK(item.image_feat.size() == synth.train.d);
  }
}

TEST_CASE("project_corpus_images populates every image_vec") {
  SynthCorpus synth = synth_corpus(6, 4, 5, 3, 4, 18);
  for (auto& n : synth.train.vocab) n.image_vec.reset();
  MMParams p = init_mm_params(4, corpus_word_table(synth.train), synth.train.d, 9);
  project_corpus_images(p, synth.train);
  for (const auto& n : synth.train.vocab) {
    REQUIRE(n.image_vec.has_value());
    CHECK(n.image_vec->size() == synth.train.k);
  }
}
