#include "milgan/embed_mm.hpp"

#include <algorithm>
#include <cmath>

#include "milgan/io.hpp"
#include "milgan/kernels.hpp"
#include "milgan/rng.hpp"

namespace milgan {

namespace {

// sigma . image -> factor-space diagonal
Tensor image_diag(const MMParams& p, const Tensor& image) {
  if (image.size() != p.d) {
    throw ShapeError("embed_mm: image dimension " + image.shape_str() + " != [" + std::to_string(p.d) + "]");
  }
  const Tensor& sigma = p.store.param("sigma");
  Tensor out({p.j});
  for (std::int64_t r = 0; r < p.j; ++r) {
    out.at(r) = kern::dot(sigma.data() + r * p.d, image.data(), static_cast<std::size_t>(p.d));
  }
  return out;
}

// Positions used for a context of length n, most recent first.
int available_positions(const MMParams& p, const std::vector<int>& context) {
  return std::min<int>(p.ctx_window, static_cast<int>(context.size()));
}

}  // namespace

Tensor MMParams::ctx_weights() const {
  return softmax(store.param("ctx_logits"));
}

MMParams init_mm_params(std::int64_t j, Tensor word_embed, std::int64_t d, std::uint64_t seed) {
  MMParams p;
  p.j = j;
  p.v = word_embed.rows();
  p.k = word_embed.cols();
  p.d = d;
  p.word_embed = std::move(word_embed);

  Rng rng(derive_seed(seed, {0x33E4}));
  p.store.add("U", Tensor::uniform({p.j, p.v}, rng, -0.1, 0.1));
  p.store.add("V", Tensor::uniform({p.j, p.k}, rng, -0.1, 0.1));
  p.store.add("ctx_logits", Tensor({p.ctx_window}));
  p.store.add("sigma", Tensor::uniform({p.j, p.d}, rng, -0.1, 0.1));
  return p;
}

Tensor cond_word_matrix(const MMParams& p, const Tensor& image) {
  const Tensor diag = image_diag(p, image);
  const Tensor& u = p.store.param("U");
  const Tensor& v = p.store.param("V");
  // U^T diag(s) V without materializing the diagonal matrix.
  Tensor out({p.v, p.k});
  for (std::int64_t w = 0; w < p.v; ++w) {
    for (std::int64_t f = 0; f < p.j; ++f) {
      const double coeff = u.at(f, w) * diag.at(f);
      kern::axpy(coeff, v.data() + f * p.k, out.data() + w * p.k, static_cast<std::size_t>(p.k));
    }
  }
  out.check_finite("cond_word_matrix");
  return out;
}

Tensor context_vector(const MMParams& p, const std::vector<int>& context) {
  if (context.empty()) throw DataError("context_vector: empty context");
  const int avail = available_positions(p, context);
  const Tensor weights = p.ctx_weights();
  double total = 0.0;
  for (int pos = 0; pos < avail; ++pos) total += weights.at(pos);

  Tensor out({p.k});
  for (int pos = 0; pos < avail; ++pos) {
    const int word = context[context.size() - 1 - static_cast<std::size_t>(pos)];
    if (word < 0 || word >= p.v) throw DataError("context_vector: word id out of range");
    kern::axpy(weights.at(pos) / total, p.word_embed.data() + word * p.k, out.data(),
               static_cast<std::size_t>(p.k));
  }
  return out;
}

Tensor predict_next(const MMParams& p, const std::vector<int>& context, const Tensor& image) {
  const Tensor c = context_vector(p, context);
  const Tensor& v = p.store.param("V");
  const Tensor& u = p.store.param("U");

  Tensor vc({p.j});
  for (std::int64_t f = 0; f < p.j; ++f) {
    vc.at(f) = kern::dot(v.data() + f * p.k, c.data(), static_cast<std::size_t>(p.k));
  }
  const Tensor diag = image_diag(p, image);
  const Tensor psi = mul(vc, diag);

  Tensor logits({p.v});
  for (std::int64_t f = 0; f < p.j; ++f) {
    kern::axpy(psi.at(f), u.data() + f * p.v, logits.data(), static_cast<std::size_t>(p.v));
  }
  return softmax(logits);
}

namespace {

// Forward + backward for one (prefix, target) pair; accumulates parameter
// gradients and returns the pair's NLL.
double pair_loss_backward(MMParams& p, const std::vector<int>& context, int target,
                          const Tensor& image) {
  const Tensor& v = p.store.param("V");
  const Tensor& u = p.store.param("U");

  // forward, keeping intermediates
  const int avail = available_positions(p, context);
  const Tensor weights = softmax(p.store.param("ctx_logits"));
  double wsum = 0.0;
  for (int pos = 0; pos < avail; ++pos) wsum += weights.at(pos);

  Tensor c({p.k});
  for (int pos = 0; pos < avail; ++pos) {
    const int word = context[context.size() - 1 - static_cast<std::size_t>(pos)];
    kern::axpy(weights.at(pos) / wsum, p.word_embed.data() + word * p.k, c.data(),
               static_cast<std::size_t>(p.k));
  }

  Tensor vc({p.j});
  for (std::int64_t f = 0; f < p.j; ++f) {
    vc.at(f) = kern::dot(v.data() + f * p.k, c.data(), static_cast<std::size_t>(p.k));
  }
  const Tensor diag = image_diag(p, image);
  const Tensor psi = mul(vc, diag);

  Tensor logits({p.v});
  for (std::int64_t f = 0; f < p.j; ++f) {
    kern::axpy(psi.at(f), u.data() + f * p.v, logits.data(), static_cast<std::size_t>(p.v));
  }
  const Tensor probs = softmax(logits);
  const double loss = -std::log(std::max(probs.at(target), 1e-300));

  // backward
  Tensor dlogits(probs);  // probs - onehot
  dlogits.at(target) -= 1.0;

  Tensor& gu = p.store.grad("U");
  Tensor& gv = p.store.grad("V");
  Tensor& gsigma = p.store.grad("sigma");
  Tensor& gctx = p.store.grad("ctx_logits");

  Tensor dpsi({p.j});
  for (std::int64_t f = 0; f < p.j; ++f) {
    dpsi.at(f) = kern::dot(u.data() + f * p.v, dlogits.data(), static_cast<std::size_t>(p.v));
    kern::axpy(psi.at(f), dlogits.data(), gu.data() + f * p.v, static_cast<std::size_t>(p.v));
  }

  Tensor dvc = mul(dpsi, diag);
  Tensor ddiag = mul(dpsi, vc);

  Tensor dc({p.k});
  for (std::int64_t f = 0; f < p.j; ++f) {
    kern::axpy(dvc.at(f), c.data(), gv.data() + f * p.k, static_cast<std::size_t>(p.k));
    kern::axpy(dvc.at(f), v.data() + f * p.k, dc.data(), static_cast<std::size_t>(p.k));
    kern::axpy(ddiag.at(f), image.data(), gsigma.data() + f * p.d, static_cast<std::size_t>(p.d));
  }

  // context weights: renormalized-softmax chain (word_embed is frozen)
  Tensor dweight_renorm({p.ctx_window});
  for (int pos = 0; pos < avail; ++pos) {
    const int word = context[context.size() - 1 - static_cast<std::size_t>(pos)];
    dweight_renorm.at(pos) =
        kern::dot(p.word_embed.data() + word * p.k, dc.data(), static_cast<std::size_t>(p.k));
  }
  double inner_renorm = 0.0;
  for (int pos = 0; pos < avail; ++pos) {
    inner_renorm += dweight_renorm.at(pos) * (weights.at(pos) / wsum);
  }
  Tensor dweights({p.ctx_window});
  for (int pos = 0; pos < avail; ++pos) {
    dweights.at(pos) = (dweight_renorm.at(pos) - inner_renorm) / wsum;
  }
  softmax_backward(weights, dweights, nullptr, gctx);

  return loss;
}

}  // namespace

double mm_loss_and_grads(MMParams& p, const std::vector<MMCorpusItem>& items) {
  p.store.zero_grads();
  double total = 0.0;
  for (const auto& item : items) {
    for (std::size_t n = 1; n < item.description.size(); ++n) {
      std::vector<int> prefix(item.description.begin(),
                              item.description.begin() + static_cast<std::ptrdiff_t>(n));
      total += pair_loss_backward(p, prefix, item.description[n], item.image_feat);
    }
  }
  return total;
}

double mm_nll(const MMParams& p, const std::vector<MMCorpusItem>& items, bool zero_image) {
  double total = 0.0;
  std::int64_t pairs = 0;
  const Tensor zero({p.d});
  for (const auto& item : items) {
    const Tensor& image = zero_image ? zero : item.image_feat;
    for (std::size_t n = 1; n < item.description.size(); ++n) {
      std::vector<int> prefix(item.description.begin(), item.description.begin() + static_cast<std::ptrdiff_t>(n));
      const Tensor probs = predict_next(p, prefix, image);
      total += -std::log(std::max(probs.at(item.description[n]), 1e-300));
      ++pairs;
    }
  }
  return pairs > 0 ? total / static_cast<double>(pairs) : 0.0;
}

MMParams train_mm(std::vector<MMCorpusItem> items, MMParams p, int epochs, double rate,
                  std::uint64_t seed, MMTrainLog* log) {
  for (const auto& item : items) {
    if (item.description.size() < 2) throw DataError("train_mm: description shorter than 2 words");
    for (int w : item.description) {
      if (w < 0 || w >= p.v) throw DataError("train_mm: word id out of vocabulary");
    }
    if (item.image_feat.size() != p.d) {
      throw ShapeError("train_mm: image feature " + item.image_feat.shape_str() + " != [" +
                       std::to_string(p.d) + "]");
    }
  }

  // (item, next-position) pairs
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (std::size_t n = 1; n < items[i].description.size(); ++n) {
      pairs.emplace_back(static_cast<int>(i), static_cast<int>(n));
    }
  }

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng rng(derive_seed(seed, {0xE60C, static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(pairs);
    double epoch_loss = 0.0;
    for (const auto& [item_idx, n] : pairs) {
      const MMCorpusItem& item = items[static_cast<std::size_t>(item_idx)];
      std::vector<int> prefix(item.description.begin(), item.description.begin() + n);
      p.store.zero_grads();
      const double loss =
          pair_loss_backward(p, prefix, item.description[static_cast<std::size_t>(n)], item.image_feat);
      if (!std::isfinite(loss)) {
        throw NumericalFault("train_mm: non-finite loss at epoch " + std::to_string(epoch));
      }
      epoch_loss += loss;
      sgd_step(p.store, rate, Direction::descend);
    }
    if (log) {
      log->epoch_nll.push_back(pairs.empty() ? 0.0 : epoch_loss / static_cast<double>(pairs.size()));
    }
  }
  return p;
}

Tensor embed_image(const MMParams& p, const Tensor& image) {
  const Tensor diag = image_diag(p, image);
  const Tensor& v = p.store.param("V");
  Tensor out({p.k});
  for (std::int64_t f = 0; f < p.j; ++f) {
    kern::axpy(diag.at(f) / static_cast<double>(p.j), v.data() + f * p.k, out.data(),
               static_cast<std::size_t>(p.k));
  }
  out.check_finite("embed_image");
  return out;
}

void save_mm(const MMParams& p, const std::string& path) {
  Checkpoint ck;
  ck.kind = "mm";
  ck.meta = {{"j", p.j}, {"v", p.v}, {"k", p.k}, {"d", p.d}, {"ctx_window", p.ctx_window}};
  for (const auto& [name, t] : p.store.all_params()) ck.tensors.emplace(name, t);
  ck.tensors.emplace("word_embed", p.word_embed);
  save_checkpoint(ck, path);
}

MMParams load_mm(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.kind != "mm") throw DataError("expected an mm checkpoint: " + path);
  MMParams p;
  p.j = ck.meta.at("j");
  p.v = ck.meta.at("v");
  p.k = ck.meta.at("k");
  p.d = ck.meta.at("d");
  p.ctx_window = static_cast<int>(ck.meta.at("ctx_window"));
  p.word_embed = ck.tensors.at("word_embed");
  for (const char* name : {"U", "V", "ctx_logits", "sigma"}) {
    p.store.add(name, ck.tensors.at(name));
  }
  return p;
}

std::vector<MMCorpusItem> mm_items_from_corpus(const EventCorpus& corpus) {
  std::vector<MMCorpusItem> items;
  for (const auto& sl : corpus.storylines) {
    for (std::size_t t = 1; t < sl.nodes.size(); ++t) {
      MMCorpusItem item;
      item.description = {sl.nodes[t - 1], sl.nodes[t]};
      item.image_feat = corpus.node(sl.nodes[t - 1]).image_feat;
      items.push_back(std::move(item));
    }
  }
  return items;
}

Tensor corpus_word_table(const EventCorpus& corpus) {
  const auto n = static_cast<std::int64_t>(corpus.vocab.size());
  Tensor table({n, corpus.k});
  for (std::int64_t i = 0; i < n; ++i) {
    const Tensor& t = corpus.vocab[static_cast<std::size_t>(i)].text_vec;
    for (std::int64_t c = 0; c < corpus.k; ++c) table.at(i, c) = t.at(c);
  }
  return table;
}

void project_corpus_images(const MMParams& p, EventCorpus& corpus) {
  if (corpus.d != p.d) {
    throw ShapeError("project_corpus_images: corpus d " + std::to_string(corpus.d) +
                     " != model d " + std::to_string(p.d));
  }
  for (auto& node : corpus.vocab) {
    node.image_vec = embed_image(p, node.image_feat);
  }
}

}  // namespace milgan
