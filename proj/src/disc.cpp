#include "milgan/disc.hpp"

#include <algorithm>
#include <cmath>

#include "milgan/io.hpp"
#include "milgan/kernels.hpp"
#include "milgan/rng.hpp"

namespace milgan {

namespace {

constexpr double kLogitClamp = 30.0;

double softplus(double x) {
  // log(1 + e^x), computed in the non-overflowing branch
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

struct ScoreCache {
  ConvPool pool;
  double z = 0.0;       // clamped head logit
  bool clamped = false;
  double s = 0.5;
};

ScoreCache score_forward(const DiscParams& p, const Tensor& seq, Modality m) {
  if (seq.rank() != 2 || seq.cols() != p.k) {
    throw ShapeError("disc score: sequence " + seq.shape_str() + " does not match k=" + std::to_string(p.k));
  }
  if (seq.rows() < p.max_width()) {
    throw ShapeError("disc score: sequence length " + std::to_string(seq.rows()) +
                     " below max filter width " + std::to_string(p.max_width()));
  }
  std::vector<Tensor> banks;
  banks.reserve(p.widths.size());
  for (int w : p.widths) banks.push_back(p.store.param(p.param_name(m, "conv" + std::to_string(w))));

  ScoreCache cache;
  cache.pool = conv1d_maxpool(seq, banks);
  const Tensor& head_w = p.store.param(p.param_name(m, "head_w"));
  const double raw_z =
      kern::dot(head_w.data(), cache.pool.features.data(), static_cast<std::size_t>(head_w.size())) +
      p.store.param(p.param_name(m, "head_b")).at(0);
  cache.z = std::clamp(raw_z, -kLogitClamp, kLogitClamp);
  cache.clamped = raw_z != cache.z;
  cache.s = sigmoid(cache.z);
  return cache;
}

}  // namespace

int DiscParams::max_width() const {
  int w = 0;
  for (int x : widths) w = std::max(w, x);
  return w;
}

DiscParams init_disc(std::int64_t k, int maps, std::uint64_t seed) {
  DiscParams p;
  p.k = k;
  p.maps = maps;
  Rng rng(derive_seed(seed, {0xD15C}));
  for (Modality m : kModalities) {
    for (int w : p.widths) {
      p.store.add(p.param_name(m, "conv" + std::to_string(w)),
                  Tensor::uniform({maps, w, k}, rng, -0.1, 0.1));
    }
    p.store.add(p.param_name(m, "head_w"), Tensor::uniform({p.feature_count()}, rng, -0.1, 0.1));
    p.store.add(p.param_name(m, "head_b"), Tensor({1}));
  }
  return p;
}

void save_disc(const DiscParams& p, const std::string& path) {
  Checkpoint ck;
  ck.kind = "discriminator";
  ck.meta = {{"k", p.k}, {"maps", p.maps}, {"n_widths", static_cast<std::int64_t>(p.widths.size())}};
  for (std::size_t i = 0; i < p.widths.size(); ++i) {
    ck.meta["width" + std::to_string(i)] = p.widths[i];
  }
  for (const auto& [name, t] : p.store.all_params()) ck.tensors.emplace(name, t);
  save_checkpoint(ck, path);
}

DiscParams load_disc(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.kind != "discriminator") throw DataError("expected a discriminator checkpoint: " + path);
  DiscParams p;
  p.k = ck.meta.at("k");
  p.maps = static_cast<int>(ck.meta.at("maps"));
  p.widths.clear();
  const auto n_widths = ck.meta.at("n_widths");
  for (std::int64_t i = 0; i < n_widths; ++i) {
    p.widths.push_back(static_cast<int>(ck.meta.at("width" + std::to_string(i))));
  }
  for (const auto& [name, t] : ck.tensors) p.store.add(name, t);
  return p;
}

namespace {

// Accumulate dz through the head and conv banks into the store gradients.
void backward_from_cache(DiscParams& p, const Tensor& seq, Modality m, const ScoreCache& cache,
                         double dz) {
  if (dz == 0.0 || cache.clamped) return;
  Tensor& g_head_w = p.store.grad(p.param_name(m, "head_w"));
  Tensor& g_head_b = p.store.grad(p.param_name(m, "head_b"));
  const Tensor& head_w = p.store.param(p.param_name(m, "head_w"));
  kern::axpy(dz, cache.pool.features.data(), g_head_w.data(),
             static_cast<std::size_t>(g_head_w.size()));
  g_head_b.at(0) += dz;

  Tensor dfeatures({cache.pool.features.size()});
  kern::scale(dz, head_w.data(), dfeatures.data(), static_cast<std::size_t>(head_w.size()));

  std::vector<Tensor> banks;
  std::vector<Tensor*> grad_banks;
  for (int w : p.widths) {
    banks.push_back(p.store.param(p.param_name(m, "conv" + std::to_string(w))));
    grad_banks.push_back(&p.store.grad(p.param_name(m, "conv" + std::to_string(w))));
  }
  conv1d_maxpool_backward(seq, banks, cache.pool, dfeatures, nullptr, grad_banks);
}

}  // namespace

double score(const DiscParams& p, const Tensor& channel_seq, Modality m) {
  return score_forward(p, channel_seq, m).s;
}

double score_with_grad(DiscParams& p, const Tensor& channel_seq, Modality m, double dz) {
  const ScoreCache cache = score_forward(p, channel_seq, m);
  backward_from_cache(p, channel_seq, m, cache, dz);
  return cache.s;
}

void pretrain_xent(DiscParams& p, const std::vector<Tensor>& real, const std::vector<Tensor>& fake,
                   Modality m, int epochs, double rate, std::uint64_t seed, DiscTrainLog* log) {
  (void)seed;  // full-batch training is already deterministic
  if (real.empty() || fake.empty()) throw DataError("pretrain_xent: empty batch");
  const double inv_r = 1.0 / static_cast<double>(real.size());
  const double inv_f = 1.0 / static_cast<double>(fake.size());

  for (int epoch = 0; epoch < epochs; ++epoch) {
    p.store.zero_grads();
    double loss = 0.0;
    for (const Tensor& seq : real) {
      const ScoreCache c = score_forward(p, seq, m);
      loss += softplus(-c.z) * inv_r;
      backward_from_cache(p, seq, m, c, (c.s - 1.0) * inv_r);
    }
    for (const Tensor& seq : fake) {
      const ScoreCache c = score_forward(p, seq, m);
      loss += softplus(c.z) * inv_f;
      backward_from_cache(p, seq, m, c, c.s * inv_f);
    }
    if (!std::isfinite(loss)) {
      throw NumericalFault("pretrain_xent: non-finite loss at epoch " + std::to_string(epoch));
    }
    sgd_step(p.store, rate, Direction::descend);
    if (log) log->epoch_loss.push_back(loss);
  }
}

void pretrain_xent(DiscParams& p, const std::vector<ModalSequence>& real,
                   const std::vector<ModalSequence>& fake, int epochs, double rate,
                   std::uint64_t seed, DiscTrainLog* log) {
  for (Modality m : kModalities) {
    std::vector<Tensor> rb;
    std::vector<Tensor> fb;
    for (const auto& s : real) rb.push_back(s.channel(m));
    for (const auto& s : fake) fb.push_back(s.channel(m));
    pretrain_xent(p, rb, fb, m, epochs, rate, seed, m == Modality::txt ? log : nullptr);
  }
}

double train_step_gap(DiscParams& p, const std::vector<Tensor>& real,
                      const std::vector<Tensor>& fake, Modality m, double rate) {
  if (real.empty() || fake.empty()) throw DataError("train_step_gap: empty batch");
  const double inv_r = 1.0 / static_cast<double>(real.size());
  const double inv_f = 1.0 / static_cast<double>(fake.size());

  p.store.zero_grads();
  double objective = 0.0;
  for (const Tensor& seq : real) {
    // d/dz of -mean(s) is -s(1-s)/N
    const ScoreCache c = score_forward(p, seq, m);
    objective += -c.s * inv_r;
    backward_from_cache(p, seq, m, c, -c.s * (1.0 - c.s) * inv_r);
  }
  for (const Tensor& seq : fake) {
    const ScoreCache c = score_forward(p, seq, m);
    objective += -(1.0 - c.s) * inv_f;
    backward_from_cache(p, seq, m, c, c.s * (1.0 - c.s) * inv_f);
  }
  if (!std::isfinite(objective)) throw NumericalFault("train_step_gap: non-finite objective");
  sgd_step(p.store, rate, Direction::descend);
  return objective;
}

double mean_score(const DiscParams& p, const std::vector<Tensor>& batch, Modality m) {
  double total = 0.0;
  for (const Tensor& seq : batch) total += score(p, seq, m);
  return batch.empty() ? 0.0 : total / static_cast<double>(batch.size());
}

}  // namespace milgan
