#include "milgan/policy.hpp"

#include <algorithm>
#include <cmath>

#include "milgan/io.hpp"
#include "milgan/kernels.hpp"
#include "milgan/rng.hpp"

namespace milgan {

namespace {

// Stacked gate layout in the 4h pre-activation vector: [input, forget,
// candidate, output], each of length h.
struct CellRefs {
  const Tensor* wx;   // [4h, k]
  const Tensor* wh;   // [4h, h]
  const Tensor* b;    // [4h]
  const Tensor* proj;    // [k, h]
  const Tensor* proj_b;  // [k]
};

CellRefs cell_refs(const GeneratorParams& g, Modality m) {
  return CellRefs{&g.store.param(g.param_name(m, "Wx")), &g.store.param(g.param_name(m, "Wh")),
                  &g.store.param(g.param_name(m, "b")), &g.store.param(g.param_name(m, "P")),
                  &g.store.param(g.param_name(m, "pb"))};
}

struct CellGrads {
  Tensor* wx;
  Tensor* wh;
  Tensor* b;
  Tensor* proj;
  Tensor* proj_b;
};

CellGrads cell_grads(GeneratorParams& g, Modality m) {
  return CellGrads{&g.store.grad(g.param_name(m, "Wx")), &g.store.grad(g.param_name(m, "Wh")),
                   &g.store.grad(g.param_name(m, "b")), &g.store.grad(g.param_name(m, "P")),
                   &g.store.grad(g.param_name(m, "pb"))};
}

struct StepCache {
  Tensor x;        // [k]
  Tensor h_prev;   // [h]
  Tensor c_prev;   // [h]
  Tensor gi, gf, gg, go;  // [h]
  Tensor c, tanh_c, h;    // [h]
};

StepCache lstm_forward(const CellRefs& r, std::int64_t h, Tensor x, const Tensor& h_prev,
                       const Tensor& c_prev) {
  const std::int64_t k = x.size();
  Tensor z({4 * h});
  for (std::int64_t row = 0; row < 4 * h; ++row) {
    z.at(row) = kern::dot(r.wx->data() + row * k, x.data(), static_cast<std::size_t>(k)) +
                kern::dot(r.wh->data() + row * h, h_prev.data(), static_cast<std::size_t>(h)) +
                r.b->at(row);
  }
  StepCache cache;
  cache.x = std::move(x);
  cache.h_prev = h_prev;
  cache.c_prev = c_prev;
  cache.gi = Tensor({h});
  cache.gf = Tensor({h});
  cache.gg = Tensor({h});
  cache.go = Tensor({h});
  cache.c = Tensor({h});
  cache.tanh_c = Tensor({h});
  cache.h = Tensor({h});
  for (std::int64_t i = 0; i < h; ++i) {
    cache.gi.at(i) = sigmoid(z.at(i));
    cache.gf.at(i) = sigmoid(z.at(h + i));
    cache.gg.at(i) = std::tanh(z.at(2 * h + i));
    cache.go.at(i) = sigmoid(z.at(3 * h + i));
    cache.c.at(i) = cache.gf.at(i) * c_prev.at(i) + cache.gi.at(i) * cache.gg.at(i);
    cache.tanh_c.at(i) = std::tanh(cache.c.at(i));
    cache.h.at(i) = cache.go.at(i) * cache.tanh_c.at(i);
  }
  return cache;
}

// dh/dc are gradients flowing into this step's outputs; dh_prev/dc_prev are
// overwritten with the gradients for the previous step.
void lstm_backward(const CellRefs& r, const CellGrads& grads, std::int64_t h,
                   const StepCache& cache, const Tensor& dh, const Tensor& dc,
                   Tensor& dh_prev, Tensor& dc_prev) {
  const std::int64_t k = cache.x.size();
  Tensor dz({4 * h});
  dc_prev = Tensor({h});
  for (std::int64_t i = 0; i < h; ++i) {
    const double d_go = dh.at(i) * cache.tanh_c.at(i);
    const double dct = dh.at(i) * cache.go.at(i) * (1.0 - cache.tanh_c.at(i) * cache.tanh_c.at(i)) +
                       dc.at(i);
    const double d_gf = dct * cache.c_prev.at(i);
    const double d_gi = dct * cache.gg.at(i);
    const double d_gg = dct * cache.gi.at(i);
    dc_prev.at(i) = dct * cache.gf.at(i);
    dz.at(i) = d_gi * cache.gi.at(i) * (1.0 - cache.gi.at(i));
    dz.at(h + i) = d_gf * cache.gf.at(i) * (1.0 - cache.gf.at(i));
    dz.at(2 * h + i) = d_gg * (1.0 - cache.gg.at(i) * cache.gg.at(i));
    dz.at(3 * h + i) = d_go * cache.go.at(i) * (1.0 - cache.go.at(i));
  }
  dh_prev = Tensor({h});
  for (std::int64_t row = 0; row < 4 * h; ++row) {
    const double d = dz.at(row);
    if (d == 0.0) continue;
    kern::axpy(d, cache.x.data(), grads.wx->data() + row * k, static_cast<std::size_t>(k));
    kern::axpy(d, cache.h_prev.data(), grads.wh->data() + row * h, static_cast<std::size_t>(h));
    grads.b->at(row) += d;
    kern::axpy(d, r.wh->data() + row * h, dh_prev.data(), static_cast<std::size_t>(h));
  }
}

Tensor candidate_row(const CandidateSet& cand, Modality m, int id) {
  const Tensor& mat = cand.channel(m);
  Tensor out({mat.cols()});
  for (std::int64_t c = 0; c < mat.cols(); ++c) out.at(c) = mat.at(id, c);
  return out;
}

Tensor projection(const CellRefs& r, std::int64_t k, std::int64_t h, const Tensor& hidden) {
  Tensor proj({k});
  for (std::int64_t row = 0; row < k; ++row) {
    proj.at(row) = kern::dot(r.proj->data() + row * h, hidden.data(), static_cast<std::size_t>(h)) +
                   r.proj_b->at(row);
  }
  return proj;
}

Tensor masked_logits(const Tensor& proj, const CandidateSet& cand, Modality m,
                     const std::vector<std::uint8_t>& visited, double inv_scale) {
  const Tensor& mat = cand.channel(m);
  const std::int64_t n = mat.rows();
  const std::int64_t k = mat.cols();
  Tensor logits({n});
  for (std::int64_t e = 0; e < n; ++e) {
    if (visited[static_cast<std::size_t>(e)]) continue;
    logits.at(e) = kern::dot(proj.data(), mat.data() + e * k, static_cast<std::size_t>(k)) * inv_scale;
  }
  return logits;
}

Tensor visited_mask(const std::vector<std::uint8_t>& visited) {
  Tensor mask({static_cast<std::int64_t>(visited.size())});
  for (std::size_t i = 0; i < visited.size(); ++i) mask.at(static_cast<std::int64_t>(i)) = visited[i] ? 0.0 : 1.0;
  return mask;
}

ModalWeights normalized(const ModalWeights& lambda) {
  double total = 0.0;
  for (double l : lambda) {
    if (l < 0.0) throw DataError("lambda weights must be nonnegative");
    total += l;
  }
  if (total <= 0.0) throw DataError("lambda weights must not all be zero");
  return {lambda[0] / total, lambda[1] / total, lambda[2] / total};
}

int argmax_index(const Tensor& probs) {
  int best = -1;
  double best_v = -1.0;
  for (std::int64_t i = 0; i < probs.size(); ++i) {
    if (probs.at(i) > best_v) {
      best_v = probs.at(i);
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace

int PolicyState::visited_count() const {
  int n = 0;
  for (auto v : visited) n += v ? 1 : 0;
  return n;
}

GeneratorParams init_generator(std::int64_t k, std::int64_t h, std::uint64_t seed) {
  GeneratorParams g;
  g.k = k;
  g.h = h;
  Rng rng(derive_seed(seed, {0x6E0}));
  for (Modality m : kModalities) {
    g.store.add(g.param_name(m, "Wx"), Tensor::uniform({4 * h, k}, rng, -0.1, 0.1));
    g.store.add(g.param_name(m, "Wh"), Tensor::uniform({4 * h, h}, rng, -0.1, 0.1));
    g.store.add(g.param_name(m, "b"), Tensor({4 * h}));
    g.store.add(g.param_name(m, "P"), Tensor::uniform({k, h}, rng, -0.1, 0.1));
    g.store.add(g.param_name(m, "pb"), Tensor({k}));
  }
  return g;
}

void save_generator(const GeneratorParams& g, const std::string& path) {
  Checkpoint ck;
  ck.kind = "generator";
  ck.meta = {{"k", g.k}, {"h", g.h}};
  for (const auto& [name, t] : g.store.all_params()) ck.tensors.emplace(name, t);
  save_checkpoint(ck, path);
}

GeneratorParams load_generator(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.kind != "generator") throw DataError("expected a generator checkpoint: " + path);
  GeneratorParams g;
  g.k = ck.meta.at("k");
  g.h = ck.meta.at("h");
  for (const auto& [name, t] : ck.tensors) g.store.add(name, t);
  return g;
}

PolicyState blank_state(const GeneratorParams& g, int n_candidates) {
  PolicyState s;
  for (int m = 0; m < 3; ++m) {
    s.hidden[static_cast<std::size_t>(m)] = Tensor({g.h});
    s.cell[static_cast<std::size_t>(m)] = Tensor({g.h});
  }
  s.visited.assign(static_cast<std::size_t>(n_candidates), 0);
  s.position = -1;  // nothing consumed yet
  return s;
}

void step(const GeneratorParams& g, PolicyState& state, const std::array<Tensor, 3>& inputs) {
  for (Modality m : kModalities) {
    const auto mi = static_cast<std::size_t>(index(m));
    if (inputs[mi].size() != g.k) {
      throw ShapeError("policy step: input " + inputs[mi].shape_str() + " != [" + std::to_string(g.k) + "]");
    }
    const CellRefs r = cell_refs(g, m);
    StepCache cache = lstm_forward(r, g.h, inputs[mi], state.hidden[mi], state.cell[mi]);
    if (!cache.h.all_finite() || !cache.c.all_finite()) {
      throw NumericalFault("policy step: non-finite activation");
    }
    state.hidden[mi] = std::move(cache.h);
    state.cell[mi] = std::move(cache.c);
  }
  ++state.position;
}

void step_entity(const GeneratorParams& g, PolicyState& state, const CandidateSet& cand, int id) {
  step(g, state,
       {candidate_row(cand, Modality::txt, id), candidate_row(cand, Modality::img, id),
        candidate_row(cand, Modality::mm, id)});
  state.visited[static_cast<std::size_t>(id)] = 1;
}

PolicyState replay_prefix(const GeneratorParams& g, const CandidateSet& cand,
                          const std::vector<int>& prefix) {
  PolicyState s = blank_state(g, cand.count());
  for (int id : prefix) {
    if (s.visited[static_cast<std::size_t>(id)]) {
      throw InvalidTrajectory("prefix revisits entity '" + cand.names[static_cast<std::size_t>(id)] + "'");
    }
    step_entity(g, s, cand, id);
  }
  return s;
}

Tensor action_dist(const GeneratorParams& g, const PolicyState& state, const CandidateSet& cand,
                   Modality m, double temperature) {
  if (temperature < 0.0) throw DataError("action_dist: temperature must be >= 0");
  int unvisited = cand.count() - state.visited_count();
  if (unvisited <= 0) throw VocabExhausted("action_dist: all candidates visited");

  const CellRefs r = cell_refs(g, m);
  const auto mi = static_cast<std::size_t>(index(m));
  const Tensor proj = projection(r, g.k, g.h, state.hidden[mi]);
  const double temp = temperature == 0.0 ? 1.0 : temperature;
  const double inv_scale = 1.0 / (std::sqrt(static_cast<double>(g.h)) * temp);
  const Tensor logits = masked_logits(proj, cand, m, state.visited, inv_scale);
  const Tensor mask = visited_mask(state.visited);
  Tensor probs = softmax(logits, &mask);
  if (temperature == 0.0) {
    const int best = argmax_index(probs);
    probs.fill(0.0);
    probs.at(best) = 1.0;
  }
  return probs;
}

Tensor mixture_dist(const GeneratorParams& g, const PolicyState& state, const CandidateSet& cand,
                    const ModalWeights& lambda, double temperature) {
  const ModalWeights lam = normalized(lambda);
  Tensor out({static_cast<std::int64_t>(cand.count())});
  for (Modality m : kModalities) {
    const double w = lam[static_cast<std::size_t>(index(m))];
    if (w == 0.0) continue;
    // argmax mode mixes the temperature-1 distributions, then all mass goes
    // to the mixture argmax below
    const Tensor d = action_dist(g, state, cand, m, temperature == 0.0 ? 1.0 : temperature);
    kern::axpy(w, d.data(), out.data(), static_cast<std::size_t>(d.size()));
  }
  if (temperature == 0.0) {
    const int best = argmax_index(out);
    out.fill(0.0);
    out.at(best) = 1.0;
  }
  return out;
}

std::vector<int> sample_storyline(const GeneratorParams& g, int start, const CandidateSet& cand,
                                  int t_len, std::uint64_t seed, const ModalWeights& lambda,
                                  double temperature) {
  if (start < 0 || start >= cand.count()) throw DataError("sample_storyline: start out of range");
  if (t_len < 1) throw DataError("sample_storyline: length must be >= 1");
  if (t_len > cand.count()) {
    throw VocabExhausted("sample_storyline: length " + std::to_string(t_len) +
                         " exceeds vocabulary size " + std::to_string(cand.count()));
  }
  Rng rng(seed);
  PolicyState state = blank_state(g, cand.count());
  std::vector<int> nodes{start};
  step_entity(g, state, cand, start);
  while (static_cast<int>(nodes.size()) < t_len) {
    const Tensor probs = mixture_dist(g, state, cand, lambda, temperature);
    const int id = rng.categorical(probs.data(), cand.count());
    nodes.push_back(id);
    step_entity(g, state, cand, id);
  }
  return nodes;
}

std::vector<std::vector<int>> rollout_complete(const GeneratorParams& g,
                                               const std::vector<int>& partial,
                                               const CandidateSet& cand, int t_len, int n,
                                               std::uint64_t seed, const ModalWeights& lambda,
                                               double temperature) {
  if (partial.empty()) throw DataError("rollout_complete: partial storyline is empty");
  if (static_cast<int>(partial.size()) >= t_len) {
    throw DataError("rollout_complete: partial length " + std::to_string(partial.size()) +
                    " must be below target length " + std::to_string(t_len));
  }
  if (t_len > cand.count()) {
    throw VocabExhausted("rollout_complete: length exceeds vocabulary size");
  }
  const PolicyState base = replay_prefix(g, cand, partial);

  std::vector<std::vector<int>> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int rollout = 0; rollout < n; ++rollout) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(rollout)}));
    PolicyState state = base;
    std::vector<int> nodes = partial;
    while (static_cast<int>(nodes.size()) < t_len) {
      const Tensor probs = mixture_dist(g, state, cand, lambda, temperature);
      const int id = rng.categorical(probs.data(), cand.count());
      nodes.push_back(id);
      step_entity(g, state, cand, id);
    }
    out.push_back(std::move(nodes));
  }
  return out;
}

// ---------------------------------------------------------------------------
// teacher-forced training
// ---------------------------------------------------------------------------

double SampleSchedule::at(int epoch, int total_epochs) const {
  if (total_epochs <= 1) return eps_start;
  const double f = static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
  return eps_start + (eps_end - eps_start) * f;
}

namespace {

// One window, one modality: teacher-forced forward/backward of the next-entity
// cross-entropy. The no-repeat mask always comes from the ground-truth prefix
// (demonstrations never repeat), so losses stay finite even when scheduled
// sampling feeds back the model's own predictions as inputs.
double window_backward(GeneratorParams& g, const std::vector<int>& nodes, const CandidateSet& cand,
                       Modality m, double eps, Rng& rng) {
  const auto t_total = static_cast<int>(nodes.size());
  const CellRefs r = cell_refs(g, m);
  const CellGrads grads = cell_grads(g, m);
  const std::int64_t h = g.h;
  const std::int64_t k = g.k;
  const Tensor& cmat = cand.channel(m);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(h));

  std::vector<std::uint8_t> gt_visited(static_cast<std::size_t>(cand.count()), 0);
  gt_visited[static_cast<std::size_t>(nodes[0])] = 1;

  std::vector<StepCache> caches;
  std::vector<Tensor> dlogits_per_step;  // (probs - onehot) per action step
  caches.reserve(static_cast<std::size_t>(t_total - 1));

  Tensor hidden({h});
  Tensor cell({h});
  int input_id = nodes[0];
  double loss = 0.0;

  for (int t = 1; t < t_total; ++t) {
    caches.push_back(lstm_forward(r, h, candidate_row(cand, m, input_id), hidden, cell));
    hidden = caches.back().h;
    cell = caches.back().c;

    const Tensor proj = projection(r, k, h, hidden);
    const Tensor logits = masked_logits(proj, cand, m, gt_visited, inv_scale);
    const Tensor mask = visited_mask(gt_visited);
    const Tensor probs = softmax(logits, &mask);
    loss += -std::log(std::max(probs.at(nodes[static_cast<std::size_t>(t)]), 1e-300));

    Tensor dl(probs);
    dl.at(nodes[static_cast<std::size_t>(t)]) -= 1.0;
    dlogits_per_step.push_back(std::move(dl));

    // next input: ground truth, or (with probability eps) the model's own draw
    input_id = nodes[static_cast<std::size_t>(t)];
    if (eps > 0.0 && t + 1 < t_total && rng.uniform() < eps) {
      input_id = rng.categorical(probs.data(), cand.count());
    }
    gt_visited[static_cast<std::size_t>(nodes[static_cast<std::size_t>(t)])] = 1;
  }

  // backward through time
  Tensor dh({h});
  Tensor dc({h});
  for (int s = t_total - 2; s >= 0; --s) {
    const Tensor& dl = dlogits_per_step[static_cast<std::size_t>(s)];
    Tensor dproj({k});
    for (std::int64_t e = 0; e < dl.size(); ++e) {
      if (dl.at(e) == 0.0) continue;
      kern::axpy(dl.at(e) * inv_scale, cmat.data() + e * k, dproj.data(), static_cast<std::size_t>(k));
    }
    const Tensor& h_state = caches[static_cast<std::size_t>(s)].h;
    for (std::int64_t row = 0; row < k; ++row) {
      kern::axpy(dproj.at(row), h_state.data(), grads.proj->data() + row * h, static_cast<std::size_t>(h));
      grads.proj_b->at(row) += dproj.at(row);
      kern::axpy(dproj.at(row), r.proj->data() + row * h, dh.data(), static_cast<std::size_t>(h));
    }
    Tensor dh_prev, dc_prev;
    lstm_backward(r, grads, h, caches[static_cast<std::size_t>(s)], dh, dc, dh_prev, dc_prev);
    dh = std::move(dh_prev);
    dc = std::move(dc_prev);
  }
  return loss;
}

void pretrain_impl(GeneratorParams& g, const std::vector<Storyline>& windows,
                   const CandidateSet& cand, int epochs, double rate,
                   const SampleSchedule& schedule, std::uint64_t seed, PretrainLog* log) {
  if (windows.empty()) throw DataError("pretrain: empty corpus");
  for (const auto& w : windows) {
    if (w.nodes.size() < 2) throw DataError("pretrain: window shorter than 2 nodes");
  }

  std::vector<std::size_t> order(windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng rng(derive_seed(seed, {0x93E7, static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(order);
    const double eps = schedule.at(epoch, epochs);
    double epoch_loss = 0.0;
    for (std::size_t idx : order) {
      g.store.zero_grads();
      double loss = 0.0;
      for (Modality m : kModalities) {
        loss += window_backward(g, windows[idx].nodes, cand, m, eps, rng);
      }
      if (!std::isfinite(loss)) {
        throw NumericalFault("pretrain: non-finite loss at epoch " + std::to_string(epoch));
      }
      epoch_loss += loss;
      sgd_step(g.store, rate, Direction::descend);
    }
    if (log) log->epoch_loss.push_back(epoch_loss / static_cast<double>(windows.size()));
  }
}

}  // namespace

void mle_pretrain(GeneratorParams& g, const std::vector<Storyline>& windows,
                  const CandidateSet& cand, int epochs, double rate, std::uint64_t seed,
                  PretrainLog* log) {
  pretrain_impl(g, windows, cand, epochs, rate, SampleSchedule::constant(0.0), seed, log);
}

void scheduled_sampling_pretrain(GeneratorParams& g, const std::vector<Storyline>& windows,
                                 const CandidateSet& cand, int epochs, double rate,
                                 const SampleSchedule& schedule, std::uint64_t seed,
                                 PretrainLog* log) {
  pretrain_impl(g, windows, cand, epochs, rate, schedule, seed, log);
}

std::vector<double> weighted_logprob_backward(GeneratorParams& g, const std::vector<int>& nodes,
                                              const CandidateSet& cand, Modality m,
                                              const std::vector<double>& weights, double scale) {
  if (nodes.size() < 2) throw DataError("logprob: storyline shorter than 2 nodes");
  if (weights.size() != nodes.size() - 1) {
    throw DataError("logprob: expected " + std::to_string(nodes.size() - 1) + " step weights");
  }
  {
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(cand.count()), 0);
    for (int id : nodes) {
      if (id < 0 || id >= cand.count()) throw DataError("logprob: node id out of range");
      if (seen[static_cast<std::size_t>(id)]) {
        throw InvalidTrajectory("storyline revisits entity '" + cand.names[static_cast<std::size_t>(id)] +
                                "' (zero probability under the no-repeat policy)");
      }
      seen[static_cast<std::size_t>(id)] = 1;
    }
  }

  const auto t_total = static_cast<int>(nodes.size());
  const CellRefs r = cell_refs(g, m);
  const CellGrads grads = cell_grads(g, m);
  const std::int64_t h = g.h;
  const std::int64_t k = g.k;
  const Tensor& cmat = cand.channel(m);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(h));

  std::vector<std::uint8_t> visited(static_cast<std::size_t>(cand.count()), 0);
  visited[static_cast<std::size_t>(nodes[0])] = 1;

  std::vector<StepCache> caches;
  std::vector<Tensor> dlogits_per_step;
  std::vector<double> logps;

  Tensor hidden({h});
  Tensor cell({h});

  for (int t = 1; t < t_total; ++t) {
    caches.push_back(lstm_forward(r, h, candidate_row(cand, m, nodes[static_cast<std::size_t>(t - 1)]),
                                  hidden, cell));
    hidden = caches.back().h;
    cell = caches.back().c;

    const Tensor proj = projection(r, k, h, hidden);
    const Tensor logits = masked_logits(proj, cand, m, visited, inv_scale);
    const Tensor mask = visited_mask(visited);
    const Tensor probs = softmax(logits, &mask);
    const int target = nodes[static_cast<std::size_t>(t)];
    logps.push_back(std::log(probs.at(target)));

    // d log pi / d logits = onehot - probs, scaled by this step's weight
    Tensor dl(probs);
    const double w = -weights[static_cast<std::size_t>(t - 1)] * scale;
    for (std::int64_t e = 0; e < dl.size(); ++e) dl.at(e) *= w;
    dl.at(target) -= w;
    dlogits_per_step.push_back(std::move(dl));

    visited[static_cast<std::size_t>(target)] = 1;
  }

  Tensor dh({h});
  Tensor dc({h});
  for (int s = t_total - 2; s >= 0; --s) {
    const Tensor& dl = dlogits_per_step[static_cast<std::size_t>(s)];
    Tensor dproj({k});
    for (std::int64_t e = 0; e < dl.size(); ++e) {
      if (dl.at(e) == 0.0) continue;
      kern::axpy(dl.at(e) * inv_scale, cmat.data() + e * k, dproj.data(), static_cast<std::size_t>(k));
    }
    const Tensor& h_state = caches[static_cast<std::size_t>(s)].h;
    for (std::int64_t row = 0; row < k; ++row) {
      kern::axpy(dproj.at(row), h_state.data(), grads.proj->data() + row * h, static_cast<std::size_t>(h));
      grads.proj_b->at(row) += dproj.at(row);
      kern::axpy(dproj.at(row), r.proj->data() + row * h, dh.data(), static_cast<std::size_t>(h));
    }
    Tensor dh_prev, dc_prev;
    lstm_backward(r, grads, h, caches[static_cast<std::size_t>(s)], dh, dc, dh_prev, dc_prev);
    dh = std::move(dh_prev);
    dc = std::move(dc_prev);
  }
  return logps;
}

LogprobGrads logprob_grads(GeneratorParams& g, const std::vector<int>& nodes,
                           const CandidateSet& cand, Modality m) {
  LogprobGrads out;
  const std::size_t steps = nodes.size() - 1;
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<double> weights(steps, 0.0);
    weights[t] = 1.0;
    g.store.zero_grads();
    std::vector<double> logps = weighted_logprob_backward(g, nodes, cand, m, weights, 1.0);
    if (t == 0) out.logp = std::move(logps);
    out.step_grads.push_back(g.store.all_grads());
  }
  g.store.zero_grads();
  return out;
}

}  // namespace milgan
