#include "milgan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "milgan/io.hpp"
#include "milgan/kernels.hpp"
#include "milgan/metric.hpp"
#include "milgan/rng.hpp"

namespace milgan {

using nlohmann::json;

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  for (double l : lambda) {
    if (l < 0.0) throw DataError("config: lambda weights must be nonnegative");
  }
  if (lambda[0] + lambda[1] + lambda[2] <= 0.0) {
    throw DataError("config: lambda weights must not all be zero");
  }
  if (n_rollouts < 1) throw DataError("config: n_rollouts must be >= 1");
  if (t_len < 2) throw DataError("config: T must be >= 2");
  if (hidden < 1) throw DataError("config: hidden must be >= 1");
  if (temperature < 0.0) throw DataError("config: temperature must be >= 0");
  if (g_batch < 1 || d_batch < 1) throw DataError("config: batch sizes must be >= 1");
}

TrainConfig config_from_map(const std::map<std::string, std::string>& kv) {
  TrainConfig cfg;
  auto as_double = [](const std::string& key, const std::string& value) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(value, &pos);
      if (pos != value.size()) throw std::invalid_argument(value);
      return v;
    } catch (const std::exception&) {
      throw DataError("config: key '" + key + "' has non-numeric value '" + value + "'");
    }
  };
  auto as_int = [&](const std::string& key, const std::string& value) {
    const double v = as_double(key, value);
    if (v != std::floor(v)) throw DataError("config: key '" + key + "' must be an integer");
    return static_cast<int>(v);
  };

  for (const auto& [key, value] : kv) {
    if (key == "lambda_txt") cfg.lambda[0] = as_double(key, value);
    else if (key == "lambda_img") cfg.lambda[1] = as_double(key, value);
    else if (key == "lambda_mm") cfg.lambda[2] = as_double(key, value);
    else if (key == "alpha") cfg.alpha = as_double(key, value);
    else if (key == "n_rollouts") cfg.n_rollouts = as_int(key, value);
    else if (key == "g_steps") cfg.g_steps = as_int(key, value);
    else if (key == "d_steps") cfg.d_steps = as_int(key, value);
    else if (key == "rounds") cfg.rounds = as_int(key, value);
    else if (key == "pretrain_g_epochs") cfg.pretrain_g_epochs = as_int(key, value);
    else if (key == "pretrain_d_epochs") cfg.pretrain_d_epochs = as_int(key, value);
    else if (key == "T") cfg.t_len = as_int(key, value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(as_double(key, value));
    else if (key == "hidden") cfg.hidden = as_int(key, value);
    else if (key == "temperature") cfg.temperature = as_double(key, value);
    else if (key == "g_batch") cfg.g_batch = as_int(key, value);
    else if (key == "d_batch") cfg.d_batch = as_int(key, value);
    else if (key == "pretrain_rate") cfg.pretrain_rate = as_double(key, value);
    else if (key == "d_rate") cfg.d_rate = as_double(key, value);
    else if (key == "conv_maps") cfg.conv_maps = as_int(key, value);
    else if (key == "eval_samples") cfg.eval_samples = as_int(key, value);
    else if (key == "plateau_rounds") cfg.plateau_rounds = as_int(key, value);
    else if (key == "plateau_tol") cfg.plateau_tol = as_double(key, value);
    else throw DataError("config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::map<std::string, std::string> config_to_map(const TrainConfig& cfg) {
  return {
      {"lambda_txt", fmt_double(cfg.lambda[0])},
      {"lambda_img", fmt_double(cfg.lambda[1])},
      {"lambda_mm", fmt_double(cfg.lambda[2])},
      {"alpha", fmt_double(cfg.alpha)},
      {"n_rollouts", std::to_string(cfg.n_rollouts)},
      {"g_steps", std::to_string(cfg.g_steps)},
      {"d_steps", std::to_string(cfg.d_steps)},
      {"rounds", std::to_string(cfg.rounds)},
      {"pretrain_g_epochs", std::to_string(cfg.pretrain_g_epochs)},
      {"pretrain_d_epochs", std::to_string(cfg.pretrain_d_epochs)},
      {"T", std::to_string(cfg.t_len)},
      {"seed", std::to_string(cfg.seed)},
      {"hidden", std::to_string(cfg.hidden)},
      {"temperature", fmt_double(cfg.temperature)},
      {"g_batch", std::to_string(cfg.g_batch)},
      {"d_batch", std::to_string(cfg.d_batch)},
      {"pretrain_rate", fmt_double(cfg.pretrain_rate)},
      {"d_rate", fmt_double(cfg.d_rate)},
      {"conv_maps", std::to_string(cfg.conv_maps)},
      {"eval_samples", std::to_string(cfg.eval_samples)},
      {"plateau_rounds", std::to_string(cfg.plateau_rounds)},
      {"plateau_tol", fmt_double(cfg.plateau_tol)},
  };
}

TrainConfig load_train_config(const std::string& path) {
  return config_from_map(load_config_file(path));
}

// ---------------------------------------------------------------------------
// Q estimation
// ---------------------------------------------------------------------------

double estimate_q(const GeneratorParams& gen, const DiscParams& disc,
                  const std::vector<int>& partial, int chosen, const CandidateSet& cand,
                  int t_len, int n_rollouts, std::uint64_t seed, Modality m,
                  const ModalWeights& lambda, double temperature) {
  if (static_cast<int>(partial.size()) + 1 > t_len) {
    throw DataError("estimate_q: partial plus action exceeds target length");
  }
  std::vector<int> full = partial;
  full.push_back(chosen);

  if (static_cast<int>(full.size()) == t_len) {
    return score(disc, to_modal_sequence(cand, full, true).channel(m), m);
  }
  if (temperature == 0.0) {
    // zero-variance rollouts: one completion equals the mean exactly
    const auto completions = rollout_complete(gen, full, cand, t_len, 1, seed, lambda, 0.0);
    return score(disc, to_modal_sequence(cand, completions[0], true).channel(m), m);
  }
  const auto completions = rollout_complete(gen, full, cand, t_len, n_rollouts, seed, lambda, temperature);
  double total = 0.0;
  for (const auto& nodes : completions) {
    total += score(disc, to_modal_sequence(cand, nodes, true).channel(m), m);
  }
  return total / static_cast<double>(n_rollouts);
}

// ---------------------------------------------------------------------------
// generator / discriminator updates
// ---------------------------------------------------------------------------

GenUpdateDiag generator_update(GeneratorParams& gen, const DiscParams& disc,
                               const CandidateSet& cand, const TrainConfig& cfg,
                               std::uint64_t seed) {
  cfg.validate();
  gen.store.zero_grads();
  GenUpdateDiag diag;
  std::array<std::int64_t, 3> q_counts{0, 0, 0};

  Rng start_rng(derive_seed(seed, {0x57A7}));
  for (int b = 0; b < cfg.g_batch; ++b) {
    const int start = start_rng.uniform_int(cand.count());
    const std::vector<int> nodes =
        sample_storyline(gen, start, cand, cfg.t_len, derive_seed(seed, {0xE9, static_cast<std::uint64_t>(b)}),
                         cfg.lambda, cfg.temperature);

    for (Modality m : kModalities) {
      const auto mi = static_cast<std::size_t>(index(m));
      const double lam = cfg.lambda[mi];
      if (lam == 0.0) continue;

      std::vector<double> q(nodes.size() - 1, 0.0);
      for (std::size_t t = 1; t < nodes.size(); ++t) {
        std::vector<int> prefix(nodes.begin(), nodes.begin() + static_cast<std::ptrdiff_t>(t));
        q[t - 1] = estimate_q(gen, disc, prefix, nodes[t], cand, cfg.t_len, cfg.n_rollouts,
                              derive_seed(seed, {0x0E57, static_cast<std::uint64_t>(b), t, static_cast<std::uint64_t>(mi)}),
                              m, cfg.lambda, cfg.temperature);
        diag.mean_q[mi] += q[t - 1];
        ++q_counts[mi];
      }
      const double scale = lam / (static_cast<double>(cfg.t_len) * static_cast<double>(cfg.g_batch));
      weighted_logprob_backward(gen, nodes, cand, m, q, scale);
    }
  }
  try {
    sgd_step(gen.store, cfg.alpha, Direction::ascend);
  } catch (const NumericalFault& e) {
    throw NumericalFault(std::string("generator_update: ") + e.what());
  }
  for (std::size_t mi = 0; mi < 3; ++mi) {
    if (q_counts[mi] > 0) diag.mean_q[mi] /= static_cast<double>(q_counts[mi]);
  }
  return diag;
}

namespace {

double gap_objective_value(const DiscParams& disc, const std::vector<Tensor>& real,
                           const std::vector<Tensor>& fake, Modality m) {
  double obj = 0.0;
  for (const Tensor& t : real) obj -= score(disc, t, m) / static_cast<double>(real.size());
  for (const Tensor& t : fake) obj -= (1.0 - score(disc, t, m)) / static_cast<double>(fake.size());
  return obj;
}

std::vector<Tensor> channel_batch(const std::vector<ModalSequence>& seqs, Modality m) {
  std::vector<Tensor> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(s.channel(m));
  return out;
}

}  // namespace

double discriminator_update(const GeneratorParams& gen, DiscParams& disc,
                            const std::vector<ModalSequence>& real, const CandidateSet& cand,
                            const TrainConfig& cfg, std::uint64_t seed) {
  if (real.empty()) throw DataError("discriminator_update: empty real batch");

  Rng start_rng(derive_seed(seed, {0xFA6E}));
  std::vector<ModalSequence> fake;
  fake.reserve(real.size());
  for (std::size_t i = 0; i < real.size(); ++i) {
    const int start = start_rng.uniform_int(cand.count());
    const auto nodes = sample_storyline(gen, start, cand, cfg.t_len,
                                        derive_seed(seed, {0xFA6F, static_cast<std::uint64_t>(i)}),
                                        cfg.lambda, cfg.temperature);
    fake.push_back(to_modal_sequence(cand, nodes, true));
  }

  double first_obj = 0.0;
  for (Modality m : kModalities) {
    const auto rb = channel_batch(real, m);
    const auto fb = channel_batch(fake, m);
    if (cfg.d_steps == 0) {
      first_obj += gap_objective_value(disc, rb, fb, m);
      continue;
    }
    for (int s = 0; s < cfg.d_steps; ++s) {
      const double obj = train_step_gap(disc, rb, fb, m, cfg.d_rate);
      if (s == 0) first_obj += obj;
    }
  }
  return first_obj / 3.0;
}

// ---------------------------------------------------------------------------
// full loop
// ---------------------------------------------------------------------------

namespace {

double training_sum_sim(const GeneratorParams& gen, const CandidateSet& cand,
                        const std::vector<ModalSequence>& demos, const TrainConfig& cfg) {
  std::vector<ModalSequence> generated;
  generated.reserve(static_cast<std::size_t>(cfg.eval_samples));
  for (int i = 0; i < cfg.eval_samples; ++i) {
    const int start = i % cand.count();
    const auto nodes = sample_storyline(gen, start, cand, cfg.t_len,
                                        derive_seed(cfg.seed, {0xE7A1, static_cast<std::uint64_t>(i)}),
                                        cfg.lambda, /*temperature=*/0.0);
    generated.push_back(to_modal_sequence(cand, nodes, true));
  }
  return sum_sim(demos, generated, Modality::txt);
}

}  // namespace

TrainResult train(const EventCorpus& corpus, const TrainConfig& cfg) {
  cfg.validate();
  EventCorpus local = corpus;
  substitute_missing_image_vecs(local);

  std::vector<Storyline> windows;
  for (const auto& sl : local.storylines) {
    for (auto& w : slice_windows(sl, cfg.t_len)) windows.push_back(std::move(w));
  }
  if (windows.empty()) {
    throw DataError("train: no storyline yields a window of length " + std::to_string(cfg.t_len));
  }
  const CandidateSet cand = make_candidates(local);
  std::vector<ModalSequence> demos;
  demos.reserve(windows.size());
  for (const auto& w : windows) demos.push_back(to_modal_sequence(cand, w.nodes, true));

  TrainResult res;

  // generator pretraining
  res.gen = init_generator(local.k, cfg.hidden, derive_seed(cfg.seed, {0x11}));
  mle_pretrain(res.gen, windows, cand, cfg.pretrain_g_epochs, cfg.pretrain_rate,
               derive_seed(cfg.seed, {0x12}));
  res.pretrained = res.gen;

  // discriminator pretraining on sampled negatives
  res.disc = init_disc(local.k, cfg.conv_maps, derive_seed(cfg.seed, {0x13}));
  {
    Rng start_rng(derive_seed(cfg.seed, {0x14}));
    std::vector<ModalSequence> fakes;
    fakes.reserve(demos.size());
    for (std::size_t i = 0; i < demos.size(); ++i) {
      const int start = start_rng.uniform_int(cand.count());
      const auto nodes = sample_storyline(res.gen, start, cand, cfg.t_len,
                                          derive_seed(cfg.seed, {0x15, static_cast<std::uint64_t>(i)}),
                                          cfg.lambda, cfg.temperature);
      fakes.push_back(to_modal_sequence(cand, nodes, true));
    }
    pretrain_xent(res.disc, demos, fakes, cfg.pretrain_d_epochs, cfg.d_rate,
                  derive_seed(cfg.seed, {0x16}));
  }

  // alternating rounds with similarity-plateau stopping
  double best_sim = training_sum_sim(res.gen, cand, demos, cfg);
  int stall = 0;
  for (int round = 0; round < cfg.rounds; ++round) {
    GenUpdateDiag diag;
    for (int gs = 0; gs < cfg.g_steps; ++gs) {
      diag = generator_update(res.gen, res.disc, cand, cfg,
                              derive_seed(cfg.seed, {0x21, static_cast<std::uint64_t>(round),
                                                     static_cast<std::uint64_t>(gs)}));
    }
    res.log.push_back({round, "g", diag.mean_q, 0.0, 0.0});

    std::vector<ModalSequence> real_batch;
    if (static_cast<int>(demos.size()) <= cfg.d_batch) {
      real_batch = demos;
    } else {
      Rng pick(derive_seed(cfg.seed, {0x22, static_cast<std::uint64_t>(round)}));
      for (int i = 0; i < cfg.d_batch; ++i) {
        real_batch.push_back(demos[static_cast<std::size_t>(pick.uniform_int(static_cast<int>(demos.size())))]);
      }
    }
    const double dobj = discriminator_update(res.gen, res.disc, real_batch, cand, cfg,
                                             derive_seed(cfg.seed, {0x23, static_cast<std::uint64_t>(round)}));
    res.log.push_back({round, "d", {0.0, 0.0, 0.0}, dobj, 0.0});

    const double sim = training_sum_sim(res.gen, cand, demos, cfg);
    res.log.push_back({round, "eval", {0.0, 0.0, 0.0}, 0.0, sim});
    res.rounds_run = round + 1;

    const double floor = std::max(std::fabs(best_sim), 1e-9);
    if (sim > best_sim + cfg.plateau_tol * floor) {
      best_sim = sim;
      stall = 0;
    } else {
      best_sim = std::max(best_sim, sim);
      ++stall;
    }
    if (stall >= cfg.plateau_rounds) break;
  }
  return res;
}

std::vector<Storyline> apply_policy(const GeneratorParams& gen, const EventCorpus& unseen,
                                    const TrainConfig& cfg, const std::vector<std::string>& starts,
                                    int count, std::uint64_t seed) {
  EventCorpus local = unseen;
  substitute_missing_image_vecs(local);
  if (local.k != gen.k) {
    throw ShapeError("apply_policy: unseen corpus dimension k=" + std::to_string(local.k) +
                     " does not match generator k=" + std::to_string(gen.k));
  }
  const CandidateSet cand = make_candidates(local);

  std::vector<int> start_ids;
  if (!starts.empty()) {
    for (const auto& name : starts) start_ids.push_back(local.entity_id(name));
  } else {
    Rng rng(derive_seed(seed, {0xA991}));
    for (int i = 0; i < count; ++i) start_ids.push_back(rng.uniform_int(cand.count()));
  }

  std::vector<Storyline> out;
  out.reserve(start_ids.size());
  for (std::size_t i = 0; i < start_ids.size(); ++i) {
    Storyline sl;
    sl.event_id = local.event_id;
    sl.nodes = sample_storyline(gen, start_ids[i], cand, cfg.t_len,
                                derive_seed(seed, {0xA992, static_cast<std::uint64_t>(i)}),
                                cfg.lambda, cfg.temperature);
    out.push_back(std::move(sl));
  }
  return out;
}

std::string train_log_to_jsonl(const std::vector<RoundLog>& log) {
  std::ostringstream os;
  for (const auto& r : log) {
    json rec;
    rec["round"] = r.round;
    rec["phase"] = r.phase;
    rec["mean_q"] = {{"txt", r.mean_q[0]}, {"img", r.mean_q[1]}, {"mm", r.mean_q[2]}};
    rec["d_objective"] = r.d_objective;
    rec["sum_sim"] = r.sum_sim;
    os << rec.dump() << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// enumeration oracle
// ---------------------------------------------------------------------------

namespace {

double walk_q(const GeneratorParams& gen, const DiscParams& disc, const CandidateSet& cand,
              const PolicyState& state, std::vector<int>& nodes, int t_len, Modality m,
              const ModalWeights& lambda, double temperature) {
  if (static_cast<int>(nodes.size()) == t_len) {
    return score(disc, to_modal_sequence(cand, nodes, true).channel(m), m);
  }
  const Tensor probs = mixture_dist(gen, state, cand, lambda, temperature);
  double total = 0.0;
  for (int e = 0; e < cand.count(); ++e) {
    const double pe = probs.at(e);
    if (pe <= 0.0) continue;
    PolicyState next = state;
    step_entity(gen, next, cand, e);
    nodes.push_back(e);
    total += pe * walk_q(gen, disc, cand, next, nodes, t_len, m, lambda, temperature);
    nodes.pop_back();
  }
  return total;
}

}  // namespace

double enumerate_exact_q(const GeneratorParams& gen, const DiscParams& disc,
                         const std::vector<int>& partial, int chosen, const CandidateSet& cand,
                         int t_len, Modality m, const ModalWeights& lambda, double temperature) {
  std::vector<int> nodes = partial;
  nodes.push_back(chosen);
  const PolicyState state = replay_prefix(gen, cand, nodes);
  return walk_q(gen, disc, cand, state, nodes, t_len, m, lambda, temperature);
}

double enumerate_objective(const GeneratorParams& gen, const DiscParams& disc,
                           const CandidateSet& cand, int t_len, Modality m,
                           const ModalWeights& lambda, double temperature) {
  double total = 0.0;
  for (int start = 0; start < cand.count(); ++start) {
    std::vector<int> nodes{start};
    const PolicyState state = replay_prefix(gen, cand, nodes);
    total += walk_q(gen, disc, cand, state, nodes, t_len, m, lambda, temperature) /
             static_cast<double>(cand.count());
  }
  return total;
}

namespace {

void walk_gradient(GeneratorParams& gen, const DiscParams& disc, const CandidateSet& cand,
                   const TrainConfig& cfg, const PolicyState& state, std::vector<int>& nodes,
                   double prefix_prob, std::map<std::string, Tensor>& acc) {
  if (static_cast<int>(nodes.size()) >= cfg.t_len) return;
  const Tensor probs = mixture_dist(gen, state, cand, cfg.lambda, cfg.temperature);

  for (int a = 0; a < cand.count(); ++a) {
    const double pa = probs.at(a);
    if (pa <= 0.0) continue;

    nodes.push_back(a);
    for (Modality m : kModalities) {
      const auto mi = static_cast<std::size_t>(index(m));
      const double lam = cfg.lambda[mi];
      if (lam == 0.0) continue;

      std::vector<int> prefix(nodes.begin(), nodes.end() - 1);
      const double qv = enumerate_exact_q(gen, disc, prefix, a, cand, cfg.t_len, m, cfg.lambda,
                                          cfg.temperature);
      std::vector<double> weights(nodes.size() - 1, 0.0);
      weights.back() = 1.0;
      gen.store.zero_grads();
      weighted_logprob_backward(gen, nodes, cand, m, weights, 1.0);

      const double coeff = prefix_prob * pa * qv * lam / static_cast<double>(cfg.t_len);
      const std::string prefix_name = std::string(to_string(m)) + ".";
      for (const auto& [name, g] : gen.store.all_grads()) {
        if (name.rfind(prefix_name, 0) != 0) continue;
        kern::axpy(coeff, g.data(), acc.at(name).data(), static_cast<std::size_t>(g.size()));
      }
    }
    nodes.pop_back();

    PolicyState next = state;
    step_entity(gen, next, cand, a);
    nodes.push_back(a);
    walk_gradient(gen, disc, cand, cfg, next, nodes, prefix_prob * pa, acc);
    nodes.pop_back();
  }
}

}  // namespace

std::map<std::string, Tensor> enumerate_exact_gradient(GeneratorParams& gen,
                                                       const DiscParams& disc,
                                                       const CandidateSet& cand,
                                                       const TrainConfig& cfg) {
  std::map<std::string, Tensor> acc;
  for (const auto& [name, p] : gen.store.all_params()) acc.emplace(name, Tensor(p.shape()));

  for (int start = 0; start < cand.count(); ++start) {
    std::vector<int> nodes{start};
    const PolicyState state = replay_prefix(gen, cand, nodes);
    walk_gradient(gen, disc, cand, cfg, state, nodes, 1.0 / static_cast<double>(cand.count()), acc);
  }
  gen.store.zero_grads();
  return acc;
}

}  // namespace milgan
