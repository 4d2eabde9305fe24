#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "milgan/disc.hpp"
#include "milgan/modality.hpp"
#include "milgan/policy.hpp"
#include "milgan/seqdata.hpp"

namespace milgan {

struct TrainConfig {
  ModalWeights lambda{1.0, 1.0, 1.0};
  double alpha = 0.01;      // generator policy-gradient rate (ascent)
  int n_rollouts = 16;
  int g_steps = 1;
  int d_steps = 1;
  int rounds = 50;
  int pretrain_g_epochs = 100;
  int pretrain_d_epochs = 300;
  int t_len = 4;            // config key "T"
  std::uint64_t seed = 1;

  std::int64_t hidden = 64;
  double temperature = 1.0;
  int g_batch = 16;
  int d_batch = 32;
  double pretrain_rate = 0.05;
  double d_rate = 0.5;
  int conv_maps = 16;
  int eval_samples = 20;
  int plateau_rounds = 5;
  double plateau_tol = 1e-3;

  void validate() const;
};

TrainConfig config_from_map(const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> config_to_map(const TrainConfig& cfg);
TrainConfig load_train_config(const std::string& path);

/// Action-value estimate for taking `chosen` after `partial`:
/// the discriminator score of the completed sequence when it is already full,
/// otherwise the mean score over n_rollouts stochastic completions under the
/// current mixture policy. A deterministic policy (temperature 0) evaluates a
/// single completion, which equals the mean exactly.
double estimate_q(const GeneratorParams& gen, const DiscParams& disc,
                  const std::vector<int>& partial, int chosen, const CandidateSet& cand,
                  int t_len, int n_rollouts, std::uint64_t seed, Modality m,
                  const ModalWeights& lambda, double temperature);

struct GenUpdateDiag {
  ModalWeights mean_q{0.0, 0.0, 0.0};
};

/// One policy-gradient ascent step: sample a batch of storylines from the
/// mixture policy, weight each step's log-prob gradient by its Q estimate,
/// scale modality i by lambda_i / T, average over the batch, ascend by alpha.
GenUpdateDiag generator_update(GeneratorParams& gen, const DiscParams& disc,
                               const CandidateSet& cand, const TrainConfig& cfg,
                               std::uint64_t seed);

/// Sample a fake batch matching `real`'s size from the generator and run
/// d_steps of the gap objective per modality. Returns the mean objective
/// (across modalities) measured before the first step.
double discriminator_update(const GeneratorParams& gen, DiscParams& disc,
                            const std::vector<ModalSequence>& real, const CandidateSet& cand,
                            const TrainConfig& cfg, std::uint64_t seed);

struct RoundLog {
  int round = 0;
  std::string phase;  // "g", "d", "eval"
  ModalWeights mean_q{0.0, 0.0, 0.0};
  double d_objective = 0.0;
  double sum_sim = 0.0;
};

struct TrainResult {
  GeneratorParams gen;
  DiscParams disc;
  GeneratorParams pretrained;  // generator state after MLE pretraining
  std::vector<RoundLog> log;
  int rounds_run = 0;
};

/// The full training loop: windowing + normalization, generator MLE
/// pretraining, discriminator cross-entropy pretraining on sampled fakes,
/// then alternating rounds until the budget or the similarity plateau.
TrainResult train(const EventCorpus& corpus, const TrainConfig& cfg);

/// Generate T-length storylines on an unseen vocabulary (possibly disjoint
/// from training). Starts are given, or drawn uniformly when empty.
std::vector<Storyline> apply_policy(const GeneratorParams& gen, const EventCorpus& unseen,
                                    const TrainConfig& cfg, const std::vector<std::string>& starts,
                                    int count, std::uint64_t seed);

/// Serialize round logs as line-delimited JSON records.
std::string train_log_to_jsonl(const std::vector<RoundLog>& log);

// ---------------------------------------------------------------------------
// exact enumeration oracle (small vocabularies)
//
// Enumerates every trajectory of the mixture policy, weighting by its exact
// probability, to compute the quantities the Monte-Carlo machinery estimates.
// ---------------------------------------------------------------------------

/// Exact E[D_m(completion)] over mixture-policy completions of prefix+chosen.
double enumerate_exact_q(const GeneratorParams& gen, const DiscParams& disc,
                         const std::vector<int>& partial, int chosen, const CandidateSet& cand,
                         int t_len, Modality m, const ModalWeights& lambda, double temperature);

/// Exact E[D_m(SL)] of full trajectories from a uniformly drawn start.
double enumerate_objective(const GeneratorParams& gen, const DiscParams& disc,
                           const CandidateSet& cand, int t_len, Modality m,
                           const ModalWeights& lambda, double temperature);

/// Exact expectation of the sampled policy gradient (per parameter), i.e.
/// what generator_update's batch mean converges to as the batch grows.
std::map<std::string, Tensor> enumerate_exact_gradient(GeneratorParams& gen,
                                                       const DiscParams& disc,
                                                       const CandidateSet& cand,
                                                       const TrainConfig& cfg);

}  // namespace milgan
