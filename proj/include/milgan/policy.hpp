#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "milgan/modality.hpp"
#include "milgan/seqdata.hpp"
#include "milgan/tensor.hpp"

namespace milgan {

/// Per-modality recurrent policy. The three channels share one architecture
/// (single-layer LSTM, input k -> hidden h, projection h -> k) with
/// independent weights, stored under "txt."/"img."/"mm." prefixes.
struct GeneratorParams {
  std::int64_t k = 0;
  std::int64_t h = 0;
  ParamStore store;

  std::string param_name(Modality m, const char* field) const {
    return std::string(to_string(m)) + "." + field;
  }
};

GeneratorParams init_generator(std::int64_t k, std::int64_t h, std::uint64_t seed);

void save_generator(const GeneratorParams& g, const std::string& path);
GeneratorParams load_generator(const std::string& path);

/// Rolling policy state: per-modality hidden/cell vectors plus the visited
/// set. position counts emitted entities minus one (the start counts).
struct PolicyState {
  std::array<Tensor, 3> hidden;
  std::array<Tensor, 3> cell;
  std::vector<std::uint8_t> visited;
  int position = 0;

  int visited_count() const;
};

/// Fresh state with zero hidden/cell and nothing visited.
PolicyState blank_state(const GeneratorParams& g, int n_candidates);

/// One gated recurrent update per modality; inputs are the previous node's
/// per-modality vectors. Does not touch the visited set.
void step(const GeneratorParams& g, PolicyState& state, const std::array<Tensor, 3>& inputs);

/// Feed entity `id`'s vectors and mark it visited.
void step_entity(const GeneratorParams& g, PolicyState& state, const CandidateSet& cand, int id);

/// State after consuming `prefix` (first entity included).
PolicyState replay_prefix(const GeneratorParams& g, const CandidateSet& cand,
                          const std::vector<int>& prefix);

/// Distribution over candidates for one modality. Visited entities get
/// probability exactly 0. Logits are scaled projections of the hidden state;
/// temperature divides them (1 = as-is).
Tensor action_dist(const GeneratorParams& g, const PolicyState& state, const CandidateSet& cand,
                   Modality m, double temperature = 1.0);

/// Lambda-weighted mixture of the per-modality distributions. temperature 0
/// selects argmax mode: the mixture is computed at temperature 1 and all
/// mass goes to its argmax (lowest index wins ties), making sampling
/// deterministic.
Tensor mixture_dist(const GeneratorParams& g, const PolicyState& state, const CandidateSet& cand,
                    const ModalWeights& lambda, double temperature = 1.0);

/// Sample a length-T no-repeat storyline starting at `start`.
std::vector<int> sample_storyline(const GeneratorParams& g, int start, const CandidateSet& cand,
                                  int t_len, std::uint64_t seed, const ModalWeights& lambda,
                                  double temperature = 1.0);

/// n independent completions of a partial storyline to length T. Rollout r
/// uses the sub-seed derived from (seed, r), so the set is reproducible and
/// order-independent.
std::vector<std::vector<int>> rollout_complete(const GeneratorParams& g,
                                               const std::vector<int>& partial,
                                               const CandidateSet& cand, int t_len, int n,
                                               std::uint64_t seed, const ModalWeights& lambda,
                                               double temperature = 1.0);

/// Linear schedule for the scheduled-sampling probability over epochs.
struct SampleSchedule {
  double eps_start = 0.0;
  double eps_end = 0.0;

  double at(int epoch, int total_epochs) const;
  static SampleSchedule constant(double eps) { return {eps, eps}; }
};

struct PretrainLog {
  std::vector<double> epoch_loss;  // mean per-sequence NLL summed over modalities
};

/// Teacher-forced next-entity cross-entropy, per modality, online SGD.
void mle_pretrain(GeneratorParams& g, const std::vector<Storyline>& windows,
                  const CandidateSet& cand, int epochs, double rate, std::uint64_t seed,
                  PretrainLog* log = nullptr);

/// Like mle_pretrain, but each input entity is (with probability eps(epoch))
/// the modality's own sampled prediction instead of ground truth. eps == 0
/// draws nothing from the RNG, so a zero schedule is bit-identical to
/// mle_pretrain under the same seed.
void scheduled_sampling_pretrain(GeneratorParams& g, const std::vector<Storyline>& windows,
                                 const CandidateSet& cand, int epochs, double rate,
                                 const SampleSchedule& schedule, std::uint64_t seed,
                                 PretrainLog* log = nullptr);

/// Per-step log pi(s_t | prefix) for one modality along a fixed storyline,
/// plus the weighted gradient accumulated into the store:
///   grad += scale * sum_t weights[t-1] * d log pi_t / d theta_m
/// weights has length T-1 (one entry per action step). Returns the log
/// probabilities. Throws InvalidTrajectory when the storyline revisits an
/// entity.
std::vector<double> weighted_logprob_backward(GeneratorParams& g, const std::vector<int>& nodes,
                                              const CandidateSet& cand, Modality m,
                                              const std::vector<double>& weights, double scale);

/// Convenience: per-step log-probs and per-step full gradients (one gradient
/// map per action step). Heavier than the weighted form; used by tests and
/// the enumeration oracle.
struct LogprobGrads {
  std::vector<double> logp;
  std::vector<std::map<std::string, Tensor>> step_grads;
};
LogprobGrads logprob_grads(GeneratorParams& g, const std::vector<int>& nodes,
                           const CandidateSet& cand, Modality m);

}  // namespace milgan
