#pragma once

#include <map>
#include <string>
#include <vector>

#include "milgan/metric.hpp"
#include "milgan/trainer.hpp"

namespace milgan {

struct PairContribution {
  int ref = 0;
  int gen = 0;
  double value = 0.0;
};

/// Similarity report over one channel: the metric, its per-pair breakdown,
/// audit counters for the structural invariants, and a config echo.
struct EvalReport {
  Modality channel = Modality::txt;
  double total = 0.0;  // equals the sum of contributions
  std::vector<PairContribution> contributions;
  int ref_count = 0;
  int gen_count = 0;
  int repeat_violations = 0;
  int nonzero_first_rows = 0;
  int mm_mismatches = 0;
  int zero_norm_pairs = 0;
  std::map<std::string, std::string> config_echo;
};

/// Build the report from normalized sequences. Node lists, when provided,
/// feed the no-repeat audit.
EvalReport make_eval_report(const std::vector<ModalSequence>& reference,
                            const std::vector<ModalSequence>& generated, Modality channel,
                            const std::vector<std::vector<int>>* ref_nodes,
                            const std::vector<std::vector<int>>* gen_nodes,
                            std::map<std::string, std::string> config_echo);

std::string report_to_json(const EvalReport& report);

/// Uniform no-repeat storyline sampling from each start.
std::vector<Storyline> baseline_random(const CandidateSet& cand, const std::vector<int>& starts,
                                       int t_len, std::uint64_t seed);

/// REINFORCE with a similarity reward instead of a critic: the terminal
/// reward of a sampled storyline is the best Frobenius cosine between its
/// normalized text channel and any training window. Trains the text modality
/// only; no discriminator anywhere.
GeneratorParams baseline_pg_similarity(const EventCorpus& corpus, const TrainConfig& cfg);

}  // namespace milgan
