#include "milgan/eval.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

#include "milgan/kernels.hpp"
#include "milgan/rng.hpp"

namespace milgan {

using nlohmann::json;

// ---------------------------------------------------------------------------
// metric
// ---------------------------------------------------------------------------

double frob_cosine(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("frob_cosine: " + a.shape_str() + " vs " + b.shape_str());
  }
  const auto n = static_cast<std::size_t>(a.size());
  const double na = std::sqrt(kern::dot(a.data(), a.data(), n));
  const double nb = std::sqrt(kern::dot(b.data(), b.data(), n));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return kern::dot(a.data(), b.data(), n) / (na * nb);
}

double sum_sim(const std::vector<Tensor>& reference, const std::vector<Tensor>& generated) {
  double total = 0.0;
  for (const Tensor& a : reference) {
    for (const Tensor& b : generated) total += frob_cosine(a, b);
  }
  return total;
}

double sum_sim(const std::vector<ModalSequence>& reference,
               const std::vector<ModalSequence>& generated, Modality channel) {
  double total = 0.0;
  for (const auto& a : reference) {
    for (const auto& b : generated) total += frob_cosine(a.channel(channel), b.channel(channel));
  }
  return total;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

namespace {

bool first_row_zero(const Tensor& m) {
  for (std::int64_t c = 0; c < m.cols(); ++c) {
    if (m.at(0, c) != 0.0) return false;
  }
  return true;
}

bool mm_consistent(const ModalSequence& s) {
  Tensor expect(s.mm.shape());
  kern::sub(s.img.data(), s.txt.data(), expect.data(), static_cast<std::size_t>(s.img.size()));
  return expect == s.mm;
}

int count_repeats(const std::vector<std::vector<int>>& node_lists) {
  int violations = 0;
  for (const auto& nodes : node_lists) {
    std::set<int> seen;
    for (int id : nodes) {
      if (!seen.insert(id).second) ++violations;
    }
  }
  return violations;
}

}  // namespace

EvalReport make_eval_report(const std::vector<ModalSequence>& reference,
                            const std::vector<ModalSequence>& generated, Modality channel,
                            const std::vector<std::vector<int>>* ref_nodes,
                            const std::vector<std::vector<int>>* gen_nodes,
                            std::map<std::string, std::string> config_echo) {
  EvalReport report;
  report.channel = channel;
  report.ref_count = static_cast<int>(reference.size());
  report.gen_count = static_cast<int>(generated.size());
  report.config_echo = std::move(config_echo);

  auto norm_sq = [](const Tensor& t) {
    return kern::dot(t.data(), t.data(), static_cast<std::size_t>(t.size()));
  };
  for (std::size_t i = 0; i < reference.size(); ++i) {
    for (std::size_t g = 0; g < generated.size(); ++g) {
      const Tensor& a = reference[i].channel(channel);
      const Tensor& b = generated[g].channel(channel);
      if (norm_sq(a) == 0.0 || norm_sq(b) == 0.0) ++report.zero_norm_pairs;
      const double v = frob_cosine(a, b);
      report.contributions.push_back({static_cast<int>(i), static_cast<int>(g), v});
      report.total += v;
    }
  }

  for (const auto* side : {&reference, &generated}) {
    for (const auto& s : *side) {
      if (!first_row_zero(s.channel(channel))) ++report.nonzero_first_rows;
      if (!mm_consistent(s)) ++report.mm_mismatches;
    }
  }
  if (ref_nodes) report.repeat_violations += count_repeats(*ref_nodes);
  if (gen_nodes) report.repeat_violations += count_repeats(*gen_nodes);
  return report;
}

std::string report_to_json(const EvalReport& report) {
  json doc;
  doc["channel"] = to_string(report.channel);
  doc["sum_sim"] = report.total;
  doc["ref_count"] = report.ref_count;
  doc["gen_count"] = report.gen_count;
  json contribs = json::array();
  for (const auto& c : report.contributions) {
    contribs.push_back({{"ref", c.ref}, {"gen", c.gen}, {"value", c.value}});
  }
  doc["contributions"] = contribs;
  doc["audit"] = {{"repeat_violations", report.repeat_violations},
                  {"nonzero_first_rows", report.nonzero_first_rows},
                  {"mm_mismatches", report.mm_mismatches},
                  {"zero_norm_pairs", report.zero_norm_pairs}};
  doc["config"] = report.config_echo;
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// baselines
// ---------------------------------------------------------------------------

std::vector<Storyline> baseline_random(const CandidateSet& cand, const std::vector<int>& starts,
                                       int t_len, std::uint64_t seed) {
  if (t_len > cand.count()) throw VocabExhausted("baseline_random: length exceeds vocabulary");
  std::vector<Storyline> out;
  out.reserve(starts.size());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    Rng rng(derive_seed(seed, {0xBA5E, static_cast<std::uint64_t>(i)}));
    std::vector<std::uint8_t> visited(static_cast<std::size_t>(cand.count()), 0);
    Storyline sl;
    sl.nodes.push_back(starts[i]);
    visited[static_cast<std::size_t>(starts[i])] = 1;
    while (static_cast<int>(sl.nodes.size()) < t_len) {
      std::vector<int> open;
      for (int e = 0; e < cand.count(); ++e) {
        if (!visited[static_cast<std::size_t>(e)]) open.push_back(e);
      }
      const int pick = open[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(open.size())))];
      sl.nodes.push_back(pick);
      visited[static_cast<std::size_t>(pick)] = 1;
    }
    out.push_back(std::move(sl));
  }
  return out;
}

GeneratorParams baseline_pg_similarity(const EventCorpus& corpus, const TrainConfig& cfg) {
  cfg.validate();
  EventCorpus local = corpus;
  substitute_missing_image_vecs(local);

  std::vector<Storyline> windows;
  for (const auto& sl : local.storylines) {
    for (auto& w : slice_windows(sl, cfg.t_len)) windows.push_back(std::move(w));
  }
  if (windows.empty()) throw DataError("baseline_pg_similarity: no training windows");
  const CandidateSet cand = make_candidates(local);
  std::vector<Tensor> demo_txt;
  demo_txt.reserve(windows.size());
  for (const auto& w : windows) demo_txt.push_back(to_modal_sequence(cand, w.nodes, true).txt);

  GeneratorParams gen = init_generator(local.k, cfg.hidden, derive_seed(cfg.seed, {0x11}));
  mle_pretrain(gen, windows, cand, cfg.pretrain_g_epochs, cfg.pretrain_rate,
               derive_seed(cfg.seed, {0x12}));

  const ModalWeights text_only{1.0, 0.0, 0.0};
  for (int round = 0; round < cfg.rounds; ++round) {
    gen.store.zero_grads();
    Rng start_rng(derive_seed(cfg.seed, {0x99, static_cast<std::uint64_t>(round)}));
    for (int b = 0; b < cfg.g_batch; ++b) {
      const int start = start_rng.uniform_int(cand.count());
      const auto nodes = sample_storyline(
          gen, start, cand, cfg.t_len,
          derive_seed(cfg.seed, {0x9A, static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(b)}),
          text_only, cfg.temperature);

      const Tensor gen_txt = to_modal_sequence(cand, nodes, true).txt;
      double reward = -1.0;
      for (const Tensor& demo : demo_txt) reward = std::max(reward, frob_cosine(gen_txt, demo));

      const std::vector<double> weights(nodes.size() - 1, reward);
      weighted_logprob_backward(gen, nodes, cand, Modality::txt, weights,
                                1.0 / (static_cast<double>(cfg.t_len) * static_cast<double>(cfg.g_batch)));
    }
    sgd_step(gen.store, cfg.alpha, Direction::ascend);
  }
  return gen;
}

}  // namespace milgan
