#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "milgan/modality.hpp"
#include "milgan/seqdata.hpp"
#include "milgan/tensor.hpp"

namespace milgan {

/// Per-modality convolutional sequence critic: filter banks over the channel
/// matrix, max-over-time pooling, affine head, logistic output. The head
/// logit is clamped to +/-30 so the score stays strictly inside (0, 1).
struct DiscParams {
  std::int64_t k = 0;
  int maps = 16;
  std::vector<int> widths{2, 3};
  ParamStore store;  // per modality: "txt.conv2" [maps,2,k], "txt.conv3", "txt.head_w", "txt.head_b"

  int feature_count() const { return maps * static_cast<int>(widths.size()); }
  int max_width() const;
  std::string param_name(Modality m, const std::string& field) const {
    return std::string(to_string(m)) + "." + field;
  }
};

DiscParams init_disc(std::int64_t k, int maps, std::uint64_t seed);

void save_disc(const DiscParams& p, const std::string& path);
DiscParams load_disc(const std::string& path);

/// Probability-shaped score of one channel sequence (T x k), in (0, 1).
double score(const DiscParams& p, const Tensor& channel_seq, Modality m);

/// score plus d(score-logit)/d(params) * dz accumulated into the store.
double score_with_grad(DiscParams& p, const Tensor& channel_seq, Modality m, double dz);

struct DiscTrainLog {
  std::vector<double> epoch_loss;
};

/// Binary cross-entropy (real=1, fake=0), one full-batch gradient step per
/// epoch. Deterministic; the seed parameter is kept for interface parity.
void pretrain_xent(DiscParams& p, const std::vector<Tensor>& real, const std::vector<Tensor>& fake,
                   Modality m, int epochs, double rate, std::uint64_t seed,
                   DiscTrainLog* log = nullptr);
void pretrain_xent(DiscParams& p, const std::vector<ModalSequence>& real,
                   const std::vector<ModalSequence>& fake, int epochs, double rate,
                   std::uint64_t seed, DiscTrainLog* log = nullptr);

/// One step on the no-log critic objective
///   -mean(D(real)) - mean(1 - D(fake)),
/// descending, which widens the real-fake score gap. Returns the objective
/// value before the step.
double train_step_gap(DiscParams& p, const std::vector<Tensor>& real,
                      const std::vector<Tensor>& fake, Modality m, double rate);

double mean_score(const DiscParams& p, const std::vector<Tensor>& batch, Modality m);

}  // namespace milgan
