#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "milgan/seqdata.hpp"
#include "milgan/tensor.hpp"

namespace milgan {

/// Factored conditional word model: next-word prediction conditioned on an
/// image feature vector through a diagonal factor-space map. Trainables are
/// U (factor x vocab), sigma (factor x image-dim), V (factor x word-dim) and
/// the context position weights; the base word embedding table is frozen.
struct MMParams {
  std::int64_t j = 0;  // factor rank
  std::int64_t v = 0;  // vocabulary size
  std::int64_t k = 0;  // word embedding dimension
  std::int64_t d = 0;  // raw image feature dimension
  int ctx_window = 3;

  ParamStore store;   // U [j,v], sigma [j,d], V [j,k], ctx_logits [ctx_window]
  Tensor word_embed;  // [v,k], frozen

  /// Simplex weights over context positions (position 0 = most recent word).
  Tensor ctx_weights() const;
};

/// One training item: a word-id description plus the image it is paired with.
struct MMCorpusItem {
  std::vector<int> description;  // length >= 2, ids < v
  Tensor image_feat;             // d
};

MMParams init_mm_params(std::int64_t j, Tensor word_embed, std::int64_t d, std::uint64_t seed);

/// U^T . diag(sigma . image) . V, the image-conditioned word matrix.
Tensor cond_word_matrix(const MMParams& p, const Tensor& image);

/// Weighted average of the base embeddings of the last <= ctx_window context
/// words; weights renormalized over the positions actually present.
Tensor context_vector(const MMParams& p, const std::vector<int>& context);

/// Probability vector over the vocabulary for the next word.
Tensor predict_next(const MMParams& p, const std::vector<int>& context, const Tensor& image);

/// Mean next-word negative log-likelihood over all (prefix, next) pairs.
/// With zero_image, images are replaced by zeros (the unconditioned model).
double mm_nll(const MMParams& p, const std::vector<MMCorpusItem>& items, bool zero_image = false);

/// Sum of pair NLLs over all items with parameter gradients accumulated
/// (grads are zeroed first). No update; the verification surface for
/// finite-difference checks.
double mm_loss_and_grads(MMParams& p, const std::vector<MMCorpusItem>& items);

struct MMTrainLog {
  std::vector<double> epoch_nll;
};

/// SGD over all (prefix, next-word) pairs, seed-shuffled each epoch.
MMParams train_mm(std::vector<MMCorpusItem> items, MMParams p, int epochs, double rate,
                  std::uint64_t seed, MMTrainLog* log = nullptr);

/// The image's induced point in word space: V^T . (sigma . image) / j.
Tensor embed_image(const MMParams& p, const Tensor& image);

void save_mm(const MMParams& p, const std::string& path);
MMParams load_mm(const std::string& path);

/// Derive training items from storylines: each transition becomes an item
/// whose context is the predecessor entity and whose image is the
/// predecessor's raw feature vector. Entity ids double as word ids.
std::vector<MMCorpusItem> mm_items_from_corpus(const EventCorpus& corpus);

/// Word embedding table for a corpus: row i is entity i's text vector.
Tensor corpus_word_table(const EventCorpus& corpus);

/// Project every entity's raw image features through the trained model,
/// populating image_vec corpus-wide.
void project_corpus_images(const MMParams& p, EventCorpus& corpus);

}  // namespace milgan
