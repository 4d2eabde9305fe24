#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "milgan/modality.hpp"
#include "milgan/tensor.hpp"

namespace milgan {

/// One storyline node: an entity with its text embedding, its raw image
/// feature vector, and (once projected) its image vector in text space.
struct EntityNode {
  std::string name;
  Tensor text_vec;                  // k
  Tensor image_feat;                // d (raw features, input to projection)
  std::optional<Tensor> image_vec;  // k, absent until projection runs
};

/// Ordered chain of entities within one event. Nodes are indices into the
/// owning corpus vocabulary; no entity appears twice.
struct Storyline {
  std::string event_id;
  std::vector<int> nodes;

  std::size_t length() const { return nodes.size(); }
};

/// A storyline rendered as three aligned T x k channel matrices, mm being
/// exactly img - txt row by row.
struct ModalSequence {
  Tensor txt;
  Tensor img;
  Tensor mm;

  const Tensor& channel(Modality m) const {
    switch (m) {
      case Modality::txt: return txt;
      case Modality::img: return img;
      case Modality::mm: return mm;
    }
    return txt;
  }
};

enum class CorpusRole { train, test };

struct EventCorpus {
  std::string event_id;
  std::vector<EntityNode> vocab;
  std::unordered_map<std::string, int> name_index;
  std::vector<Storyline> storylines;
  CorpusRole role = CorpusRole::train;
  std::int64_t k = 0;  // embedding dimension
  std::int64_t d = 0;  // raw image feature dimension

  int entity_id(const std::string& name) const;
  const EntityNode& node(int id) const { return vocab[static_cast<std::size_t>(id)]; }
};

/// Candidate vocabulary against which the policy scores next entities.
/// Channel matrices are n x k with mm = img - txt.
struct CandidateSet {
  std::vector<std::string> names;
  Tensor txt;
  Tensor img;
  Tensor mm;

  int count() const { return static_cast<int>(names.size()); }
  std::int64_t k() const { return txt.cols(); }
  const Tensor& channel(Modality m) const {
    switch (m) {
      case Modality::txt: return txt;
      case Modality::img: return img;
      case Modality::mm: return mm;
    }
    return txt;
  }
};

/// Ground-truth successor function of a synthetic corpus: the oracle the
/// imitation tests compare against.
struct PlantedPolicy {
  std::unordered_map<std::string, std::string> successor;

  bool has_successor(const std::string& name) const { return successor.count(name) != 0; }
  const std::string& next(const std::string& name) const;
  /// Follow the successor chain from `start` for `len` nodes (start included).
  std::vector<std::string> chain(const std::string& start, int len) const;
};

// ---------------------------------------------------------------------------
// operations
// ---------------------------------------------------------------------------

/// Parse a line-delimited JSON dataset. Entities must precede the storylines
/// that reference them; the first entity record fixes k and d corpus-wide.
/// All corpora in one file receive `role`.
std::vector<EventCorpus> load_dataset(const std::string& path, CorpusRole role = CorpusRole::train);

/// Serialize corpora back to the dataset format (one line per record).
std::string dataset_to_jsonl(const std::vector<EventCorpus>& corpora);
void save_dataset(const std::vector<EventCorpus>& corpora, const std::string& path);

/// Subtract each channel's own first row from every row. Idempotent.
ModalSequence normalize_sequence(const ModalSequence& s);

/// Stride-1 contiguous windows of length `window`; empty when T < window.
std::vector<Storyline> slice_windows(const Storyline& s, int window);

/// Render a storyline as channel matrices. Every node needs image_vec;
/// otherwise an unprojected-entity error is raised.
ModalSequence to_modal_sequence(const EventCorpus& corpus, const Storyline& s, bool normalize);
ModalSequence to_modal_sequence(const CandidateSet& cand, const std::vector<int>& nodes, bool normalize);

/// Build the candidate set for a corpus. Entities without image_vec fall
/// back to their text vector (mm row becomes zero); the count of such
/// substitutions is reported through `fallback_count` when non-null.
CandidateSet make_candidates(const EventCorpus& corpus, int* fallback_count = nullptr);

/// Substitute text_vec for missing image_vec corpus-wide. Returns the number
/// of entities patched.
int substitute_missing_image_vecs(EventCorpus& corpus);

struct SynthCorpus {
  EventCorpus train;
  EventCorpus test;
  PlantedPolicy planted;
};

/// Deterministic synthetic corpus with a planted successor chain.
///
/// Entity vectors follow a fixed random rotation: each chain position's
/// latent vector is the rotated previous one, so the successor relation is a
/// (noisy) linear map shared by the train and test vocabularies. A seeded
/// subset of entities gets heavy text noise while their image vectors stay
/// clean, which makes the image channel informative beyond text. Train and
/// test entity names are disjoint.
SynthCorpus synth_corpus(int n_entities, int k, int d, int t_len, int n_storylines,
                         std::uint64_t seed);

}  // namespace milgan
