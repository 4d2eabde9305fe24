#include "milgan/seqdata.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "milgan/io.hpp"
#include "milgan/kernels.hpp"
#include "milgan/rng.hpp"

namespace milgan {

using nlohmann::json;

int EventCorpus::entity_id(const std::string& name) const {
  auto it = name_index.find(name);
  if (it == name_index.end()) throw DataError("unknown entity '" + name + "' in event '" + event_id + "'");
  return it->second;
}

const std::string& PlantedPolicy::next(const std::string& name) const {
  auto it = successor.find(name);
  if (it == successor.end()) throw DataError("planted policy: no successor for '" + name + "'");
  return it->second;
}

std::vector<std::string> PlantedPolicy::chain(const std::string& start, int len) const {
  std::vector<std::string> out{start};
  while (static_cast<int>(out.size()) < len) out.push_back(next(out.back()));
  return out;
}

// ---------------------------------------------------------------------------
// dataset I/O
// ---------------------------------------------------------------------------

namespace {

Tensor vec_from_json(const json& arr, const char* field, int lineno) {
  if (!arr.is_array() || arr.empty()) {
    throw DataError("line " + std::to_string(lineno) + ": '" + std::string(field) +
                    "' must be a non-empty array");
  }
  std::vector<double> v;
  v.reserve(arr.size());
  for (const auto& x : arr) {
    if (!x.is_number()) {
      throw DataError("line " + std::to_string(lineno) + ": non-numeric entry in '" + field + "'");
    }
    v.push_back(x.get<double>());
  }
  return Tensor::vec(std::move(v));
}

json vec_to_json(const Tensor& t) {
  json arr = json::array();
  for (std::int64_t i = 0; i < t.size(); ++i) arr.push_back(t.at(i));
  return arr;
}

const json& require_field(const json& rec, const char* field, int lineno) {
  auto it = rec.find(field);
  if (it == rec.end()) {
    throw DataError("line " + std::to_string(lineno) + ": missing field '" + std::string(field) + "'");
  }
  return *it;
}

}  // namespace

std::vector<EventCorpus> load_dataset(const std::string& path, CorpusRole role) {
  std::istringstream is(read_file(path));

  std::vector<EventCorpus> corpora;
  std::unordered_map<std::string, std::size_t> event_pos;
  std::int64_t k = 0;
  std::int64_t d = 0;

  auto corpus_for = [&](const std::string& event_id) -> EventCorpus& {
    auto it = event_pos.find(event_id);
    if (it != event_pos.end()) return corpora[it->second];
    event_pos.emplace(event_id, corpora.size());
    EventCorpus c;
    c.event_id = event_id;
    c.role = role;
    corpora.push_back(std::move(c));
    return corpora.back();
  };

  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("line " + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    const std::string kind = require_field(rec, "kind", lineno).get<std::string>();
    const std::string event_id = require_field(rec, "event", lineno).get<std::string>();
    EventCorpus& corpus = corpus_for(event_id);

    if (kind == "entity") {
      EntityNode node;
      node.name = require_field(rec, "name", lineno).get<std::string>();
      if (node.name.empty()) throw DataError("line " + std::to_string(lineno) + ": empty entity name");
      node.text_vec = vec_from_json(require_field(rec, "text_vec", lineno), "text_vec", lineno);
      node.image_feat = vec_from_json(require_field(rec, "image_feat", lineno), "image_feat", lineno);
      if (rec.contains("image_vec")) {
        node.image_vec = vec_from_json(rec["image_vec"], "image_vec", lineno);
      }
      if (k == 0) {
        k = node.text_vec.size();
        d = node.image_feat.size();
      }
      if (node.text_vec.size() != k) {
        throw DataError("line " + std::to_string(lineno) + ": text_vec dimension " +
                        std::to_string(node.text_vec.size()) + " != corpus k " + std::to_string(k));
      }
      if (node.image_feat.size() != d) {
        throw DataError("line " + std::to_string(lineno) + ": image_feat dimension " +
                        std::to_string(node.image_feat.size()) + " != corpus d " + std::to_string(d));
      }
      if (node.image_vec && node.image_vec->size() != k) {
        throw DataError("line " + std::to_string(lineno) + ": image_vec dimension " +
                        std::to_string(node.image_vec->size()) + " != corpus k " + std::to_string(k));
      }
      if (corpus.name_index.count(node.name)) {
        throw DataError("line " + std::to_string(lineno) + ": duplicate entity '" + node.name +
                        "' in event '" + event_id + "'");
      }
      corpus.name_index.emplace(node.name, static_cast<int>(corpus.vocab.size()));
      corpus.vocab.push_back(std::move(node));
      corpus.k = k;
      corpus.d = d;
    } else if (kind == "storyline") {
      const json& nodes = require_field(rec, "nodes", lineno);
      if (!nodes.is_array() || nodes.size() < 2) {
        throw DataError("line " + std::to_string(lineno) + ": storyline needs at least 2 nodes");
      }
      Storyline sl;
      sl.event_id = event_id;
      std::set<std::string> seen;
      for (const auto& n : nodes) {
        const std::string name = n.get<std::string>();
        auto it = corpus.name_index.find(name);
        if (it == corpus.name_index.end()) {
          throw DataError("line " + std::to_string(lineno) + ": storyline references undeclared entity '" +
                          name + "'");
        }
        if (!seen.insert(name).second) {
          throw DataError("line " + std::to_string(lineno) + ": entity '" + name +
                          "' repeats within a storyline");
        }
        sl.nodes.push_back(it->second);
      }
      corpus.storylines.push_back(std::move(sl));
    } else {
      throw DataError("line " + std::to_string(lineno) + ": unknown record kind '" + kind + "'");
    }
  }

  // Different events share no entities.
  std::unordered_map<std::string, std::string> owner;
  for (const auto& c : corpora) {
    for (const auto& node : c.vocab) {
      auto [it, inserted] = owner.emplace(node.name, c.event_id);
      if (!inserted && it->second != c.event_id) {
        throw DataError("entity '" + node.name + "' appears in events '" + it->second + "' and '" +
                        c.event_id + "'");
      }
    }
  }
  return corpora;
}

std::string dataset_to_jsonl(const std::vector<EventCorpus>& corpora) {
  std::ostringstream os;
  for (const auto& c : corpora) {
    for (const auto& node : c.vocab) {
      json rec;
      rec["kind"] = "entity";
      rec["event"] = c.event_id;
      rec["name"] = node.name;
      rec["text_vec"] = vec_to_json(node.text_vec);
      rec["image_feat"] = vec_to_json(node.image_feat);
      if (node.image_vec) rec["image_vec"] = vec_to_json(*node.image_vec);
      os << rec.dump() << "\n";
    }
    for (const auto& sl : c.storylines) {
      json rec;
      rec["kind"] = "storyline";
      rec["event"] = c.event_id;
      json nodes = json::array();
      for (int id : sl.nodes) nodes.push_back(c.vocab[static_cast<std::size_t>(id)].name);
      rec["nodes"] = nodes;
      os << rec.dump() << "\n";
    }
  }
  return os.str();
}

void save_dataset(const std::vector<EventCorpus>& corpora, const std::string& path) {
  write_file(path, dataset_to_jsonl(corpora));
}

// ---------------------------------------------------------------------------
// sequence transforms
// ---------------------------------------------------------------------------

namespace {

Tensor subtract_first_row(const Tensor& m) {
  Tensor out(m.shape());
  const std::int64_t k = m.cols();
  for (std::int64_t r = 0; r < m.rows(); ++r) {
    kern::sub(m.data() + r * k, m.data(), out.data() + r * k, static_cast<std::size_t>(k));
  }
  return out;
}

}  // namespace

ModalSequence normalize_sequence(const ModalSequence& s) {
  return ModalSequence{subtract_first_row(s.txt), subtract_first_row(s.img), subtract_first_row(s.mm)};
}

std::vector<Storyline> slice_windows(const Storyline& s, int window) {
  if (window < 2) throw DataError("slice_windows: window must be >= 2");
  std::vector<Storyline> out;
  const int t_len = static_cast<int>(s.nodes.size());
  for (int start = 0; start + window <= t_len; ++start) {
    Storyline w;
    w.event_id = s.event_id;
    w.nodes.assign(s.nodes.begin() + start, s.nodes.begin() + start + window);
    out.push_back(std::move(w));
  }
  return out;
}

ModalSequence to_modal_sequence(const EventCorpus& corpus, const Storyline& s, bool normalize) {
  const std::int64_t t_len = static_cast<std::int64_t>(s.nodes.size());
  const std::int64_t k = corpus.k;
  ModalSequence seq{Tensor({t_len, k}), Tensor({t_len, k}), Tensor({t_len, k})};
  for (std::int64_t t = 0; t < t_len; ++t) {
    const EntityNode& node = corpus.node(s.nodes[static_cast<std::size_t>(t)]);
    if (!node.image_vec) {
      throw DataError("entity '" + node.name + "' has no projected image vector");
    }
    const Tensor& txt = node.text_vec;
    const Tensor& img = *node.image_vec;
    for (std::int64_t c = 0; c < k; ++c) {
      seq.txt.at(t, c) = txt.at(c);
      seq.img.at(t, c) = img.at(c);
    }
    kern::sub(seq.img.data() + t * k, seq.txt.data() + t * k, seq.mm.data() + t * k,
              static_cast<std::size_t>(k));
  }
  return normalize ? normalize_sequence(seq) : seq;
}

ModalSequence to_modal_sequence(const CandidateSet& cand, const std::vector<int>& nodes, bool normalize) {
  const std::int64_t t_len = static_cast<std::int64_t>(nodes.size());
  const std::int64_t k = cand.k();
  ModalSequence seq{Tensor({t_len, k}), Tensor({t_len, k}), Tensor({t_len, k})};
  for (std::int64_t t = 0; t < t_len; ++t) {
    const auto id = static_cast<std::int64_t>(nodes[static_cast<std::size_t>(t)]);
    for (std::int64_t c = 0; c < k; ++c) {
      seq.txt.at(t, c) = cand.txt.at(id, c);
      seq.img.at(t, c) = cand.img.at(id, c);
      seq.mm.at(t, c) = cand.mm.at(id, c);
    }
  }
  return normalize ? normalize_sequence(seq) : seq;
}

CandidateSet make_candidates(const EventCorpus& corpus, int* fallback_count) {
  const auto n = static_cast<std::int64_t>(corpus.vocab.size());
  CandidateSet cand;
  cand.txt = Tensor({n, corpus.k});
  cand.img = Tensor({n, corpus.k});
  cand.mm = Tensor({n, corpus.k});
  int fallbacks = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const EntityNode& node = corpus.vocab[static_cast<std::size_t>(i)];
    cand.names.push_back(node.name);
    const Tensor* img = node.image_vec ? &*node.image_vec : nullptr;
    if (!img) {
      ++fallbacks;
      img = &node.text_vec;
    }
    for (std::int64_t c = 0; c < corpus.k; ++c) {
      cand.txt.at(i, c) = node.text_vec.at(c);
      cand.img.at(i, c) = img->at(c);
    }
  }
  kern::sub(cand.img.data(), cand.txt.data(), cand.mm.data(),
            static_cast<std::size_t>(cand.img.size()));
  if (fallback_count) *fallback_count = fallbacks;
  return cand;
}

int substitute_missing_image_vecs(EventCorpus& corpus) {
  int patched = 0;
  for (auto& node : corpus.vocab) {
    if (!node.image_vec) {
      node.image_vec = node.text_vec;
      ++patched;
    }
  }
  return patched;
}

// ---------------------------------------------------------------------------
// synthetic planted-policy corpus
// ---------------------------------------------------------------------------

namespace {

// Random rotation via Gram-Schmidt on a seeded Gaussian matrix.
Tensor random_rotation(int k, Rng& rng) {
  Tensor q({k, k});
  for (int col = 0; col < k; ++col) {
    std::vector<double> v(static_cast<std::size_t>(k));
    for (auto& x : v) x = rng.gaussian();
    for (int prev = 0; prev < col; ++prev) {
      double proj = 0.0;
      for (int r = 0; r < k; ++r) proj += v[static_cast<std::size_t>(r)] * q.at(r, prev);
      for (int r = 0; r < k; ++r) v[static_cast<std::size_t>(r)] -= proj * q.at(r, prev);
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-9) norm = 1.0;  // astronomically unlikely with Gaussian draws
    for (int r = 0; r < k; ++r) q.at(r, col) = v[static_cast<std::size_t>(r)] / norm;
  }
  return q;
}

Tensor apply_matrix(const Tensor& m, const Tensor& v) {
  Tensor out({m.rows()});
  for (std::int64_t r = 0; r < m.rows(); ++r) {
    out.at(r) = kern::dot(m.data() + r * m.cols(), v.data(), static_cast<std::size_t>(m.cols()));
  }
  return out;
}

Tensor unit(Tensor v) {
  double norm = std::sqrt(kern::dot(v.data(), v.data(), static_cast<std::size_t>(v.size())));
  if (norm < 1e-12) norm = 1.0;
  for (std::int64_t i = 0; i < v.size(); ++i) v.at(i) /= norm;
  return v;
}

// Latent geometry: every chain lives on a planted circle traced inside a
// fixed random plane, and the successor map is rotation by one angular step
// along it. Train entities sit at the step multiples; test entities sit at a
// seeded phase offset between them, so a policy that learns the stepping rule
// (rather than the train identities) carries over to the disjoint test
// vocabulary. A fraction of entities get heavy text noise while their image
// vectors stay clean; the image channel then disambiguates what the text
// channel blurs.
constexpr double kCleanNoise = 0.05;
constexpr double kAmbiguousNoise = 0.8;
constexpr double kImageNoise = 0.05;
constexpr double kAmbiguousFraction = 0.2;

// unit vector at angle phi inside the plane spanned by rotation columns 0, 1
Tensor circle_point(const Tensor& basis, double phi, int k) {
  Tensor out({k});
  for (int r = 0; r < k; ++r) {
    out.at(r) = std::cos(phi) * basis.at(r, 0) + std::sin(phi) * basis.at(r, 1);
  }
  return out;
}

EventCorpus build_event(const std::string& event_id, const std::string& prefix, CorpusRole role,
                        int n_entities, int k, int d, int t_len, int n_storylines, double phase,
                        const Tensor& basis_txt, const Tensor& basis_img, const Tensor& lift,
                        Rng& rng) {
  EventCorpus corpus;
  corpus.event_id = event_id;
  corpus.role = role;
  corpus.k = k;
  corpus.d = d;

  const double step = 2.0 * M_PI / static_cast<double>(n_entities);
  for (int m = 0; m < n_entities; ++m) {
    const bool ambiguous = rng.uniform() < kAmbiguousFraction;
    const double text_noise = ambiguous ? kAmbiguousNoise : kCleanNoise;
    const double phi = phase + step * static_cast<double>(m);

    EntityNode node;
    {
      std::ostringstream name;
      name << prefix << (m < 10 ? "0" : "") << m;
      node.name = name.str();
    }
    Tensor txt = circle_point(basis_txt, phi, k);
    Tensor noise_t = Tensor::gaussian({k}, rng, text_noise);
    kern::add(txt.data(), noise_t.data(), txt.data(), static_cast<std::size_t>(k));
    node.text_vec = unit(std::move(txt));

    Tensor img = circle_point(basis_img, phi, k);
    Tensor noise_i = Tensor::gaussian({k}, rng, kImageNoise);
    kern::add(img.data(), noise_i.data(), img.data(), static_cast<std::size_t>(k));
    node.image_vec = unit(std::move(img));

    Tensor feat = apply_matrix(lift, *node.image_vec);
    Tensor noise_f = Tensor::gaussian({d}, rng, 0.01);
    kern::add(feat.data(), noise_f.data(), feat.data(), static_cast<std::size_t>(d));
    node.image_feat = std::move(feat);

    corpus.name_index.emplace(node.name, m);
    corpus.vocab.push_back(std::move(node));
  }

  // wrapped windows: all chain positions are valid starts
  for (int s = 0; s < n_storylines; ++s) {
    const int start = rng.uniform_int(n_entities);
    Storyline sl;
    sl.event_id = event_id;
    for (int t = 0; t < t_len; ++t) sl.nodes.push_back((start + t) % n_entities);
    corpus.storylines.push_back(std::move(sl));
  }
  return corpus;
}

}  // namespace

SynthCorpus synth_corpus(int n_entities, int k, int d, int t_len, int n_storylines,
                         std::uint64_t seed) {
  if (t_len < 2) throw DataError("synth_corpus: storyline length must be >= 2");
  if (k < 2) throw DataError("synth_corpus: embedding dimension must be >= 2");
  if (n_entities < t_len) {
    throw DataError("synth_corpus: infeasible: " + std::to_string(n_entities) + " entities < length " +
                    std::to_string(t_len));
  }

  Rng structure_rng(derive_seed(seed, {0x57AA}));
  const Tensor basis_txt = random_rotation(k, structure_rng);
  const Tensor basis_img = random_rotation(k, structure_rng);
  Tensor lift = Tensor::gaussian({d, k}, structure_rng, 1.0 / std::sqrt(static_cast<double>(k)));

  // test entities interleave between the train positions
  const double step = 2.0 * M_PI / static_cast<double>(n_entities);
  const double test_phase = step * structure_rng.uniform(0.3, 0.7);

  Rng train_rng(derive_seed(seed, {0x7121}));
  Rng test_rng(derive_seed(seed, {0x7E57}));

  SynthCorpus out;
  out.train = build_event("synth-train", "e", CorpusRole::train, n_entities, k, d, t_len,
                          n_storylines, 0.0, basis_txt, basis_img, lift, train_rng);
  out.test = build_event("synth-test", "t", CorpusRole::test, n_entities, k, d, t_len,
                         n_storylines, test_phase, basis_txt, basis_img, lift, test_rng);

  for (const EventCorpus* c : {&out.train, &out.test}) {
    const std::size_t n = c->vocab.size();
    for (std::size_t m = 0; m < n; ++m) {
      out.planted.successor.emplace(c->vocab[m].name, c->vocab[(m + 1) % n].name);
    }
  }
  return out;
}

}  // namespace milgan
