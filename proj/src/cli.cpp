#include "milgan/cli.hpp"

#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "milgan/embed_mm.hpp"
#include "milgan/eval.hpp"
#include "milgan/io.hpp"
#include "milgan/kernels.hpp"
#include "milgan/rng.hpp"

namespace milgan {

using nlohmann::json;

namespace {

TrainConfig resolve_config(const std::string& config_path, std::optional<std::uint64_t> seed_flag,
                           std::optional<int> t_flag = std::nullopt) {
  TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_train_config(config_path);
  if (seed_flag) cfg.seed = *seed_flag;
  if (t_flag) cfg.t_len = *t_flag;
  cfg.validate();
  return cfg;
}

void apply_kernel_choice(const std::string& kernels) {
  if (kernels.empty() || kernels == "auto") return;
  if (kernels == "scalar") {
    kern::set_backend(kern::Backend::scalar);
  } else if (kernels == "avx2") {
    if (!kern::set_backend(kern::Backend::avx2)) {
      std::cerr << "note: avx2 kernels unavailable, using scalar\n";
    }
  } else {
    throw CLI::ValidationError("--kernels", "expected auto|scalar|avx2");
  }
}

EventCorpus single_corpus(const std::string& path, CorpusRole role) {
  auto corpora = load_dataset(path, role);
  if (corpora.empty()) throw DataError("dataset has no events: " + path);
  if (corpora.size() > 1) {
    std::cerr << "note: " << path << " holds " << corpora.size() << " events; using '"
              << corpora[0].event_id << "'\n";
  }
  return corpora[0];
}

std::string storylines_to_jsonl(const std::vector<Storyline>& storylines,
                                const std::vector<std::string>& names, std::uint64_t seed) {
  std::ostringstream os;
  for (const auto& sl : storylines) {
    json rec;
    rec["start"] = names[static_cast<std::size_t>(sl.nodes.front())];
    json nodes = json::array();
    for (int id : sl.nodes) nodes.push_back(names[static_cast<std::size_t>(id)]);
    rec["nodes"] = nodes;
    rec["seed"] = seed;
    os << rec.dump() << "\n";
  }
  return os.str();
}

// Either a dataset file (entities + storylines) or a generated-storyline
// file (name lists). Returns the node-name lists; entities, when present,
// are merged into `vocab_sources`.
std::vector<std::vector<std::string>> read_sequences(const std::string& path,
                                                     std::vector<EventCorpus>& vocab_sources) {
  const std::string text = read_file(path);
  std::istringstream is(text);
  std::string line;
  bool dataset_format = false;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json rec = json::parse(line);
    dataset_format = rec.contains("kind");
    break;
  }

  std::vector<std::vector<std::string>> sequences;
  if (dataset_format) {
    auto corpora = load_dataset(path, CorpusRole::train);
    for (const auto& c : corpora) {
      for (const auto& sl : c.storylines) {
        std::vector<std::string> names;
        for (int id : sl.nodes) names.push_back(c.vocab[static_cast<std::size_t>(id)].name);
        sequences.push_back(std::move(names));
      }
      vocab_sources.push_back(c);
    }
  } else {
    std::istringstream is2(text);
    int lineno = 0;
    while (std::getline(is2, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      json rec;
      try {
        rec = json::parse(line);
      } catch (const json::parse_error& e) {
        throw DataError(path + " line " + std::to_string(lineno) + ": invalid JSON: " + e.what());
      }
      if (!rec.contains("nodes")) {
        throw DataError(path + " line " + std::to_string(lineno) + ": missing 'nodes'");
      }
      std::vector<std::string> names;
      for (const auto& n : rec["nodes"]) names.push_back(n.get<std::string>());
      if (names.size() < 2) {
        throw DataError(path + " line " + std::to_string(lineno) + ": storyline shorter than 2 nodes");
      }
      sequences.push_back(std::move(names));
    }
  }
  return sequences;
}

struct ResolvedSequences {
  std::vector<ModalSequence> seqs;
  std::vector<std::vector<int>> nodes;
};

ResolvedSequences resolve_sequences(const std::vector<std::vector<std::string>>& name_lists,
                                    const std::vector<EventCorpus>& vocab_sources) {
  std::unordered_map<std::string, std::pair<const EventCorpus*, int>> where;
  for (const auto& c : vocab_sources) {
    for (std::size_t i = 0; i < c.vocab.size(); ++i) {
      where.emplace(c.vocab[i].name, std::make_pair(&c, static_cast<int>(i)));
    }
  }

  ResolvedSequences out;
  for (const auto& names : name_lists) {
    const std::int64_t t_len = static_cast<std::int64_t>(names.size());
    std::int64_t k = 0;
    std::vector<const EntityNode*> nodes;
    std::vector<int> ids;
    for (const auto& name : names) {
      auto it = where.find(name);
      if (it == where.end()) throw DataError("eval: unknown entity '" + name + "'");
      nodes.push_back(&it->second.first->vocab[static_cast<std::size_t>(it->second.second)]);
      ids.push_back(it->second.second);
      k = it->second.first->k;
    }
    ModalSequence seq{Tensor({t_len, k}), Tensor({t_len, k}), Tensor({t_len, k})};
    for (std::int64_t t = 0; t < t_len; ++t) {
      const EntityNode& node = *nodes[static_cast<std::size_t>(t)];
      const Tensor& img = node.image_vec ? *node.image_vec : node.text_vec;
      for (std::int64_t c = 0; c < k; ++c) {
        seq.txt.at(t, c) = node.text_vec.at(c);
        seq.img.at(t, c) = img.at(c);
        seq.mm.at(t, c) = img.at(c) - node.text_vec.at(c);
      }
    }
    out.seqs.push_back(normalize_sequence(seq));
    out.nodes.push_back(std::move(ids));
  }
  return out;
}

// ---------------------------------------------------------------------------
// subcommand bodies
// ---------------------------------------------------------------------------

int cmd_synth(const std::string& out_train, const std::string& out_test,
              const std::string& out_planted, int entities, int k, int d, int t_len,
              int storylines, std::uint64_t seed) {
  SynthCorpus synth = synth_corpus(entities, k, d, t_len, storylines, seed);
  save_dataset({synth.train}, out_train);
  save_dataset({synth.test}, out_test);
  if (!out_planted.empty()) {
    json doc;
    for (const auto& [from, to] : std::map<std::string, std::string>(synth.planted.successor.begin(),
                                                                     synth.planted.successor.end())) {
      doc[from] = to;
    }
    write_file(out_planted, doc.dump(2) + "\n");
  }
  std::cout << "wrote " << out_train << " (" << synth.train.storylines.size() << " storylines), "
            << out_test << " (" << synth.test.storylines.size() << " storylines)\n";
  return 0;
}

int cmd_embed_mm(const std::string& data, const std::string& out_data, const std::string& model_out,
                 int j, int epochs, double rate, std::uint64_t seed) {
  auto corpora = load_dataset(data, CorpusRole::train);
  if (corpora.empty()) throw DataError("dataset has no events: " + data);

  for (auto& corpus : corpora) {
    const auto items = mm_items_from_corpus(corpus);
    if (items.empty()) {
      std::cerr << "note: event '" << corpus.event_id << "' has no storylines; skipping projection\n";
      continue;
    }
    MMParams params = init_mm_params(j, corpus_word_table(corpus), corpus.d, seed);
    MMTrainLog log;
    params = train_mm(items, std::move(params), epochs, rate, seed, &log);
    project_corpus_images(params, corpus);
    if (!model_out.empty()) {
      const std::string path = corpora.size() == 1 ? model_out : model_out + "." + corpus.event_id;
      save_mm(params, path);
    }
    if (!log.epoch_nll.empty()) {
      std::cout << "event " << corpus.event_id << ": nll " << log.epoch_nll.front() << " -> "
                << log.epoch_nll.back() << "\n";
    }
  }
  save_dataset(corpora, out_data);
  return 0;
}

int cmd_pretrain(const TrainConfig& cfg, const std::string& data, const std::string& out,
                 const std::string& mode, double ss_start, double ss_end) {
  EventCorpus corpus = single_corpus(data, CorpusRole::train);
  substitute_missing_image_vecs(corpus);

  std::vector<Storyline> windows;
  for (const auto& sl : corpus.storylines) {
    for (auto& w : slice_windows(sl, cfg.t_len)) windows.push_back(std::move(w));
  }
  if (windows.empty()) throw DataError("pretrain: no training windows of length " + std::to_string(cfg.t_len));
  const CandidateSet cand = make_candidates(corpus);

  GeneratorParams gen = init_generator(corpus.k, cfg.hidden, derive_seed(cfg.seed, {0x11}));
  PretrainLog log;
  if (mode == "mle") {
    mle_pretrain(gen, windows, cand, cfg.pretrain_g_epochs, cfg.pretrain_rate,
                 derive_seed(cfg.seed, {0x12}), &log);
  } else if (mode == "ss") {
    scheduled_sampling_pretrain(gen, windows, cand, cfg.pretrain_g_epochs, cfg.pretrain_rate,
                                SampleSchedule{ss_start, ss_end}, derive_seed(cfg.seed, {0x12}), &log);
  } else {
    throw DataError("pretrain: unknown mode '" + mode + "' (expected mle|ss)");
  }
  save_generator(gen, out);
  if (!log.epoch_loss.empty()) {
    std::cout << "pretrain loss " << log.epoch_loss.front() << " -> " << log.epoch_loss.back() << "\n";
  }
  return 0;
}

int cmd_train(const TrainConfig& cfg, const std::string& data, const std::string& out_gen,
              const std::string& out_disc, const std::string& log_path) {
  EventCorpus corpus = single_corpus(data, CorpusRole::train);
  const TrainResult res = train(corpus, cfg);
  save_generator(res.gen, out_gen);
  if (!out_disc.empty()) save_disc(res.disc, out_disc);
  if (!log_path.empty()) write_file(log_path, train_log_to_jsonl(res.log));
  double last_sim = 0.0;
  for (const auto& r : res.log) {
    if (r.phase == "eval") last_sim = r.sum_sim;
  }
  std::cout << "trained " << res.rounds_run << " rounds, final training sum_sim " << last_sim << "\n";
  return 0;
}

int cmd_generate(const TrainConfig& cfg, const std::string& model, const std::string& data,
                 const std::vector<std::string>& starts, int count, const std::string& out) {
  const GeneratorParams gen = load_generator(model);
  EventCorpus corpus = single_corpus(data, CorpusRole::test);
  const auto storylines = apply_policy(gen, corpus, cfg, starts, count, cfg.seed);

  std::vector<std::string> names;
  for (const auto& node : corpus.vocab) names.push_back(node.name);
  const std::string text = storylines_to_jsonl(storylines, names, cfg.seed);
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file(out, text);
  }
  return 0;
}

int cmd_eval(const std::string& ref_path, const std::string& gen_path, const std::string& channel,
             const std::string& data, const std::string& out,
             const std::map<std::string, std::string>& config_echo) {
  const Modality ch = modality_from_string(channel);

  std::vector<EventCorpus> vocab_sources;
  const auto ref_names = read_sequences(ref_path, vocab_sources);
  const auto gen_names = read_sequences(gen_path, vocab_sources);
  if (!data.empty()) {
    for (auto& c : load_dataset(data, CorpusRole::train)) vocab_sources.push_back(std::move(c));
  }
  if (vocab_sources.empty()) {
    throw DataError("eval: no entity vectors available; pass a dataset as --ref/--gen or via --data");
  }

  const ResolvedSequences ref = resolve_sequences(ref_names, vocab_sources);
  const ResolvedSequences gen = resolve_sequences(gen_names, vocab_sources);
  const EvalReport report =
      make_eval_report(ref.seqs, gen.seqs, ch, &ref.nodes, &gen.nodes, config_echo);

  const std::string doc = report_to_json(report);
  if (!out.empty()) {
    write_file(out, doc);
  } else {
    std::cout << doc;
  }
  std::cout << "sum_sim " << report.total << " over " << report.ref_count << "x" << report.gen_count
            << " pairs\n";
  return 0;
}

int cmd_baseline(const TrainConfig& cfg, const std::string& which, const std::string& data,
                 const std::vector<std::string>& starts, int count, const std::string& out,
                 const std::string& model_out) {
  EventCorpus corpus = single_corpus(data, CorpusRole::train);
  substitute_missing_image_vecs(corpus);
  const CandidateSet cand = make_candidates(corpus);

  std::vector<std::string> names;
  for (const auto& node : corpus.vocab) names.push_back(node.name);

  std::vector<Storyline> storylines;
  if (which == "random") {
    std::vector<int> start_ids;
    if (!starts.empty()) {
      for (const auto& s : starts) start_ids.push_back(corpus.entity_id(s));
    } else {
      Rng rng(derive_seed(cfg.seed, {0xB0}));
      for (int i = 0; i < count; ++i) start_ids.push_back(rng.uniform_int(cand.count()));
    }
    storylines = baseline_random(cand, start_ids, cfg.t_len, cfg.seed);
  } else if (which == "lstm" || which == "ss" || which == "pg") {
    GeneratorParams gen;
    if (which == "pg") {
      gen = baseline_pg_similarity(corpus, cfg);
    } else {
      std::vector<Storyline> windows;
      for (const auto& sl : corpus.storylines) {
        for (auto& w : slice_windows(sl, cfg.t_len)) windows.push_back(std::move(w));
      }
      if (windows.empty()) throw DataError("baseline: no training windows");
      gen = init_generator(corpus.k, cfg.hidden, derive_seed(cfg.seed, {0x11}));
      if (which == "lstm") {
        mle_pretrain(gen, windows, cand, cfg.pretrain_g_epochs, cfg.pretrain_rate,
                     derive_seed(cfg.seed, {0x12}));
      } else {
        scheduled_sampling_pretrain(gen, windows, cand, cfg.pretrain_g_epochs, cfg.pretrain_rate,
                                    SampleSchedule{1.0, 0.0}, derive_seed(cfg.seed, {0x12}));
      }
    }
    if (!model_out.empty()) save_generator(gen, model_out);
    storylines = apply_policy(gen, corpus, cfg, starts, count, cfg.seed);
  } else {
    throw DataError("baseline: unknown variant '" + which + "'");
  }

  const std::string text = storylines_to_jsonl(storylines, names, cfg.seed);
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file(out, text);
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"multimodal imitation storytelling"};
  app.require_subcommand(1);

  std::string kernels = "auto";
  app.add_option("--kernels", kernels, "kernel backend: auto|scalar|avx2")->capture_default_str();

  // shared flags, bound per subcommand
  struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
  };

  auto add_common = [](CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "flat key = value config file");
    cmd->add_option("--seed", c.seed, "seed override");
  };

  // synth
  auto* synth = app.add_subcommand("synth", "emit a synthetic planted-policy corpus");
  Common synth_common;
  add_common(synth, synth_common);
  std::string synth_out_train, synth_out_test, synth_out_planted;
  int synth_entities = 20, synth_k = 8, synth_d = 16, synth_t = 4, synth_storylines = 200;
  synth->add_option("--out-train", synth_out_train, "output dataset (train split)")->required();
  synth->add_option("--out-test", synth_out_test, "output dataset (test split)")->required();
  synth->add_option("--out-planted", synth_out_planted, "write the planted successor map (JSON)");
  synth->add_option("--entities", synth_entities, "entities per split")->capture_default_str();
  synth->add_option("--k", synth_k, "embedding dimension")->capture_default_str();
  synth->add_option("--d", synth_d, "raw image feature dimension")->capture_default_str();
  synth->add_option("--T", synth_t, "storyline length")->capture_default_str();
  synth->add_option("--storylines", synth_storylines, "storylines per split")->capture_default_str();

  // embed-mm
  auto* embed = app.add_subcommand("embed-mm", "train the image-conditioned word model and project image vectors");
  Common embed_common;
  add_common(embed, embed_common);
  std::string embed_data, embed_out_data, embed_model_out;
  int embed_j = 32, embed_epochs = 30;
  double embed_rate = 0.05;
  embed->add_option("--data", embed_data, "input dataset")->required();
  embed->add_option("--out-data", embed_out_data, "rewritten dataset with image_vec")->required();
  embed->add_option("--model-out", embed_model_out, "save the trained model");
  embed->add_option("--j", embed_j, "factor rank")->capture_default_str();
  embed->add_option("--epochs", embed_epochs, "training epochs")->capture_default_str();
  embed->add_option("--rate", embed_rate, "learning rate")->capture_default_str();

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "maximum-likelihood (or scheduled-sampling) pretraining");
  Common pre_common;
  add_common(pre, pre_common);
  std::string pre_data, pre_out, pre_mode = "mle";
  double pre_ss_start = 1.0, pre_ss_end = 0.0;
  pre->add_option("--data", pre_data, "training dataset")->required();
  pre->add_option("--out", pre_out, "generator checkpoint")->required();
  pre->add_option("--mode", pre_mode, "mle|ss")->capture_default_str();
  pre->add_option("--ss-start", pre_ss_start, "scheduled-sampling start epsilon")->capture_default_str();
  pre->add_option("--ss-end", pre_ss_end, "scheduled-sampling end epsilon")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "full adversarial training");
  Common tr_common;
  add_common(tr, tr_common);
  std::string tr_data, tr_out_gen, tr_out_disc, tr_log;
  tr->add_option("--data", tr_data, "training dataset")->required();
  tr->add_option("--out-gen", tr_out_gen, "generator checkpoint")->required();
  tr->add_option("--out-disc", tr_out_disc, "discriminator checkpoint");
  tr->add_option("--log", tr_log, "training log (JSONL)");

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "generate storylines on a (possibly unseen) dataset");
  Common gen_common;
  add_common(gen_cmd, gen_common);
  std::string gen_model, gen_data, gen_out;
  std::vector<std::string> gen_starts;
  std::optional<int> gen_length;
  int gen_count = 10;
  double gen_temperature = -1.0;
  gen_cmd->add_option("--model", gen_model, "generator checkpoint")->required();
  gen_cmd->add_option("--data", gen_data, "dataset providing the vocabulary")->required();
  gen_cmd->add_option("--start", gen_starts, "start entity name (repeatable)");
  gen_cmd->add_option("--length", gen_length, "storyline length (overrides config T)");
  gen_cmd->add_option("--count", gen_count, "storylines when no starts are given")->capture_default_str();
  gen_cmd->add_option("--temperature", gen_temperature, "sampling temperature (0 = argmax)");
  gen_cmd->add_option("--out", gen_out, "output storylines (JSONL; stdout when omitted)");

  // eval
  auto* ev = app.add_subcommand("eval", "similarity report between reference and generated sequences");
  Common ev_common;
  add_common(ev, ev_common);
  std::string ev_ref, ev_gen, ev_channel, ev_data, ev_out;
  ev->add_option("--ref", ev_ref, "reference sequences (dataset or generated JSONL)")->required();
  ev->add_option("--gen", ev_gen, "generated sequences (dataset or generated JSONL)")->required();
  ev->add_option("--channel", ev_channel, "txt|img|mm")->required();
  ev->add_option("--data", ev_data, "extra dataset supplying entity vectors");
  ev->add_option("--out", ev_out, "report path (stdout when omitted)");

  // baseline
  auto* base = app.add_subcommand("baseline", "baseline models: random|lstm|ss|pg");
  Common base_common;
  add_common(base, base_common);
  std::string base_which, base_data, base_out, base_model_out;
  std::vector<std::string> base_starts;
  int base_count = 10;
  base->add_option("variant", base_which, "random|lstm|ss|pg")->required();
  base->add_option("--data", base_data, "training dataset")->required();
  base->add_option("--start", base_starts, "start entity name (repeatable)");
  base->add_option("--count", base_count, "storylines when no starts are given")->capture_default_str();
  base->add_option("--out", base_out, "output storylines (JSONL; stdout when omitted)");
  base->add_option("--model-out", base_model_out, "save the trained baseline generator");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the usage message
    return 2;
  }

  try {
    apply_kernel_choice(kernels);
    if (synth->parsed()) {
      const std::uint64_t seed = synth_common.seed.value_or(
          synth_common.config.empty() ? 1 : resolve_config(synth_common.config, std::nullopt).seed);
      return cmd_synth(synth_out_train, synth_out_test, synth_out_planted, synth_entities, synth_k,
                       synth_d, synth_t, synth_storylines, seed);
    }
    if (embed->parsed()) {
      const std::uint64_t seed = embed_common.seed.value_or(
          embed_common.config.empty() ? 1 : resolve_config(embed_common.config, std::nullopt).seed);
      return cmd_embed_mm(embed_data, embed_out_data, embed_model_out, embed_j, embed_epochs,
                          embed_rate, seed);
    }
    if (pre->parsed()) {
      return cmd_pretrain(resolve_config(pre_common.config, pre_common.seed), pre_data, pre_out,
                          pre_mode, pre_ss_start, pre_ss_end);
    }
    if (tr->parsed()) {
      return cmd_train(resolve_config(tr_common.config, tr_common.seed), tr_data, tr_out_gen,
                       tr_out_disc, tr_log);
    }
    if (gen_cmd->parsed()) {
      TrainConfig cfg = resolve_config(gen_common.config, gen_common.seed, gen_length);
      if (gen_temperature >= 0.0) cfg.temperature = gen_temperature;
      return cmd_generate(cfg, gen_model, gen_data, gen_starts, gen_count, gen_out);
    }
    if (ev->parsed()) {
      std::map<std::string, std::string> echo;
      if (!ev_common.config.empty()) {
        echo = config_to_map(resolve_config(ev_common.config, ev_common.seed));
      }
      return cmd_eval(ev_ref, ev_gen, ev_channel, ev_data, ev_out, echo);
    }
    if (base->parsed()) {
      return cmd_baseline(resolve_config(base_common.config, base_common.seed), base_which,
                          base_data, base_starts, base_count, base_out, base_model_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 2;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("milgan");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace milgan
