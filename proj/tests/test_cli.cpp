#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "milgan/cli.hpp"
#include "milgan/io.hpp"
#include "milgan/seqdata.hpp"

using namespace milgan;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path root;
  TempDir() : root(fs::temp_directory_path() / ("milgan_cli_" + std::to_string(::getpid()))) {
    fs::create_directories(root);
  }
  ~TempDir() { fs::remove_all(root); }
  std::string operator/(const std::string& name) const { return (root / name).string(); }
};

// quick config for cheap pipeline runs
void write_tiny_config(const std::string& path) {
  write_file(path,
             "T = 3\n"
             "hidden = 6\n"
             "pretrain_g_epochs = 8\n"
             "pretrain_d_epochs = 5\n"
             "rounds = 1\n"
             "g_batch = 2\n"
             "d_batch = 4\n"
             "n_rollouts = 2\n"
             "eval_samples = 4\n"
             "seed = 3\n");
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run_cli({"definitely-not-a-subcommand"}) == 2);
  CHECK(run_cli({"synth", "--no-such-flag"}) == 2);
  CHECK(run_cli({"synth"}) == 2);  // missing required outputs
  CHECK(run_cli({}) == 2);
  CHECK(run_cli({"--help"}) == 0);
}

TEST_CASE("runtime errors exit with 1") {
  CHECK(run_cli({"train", "--data", "/nonexistent/x.jsonl", "--out-gen", "/tmp/never.ck"}) == 1);
  TempDir dir;
  write_file(dir / "bad.jsonl", "{\"kind\":\"bogus\",\"event\":\"e\"}\n");
  CHECK(run_cli({"pretrain", "--data", dir / "bad.jsonl", "--out", dir / "o.ck"}) == 1);
}

TEST_CASE("synth produces loadable train and test datasets, deterministically") {
  TempDir dir;
  auto run = [&](const std::string& suffix) {
    return run_cli({"synth", "--out-train", dir / ("train" + suffix), "--out-test",
                    dir / ("test" + suffix), "--entities", "8", "--k", "4", "--d", "5", "--T", "3",
                    "--storylines", "10", "--seed", "42"});
  };
  CHECK(run("_a.jsonl") == 0);
  CHECK(run("_b.jsonl") == 0);
  CHECK(read_file(dir / "train_a.jsonl") == read_file(dir / "train_b.jsonl"));
  CHECK(read_file(dir / "test_a.jsonl") == read_file(dir / "test_b.jsonl"));

  const auto corpora = load_dataset(dir / "train_a.jsonl");
  REQUIRE(corpora.size() == 1);
  CHECK(corpora[0].vocab.size() == 8);
  CHECK(corpora[0].storylines.size() == 10);
}

TEST_CASE("generate with a fixed seed writes identical files") {
  TempDir dir;
  REQUIRE(run_cli({"synth", "--out-train", dir / "train.jsonl", "--out-test", dir / "test.jsonl",
                   "--entities", "7", "--k", "4", "--d", "5", "--T", "3", "--storylines", "8",
                   "--seed", "9"}) == 0);
  write_tiny_config(dir / "cfg.txt");
  REQUIRE(run_cli({"pretrain", "--config", dir / "cfg.txt", "--data", dir / "train.jsonl", "--out",
                   dir / "gen.ck"}) == 0);

  for (const char* out : {"gen1.jsonl", "gen2.jsonl"}) {
    CHECK(run_cli({"generate", "--config", dir / "cfg.txt", "--model", dir / "gen.ck", "--data",
                   dir / "test.jsonl", "--count", "4", "--seed", "17", "--out", dir / out}) == 0);
  }
  const std::string a = read_file(dir / "gen1.jsonl");
  CHECK(a == read_file(dir / "gen2.jsonl"));
  CHECK(!a.empty());

  // every line carries start, nodes, seed
  std::istringstream is(a);
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    const auto rec = nlohmann::json::parse(line);
    CHECK(rec.contains("start"));
    CHECK(rec["nodes"].size() == 3);
    CHECK(rec["seed"] == 17);
    ++lines;
  }
  CHECK(lines == 4);
}

TEST_CASE("generate honors explicit starts") {
  TempDir dir;
  REQUIRE(run_cli({"synth", "--out-train", dir / "train.jsonl", "--out-test", dir / "test.jsonl",
                   "--entities", "7", "--k", "4", "--d", "5", "--T", "3", "--storylines", "8",
                   "--seed", "10"}) == 0);
  write_tiny_config(dir / "cfg.txt");
  REQUIRE(run_cli({"pretrain", "--config", dir / "cfg.txt", "--data", dir / "train.jsonl", "--out",
                   dir / "gen.ck"}) == 0);
  REQUIRE(run_cli({"generate", "--config", dir / "cfg.txt", "--model", dir / "gen.ck", "--data",
                   dir / "test.jsonl", "--start", "t03", "--start", "t05", "--seed", "5", "--out",
                   dir / "gen.jsonl"}) == 0);
  std::istringstream is(read_file(dir / "gen.jsonl"));
  std::string line;
  std::vector<std::string> starts;
  while (std::getline(is, line)) starts.push_back(nlohmann::json::parse(line)["start"]);
  CHECK(starts == std::vector<std::string>{"t03", "t05"});
}

TEST_CASE("eval on identical single-sequence files reports 1.0") {
  TempDir dir;
  const std::string data =
      R"({"kind":"entity","event":"e","name":"a","text_vec":[1,0],"image_feat":[1],"image_vec":[0.5,0.5]}
{"kind":"entity","event":"e","name":"b","text_vec":[0,1],"image_feat":[1],"image_vec":[0.25,1]}
{"kind":"entity","event":"e","name":"c","text_vec":[1,1],"image_feat":[1],"image_vec":[0,0.75]}
{"kind":"storyline","event":"e","nodes":["a","b","c"]}
)";
  write_file(dir / "one.jsonl", data);
  CHECK(run_cli({"eval", "--ref", dir / "one.jsonl", "--gen", dir / "one.jsonl", "--channel", "txt",
                 "--out", dir / "report.json"}) == 0);
  const auto report = nlohmann::json::parse(read_file(dir / "report.json"));
  CHECK(report["sum_sim"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report["ref_count"] == 1);
  CHECK(report["audit"]["repeat_violations"] == 0);
}

TEST_CASE("eval resolves generated files against a dataset vocabulary") {
  TempDir dir;
  REQUIRE(run_cli({"synth", "--out-train", dir / "train.jsonl", "--out-test", dir / "test.jsonl",
                   "--entities", "7", "--k", "4", "--d", "5", "--T", "3", "--storylines", "6",
                   "--seed", "11"}) == 0);
  // hand-written generated file using test-vocabulary names
  write_file(dir / "gen.jsonl",
             R"({"start":"t00","nodes":["t00","t01","t02"],"seed":1}
{"start":"t03","nodes":["t03","t04","t05"],"seed":1}
)");
  CHECK(run_cli({"eval", "--ref", dir / "test.jsonl", "--gen", dir / "gen.jsonl", "--channel", "mm",
                 "--out", dir / "report.json"}) == 0);
  const auto report = nlohmann::json::parse(read_file(dir / "report.json"));
  CHECK(report["gen_count"] == 2);
  CHECK(report["channel"] == "mm");

  // unknown entity names are runtime errors
  write_file(dir / "bad.jsonl", R"({"start":"zz","nodes":["zz","t01","t02"],"seed":1})"
                                "\n");
  CHECK(run_cli({"eval", "--ref", dir / "test.jsonl", "--gen", dir / "bad.jsonl", "--channel",
                 "txt"}) == 1);
}

TEST_CASE("embed-mm rewrites the dataset with projected image vectors") {
  TempDir dir;
  REQUIRE(run_cli({"synth", "--out-train", dir / "train.jsonl", "--out-test", dir / "test.jsonl",
                   "--entities", "6", "--k", "4", "--d", "5", "--T", "3", "--storylines", "6",
                   "--seed", "12"}) == 0);
  CHECK(run_cli({"embed-mm", "--data", dir / "train.jsonl", "--out-data", dir / "train_mm.jsonl",
                 "--model-out", dir / "mm.ck", "--j", "6", "--epochs", "4", "--seed", "2"}) == 0);
  const auto corpora = load_dataset(dir / "train_mm.jsonl");
  REQUIRE(corpora.size() == 1);
  for (const auto& node : corpora[0].vocab) {
    REQUIRE(node.image_vec.has_value());
    CHECK(node.image_vec->size() == 4);
  }
  CHECK(fs::exists(dir / "mm.ck"));
}

TEST_CASE("baselines emit storyline files") {
  TempDir dir;
  REQUIRE(run_cli({"synth", "--out-train", dir / "train.jsonl", "--out-test", dir / "test.jsonl",
                   "--entities", "7", "--k", "4", "--d", "5", "--T", "3", "--storylines", "8",
                   "--seed", "13"}) == 0);
  write_tiny_config(dir / "cfg.txt");

  CHECK(run_cli({"baseline", "random", "--config", dir / "cfg.txt", "--data", dir / "train.jsonl",
                 "--count", "3", "--out", dir / "rand.jsonl"}) == 0);
  CHECK(run_cli({"baseline", "lstm", "--config", dir / "cfg.txt", "--data", dir / "train.jsonl",
                 "--count", "3", "--out", dir / "lstm.jsonl", "--model-out", dir / "lstm.ck"}) == 0);
  CHECK(run_cli({"baseline", "ss", "--config", dir / "cfg.txt", "--data", dir / "train.jsonl",
                 "--count", "3", "--out", dir / "ss.jsonl"}) == 0);
  CHECK(run_cli({"baseline", "pg", "--config", dir / "cfg.txt", "--data", dir / "train.jsonl",
                 "--count", "3", "--out", dir / "pg.jsonl"}) == 0);
  CHECK(run_cli({"baseline", "nope", "--config", dir / "cfg.txt", "--data", dir / "train.jsonl"}) == 1);

  for (const char* f : {"rand.jsonl", "lstm.jsonl", "ss.jsonl", "pg.jsonl"}) {
    std::istringstream is(read_file(dir / f));
    std::string line;
    int n = 0;
    while (std::getline(is, line)) {
      const auto rec = nlohmann::json::parse(line);
      CHECK(rec["nodes"].size() == 3);
      ++n;
    }
    CHECK(n == 3);
  }
}

TEST_CASE("the full pipeline runs end to end and reproduces byte-identically") {
  TempDir dir;
  write_tiny_config(dir / "cfg.txt");

  auto pipeline = [&](const std::string& tag) {
    REQUIRE(run_cli({"synth", "--out-train", dir / (tag + "train.jsonl"), "--out-test",
                     dir / (tag + "test.jsonl"), "--entities", "7", "--k", "4", "--d", "5", "--T",
                     "3", "--storylines", "10", "--seed", "21"}) == 0);
    REQUIRE(run_cli({"embed-mm", "--data", dir / (tag + "train.jsonl"), "--out-data",
                     dir / (tag + "train_mm.jsonl"), "--j", "4", "--epochs", "3", "--seed", "21"}) == 0);
    REQUIRE(run_cli({"train", "--config", dir / "cfg.txt", "--data", dir / (tag + "train_mm.jsonl"),
                     "--out-gen", dir / (tag + "gen.ck"), "--out-disc", dir / (tag + "disc.ck"),
                     "--log", dir / (tag + "log.jsonl")}) == 0);
    REQUIRE(run_cli({"generate", "--config", dir / "cfg.txt", "--model", dir / (tag + "gen.ck"),
                     "--data", dir / (tag + "test.jsonl"), "--count", "4", "--seed", "8", "--out",
                     dir / (tag + "out.jsonl")}) == 0);
    REQUIRE(run_cli({"eval", "--ref", dir / (tag + "train_mm.jsonl"), "--gen",
                     dir / (tag + "out.jsonl"), "--data", dir / (tag + "test.jsonl"), "--channel",
                     "txt", "--out", dir / (tag + "report.json")}) == 0);
  };
  pipeline("a_");
  pipeline("b_");
  CHECK(read_file(dir / "a_out.jsonl") == read_file(dir / "b_out.jsonl"));
  CHECK(read_file(dir / "a_report.json") == read_file(dir / "b_report.json"));
  CHECK(read_file(dir / "a_log.jsonl") == read_file(dir / "b_log.jsonl"));
}
