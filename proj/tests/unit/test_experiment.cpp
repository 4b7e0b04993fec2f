#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "uva/common.hpp"
#include "uva/experiment.hpp"
#include "uva/synth.hpp"

using namespace uva;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("uvakit_exp_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

void write_corpus(const std::string& path, std::size_t concepts) {
  synth::CorpusSpec spec;
  spec.concepts = concepts;
  std::ostringstream out;
  write_atoms(AtomStore::from_atoms(synth::generate_corpus(spec)), out);
  write_file(path, out.str());
}

ExperimentConfig small_config(const TempDir& dir) {
  auto c = ExperimentConfig::from_json(R"({
    "seed": 3,
    "pairs.negative_ratio": 3,
    "embedding.random_dim": 8,
    "siamese.lstm_hidden": 6,
    "siamese.dense1_units": 12,
    "siamese.dense2_units": 6,
    "siamese.batch_size": 64,
    "siamese.epochs": 4,
    "siamese.learning_rate": 0.005,
    "train.checkpoint_every": 2
  })");
  c.atom_file = dir / "atoms.txt";
  c.out_dir = dir / "run";
  c.finalize();
  return c;
}

bool same_file(const std::string& a, const std::string& b) { return read_file(a) == read_file(b); }

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Runtime;
}

}  // namespace

TEST_CASE("config keys, types and schema") {
  auto c = ExperimentConfig::from_json(R"({"seed": 9, "pairs.stratum_weights": [0.5, 0.25, 0.25],
                                           "cross.orders": ["ji"], "siamese.use_attention": true})");
  CHECK(c.seed == 9);
  CHECK(c.pairs.stratum_weights[0] == 0.5);
  CHECK(c.cross_orders == std::vector<PairOrder>{PairOrder::JI});
  CHECK(c.siamese.use_attention);
  CHECK(ExperimentConfig::from_json(c.to_json()).to_json() == c.to_json());

  CHECK(kind_of([] { ExperimentConfig::from_json(R"({"siamese.epoch": 3})"); }) == ErrorKind::Validation);
  CHECK(kind_of([] { ExperimentConfig::from_json(R"({"seed": "three"})"); }) == ErrorKind::Validation);
  CHECK(kind_of([] { ExperimentConfig::from_json(R"({"seed": -1})"); }) == ErrorKind::Validation);
  CHECK(kind_of([] { ExperimentConfig::from_json("[1]"); }) == ErrorKind::Validation);
  CHECK(kind_of([] { ExperimentConfig::from_json("{"); }) == ErrorKind::Parse);
  auto bad = ExperimentConfig::from_json(R"({"eval.threshold": 1.5})");
  CHECK(kind_of([&] { bad.finalize(); }) == ErrorKind::InvalidArgument);

  auto schema = json::parse(config_schema());
  CHECK(schema["format"] == "uvakit.config");
  std::set<std::string> keys;
  for (const auto& k : schema["keys"]) keys.insert(k["key"].get<std::string>());
  const auto defaults = json::parse(ExperimentConfig{}.to_json());
  CHECK(defaults.size() == keys.size());
  for (const auto& [k, v] : defaults.items()) CHECK(keys.count(k) == 1);
}

TEST_CASE("hash covers artifacts but not placement or threads") {
  ExperimentConfig a;
  auto b = a;
  b.out_dir = "elsewhere";
  b.siamese.threads = 8;
  b.cross.threads = 3;
  CHECK(a.hash() == b.hash());
  b.siamese.epochs = 7;
  CHECK(a.hash() != b.hash());
}

TEST_CASE("environment overrides and path resolution") {
  TempDir dir("env");
  write_file(dir / "cfg.json", R"({"atom_file": "atoms.txt", "vector_file": "sub/../vec.txt"})");
  auto c = ExperimentConfig::load_file(dir / "cfg.json");
  CHECK(c.atom_file == dir / "atoms.txt");
  CHECK(c.vector_file == dir / "vec.txt");
  CHECK(c.out_dir == "runs/default");

  ::setenv("UVAKIT_ATOM_FILE", "/data/other.atoms", 1);
  ::setenv("UVAKIT_OUT_DIR", "/tmp/somewhere", 1);
  c.apply_environment();
  ::unsetenv("UVAKIT_ATOM_FILE");
  ::unsetenv("UVAKIT_OUT_DIR");
  CHECK(c.atom_file == "/data/other.atoms");
  CHECK(c.out_dir == "/tmp/somewhere");
  CHECK(c.vector_file == dir / "vec.txt");
}

TEST_CASE("pipeline, overwrite refusal, resume, report and replay") {
  TempDir dir("pipeline");
  write_corpus(dir / "atoms.txt", 30);
  auto cfg = small_config(dir);
  std::vector<std::string> lines;
  RunOptions opt;
  opt.log = [&](const std::string& l) { lines.push_back(l); };

  const auto summary = cmd_run(cfg, opt);
  CHECK(summary.find("| siamese | random 8d |") != std::string::npos);
  for (const char* f : {"config.resolved.json", "manifest.jsonl", "store_summary.json", "pairs_train.tsv",
                        "pairs_test.tsv", "pairs_report.json", "embeddings.vec", "extract_report.json",
                        "model.ckpt.json", "train_report.json", "scores.tsv", "metrics.json", "metrics.md",
                        "metrics.csv", "sweep.md"})
    CHECK_MESSAGE(fs::exists(cfg.out_dir + "/" + f), f);
  auto store = json::parse(read_file(cfg.out_dir + "/store_summary.json"));
  CHECK(store["concepts"] == 30);
  auto train_report = json::parse(read_file(cfg.out_dir + "/train_report.json"));
  CHECK(train_report["epoch_loss"].size() == 4);
  CHECK(train_report["epoch_valid"].size() == 4);

  std::ifstream manifest(cfg.out_dir + "/manifest.jsonl");
  std::vector<json> entries;
  for (std::string l; std::getline(manifest, l);) entries.push_back(json::parse(l));
  REQUIRE(entries.size() == 5);
  CHECK(entries[0]["command"] == "ingest");
  CHECK(entries[3]["command"] == "train");
  CHECK(entries[3]["config_hash"] == cfg.hash());
  CHECK(entries[3]["inputs"].contains(cfg.atom_file));
  CHECK(entries[3]["run_inputs"].contains("embeddings.vec"));
  CHECK(entries[3]["outputs"].contains("model.ckpt.json"));

  CHECK(kind_of([&] { cmd_gen_pairs(cfg, {}); }) == ErrorKind::Exists);
  CHECK(kind_of([&] { cmd_eval(cfg, {}); }) == ErrorKind::Exists);
  auto other = cfg;
  other.seed = 4;
  other.finalize();
  RunOptions force;
  force.force = false;
  CHECK(kind_of([&] { cmd_ingest(other, force); }) == ErrorKind::Exists);

  // Same run directory, different config: refused even for fresh outputs.
  fs::remove(cfg.out_dir + "/store_summary.json");
  CHECK(kind_of([&] { cmd_ingest(other, {}); }) == ErrorKind::HashMismatch);
  RunOptions forced;
  forced.force = true;
  cmd_ingest(cfg, forced);

  // Deterministic stages reproduce byte-identical outputs.
  TempDir again("pipeline_again");
  auto cfg2 = cfg;
  cfg2.out_dir = again / "run";
  cmd_run(cfg2, {});
  for (const char* f : {"pairs_train.tsv", "pairs_test.tsv", "embeddings.vec", "model.ckpt.json", "train_report.json",
                        "scores.tsv", "metrics.json"})
    CHECK_MESSAGE(same_file(cfg.out_dir + "/" + f, cfg2.out_dir + "/" + f), f);

  // Resume: a checkpoint from epoch 2 continued to epoch 4 equals the full run.
  TempDir resumed("pipeline_resume");
  auto cfg3 = cfg;
  cfg3.out_dir = resumed / "run";
  cmd_ingest(cfg3, {});
  cmd_gen_pairs(cfg3, {});
  cmd_extract(cfg3, {});
  auto short_cfg = cfg3;
  short_cfg.siamese.epochs = 2;
  short_cfg.finalize();
  auto short_dir = resumed / "short";
  short_cfg.out_dir = short_dir;
  fs::create_directories(short_dir);
  for (const char* f : {"pairs_train.tsv", "embeddings.vec"}) fs::copy(cfg3.out_dir + "/" + f, short_dir + "/" + f);
  cmd_train(short_cfg, {});
  fs::copy(short_dir + "/model.ckpt.json", cfg3.out_dir + "/model.ckpt.json");
  CHECK(kind_of([&] { cmd_train(cfg3, {}); }) == ErrorKind::Exists);
  RunOptions resume;
  resume.resume = true;
  CHECK(cmd_train(cfg3, resume).find("resumed at epoch 2") != std::string::npos);
  CHECK(same_file(cfg3.out_dir + "/model.ckpt.json", cfg.out_dir + "/model.ckpt.json"));
  CHECK(same_file(cfg3.out_dir + "/train_report.json", cfg.out_dir + "/train_report.json"));

  // Report merges runs.
  auto rows = collect_rows({cfg.out_dir, cfg2.out_dir});
  CHECK(rows.size() == 2);
  CHECK(kind_of([&] { collect_rows({dir / "nothing"}); }) == ErrorKind::Io);

  // Replay from the manifest.
  auto result = replay(cfg2.out_dir, again / "replay", {});
  CHECK(result.checked >= 13);
  CHECK(result.mismatched.empty());
  CHECK(kind_of([&] { replay(cfg2.out_dir, again / "replay", {}); }) == ErrorKind::Exists);
  write_corpus(cfg.atom_file, 31);
  CHECK(kind_of([&] { replay(cfg2.out_dir, again / "replay2", {}); }) == ErrorKind::HashMismatch);
}

TEST_CASE("cross-eval and contextual extraction through the registry") {
  TempDir dir("cross");
  write_corpus(dir / "atoms.txt", 12);
  write_file(dir / "registry.json", R"({"models": {"sym": "stub-symmetric", "asym": "stub-asymmetric",
                                                   "toy": {"locator": "toy:layers=4,dim=6,seed=2"}}})");
  auto cfg = small_config(dir);
  cfg.encoder_registry = dir / "registry.json";
  cfg.encoder_model = "toy";
  cfg.embedding_source = EmbeddingSource::Contextual;
  cfg.cross_models = {"sym", "asym"};
  cfg.finalize();
  cmd_run(cfg, {});
  auto ext = json::parse(read_file(cfg.out_dir + "/extract_report.json"));
  CHECK(ext["dim"] == 6);
  CHECK(ext["token_coverage"] == 1.0);
  auto rows = rows_from_json(read_file(cfg.out_dir + "/cross_metrics.json"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].configuration == "order (i,j), head stub");
  CHECK(rows[1].configuration == "order (j,i), head stub");
  CHECK(rows[0].counts == rows[1].counts);
  CHECK_FALSE(rows[2].counts == rows[3].counts);
  for (const char* f : {"cross_scores_sym_ij.tsv", "cross_scores_sym_ji.tsv", "cross_scores_asym_ij.tsv"})
    CHECK_MESSAGE(fs::exists(cfg.out_dir + "/" + f), f);
  CHECK(collect_rows({cfg.out_dir}).size() == 5);
  CHECK(kind_of([&] { run_command("fit", cfg, {}); }) == ErrorKind::InvalidArgument);
}
