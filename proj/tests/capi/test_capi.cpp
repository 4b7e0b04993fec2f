#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "uvakit/uvakit.h"

namespace fs = std::filesystem;

namespace {

struct Owned {
  char* p = nullptr;
  ~Owned() { uva_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("uvakit_capi_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

const char* kAtoms =
    "A1|Headache|S1|C1\nA2|Cephalgia|S2|C1\nA3|Head pain|S3|C1\n"
    "A4|Renal cyst|S1|C2\nA5|Kidney cyst|S2|C2\nA6|Cyst of kidney|S3|C2\n"
    "A7|Lung tumor|S1|C3\nA8|Tumour of lung|S2|C3\n";

void collect(const char* line, void* user) { static_cast<std::vector<std::string>*>(user)->push_back(line); }

}  // namespace

TEST_CASE("status codes map error kinds") {
  uva_store* store = nullptr;
  CHECK(uva_store_parse("A1|x|S|C1\nA1|y|S|C2\n", &store) == UVA_E_PARSE);
  CHECK(std::string(uva_last_error()).find("line 2") != std::string::npos);
  CHECK(uva_store_parse("only|three|fields\n", &store) == UVA_E_PARSE);
  CHECK(uva_store_load("/no/such/file", &store) == UVA_E_IO);
  CHECK(uva_store_parse(kAtoms, nullptr) == UVA_E_INVALID_ARGUMENT);
  CHECK(store == nullptr);
  for (int s = UVA_OK; s <= UVA_E_INTERNAL; ++s)
    CHECK(std::string(uva_status_name(static_cast<uva_status>(s))) != "unknown status");

  // The message is per thread.
  std::string other;
  std::thread t([&] {
    uva_store* s = nullptr;
    uva_store_load("/other/thread", &s);
    other = uva_last_error();
  });
  t.join();
  CHECK(other.find("/other/thread") != std::string::npos);
  CHECK(std::string(uva_last_error()).find("/other/thread") == std::string::npos);
}

TEST_CASE("stores, pairs and tables through handles") {
  TempDir dir("handles");
  uva_store* store = nullptr;
  REQUIRE(uva_store_parse(kAtoms, &store) == UVA_OK);
  const char *aui, *str, *src, *cui;
  REQUIRE(uva_store_atom(store, 3, &aui, &str, &src, &cui) == UVA_OK);
  CHECK(std::string(aui) == "A4");
  CHECK(std::string(str) == "Renal cyst");
  CHECK(uva_store_atom(store, 8, &aui, &str, &src, &cui) == UVA_E_INVALID_ARGUMENT);
  Owned summary;
  REQUIRE(uva_store_summary_json(store, &summary.p) == UVA_OK);
  CHECK(summary.str().find("\"concepts\":3") != std::string::npos);
  Owned top;
  REQUIRE(uva_top_similar(store, "A6", 2, &top.p) == UVA_OK);
  CHECK(top.str().rfind("A8\t", 0) == 0);
  CHECK(uva_top_similar(store, "A99", 2, &top.p) != UVA_OK);

  uva_dataset_spec spec;
  uva_dataset_spec_default(&spec);
  CHECK(spec.negative_ratio > 0);
  spec.negative_ratio = 1;
  uva_pairs* pairs = nullptr;
  std::size_t shortfall = 99;
  REQUIRE(uva_pairs_generate(store, &spec, &pairs, &shortfall) == UVA_OK);
  CHECK(shortfall == 0);
  REQUIRE(uva_pairs_write(pairs, store, (dir / "pairs.tsv").c_str()) == UVA_OK);
  uva_pairs* back = nullptr;
  REQUIRE(uva_pairs_read((dir / "pairs.tsv").c_str(), &back) == UVA_OK);
  REQUIRE(uva_pairs_size(back) == uva_pairs_size(pairs));
  for (std::size_t i = 0; i < uva_pairs_size(pairs); ++i) {
    const char *a1, *b1, *t1, *a2, *b2, *t2;
    int l1, l2;
    uva_pairs_get(pairs, i, &a1, &b1, &l1, &t1);
    uva_pairs_get(back, i, &a2, &b2, &l2, &t2);
    CHECK(std::string(a1) == a2);
    CHECK(std::string(b1) == b2);
    CHECK(l1 == l2);
    CHECK(std::string(t1) == t2);
  }
  spec.negative_ratio = -1;
  CHECK(uva_pairs_generate(store, &spec, &pairs, nullptr) == UVA_E_INVALID_ARGUMENT);

  uva_table* table = nullptr;
  REQUIRE(uva_table_random(store, 3, 1, &table) == UVA_OK);
  double v[3];
  int found = -1;
  REQUIRE(uva_table_vector(table, "kidney", v, 3, &found) == UVA_OK);
  CHECK(found == 1);
  REQUIRE(uva_table_vector(table, "zzz", v, 3, &found) == UVA_OK);
  CHECK(found == 0);
  CHECK(uva_table_vector(table, "kidney", v, 2, &found) == UVA_E_INVALID_ARGUMENT);
  REQUIRE(uva_table_write(table, (dir / "t.vec").c_str()) == UVA_OK);
  uva_table* loaded = nullptr;
  REQUIRE(uva_table_load((dir / "t.vec").c_str(), &loaded) == UVA_OK);
  CHECK(uva_table_size(loaded) == uva_table_size(table));

  uva_encoder* mock = nullptr;
  REQUIRE(uva_encoder_open("mock", nullptr, &mock) == UVA_OK);
  uva_table* extracted = nullptr;
  REQUIRE(uva_table_extract(mock, store, "average-avg_last4", 30, &extracted) == UVA_OK);
  CHECK(uva_table_size(extracted) > 0);
  CHECK(uva_table_extract(mock, store, "middle-last_layer", 30, &extracted) != UVA_OK);
  CHECK(uva_encoder_open("nonsense:1", nullptr, &mock) != UVA_OK);

  uva_table_free(extracted);
  uva_encoder_free(mock);
  uva_table_free(loaded);
  uva_table_free(table);
  uva_pairs_free(back);
  uva_pairs_free(pairs);
  uva_store_free(store);
  uva_pairs_free(nullptr);
  uva_table_free(nullptr);
  uva_encoder_free(nullptr);
  uva_model_free(nullptr);
  uva_experiment_free(nullptr);
}

TEST_CASE("model save, load and checksum") {
  TempDir dir("model");
  uva_store* store = nullptr;
  REQUIRE(uva_store_parse(kAtoms, &store) == UVA_OK);
  uva_dataset_spec spec;
  uva_dataset_spec_default(&spec);
  uva_pairs* pairs = nullptr;
  REQUIRE(uva_pairs_generate(store, &spec, &pairs, nullptr) == UVA_OK);
  uva_table* table = nullptr;
  REQUIRE(uva_table_random(store, 4, 1, &table) == UVA_OK);
  uva_siamese_config cfg;
  uva_siamese_config_default(&cfg);
  cfg.lstm_hidden = 3;
  cfg.dense1_units = 4;
  cfg.dense2_units = 3;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  uva_model* model = nullptr;
  REQUIRE(uva_model_build(&cfg, table, &model) == UVA_OK);
  double loss[2];
  REQUIRE(uva_model_train(model, store, pairs, nullptr, loss, 2) == UVA_OK);
  REQUIRE(uva_model_save(model, (dir / "m.json").c_str()) == UVA_OK);
  uva_model* loaded = nullptr;
  REQUIRE(uva_model_load((dir / "m.json").c_str(), &loaded) == UVA_OK);
  Owned c1, c2;
  REQUIRE(uva_model_checksum(model, &c1.p) == UVA_OK);
  REQUIRE(uva_model_checksum(loaded, &c2.p) == UVA_OK);
  CHECK(c1.str() == c2.str());
  CHECK(c1.str().size() == 64);
  double s1, s2;
  REQUIRE(uva_model_similarity(model, "renal cyst", "lung", &s1) == UVA_OK);
  REQUIRE(uva_model_similarity(loaded, "renal cyst", "lung", &s2) == UVA_OK);
  CHECK(s1 == s2);
  cfg.lstm_hidden = 0;
  uva_model* bad = nullptr;
  CHECK(uva_model_build(&cfg, table, &bad) == UVA_E_INVALID_ARGUMENT);
  CHECK(uva_model_load((dir / "missing.json").c_str(), &bad) == UVA_E_IO);
  uva_model_free(loaded);
  uva_model_free(model);
  uva_table_free(table);
  uva_pairs_free(pairs);
  uva_store_free(store);
}

TEST_CASE("metrics and rendering") {
  const double scores[] = {1.0, 1.0, 1.0};
  const int labels[] = {0, 0, 0};
  uva_metrics m;
  REQUIRE(uva_metrics_compute(scores, labels, 3, 0.5, &m) == UVA_OK);
  CHECK(m.fp == 3);
  CHECK(m.precision == 0.0);
  CHECK(m.degenerate == 1);
  CHECK(uva_metrics_compute(nullptr, labels, 3, 0.5, &m) == UVA_E_INVALID_ARGUMENT);
  Owned csv;
  REQUIRE(uva_metrics_render(nullptr, nullptr, nullptr, 0, UVA_STYLE_CSV, &csv.p) == UVA_OK);
  CHECK(csv.str() == "model,configuration,accuracy,precision,recall,f1\n");
}

TEST_CASE("experiments: run, refusal, report and replay") {
  TempDir dir("exp");
  REQUIRE(uva_synth_corpus((dir / "atoms.txt").c_str(), 7, 15, 0) == UVA_OK);
  CHECK(uva_synth_corpus((dir / "atoms.txt").c_str(), 7, 15, 0) == UVA_E_EXISTS);

  uva_experiment* exp = nullptr;
  REQUIRE(uva_experiment_load(nullptr, &exp) == UVA_OK);
  const std::string atoms = "\"" + (dir / "atoms.txt") + "\"";
  const std::string out = "\"" + (dir / "run") + "\"";
  REQUIRE(uva_experiment_set(exp, "atom_file", atoms.c_str()) == UVA_OK);
  REQUIRE(uva_experiment_set(exp, "out_dir", out.c_str()) == UVA_OK);
  for (auto [k, v] : std::vector<std::pair<const char*, const char*>>{{"embedding.random_dim", "6"},
                                                                      {"siamese.lstm_hidden", "4"},
                                                                      {"siamese.dense1_units", "8"},
                                                                      {"siamese.dense2_units", "4"},
                                                                      {"siamese.batch_size", "32"},
                                                                      {"siamese.epochs", "2"}})
    REQUIRE(uva_experiment_set(exp, k, v) == UVA_OK);
  CHECK(uva_experiment_set(exp, "siamese.epochz", "2") == UVA_E_VALIDATION);
  CHECK(uva_experiment_set(exp, "seed", "\"x\"") == UVA_E_VALIDATION);
  CHECK(uva_experiment_set(exp, "seed", "not json") == UVA_E_INVALID_ARGUMENT);
  Owned cfg;
  REQUIRE(uva_experiment_config_json(exp, &cfg.p) == UVA_OK);
  CHECK(cfg.str().find("\"siamese.epochs\": 2") != std::string::npos);

  std::vector<std::string> lines;
  Owned summary;
  REQUIRE(uva_experiment_run(exp, "run", 0, collect, &lines, &summary.p) == UVA_OK);
  CHECK(summary.str().find("| siamese |") != std::string::npos);
  CHECK_FALSE(lines.empty());
  CHECK(uva_experiment_run(exp, "eval", 0, nullptr, nullptr, nullptr) == UVA_E_EXISTS);
  CHECK(uva_experiment_run(exp, "eval", UVA_RUN_FORCE, nullptr, nullptr, nullptr) == UVA_OK);
  CHECK(uva_experiment_run(exp, "bogus", 0, nullptr, nullptr, nullptr) == UVA_E_INVALID_ARGUMENT);

  const std::string run_dir = dir / "run";
  const char* dirs[] = {run_dir.c_str()};
  Owned report;
  REQUIRE(uva_report(dirs, 1, UVA_STYLE_MARKDOWN, &report.p) == UVA_OK);
  CHECK(report.str().find("| siamese | random 6d |") != std::string::npos);

  Owned log;
  std::size_t mismatches = 99;
  REQUIRE(uva_replay(run_dir.c_str(), (dir / "replay").c_str(), 0, nullptr, nullptr, &log.p, &mismatches) == UVA_OK);
  CHECK(mismatches == 0);
  CHECK(log.str().find("DIFFERENT") == std::string::npos);
  CHECK(uva_replay(run_dir.c_str(), (dir / "replay").c_str(), 0, nullptr, nullptr, nullptr, nullptr) == UVA_E_EXISTS);

  Owned schema;
  REQUIRE(uva_config_schema(&schema.p) == UVA_OK);
  CHECK(schema.str().find("siamese.use_attention") != std::string::npos);
  uva_experiment_free(exp);
}
