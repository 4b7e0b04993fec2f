#include "uvakit/uvakit.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <json.hpp>
#include <new>
#include <set>
#include <sstream>

#include "uva/atom_store.hpp"
#include "uva/common.hpp"
#include "uva/crossencoder.hpp"
#include "uva/embedding.hpp"
#include "uva/encoders.hpp"
#include "uva/evalreport.hpp"
#include "uva/experiment.hpp"
#include "uva/lexsim.hpp"
#include "uva/pairgen.hpp"
#include "uva/siamese.hpp"
#include "uva/synth.hpp"

struct uva_store {
  uva::AtomStore store;
};
struct uva_pairs {
  std::vector<uva::LabeledPair> pairs;
};
struct uva_table {
  uva::EmbeddingTable table;
};
struct uva_encoder {
  std::unique_ptr<uva::PairClassifierEncoder> encoder;
};
struct uva_model {
  uva::SiameseModel model;
};
struct uva_experiment {
  uva::ExperimentConfig config;
};

namespace {

thread_local std::string g_last_error;

uva_status status_for(uva::ErrorKind kind) {
  switch (kind) {
    case uva::ErrorKind::InvalidArgument: return UVA_E_INVALID_ARGUMENT;
    case uva::ErrorKind::Parse: return UVA_E_PARSE;
    case uva::ErrorKind::Validation: return UVA_E_VALIDATION;
    case uva::ErrorKind::Io: return UVA_E_IO;
    case uva::ErrorKind::Exists: return UVA_E_EXISTS;
    case uva::ErrorKind::HashMismatch: return UVA_E_HASH_MISMATCH;
    case uva::ErrorKind::Runtime: return UVA_E_RUNTIME;
  }
  return UVA_E_INTERNAL;
}

uva_status fail(uva_status s, std::string message) {
  g_last_error = std::move(message);
  return s;
}

template <typename F>
uva_status guarded(F&& fn) {
  try {
    fn();
    return UVA_OK;
  } catch (const uva::Error& e) {
    return fail(status_for(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(UVA_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(UVA_E_INTERNAL, e.what());
  }
}

void require(const void* p, const char* what) {
  if (!p) throw uva::invalid_argument(std::string(what) + " is NULL");
}

char* dup_string(std::string_view s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size());
  out[s.size()] = '\0';
  return out;
}

void fill_metrics(const uva::ConfusionMatrix& cm, double threshold, uva_metrics* out) {
  const uva::Metrics m = uva::metrics(cm);
  out->accuracy = m.accuracy;
  out->precision = m.precision;
  out->recall = m.recall;
  out->f1 = m.f1;
  out->threshold = threshold;
  out->tp = cm.tp;
  out->fp = cm.fp;
  out->fn = cm.fn;
  out->tn = cm.tn;
  out->degenerate = m.degenerate ? 1 : 0;
}

uva::DatasetSpec to_spec(const uva_dataset_spec* s) {
  uva::DatasetSpec spec;
  if (s) {
    spec.negative_ratio = s->negative_ratio;
    spec.topn = s->topn;
    spec.stratum_weights = {s->stratum_weights[0], s->stratum_weights[1], s->stratum_weights[2]};
    spec.seed = s->seed;
    spec.cross_source_only = s->cross_source_only != 0;
    spec.test_fraction = s->test_fraction;
  }
  spec.validate();
  return spec;
}

struct LogBridge {
  uva_log_fn fn;
  void* user;
  void operator()(const std::string& line) const {
    if (fn) fn(line.c_str(), user);
  }
};

}  // namespace

extern "C" {

const char* uva_version(void) { return uva::kToolkitVersion; }

const char* uva_last_error(void) { return g_last_error.c_str(); }

const char* uva_status_name(uva_status status) {
  switch (status) {
    case UVA_OK: return "ok";
    case UVA_E_INVALID_ARGUMENT: return "invalid argument";
    case UVA_E_PARSE: return "parse error";
    case UVA_E_VALIDATION: return "validation error";
    case UVA_E_IO: return "i/o error";
    case UVA_E_EXISTS: return "output exists";
    case UVA_E_HASH_MISMATCH: return "hash mismatch";
    case UVA_E_RUNTIME: return "runtime error";
    case UVA_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void uva_string_free(char* s) { std::free(s); }

// ---- atoms

uva_status uva_store_load(const char* path, uva_store** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new uva_store{uva::ingest_atoms_file(path)};
  });
}

uva_status uva_store_parse(const char* text, uva_store** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    std::istringstream in(text);
    *out = new uva_store{uva::ingest_atoms(in)};
  });
}

void uva_store_free(uva_store* store) { delete store; }

size_t uva_store_size(const uva_store* store) { return store ? store->store.size() : 0; }

uva_status uva_store_atom(const uva_store* store, size_t index, const char** aui, const char** str, const char** src,
                          const char** cui) {
  return guarded([&] {
    require(store, "store");
    if (index >= store->store.size())
      throw uva::invalid_argument("atom index " + std::to_string(index) + " out of range");
    const auto& a = store->store[index];
    if (aui) *aui = a.aui.c_str();
    if (str) *str = a.str.c_str();
    if (src) *src = a.src.c_str();
    if (cui) *cui = a.cui.c_str();
  });
}

uva_status uva_store_summary_json(const uva_store* store, char** out_json) {
  return guarded([&] {
    require(store, "store");
    require(out_json, "out_json");
    const auto rep = uva::validate(store->store);
    nlohmann::json j = {{"atoms", rep.atoms},
                        {"concepts", rep.concepts},
                        {"sources", rep.sources},
                        {"singleton_concepts", rep.singleton_concepts},
                        {"atoms_per_source", rep.atoms_per_source}};
    *out_json = dup_string(j.dump());
  });
}

uva_status uva_store_concept_members(const uva_store* store, const char* cui, char** out_lines) {
  return guarded([&] {
    require(store, "store");
    require(cui, "cui");
    require(out_lines, "out_lines");
    std::string s;
    for (const auto& aui : store->store.concept_members(cui)) s += aui + '\n';
    *out_lines = dup_string(s);
  });
}

// ---- lexical similarity

double uva_jaccard(const char* a, const char* b) {
  return uva::jaccard(uva::word_tokenize(a ? a : ""), uva::word_tokenize(b ? b : ""));
}

uva_status uva_top_similar(const uva_store* store, const char* anchor_aui, size_t n, char** out_lines) {
  return guarded([&] {
    require(store, "store");
    require(anchor_aui, "anchor_aui");
    require(out_lines, "out_lines");
    const auto index = uva::SimilarityIndex::build(store->store);
    std::string s;
    for (const auto& r : uva::top_n_similar_negatives(index, store->store, anchor_aui, n))
      s += r.aui + '\t' + uva::format_double(r.score) + '\n';
    *out_lines = dup_string(s);
  });
}

// ---- pairs

void uva_dataset_spec_default(uva_dataset_spec* spec) {
  if (!spec) return;
  const uva::DatasetSpec d;
  spec->negative_ratio = d.negative_ratio;
  spec->topn = d.topn;
  for (int i = 0; i < 3; ++i) spec->stratum_weights[i] = d.stratum_weights[static_cast<std::size_t>(i)];
  spec->seed = d.seed;
  spec->cross_source_only = d.cross_source_only ? 1 : 0;
  spec->test_fraction = d.test_fraction;
}

uva_status uva_pairs_generate(const uva_store* store, const uva_dataset_spec* spec, uva_pairs** out,
                              size_t* out_shortfall) {
  return guarded([&] {
    require(store, "store");
    require(out, "out");
    const auto ds = to_spec(spec);
    auto pos = uva::generate_positives(store->store, ds.cross_source_only);
    const auto index = uva::SimilarityIndex::build(store->store, ds.measure);
    auto neg = uva::generate_negatives(store->store, index, ds, pos.size());
    auto result = std::make_unique<uva_pairs>();
    result->pairs = std::move(pos);
    result->pairs.insert(result->pairs.end(), neg.pairs.begin(), neg.pairs.end());
    if (out_shortfall) *out_shortfall = neg.shortfall;
    *out = result.release();
  });
}

uva_status uva_pairs_split(const uva_pairs* pairs, const uva_dataset_spec* spec, uva_pairs** train,
                           uva_pairs** test) {
  return guarded([&] {
    require(pairs, "pairs");
    require(train, "train");
    require(test, "test");
    auto split = uva::split_train_test(pairs->pairs, to_spec(spec));
    auto tr = std::make_unique<uva_pairs>(uva_pairs{std::move(split.train)});
    auto te = std::make_unique<uva_pairs>(uva_pairs{std::move(split.test)});
    *train = tr.release();
    *test = te.release();
  });
}

uva_status uva_pairs_read(const char* path, uva_pairs** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new uva_pairs{uva::read_pairs_file(path)};
  });
}

uva_status uva_pairs_write(const uva_pairs* pairs, const uva_store* store, const char* path) {
  return guarded([&] {
    require(pairs, "pairs");
    require(store, "store");
    require(path, "path");
    uva::write_pairs_file(pairs->pairs, store->store, path);
  });
}

size_t uva_pairs_size(const uva_pairs* pairs) { return pairs ? pairs->pairs.size() : 0; }

uva_status uva_pairs_get(const uva_pairs* pairs, size_t index, const char** aui1, const char** aui2, int* label,
                         const char** split_tag) {
  return guarded([&] {
    require(pairs, "pairs");
    if (index >= pairs->pairs.size())
      throw uva::invalid_argument("pair index " + std::to_string(index) + " out of range");
    const auto& p = pairs->pairs[index];
    if (aui1) *aui1 = p.a.c_str();
    if (aui2) *aui2 = p.b.c_str();
    if (label) *label = p.label;
    if (split_tag) *split_tag = uva::to_string(p.tag).data();
  });
}

void uva_pairs_free(uva_pairs* pairs) { delete pairs; }

// ---- encoders

uva_status uva_encoder_open(const char* locator, const char* tokenizer_spec, uva_encoder** out) {
  return guarded([&] {
    require(locator, "locator");
    require(out, "out");
    *out = new uva_encoder{uva::open_encoder(locator, tokenizer_spec ? tokenizer_spec : "")};
  });
}

uva_status uva_encoder_open_registry(const char* registry_path, const char* model_name, uva_encoder** out) {
  return guarded([&] {
    require(registry_path, "registry_path");
    require(model_name, "model_name");
    require(out, "out");
    *out = new uva_encoder{uva::EncoderRegistry::load_file(registry_path).open(model_name)};
  });
}

void uva_encoder_free(uva_encoder* encoder) { delete encoder; }

// ---- tables

uva_status uva_table_load(const char* path, uva_table** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new uva_table{uva::load_static_table_file(path)};
  });
}

uva_status uva_table_write(const uva_table* table, const char* path) {
  return guarded([&] {
    require(table, "table");
    require(path, "path");
    uva::write_table_file(table->table, path);
  });
}

uva_status uva_table_random(const uva_store* store, size_t dim, uint64_t seed, uva_table** out) {
  return guarded([&] {
    require(store, "store");
    require(out, "out");
    std::set<std::string> vocab;
    const uva::WordTokenizer tok;
    for (const auto& a : store->store.atoms())
      for (auto& t : tok.tokenize(a.str)) vocab.insert(std::move(t));
    *out = new uva_table{uva::random_table({vocab.begin(), vocab.end()}, dim, seed)};
  });
}

uva_status uva_table_extract(const uva_encoder* encoder, const uva_store* store, const char* strategy,
                             size_t max_tokens, uva_table** out) {
  return guarded([&] {
    require(encoder, "encoder");
    require(store, "store");
    require(strategy, "strategy");
    require(out, "out");
    std::vector<std::string> corpus;
    for (const auto& a : store->store.atoms()) corpus.push_back(a.str);
    *out = new uva_table{uva::extract_contextual_table(*encoder->encoder, corpus,
                                                       uva::ExtractionStrategy::parse(strategy), max_tokens)};
  });
}

size_t uva_table_size(const uva_table* table) { return table ? table->table.size() : 0; }
size_t uva_table_dim(const uva_table* table) { return table ? table->table.dim() : 0; }

uva_status uva_table_vector(const uva_table* table, const char* token, double* out, size_t dim, int* found) {
  return guarded([&] {
    require(table, "table");
    require(token, "token");
    require(out, "out");
    if (dim != table->table.dim())
      throw uva::invalid_argument("buffer holds " + std::to_string(dim) + " values, table dimension is " +
                                  std::to_string(table->table.dim()));
    auto v = table->table.vector_for(token);
    std::copy(v.begin(), v.end(), out);
    if (found) *found = table->table.find(token).has_value() ? 1 : 0;
  });
}

void uva_table_free(uva_table* table) { delete table; }

// ---- siamese

void uva_siamese_config_default(uva_siamese_config* config) {
  if (!config) return;
  const uva::SiameseConfig d;
  config->lstm_hidden = d.lstm_hidden;
  config->dense1_units = d.dense1_units;
  config->dense2_units = d.dense2_units;
  config->use_attention = d.use_attention ? 1 : 0;
  config->attention_units = d.attention_units;
  config->max_tokens = d.max_tokens;
  config->learning_rate = d.learning_rate;
  config->batch_size = d.batch_size;
  config->epochs = d.epochs;
  config->threshold = d.threshold;
  config->seed = d.seed;
  config->trainable_embeddings = d.trainable_embeddings ? 1 : 0;
  config->threads = d.threads;
}

uva_status uva_model_build(const uva_siamese_config* config, const uva_table* table, uva_model** out) {
  return guarded([&] {
    require(config, "config");
    require(table, "table");
    require(out, "out");
    uva::SiameseConfig c;
    c.lstm_hidden = config->lstm_hidden;
    c.dense1_units = config->dense1_units;
    c.dense2_units = config->dense2_units;
    c.use_attention = config->use_attention != 0;
    c.attention_units = config->attention_units;
    c.max_tokens = config->max_tokens;
    c.learning_rate = config->learning_rate;
    c.batch_size = config->batch_size;
    c.epochs = config->epochs;
    c.threshold = config->threshold;
    c.seed = config->seed;
    c.trainable_embeddings = config->trainable_embeddings != 0;
    c.threads = config->threads;
    *out = new uva_model{uva::SiameseModel::build(c, table->table, std::make_shared<uva::WordTokenizer>())};
  });
}

uva_status uva_model_train(uva_model* model, const uva_store* store, const uva_pairs* train, const uva_pairs* valid,
                           double* loss_out, size_t loss_capacity) {
  return guarded([&] {
    require(model, "model");
    require(store, "store");
    require(train, "train");
    const auto train_set = model->model.make_dataset(store->store, train->pairs);
    uva::PairDataset valid_set;
    if (valid) valid_set = model->model.make_dataset(store->store, valid->pairs);
    const auto report = uva::train(model->model, train_set, valid ? &valid_set : nullptr);
    if (loss_out)
      for (std::size_t i = 0; i < std::min(loss_capacity, report.epoch_loss.size()); ++i)
        loss_out[i] = report.epoch_loss[i];
  });
}

uva_status uva_model_similarity(const uva_model* model, const char* a, const char* b, double* out) {
  return guarded([&] {
    require(model, "model");
    require(a, "a");
    require(b, "b");
    require(out, "out");
    *out = model->model.similarity_text(a, b);
  });
}

uva_status uva_model_evaluate(const uva_model* model, const uva_store* store, const uva_pairs* pairs,
                              double threshold, uva_metrics* out) {
  return guarded([&] {
    require(model, "model");
    require(store, "store");
    require(pairs, "pairs");
    require(out, "out");
    if (pairs->pairs.empty()) throw uva::invalid_argument("no pairs to evaluate");
    const auto data = model->model.make_dataset(store->store, pairs->pairs);
    const auto pred = uva::predict(model->model, data, threshold);
    fill_metrics(uva::confusion(pred.scores, pred.labels, threshold), threshold, out);
  });
}

uva_status uva_model_save(const uva_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    model->model.save(path);
  });
}

uva_status uva_model_load(const char* path, uva_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new uva_model{uva::SiameseModel::load(path)};
  });
}

uva_status uva_model_checksum(const uva_model* model, char** out_hex) {
  return guarded([&] {
    require(model, "model");
    require(out_hex, "out_hex");
    *out_hex = dup_string(model->model.weights_checksum());
  });
}

void uva_model_free(uva_model* model) { delete model; }

// ---- cross-encoder

uva_status uva_cross_format(const uva_encoder* encoder, const char* a, const char* b, size_t max_len,
                            char** out_json) {
  return guarded([&] {
    require(encoder, "encoder");
    require(a, "a");
    require(b, "b");
    require(out_json, "out_json");
    const auto f = uva::format_pair(a, b, encoder->encoder->tokenizer(), max_len);
    *out_json = dup_string(nlohmann::json{{"tokens", f.tokens}, {"segments", f.segments}}.dump());
  });
}

uva_status uva_cross_predict(const uva_encoder* encoder, const char* a, const char* b, double threshold,
                             double* score, int* label) {
  return guarded([&] {
    require(encoder, "encoder");
    require(a, "a");
    require(b, "b");
    uva::CrossSettings s;
    s.threshold = threshold;
    const auto p = uva::predict_pair(*encoder->encoder, a, b, s);
    if (score) *score = p.score;
    if (label) *label = p.label;
  });
}

uva_status uva_cross_evaluate(const uva_encoder* encoder, const uva_store* store, const uva_pairs* pairs,
                              uva_order order, double threshold, uva_metrics* out) {
  return guarded([&] {
    require(encoder, "encoder");
    require(store, "store");
    require(pairs, "pairs");
    require(out, "out");
    std::vector<uva::CrossPair> cp;
    for (const auto& p : pairs->pairs)
      cp.push_back({p.a, p.b, store->store.at(p.a).str, store->store.at(p.b).str, p.label});
    uva::CrossSettings s;
    s.threshold = threshold;
    const auto run = uva::evaluate_ordered(*encoder->encoder, encoder->encoder->name(), cp,
                                           order == UVA_ORDER_JI ? uva::PairOrder::JI : uva::PairOrder::IJ, s);
    fill_metrics(run.row.counts, threshold, out);
  });
}

// ---- metrics

uva_status uva_metrics_compute(const double* scores, const int* labels, size_t n, double threshold,
                               uva_metrics* out) {
  return guarded([&] {
    require(out, "out");
    if (n == 0) throw uva::invalid_argument("no scores to evaluate");
    require(scores, "scores");
    require(labels, "labels");
    fill_metrics(uva::confusion({scores, n}, {labels, n}, threshold), threshold, out);
  });
}

uva_status uva_metrics_render(const char* const* models, const char* const* configurations, const uva_metrics* rows,
                              size_t n, uva_table_style style, char** out) {
  return guarded([&] {
    require(out, "out");
    if (n) {
      require(models, "models");
      require(configurations, "configurations");
      require(rows, "rows");
    }
    std::vector<uva::MetricsRow> r(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i].model = models[i] ? models[i] : "";
      r[i].configuration = configurations[i] ? configurations[i] : "";
      r[i].accuracy = rows[i].accuracy;
      r[i].precision = rows[i].precision;
      r[i].recall = rows[i].recall;
      r[i].f1 = rows[i].f1;
      r[i].threshold = rows[i].threshold;
    }
    *out = dup_string(uva::render(r, style == UVA_STYLE_CSV ? uva::TableStyle::Csv : uva::TableStyle::Markdown));
  });
}

// ---- experiments

uva_status uva_experiment_load(const char* config_path, uva_experiment** out) {
  return guarded([&] {
    require(out, "out");
    auto exp = std::make_unique<uva_experiment>();
    if (config_path) exp->config = uva::ExperimentConfig::load_file(config_path);
    exp->config.apply_environment();
    *out = exp.release();
  });
}

uva_status uva_experiment_set(uva_experiment* exp, const char* key, const char* json_value) {
  return guarded([&] {
    require(exp, "exp");
    require(key, "key");
    require(json_value, "json_value");
    nlohmann::json doc = nlohmann::json::parse(exp->config.to_json());
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(json_value);
    } catch (const nlohmann::json::exception&) {
      throw uva::invalid_argument(std::string("value for ") + key + " is not a JSON literal: " + json_value);
    }
    if (!doc.contains(key)) throw uva::validation_error(std::string("unknown config key '") + key + "'");
    doc[key] = value;
    exp->config = uva::ExperimentConfig::from_json(doc.dump());
  });
}

uva_status uva_experiment_config_json(const uva_experiment* exp, char** out) {
  return guarded([&] {
    require(exp, "exp");
    require(out, "out");
    *out = dup_string(exp->config.to_json());
  });
}

uva_status uva_experiment_run(const uva_experiment* exp, const char* command, unsigned flags, uva_log_fn log,
                              void* user, char** out_summary) {
  return guarded([&] {
    require(exp, "exp");
    require(command, "command");
    uva::ExperimentConfig cfg = exp->config;
    cfg.finalize();
    uva::RunOptions opt;
    opt.force = (flags & UVA_RUN_FORCE) != 0;
    opt.resume = (flags & UVA_RUN_RESUME) != 0;
    if (log) opt.log = LogBridge{log, user};
    std::string summary = uva::run_command(command, cfg, opt);
    if (out_summary) *out_summary = dup_string(summary);
  });
}

void uva_experiment_free(uva_experiment* exp) { delete exp; }

uva_status uva_report(const char* const* run_dirs, size_t n, uva_table_style style, char** out) {
  return guarded([&] {
    require(out, "out");
    if (n) require(run_dirs, "run_dirs");
    std::vector<std::string> dirs;
    for (std::size_t i = 0; i < n; ++i) {
      require(run_dirs[i], "run_dirs[i]");
      dirs.emplace_back(run_dirs[i]);
    }
    const auto rows = uva::collect_rows(dirs);
    *out = dup_string(uva::render(rows, style == UVA_STYLE_CSV ? uva::TableStyle::Csv : uva::TableStyle::Markdown));
  });
}

uva_status uva_replay(const char* run_dir, const char* out_dir, unsigned flags, uva_log_fn log, void* user,
                      char** out_log, size_t* out_mismatches) {
  return guarded([&] {
    require(run_dir, "run_dir");
    require(out_dir, "out_dir");
    uva::RunOptions opt;
    opt.force = (flags & UVA_RUN_FORCE) != 0;
    if (log) opt.log = LogBridge{log, user};
    const auto result = uva::replay(run_dir, out_dir, opt);
    if (out_log) *out_log = dup_string(result.log);
    if (out_mismatches) *out_mismatches = result.mismatched.size();
  });
}

uva_status uva_synth_corpus(const char* path, uint64_t seed, size_t concepts, int force) {
  return guarded([&] {
    require(path, "path");
    if (!force && std::filesystem::exists(path))
      throw uva::Error(uva::ErrorKind::Exists, std::string(path) + " already exists; pass --force to overwrite it");
    uva::synth::CorpusSpec spec;
    spec.seed = seed;
    if (concepts) spec.concepts = concepts;
    auto store = uva::AtomStore::from_atoms(uva::synth::generate_corpus(spec));
    std::ostringstream out;
    out << "# synthetic terminology: " << spec.concepts << " concepts, seed " << spec.seed << "\n";
    uva::write_atoms(store, out);
    uva::write_file(path, out.str());
  });
}

uva_status uva_config_schema(char** out) {
  return guarded([&] {
    require(out, "out");
    *out = dup_string(uva::config_schema());
  });
}

}  // extern "C"
