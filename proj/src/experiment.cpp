#include "uva/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "uva/atom_store.hpp"
#include "uva/common.hpp"
#include "uva/encoders.hpp"
#include "uva/lexsim.hpp"

namespace uva {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Config fields

[[noreturn]] void bad_type(const char* key, const char* expected) {
  throw validation_error(std::string("config key '") + key + "' must be " + expected);
}

std::string as_string(const json& v, const char* key) {
  if (!v.is_string()) bad_type(key, "a string");
  return v.get<std::string>();
}

std::uint64_t as_uint(const json& v, const char* key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  bad_type(key, "a non-negative integer");
}

std::size_t as_size(const json& v, const char* key) { return static_cast<std::size_t>(as_uint(v, key)); }

double as_number(const json& v, const char* key) {
  if (!v.is_number()) bad_type(key, "a number");
  return v.get<double>();
}

bool as_bool(const json& v, const char* key) {
  if (!v.is_boolean()) bad_type(key, "true or false");
  return v.get<bool>();
}

std::vector<double> as_numbers(const json& v, const char* key) {
  if (!v.is_array()) bad_type(key, "an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) out.push_back(as_number(x, key));
  return out;
}

std::vector<std::string> as_strings(const json& v, const char* key) {
  if (!v.is_array()) bad_type(key, "an array of strings");
  std::vector<std::string> out;
  for (const auto& x : v) out.push_back(as_string(x, key));
  return out;
}

std::string_view source_name(EmbeddingSource s) {
  switch (s) {
    case EmbeddingSource::Static: return "static";
    case EmbeddingSource::Contextual: return "contextual";
    default: return "random";
  }
}

EmbeddingSource parse_source(std::string_view s) {
  if (s == "static") return EmbeddingSource::Static;
  if (s == "contextual") return EmbeddingSource::Contextual;
  if (s == "random") return EmbeddingSource::Random;
  throw validation_error("embedding.source must be static, contextual or random, not '" + std::string(s) + "'");
}

struct Field {
  const char* key;
  const char* type;
  const char* doc;
  bool hashed;
  json (*get)(const ExperimentConfig&);
  void (*set)(ExperimentConfig&, const json&);
};

#define UVA_FIELD(KEY, TYPE, DOC, HASHED, MEMBER, CONV)                                           \
  Field {                                                                                        \
    KEY, TYPE, DOC, HASHED, [](const ExperimentConfig& c) -> json { return c.MEMBER; },         \
        [](ExperimentConfig& c, const json& v) { c.MEMBER = CONV(v, KEY); }                      \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      UVA_FIELD("atom_file", "string", "Atom file, one AUI|STR|SRC|CUI record per line.", true, atom_file, as_string),
      UVA_FIELD("vector_file", "string", "Static embedding table (word2vec text format); embedding.source=static.",
                true, vector_file, as_string),
      UVA_FIELD("encoder_registry", "string", "JSON registry mapping model names to encoder locators.", true,
                encoder_registry, as_string),
      UVA_FIELD("encoder_model", "string", "Registry entry used for contextual extraction.", true, encoder_model,
                as_string),
      UVA_FIELD("out_dir", "string", "Run directory.", false, out_dir, as_string),
      UVA_FIELD("seed", "uint", "Global seed; every random choice derives from it.", true, seed, as_uint),
      UVA_FIELD("pairs.negative_ratio", "number", "Negatives per positive pair.", true, pairs.negative_ratio,
                as_number),
      UVA_FIELD("pairs.topn", "uint", "Most similar non-synonymous atoms kept per anchor for TOPN_SIM.", true,
                pairs.topn, as_size),
      {"pairs.stratum_weights", "number[3]", "Share of negatives for TOPN_SIM, RAN_SIM, RAN_NOSIM.", true,
       [](const ExperimentConfig& c) -> json { return c.pairs.stratum_weights; },
       [](ExperimentConfig& c, const json& v) {
         auto w = as_numbers(v, "pairs.stratum_weights");
         if (w.size() != 3) bad_type("pairs.stratum_weights", "an array of three numbers");
         c.pairs.stratum_weights = {w[0], w[1], w[2]};
       }},
      UVA_FIELD("pairs.cross_source_only", "bool", "Positives only between atoms of different sources.", true,
                pairs.cross_source_only, as_bool),
      UVA_FIELD("pairs.test_fraction", "number", "Share of every split tag held out for testing.", true,
                pairs.test_fraction, as_number),
      {"pairs.measure", "string", "Lexical similarity: jaccard or dice.", true,
       [](const ExperimentConfig& c) -> json { return std::string(to_string(c.pairs.measure)); },
       [](ExperimentConfig& c, const json& v) {
         c.pairs.measure = parse_similarity_measure(as_string(v, "pairs.measure"));
       }},
      UVA_FIELD("pairs.enumerate_limit", "uint", "Candidate universes up to this size are enumerated exactly.", true,
                pairs.enumerate_limit, as_size),
      UVA_FIELD("pairs.rejection_factor", "uint", "Rejection-sampling attempts per requested pair.", true,
                pairs.rejection_factor, as_size),
      UVA_FIELD("pairs.threads", "uint", "Worker threads for the similarity index.", false, pairs.threads, as_size),
      {"embedding.source", "string", "static, contextual or random.", true,
       [](const ExperimentConfig& c) -> json { return std::string(source_name(c.embedding_source)); },
       [](ExperimentConfig& c, const json& v) { c.embedding_source = parse_source(as_string(v, "embedding.source")); }},
      UVA_FIELD("embedding.random_dim", "uint", "Dimension of random tables.", true, random_dim, as_size),
      UVA_FIELD("embedding.random_scale", "number", "Random tables draw from U(-scale, scale).", true, random_scale,
                as_number),
      {"extract.occurrence", "string", "first, last or average.", true,
       [](const ExperimentConfig& c) -> json { return std::string(to_string(c.strategy.occurrence)); },
       [](ExperimentConfig& c, const json& v) {
         c.strategy.occurrence = parse_occurrence(as_string(v, "extract.occurrence"));
       }},
      {"extract.layer_pool", "string", "last_layer or avg_last4.", true,
       [](const ExperimentConfig& c) -> json { return std::string(to_string(c.strategy.layer_pool)); },
       [](ExperimentConfig& c, const json& v) {
         c.strategy.layer_pool = parse_layer_pool(as_string(v, "extract.layer_pool"));
       }},
      UVA_FIELD("extract.max_tokens", "uint", "Tokens per string fed to the encoder.", true, extract_max_tokens,
                as_size),
      UVA_FIELD("extract.corpus", "string", "all or train.", true, extract_corpus, as_string),
      UVA_FIELD("siamese.lstm_hidden", "uint", "Bi-LSTM units per direction.", true, siamese.lstm_hidden, as_size),
      UVA_FIELD("siamese.dense1_units", "uint", "First dense layer (ReLU).", true, siamese.dense1_units, as_size),
      UVA_FIELD("siamese.dense2_units", "uint", "Second dense layer (linear).", true, siamese.dense2_units, as_size),
      UVA_FIELD("siamese.use_attention", "bool", "Attention pooling over the Bi-LSTM outputs.", true,
                siamese.use_attention, as_bool),
      UVA_FIELD("siamese.attention_units", "uint", "Attention projection size.", true, siamese.attention_units,
                as_size),
      UVA_FIELD("siamese.max_tokens", "uint", "Tokens kept per string.", true, siamese.max_tokens, as_size),
      UVA_FIELD("siamese.learning_rate", "number", "Adam learning rate.", true, siamese.learning_rate, as_number),
      UVA_FIELD("siamese.batch_size", "uint", "Pairs per mini-batch.", true, siamese.batch_size, as_size),
      UVA_FIELD("siamese.epochs", "uint", "Training epochs.", true, siamese.epochs, as_size),
      UVA_FIELD("siamese.trainable_embeddings", "bool", "Update the embedding layer during training.", true,
                siamese.trainable_embeddings, as_bool),
      {"siamese.loss", "string", "bce or mse.", true,
       [](const ExperimentConfig& c) -> json {
         return c.siamese.loss == LossKind::MeanSquaredError ? "mse" : "bce";
       },
       [](ExperimentConfig& c, const json& v) {
         auto s = as_string(v, "siamese.loss");
         if (s == "bce")
           c.siamese.loss = LossKind::BinaryCrossEntropy;
         else if (s == "mse")
           c.siamese.loss = LossKind::MeanSquaredError;
         else
           throw validation_error("siamese.loss must be bce or mse, not '" + s + "'");
       }},
      UVA_FIELD("siamese.tokenizer", "string", "word, wordpiece:<vocab> or wordpiece-cased:<vocab>.", true,
                siamese.tokenizer, as_string),
      UVA_FIELD("siamese.threads", "uint", "Worker threads for training and prediction.", false, siamese.threads,
                as_size),
      UVA_FIELD("train.valid_fraction", "number", "Share of training pairs held out for per-epoch validation.", true,
                valid_fraction, as_number),
      UVA_FIELD("train.checkpoint_every", "uint", "Checkpoint interval in epochs (0: at the end only).", false,
                checkpoint_every, as_size),
      UVA_FIELD("cross.models", "string[]", "Registry entries scored by cross-eval.", true, cross_models, as_strings),
      {"cross.orders", "string[]", "Input orders for cross-eval: ij, ji.", true,
       [](const ExperimentConfig& c) -> json {
         json a = json::array();
         for (auto o : c.cross_orders) a.push_back(o == PairOrder::IJ ? "ij" : "ji");
         return a;
       },
       [](ExperimentConfig& c, const json& v) {
         c.cross_orders.clear();
         for (const auto& s : as_strings(v, "cross.orders")) c.cross_orders.push_back(parse_order(s));
       }},
      UVA_FIELD("cross.max_len", "uint", "Token budget of a formatted pair.", true, cross.max_len, as_size),
      UVA_FIELD("cross.invert", "bool", "Read a high head probability as non-synonymous.", true, cross.invert,
                as_bool),
      UVA_FIELD("cross.threads", "uint", "Worker threads for cross-eval.", false, cross.threads, as_size),
      UVA_FIELD("eval.threshold", "number", "Decision threshold: synonymous iff score >= threshold.", true, threshold,
                as_number),
      UVA_FIELD("eval.sweep_thresholds", "number[]", "Thresholds of the sweep table.", true, sweep_thresholds,
                as_numbers),
      UVA_FIELD("run.model_label", "string", "Model column of the metrics tables.", true, model_label, as_string),
      UVA_FIELD("run.config_label", "string", "Configuration column; empty derives one.", true, config_label,
                as_string),
  };
  return table;
}

#undef UVA_FIELD

ordered_json config_object(const ExperimentConfig& c, bool hashed_only) {
  ordered_json j = ordered_json::object();
  for (const auto& f : fields())
    if (!hashed_only || f.hashed) j[f.key] = f.get(c);
  return j;
}

// ---------------------------------------------------------------------------
// Run directory

constexpr const char* kConfigFile = "config.resolved.json";
constexpr const char* kManifestFile = "manifest.jsonl";

std::string utc_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class RunDir {
 public:
  RunDir(const ExperimentConfig& cfg, const RunOptions& opt, std::string command)
      : cfg_(cfg), opt_(opt), root_(cfg.out_dir), command_(std::move(command)), start_(std::chrono::steady_clock::now()) {
    if (cfg.out_dir.empty()) throw invalid_argument("out_dir is empty");
  }

  std::string path(const std::string& name) const { return (root_ / name).string(); }
  bool exists(const std::string& name) const { return fs::exists(root_ / name); }

  /// Refuses to clobber outputs unless forced, then binds the run directory
  /// to this config.
  void prepare(const std::vector<std::string>& outputs) {
    for (const auto& o : outputs)
      if (exists(o) && !opt_.force)
        throw Error(ErrorKind::Exists, path(o) + " already exists; pass --force to overwrite it");
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw io_error("cannot create run directory " + root_.string() + ": " + ec.message());
    const std::string hash = cfg_.hash();
    if (exists(kConfigFile)) {
      std::string stored;
      try {
        stored = json::parse(read_file(path(kConfigFile))).value("config_hash", std::string());
      } catch (const json::exception&) {
        throw ParseError(0, path(kConfigFile) + " is not valid JSON");
      }
      if (stored != hash && !opt_.force)
        throw Error(ErrorKind::HashMismatch, "run directory " + root_.string() + " belongs to config " +
                                                 stored.substr(0, 12) + " but this config hashes to " +
                                                 hash.substr(0, 12) + "; choose another --out or pass --force");
    }
    ordered_json doc = {{"config_hash", hash}, {"config", config_object(cfg_, false)}};
    write_file(path(kConfigFile), doc.dump(2) + "\n");
  }

  void input(const std::string& file) {
    if (!fs::exists(file)) throw io_error("input file " + file + " does not exist");
    inputs_[file] = sha256_file(file);
  }
  void input_local(const std::string& name, const std::string& needed_by) {
    if (!exists(name))
      throw io_error(path(name) + " is missing; run `" + needed_by + "` first");
    run_inputs_[name] = sha256_file(path(name));
  }
  void output(const std::string& name) { outputs_.push_back(name); }

  void write(const std::string& name, std::string_view contents) {
    write_file(path(name), contents);
    output(name);
  }

  void log(const std::string& line) const {
    if (opt_.log) opt_.log(line);
  }

  void commit() {
    ordered_json in = ordered_json::object(), local = ordered_json::object(), out = ordered_json::object();
    for (const auto& [k, v] : inputs_) in[k] = v;
    for (const auto& [k, v] : run_inputs_) local[k] = v;
    for (const auto& o : outputs_) out[o] = sha256_file(path(o));
    ordered_json entry = {
        {"command", command_},
        {"toolkit_version", kToolkitVersion},
        {"started_utc", started_},
        {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count()},
        {"seed", cfg_.seed},
        {"config_hash", cfg_.hash()},
        {"options", {{"force", opt_.force}, {"resume", opt_.resume}}},
        {"inputs", in},
        {"run_inputs", local},
        {"outputs", out},
        {"config", config_object(cfg_, false)},
    };
    std::ofstream f(path(kManifestFile), std::ios::app | std::ios::binary);
    if (!f) throw io_error("cannot append to " + path(kManifestFile));
    f << entry.dump() << '\n';
    if (!f) throw io_error("cannot append to " + path(kManifestFile));
  }

 private:
  const ExperimentConfig& cfg_;
  const RunOptions& opt_;
  fs::path root_;
  std::string command_;
  std::string started_ = utc_now();
  std::chrono::steady_clock::time_point start_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> run_inputs_;
  std::vector<std::string> outputs_;
};

AtomStore load_store(const ExperimentConfig& cfg, RunDir& run) {
  if (cfg.atom_file.empty()) throw invalid_argument("atom_file is not set (config key atom_file or UVAKIT_ATOM_FILE)");
  run.input(cfg.atom_file);
  return ingest_atoms_file(cfg.atom_file);
}

std::vector<LabeledPair> load_pairs(RunDir& run, const std::string& name, const AtomStore& store) {
  run.input_local(name, "gen-pairs");
  auto pairs = read_pairs_file(run.path(name));
  check_pairs_against_store(pairs, store);
  return pairs;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

double token_coverage(const EmbeddingTable& table, const Tokenizer& tok, const AtomStore& store) {
  std::size_t total = 0, hit = 0;
  for (const auto& a : store.atoms())
    for (const auto& t : tok.tokenize(a.str)) {
      ++total;
      if (table.find(t)) ++hit;
    }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

std::string sanitize(std::string s) {
  for (auto& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw validation_error("config must be a JSON object");
  ExperimentConfig c;
  for (const auto& [key, value] : doc.items()) {
    auto it = std::find_if(fields().begin(), fields().end(), [&](const Field& f) { return key == f.key; });
    if (it == fields().end()) throw validation_error("unknown config key '" + key + "' (see `uvakit schema`)");
    it->set(c, value);
  }
  return c;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
  try {
    ExperimentConfig c = from_json(read_file(path));
    // Input paths are relative to the config file; out_dir stays relative to the caller.
    const fs::path base = fs::absolute(path).parent_path();
    for (std::string* p : {&c.atom_file, &c.vector_file, &c.encoder_registry})
      if (!p->empty() && fs::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
    return c;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Io) throw;
    throw Error(e.kind(), path + ": " + e.what());
  }
}

std::string ExperimentConfig::to_json() const { return config_object(*this, false).dump(2) + "\n"; }

std::string ExperimentConfig::hash() const { return sha256_hex(config_object(*this, true).dump()); }

void ExperimentConfig::apply_environment() {
  auto env = [](const char* name, std::string& target) {
    if (const char* v = std::getenv(name); v && *v) target = v;
  };
  env("UVAKIT_ATOM_FILE", atom_file);
  env("UVAKIT_VECTOR_FILE", vector_file);
  env("UVAKIT_ENCODER_REGISTRY", encoder_registry);
  env("UVAKIT_OUT_DIR", out_dir);
}

void ExperimentConfig::finalize() {
  for (std::string* p : {&atom_file, &vector_file, &encoder_registry})
    if (!p->empty()) *p = fs::absolute(*p).lexically_normal().string();
  pairs.seed = seed;
  siamese.seed = seed;
  siamese.threshold = threshold;
  cross.threshold = threshold;
  pairs.validate();
  siamese.validate();
  if (!(valid_fraction >= 0.0 && valid_fraction < 1.0))
    throw validation_error("train.valid_fraction must lie in [0, 1)");
  if (random_dim == 0) throw validation_error("embedding.random_dim must be >= 1");
  if (!(random_scale > 0.0)) throw validation_error("embedding.random_scale must be > 0");
  if (extract_corpus != "all" && extract_corpus != "train")
    throw validation_error("extract.corpus must be all or train, not '" + extract_corpus + "'");
  if (extract_max_tokens == 0) throw validation_error("extract.max_tokens must be >= 1");
  if (sweep_thresholds.empty()) throw validation_error("eval.sweep_thresholds must not be empty");
  if (cross.max_len < 3) throw validation_error("cross.max_len must be >= 3");
  if (cross_orders.empty()) throw validation_error("cross.orders must not be empty");
  if (model_label.empty()) throw validation_error("run.model_label must not be empty");
}

std::string ExperimentConfig::effective_config_label() const {
  if (!config_label.empty()) return config_label;
  std::string label;
  switch (embedding_source) {
    case EmbeddingSource::Static: label = "static " + fs::path(vector_file).filename().string(); break;
    case EmbeddingSource::Contextual: label = encoder_model + " " + strategy.name(); break;
    case EmbeddingSource::Random: label = "random " + std::to_string(random_dim) + "d"; break;
  }
  if (siamese.use_attention) label += ", attention";
  return label;
}

std::string config_schema() {
  const ExperimentConfig defaults;
  ordered_json keys = ordered_json::array();
  for (const auto& f : fields())
    keys.push_back({{"key", f.key}, {"type", f.type}, {"default", f.get(defaults)}, {"description", f.doc}});
  ordered_json doc = {
      {"format", "uvakit.config"},
      {"version", 1},
      {"environment_overrides", {"UVAKIT_ATOM_FILE", "UVAKIT_VECTOR_FILE", "UVAKIT_ENCODER_REGISTRY", "UVAKIT_OUT_DIR"}},
      {"keys", keys}};
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Commands

std::string cmd_ingest(const ExperimentConfig& cfg, const RunOptions& opt) {
  RunDir run(cfg, opt, "ingest");
  run.prepare({"store_summary.json"});
  const AtomStore store = load_store(cfg, run);
  const ValidationReport rep = validate(store);
  ordered_json j = {{"atom_file", cfg.atom_file},
                    {"sha256", sha256_file(cfg.atom_file)},
                    {"atoms", rep.atoms},
                    {"concepts", rep.concepts},
                    {"sources", rep.sources},
                    {"singleton_concepts", rep.singleton_concepts},
                    {"atoms_per_source", rep.atoms_per_source}};
  run.write("store_summary.json", j.dump(2) + "\n");
  run.commit();
  return "ingested " + std::to_string(rep.atoms) + " atoms, " + std::to_string(rep.concepts) + " concepts, " +
         std::to_string(rep.sources) + " sources (" + std::to_string(rep.singleton_concepts) +
         " single-atom concepts)";
}

std::string cmd_gen_pairs(const ExperimentConfig& cfg, const RunOptions& opt) {
  RunDir run(cfg, opt, "gen-pairs");
  run.prepare({"pairs_train.tsv", "pairs_test.tsv", "pairs_report.json"});
  const AtomStore store = load_store(cfg, run);
  auto positives = generate_positives(store, cfg.pairs.cross_source_only);
  if (positives.empty()) throw validation_error("the atom file yields no synonymous pairs");
  run.log("positives: " + std::to_string(positives.size()));
  const auto index = SimilarityIndex::build(store, cfg.pairs.measure);
  auto negatives = generate_negatives(store, index, cfg.pairs, positives.size());
  for (const auto& note : negatives.notes) run.log("note: " + note);

  std::vector<LabeledPair> all = std::move(positives);
  const std::size_t n_pos = all.size();
  all.insert(all.end(), negatives.pairs.begin(), negatives.pairs.end());
  const auto split = split_train_test(all, cfg.pairs);

  write_pairs_file(split.train, store, run.path("pairs_train.tsv"));
  run.output("pairs_train.tsv");
  write_pairs_file(split.test, store, run.path("pairs_test.tsv"));
  run.output("pairs_test.tsv");

  auto tag_counts = [](const std::vector<LabeledPair>& v) {
    ordered_json j = ordered_json::object();
    for (SplitTag t : {SplitTag::Pos, SplitTag::TopnSim, SplitTag::RanSim, SplitTag::RanNosim})
      j[std::string(to_string(t))] = std::count_if(v.begin(), v.end(), [t](const LabeledPair& p) { return p.tag == t; });
    return j;
  };
  ordered_json strata = ordered_json::array();
  for (const auto& s : negatives.strata)
    strata.push_back({{"tag", std::string(to_string(s.tag))}, {"requested", s.requested}, {"produced", s.produced}});
  ordered_json rep = {{"positives", n_pos},
                      {"negative_target", negatives.target},
                      {"negatives", negatives.pairs.size()},
                      {"shortfall", negatives.shortfall},
                      {"strata", strata},
                      {"notes", negatives.notes},
                      {"train", tag_counts(split.train)},
                      {"test", tag_counts(split.test)}};
  run.write("pairs_report.json", rep.dump(2) + "\n");
  run.commit();
  return std::to_string(n_pos) + " positive and " + std::to_string(negatives.pairs.size()) + " negative pairs; " +
         std::to_string(split.train.size()) + " train, " + std::to_string(split.test.size()) + " test" +
         (negatives.shortfall ? " (short by " + std::to_string(negatives.shortfall) + ")" : "");
}

std::string cmd_extract(const ExperimentConfig& cfg, const RunOptions& opt) {
  RunDir run(cfg, opt, "extract");
  run.prepare({"embeddings.vec", "extract_report.json"});
  const AtomStore store = load_store(cfg, run);
  const auto tokenizer = make_tokenizer(cfg.siamese.tokenizer);

  std::vector<std::string> corpus;
  if (cfg.extract_corpus == "train") {
    auto train = load_pairs(run, "pairs_train.tsv", store);
    std::set<std::string> used;
    for (const auto& p : train) used.insert(p.a), used.insert(p.b);
    for (const auto& a : store.atoms())
      if (used.count(a.aui)) corpus.push_back(a.str);
  } else {
    for (const auto& a : store.atoms()) corpus.push_back(a.str);
  }

  ordered_json rep = {{"source", std::string(source_name(cfg.embedding_source))}};
  EmbeddingTable table(1);
  switch (cfg.embedding_source) {
    case EmbeddingSource::Static: {
      if (cfg.vector_file.empty())
        throw invalid_argument("embedding.source is static but vector_file is not set (or UVAKIT_VECTOR_FILE)");
      run.input(cfg.vector_file);
      table = load_static_table_file(cfg.vector_file);
      rep["vector_file"] = cfg.vector_file;
      break;
    }
    case EmbeddingSource::Random: {
      std::set<std::string> vocab;
      for (const auto& s : corpus)
        for (auto& t : tokenizer->tokenize(s)) vocab.insert(std::move(t));
      table = random_table({vocab.begin(), vocab.end()}, cfg.random_dim, derive_seed(cfg.seed, "embedding"),
                           cfg.random_scale);
      break;
    }
    case EmbeddingSource::Contextual: {
      if (cfg.encoder_registry.empty() || cfg.encoder_model.empty())
        throw invalid_argument("contextual extraction needs encoder_registry and encoder_model");
      run.input(cfg.encoder_registry);
      const auto registry = EncoderRegistry::load_file(cfg.encoder_registry);
      const auto encoder = registry.open(cfg.encoder_model);
      run.log("extracting with " + encoder->name() + " (" + cfg.strategy.name() + ") over " +
              std::to_string(corpus.size()) + " strings");
      table = extract_contextual_table(*encoder, corpus, cfg.strategy, cfg.extract_max_tokens);
      rep["encoder_model"] = cfg.encoder_model;
      rep["encoder"] = encoder->name();
      rep["strategy"] = cfg.strategy.name();
      rep["layers"] = encoder->num_layers();
      break;
    }
  }
  write_table_file(table, run.path("embeddings.vec"));
  run.output("embeddings.vec");
  const double coverage = token_coverage(table, *tokenizer, store);
  rep["corpus"] = cfg.extract_corpus;
  rep["corpus_strings"] = corpus.size();
  rep["tokens"] = table.size();
  rep["dim"] = table.dim();
  rep["table_hash"] = table_hash(table);
  rep["token_coverage"] = coverage;
  run.write("extract_report.json", rep.dump(2) + "\n");
  run.commit();
  return "embedding table: " + std::to_string(table.size()) + " tokens x " + std::to_string(table.dim()) +
         " dims, atom token coverage " + pct(coverage);
}

std::string cmd_train(const ExperimentConfig& cfg, const RunOptions& opt) {
  RunDir run(cfg, opt, "train");
  const bool resuming = opt.resume && run.exists("model.ckpt.json");
  if (!resuming) run.prepare({"model.ckpt.json", "train_report.json"});
  else run.prepare({});
  const AtomStore store = load_store(cfg, run);
  run.input_local("embeddings.vec", "extract");
  const EmbeddingTable table = load_static_table_file(run.path("embeddings.vec"));
  auto train_pairs = load_pairs(run, "pairs_train.tsv", store);
  std::shared_ptr<const Tokenizer> tokenizer(make_tokenizer(cfg.siamese.tokenizer));

  std::vector<LabeledPair> fit = train_pairs, valid;
  if (cfg.valid_fraction > 0.0) {
    DatasetSpec vs = cfg.pairs;
    vs.test_fraction = cfg.valid_fraction;
    auto split = split_train_test(train_pairs, vs, "valid");
    fit = std::move(split.train);
    valid = std::move(split.test);
  }

  SiameseModel model = [&] {
    if (!resuming) return SiameseModel::build(cfg.siamese, table, tokenizer);
    run.input_local("model.ckpt.json", "train");
    auto m = SiameseModel::load(run.path("model.ckpt.json"), &cfg.siamese, tokenizer);
    if (m.table_hash() != table_hash(table))
      throw Error(ErrorKind::HashMismatch, "checkpoint " + run.path("model.ckpt.json") +
                                               " was trained on a different embedding table; retrain with --force");
    return m;
  }();
  model.mutable_config().epochs = cfg.siamese.epochs;
  model.mutable_config().threads = cfg.siamese.threads;
  model.mutable_config().threshold = cfg.siamese.threshold;
  const std::size_t start_epoch = model.train_state().epochs_done;
  // Resuming is exact, so the artifacts do not record where it happened.
  if (start_epoch) run.log("resuming at epoch " + std::to_string(start_epoch + 1));

  const PairDataset fit_set = model.make_dataset(store, fit);
  const PairDataset valid_set = model.make_dataset(store, valid);
  TrainOptions topt;
  const std::string ckpt = run.path("model.ckpt.json");
  topt.on_epoch = [&](std::size_t epoch, double loss) {
    std::string line = "epoch " + std::to_string(epoch + 1) + "/" + std::to_string(cfg.siamese.epochs) + " loss " +
                       format_double(loss);
    const auto& vrows = model.train_state().epoch_valid;
    if (!valid.empty() && !vrows.empty()) line += " valid_f1 " + pct(vrows.back().f1);
    run.log(line);
    if (cfg.checkpoint_every && (epoch + 1) % cfg.checkpoint_every == 0) model.save(ckpt);
  };
  const TrainReport report = train(model, fit_set, valid.empty() ? nullptr : &valid_set, topt);
  model.save(ckpt);
  run.output("model.ckpt.json");

  ordered_json rep = {{"epochs", report.epochs_run},
                      {"train_pairs", fit.size()},
                      {"valid_pairs", valid.size()},
                      {"parameters", model.parameter_count()},
                      {"embedding_table_hash", model.table_hash()},
                      {"token_coverage", token_coverage(table, *tokenizer, store)},
                      {"weights_checksum", report.weights_checksum},
                      {"epoch_loss", report.epoch_loss},
                      {"epoch_valid", json::parse(rows_to_json(report.epoch_valid))["rows"]}};
  run.write("train_report.json", rep.dump(2) + "\n");
  run.commit();
  std::string summary = "trained " + std::to_string(report.epochs_run - start_epoch) + " epochs";
  if (start_epoch) summary += " (resumed at epoch " + std::to_string(start_epoch) + ")";
  if (!report.epoch_loss.empty()) summary += ", final loss " + format_double(report.epoch_loss.back());
  return summary;
}

std::string cmd_eval(const ExperimentConfig& cfg, const RunOptions& opt) {
  RunDir run(cfg, opt, "eval");
  run.prepare({"scores.tsv", "metrics.json", "metrics.md", "metrics.csv", "sweep.md"});
  const AtomStore store = load_store(cfg, run);
  auto test = load_pairs(run, "pairs_test.tsv", store);
  if (test.empty()) throw validation_error("pairs_test.tsv holds no pairs");
  run.input_local("model.ckpt.json", "train");
  const auto model = SiameseModel::load(run.path("model.ckpt.json"), &cfg.siamese);
  auto data = model.make_dataset(store, test);
  const auto pred = predict(model, data, cfg.threshold);

  std::string scores = "aui1\taui2\tsplit\tscore\tlabel\tpred\n";
  for (std::size_t i = 0; i < test.size(); ++i)
    scores += test[i].a + '\t' + test[i].b + '\t' + std::string(to_string(test[i].tag)) + '\t' +
              format_double(pred.scores[i]) + '\t' + std::to_string(pred.labels[i]) + '\t' +
              std::to_string(pred.predicted[i]) + '\n';
  run.write("scores.tsv", scores);

  const std::string label = cfg.effective_config_label();
  std::vector<MetricsRow> rows = {
      make_row(cfg.model_label, label, cfg.threshold, confusion(pred.scores, pred.labels, cfg.threshold))};
  run.write("metrics.json", rows_to_json(rows));
  run.write("metrics.md", render(rows, TableStyle::Markdown));
  run.write("metrics.csv", render(rows, TableStyle::Csv));

  auto sweep = threshold_sweep(pred.scores, pred.labels, cfg.sweep_thresholds, cfg.model_label, label);
  for (auto& r : sweep) r.configuration += " @ " + pct(r.threshold).substr(0, 4);
  run.write("sweep.md", render(sweep, TableStyle::Markdown));
  run.commit();
  return render(rows, TableStyle::Markdown);
}

std::string cmd_cross_eval(const ExperimentConfig& cfg, const RunOptions& opt) {
  RunDir run(cfg, opt, "cross-eval");
  std::vector<std::string> models = cfg.cross_models;
  if (models.empty() && !cfg.encoder_model.empty()) models.push_back(cfg.encoder_model);
  if (models.empty()) throw invalid_argument("no cross-encoder models configured (cross.models or encoder_model)");
  if (cfg.encoder_registry.empty()) throw invalid_argument("cross-eval needs encoder_registry");
  std::vector<std::string> outputs = {"cross_metrics.json", "cross_metrics.md", "cross_metrics.csv"};
  for (const auto& m : models)
    for (auto o : cfg.cross_orders)
      outputs.push_back("cross_scores_" + sanitize(m) + "_" + (o == PairOrder::IJ ? "ij" : "ji") + ".tsv");
  run.prepare(outputs);
  const AtomStore store = load_store(cfg, run);
  auto test = load_pairs(run, "pairs_test.tsv", store);
  if (test.empty()) throw validation_error("pairs_test.tsv holds no pairs");
  run.input(cfg.encoder_registry);
  const auto registry = EncoderRegistry::load_file(cfg.encoder_registry);

  std::vector<CrossPair> pairs;
  pairs.reserve(test.size());
  for (const auto& p : test) pairs.push_back({p.a, p.b, store.at(p.a).str, store.at(p.b).str, p.label});

  std::vector<MetricsRow> rows;
  std::size_t k = 3;
  for (const auto& m : models) {
    const auto encoder = registry.open(m);
    for (auto order : cfg.cross_orders) {
      run.log("cross-eval " + m + " order " + std::string(to_string(order)));
      auto result = evaluate_ordered(*encoder, m, pairs, order, cfg.cross);
      run.write(outputs[k++], score_dump(pairs, result));
      rows.push_back(result.row);
    }
  }
  run.write("cross_metrics.json", rows_to_json(rows));
  run.write("cross_metrics.md", render(rows, TableStyle::Markdown));
  run.write("cross_metrics.csv", render(rows, TableStyle::Csv));
  run.commit();
  return render(rows, TableStyle::Markdown);
}

std::string cmd_run(const ExperimentConfig& cfg, const RunOptions& opt) {
  std::string out;
  auto step = [&](const char* name, auto fn) {
    if (opt.log) opt.log(std::string("== ") + name);
    std::string s = fn(cfg, opt);
    if (opt.log) opt.log(s);
    out = std::move(s);
  };
  step("ingest", cmd_ingest);
  step("gen-pairs", cmd_gen_pairs);
  step("extract", cmd_extract);
  step("train", cmd_train);
  step("eval", cmd_eval);
  std::string result = out;
  if (!cfg.cross_models.empty()) {
    step("cross-eval", cmd_cross_eval);
    result += out;
  }
  return result;
}

std::string run_command(std::string_view name, const ExperimentConfig& cfg, const RunOptions& opt) {
  if (name == "ingest") return cmd_ingest(cfg, opt);
  if (name == "gen-pairs") return cmd_gen_pairs(cfg, opt);
  if (name == "extract") return cmd_extract(cfg, opt);
  if (name == "train") return cmd_train(cfg, opt);
  if (name == "eval") return cmd_eval(cfg, opt);
  if (name == "cross-eval") return cmd_cross_eval(cfg, opt);
  if (name == "run") return cmd_run(cfg, opt);
  throw invalid_argument("unknown command '" + std::string(name) + "'");
}

std::vector<MetricsRow> collect_rows(const std::vector<std::string>& run_dirs) {
  if (run_dirs.empty()) throw invalid_argument("report needs at least one run directory");
  std::vector<std::vector<MetricsRow>> groups;
  for (const auto& dir : run_dirs) {
    bool found = false;
    for (const char* name : {"metrics.json", "cross_metrics.json"}) {
      const fs::path p = fs::path(dir) / name;
      if (!fs::exists(p)) continue;
      try {
        groups.push_back(rows_from_json(read_file(p.string())));
      } catch (const Error& e) {
        throw Error(e.kind(), p.string() + ": " + e.what());
      }
      found = true;
    }
    if (!found) throw io_error("no metrics.json or cross_metrics.json in " + dir + "; run `eval` or `cross-eval` first");
  }
  return merge_rows(std::move(groups));
}

ReplayResult replay(const std::string& run_dir, const std::string& out_dir, const RunOptions& opt) {
  const fs::path manifest = fs::path(run_dir) / kManifestFile;
  if (!fs::exists(manifest)) throw io_error("no manifest at " + manifest.string());
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !opt.force)
    throw Error(ErrorKind::Exists, out_dir + " is not empty; pass --force to replay into it");
  if (fs::exists(out_dir) && fs::equivalent(out_dir, run_dir))
    throw invalid_argument("replay target must differ from the recorded run directory");

  ReplayResult result;
  std::istringstream lines(read_file(manifest.string()));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json entry;
    try {
      entry = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(lineno, manifest.string() + ": " + e.what());
    }
    const std::string command = entry.at("command").get<std::string>();
    ExperimentConfig cfg = ExperimentConfig::from_json(entry.at("config").dump());
    cfg.out_dir = out_dir;
    cfg.finalize();
    if (cfg.hash() != entry.at("config_hash").get<std::string>())
      throw Error(ErrorKind::HashMismatch, "manifest line " + std::to_string(lineno) + ": config does not match its hash");
    // External inputs must be unchanged; run-local ones are regenerated by earlier entries.
    for (const auto& [path, sha] : entry.at("inputs").items()) {
      if (!fs::exists(path)) throw io_error("replay input " + path + " no longer exists");
      if (sha256_file(path) != sha.get<std::string>())
        throw Error(ErrorKind::HashMismatch, "replay input " + path + " changed since the run was recorded");
    }
    RunOptions ro;
    ro.force = true;
    ro.resume = entry.at("options").value("resume", false);
    ro.log = opt.log;
    if (opt.log) opt.log("replaying " + command);
    run_command(command, cfg, ro);
    for (const auto& [name, sha] : entry.at("outputs").items()) {
      ++result.checked;
      const std::string now = sha256_file((fs::path(out_dir) / name).string());
      const bool same = now == sha.get<std::string>();
      result.log += std::string(same ? "identical " : "DIFFERENT ") + command + " " + name + "\n";
      if (!same) result.mismatched.push_back(name);
    }
  }
  if (result.checked == 0) throw validation_error("manifest " + manifest.string() + " records no outputs");
  return result;
}

}  // namespace uva
