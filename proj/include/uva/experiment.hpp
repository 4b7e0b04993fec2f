#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "uva/crossencoder.hpp"
#include "uva/embedding.hpp"
#include "uva/pairgen.hpp"
#include "uva/siamese.hpp"

namespace uva {

enum class EmbeddingSource { Static, Contextual, Random };

/// Everything a run needs. Serialized as a flat JSON object with dotted keys
/// ("pairs.negative_ratio", "siamese.epochs", ...); see config_schema().
struct ExperimentConfig {
  std::string atom_file;
  std::string vector_file;
  std::string encoder_registry;
  std::string encoder_model;
  std::string out_dir = "runs/default";
  /// Single source of randomness; pair sampling, embedding init, weight init
  /// and shuffling all derive from it.
  std::uint64_t seed = 0;

  DatasetSpec pairs;

  EmbeddingSource embedding_source = EmbeddingSource::Random;
  std::size_t random_dim = 50;
  double random_scale = 0.05;

  ExtractionStrategy strategy;
  std::size_t extract_max_tokens = 30;
  /// "all": every atom string; "train": atoms referenced by the training pairs.
  std::string extract_corpus = "all";

  SiameseConfig siamese;
  double valid_fraction = 0.1;
  /// Write the checkpoint every this many epochs (0: only at the end).
  std::size_t checkpoint_every = 10;

  std::vector<std::string> cross_models;
  std::vector<PairOrder> cross_orders = {PairOrder::IJ, PairOrder::JI};
  CrossSettings cross;

  double threshold = 0.5;
  std::vector<double> sweep_thresholds = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

  std::string model_label = "siamese";
  std::string config_label;  // empty: derived from the embedding setup

  /// Reads a flat config; unknown keys and wrongly typed values are rejected.
  static ExperimentConfig from_json(std::string_view text);
  static ExperimentConfig load_file(const std::string& path);
  std::string to_json() const;
  /// Over every field that can change an artifact; excludes out_dir and thread counts.
  std::string hash() const;
  /// UVAKIT_ATOM_FILE, UVAKIT_VECTOR_FILE, UVAKIT_ENCODER_REGISTRY and
  /// UVAKIT_OUT_DIR replace the matching paths. Nothing else can be set from
  /// the environment.
  void apply_environment();
  /// Copies the global seed and threshold into the module configs and checks them.
  void finalize();
  std::string effective_config_label() const;
};

/// JSON document listing every key with its type, default and description.
std::string config_schema();

struct RunOptions {
  bool force = false;
  /// train: continue from an existing checkpoint instead of refusing.
  bool resume = false;
  /// Progress lines; may be empty.
  std::function<void(const std::string&)> log;
};

/// Pipeline stages. Each reads its inputs from the config and the run
/// directory, writes its outputs there, appends to manifest.jsonl and returns
/// a short human-readable summary.
std::string cmd_ingest(const ExperimentConfig& cfg, const RunOptions& opt);
std::string cmd_gen_pairs(const ExperimentConfig& cfg, const RunOptions& opt);
std::string cmd_extract(const ExperimentConfig& cfg, const RunOptions& opt);
std::string cmd_train(const ExperimentConfig& cfg, const RunOptions& opt);
std::string cmd_eval(const ExperimentConfig& cfg, const RunOptions& opt);
std::string cmd_cross_eval(const ExperimentConfig& cfg, const RunOptions& opt);
/// ingest, gen-pairs, extract, train, eval, and cross-eval when models are configured.
std::string cmd_run(const ExperimentConfig& cfg, const RunOptions& opt);
std::string run_command(std::string_view name, const ExperimentConfig& cfg, const RunOptions& opt);

/// Rows of metrics.json and cross_metrics.json from each run, merged.
std::vector<MetricsRow> collect_rows(const std::vector<std::string>& run_dirs);

struct ReplayResult {
  std::size_t checked = 0;
  std::vector<std::string> mismatched;  // output files whose hash differs
  std::string log;
};

/// Re-executes every manifest entry of `run_dir` into `out_dir` with the
/// recorded configs and compares the outputs against the recorded hashes.
ReplayResult replay(const std::string& run_dir, const std::string& out_dir, const RunOptions& opt);

}  // namespace uva
