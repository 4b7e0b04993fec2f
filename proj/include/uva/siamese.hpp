#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "uva/atom_store.hpp"
#include "uva/embedding.hpp"
#include "uva/evalreport.hpp"
#include "uva/pairgen.hpp"
#include "uva/tokenizer.hpp"

namespace uva {

enum class LossKind { BinaryCrossEntropy, MeanSquaredError };

struct SiameseConfig {
  std::size_t embed_dim = 0;  // 0: take the table's dimension
  std::size_t lstm_hidden = 50;
  std::size_t dense1_units = 128;
  std::size_t dense2_units = 50;
  bool use_attention = false;
  std::size_t attention_units = 50;
  std::size_t max_tokens = 30;
  double learning_rate = 0.001;
  std::size_t batch_size = 8192;
  std::size_t epochs = 100;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  bool trainable_embeddings = true;
  LossKind loss = LossKind::BinaryCrossEntropy;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-7;
  /// Tokenizer spec (see make_tokenizer) used to rebuild the tokenizer on load.
  std::string tokenizer = "word";
  /// Worker threads for batch evaluation. Results do not depend on it.
  std::size_t threads = 1;

  void validate() const;
  /// Canonical JSON of every field.
  std::string to_json() const;
  static SiameseConfig from_json(std::string_view text);
  /// Hash over the fields that define the model and its optimizer; epochs,
  /// threads and threshold are excluded so training can be extended or replayed.
  std::string hash() const;
};

/// Named slice of the flat parameter vector; column-major rows x cols.
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

/// Token-id sequences for the atoms referenced by a pair set, plus the pairs
/// as indices into that bank.
struct PairDataset {
  struct Item {
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    int label = 0;
  };
  std::vector<std::vector<std::int32_t>> sequences;
  std::vector<Item> items;
};

struct TrainState {
  std::size_t epochs_done = 0;
  std::uint64_t adam_step = 0;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::vector<double> epoch_loss;
  std::vector<MetricsRow> epoch_valid;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<MetricsRow> epoch_valid;
  std::size_t epochs_run = 0;
  double wall_seconds = 0.0;
  std::string weights_checksum;
};

/// Twin-tower model: embedding -> Bi-LSTM -> (attention | final-state concat)
/// -> dense1 (ReLU) -> dense2, one shared parameter set, and similarity
/// exp(-L1(tower_a - tower_b)).
class SiameseModel {
 public:
  static SiameseModel build(const SiameseConfig& config, const EmbeddingTable& table,
                            std::shared_ptr<const Tokenizer> tokenizer);

  const SiameseConfig& config() const noexcept { return config_; }
  SiameseConfig& mutable_config() noexcept { return config_; }
  const Tokenizer& tokenizer() const { return *tokenizer_; }
  const std::string& table_hash() const noexcept { return table_hash_; }

  /// Token ids (0 is the OOV row), truncated to max_tokens.
  std::vector<std::int32_t> encode_tokens(std::span<const std::string> tokens) const;
  std::vector<std::int32_t> encode_text(std::string_view text) const;

  std::vector<double> tower(std::span<const std::int32_t> ids) const;
  double similarity(std::span<const std::int32_t> a, std::span<const std::int32_t> b) const;
  double similarity_text(std::string_view a, std::string_view b) const;

  std::size_t vocabulary_size() const noexcept { return vocab_.size() + 1; }
  const std::vector<ParamBlock>& layout() const noexcept { return layout_; }
  const ParamBlock& block(std::string_view name) const;
  std::size_t parameter_count() const noexcept { return params_.size(); }
  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::string weights_checksum() const;

  /// Mean loss over `items` and, if `grad` is non-null, its gradient
  /// (resized to parameter_count()).
  double loss_and_gradient(const PairDataset& data, std::span<const PairDataset::Item> items,
                           std::vector<double>* grad) const;

  PairDataset make_dataset(const AtomStore& store, const std::vector<LabeledPair>& pairs) const;

  TrainState& train_state() noexcept { return state_; }
  const TrainState& train_state() const noexcept { return state_; }

  void save(const std::string& path) const;
  /// Refuses checkpoints whose stored config hash does not match their
  /// config, and, when `expected` is given, checkpoints built from a
  /// different config. `tokenizer` overrides the recorded tokenizer spec.
  static SiameseModel load(const std::string& path, const SiameseConfig* expected = nullptr,
                           std::shared_ptr<const Tokenizer> tokenizer = nullptr);

 private:
  SiameseConfig config_;
  std::shared_ptr<const Tokenizer> tokenizer_;
  std::string table_hash_;
  std::vector<std::string> vocab_;  // id - 1 -> token
  std::unordered_map<std::string, std::int32_t> token_ids_;
  std::vector<ParamBlock> layout_;
  std::vector<double> params_;
  TrainState state_;

  void init_layout();
};

struct TrainOptions {
  /// Called after each epoch with (epoch index, mean loss).
  std::function<void(std::size_t, double)> on_epoch;
  /// If set, a checkpoint is written here after every epoch.
  std::string checkpoint_path;
};

/// Adam on the configured loss over shuffled mini-batches; continues from the
/// model's TrainState until config.epochs epochs have run.
TrainReport train(SiameseModel& model, const PairDataset& train_set, const PairDataset* valid_set,
                  const TrainOptions& options = {});

struct Predictions {
  std::vector<double> scores;
  std::vector<int> labels;     // ground truth
  std::vector<int> predicted;  // score >= threshold
};

Predictions predict(const SiameseModel& model, const PairDataset& data, double threshold);

}  // namespace uva
