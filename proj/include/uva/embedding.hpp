#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "uva/tokenizer.hpp"

namespace uva {

/// Token -> vector map. Entries keep insertion order, which is also the
/// order they are written in.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim), oov_(dim, 0.0), pad_(dim, 0.0) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// Throws on a duplicate token or a length mismatch.
  void add(std::string token, std::span<const double> values);
  std::optional<std::size_t> find(std::string_view token) const;
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  /// The entry for `token`, or the OOV vector when absent.
  std::span<const double> vector_for(std::string_view token) const;

  std::span<const double> oov() const noexcept { return oov_; }
  std::span<const double> pad() const noexcept { return pad_; }

  /// Sets the OOV vector to the mean of all entries (zero for an empty table).
  void recompute_oov();

  bool operator==(const EmbeddingTable& other) const {
    return dim_ == other.dim_ && tokens_ == other.tokens_ && data_ == other.data_ && oov_ == other.oov_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> data_;
  std::vector<double> oov_;
  std::vector<double> pad_;
};

/// word2vec text format: `count dim` header, then `token v1 .. vdim` rows.
EmbeddingTable load_static_table(std::istream& in);
EmbeddingTable load_static_table_file(const std::string& path);
void write_table(const EmbeddingTable& table, std::ostream& out);
void write_table_file(const EmbeddingTable& table, const std::string& path);
std::string table_hash(const EmbeddingTable& table);

/// Uniform(-scale, scale) vectors for `tokens` (duplicates skipped), seeded.
EmbeddingTable random_table(const std::vector<std::string>& tokens, std::size_t dim, std::uint64_t seed,
                            double scale = 0.05);

/// Per-layer hidden states of one encoded sequence, laid out [layer][position][dim].
struct HiddenStates {
  std::size_t layers = 0;
  std::size_t positions = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  HiddenStates() = default;
  HiddenStates(std::size_t l, std::size_t p, std::size_t d) : layers(l), positions(p), dim(d), data(l * p * d, 0.0) {}

  std::span<double> at(std::size_t layer, std::size_t pos) { return {data.data() + (layer * positions + pos) * dim, dim}; }
  std::span<const double> at(std::size_t layer, std::size_t pos) const {
    return {data.data() + (layer * positions + pos) * dim, dim};
  }
};

/// A pretrained transformer-like encoder seen from the outside: a tokenizer
/// plus per-layer hidden states for a token sequence.
class ContextualEncoder {
 public:
  virtual ~ContextualEncoder() = default;
  virtual std::string name() const = 0;
  virtual const Tokenizer& tokenizer() const = 0;
  virtual std::size_t num_layers() const = 0;
  virtual std::size_t hidden_dim() const = 0;
  /// Output shape must be (num_layers, tokens.size(), hidden_dim).
  virtual HiddenStates encode(std::span<const std::string> tokens) const = 0;
};

enum class OccurrencePolicy { First, Last, Average };
enum class LayerPool { LastLayer, AvgLast4 };

struct ExtractionStrategy {
  OccurrencePolicy occurrence = OccurrencePolicy::Average;
  LayerPool layer_pool = LayerPool::AvgLast4;

  bool operator==(const ExtractionStrategy&) const = default;

  /// e.g. "average-avg_last4"
  std::string name() const;
  static ExtractionStrategy parse(std::string_view name);
  static std::vector<ExtractionStrategy> all();
};

OccurrencePolicy parse_occurrence(std::string_view name);
LayerPool parse_layer_pool(std::string_view name);
std::string_view to_string(OccurrencePolicy p);
std::string_view to_string(LayerPool p);

/// Builds a static table from contextual states over `corpus` (in order):
/// each string is tokenized, truncated to `max_tokens`, encoded, pooled per
/// position, and the per-token occurrences are reduced by the occurrence policy.
EmbeddingTable extract_contextual_table(const ContextualEncoder& encoder, const std::vector<std::string>& corpus,
                                        const ExtractionStrategy& strategy, std::size_t max_tokens = 30);

/// Row-major max_tokens x dim matrix.
struct TokenMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

/// Unknown tokens map to the OOV vector; short sequences are right-padded
/// with zeros, long ones truncated.
TokenMatrix lookup(const EmbeddingTable& table, std::span<const std::string> tokens, std::size_t max_tokens);

}  // namespace uva
