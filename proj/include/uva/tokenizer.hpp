#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace uva {

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::string> tokenize(std::string_view text) const = 0;
  /// Stable identifier recorded in checkpoints and manifests.
  virtual std::string id() const = 0;
};

/// Lowercase alphanumeric word splitter (same rule as the lexical similarity tokens).
class WordTokenizer final : public Tokenizer {
 public:
  std::vector<std::string> tokenize(std::string_view text) const override;
  std::string id() const override { return "word"; }
};

/// BERT-style tokenization: whitespace and punctuation splitting, optional
/// lowercasing, then greedy longest-match-first WordPiece against a vocabulary.
class WordPieceTokenizer final : public Tokenizer {
 public:
  WordPieceTokenizer(std::vector<std::string> vocab, bool lowercase = true);
  static WordPieceTokenizer from_file(const std::string& path, bool lowercase = true);

  std::vector<std::string> tokenize(std::string_view text) const override;
  std::string id() const override { return id_; }

  /// Whitespace/punctuation pre-split, before WordPiece.
  std::vector<std::string> basic_tokenize(std::string_view text) const;

 private:
  std::unordered_map<std::string, std::size_t> vocab_;
  bool lowercase_;
  std::string id_;
};

/// "word", "wordpiece:<vocab path>" or "wordpiece-cased:<vocab path>".
std::unique_ptr<Tokenizer> make_tokenizer(std::string_view spec);

}  // namespace uva
