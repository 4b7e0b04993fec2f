#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "uva/atom_store.hpp"

namespace uva {

/// Sorted, duplicate-free lowercase word tokens.
using TokenSet = std::vector<std::string>;

/// Lowercases ASCII letters and splits on every byte that is not an ASCII
/// letter or digit. Bytes >= 0x80 count as word characters so UTF-8 words stay whole.
TokenSet word_tokenize(std::string_view str);

/// Same splitting rule as word_tokenize, but keeps order and repeats.
std::vector<std::string> word_sequence(std::string_view str);

double jaccard(const TokenSet& a, const TokenSet& b);
double dice(const TokenSet& a, const TokenSet& b);

/// Token-overlap measures. Both are zero exactly when the token sets are
/// disjoint, which keeps the inverted-index candidate set complete.
enum class SimilarityMeasure { Jaccard, Dice };

double similarity(SimilarityMeasure m, const TokenSet& a, const TokenSet& b);
SimilarityMeasure parse_similarity_measure(std::string_view name);
std::string_view to_string(SimilarityMeasure m);

struct ScoredAtom {
  std::string aui;
  double score = 0.0;

  bool operator==(const ScoredAtom&) const = default;
};

/// Inverted index token -> atoms, plus each atom's token set.
class SimilarityIndex {
 public:
  SimilarityIndex() = default;
  static SimilarityIndex build(const AtomStore& store, SimilarityMeasure measure = SimilarityMeasure::Jaccard);

  std::size_t size() const noexcept { return tokens_.size(); }
  SimilarityMeasure measure() const noexcept { return measure_; }
  const TokenSet& tokens(AtomIndex i) const { return tokens_[i]; }

  /// Atoms containing `token`, ascending atom index; empty if absent.
  const std::vector<AtomIndex>& postings(std::string_view token) const;
  std::size_t vocabulary_size() const noexcept { return vocab_.size(); }

  /// Every atom sharing at least one token with `i`, including `i` itself
  /// when it has tokens. Ascending atom index.
  std::vector<AtomIndex> candidates(AtomIndex i) const;

  double score(AtomIndex a, AtomIndex b) const { return similarity(measure_, tokens_[a], tokens_[b]); }

 private:
  SimilarityMeasure measure_ = SimilarityMeasure::Jaccard;
  std::vector<TokenSet> tokens_;
  std::vector<std::string> vocab_;                 // sorted
  std::vector<std::vector<AtomIndex>> postings_;  // parallel to vocab_
};

/// The `n` highest-scoring atoms of a different concept than `anchor`, score > 0,
/// ranked by (score desc, aui asc).
std::vector<ScoredAtom> top_n_similar_negatives(const SimilarityIndex& index, const AtomStore& store,
                                                std::string_view anchor, std::size_t n);

/// Index-based variant returning atom indices; used by pair generation.
std::vector<std::pair<AtomIndex, double>> top_n_similar_negatives(const SimilarityIndex& index,
                                                                  const AtomStore& store, AtomIndex anchor,
                                                                  std::size_t n);

}  // namespace uva
