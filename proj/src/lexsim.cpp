#include "uva/lexsim.hpp"

#include <algorithm>

#include "uva/common.hpp"

namespace uva {

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

char lower(unsigned char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c); }

std::size_t intersection_size(const TokenSet& a, const TokenSet& b) {
  std::size_t n = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++n;
      ++ia;
      ++ib;
    }
  }
  return n;
}

const std::vector<AtomIndex> kNoPostings;

}  // namespace

std::vector<std::string> word_sequence(std::string_view str) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : str) {
    if (is_word_byte(c)) {
      cur.push_back(lower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

TokenSet word_tokenize(std::string_view str) {
  TokenSet out = word_sequence(str);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double jaccard(const TokenSet& a, const TokenSet& b) {
  if (a.empty() && b.empty()) return 0.0;
  const std::size_t inter = intersection_size(a, b);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

double dice(const TokenSet& a, const TokenSet& b) {
  if (a.empty() && b.empty()) return 0.0;
  return 2.0 * static_cast<double>(intersection_size(a, b)) / static_cast<double>(a.size() + b.size());
}

double similarity(SimilarityMeasure m, const TokenSet& a, const TokenSet& b) {
  return m == SimilarityMeasure::Dice ? dice(a, b) : jaccard(a, b);
}

SimilarityMeasure parse_similarity_measure(std::string_view name) {
  if (name == "jaccard") return SimilarityMeasure::Jaccard;
  if (name == "dice") return SimilarityMeasure::Dice;
  throw invalid_argument("unknown similarity measure '" + std::string(name) + "' (expected jaccard or dice)");
}

std::string_view to_string(SimilarityMeasure m) { return m == SimilarityMeasure::Dice ? "dice" : "jaccard"; }

SimilarityIndex SimilarityIndex::build(const AtomStore& store, SimilarityMeasure measure) {
  SimilarityIndex idx;
  idx.measure_ = measure;
  idx.tokens_.reserve(store.size());
  std::vector<std::pair<std::string, AtomIndex>> occurrences;
  for (AtomIndex i = 0; i < store.size(); ++i) {
    idx.tokens_.push_back(word_tokenize(store[i].str));
    for (const auto& t : idx.tokens_.back()) occurrences.emplace_back(t, i);
  }
  std::sort(occurrences.begin(), occurrences.end());
  for (auto& [token, atom] : occurrences) {
    if (idx.vocab_.empty() || idx.vocab_.back() != token) {
      idx.vocab_.push_back(token);
      idx.postings_.emplace_back();
    }
    idx.postings_.back().push_back(atom);
  }
  return idx;
}

const std::vector<AtomIndex>& SimilarityIndex::postings(std::string_view token) const {
  auto it = std::lower_bound(vocab_.begin(), vocab_.end(), token);
  if (it == vocab_.end() || *it != token) return kNoPostings;
  return postings_[static_cast<std::size_t>(it - vocab_.begin())];
}

std::vector<AtomIndex> SimilarityIndex::candidates(AtomIndex i) const {
  std::vector<AtomIndex> out;
  for (const auto& t : tokens_.at(i)) {
    const auto& p = postings(t);
    out.insert(out.end(), p.begin(), p.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::pair<AtomIndex, double>> top_n_similar_negatives(const SimilarityIndex& index,
                                                                  const AtomStore& store, AtomIndex anchor,
                                                                  std::size_t n) {
  std::vector<std::pair<AtomIndex, double>> ranked;
  if (n == 0) return ranked;
  const std::string& cui = store[anchor].cui;
  for (AtomIndex c : index.candidates(anchor)) {
    if (store[c].cui == cui) continue;
    const double s = index.score(anchor, c);
    if (s > 0.0) ranked.emplace_back(c, s);
  }
  auto better = [&store](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return store[x.first].aui < store[y.first].aui;
  };
  if (ranked.size() > n) {
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n), ranked.end(), better);
    ranked.resize(n);
  } else {
    std::sort(ranked.begin(), ranked.end(), better);
  }
  return ranked;
}

std::vector<ScoredAtom> top_n_similar_negatives(const SimilarityIndex& index, const AtomStore& store,
                                                std::string_view anchor, std::size_t n) {
  auto idx = store.find(anchor);
  if (!idx) throw invalid_argument("unknown anchor AUI " + std::string(anchor));
  std::vector<ScoredAtom> out;
  for (auto& [atom, score] : top_n_similar_negatives(index, store, *idx, n)) out.push_back({store[atom].aui, score});
  return out;
}

}  // namespace uva
