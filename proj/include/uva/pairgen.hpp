#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "uva/atom_store.hpp"
#include "uva/lexsim.hpp"

namespace uva {

enum class SplitTag { Pos, TopnSim, RanSim, RanNosim };

std::string_view to_string(SplitTag tag);
SplitTag parse_split_tag(std::string_view name);

/// Unordered atom pair in canonical form (a < b) with its synonymy label.
struct LabeledPair {
  std::string a;
  std::string b;
  int label = 0;  // 1 = synonymous
  SplitTag tag = SplitTag::Pos;

  auto operator<=>(const LabeledPair&) const = default;
};

/// Canonicalizes the order of two atoms and derives label and tag consistency.
LabeledPair make_labeled_pair(const AtomStore& store, AtomIndex x, AtomIndex y, SplitTag tag);

/// Negative strata in generation order.
inline constexpr std::array<SplitTag, 3> kNegativeStrata = {SplitTag::TopnSim, SplitTag::RanSim, SplitTag::RanNosim};

struct DatasetSpec {
  double negative_ratio = 7.6;
  std::size_t topn = 5;
  std::array<double, 3> stratum_weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};  // TOPN_SIM, RAN_SIM, RAN_NOSIM
  std::uint64_t seed = 0;
  bool cross_source_only = true;
  double test_fraction = 0.2;
  SimilarityMeasure measure = SimilarityMeasure::Jaccard;
  /// Strata whose candidate universe is at most this many pairs are enumerated
  /// exactly; larger ones are rejection-sampled.
  std::size_t enumerate_limit = 2'000'000;
  /// Rejection sampling gives up after this many attempts per requested pair.
  std::size_t rejection_factor = 50;
  std::size_t threads = 1;

  void validate() const;
};

std::vector<LabeledPair> generate_positives(const AtomStore& store, bool cross_source_only);

struct StratumReport {
  SplitTag tag = SplitTag::TopnSim;
  std::size_t requested = 0;  // quota after redistribution
  std::size_t produced = 0;
};

struct NegativeSet {
  std::vector<LabeledPair> pairs;  // canonical order
  std::array<StratumReport, 3> strata;
  std::size_t target = 0;
  /// Pairs still missing after redistributing into RAN_NOSIM.
  std::size_t shortfall = 0;
  std::vector<std::string> notes;
};

/// floor(negative_ratio * positives_count), guarded against representation error.
std::size_t negative_target(double negative_ratio, std::size_t positives_count);

/// Splits `total` across strata by largest remainder, so the quotas sum to `total`.
std::array<std::size_t, 3> stratum_quotas(std::size_t total, const std::array<double, 3>& weights);

/// Union over all anchors of their top-n similar negatives, as canonical
/// (lower index, higher index) pairs sorted by (score desc, aui pair asc).
std::vector<std::pair<AtomIndex, AtomIndex>> topn_pool(const SimilarityIndex& index, const AtomStore& store,
                                                       std::size_t topn, std::size_t threads = 1);

NegativeSet generate_negatives(const AtomStore& store, const SimilarityIndex& index, const DatasetSpec& spec,
                               std::size_t positives_count);

struct TrainTestSplit {
  std::vector<LabeledPair> train;
  std::vector<LabeledPair> test;
};

/// Stratified by split tag; each stratum contributes round(test_fraction * size) pairs to test.
TrainTestSplit split_train_test(const std::vector<LabeledPair>& pairs, const DatasetSpec& spec,
                                std::string_view stream = "split");

void write_pairs(const std::vector<LabeledPair>& pairs, const AtomStore& store, std::ostream& out);
std::vector<LabeledPair> read_pairs(std::istream& in);
void write_pairs_file(const std::vector<LabeledPair>& pairs, const AtomStore& store, const std::string& path);
std::vector<LabeledPair> read_pairs_file(const std::string& path);

/// Throws unless every pair resolves in `store` and its label matches the concepts.
void check_pairs_against_store(const std::vector<LabeledPair>& pairs, const AtomStore& store);

}  // namespace uva
