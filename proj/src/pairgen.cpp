#include "uva/pairgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <thread>

#include "uva/common.hpp"

namespace uva {

namespace {

using IndexPair = std::pair<AtomIndex, AtomIndex>;

IndexPair ordered(AtomIndex x, AtomIndex y) { return x < y ? IndexPair{x, y} : IndexPair{y, x}; }

constexpr std::string_view kPairHeader = "aui1\taui2\tstr1\tstr2\tsrc1\tsrc2\tlabel\tsplit";

// Takes `quota` pairs from an exactly enumerated universe (sorted). Returns
// the whole universe when it is not larger than the quota.
std::vector<IndexPair> sample_from_universe(std::vector<IndexPair> universe, std::size_t quota, Rng& rng) {
  if (universe.size() <= quota) return universe;
  rng.shuffle(universe);
  universe.resize(quota);
  return universe;
}

}  // namespace

std::string_view to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::Pos: return "POS";
    case SplitTag::TopnSim: return "TOPN_SIM";
    case SplitTag::RanSim: return "RAN_SIM";
    case SplitTag::RanNosim: return "RAN_NOSIM";
  }
  return "?";
}

SplitTag parse_split_tag(std::string_view name) {
  if (name == "POS") return SplitTag::Pos;
  if (name == "TOPN_SIM") return SplitTag::TopnSim;
  if (name == "RAN_SIM") return SplitTag::RanSim;
  if (name == "RAN_NOSIM") return SplitTag::RanNosim;
  throw invalid_argument("unknown split tag '" + std::string(name) + "'");
}

LabeledPair make_labeled_pair(const AtomStore& store, AtomIndex x, AtomIndex y, SplitTag tag) {
  const Atom& ax = store[x];
  const Atom& ay = store[y];
  LabeledPair p;
  p.a = ax.aui < ay.aui ? ax.aui : ay.aui;
  p.b = ax.aui < ay.aui ? ay.aui : ax.aui;
  p.label = ax.cui == ay.cui ? 1 : 0;
  p.tag = tag;
  if ((p.label == 1) != (tag == SplitTag::Pos))
    throw invalid_argument("pair " + p.a + "/" + p.b + ": tag " + std::string(to_string(tag)) +
                           " inconsistent with label " + std::to_string(p.label));
  return p;
}

void DatasetSpec::validate() const {
  if (!(negative_ratio > 0.0) || !std::isfinite(negative_ratio))
    throw invalid_argument("negative_ratio must be > 0");
  double sum = 0.0;
  for (double w : stratum_weights) {
    if (w < 0.0 || !std::isfinite(w)) throw invalid_argument("stratum weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw invalid_argument("stratum weights must sum to 1 (got " + format_double(sum) + ")");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw invalid_argument("test_fraction must lie in (0,1)");
  if (rejection_factor == 0) throw invalid_argument("rejection_factor must be >= 1");
}

std::vector<LabeledPair> generate_positives(const AtomStore& store, bool cross_source_only) {
  std::vector<LabeledPair> out;
  for (const auto& [cui, members] : store.by_cui()) {
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (std::size_t j = i + 1; j < members.size(); ++j) {
        if (cross_source_only && store[members[i]].src == store[members[j]].src) continue;
        out.push_back(make_labeled_pair(store, members[i], members[j], SplitTag::Pos));
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t negative_target(double negative_ratio, std::size_t positives_count) {
  const double exact = negative_ratio * static_cast<double>(positives_count);
  // 7.6 * 10 evaluates to 75.999...; nudge by a relative epsilon before flooring.
  return static_cast<std::size_t>(std::floor(exact + 1e-9 * std::max(1.0, exact)));
}

std::array<std::size_t, 3> stratum_quotas(std::size_t total, const std::array<double, 3>& weights) {
  std::array<std::size_t, 3> q{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double exact = weights[k] * static_cast<double>(total);
    q[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    frac[k] = exact - static_cast<double>(q[k]);
    assigned += q[k];
  }
  while (assigned > total) {  // only reachable through the epsilon nudge
    for (std::size_t k = 3; k-- > 0;)
      if (q[k] > 0 && assigned > total) --q[k], --assigned;
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return frac[x] > frac[y]; });
  for (std::size_t r = 0; assigned < total; r = (r + 1) % 3) {
    if (weights[order[r]] > 0.0 || r == 2) {
      ++q[order[r]];
      ++assigned;
    }
  }
  return q;
}

std::vector<IndexPair> topn_pool(const SimilarityIndex& index, const AtomStore& store, std::size_t topn,
                                 std::size_t threads) {
  const std::size_t n = store.size();
  std::vector<std::vector<std::pair<AtomIndex, double>>> per_anchor(n);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t a = begin; a < end; ++a) per_anchor[a] = top_n_similar_negatives(index, store, a, topn);
  };
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back(work, std::min(n, t * chunk), std::min(n, (t + 1) * chunk));
    for (auto& th : pool) th.join();
  }
  // Merge in anchor order; scores are symmetric so the first sighting is kept.
  std::set<IndexPair> seen;
  std::vector<std::pair<IndexPair, double>> scored;
  for (AtomIndex a = 0; a < n; ++a) {
    for (auto& [b, s] : per_anchor[a]) {
      IndexPair p = ordered(a, b);
      if (seen.insert(p).second) scored.emplace_back(p, s);
    }
  }
  auto key = [&store](const IndexPair& p) {
    const auto& x = store[p.first].aui;
    const auto& y = store[p.second].aui;
    return x < y ? std::pair<const std::string&, const std::string&>{x, y}
                 : std::pair<const std::string&, const std::string&>{y, x};
  };
  std::sort(scored.begin(), scored.end(), [&](const auto& l, const auto& r) {
    if (l.second != r.second) return l.second > r.second;
    return key(l.first) < key(r.first);
  });
  std::vector<IndexPair> out;
  out.reserve(scored.size());
  for (auto& [p, _] : scored) out.push_back(p);
  return out;
}

NegativeSet generate_negatives(const AtomStore& store, const SimilarityIndex& index, const DatasetSpec& spec,
                               std::size_t positives_count) {
  spec.validate();
  if (index.size() != store.size()) throw invalid_argument("similarity index was not built over this store");
  if (store.by_cui().size() < 2) throw validation_error("no negative pairs exist (store has fewer than two concepts)");

  NegativeSet result;
  result.target = negative_target(spec.negative_ratio, positives_count);
  const auto quotas = stratum_quotas(result.target, spec.stratum_weights);
  std::set<IndexPair> chosen;
  std::array<std::vector<IndexPair>, 3> picked;
  std::size_t carry = 0;
  const std::size_t n = store.size();

  auto different_concept = [&store](AtomIndex x, AtomIndex y) { return store[x].cui != store[y].cui; };

  for (std::size_t k = 0; k < 3; ++k) {
    const SplitTag tag = kNegativeStrata[k];
    // Shortfalls of the similar strata flow into RAN_NOSIM.
    const std::size_t quota = quotas[k] + (tag == SplitTag::RanNosim ? carry : 0);
    result.strata[k].tag = tag;
    result.strata[k].requested = quota;
    Rng rng(derive_seed(spec.seed, "negatives:" + std::string(to_string(tag))));
    std::vector<IndexPair> got;

    if (quota > 0 && tag == SplitTag::TopnSim) {
      auto pool = topn_pool(index, store, spec.topn, spec.threads);
      if (pool.size() > quota) pool.resize(quota);
      got = std::move(pool);
    } else if (quota > 0 && tag == SplitTag::RanSim) {
      std::vector<std::vector<AtomIndex>> cands(n);
      std::size_t universe_bound = 0;
      for (AtomIndex a = 0; a < n; ++a) {
        cands[a] = index.candidates(a);
        cands[a].erase(std::remove(cands[a].begin(), cands[a].end(), a), cands[a].end());
        universe_bound += cands[a].size();
      }
      universe_bound /= 2;
      if (universe_bound <= spec.enumerate_limit) {
        std::vector<IndexPair> universe;
        for (AtomIndex a = 0; a < n; ++a)
          for (AtomIndex b : cands[a])
            if (b > a && different_concept(a, b) && !chosen.count({a, b})) universe.emplace_back(a, b);
        got = sample_from_universe(std::move(universe), quota, rng);
      } else {
        // Ordered pairs (a, b) with b a candidate of a are drawn uniformly:
        // a with probability proportional to its candidate count, b uniformly.
        std::vector<double> cumulative(n);
        double total = 0.0;
        for (AtomIndex a = 0; a < n; ++a) cumulative[a] = (total += static_cast<double>(cands[a].size()));
        std::set<IndexPair> local;
        const std::size_t max_attempts = spec.rejection_factor * quota;
        for (std::size_t attempt = 0; attempt < max_attempts && local.size() < quota && total > 0; ++attempt) {
          const double u = rng.uniform() * total;
          const auto a = static_cast<AtomIndex>(std::upper_bound(cumulative.begin(), cumulative.end(), u) -
                                                cumulative.begin());
          if (a >= n || cands[a].empty()) continue;
          const AtomIndex b = cands[a][rng.below(cands[a].size())];
          const IndexPair p = ordered(a, b);
          if (!different_concept(a, b) || chosen.count(p)) continue;
          local.insert(p);
        }
        got.assign(local.begin(), local.end());
      }
    } else if (quota > 0 && tag == SplitTag::RanNosim) {
      const std::size_t universe_bound = n * (n - 1) / 2;
      auto disjoint = [&index](AtomIndex a, AtomIndex b) { return index.score(a, b) == 0.0; };
      if (universe_bound <= spec.enumerate_limit) {
        std::vector<IndexPair> universe;
        for (AtomIndex a = 0; a < n; ++a)
          for (AtomIndex b = a + 1; b < n; ++b)
            if (different_concept(a, b) && disjoint(a, b) && !chosen.count({a, b})) universe.emplace_back(a, b);
        got = sample_from_universe(std::move(universe), quota, rng);
      } else {
        std::set<IndexPair> local;
        const std::size_t max_attempts = spec.rejection_factor * quota;
        for (std::size_t attempt = 0; attempt < max_attempts && local.size() < quota; ++attempt) {
          const AtomIndex a = rng.below(n);
          const AtomIndex b = rng.below(n);
          if (a == b) continue;
          const IndexPair p = ordered(a, b);
          if (!different_concept(a, b) || !disjoint(a, b) || chosen.count(p)) continue;
          local.insert(p);
        }
        got.assign(local.begin(), local.end());
      }
    }

    for (const auto& p : got) chosen.insert(p);
    result.strata[k].produced = got.size();
    if (got.size() < quota) {
      const std::size_t missing = quota - got.size();
      result.notes.push_back(std::string(to_string(tag)) + " exhausted: produced " + std::to_string(got.size()) +
                             " of " + std::to_string(quota));
      if (tag == SplitTag::RanNosim) {
        result.shortfall = missing;
      } else {
        carry += missing;
      }
    }
    picked[k] = std::move(got);
  }

  for (std::size_t k = 0; k < 3; ++k)
    for (const auto& [x, y] : picked[k]) result.pairs.push_back(make_labeled_pair(store, x, y, kNegativeStrata[k]));
  std::sort(result.pairs.begin(), result.pairs.end());
  return result;
}

TrainTestSplit split_train_test(const std::vector<LabeledPair>& pairs, const DatasetSpec& spec,
                                std::string_view stream) {
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0))
    throw invalid_argument("test_fraction must lie in (0,1), got " + format_double(spec.test_fraction));
  TrainTestSplit out;
  for (SplitTag tag : {SplitTag::Pos, SplitTag::TopnSim, SplitTag::RanSim, SplitTag::RanNosim}) {
    std::vector<LabeledPair> group;
    for (const auto& p : pairs)
      if (p.tag == tag) group.push_back(p);
    std::sort(group.begin(), group.end());
    Rng rng(derive_seed(spec.seed, std::string(stream) + ":" + std::string(to_string(tag))));
    rng.shuffle(group);
    const auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(group.size())));
    for (std::size_t i = 0; i < group.size(); ++i) (i < n_test ? out.test : out.train).push_back(std::move(group[i]));
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

void write_pairs(const std::vector<LabeledPair>& pairs, const AtomStore& store, std::ostream& out) {
  out << kPairHeader << '\n';
  for (const auto& p : pairs) {
    auto ia = store.find(p.a);
    auto ib = store.find(p.b);
    if (!ia) throw validation_error("cannot write pair: unknown AUI " + p.a);
    if (!ib) throw validation_error("cannot write pair: unknown AUI " + p.b);
    const Atom& a = store[*ia];
    const Atom& b = store[*ib];
    out << a.aui << '\t' << b.aui << '\t' << a.str << '\t' << b.str << '\t' << a.src << '\t' << b.src << '\t'
        << p.label << '\t' << to_string(p.tag) << '\n';
  }
}

std::vector<LabeledPair> read_pairs(std::istream& in) {
  std::vector<LabeledPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != kPairHeader) throw ParseError(1, "missing pair-file header");
      continue;
    }
    if (line.empty()) continue;
    auto f = split(line, '\t');
    if (f.size() != 8) throw ParseError(lineno, "expected 8 tab-separated fields, got " + std::to_string(f.size()));
    LabeledPair p;
    p.a = std::string(f[0]);
    p.b = std::string(f[1]);
    if (f[6] == "1") {
      p.label = 1;
    } else if (f[6] == "0") {
      p.label = 0;
    } else {
      throw ParseError(lineno, "label must be 0 or 1");
    }
    try {
      p.tag = parse_split_tag(f[7]);
    } catch (const Error& e) {
      throw ParseError(lineno, e.what());
    }
    if (!(p.a < p.b)) throw ParseError(lineno, "pair not in canonical order (aui1 < aui2)");
    if ((p.label == 1) != (p.tag == SplitTag::Pos)) throw ParseError(lineno, "label and split tag disagree");
    out.push_back(std::move(p));
  }
  if (lineno == 0) throw ParseError(0, "empty pair file (header required)");
  return out;
}

void write_pairs_file(const std::vector<LabeledPair>& pairs, const AtomStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write " + path);
  write_pairs(pairs, store, out);
  if (!out) throw io_error("write failed: " + path);
}

std::vector<LabeledPair> read_pairs_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open pair file " + path);
  return read_pairs(in);
}

void check_pairs_against_store(const std::vector<LabeledPair>& pairs, const AtomStore& store) {
  for (const auto& p : pairs) {
    const Atom& a = store.at(p.a);
    const Atom& b = store.at(p.b);
    if ((a.cui == b.cui ? 1 : 0) != p.label)
      throw validation_error("pair " + p.a + "/" + p.b + " label disagrees with the atom store");
  }
}

}  // namespace uva
