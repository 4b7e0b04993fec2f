#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "uva/pairgen.hpp"

using namespace uva;

namespace {

AtomStore table1() { return ingest_atoms_file(std::string(UVA_FIXTURE_DIR) + "/table1.atoms"); }

std::set<oracle::Pair> as_set(const std::vector<LabeledPair>& pairs) {
  std::set<oracle::Pair> out;
  for (const auto& p : pairs) out.insert({p.a, p.b});
  return out;
}

std::set<oracle::TaggedPair> as_tagged(const std::vector<LabeledPair>& pairs) {
  std::set<oracle::TaggedPair> out;
  for (const auto& p : pairs) out.insert({p.a, p.b, std::string(to_string(p.tag))});
  return out;
}

AtomStore three_atoms() {
  return AtomStore::from_atoms({{"X", "alpha", "S1", "C1"}, {"Y", "alpha", "S2", "C2"}, {"Z", "qq", "S1", "C3"}});
}

}  // namespace

TEST_CASE("positives on the Table 1 concept") {
  auto store = table1();
  auto cross = generate_positives(store, true);
  CHECK(cross.size() == 8);
  CHECK(generate_positives(store, false).size() == 15);
  for (const auto& p : cross) {
    CHECK(p.a < p.b);
    CHECK(p.label == 1);
    CHECK(p.tag == SplitTag::Pos);
    CHECK(store.at(p.a).src != store.at(p.b).src);
  }
  CHECK(as_set(cross) == oracle::positives(store, true));
}

TEST_CASE("singleton concepts have no positives") {
  auto store = AtomStore::from_atoms({{"A1", "x", "S", "C1"}, {"A2", "y", "T", "C2"}});
  CHECK(generate_positives(store, false).empty());
}

TEST_CASE("single concept has no negatives") {
  auto store = table1();
  auto index = SimilarityIndex::build(store);
  DatasetSpec spec;
  try {
    generate_negatives(store, index, spec, 8);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("no negative pairs exist") != std::string::npos);
  }
}

TEST_CASE("three-atom store: hardest negative first, the rest via RAN_NOSIM") {
  auto store = three_atoms();
  auto index = SimilarityIndex::build(store);
  DatasetSpec spec;
  spec.stratum_weights = {1.0, 0.0, 0.0};
  spec.negative_ratio = 10.0;
  auto neg = generate_negatives(store, index, spec, 1);
  const std::set<oracle::TaggedPair> expected = {
      {"X", "Y", "TOPN_SIM"}, {"X", "Z", "RAN_NOSIM"}, {"Y", "Z", "RAN_NOSIM"}};
  CHECK(as_tagged(neg.pairs) == expected);
  CHECK(neg.target == 10);
  CHECK(neg.shortfall == 7);
  CHECK(index.score(0, 1) == 1.0);
}

TEST_CASE("negative target and quotas") {
  CHECK(negative_target(7.6, 10) == 76);
  CHECK(negative_target(0.1 * 3, 10) == 3);
  CHECK(negative_target(2.5, 3) == 7);
  CHECK(stratum_quotas(10, {1.0 / 3, 1.0 / 3, 1.0 / 3}) == std::array<std::size_t, 3>{4, 3, 3});
  CHECK(stratum_quotas(7, {0.5, 0.5, 0.0}) == std::array<std::size_t, 3>{4, 3, 0});
  CHECK(stratum_quotas(0, {0.2, 0.3, 0.5}) == std::array<std::size_t, 3>{0, 0, 0});
  for (std::size_t total : {1u, 2u, 5u, 17u, 1000u}) {
    auto q = stratum_quotas(total, {0.2, 0.3, 0.5});
    CHECK(q[0] + q[1] + q[2] == total);
  }
}

TEST_CASE("spec validation") {
  DatasetSpec spec;
  spec.stratum_weights = {0.5, 0.5, 0.5};
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = DatasetSpec{};
  spec.negative_ratio = 0.0;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = DatasetSpec{};
  spec.test_fraction = 1.0;
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("negatives match the brute-force oracle on random stores") {
  for (std::uint64_t s = 0; s < 25; ++s) {
    auto store = oracle::random_store(100 + s, 40);
    if (store.by_cui().size() < 2) continue;
    auto index = SimilarityIndex::build(store);
    DatasetSpec spec;
    spec.seed = s;
    spec.topn = 1 + s % 4;
    spec.negative_ratio = 0.5 + static_cast<double>(s % 7) * 1.5;
    spec.cross_source_only = s % 2 == 0;
    if (s % 3 == 1) spec.stratum_weights = {0.6, 0.4, 0.0};
    auto pos = generate_positives(store, spec.cross_source_only);
    CHECK(as_set(pos) == oracle::positives(store, spec.cross_source_only));
    const std::size_t npos = std::max<std::size_t>(pos.size(), 3);
    auto got = generate_negatives(store, index, spec, npos);
    auto want = oracle::negatives(store, spec, npos);
    CAPTURE(s);
    CHECK(as_tagged(got.pairs) == want.pairs);
    CHECK(got.shortfall == want.shortfall);
    for (const auto& p : got.pairs) {
      CHECK(p.label == 0);
      CHECK(store.at(p.a).cui != store.at(p.b).cui);
    }
  }
}

TEST_CASE("rejection sampling keeps strata well-formed") {
  std::vector<Atom> atoms;
  for (int i = 0; i < 120; ++i)
    atoms.push_back({"A" + std::to_string(1000 + i), "w" + std::to_string(i % 15) + " v" + std::to_string(i % 7),
                     "S" + std::to_string(i % 2), "C" + std::to_string(i / 3)});
  auto store = AtomStore::from_atoms(atoms);
  auto index = SimilarityIndex::build(store);
  DatasetSpec spec;
  spec.enumerate_limit = 0;
  spec.seed = 5;
  auto pos = generate_positives(store, true);
  auto a = generate_negatives(store, index, spec, pos.size());
  auto b = generate_negatives(store, index, spec, pos.size());
  CHECK(a.pairs == b.pairs);
  CHECK(a.pairs.size() + a.shortfall == negative_target(spec.negative_ratio, pos.size()));
  std::set<oracle::Pair> seen;
  for (const auto& p : a.pairs) {
    CHECK(seen.insert({p.a, p.b}).second);
    const double j = index.score(*store.find(p.a), *store.find(p.b));
    if (p.tag == SplitTag::RanNosim) CHECK(j == 0.0);
    if (p.tag == SplitTag::RanSim) CHECK(j > 0.0);
  }
}

TEST_CASE("generation is deterministic and seed-sensitive") {
  auto store = oracle::random_store(77, 60);
  auto index = SimilarityIndex::build(store);
  DatasetSpec spec;
  spec.seed = 3;
  spec.negative_ratio = 2.0;
  auto x = generate_negatives(store, index, spec, 20);
  auto y = generate_negatives(store, index, spec, 20);
  CHECK(x.pairs == y.pairs);
  spec.seed = 4;
  auto z = generate_negatives(store, index, spec, 20);
  CHECK(z.pairs.size() == x.pairs.size());
}

TEST_CASE("train/test split") {
  std::vector<LabeledPair> pairs;
  for (int i = 0; i < 100; ++i) pairs.push_back({"A" + std::to_string(1000 + i), "B" + std::to_string(i), 0, SplitTag::RanSim});
  DatasetSpec spec;
  spec.seed = 11;
  auto s1 = split_train_test(pairs, spec);
  CHECK(s1.test.size() == 20);
  CHECK(s1.train.size() == 80);
  std::set<LabeledPair> all(s1.train.begin(), s1.train.end());
  for (const auto& p : s1.test) CHECK(all.insert(p).second);
  CHECK(all.size() == 100);
  auto s2 = split_train_test(pairs, spec);
  CHECK(s1.train == s2.train);
  CHECK(s1.test == s2.test);

  std::vector<LabeledPair> mixed;
  for (int i = 0; i < 50; ++i) mixed.push_back({"P" + std::to_string(100 + i), "Q" + std::to_string(i), 1, SplitTag::Pos});
  for (int i = 0; i < 50; ++i)
    mixed.push_back({"N" + std::to_string(100 + i), "R" + std::to_string(i), 0, SplitTag::RanNosim});
  auto s3 = split_train_test(mixed, spec);
  CHECK(std::count_if(s3.test.begin(), s3.test.end(), [](auto& p) { return p.tag == SplitTag::Pos; }) == 10);
  CHECK(std::count_if(s3.test.begin(), s3.test.end(), [](auto& p) { return p.tag == SplitTag::RanNosim; }) == 10);

  spec.test_fraction = 0.0;
  CHECK_THROWS_AS(split_train_test(pairs, spec), Error);
}

TEST_CASE("pair file format") {
  auto store = table1();
  std::ostringstream out;
  write_pairs({{"A0066000", "A3487586", 1, SplitTag::Pos}}, store, out);
  std::istringstream lines(out.str());
  std::string header, line;
  std::getline(lines, header);
  std::getline(lines, line);
  CHECK(line == "A0066000\tA3487586\tHeadache\tHeadache (finding)\tMSH\tSNOMEDCT_US\t1\tPOS");

  std::ostringstream empty;
  write_pairs({}, store, empty);
  CHECK(empty.str() == header + "\n");

  std::ostringstream bad;
  CHECK_THROWS_AS(write_pairs({{"A0066000", "NOPE", 1, SplitTag::Pos}}, store, bad), Error);

  std::istringstream malformed(header + "\nA1\tA2\tx\n");
  try {
    read_pairs(malformed);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("pair file round-trip of 1000 random pairs") {
  Rng rng(9);
  std::vector<Atom> atoms;
  for (int i = 0; i < 200; ++i)
    atoms.push_back({"A" + std::to_string(5000 + i), "term " + std::to_string(i), "S" + std::to_string(i % 3),
                     "C" + std::to_string(i / 4)});
  auto store = AtomStore::from_atoms(atoms);
  std::set<LabeledPair> pairs;
  while (pairs.size() < 1000) {
    const auto x = rng.below(200), y = rng.below(200);
    if (x == y) continue;
    const bool syn = store[x].cui == store[y].cui;
    pairs.insert(make_labeled_pair(store, x, y, syn ? SplitTag::Pos : SplitTag::RanNosim));
  }
  std::vector<LabeledPair> v(pairs.begin(), pairs.end());
  std::stringstream io;
  write_pairs(v, store, io);
  auto back = read_pairs(io);
  CHECK(std::set<LabeledPair>(back.begin(), back.end()) == pairs);
  CHECK_NOTHROW(check_pairs_against_store(back, store));
}
