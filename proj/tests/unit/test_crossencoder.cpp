#include <doctest.h>

#include <map>

#include "oracles.hpp"
#include "uva/crossencoder.hpp"

using namespace uva;

namespace {

// Score looked up by the first token of the first segment.
class ScriptedStub final : public StubPairClassifier {
 public:
  explicit ScriptedStub(std::map<std::string, double> scores) : scores_(std::move(scores)) {}
  std::string name() const override { return "scripted"; }
  double classify_pair(std::span<const std::string> tokens, std::span<const int>) const override {
    return scores_.at(tokens[1]);
  }

 private:
  std::map<std::string, double> scores_;
};

class BrokenStub final : public StubPairClassifier {
 public:
  explicit BrokenStub(double p) : p_(p) {}
  std::string name() const override { return "broken"; }
  double classify_pair(std::span<const std::string>, std::span<const int>) const override {
    if (p_ < 0) throw runtime_error("device lost");
    return p_;
  }

 private:
  double p_;
};

bool same_metrics(const MetricsRow& a, const MetricsRow& b) {
  return a.accuracy == b.accuracy && a.precision == b.precision && a.recall == b.recall && a.f1 == b.f1 &&
         a.counts == b.counts;
}

std::vector<CrossPair> sample_pairs() {
  return {{"A1", "A2", "Headache", "Headache (finding)", 1},
          {"A3", "A4", "renal cyst", "kidney cyst", 1},
          {"A5", "A6", "acute pain", "bone tumor", 0},
          {"A7", "A8", "zeta lung", "alpha lung", 0},
          {"A9", "A10", "left eye", "eye left", 1}};
}

}  // namespace

TEST_CASE("format_pair examples") {
  auto wp = WordPieceTokenizer::from_file(std::string(UVA_FIXTURE_DIR) + "/wordpiece_vocab.txt");
  auto f = format_pair("Headache", "Headaches", wp);
  CHECK(f.tokens == std::vector<std::string>{"[CLS]", "head", "##ache", "[SEP]", "head", "##aches", "[SEP]"});
  CHECK(f.segments == std::vector<int>{0, 0, 0, 0, 1, 1, 1});

  WordTokenizer word;
  auto e = format_pair("", "", word);
  CHECK(e.tokens == std::vector<std::string>{"[CLS]", "[SEP]", "[SEP]"});
  CHECK(e.segments == std::vector<int>{0, 0, 1});

  std::string long_a, long_b;
  for (int k = 0; k < 100; ++k) long_a += "a" + std::to_string(k) + " ", long_b += "b" + std::to_string(k) + " ";
  auto t = format_pair(long_a, long_b, word, 64);
  CHECK(t.tokens.size() == 64);
  CHECK(oracle::check_formatted(t.tokens, t.segments, word.tokenize(long_a), word.tokenize(long_b), 64) == "");

  CHECK_THROWS_AS(format_pair("a", "b", word, 2), Error);
  CHECK_THROWS_AS(format_pair("a", "b", word, 4), Error);
  CHECK(format_pair("a", "", word, 4).tokens.size() == 4);
}

TEST_CASE("format_pair invariants on fuzzed strings") {
  const std::vector<std::string> pieces = {"head", "ache", "Cranial", "pain", "(", ")", ",", "renal-", "x", "  ",
                                           "finding", "of", "the", "12", "nephritis", "!"};
  WordTokenizer word;
  auto wp = WordPieceTokenizer::from_file(std::string(UVA_FIXTURE_DIR) + "/wordpiece_vocab.txt");
  Rng rng(31);
  auto random_string = [&] {
    std::string s;
    for (std::size_t k = 0, n = rng.below(40); k < n; ++k) s += pieces[rng.below(pieces.size())] + (rng.below(3) ? " " : "");
    return s;
  };
  for (int k = 0; k < 500; ++k) {
    const Tokenizer& tok = k % 2 ? static_cast<const Tokenizer&>(wp) : word;
    const auto a = random_string(), b = random_string();
    const std::size_t max_len = 5 + rng.below(60);
    auto f = format_pair(a, b, tok, max_len);
    CAPTURE(a);
    CAPTURE(b);
    CHECK(oracle::check_formatted(f.tokens, f.segments, tok.tokenize(a), tok.tokenize(b), max_len) == "");
  }
}

TEST_CASE("predict_pair") {
  CHECK(predict_pair(ConstantPairStub(0.9), "a", "b").label == 1);
  CHECK(predict_pair(ConstantPairStub(0.1), "a", "b").label == 0);
  CHECK(predict_pair(ConstantPairStub(0.5), "a", "b").label == 1);
  CrossSettings inv;
  inv.invert = true;
  auto p = predict_pair(ConstantPairStub(0.9), "a", "b", inv);
  CHECK(p.score == doctest::Approx(0.1));
  CHECK(p.label == 0);
  auto toy = predict_pair(ToyEncoder(1), "Headache", "Headache (finding)");
  CHECK(toy.score >= 0.0);
  CHECK(toy.score <= 1.0);

  try {
    predict_pair(BrokenStub(-1), "renal", "cyst");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("renal") != std::string::npos);
    CHECK(std::string(e.what()).find("device lost") != std::string::npos);
  }
  CHECK_THROWS_AS(predict_pair(BrokenStub(1.5), "a", "b"), Error);
}

TEST_CASE("hand-labeled pairs give precision and recall 0.5") {
  ScriptedStub stub({{"p", 0.9}, {"q", 0.2}, {"r", 0.8}, {"s", 0.3}});
  std::vector<CrossPair> pairs = {
      {"A1", "B1", "p", "x", 1}, {"A2", "B2", "q", "x", 0}, {"A3", "B3", "r", "x", 0}, {"A4", "B4", "s", "x", 1}};
  auto run = evaluate_ordered(stub, "stub", pairs, PairOrder::IJ, {});
  CHECK(run.row.precision == 0.5);
  CHECK(run.row.recall == 0.5);
  CHECK(run.row.accuracy == 0.5);
  CHECK(run.row.counts == ConfusionMatrix{1, 1, 1, 1});
  CHECK(run.scores == std::vector<double>{0.9, 0.2, 0.8, 0.3});
}

TEST_CASE("order swap: symmetric and asymmetric heads") {
  auto pairs = sample_pairs();
  SymmetricPairStub sym;
  auto ij = evaluate_ordered(sym, "sym", pairs, PairOrder::IJ, {});
  auto ji = evaluate_ordered(sym, "sym", pairs, PairOrder::JI, {});
  CHECK(same_metrics(ij.row, ji.row));
  CHECK(ij.scores == ji.scores);
  CHECK(ij.row.configuration == "order (i,j), head stub");
  CHECK(ji.row.configuration == "order (j,i), head stub");

  AsymmetricPairStub asym;
  auto aij = evaluate_ordered(asym, "asym", pairs, PairOrder::IJ, {});
  auto aji = evaluate_ordered(asym, "asym", pairs, PairOrder::JI, {});
  CHECK_FALSE(same_metrics(aij.row, aji.row));

  for (const auto* run : {&ij, &ji, &aij, &aji}) {
    auto want = oracle::confusion(run->scores, run->labels, 0.5);
    CHECK(run->row.counts == want);
  }
  CHECK_THROWS_AS(evaluate_ordered(sym, "sym", {}, PairOrder::IJ, {}), Error);
}

TEST_CASE("evaluation is reproducible and thread-count independent") {
  auto pairs = sample_pairs();
  for (int k = 0; k < 20; ++k) pairs.push_back({"X" + std::to_string(k), "Y" + std::to_string(k),
                                                "renal pain " + std::to_string(k), "cyst " + std::to_string(k % 3), k % 2});
  ToyEncoder toy(5);
  CrossSettings one, four;
  four.threads = 4;
  auto a = evaluate_ordered(toy, "toy", pairs, PairOrder::JI, one);
  auto b = evaluate_ordered(toy, "toy", pairs, PairOrder::JI, four);
  CHECK(a.scores == b.scores);
  CHECK(same_metrics(a.row, b.row));
  CHECK(a.row.configuration == "order (j,i), head random");
}

TEST_CASE("score dump and order names") {
  auto pairs = sample_pairs();
  auto run = evaluate_ordered(ConstantPairStub(0.75), "c", pairs, PairOrder::JI, {});
  auto dump = score_dump(pairs, run);
  CHECK(dump.rfind("aui1\taui2\torder\tscore\tlabel\tpred\n", 0) == 0);
  CHECK(dump.find("A1\tA2\t(j,i)\t0.75\t1\t1\n") != std::string::npos);
  CHECK(parse_order("ij") == PairOrder::IJ);
  CHECK(parse_order("(j,i)") == PairOrder::JI);
  CHECK_THROWS_AS(parse_order("ik"), Error);
}
