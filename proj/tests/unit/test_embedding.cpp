#include <doctest.h>

#include <sstream>

#include "oracles.hpp"
#include "uva/embedding.hpp"
#include "uva/encoders.hpp"

using namespace uva;

namespace {

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

void check_against_mock_oracle(const std::vector<std::string>& corpus, std::size_t layers, std::size_t max_tokens) {
  MockEncoder enc(layers, 2);
  for (const auto& strat : ExtractionStrategy::all()) {
    const int occ = strat.occurrence == OccurrencePolicy::First ? 0 : strat.occurrence == OccurrencePolicy::Last ? 1 : 2;
    auto want = oracle::mock_table(corpus, occ, strat.layer_pool == LayerPool::AvgLast4, layers, max_tokens);
    auto got = extract_contextual_table(enc, corpus, strat, max_tokens);
    CAPTURE(strat.name());
    REQUIRE(got.size() == want.size());
    for (const auto& [tok, value] : want) {
      auto row = got.vector_for(tok);
      for (double x : row) CHECK(x == doctest::Approx(value).epsilon(1e-12));
    }
  }
}

}  // namespace

TEST_CASE("static table loading") {
  std::istringstream in("2 3\na 1 0 0\nb 0 1 0\n");
  auto t = load_static_table(in);
  CHECK(t.dim() == 3);
  CHECK(t.size() == 2);
  CHECK(vec(t.oov()) == std::vector<double>{0.5, 0.5, 0.0});
  CHECK(vec(t.pad()) == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(vec(t.vector_for("b")) == std::vector<double>{0, 1, 0});
  CHECK(vec(t.vector_for("zzz")) == vec(t.oov()));

  std::istringstream short_row("1 3\na 1 0\n");
  try {
    load_static_table(short_row);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("'a'") != std::string::npos);
  }
  std::istringstream dup("2 1\na 1\na 2\n");
  CHECK_THROWS_AS(load_static_table(dup), Error);
  std::istringstream count("3 1\na 1\n");
  CHECK_THROWS_AS(load_static_table(count), Error);
}

TEST_CASE("200-dimensional static file") {
  std::ostringstream text;
  text << "3 200\n";
  for (const char* tok : {"renal", "pain", "acute"}) {
    text << tok;
    for (int d = 0; d < 200; ++d) text << ' ' << (d % 7) * 0.125;
    text << '\n';
  }
  std::istringstream in(text.str());
  CHECK(load_static_table(in).dim() == 200);
}

TEST_CASE("table serialization round-trips exactly") {
  auto t = random_table({"a", "b", "c", "a", "longer_token"}, 7, 42);
  CHECK(t.size() == 4);
  std::stringstream io;
  write_table(t, io);
  auto back = load_static_table(io);
  CHECK(back == t);
  CHECK(table_hash(back) == table_hash(t));
  CHECK(random_table({"a", "b"}, 7, 42).tokens() == std::vector<std::string>{"a", "b"});
  CHECK_FALSE(random_table({"a"}, 7, 43) == random_table({"a"}, 7, 42));
  for (double x : t.row(0)) CHECK(std::abs(x) <= 0.05);
}

TEST_CASE("mock encoder extraction examples") {
  MockEncoder enc(4, 2);
  const std::vector<std::string> corpus = {"x y", "y"};
  auto first_last = extract_contextual_table(enc, corpus, ExtractionStrategy::parse("first-last_layer"));
  CHECK(vec(first_last.vector_for("x")) == std::vector<double>{3, 3});
  CHECK(vec(first_last.vector_for("y")) == std::vector<double>{4, 4});
  auto avg_last = extract_contextual_table(enc, corpus, ExtractionStrategy::parse("average-last_layer"));
  CHECK(vec(avg_last.vector_for("y")) == std::vector<double>{3.5, 3.5});
  auto first_avg4 = extract_contextual_table(enc, {"x"}, ExtractionStrategy::parse("first-avg_last4"));
  CHECK(vec(first_avg4.vector_for("x")) == std::vector<double>{1.5, 1.5});
}

TEST_CASE("all strategies agree with the analytic mock oracle") {
  check_against_mock_oracle({"x y", "y"}, 4, 30);
  check_against_mock_oracle({"a b c a", "c b", "d", "a a a a a", "b d a c"}, 6, 3);
  Rng rng(8);
  std::vector<std::string> corpus;
  for (int i = 0; i < 40; ++i) {
    std::string s;
    for (std::size_t w = 0, n = 1 + rng.below(8); w < n; ++w) s += "t" + std::to_string(rng.below(12)) + " ";
    corpus.push_back(s);
  }
  check_against_mock_oracle(corpus, 12, 5);
}

TEST_CASE("strategy properties") {
  CHECK(ExtractionStrategy::all().size() == 6);
  ConstantEncoder constant(2.25, 5, 3);
  const std::vector<std::string> corpus = {"a b a", "b c", "c"};
  auto ref = extract_contextual_table(constant, corpus, ExtractionStrategy::all().front());
  for (const auto& s : ExtractionStrategy::all()) CHECK(extract_contextual_table(constant, corpus, s) == ref);

  // Each token occurring once: the occurrence policy cannot matter.
  MockEncoder mock(4, 2);
  const std::vector<std::string> unique = {"p q", "r s t"};
  for (auto pool : {LayerPool::LastLayer, LayerPool::AvgLast4}) {
    auto f = extract_contextual_table(mock, unique, {OccurrencePolicy::First, pool});
    CHECK(extract_contextual_table(mock, unique, {OccurrencePolicy::Last, pool}) == f);
    CHECK(extract_contextual_table(mock, unique, {OccurrencePolicy::Average, pool}) == f);
  }

  CHECK_THROWS_AS(extract_contextual_table(MockEncoder(3, 2), corpus, ExtractionStrategy::parse("first-avg_last4")),
                  Error);
  CHECK_NOTHROW(extract_contextual_table(MockEncoder(3, 2), corpus, ExtractionStrategy::parse("first-last_layer")));
  CHECK_THROWS_AS(extract_contextual_table(mock, {}, ExtractionStrategy{}), Error);
  CHECK_THROWS_AS(ExtractionStrategy::parse("middle-last_layer"), Error);
  CHECK(ExtractionStrategy::parse("last-avg_last4").name() == "last-avg_last4");
}

TEST_CASE("extraction is deterministic") {
  ToyEncoder toy(7, 4, 8);
  const std::vector<std::string> corpus = {"acute renal pain", "renal cyst", "pain of the left kidney"};
  const auto s = ExtractionStrategy::parse("average-avg_last4");
  CHECK(table_hash(extract_contextual_table(toy, corpus, s)) ==
        table_hash(extract_contextual_table(ToyEncoder(7, 4, 8), corpus, s)));
}

TEST_CASE("lookup pads and truncates") {
  std::istringstream in("2 2\nu 1 2\nv 3 4\n");
  auto t = load_static_table(in);
  std::vector<std::string> two = {"u", "v"};
  auto m = lookup(t, two, 4);
  CHECK(m.data == std::vector<double>{1, 2, 3, 4, 0, 0, 0, 0});
  std::vector<std::string> unknown = {"x", "y"};
  auto o = lookup(t, unknown, 3);
  CHECK(o.data == std::vector<double>{2, 3, 2, 3, 0, 0});
  std::vector<std::string> many(35, "u");
  CHECK(lookup(t, many, 30).rows == 30);
  CHECK(lookup(t, many, 30).data.size() == 60);
}
