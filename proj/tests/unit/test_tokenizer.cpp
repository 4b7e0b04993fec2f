#include <doctest.h>

#include <fstream>
#include <sstream>

#include "uva/common.hpp"
#include "uva/tokenizer.hpp"

using namespace uva;

namespace {

const std::string kVocab = std::string(UVA_FIXTURE_DIR) + "/wordpiece_vocab.txt";

std::string joined(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& t : v) out += (out.empty() ? "" : " ") + t;
  return out;
}

}  // namespace

TEST_CASE("word tokenizer keeps order and duplicates") {
  WordTokenizer t;
  CHECK(t.tokenize("Pain, pain (finding)") == std::vector<std::string>{"pain", "pain", "finding"});
  CHECK(t.tokenize("  ").empty());
  CHECK(t.id() == "word");
}

// Expected pieces were produced once by the reference BERT tokenizer over
// the same vocabulary and stored next to it.
TEST_CASE("wordpiece agrees with the reference tokenizer") {
  auto tok = WordPieceTokenizer::from_file(kVocab);
  std::ifstream cases(std::string(UVA_FIXTURE_DIR) + "/wordpiece_cases.tsv");
  REQUIRE(cases);
  std::string line;
  int n = 0;
  while (std::getline(cases, line)) {
    const auto tab = line.find('\t');
    REQUIRE(tab != std::string::npos);
    std::string input = line.substr(0, tab);
    for (std::size_t p; (p = input.find("\\t")) != std::string::npos;) input.replace(p, 2, "\t");
    CAPTURE(input);
    CHECK(joined(tok.tokenize(input)) == line.substr(tab + 1));
    ++n;
  }
  CHECK(n == 16);
}

TEST_CASE("wordpiece casing and identity") {
  auto lower = WordPieceTokenizer::from_file(kVocab);
  auto cased = WordPieceTokenizer::from_file(kVocab, false);
  CHECK(joined(cased.tokenize("Headache")) == "[UNK]");
  CHECK(joined(cased.tokenize("headache")) == "head ##ache");
  CHECK(lower.id() != cased.id());
  CHECK(lower.id() == WordPieceTokenizer::from_file(kVocab).id());
  CHECK(lower.id().rfind("wordpiece:", 0) == 0);
  CHECK(joined(lower.tokenize(std::string(150, 'a'))) == "[UNK]");
}

TEST_CASE("make_tokenizer") {
  CHECK(make_tokenizer("word")->id() == "word");
  CHECK(make_tokenizer("wordpiece:" + kVocab)->tokenize("renal") == std::vector<std::string>{"renal"});
  CHECK_THROWS_AS(make_tokenizer("sentencepiece"), Error);
  CHECK_THROWS_AS(make_tokenizer("wordpiece:/nonexistent/vocab.txt"), Error);
}
