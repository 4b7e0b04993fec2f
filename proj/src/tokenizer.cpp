#include "uva/tokenizer.hpp"

#include <sstream>

#include "uva/common.hpp"
#include "uva/lexsim.hpp"

namespace uva {

namespace {

constexpr std::size_t kMaxCharsPerWord = 100;
constexpr const char* kUnknown = "[UNK]";

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

}  // namespace

std::vector<std::string> WordTokenizer::tokenize(std::string_view text) const { return word_sequence(text); }

WordPieceTokenizer::WordPieceTokenizer(std::vector<std::string> vocab, bool lowercase) : lowercase_(lowercase) {
  std::string joined;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    vocab_.emplace(vocab[i], i);
    joined += vocab[i];
    joined += '\n';
  }
  id_ = std::string(lowercase ? "wordpiece:" : "wordpiece-cased:") + sha256_hex(joined).substr(0, 16);
}

WordPieceTokenizer WordPieceTokenizer::from_file(const std::string& path, bool lowercase) {
  std::istringstream in(read_file(path));
  std::vector<std::string> vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vocab.push_back(line);
  }
  if (vocab.empty()) throw invalid_argument("empty WordPiece vocabulary " + path);
  return WordPieceTokenizer(std::move(vocab), lowercase);
}

std::vector<std::string> WordPieceTokenizer::basic_tokenize(std::string_view text) const {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) words.push_back(std::move(cur));
    cur.clear();
  };
  for (unsigned char c : text) {
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      words.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(lowercase_ && c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
    }
  }
  flush();
  return words;
}

std::vector<std::string> WordPieceTokenizer::tokenize(std::string_view text) const {
  std::vector<std::string> out;
  for (const std::string& word : basic_tokenize(text)) {
    if (word.size() > kMaxCharsPerWord) {
      out.emplace_back(kUnknown);
      continue;
    }
    std::vector<std::string> pieces;
    std::size_t start = 0;
    bool bad = false;
    while (start < word.size()) {
      std::size_t end = word.size();
      std::string match;
      while (start < end) {
        std::string sub = (start > 0 ? "##" : "") + word.substr(start, end - start);
        if (vocab_.count(sub)) {
          match = std::move(sub);
          break;
        }
        --end;
      }
      if (match.empty()) {
        bad = true;
        break;
      }
      pieces.push_back(std::move(match));
      start = end;
    }
    if (bad) {
      out.emplace_back(kUnknown);
    } else {
      out.insert(out.end(), pieces.begin(), pieces.end());
    }
  }
  return out;
}

std::unique_ptr<Tokenizer> make_tokenizer(std::string_view spec) {
  if (spec == "word") return std::make_unique<WordTokenizer>();
  constexpr std::string_view wp = "wordpiece:";
  constexpr std::string_view wpc = "wordpiece-cased:";
  if (spec.starts_with(wp))
    return std::make_unique<WordPieceTokenizer>(WordPieceTokenizer::from_file(std::string(spec.substr(wp.size()))));
  if (spec.starts_with(wpc))
    return std::make_unique<WordPieceTokenizer>(
        WordPieceTokenizer::from_file(std::string(spec.substr(wpc.size())), false));
  throw invalid_argument("unknown tokenizer '" + std::string(spec) + "'");
}

}  // namespace uva
