#include "uva/crossencoder.hpp"

#include <algorithm>
#include <thread>

#include "uva/common.hpp"

namespace uva {

FormattedPair format_pair(std::string_view str_i, std::string_view str_j, const Tokenizer& tokenizer,
                          std::size_t max_len) {
  if (max_len < 3) throw invalid_argument("max_len must be at least 3 to hold [CLS] and two [SEP]");
  auto a = tokenizer.tokenize(str_i);
  auto b = tokenizer.tokenize(str_j);
  const std::size_t floor_a = a.empty() ? 0 : 1, floor_b = b.empty() ? 0 : 1;
  if (3 + floor_a + floor_b > max_len)
    throw invalid_argument("max_len " + std::to_string(max_len) + " cannot keep a token of each non-empty segment");
  while (a.size() + b.size() + 3 > max_len) {
    if (a.size() > b.size())
      a.pop_back();
    else
      b.pop_back();
  }
  FormattedPair out;
  out.tokens.reserve(a.size() + b.size() + 3);
  out.tokens.emplace_back(kClsToken);
  out.tokens.insert(out.tokens.end(), a.begin(), a.end());
  out.tokens.emplace_back(kSepToken);
  out.segments.assign(out.tokens.size(), 0);
  out.tokens.insert(out.tokens.end(), b.begin(), b.end());
  out.tokens.emplace_back(kSepToken);
  out.segments.resize(out.tokens.size(), 1);
  return out;
}

std::string_view to_string(PairOrder o) { return o == PairOrder::IJ ? "(i,j)" : "(j,i)"; }

PairOrder parse_order(std::string_view s) {
  if (s == "ij" || s == "(i,j)") return PairOrder::IJ;
  if (s == "ji" || s == "(j,i)") return PairOrder::JI;
  throw invalid_argument("unknown pair order '" + std::string(s) + "' (ij, ji)");
}

PairPrediction predict_pair(const PairClassifierEncoder& encoder, std::string_view str_i, std::string_view str_j,
                            const CrossSettings& settings) {
  auto f = format_pair(str_i, str_j, encoder.tokenizer(), settings.max_len);
  double p = 0.0;
  try {
    p = encoder.classify_pair(f.tokens, f.segments);
  } catch (const Error& e) {
    throw Error(e.kind(), "classifying (\"" + std::string(str_i) + "\", \"" + std::string(str_j) + "\"): " + e.what());
  } catch (const std::exception& e) {
    throw runtime_error("classifying (\"" + std::string(str_i) + "\", \"" + std::string(str_j) + "\"): " + e.what());
  }
  if (!(p >= 0.0 && p <= 1.0))
    throw runtime_error("encoder " + encoder.name() + " returned probability " + format_double(p) + " for (\"" +
                        std::string(str_i) + "\", \"" + std::string(str_j) + "\")");
  PairPrediction out;
  out.score = settings.invert ? 1.0 - p : p;
  out.label = out.score >= settings.threshold ? 1 : 0;
  return out;
}

CrossEncoderRun evaluate_ordered(const PairClassifierEncoder& encoder, const std::string& model_label,
                                 const std::vector<CrossPair>& pairs, PairOrder order, const CrossSettings& settings) {
  if (pairs.empty()) throw invalid_argument("cross-encoder evaluation needs at least one pair");
  CrossEncoderRun run;
  run.model = model_label;
  run.order = order;
  run.threshold = settings.threshold;
  run.head_type = encoder.head_type();
  run.scores.assign(pairs.size(), 0.0);
  run.labels.reserve(pairs.size());
  for (const auto& p : pairs) run.labels.push_back(p.label);

  auto score_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t k = lo; k < hi; ++k) {
      const auto& p = pairs[k];
      run.scores[k] = order == PairOrder::IJ ? predict_pair(encoder, p.str_i, p.str_j, settings).score
                                             : predict_pair(encoder, p.str_j, p.str_i, settings).score;
    }
  };
  const std::size_t threads =
      encoder.thread_safe() ? std::max<std::size_t>(1, std::min(settings.threads, pairs.size())) : 1;
  if (threads == 1) {
    score_range(0, pairs.size());
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          score_range(t * pairs.size() / threads, (t + 1) * pairs.size() / threads);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  std::string configuration = "order " + std::string(to_string(order)) + ", head " + run.head_type;
  if (settings.invert) configuration += ", inverted";
  run.row = make_row(model_label, configuration, settings.threshold,
                     confusion(run.scores, run.labels, settings.threshold));
  return run;
}

std::string score_dump(const std::vector<CrossPair>& pairs, const CrossEncoderRun& run) {
  if (pairs.size() != run.scores.size()) throw invalid_argument("score dump: pair count differs from the run");
  std::string out = "aui1\taui2\torder\tscore\tlabel\tpred\n";
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    out += pairs[k].aui_i + '\t' + pairs[k].aui_j + '\t' + std::string(to_string(run.order)) + '\t' +
           format_double(run.scores[k]) + '\t' + std::to_string(pairs[k].label) + '\t' +
           (run.scores[k] >= run.threshold ? "1" : "0") + '\n';
  }
  return out;
}

}  // namespace uva
