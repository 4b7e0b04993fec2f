#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "uva/encoders.hpp"
#include "uva/evalreport.hpp"

namespace uva {

inline constexpr const char* kClsToken = "[CLS]";
inline constexpr const char* kSepToken = "[SEP]";

struct FormattedPair {
  std::vector<std::string> tokens;
  std::vector<int> segments;
};

/// [CLS] tok(a) [SEP] tok(b) [SEP], segment 0 up to and including the first
/// [SEP]. Over-long inputs lose tokens from the end of the longer segment, one
/// at a time (the second on ties), but a non-empty segment keeps at least one
/// token; max_len too small for that is an invalid argument.
FormattedPair format_pair(std::string_view str_i, std::string_view str_j, const Tokenizer& tokenizer,
                          std::size_t max_len = 64);

enum class PairOrder { IJ, JI };
std::string_view to_string(PairOrder o);  // "(i,j)" / "(j,i)"
PairOrder parse_order(std::string_view s);  // accepts "ij", "ji", "(i,j)", "(j,i)"

struct CrossSettings {
  double threshold = 0.5;
  std::size_t max_len = 64;
  /// Treat a high head probability as non-synonymous instead.
  bool invert = false;
  std::size_t threads = 1;
};

struct PairPrediction {
  double score = 0.0;
  int label = 0;
};

/// Score is the head probability (1 - probability when inverted); label 1
/// (synonymous) iff score >= threshold.
PairPrediction predict_pair(const PairClassifierEncoder& encoder, std::string_view str_i, std::string_view str_j,
                            const CrossSettings& settings = {});

struct CrossPair {
  std::string aui_i;
  std::string aui_j;
  std::string str_i;
  std::string str_j;
  int label = 0;
};

struct CrossEncoderRun {
  std::string model;
  PairOrder order = PairOrder::IJ;
  double threshold = 0.5;
  std::string head_type;
  MetricsRow row;
  std::vector<double> scores;  // aligned with the input pairs
  std::vector<int> labels;
};

/// Feeds every pair in the given order and scores the result. Pairs are split
/// into contiguous shards when the encoder is thread safe; scores keep input order.
CrossEncoderRun evaluate_ordered(const PairClassifierEncoder& encoder, const std::string& model_label,
                                 const std::vector<CrossPair>& pairs, PairOrder order, const CrossSettings& settings);

/// TSV with header `aui1 aui2 order score label pred`.
std::string score_dump(const std::vector<CrossPair>& pairs, const CrossEncoderRun& run);

}  // namespace uva
