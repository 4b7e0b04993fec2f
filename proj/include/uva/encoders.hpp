#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "uva/embedding.hpp"

namespace uva {

/// A contextual encoder that also exposes a pair-level head (next-sentence
/// style): probability that the two segments are related.
class PairClassifierEncoder : public ContextualEncoder {
 public:
  virtual double classify_pair(std::span<const std::string> tokens, std::span<const int> segment_ids) const = 0;
  /// "nsp" for a pretrained next-sentence head, "random" for an untrained one.
  virtual std::string head_type() const { return "nsp"; }
  /// Whether classify_pair/encode may be called from several threads at once.
  virtual bool thread_safe() const { return true; }
};

/// Test fixture: hidden[layer l][position p] is the constant vector (l + p).
/// classify_pair always answers 0.5.
class MockEncoder final : public PairClassifierEncoder {
 public:
  explicit MockEncoder(std::size_t layers = 4, std::size_t dim = 2) : layers_(layers), dim_(dim) {}
  std::string name() const override { return "mock"; }
  const Tokenizer& tokenizer() const override { return tokenizer_; }
  std::size_t num_layers() const override { return layers_; }
  std::size_t hidden_dim() const override { return dim_; }
  HiddenStates encode(std::span<const std::string> tokens) const override;
  double classify_pair(std::span<const std::string>, std::span<const int>) const override { return 0.5; }

 private:
  std::size_t layers_;
  std::size_t dim_;
  WordTokenizer tokenizer_;
};

/// Test fixture: every hidden state equals `value` in every component.
class ConstantEncoder final : public PairClassifierEncoder {
 public:
  ConstantEncoder(double value = 1.0, std::size_t layers = 4, std::size_t dim = 2)
      : value_(value), layers_(layers), dim_(dim) {}
  std::string name() const override { return "constant"; }
  const Tokenizer& tokenizer() const override { return tokenizer_; }
  std::size_t num_layers() const override { return layers_; }
  std::size_t hidden_dim() const override { return dim_; }
  HiddenStates encode(std::span<const std::string> tokens) const override;
  double classify_pair(std::span<const std::string>, std::span<const int>) const override { return 0.5; }

 private:
  double value_;
  std::size_t layers_;
  std::size_t dim_;
  WordTokenizer tokenizer_;
};

/// Small deterministic contextual encoder with randomly drawn weights.
/// Each layer mixes a position's state with the sequence mean, so the same
/// token gets different vectors in different strings. Its pair head is the
/// rescaled cosine of the two segments' mean last-layer states.
class ToyEncoder final : public PairClassifierEncoder {
 public:
  ToyEncoder(std::uint64_t seed, std::size_t layers = 4, std::size_t dim = 16,
             std::shared_ptr<const Tokenizer> tokenizer = nullptr);
  std::string name() const override;
  const Tokenizer& tokenizer() const override { return *tokenizer_; }
  std::size_t num_layers() const override { return layers_; }
  std::size_t hidden_dim() const override { return dim_; }
  HiddenStates encode(std::span<const std::string> tokens) const override;
  double classify_pair(std::span<const std::string> tokens, std::span<const int> segment_ids) const override;
  std::string head_type() const override { return "random"; }

 private:
  std::uint64_t seed_;
  std::size_t layers_;
  std::size_t dim_;
  std::shared_ptr<const Tokenizer> tokenizer_;
  std::vector<double> mix_self_;  // layers x dim x dim
  std::vector<double> mix_ctx_;   // layers x dim x dim
  std::vector<double> token_vector(const std::string& token, std::size_t position) const;
};

/// Pair-head stubs for protocol tests; their hidden states are all zero.
class StubPairClassifier : public PairClassifierEncoder {
 public:
  const Tokenizer& tokenizer() const override { return tokenizer_; }
  std::size_t num_layers() const override { return 4; }
  std::size_t hidden_dim() const override { return 1; }
  HiddenStates encode(std::span<const std::string> tokens) const override;
  std::string head_type() const override { return "stub"; }

 private:
  WordTokenizer tokenizer_;
};

class ConstantPairStub final : public StubPairClassifier {
 public:
  explicit ConstantPairStub(double probability) : p_(probability) {}
  std::string name() const override;
  double classify_pair(std::span<const std::string>, std::span<const int>) const override { return p_; }

 private:
  double p_;
};

/// Jaccard overlap of the two segments' token sets: independent of order.
class SymmetricPairStub final : public StubPairClassifier {
 public:
  std::string name() const override { return "stub-symmetric"; }
  double classify_pair(std::span<const std::string> tokens, std::span<const int> segment_ids) const override;
};

/// 1 when the first segment's text sorts before the second's, else 0.
class AsymmetricPairStub final : public StubPairClassifier {
 public:
  std::string name() const override { return "stub-asymmetric"; }
  double classify_pair(std::span<const std::string> tokens, std::span<const int> segment_ids) const override;
};

/// Encoder living in a child process, spoken to over stdin/stdout with one
/// JSON object per line. Requests: {"op":"info"}, {"op":"tokenize","text":..},
/// {"op":"encode","tokens":[..]}, {"op":"classify","tokens":[..],"segments":[..]}.
/// Replies carry the matching fields or {"error": ".."}.
class ProcessEncoder final : public PairClassifierEncoder {
 public:
  explicit ProcessEncoder(const std::string& command);
  ~ProcessEncoder() override;
  ProcessEncoder(const ProcessEncoder&) = delete;
  ProcessEncoder& operator=(const ProcessEncoder&) = delete;

  std::string name() const override { return name_; }
  const Tokenizer& tokenizer() const override { return *tokenizer_; }
  std::size_t num_layers() const override { return layers_; }
  std::size_t hidden_dim() const override { return dim_; }
  HiddenStates encode(std::span<const std::string> tokens) const override;
  double classify_pair(std::span<const std::string> tokens, std::span<const int> segment_ids) const override;
  std::string head_type() const override { return head_; }

  /// Sends one request line and returns the reply line.
  std::string roundtrip(const std::string& request) const;

  class Channel;

 private:
  std::unique_ptr<Channel> channel_;
  std::unique_ptr<Tokenizer> tokenizer_;
  std::string name_;
  std::string head_ = "nsp";
  std::size_t layers_ = 0;
  std::size_t dim_ = 0;
};

/// Opens an encoder from a locator string:
///   mock | constant:<v> | toy[:layers=L,dim=D,seed=S] | process:<command>
///   | stub-constant:<p> | stub-symmetric | stub-asymmetric
/// `tokenizer_spec` (see make_tokenizer) applies to toy encoders; empty means "word".
std::unique_ptr<PairClassifierEncoder> open_encoder(const std::string& locator, const std::string& tokenizer_spec = "");

struct RegistryEntry {
  std::string locator;
  std::string tokenizer;
};

/// model_name -> locator mapping read from JSON, either {"name": "locator"}
/// or {"models": {"name": {"locator": .., "tokenizer": ..}}}.
class EncoderRegistry {
 public:
  static EncoderRegistry load_file(const std::string& path);
  static EncoderRegistry parse(const std::string& json_text);

  const RegistryEntry& entry(const std::string& model_name) const;
  std::unique_ptr<PairClassifierEncoder> open(const std::string& model_name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, RegistryEntry> entries_;
};

}  // namespace uva
