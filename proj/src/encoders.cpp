#include "uva/encoders.hpp"

#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <json.hpp>

#include "uva/common.hpp"
#include "uva/lexsim.hpp"

namespace uva {

using nlohmann::json;

HiddenStates MockEncoder::encode(std::span<const std::string> tokens) const {
  HiddenStates hs(layers_, tokens.size(), dim_);
  for (std::size_t l = 0; l < layers_; ++l)
    for (std::size_t p = 0; p < tokens.size(); ++p)
      for (double& v : hs.at(l, p)) v = static_cast<double>(l + p);
  return hs;
}

HiddenStates ConstantEncoder::encode(std::span<const std::string> tokens) const {
  HiddenStates hs(layers_, tokens.size(), dim_);
  std::fill(hs.data.begin(), hs.data.end(), value_);
  return hs;
}

// ---------------------------------------------------------------------------

ToyEncoder::ToyEncoder(std::uint64_t seed, std::size_t layers, std::size_t dim,
                       std::shared_ptr<const Tokenizer> tokenizer)
    : seed_(seed), layers_(layers), dim_(dim), tokenizer_(std::move(tokenizer)) {
  if (layers_ == 0 || dim_ == 0) throw invalid_argument("toy encoder needs at least one layer and dimension");
  if (!tokenizer_) tokenizer_ = std::make_shared<WordTokenizer>();
  Rng rng(derive_seed(seed_, "toy-encoder-weights"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
  mix_self_.resize(layers_ * dim_ * dim_);
  mix_ctx_.resize(layers_ * dim_ * dim_);
  for (double& w : mix_self_) w = rng.normal() * scale;
  for (double& w : mix_ctx_) w = rng.normal() * scale;
}

std::string ToyEncoder::name() const {
  return "toy:layers=" + std::to_string(layers_) + ",dim=" + std::to_string(dim_) + ",seed=" + std::to_string(seed_);
}

std::vector<double> ToyEncoder::token_vector(const std::string& token, std::size_t position) const {
  Rng tok(derive_seed(seed_, "token:" + token));
  Rng pos(derive_seed(seed_, position + 0x51ed));
  std::vector<double> v(dim_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
  for (double& x : v) x = tok.normal() * scale + 0.1 * pos.normal() * scale;
  return v;
}

HiddenStates ToyEncoder::encode(std::span<const std::string> tokens) const {
  const std::size_t n = tokens.size();
  HiddenStates hs(layers_, n, dim_);
  std::vector<double> prev(n * dim_);
  for (std::size_t p = 0; p < n; ++p) {
    auto v = token_vector(tokens[p], p);
    std::copy(v.begin(), v.end(), prev.begin() + static_cast<std::ptrdiff_t>(p * dim_));
  }
  std::vector<double> mean(dim_);
  for (std::size_t l = 0; l < layers_; ++l) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t d = 0; d < dim_; ++d) mean[d] += prev[p * dim_ + d] / static_cast<double>(n);
    const double* ws = mix_self_.data() + l * dim_ * dim_;
    const double* wc = mix_ctx_.data() + l * dim_ * dim_;
    for (std::size_t p = 0; p < n; ++p) {
      auto out = hs.at(l, p);
      for (std::size_t i = 0; i < dim_; ++i) {
        double z = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) z += ws[i * dim_ + j] * prev[p * dim_ + j] + wc[i * dim_ + j] * mean[j];
        out[i] = prev[p * dim_ + i] + std::tanh(z);
      }
    }
    for (std::size_t p = 0; p < n; ++p) {
      auto cur = hs.at(l, p);
      std::copy(cur.begin(), cur.end(), prev.begin() + static_cast<std::ptrdiff_t>(p * dim_));
    }
  }
  return hs;
}

double ToyEncoder::classify_pair(std::span<const std::string> tokens, std::span<const int> segment_ids) const {
  const HiddenStates hs = encode(tokens);
  std::vector<double> seg[2] = {std::vector<double>(dim_, 0.0), std::vector<double>(dim_, 0.0)};
  std::size_t count[2] = {0, 0};
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    if (tokens[p] == "[CLS]" || tokens[p] == "[SEP]") continue;
    const int s = segment_ids[p] ? 1 : 0;
    auto h = hs.at(layers_ - 1, p);
    for (std::size_t d = 0; d < dim_; ++d) seg[s][d] += h[d];
    ++count[s];
  }
  if (count[0] == 0 || count[1] == 0) return 0.0;
  double dot = 0, n0 = 0, n1 = 0;
  for (std::size_t d = 0; d < dim_; ++d) {
    dot += seg[0][d] * seg[1][d];
    n0 += seg[0][d] * seg[0][d];
    n1 += seg[1][d] * seg[1][d];
  }
  if (n0 == 0 || n1 == 0) return 0.0;
  const double cosine = dot / std::sqrt(n0 * n1);
  return std::clamp((cosine + 1.0) / 2.0, 0.0, 1.0);
}

// ---------------------------------------------------------------------------

HiddenStates StubPairClassifier::encode(std::span<const std::string> tokens) const {
  return HiddenStates(num_layers(), tokens.size(), hidden_dim());
}

std::string ConstantPairStub::name() const { return "stub-constant:" + format_double(p_); }

namespace {

std::pair<std::vector<std::string>, std::vector<std::string>> segments_of(std::span<const std::string> tokens,
                                                                          std::span<const int> segment_ids) {
  std::pair<std::vector<std::string>, std::vector<std::string>> out;
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    if (tokens[p] == "[CLS]" || tokens[p] == "[SEP]") continue;
    (segment_ids[p] ? out.second : out.first).push_back(tokens[p]);
  }
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& t : v) {
    if (!s.empty()) s += ' ';
    s += t;
  }
  return s;
}

}  // namespace

double SymmetricPairStub::classify_pair(std::span<const std::string> tokens, std::span<const int> segment_ids) const {
  auto [a, b] = segments_of(tokens, segment_ids);
  auto as = word_tokenize(join(a));
  auto bs = word_tokenize(join(b));
  return jaccard(as, bs);
}

double AsymmetricPairStub::classify_pair(std::span<const std::string> tokens, std::span<const int> segment_ids) const {
  auto [a, b] = segments_of(tokens, segment_ids);
  return join(a) < join(b) ? 1.0 : 0.0;
}

// ---------------------------------------------------------------------------

class ProcessEncoder::Channel {
 public:
  explicit Channel(const std::string& command) : command_(command) {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0)
      throw runtime_error("encoder process: socketpair failed: " + std::string(std::strerror(errno)));
    pid_ = ::fork();
    if (pid_ < 0) {
      ::close(fds[0]);
      ::close(fds[1]);
      throw runtime_error("encoder process: fork failed");
    }
    if (pid_ == 0) {
      ::close(fds[0]);
      ::dup2(fds[1], STDIN_FILENO);
      ::dup2(fds[1], STDOUT_FILENO);
      ::close(fds[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(fds[1]);
    fd_ = fds[0];
  }

  ~Channel() {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
    }
    if (pid_ > 0) {
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
  }

  std::string roundtrip(const std::string& request) {
    std::lock_guard<std::mutex> lock(mu_);
    std::string line = request;
    line.push_back('\n');
    std::size_t sent = 0;
    while (sent < line.size()) {
      ssize_t n = ::send(fd_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw runtime_error("encoder process '" + command_ + "' closed its input");
      sent += static_cast<std::size_t>(n);
    }
    while (true) {
      auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string reply = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return reply;
      }
      char chunk[65536];
      ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw runtime_error("encoder process '" + command_ + "' exited without replying");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  std::string command_;
  pid_t pid_ = -1;
  int fd_ = -1;
  std::string buffer_;
  std::mutex mu_;
};

namespace {

json checked_reply(ProcessEncoder::Channel& ch, const json& request) {
  json reply;
  try {
    reply = json::parse(ch.roundtrip(request.dump()));
  } catch (const json::exception& e) {
    throw runtime_error(std::string("encoder process sent invalid JSON: ") + e.what());
  }
  if (reply.contains("error")) throw runtime_error("encoder process error: " + reply["error"].get<std::string>());
  return reply;
}

class ProcessTokenizer final : public Tokenizer {
 public:
  ProcessTokenizer(ProcessEncoder::Channel& ch, std::string id) : ch_(ch), id_(std::move(id)) {}
  std::vector<std::string> tokenize(std::string_view text) const override {
    json reply = checked_reply(ch_, {{"op", "tokenize"}, {"text", text}});
    return reply.at("tokens").get<std::vector<std::string>>();
  }
  std::string id() const override { return id_; }

 private:
  ProcessEncoder::Channel& ch_;
  std::string id_;
};

}  // namespace

ProcessEncoder::ProcessEncoder(const std::string& command) : channel_(std::make_unique<Channel>(command)) {
  json info = checked_reply(*channel_, {{"op", "info"}});
  try {
    layers_ = info.at("num_layers").get<std::size_t>();
    dim_ = info.at("hidden_dim").get<std::size_t>();
    name_ = info.value("name", command);
    head_ = info.value("head", std::string("nsp"));
    tokenizer_ = std::make_unique<ProcessTokenizer>(*channel_, info.value("tokenizer", std::string("process")));
  } catch (const json::exception& e) {
    throw runtime_error(std::string("encoder process info reply is incomplete: ") + e.what());
  }
}

ProcessEncoder::~ProcessEncoder() = default;

std::string ProcessEncoder::roundtrip(const std::string& request) const { return channel_->roundtrip(request); }

HiddenStates ProcessEncoder::encode(std::span<const std::string> tokens) const {
  json reply = checked_reply(*channel_, {{"op", "encode"}, {"tokens", std::vector<std::string>(tokens.begin(), tokens.end())}});
  const json& hidden = reply.at("hidden");
  HiddenStates hs(layers_, tokens.size(), dim_);
  if (hidden.size() != layers_) throw runtime_error("encoder process returned the wrong number of layers");
  for (std::size_t l = 0; l < layers_; ++l) {
    if (hidden[l].size() != tokens.size()) throw runtime_error("encoder process returned the wrong sequence length");
    for (std::size_t p = 0; p < tokens.size(); ++p) {
      const json& row = hidden[l][p];
      if (row.size() != dim_) throw runtime_error("encoder process returned the wrong hidden size");
      auto out = hs.at(l, p);
      for (std::size_t d = 0; d < dim_; ++d) out[d] = row[d].get<double>();
    }
  }
  return hs;
}

double ProcessEncoder::classify_pair(std::span<const std::string> tokens, std::span<const int> segment_ids) const {
  json reply = checked_reply(*channel_, {{"op", "classify"},
                                         {"tokens", std::vector<std::string>(tokens.begin(), tokens.end())},
                                         {"segments", std::vector<int>(segment_ids.begin(), segment_ids.end())}});
  return reply.at("probability").get<double>();
}

// ---------------------------------------------------------------------------

std::unique_ptr<PairClassifierEncoder> open_encoder(const std::string& locator, const std::string& tokenizer_spec) {
  auto after = [&](std::string_view prefix) { return locator.substr(prefix.size()); };
  if (locator == "mock") return std::make_unique<MockEncoder>();
  if (locator.starts_with("constant:")) return std::make_unique<ConstantEncoder>(parse_double(after("constant:")));
  if (locator == "stub-symmetric") return std::make_unique<SymmetricPairStub>();
  if (locator == "stub-asymmetric") return std::make_unique<AsymmetricPairStub>();
  if (locator.starts_with("stub-constant:"))
    return std::make_unique<ConstantPairStub>(parse_double(after("stub-constant:")));
  if (locator.starts_with("process:")) return std::make_unique<ProcessEncoder>(after("process:"));
  if (locator == "toy" || locator.starts_with("toy:")) {
    std::size_t layers = 4, dim = 16;
    std::uint64_t seed = 0;
    if (locator.size() > 4) {
      const std::string options = after("toy:");
      for (auto kv : split(options, ',')) {
        auto eq = kv.find('=');
        if (eq == std::string_view::npos) throw invalid_argument("toy locator option must be key=value: " + locator);
        auto key = kv.substr(0, eq);
        auto value = std::stoull(std::string(kv.substr(eq + 1)));
        if (key == "layers") {
          layers = value;
        } else if (key == "dim") {
          dim = value;
        } else if (key == "seed") {
          seed = value;
        } else {
          throw invalid_argument("unknown toy encoder option '" + std::string(key) + "'");
        }
      }
    }
    std::shared_ptr<const Tokenizer> tok =
        tokenizer_spec.empty() ? std::shared_ptr<const Tokenizer>(std::make_shared<WordTokenizer>())
                               : std::shared_ptr<const Tokenizer>(make_tokenizer(tokenizer_spec));
    return std::make_unique<ToyEncoder>(seed, layers, dim, std::move(tok));
  }
  throw invalid_argument("unknown encoder locator '" + locator + "'");
}

EncoderRegistry EncoderRegistry::parse(const std::string& json_text) {
  EncoderRegistry reg;
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("encoder registry is not valid JSON: ") + e.what());
  }
  const json& models = doc.contains("models") ? doc["models"] : doc;
  if (!models.is_object()) throw validation_error("encoder registry must map model names to locators");
  for (auto& [name, value] : models.items()) {
    RegistryEntry e;
    if (value.is_string()) {
      e.locator = value.get<std::string>();
    } else if (value.is_object() && value.contains("locator")) {
      e.locator = value["locator"].get<std::string>();
      e.tokenizer = value.value("tokenizer", std::string());
    } else {
      throw validation_error("encoder registry entry '" + name + "' needs a locator");
    }
    reg.entries_.emplace(name, std::move(e));
  }
  return reg;
}

EncoderRegistry EncoderRegistry::load_file(const std::string& path) { return parse(read_file(path)); }

const RegistryEntry& EncoderRegistry::entry(const std::string& model_name) const {
  auto it = entries_.find(model_name);
  if (it == entries_.end()) throw validation_error("model '" + model_name + "' is not in the encoder registry");
  return it->second;
}

std::unique_ptr<PairClassifierEncoder> EncoderRegistry::open(const std::string& model_name) const {
  const auto& e = entry(model_name);
  return open_encoder(e.locator, e.tokenizer);
}

std::vector<std::string> EncoderRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

}  // namespace uva
