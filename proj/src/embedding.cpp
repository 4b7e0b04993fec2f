#include "uva/embedding.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "uva/common.hpp"

namespace uva {

namespace {

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  for (auto part : split(line, ' '))
    if (!part.empty()) out.push_back(part);
  return out;
}

}  // namespace

void EmbeddingTable::add(std::string token, std::span<const double> values) {
  if (values.size() != dim_)
    throw validation_error("token '" + token + "': expected " + std::to_string(dim_) + " values, got " +
                           std::to_string(values.size()));
  if (token.empty() || token.find_first_of(" \t\n") != std::string::npos)
    throw validation_error("invalid token '" + token + "' (empty or contains whitespace)");
  if (index_.count(token)) throw validation_error("duplicate token '" + token + "'");
  index_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
  data_.insert(data_.end(), values.begin(), values.end());
}

std::optional<std::size_t> EmbeddingTable::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const double> EmbeddingTable::vector_for(std::string_view token) const {
  auto i = find(token);
  return i ? row(*i) : oov();
}

void EmbeddingTable::recompute_oov() {
  std::fill(oov_.begin(), oov_.end(), 0.0);
  if (tokens_.empty()) return;
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    for (std::size_t d = 0; d < dim_; ++d) oov_[d] += data_[i * dim_ + d];
  for (double& v : oov_) v /= static_cast<double>(tokens_.size());
}

EmbeddingTable load_static_table(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::size_t count = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) break;
  }
  auto header = split_spaces(line);
  if (header.size() != 2) throw ParseError(lineno, "vector file header must be `count dim`");
  try {
    count = std::stoull(std::string(header[0]));
    dim = std::stoull(std::string(header[1]));
  } catch (const std::exception&) {
    throw ParseError(lineno, "vector file header must be two integers");
  }
  if (dim == 0) throw ParseError(lineno, "dimension must be positive");

  EmbeddingTable table(dim);
  std::vector<double> values(dim);
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto parts = split_spaces(line);
    const std::string token(parts[0]);
    if (parts.size() - 1 != dim)
      throw ParseError(lineno, "token '" + token + "': expected " + std::to_string(dim) + " values, got " +
                                   std::to_string(parts.size() - 1));
    for (std::size_t d = 0; d < dim; ++d) values[d] = parse_double(parts[d + 1], lineno);
    if (table.find(token)) throw ParseError(lineno, "duplicate token '" + token + "'");
    table.add(token, values);
  }
  if (table.size() != count)
    throw ParseError(0, "header declares " + std::to_string(count) + " vectors, file has " +
                            std::to_string(table.size()));
  table.recompute_oov();
  return table;
}

EmbeddingTable load_static_table_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open vector file " + path);
  return load_static_table(in);
}

void write_table(const EmbeddingTable& table, std::ostream& out) {
  out << table.size() << ' ' << table.dim() << '\n';
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.tokens()[i];
    for (double v : table.row(i)) out << ' ' << format_double(v);
    out << '\n';
  }
}

void write_table_file(const EmbeddingTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write " + path);
  write_table(table, out);
  if (!out) throw io_error("write failed: " + path);
}

std::string table_hash(const EmbeddingTable& table) {
  std::ostringstream ss;
  write_table(table, ss);
  return sha256_hex(ss.str());
}

EmbeddingTable random_table(const std::vector<std::string>& tokens, std::size_t dim, std::uint64_t seed,
                            double scale) {
  if (dim == 0) throw invalid_argument("embedding dimension must be positive");
  EmbeddingTable table(dim);
  Rng rng(derive_seed(seed, "random_table"));
  std::vector<double> v(dim);
  for (const auto& t : tokens) {
    if (table.find(t)) continue;
    for (double& x : v) x = (2.0 * rng.uniform() - 1.0) * scale;
    table.add(t, v);
  }
  table.recompute_oov();
  return table;
}

std::string_view to_string(OccurrencePolicy p) {
  switch (p) {
    case OccurrencePolicy::First: return "first";
    case OccurrencePolicy::Last: return "last";
    case OccurrencePolicy::Average: return "average";
  }
  return "?";
}

std::string_view to_string(LayerPool p) { return p == LayerPool::LastLayer ? "last_layer" : "avg_last4"; }

OccurrencePolicy parse_occurrence(std::string_view name) {
  if (name == "first") return OccurrencePolicy::First;
  if (name == "last") return OccurrencePolicy::Last;
  if (name == "average") return OccurrencePolicy::Average;
  throw invalid_argument("unknown occurrence policy '" + std::string(name) + "' (first, last, average)");
}

LayerPool parse_layer_pool(std::string_view name) {
  if (name == "last_layer") return LayerPool::LastLayer;
  if (name == "avg_last4") return LayerPool::AvgLast4;
  throw invalid_argument("unknown layer pooling '" + std::string(name) + "' (last_layer, avg_last4)");
}

std::string ExtractionStrategy::name() const {
  return std::string(to_string(occurrence)) + "-" + std::string(to_string(layer_pool));
}

ExtractionStrategy ExtractionStrategy::parse(std::string_view name) {
  auto dash = name.find('-');
  if (dash == std::string_view::npos) throw invalid_argument("strategy must look like '<occurrence>-<layer_pool>'");
  return {parse_occurrence(name.substr(0, dash)), parse_layer_pool(name.substr(dash + 1))};
}

std::vector<ExtractionStrategy> ExtractionStrategy::all() {
  std::vector<ExtractionStrategy> out;
  for (auto o : {OccurrencePolicy::First, OccurrencePolicy::Last, OccurrencePolicy::Average})
    for (auto l : {LayerPool::LastLayer, LayerPool::AvgLast4}) out.push_back({o, l});
  return out;
}

EmbeddingTable extract_contextual_table(const ContextualEncoder& encoder, const std::vector<std::string>& corpus,
                                        const ExtractionStrategy& strategy, std::size_t max_tokens) {
  if (corpus.empty()) throw invalid_argument("extraction corpus is empty");
  const std::size_t layers = encoder.num_layers();
  const std::size_t dim = encoder.hidden_dim();
  if (strategy.layer_pool == LayerPool::AvgLast4 && layers < 4)
    throw invalid_argument("encoder " + encoder.name() + " has " + std::to_string(layers) +
                           " layers; avg_last4 needs at least 4");
  if (layers == 0 || dim == 0) throw invalid_argument("encoder " + encoder.name() + " reports an empty shape");

  // Sum and count per token; FIRST/LAST keep a single vector with count 1.
  struct Accumulator {
    std::vector<double> sum;
    std::size_t count = 0;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, Accumulator> acc;
  std::vector<double> pooled(dim);

  for (const auto& text : corpus) {
    auto tokens = encoder.tokenizer().tokenize(text);
    if (tokens.size() > max_tokens) tokens.resize(max_tokens);
    if (tokens.empty()) continue;
    const HiddenStates hs = encoder.encode(tokens);
    if (hs.layers != layers || hs.positions != tokens.size() || hs.dim != dim)
      throw runtime_error("encoder " + encoder.name() + " returned hidden states of the wrong shape");
    for (std::size_t p = 0; p < tokens.size(); ++p) {
      if (strategy.layer_pool == LayerPool::LastLayer) {
        auto h = hs.at(layers - 1, p);
        std::copy(h.begin(), h.end(), pooled.begin());
      } else {
        std::fill(pooled.begin(), pooled.end(), 0.0);
        for (std::size_t l = layers - 4; l < layers; ++l) {
          auto h = hs.at(l, p);
          for (std::size_t d = 0; d < dim; ++d) pooled[d] += h[d];
        }
        for (double& v : pooled) v /= 4.0;
      }
      auto [it, inserted] = acc.try_emplace(tokens[p]);
      Accumulator& a = it->second;
      if (inserted) order.push_back(tokens[p]);
      switch (strategy.occurrence) {
        case OccurrencePolicy::First:
          if (inserted) a.sum = pooled, a.count = 1;
          break;
        case OccurrencePolicy::Last:
          a.sum = pooled;
          a.count = 1;
          break;
        case OccurrencePolicy::Average:
          if (inserted) a.sum.assign(dim, 0.0);
          for (std::size_t d = 0; d < dim; ++d) a.sum[d] += pooled[d];
          ++a.count;
          break;
      }
    }
  }

  EmbeddingTable table(dim);
  std::vector<double> v(dim);
  for (const auto& token : order) {
    const Accumulator& a = acc.at(token);
    for (std::size_t d = 0; d < dim; ++d) v[d] = a.sum[d] / static_cast<double>(a.count);
    table.add(token, v);
  }
  table.recompute_oov();
  return table;
}

TokenMatrix lookup(const EmbeddingTable& table, std::span<const std::string> tokens, std::size_t max_tokens) {
  TokenMatrix m;
  m.rows = max_tokens;
  m.cols = table.dim();
  m.data.assign(m.rows * m.cols, 0.0);
  const std::size_t n = std::min(tokens.size(), max_tokens);
  for (std::size_t r = 0; r < n; ++r) {
    auto v = table.vector_for(tokens[r]);
    std::copy(v.begin(), v.end(), m.data.begin() + static_cast<std::ptrdiff_t>(r * m.cols));
  }
  return m;
}

}  // namespace uva
