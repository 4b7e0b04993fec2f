#include "uva/siamese.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <thread>

#include "uva/common.hpp"

namespace uva {

using nlohmann::json;

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMap = Eigen::Map<const Eigen::MatrixXd>;
using MMap = Eigen::Map<Eigen::MatrixXd>;

// Backward passes are split over this many fixed slices of the batch's
// distinct sequences; partial gradients are summed in slice order, so the
// result does not depend on the thread count.
constexpr std::size_t kGradSlices = 8;
constexpr double kBceEpsilon = 1e-7;

std::string_view loss_name(LossKind k) { return k == LossKind::MeanSquaredError ? "mse" : "bce"; }

LossKind parse_loss(std::string_view s) {
  if (s == "bce") return LossKind::BinaryCrossEntropy;
  if (s == "mse") return LossKind::MeanSquaredError;
  throw invalid_argument("unknown loss '" + std::string(s) + "' (bce, mse)");
}

json config_json(const SiameseConfig& c, bool for_hash) {
  json j = {{"embed_dim", c.embed_dim},
            {"lstm_hidden", c.lstm_hidden},
            {"dense1_units", c.dense1_units},
            {"dense2_units", c.dense2_units},
            {"use_attention", c.use_attention},
            {"attention_units", c.attention_units},
            {"max_tokens", c.max_tokens},
            {"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"trainable_embeddings", c.trainable_embeddings},
            {"loss", loss_name(c.loss)},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_epsilon", c.adam_epsilon},
            {"tokenizer", c.tokenizer}};
  if (!for_hash) {
    j["epochs"] = c.epochs;
    j["threshold"] = c.threshold;
    j["threads"] = c.threads;
  }
  return j;
}

// Views of the parameter blocks of one network, over either the weights or a
// gradient buffer of the same layout.
template <typename Ptr>
struct NetView {
  using M = std::conditional_t<std::is_const_v<std::remove_pointer_t<Ptr>>, CMap, MMap>;
  Ptr base;
  const std::vector<ParamBlock>* layout;
  M operator()(std::size_t i) const {
    const auto& b = (*layout)[i];
    return M(base + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols));
  }
};

// Block order produced by init_layout().
enum Block : std::size_t {
  kEmbedding = 0,
  kFwdW, kFwdU, kFwdB,
  kBwdW, kBwdU, kBwdB,
  kDense1W, kDense1B, kDense2W, kDense2B,
  kAttW, kAttB, kAttV,  // present only with attention
};

struct DirectionCache {
  Mat gates;  // 4H x T, post-activation (i, f, g, o)
  Mat c;      // H x T
  Mat tc;     // tanh(c)
  Mat h;      // H x T
};

struct TowerCache {
  Eigen::Index steps = 0;
  Mat x;  // D x T
  DirectionCache fwd, bwd;
  Mat outputs;  // 2H x T (attention only)
  Mat att_hidden;  // A x T
  Vec alpha;
  Vec pooled, z1, a1, out;
};

Vec sigmoid(const Vec& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

template <typename M>
void lstm_forward(const M& w, const M& u, const M& b, const Mat& x, bool reverse, DirectionCache& cache) {
  const Eigen::Index hidden = u.cols();
  const Eigen::Index steps = x.cols();
  Mat zx = w * x;
  zx.colwise() += b.col(0);
  cache.gates.resize(4 * hidden, steps);
  cache.c.resize(hidden, steps);
  cache.tc.resize(hidden, steps);
  cache.h.resize(hidden, steps);
  Vec h = Vec::Zero(hidden);
  Vec c = Vec::Zero(hidden);
  for (Eigen::Index k = 0; k < steps; ++k) {
    const Eigen::Index t = reverse ? steps - 1 - k : k;
    Vec z = zx.col(t) + u * h;
    Vec i = sigmoid(z.segment(0, hidden));
    Vec f = sigmoid(z.segment(hidden, hidden));
    Vec g = z.segment(2 * hidden, hidden).array().tanh().matrix();
    Vec o = sigmoid(z.segment(3 * hidden, hidden));
    c = (f.array() * c.array() + i.array() * g.array()).matrix();
    Vec tc = c.array().tanh().matrix();
    h = (o.array() * tc.array()).matrix();
    cache.gates.col(t) << i, f, g, o;
    cache.c.col(t) = c;
    cache.tc.col(t) = tc;
    cache.h.col(t) = h;
  }
}

// Accumulates parameter and input gradients given dL/dh for every step.
template <typename CM, typename GM>
void lstm_backward(const CM& w, const CM& u, const Mat& x, bool reverse, const DirectionCache& cache,
                   const Mat& dh_ext, GM& dw, GM& du, GM& db, Mat& dx) {
  const Eigen::Index hidden = u.cols();
  const Eigen::Index steps = x.cols();
  Mat dz(4 * hidden, steps);
  Mat h_prev = Mat::Zero(hidden, steps);
  Vec dh_next = Vec::Zero(hidden);
  Vec dc_next = Vec::Zero(hidden);
  for (Eigen::Index k = steps - 1; k >= 0; --k) {
    const Eigen::Index t = reverse ? steps - 1 - k : k;
    const Eigen::Index prev = reverse ? t + 1 : t - 1;
    const bool has_prev = k > 0;
    auto i = cache.gates.col(t).segment(0, hidden).array();
    auto f = cache.gates.col(t).segment(hidden, hidden).array();
    auto g = cache.gates.col(t).segment(2 * hidden, hidden).array();
    auto o = cache.gates.col(t).segment(3 * hidden, hidden).array();
    auto tc = cache.tc.col(t).array();
    Vec dh = dh_ext.col(t) + dh_next;
    Eigen::ArrayXd c_prev = Eigen::ArrayXd::Zero(hidden);
    if (has_prev) c_prev = cache.c.col(prev).array();
    Eigen::ArrayXd dc = dh.array() * o * (1.0 - tc * tc) + dc_next.array();
    Eigen::ArrayXd d_o = dh.array() * tc;
    Eigen::ArrayXd d_i = dc * g;
    Eigen::ArrayXd d_g = dc * i;
    Eigen::ArrayXd d_f = dc * c_prev;
    dc_next = (dc * f).matrix();
    dz.col(t) << (d_i * i * (1.0 - i)).matrix(), (d_f * f * (1.0 - f)).matrix(), (d_g * (1.0 - g * g)).matrix(),
        (d_o * o * (1.0 - o)).matrix();
    if (has_prev) h_prev.col(t) = cache.h.col(prev);
    dh_next = u.transpose() * dz.col(t);
  }
  dw.noalias() += dz * x.transpose();
  du.noalias() += dz * h_prev.transpose();
  db.col(0) += dz.rowwise().sum();
  dx.noalias() += w.transpose() * dz;
}

struct Network {
  const SiameseConfig& cfg;
  NetView<const double*> p;

  void forward(std::span<const std::int32_t> ids, TowerCache& tc) const {
    const auto hidden = static_cast<Eigen::Index>(cfg.lstm_hidden);
    CMap emb = p(kEmbedding);
    tc.steps = static_cast<Eigen::Index>(ids.size());
    tc.x.resize(emb.rows(), tc.steps);
    for (Eigen::Index t = 0; t < tc.steps; ++t) tc.x.col(t) = emb.col(ids[static_cast<std::size_t>(t)]);
    lstm_forward(p(kFwdW), p(kFwdU), p(kFwdB), tc.x, false, tc.fwd);
    lstm_forward(p(kBwdW), p(kBwdU), p(kBwdB), tc.x, true, tc.bwd);
    tc.pooled = Vec::Zero(2 * hidden);
    if (tc.steps > 0) {
      if (cfg.use_attention) {
        tc.outputs.resize(2 * hidden, tc.steps);
        tc.outputs.topRows(hidden) = tc.fwd.h;
        tc.outputs.bottomRows(hidden) = tc.bwd.h;
        Mat pre = p(kAttW) * tc.outputs;
        pre.colwise() += p(kAttB).col(0);
        tc.att_hidden = pre.array().tanh().matrix();
        Vec e = tc.att_hidden.transpose() * p(kAttV).col(0);
        e.array() -= e.maxCoeff();
        tc.alpha = e.array().exp().matrix();
        tc.alpha /= tc.alpha.sum();
        tc.pooled = tc.outputs * tc.alpha;
      } else {
        tc.pooled.head(hidden) = tc.fwd.h.col(tc.steps - 1);
        tc.pooled.tail(hidden) = tc.bwd.h.col(0);
      }
    }
    tc.z1 = p(kDense1W) * tc.pooled + p(kDense1B).col(0);
    tc.a1 = tc.z1.cwiseMax(0.0);
    tc.out = p(kDense2W) * tc.a1 + p(kDense2B).col(0);
  }

  void backward(std::span<const std::int32_t> ids, const TowerCache& tc, const Vec& dout,
                NetView<double*>& g) const {
    const auto hidden = static_cast<Eigen::Index>(cfg.lstm_hidden);
    MMap gw2 = g(kDense2W), gb2 = g(kDense2B), gw1 = g(kDense1W), gb1 = g(kDense1B);
    gw2.noalias() += dout * tc.a1.transpose();
    gb2.col(0) += dout;
    Vec dz1 = (p(kDense2W).transpose() * dout).cwiseProduct((tc.z1.array() > 0.0).cast<double>().matrix());
    gw1.noalias() += dz1 * tc.pooled.transpose();
    gb1.col(0) += dz1;
    if (tc.steps == 0) return;
    Vec dp = p(kDense1W).transpose() * dz1;

    Mat dh_f = Mat::Zero(hidden, tc.steps);
    Mat dh_b = Mat::Zero(hidden, tc.steps);
    if (cfg.use_attention) {
      Mat d_outputs = dp * tc.alpha.transpose();
      Vec d_alpha = tc.outputs.transpose() * dp;
      Vec de = tc.alpha.cwiseProduct((d_alpha.array() - tc.alpha.dot(d_alpha)).matrix());
      MMap gv = g(kAttV), gwa = g(kAttW), gba = g(kAttB);
      gv.col(0) += tc.att_hidden * de;
      Mat d_pre = (p(kAttV).col(0) * de.transpose()).cwiseProduct(
          (1.0 - tc.att_hidden.array().square()).matrix());
      gwa.noalias() += d_pre * tc.outputs.transpose();
      gba.col(0) += d_pre.rowwise().sum();
      d_outputs.noalias() += p(kAttW).transpose() * d_pre;
      dh_f = d_outputs.topRows(hidden);
      dh_b = d_outputs.bottomRows(hidden);
    } else {
      dh_f.col(tc.steps - 1) = dp.head(hidden);
      dh_b.col(0) = dp.tail(hidden);
    }

    Mat dx = Mat::Zero(tc.x.rows(), tc.steps);
    MMap gfw = g(kFwdW), gfu = g(kFwdU), gfb = g(kFwdB);
    MMap gbw = g(kBwdW), gbu = g(kBwdU), gbb = g(kBwdB);
    lstm_backward(p(kFwdW), p(kFwdU), tc.x, false, tc.fwd, dh_f, gfw, gfu, gfb, dx);
    lstm_backward(p(kBwdW), p(kBwdU), tc.x, true, tc.bwd, dh_b, gbw, gbu, gbb, dx);
    MMap gemb = g(kEmbedding);
    for (Eigen::Index t = 0; t < tc.steps; ++t) gemb.col(ids[static_cast<std::size_t>(t)]) += dx.col(t);
  }
};

// Loss of one pair and dL/d(similarity).
std::pair<double, double> pair_loss(LossKind kind, double s, int label) {
  const double y = label ? 1.0 : 0.0;
  if (kind == LossKind::MeanSquaredError) return {(s - y) * (s - y), 2.0 * (s - y)};
  const double sc = std::clamp(s, kBceEpsilon, 1.0 - kBceEpsilon);
  const double loss = -(y * std::log(sc) + (1.0 - y) * std::log(1.0 - sc));
  const bool clipped = s <= kBceEpsilon || s >= 1.0 - kBceEpsilon;
  const double dloss = clipped ? 0.0 : -y / sc + (1.0 - y) / (1.0 - sc);
  return {loss, dloss};
}

void run_sliced(std::size_t slices, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, slices));
  if (threads == 1) {
    for (std::size_t s = 0; s < slices; ++s) fn(s);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t s = t; s < slices; s += threads) fn(s);
    });
  for (auto& th : pool) th.join();
}

void glorot(MMap m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = (2.0 * rng.uniform() - 1.0) * limit;
}

void orthogonal(MMap m, Rng& rng) {
  Mat a(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(a);
  Mat q = qr.householderQ() * Mat::Identity(a.rows(), a.cols());
  Mat r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  m = q;
}

}  // namespace

// ---------------------------------------------------------------------------

void SiameseConfig::validate() const {
  if (lstm_hidden == 0 || dense1_units == 0 || dense2_units == 0)
    throw invalid_argument("siamese unit counts must be >= 1");
  if (use_attention && attention_units == 0) throw invalid_argument("attention_units must be >= 1");
  if (max_tokens == 0) throw invalid_argument("max_tokens must be >= 1");
  if (batch_size == 0) throw invalid_argument("batch_size must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw invalid_argument("threshold must lie in (0,1)");
  if (!(learning_rate > 0.0)) throw invalid_argument("learning_rate must be > 0");
}

std::string SiameseConfig::to_json() const { return config_json(*this, false).dump(); }

SiameseConfig SiameseConfig::from_json(std::string_view text) {
  SiameseConfig c;
  try {
    json j = json::parse(text);
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
    c.dense1_units = j.at("dense1_units").get<std::size_t>();
    c.dense2_units = j.at("dense2_units").get<std::size_t>();
    c.use_attention = j.at("use_attention").get<bool>();
    c.attention_units = j.at("attention_units").get<std::size_t>();
    c.max_tokens = j.at("max_tokens").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.threshold = j.at("threshold").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.trainable_embeddings = j.at("trainable_embeddings").get<bool>();
    c.loss = parse_loss(j.at("loss").get<std::string>());
    c.adam_beta1 = j.at("adam_beta1").get<double>();
    c.adam_beta2 = j.at("adam_beta2").get<double>();
    c.adam_epsilon = j.at("adam_epsilon").get<double>();
    c.tokenizer = j.at("tokenizer").get<std::string>();
    c.threads = j.value("threads", std::size_t{1});
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("siamese config: ") + e.what());
  }
  return c;
}

std::string SiameseConfig::hash() const { return sha256_hex(config_json(*this, true).dump()); }

void SiameseModel::init_layout() {
  const std::size_t d = config_.embed_dim, h = config_.lstm_hidden;
  const std::size_t vocab = vocab_.size() + 1;
  layout_.clear();
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    layout_.push_back({std::move(name), offset, rows, cols});
    offset += rows * cols;
  };
  add("embedding", d, vocab);
  add("lstm_fwd.W", 4 * h, d);
  add("lstm_fwd.U", 4 * h, h);
  add("lstm_fwd.b", 4 * h, 1);
  add("lstm_bwd.W", 4 * h, d);
  add("lstm_bwd.U", 4 * h, h);
  add("lstm_bwd.b", 4 * h, 1);
  add("dense1.W", config_.dense1_units, 2 * h);
  add("dense1.b", config_.dense1_units, 1);
  add("dense2.W", config_.dense2_units, config_.dense1_units);
  add("dense2.b", config_.dense2_units, 1);
  if (config_.use_attention) {
    add("attention.W", config_.attention_units, 2 * h);
    add("attention.b", config_.attention_units, 1);
    add("attention.v", config_.attention_units, 1);
  }
  params_.assign(offset, 0.0);
}

SiameseModel SiameseModel::build(const SiameseConfig& config, const EmbeddingTable& table,
                                  std::shared_ptr<const Tokenizer> tokenizer) {
  config.validate();
  if (!tokenizer) throw invalid_argument("siamese model needs a tokenizer");
  if (config.embed_dim != 0 && config.embed_dim != table.dim())
    throw invalid_argument("embedding table has dimension " + std::to_string(table.dim()) +
                           " but the model expects " + std::to_string(config.embed_dim));
  if (table.dim() == 0) throw invalid_argument("embedding table has dimension 0");
  SiameseModel m;
  m.config_ = config;
  m.config_.embed_dim = table.dim();
  m.tokenizer_ = std::move(tokenizer);
  m.table_hash_ = uva::table_hash(table);
  m.vocab_ = table.tokens();
  for (std::size_t i = 0; i < m.vocab_.size(); ++i) m.token_ids_.emplace(m.vocab_[i], static_cast<std::int32_t>(i + 1));
  m.init_layout();

  auto block = [&m](std::size_t i) {
    const auto& b = m.layout_[i];
    return MMap(m.params_.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols));
  };
  MMap emb = block(kEmbedding);
  for (std::size_t d = 0; d < table.dim(); ++d) emb(static_cast<Eigen::Index>(d), 0) = table.oov()[d];
  for (std::size_t i = 0; i < table.size(); ++i) {
    auto row = table.row(i);
    for (std::size_t d = 0; d < table.dim(); ++d)
      emb(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i + 1)) = row[d];
  }

  Rng rng(derive_seed(config.seed, "siamese-init"));
  const auto h = static_cast<Eigen::Index>(config.lstm_hidden);
  for (std::size_t dir : {std::size_t{kFwdW}, std::size_t{kBwdW}}) {
    glorot(block(dir), rng);
    orthogonal(block(dir + 1), rng);
    block(dir + 2).col(0).segment(h, h).setOnes();  // forget-gate bias
  }
  glorot(block(kDense1W), rng);
  glorot(block(kDense2W), rng);
  if (config.use_attention) {
    glorot(block(kAttW), rng);
    glorot(block(kAttV), rng);
  }
  return m;
}

const ParamBlock& SiameseModel::block(std::string_view name) const {
  for (const auto& b : layout_)
    if (b.name == name) return b;
  throw invalid_argument("no parameter block '" + std::string(name) + "'");
}

std::vector<std::int32_t> SiameseModel::encode_tokens(std::span<const std::string> tokens) const {
  std::vector<std::int32_t> ids;
  const std::size_t n = std::min(tokens.size(), config_.max_tokens);
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = token_ids_.find(tokens[i]);
    ids.push_back(it == token_ids_.end() ? 0 : it->second);
  }
  return ids;
}

std::vector<std::int32_t> SiameseModel::encode_text(std::string_view text) const {
  return encode_tokens(tokenizer_->tokenize(text));
}

std::vector<double> SiameseModel::tower(std::span<const std::int32_t> ids) const {
  Network net{config_, {params_.data(), &layout_}};
  TowerCache tc;
  net.forward(ids, tc);
  return {tc.out.data(), tc.out.data() + tc.out.size()};
}

double SiameseModel::similarity(std::span<const std::int32_t> a, std::span<const std::int32_t> b) const {
  auto ta = tower(a);
  auto tb = tower(b);
  double d = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) d += std::abs(ta[i] - tb[i]);
  return std::exp(-d);
}

double SiameseModel::similarity_text(std::string_view a, std::string_view b) const {
  return similarity(encode_text(a), encode_text(b));
}

std::string SiameseModel::weights_checksum() const {
  return sha256_hex(std::as_bytes(std::span<const double>(params_)));
}

double SiameseModel::loss_and_gradient(const PairDataset& data, std::span<const PairDataset::Item> items,
                                       std::vector<double>* grad) const {
  if (items.empty()) throw invalid_argument("loss over an empty batch");
  Network net{config_, {params_.data(), &layout_}};

  // Each distinct sequence is encoded once per batch.
  std::vector<std::uint32_t> seqs;
  std::unordered_map<std::uint32_t, std::size_t> slot;
  for (const auto& it : items)
    for (std::uint32_t s : {it.a, it.b})
      if (slot.emplace(s, seqs.size()).second) seqs.push_back(s);

  std::vector<TowerCache> caches(seqs.size());
  const std::size_t slices = std::min(kGradSlices, seqs.size());
  auto slice_range = [&](std::size_t s) {
    return std::pair{s * seqs.size() / slices, (s + 1) * seqs.size() / slices};
  };
  run_sliced(slices, config_.threads, [&](std::size_t s) {
    auto [lo, hi] = slice_range(s);
    for (std::size_t k = lo; k < hi; ++k) net.forward(data.sequences.at(seqs[k]), caches[k]);
  });

  const double inv_n = 1.0 / static_cast<double>(items.size());
  std::vector<Vec> dout(seqs.size(), Vec::Zero(static_cast<Eigen::Index>(config_.dense2_units)));
  double total = 0.0;
  for (const auto& it : items) {
    const std::size_t sa = slot[it.a], sb = slot[it.b];
    Vec diff = caches[sa].out - caches[sb].out;
    const double dist = diff.cwiseAbs().sum();
    const double s = std::exp(-dist);
    auto [loss, dloss_ds] = pair_loss(config_.loss, s, it.label);
    total += loss;
    if (grad) {
      const double dl_dd = -s * dloss_ds * inv_n;
      Vec sign = diff.unaryExpr([](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); });
      dout[sa] += dl_dd * sign;
      dout[sb] -= dl_dd * sign;
    }
  }

  if (grad) {
    std::vector<std::vector<double>> partial(slices, std::vector<double>(params_.size(), 0.0));
    run_sliced(slices, config_.threads, [&](std::size_t s) {
      NetView<double*> g{partial[s].data(), &layout_};
      auto [lo, hi] = slice_range(s);
      for (std::size_t k = lo; k < hi; ++k) net.backward(data.sequences[seqs[k]], caches[k], dout[k], g);
    });
    grad->assign(params_.size(), 0.0);
    for (const auto& part : partial)
      for (std::size_t i = 0; i < part.size(); ++i) (*grad)[i] += part[i];
  }
  return total * inv_n;
}

PairDataset SiameseModel::make_dataset(const AtomStore& store, const std::vector<LabeledPair>& pairs) const {
  PairDataset ds;
  std::unordered_map<std::string, std::uint32_t> slot;
  auto seq_for = [&](const std::string& aui) {
    auto [it, inserted] = slot.emplace(aui, static_cast<std::uint32_t>(ds.sequences.size()));
    if (inserted) ds.sequences.push_back(encode_text(store.at(aui).str));
    return it->second;
  };
  ds.items.reserve(pairs.size());
  for (const auto& p : pairs) ds.items.push_back({seq_for(p.a), seq_for(p.b), p.label});
  return ds;
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kCheckpointFormat = "uvakit.siamese";

}  // namespace

void SiameseModel::save(const std::string& path) const {
  json tensors = json::array();
  for (const auto& b : layout_) {
    tensors.push_back({{"name", b.name},
                       {"rows", b.rows},
                       {"cols", b.cols},
                       {"data", std::vector<double>(params_.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                                    params_.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size()))}});
  }
  json doc = {{"format", kCheckpointFormat},
              {"version", 1},
              {"config", config_json(config_, false)},
              {"config_hash", config_.hash()},
              {"tokenizer_id", tokenizer_->id()},
              {"embedding_table_hash", table_hash_},
              {"weights_checksum", weights_checksum()},
              {"vocab", vocab_},
              {"tensors", tensors},
              {"train_state",
               {{"epochs_done", state_.epochs_done},
                {"adam_step", state_.adam_step},
                {"adam_m", state_.adam_m},
                {"adam_v", state_.adam_v},
                {"epoch_loss", state_.epoch_loss},
                {"epoch_valid", json::parse(rows_to_json(state_.epoch_valid))["rows"]}}}};
  write_file(path, doc.dump() + "\n");
}

SiameseModel SiameseModel::load(const std::string& path, const SiameseConfig* expected,
                                std::shared_ptr<const Tokenizer> tokenizer) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ParseError(0, "checkpoint " + path + " is not valid JSON: " + e.what());
  }
  if (doc.value("format", std::string()) != kCheckpointFormat)
    throw ParseError(0, "checkpoint " + path + " has an unknown format");
  SiameseModel m;
  m.config_ = SiameseConfig::from_json(doc.at("config").dump());
  const std::string stored_hash = doc.at("config_hash").get<std::string>();
  if (m.config_.hash() != stored_hash)
    throw Error(ErrorKind::HashMismatch, "checkpoint " + path + ": config does not match its recorded hash");
  if (expected) {
    // An unset embed_dim means "whatever the table has", which build() resolved.
    SiameseConfig want = *expected;
    if (want.embed_dim == 0) want.embed_dim = m.config_.embed_dim;
    if (want.hash() != stored_hash)
      throw Error(ErrorKind::HashMismatch, "checkpoint " + path + " was built with a different configuration (hash " +
                                               stored_hash.substr(0, 12) + ", expected " +
                                               want.hash().substr(0, 12) + ")");
  }
  m.tokenizer_ = tokenizer ? std::move(tokenizer) : std::shared_ptr<const Tokenizer>(make_tokenizer(m.config_.tokenizer));
  if (m.tokenizer_->id() != doc.at("tokenizer_id").get<std::string>())
    throw Error(ErrorKind::HashMismatch, "checkpoint " + path + ": tokenizer '" + m.tokenizer_->id() +
                                             "' differs from the recorded '" + doc.at("tokenizer_id").get<std::string>() + "'");
  m.table_hash_ = doc.at("embedding_table_hash").get<std::string>();
  m.vocab_ = doc.at("vocab").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < m.vocab_.size(); ++i) m.token_ids_.emplace(m.vocab_[i], static_cast<std::int32_t>(i + 1));
  m.init_layout();
  const json& tensors = doc.at("tensors");
  if (tensors.size() != m.layout_.size()) throw ParseError(0, "checkpoint " + path + ": tensor count mismatch");
  for (std::size_t i = 0; i < m.layout_.size(); ++i) {
    const auto& b = m.layout_[i];
    const json& t = tensors[i];
    if (t.at("name").get<std::string>() != b.name || t.at("rows").get<std::size_t>() != b.rows ||
        t.at("cols").get<std::size_t>() != b.cols)
      throw ParseError(0, "checkpoint " + path + ": tensor " + b.name + " has an unexpected shape");
    auto data = t.at("data").get<std::vector<double>>();
    if (data.size() != b.size()) throw ParseError(0, "checkpoint " + path + ": tensor " + b.name + " is truncated");
    std::copy(data.begin(), data.end(), m.params_.begin() + static_cast<std::ptrdiff_t>(b.offset));
  }
  if (doc.contains("weights_checksum") && doc["weights_checksum"].get<std::string>() != m.weights_checksum())
    throw Error(ErrorKind::HashMismatch, "checkpoint " + path + ": weights do not match their checksum");
  const json& st = doc.at("train_state");
  m.state_.epochs_done = st.at("epochs_done").get<std::size_t>();
  m.state_.adam_step = st.at("adam_step").get<std::uint64_t>();
  m.state_.adam_m = st.at("adam_m").get<std::vector<double>>();
  m.state_.adam_v = st.at("adam_v").get<std::vector<double>>();
  m.state_.epoch_loss = st.at("epoch_loss").get<std::vector<double>>();
  m.state_.epoch_valid = rows_from_json(json{{"rows", st.at("epoch_valid")}}.dump());
  return m;
}

// ---------------------------------------------------------------------------

TrainReport train(SiameseModel& model, const PairDataset& train_set, const PairDataset* valid_set,
                  const TrainOptions& options) {
  const SiameseConfig& cfg = model.config();
  cfg.validate();
  bool has_pos = false, has_neg = false;
  for (const auto& it : train_set.items) (it.label ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg)
    throw validation_error("training set must contain both synonymous and non-synonymous pairs");

  const auto start = std::chrono::steady_clock::now();
  TrainState& st = model.train_state();
  const std::size_t n_params = model.parameter_count();
  if (st.adam_m.empty()) {
    st.adam_m.assign(n_params, 0.0);
    st.adam_v.assign(n_params, 0.0);
  }
  if (st.adam_m.size() != n_params || st.adam_v.size() != n_params)
    throw validation_error("optimizer state does not match the model size");

  const ParamBlock& emb = model.block("embedding");
  const std::size_t update_from = cfg.trainable_embeddings ? 0 : emb.offset + emb.size();
  std::span<double> params = model.parameters();
  std::vector<double> grad;
  const std::size_t n = train_set.items.size();

  for (std::size_t epoch = st.epochs_done; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(cfg.seed, "shuffle:" + std::to_string(epoch)));
    rng.shuffle(order);

    double loss_sum = 0.0;
    std::vector<PairDataset::Item> batch;
    for (std::size_t begin = 0, b = 0; begin < n; begin += cfg.batch_size, ++b) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(train_set.items[order[i]]);
      const double loss = model.loss_and_gradient(train_set, batch, &grad);
      if (!std::isfinite(loss)) {
        double norm = 0.0;
        for (double p : params) norm += p * p;
        throw runtime_error("non-finite training loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(b + 1) + " (learning rate " + format_double(cfg.learning_rate) +
                            ", parameter norm " + format_double(std::sqrt(norm)) + ")");
      }
      loss_sum += loss * static_cast<double>(end - begin);

      ++st.adam_step;
      const double t = static_cast<double>(st.adam_step);
      const double bias1 = 1.0 - std::pow(cfg.adam_beta1, t);
      const double bias2 = 1.0 - std::pow(cfg.adam_beta2, t);
      for (std::size_t i = update_from; i < n_params; ++i) {
        const double g = grad[i];
        st.adam_m[i] = cfg.adam_beta1 * st.adam_m[i] + (1.0 - cfg.adam_beta1) * g;
        st.adam_v[i] = cfg.adam_beta2 * st.adam_v[i] + (1.0 - cfg.adam_beta2) * g * g;
        const double mhat = st.adam_m[i] / bias1;
        const double vhat = st.adam_v[i] / bias2;
        params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
      }
    }
    const double epoch_loss = loss_sum / static_cast<double>(n);
    st.epoch_loss.push_back(epoch_loss);
    if (valid_set && !valid_set->items.empty()) {
      auto pred = predict(model, *valid_set, cfg.threshold);
      st.epoch_valid.push_back(make_row("siamese", "epoch " + std::to_string(epoch + 1), cfg.threshold,
                                        confusion(pred.scores, pred.labels, cfg.threshold)));
    }
    st.epochs_done = epoch + 1;
    if (options.on_epoch) options.on_epoch(epoch, epoch_loss);
    if (!options.checkpoint_path.empty()) model.save(options.checkpoint_path);
  }

  TrainReport report;
  report.epoch_loss = st.epoch_loss;
  report.epoch_valid = st.epoch_valid;
  report.epochs_run = st.epochs_done;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.weights_checksum = model.weights_checksum();
  return report;
}

Predictions predict(const SiameseModel& model, const PairDataset& data, double threshold) {
  // Towers are computed once per distinct sequence.
  std::vector<std::vector<double>> towers(data.sequences.size());
  std::vector<char> needed(data.sequences.size(), 0);
  for (const auto& it : data.items) needed[it.a] = needed[it.b] = 1;
  const std::size_t threads = std::max<std::size_t>(1, model.config().threads);
  run_sliced(threads, threads, [&](std::size_t s) {
    for (std::size_t k = s; k < towers.size(); k += threads)
      if (needed[k]) towers[k] = model.tower(data.sequences[k]);
  });
  Predictions p;
  p.scores.reserve(data.items.size());
  for (const auto& it : data.items) {
    double d = 0.0;
    const auto& ta = towers[it.a];
    const auto& tb = towers[it.b];
    for (std::size_t i = 0; i < ta.size(); ++i) d += std::abs(ta[i] - tb[i]);
    const double s = std::exp(-d);
    p.scores.push_back(s);
    p.labels.push_back(it.label);
    p.predicted.push_back(s >= threshold ? 1 : 0);
  }
  return p;
}

}  // namespace uva
