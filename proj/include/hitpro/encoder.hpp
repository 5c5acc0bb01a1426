#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hitpro/common.hpp"
#include "hitpro/config.hpp"
#include "hitpro/datamodel.hpp"

namespace hitpro {

// Dimensions of the temporal encoder.
struct EncoderShape {
  int d_in = 0;
  int d = 0;
  int d_ff = 0;
  int d_h = 0;
  int n_layers = 0;
  int seq_len = 0;
  bool normalize_output = true;

  bool operator==(const EncoderShape&) const = default;

  static EncoderShape from(const TrainConfig& cfg, int d_in) {
    return {d_in, cfg.d, cfg.d_ff, cfg.hidden(), cfg.n_tte_layers, cfg.seq_len, cfg.normalize_embedding};
  }
};

// One post-norm transformer layer: single-head self-attention and a ReLU FFN,
// each wrapped in a residual connection followed by layer norm.
struct TransformerLayerParams {
  Mat wq, wk, wv, wo;   // d x d
  Mat w_ff1;            // d x d_ff
  Mat w_ff2;            // d_ff x d
  Mat ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // 1 x d
};

struct EncoderParams {
  EncoderShape shape;
  Mat proj;  // d_in x d
  Mat pos;   // seq_len x d, learned additive position vectors
  std::vector<TransformerLayerParams> layers;
  Mat afm_w1;  // d x d_h
  Mat afm_b1;  // 1 x d_h
  Mat afm_w2;  // d_h x 1

  // Visits every trainable tensor with a stable name, in a fixed order.
  template <typename Self, typename F>
  static void visit(Self& self, F&& fn) {
    fn("proj", self.proj);
    fn("pos", self.pos);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      auto& L = self.layers[l];
      const std::string p = "tte" + std::to_string(l) + ".";
      fn(p + "wq", L.wq);
      fn(p + "wk", L.wk);
      fn(p + "wv", L.wv);
      fn(p + "wo", L.wo);
      fn(p + "w_ff1", L.w_ff1);
      fn(p + "w_ff2", L.w_ff2);
      fn(p + "ln1_gain", L.ln1_gain);
      fn(p + "ln1_bias", L.ln1_bias);
      fn(p + "ln2_gain", L.ln2_gain);
      fn(p + "ln2_bias", L.ln2_bias);
    }
    fn("afm_w1", self.afm_w1);
    fn("afm_b1", self.afm_b1);
    fn("afm_w2", self.afm_w2);
  }

  template <typename F>
  void for_each(F&& fn) {
    visit(*this, std::forward<F>(fn));
  }
  template <typename F>
  void for_each(F&& fn) const {
    visit(*this, std::forward<F>(fn));
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Mat& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  // Same shapes, all zeros.
  EncoderParams zeros_like() const {
    EncoderParams z = *this;
    z.for_each([](const std::string&, Mat& m) { m.setZero(); });
    return z;
  }

  void add_scaled(const EncoderParams& other, double s) {
    std::vector<const Mat*> src;
    other.for_each([&](const std::string&, const Mat& m) { src.push_back(&m); });
    std::size_t i = 0;
    for_each([&](const std::string&, Mat& m) { m += s * *src.at(i++); });
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const std::string&, const Mat& m) { ok = ok && m.allFinite(); });
    return ok;
  }

  bool same_shapes(const EncoderParams& other) const {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> dims;
    for_each([&](const std::string&, const Mat& m) { dims.emplace_back(m.rows(), m.cols()); });
    std::size_t i = 0;
    bool ok = true;
    other.for_each([&](const std::string&, const Mat& m) {
      ok = ok && i < dims.size() && dims[i] == std::make_pair(m.rows(), m.cols());
      ++i;
    });
    return ok && i == dims.size();
  }

  bool operator==(const EncoderParams& other) const {
    if (!(shape == other.shape) || !same_shapes(other)) return false;
    std::vector<const Mat*> rhs;
    other.for_each([&](const std::string&, const Mat& m) { rhs.push_back(&m); });
    std::size_t i = 0;
    bool eq = true;
    for_each([&](const std::string&, const Mat& m) { eq = eq && (m.array() == rhs[i++]->array()).all(); });
    return eq;
  }
};

// Closed-form parameter count for a given shape.
inline std::size_t expected_parameter_count(const EncoderShape& s) {
  const std::size_t d = s.d, ff = s.d_ff, h = s.d_h;
  const std::size_t per_layer = 4 * d * d + 2 * d * ff + 4 * d;
  return s.d_in * d + s.seq_len * d + s.n_layers * per_layer + d * h + h + h;
}

inline EncoderParams encoder_init(const EncoderShape& shape, std::uint64_t seed) {
  if (shape.d_in < 1 || shape.d < 1 || shape.d_ff < 1 || shape.d_h < 1 || shape.seq_len < 1)
    throw ConfigError("encoder dimensions must be >= 1");
  if (shape.n_layers < 0 || shape.n_layers > 2) throw ConfigError("n_tte_layers must be in {0,1,2}");

  std::mt19937_64 rng(mix_seed(seed, 0xE7C0DE));
  auto uniform = [&](int rows, int cols) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    round_to_float(m);
    return m;
  };

  EncoderParams p;
  p.shape = shape;
  const int d = shape.d;
  p.proj = uniform(shape.d_in, d);
  p.pos = Mat::Zero(shape.seq_len, d);
  for (int l = 0; l < shape.n_layers; ++l) {
    TransformerLayerParams L;
    L.wq = uniform(d, d);
    L.wk = uniform(d, d);
    L.wv = uniform(d, d);
    L.wo = uniform(d, d);
    L.w_ff1 = uniform(d, shape.d_ff);
    L.w_ff2 = uniform(shape.d_ff, d);
    L.ln1_gain = Mat::Ones(1, d);
    L.ln1_bias = Mat::Zero(1, d);
    L.ln2_gain = Mat::Ones(1, d);
    L.ln2_bias = Mat::Zero(1, d);
    p.layers.push_back(std::move(L));
  }
  p.afm_w1 = uniform(d, shape.d_h);
  p.afm_b1 = Mat::Zero(1, shape.d_h);
  p.afm_w2 = uniform(shape.d_h, 1);
  return p;
}

// Frame indices fed to the encoder for a sub-tracklet of `length` frames:
// evenly spaced when long enough, cyclic repetition otherwise.
inline std::vector<int> select_frames(int length, int seq_len) {
  std::vector<int> idx(static_cast<std::size_t>(seq_len));
  if (length >= seq_len) {
    for (int j = 0; j < seq_len; ++j)
      idx[j] = seq_len == 1 ? 0
                            : static_cast<int>(std::lround(static_cast<double>(j) * (length - 1) /
                                                           static_cast<double>(seq_len - 1)));
  } else {
    for (int j = 0; j < seq_len; ++j) idx[j] = j % length;
  }
  return idx;
}

// Encoder input for one sub-tracklet (seq_len x D_in, promoted to double).
inline Mat gather_frames(const Tracklet& t, const SubTracklet& sub, int seq_len) {
  const auto idx = select_frames(sub.size(), seq_len);
  Mat x(seq_len, t.frames.cols());
  for (int j = 0; j < seq_len; ++j) x.row(j) = t.frames.row(sub.start + idx[j]).cast<double>();
  return x;
}

namespace detail {

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
  Mat xhat;
  Vec inv_std;
};

inline Mat layer_norm(const Mat& x, const Mat& gain, const Mat& bias, LayerNormCache& c) {
  const double n = static_cast<double>(x.cols());
  c.xhat.resize(x.rows(), x.cols());
  c.inv_std.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const Eigen::RowVectorXd centered = x.row(r).array() - mu;
    const double var = centered.squaredNorm() / n;
    c.inv_std(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    c.xhat.row(r) = centered * c.inv_std(r);
  }
  Mat y = c.xhat;
  for (Eigen::Index r = 0; r < y.rows(); ++r)
    y.row(r) = y.row(r).cwiseProduct(gain.row(0)) + bias.row(0);
  return y;
}

inline Mat layer_norm_backward(const Mat& gy, const Mat& gain, const LayerNormCache& c, Mat& g_gain, Mat& g_bias) {
  const double n = static_cast<double>(gy.cols());
  g_gain.row(0) += gy.cwiseProduct(c.xhat).colwise().sum();
  g_bias.row(0) += gy.colwise().sum();
  Mat gx(gy.rows(), gy.cols());
  for (Eigen::Index r = 0; r < gy.rows(); ++r) {
    const Eigen::RowVectorXd gxhat = gy.row(r).cwiseProduct(gain.row(0));
    const double mean_g = gxhat.sum() / n;
    const double mean_gx = gxhat.dot(c.xhat.row(r)) / n;
    gx.row(r) = c.inv_std(r) * (gxhat.array() - mean_g - c.xhat.row(r).array() * mean_gx).matrix();
  }
  return gx;
}

// Row-wise softmax with max subtraction.
inline Mat softmax_rows(const Mat& s) {
  Mat out(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double mx = s.row(r).maxCoeff();
    out.row(r) = (s.row(r).array() - mx).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

inline Mat relu(const Mat& m) { return m.cwiseMax(0.0); }

inline Mat relu_mask(const Mat& pre, const Mat& g) { return (pre.array() > 0.0).select(g, 0.0); }

inline void check_finite(const Mat& m, const std::string& stage) {
  if (!m.allFinite()) throw NumericError("non-finite activation in encoder stage '" + stage + "'");
}

}  // namespace detail

struct TransformerLayerCache {
  Mat h_in, q, k, v, attn, z, u, ff_pre, ff_act;
  detail::LayerNormCache ln1, ln2;
};

struct ForwardCache {
  Mat x;   // seq_len x d_in
  std::vector<TransformerLayerCache> layers;
  Mat fe;       // seq_len x d, per-frame features entering the pooling head
  Mat afm_pre;  // seq_len x d_h
  Vec scores;   // a_t
  Vec alpha;    // softmax(a)
  Vec pooled;   // f = sum_t alpha_t fe_t
  double norm = 0.0;
};

struct Encoding {
  Vec embedding;
  ForwardCache cache;
};

inline Encoding encode(const EncoderParams& p, const Mat& frames) {
  const auto& s = p.shape;
  if (frames.rows() != s.seq_len || frames.cols() != s.d_in)
    throw ConfigError("encode: input is " + std::to_string(frames.rows()) + "x" + std::to_string(frames.cols()) +
                      ", expected " + std::to_string(s.seq_len) + "x" + std::to_string(s.d_in));
  Encoding out;
  ForwardCache& c = out.cache;
  c.x = frames;

  Mat h = frames * p.proj + p.pos;
  detail::check_finite(h, "projection");

  const double scale = 1.0 / std::sqrt(static_cast<double>(s.d));
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& L = p.layers[l];
    TransformerLayerCache lc;
    lc.h_in = h;
    lc.q = h * L.wq;
    lc.k = h * L.wk;
    lc.v = h * L.wv;
    lc.attn = detail::softmax_rows(scale * lc.q * lc.k.transpose());
    lc.z = lc.attn * lc.v;
    const Mat r1 = h + lc.z * L.wo;
    lc.u = detail::layer_norm(r1, L.ln1_gain, L.ln1_bias, lc.ln1);
    detail::check_finite(lc.u, "attention (layer " + std::to_string(l) + ")");
    lc.ff_pre = lc.u * L.w_ff1;
    lc.ff_act = detail::relu(lc.ff_pre);
    const Mat r2 = lc.u + lc.ff_act * L.w_ff2;
    h = detail::layer_norm(r2, L.ln2_gain, L.ln2_bias, lc.ln2);
    detail::check_finite(h, "feed-forward (layer " + std::to_string(l) + ")");
    c.layers.push_back(std::move(lc));
  }
  c.fe = h;

  c.afm_pre = c.fe * p.afm_w1;
  c.afm_pre.rowwise() += p.afm_b1.row(0);
  c.scores = detail::relu(c.afm_pre) * p.afm_w2.col(0);
  const double mx = c.scores.maxCoeff();
  c.alpha = (c.scores.array() - mx).exp().matrix();
  c.alpha /= c.alpha.sum();
  c.pooled = c.fe.transpose() * c.alpha;
  detail::check_finite(c.pooled, "frame weighting");

  c.norm = c.pooled.norm();
  if (s.normalize_output) {
    if (!(c.norm > 0.0) || !std::isfinite(c.norm)) throw NumericError("encoder stage 'normalize': zero-norm embedding");
    out.embedding = c.pooled / c.norm;
  } else {
    out.embedding = c.pooled;
  }
  return out;
}

// Gradient of g . embedding with respect to every parameter.
inline EncoderParams encode_backward(const EncoderParams& p, const ForwardCache& c, const Vec& grad_embedding) {
  const auto& s = p.shape;
  if (c.x.rows() != s.seq_len || c.x.cols() != s.d_in || c.layers.size() != p.layers.size() ||
      c.fe.cols() != s.d || c.afm_pre.cols() != s.d_h)
    throw ConfigError("encode_backward: cache does not match parameters");
  if (grad_embedding.size() != s.d) throw ConfigError("encode_backward: gradient has wrong dimension");

  EncoderParams g = p.zeros_like();

  Vec g_pooled = grad_embedding;
  if (s.normalize_output) {
    const Vec e = c.pooled / c.norm;
    g_pooled = (grad_embedding - e * e.dot(grad_embedding)) / c.norm;
  }

  // f = fe^T alpha
  Mat g_fe = c.alpha * g_pooled.transpose();
  const Vec g_alpha = c.fe * g_pooled;
  const Vec g_scores = c.alpha.cwiseProduct((g_alpha.array() - c.alpha.dot(g_alpha)).matrix());

  // a = relu(fe W1 + b1) w2
  const Mat act = detail::relu(c.afm_pre);
  g.afm_w2.col(0) = act.transpose() * g_scores;
  const Mat g_pre = detail::relu_mask(c.afm_pre, g_scores * p.afm_w2.col(0).transpose());
  g.afm_w1 = c.fe.transpose() * g_pre;
  g.afm_b1.row(0) = g_pre.colwise().sum();
  g_fe += g_pre * p.afm_w1.transpose();

  const double scale = 1.0 / std::sqrt(static_cast<double>(s.d));
  Mat g_h = g_fe;
  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const auto& L = p.layers[li];
    const auto& lc = c.layers[li];
    auto& G = g.layers[li];

    Mat g_r2 = detail::layer_norm_backward(g_h, L.ln2_gain, lc.ln2, G.ln2_gain, G.ln2_bias);
    G.w_ff2 = lc.ff_act.transpose() * g_r2;
    const Mat g_ff_pre = detail::relu_mask(lc.ff_pre, g_r2 * L.w_ff2.transpose());
    G.w_ff1 = lc.u.transpose() * g_ff_pre;
    Mat g_u = g_r2 + g_ff_pre * L.w_ff1.transpose();

    Mat g_r1 = detail::layer_norm_backward(g_u, L.ln1_gain, lc.ln1, G.ln1_gain, G.ln1_bias);
    G.wo = lc.z.transpose() * g_r1;
    const Mat g_z = g_r1 * L.wo.transpose();
    const Mat g_attn = g_z * lc.v.transpose();
    const Mat g_v = lc.attn.transpose() * g_z;
    Mat g_logits(g_attn.rows(), g_attn.cols());
    for (Eigen::Index r = 0; r < g_attn.rows(); ++r) {
      const double dot = g_attn.row(r).dot(lc.attn.row(r));
      g_logits.row(r) = lc.attn.row(r).cwiseProduct((g_attn.row(r).array() - dot).matrix());
    }
    g_logits *= scale;
    const Mat g_q = g_logits * lc.k;
    const Mat g_k = g_logits.transpose() * lc.q;
    G.wq = lc.h_in.transpose() * g_q;
    G.wk = lc.h_in.transpose() * g_k;
    G.wv = lc.h_in.transpose() * g_v;
    g_h = g_r1 + g_q * L.wq.transpose() + g_k * L.wk.transpose() + g_v * L.wv.transpose();
  }

  g.proj = c.x.transpose() * g_h;
  g.pos = g_h;
  return g;
}

}  // namespace hitpro
