#pragma once

// Small bidirectional transformer with two output heads and a hand-written
// backward pass. Scalar is float for training and double for gradient checks.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "editdiff/numeric.hpp"

namespace editdiff::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct NetConfig {
  int vocab_size = 0;      // data + INS + DEL + EOS
  int out_classes = 0;     // data classes + insertion class
  int count_buckets = 17;  // g head width
  int max_len = 64;        // longest x_t; one extra position holds EOS
  int steps = 1;           // timesteps 1..T
  int width = 64;
  int heads = 4;
  int blocks = 2;
  int ffn_mult = 4;

  bool operator==(const NetConfig&) const = default;
};

template <typename S>
struct Block {
  Mat<S> g1, wq, wk, wv, wo, g2, w1, b1, w2, b2;
};

template <typename S>
struct Params {
  NetConfig cfg;
  Mat<S> tok_emb, pos_emb, time_emb;
  std::vector<Block<S>> blocks;
  Mat<S> g_final, f_bias, wg, bg;

  Params() = default;
  explicit Params(const NetConfig& c) : cfg(c) {
    const int d = c.width, F = c.width * c.ffn_mult;
    tok_emb = Mat<S>::Zero(c.vocab_size, d);
    pos_emb = Mat<S>::Zero(c.max_len + 1, d);
    time_emb = Mat<S>::Zero(c.steps + 1, d);
    blocks.resize(static_cast<std::size_t>(c.blocks));
    for (auto& b : blocks) {
      b.g1 = Mat<S>::Ones(1, d);
      b.wq = b.wk = b.wv = b.wo = Mat<S>::Zero(d, d);
      b.g2 = Mat<S>::Ones(1, d);
      b.w1 = Mat<S>::Zero(d, F);
      b.b1 = Mat<S>::Zero(1, F);
      b.w2 = Mat<S>::Zero(F, d);
      b.b2 = Mat<S>::Zero(1, d);
    }
    g_final = Mat<S>::Ones(1, d);
    f_bias = Mat<S>::Zero(1, c.out_classes);
    wg = Mat<S>::Zero(d, c.count_buckets);
    bg = Mat<S>::Zero(1, c.count_buckets);
  }

  /// Visits every tensor with a stable name, in a fixed order.
  template <typename F>
  void visit(F&& f) {
    f("tok_emb", tok_emb);
    f("pos_emb", pos_emb);
    f("time_emb", time_emb);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string p = "block" + std::to_string(i) + ".";
      auto& b = blocks[i];
      f(p + "g1", b.g1);
      f(p + "wq", b.wq);
      f(p + "wk", b.wk);
      f(p + "wv", b.wv);
      f(p + "wo", b.wo);
      f(p + "g2", b.g2);
      f(p + "w1", b.w1);
      f(p + "b1", b.b1);
      f(p + "w2", b.w2);
      f(p + "b2", b.b2);
    }
    f("g_final", g_final);
    f("f_bias", f_bias);
    f("wg", wg);
    f("bg", bg);
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<Params*>(this)->visit([&](const std::string& n, Mat<S>& m) { f(n, static_cast<const Mat<S>&>(m)); });
  }

  void set_zero() {
    visit([](const std::string&, Mat<S>& m) { m.setZero(); });
  }

  std::size_t size() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Mat<S>& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  template <typename T>
  Params<T> cast() const {
    Params<T> out(cfg);
    std::vector<const Mat<S>*> src;
    visit([&](const std::string&, const Mat<S>& m) { src.push_back(&m); });
    std::size_t i = 0;
    out.visit([&](const std::string&, Mat<T>& m) { m = src[i++]->template cast<T>(); });
    return out;
  }
};

/// All-zero tensors shaped for `c`; use for gradient accumulators.
template <typename S>
Params<S> zeros(const NetConfig& c) {
  Params<S> p(c);
  p.set_zero();
  return p;
}

inline double normal01(Rng& rng) {
  const double u1 = uniform_open01(rng), u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

template <typename S>
Params<S> init_params(const NetConfig& c, Rng& rng) {
  Params<S> p(c);
  const double std_in = 0.02;
  const double std_out = 0.02 / std::sqrt(2.0 * c.blocks);
  auto fill = [&](Mat<S>& m, double sd) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(sd * normal01(rng));
  };
  fill(p.tok_emb, std_in);
  fill(p.pos_emb, std_in);
  fill(p.time_emb, std_in);
  for (auto& b : p.blocks) {
    fill(b.wq, std_in);
    fill(b.wk, std_in);
    fill(b.wv, std_in);
    fill(b.wo, std_out);
    fill(b.w1, std_in);
    fill(b.w2, std_out);
  }
  fill(p.wg, std_in);
  return p;
}

template <typename S>
struct BlockCache {
  Mat<S> x_in, a, q, k, v, ctx, x_mid, b, u, gu;
  std::vector<S> inv1, inv2;
  std::vector<Mat<S>> probs;  // one L x L matrix per head
};

template <typename S>
struct Cache {
  std::vector<int> tokens;
  int t = 0;
  std::vector<BlockCache<S>> blocks;
  Mat<S> x_last, hf;
  std::vector<S> inv_f;
};

inline constexpr double rms_eps = 1e-6;

namespace detail {

template <typename S>
void rms_forward(const Mat<S>& x, const Mat<S>& g, Mat<S>& y, std::vector<S>& inv) {
  const auto L = x.rows(), d = x.cols();
  y.resize(L, d);
  inv.resize(static_cast<std::size_t>(L));
  for (Eigen::Index i = 0; i < L; ++i) {
    const S ms = x.row(i).squaredNorm() / static_cast<S>(d);
    const S r = S(1) / std::sqrt(ms + static_cast<S>(rms_eps));
    inv[static_cast<std::size_t>(i)] = r;
    y.row(i) = (x.row(i) * r).cwiseProduct(g);
  }
}

// Accumulates dg and returns dx for y = g * x / rms(x).
template <typename S>
Mat<S> rms_backward(const Mat<S>& x, const Mat<S>& g, const std::vector<S>& inv, const Mat<S>& dy, Mat<S>& dg) {
  const auto L = x.rows(), d = x.cols();
  Mat<S> dx(L, d);
  for (Eigen::Index i = 0; i < L; ++i) {
    const S r = inv[static_cast<std::size_t>(i)];
    const auto xh = (x.row(i) * r).eval();
    dg += dy.row(i).cwiseProduct(xh);
    const auto dxh = dy.row(i).cwiseProduct(g).eval();
    const S dot = dxh.dot(xh) / static_cast<S>(d);
    dx.row(i) = (dxh - xh * dot) * r;
  }
  return dx;
}

template <typename S>
S gelu(S u) {
  const S c = static_cast<S>(0.7978845608028654);
  return S(0.5) * u * (S(1) + std::tanh(c * (u + S(0.044715) * u * u * u)));
}

template <typename S>
S gelu_grad(S u) {
  const S c = static_cast<S>(0.7978845608028654);
  const S th = std::tanh(c * (u + S(0.044715) * u * u * u));
  return S(0.5) * (S(1) + th) + S(0.5) * u * (S(1) - th * th) * c * (S(1) + S(3 * 0.044715) * u * u);
}

}  // namespace detail

/// Runs the network on `tokens` (x_t followed by EOS). Writes f logits for
/// the first n_f positions and g logits for every position.
template <typename S>
void forward(const Params<S>& p, const std::vector<int>& tokens, int t, int n_f, Mat<S>& f_logits,
             Mat<S>& g_logits, Cache<S>* cache) {
  const NetConfig& c = p.cfg;
  const auto L = static_cast<Eigen::Index>(tokens.size());
  const int d = c.width, H = c.heads, dh = d / H;
  if (L > c.max_len + 1) throw Error(errc::over_length, "sequence longer than the model supports");
  Mat<S> x(L, d);
  for (Eigen::Index i = 0; i < L; ++i)
    x.row(i) = p.tok_emb.row(tokens[static_cast<std::size_t>(i)]) + p.pos_emb.row(i) + p.time_emb.row(t);
  if (cache) {
    cache->tokens = tokens;
    cache->t = t;
    cache->blocks.resize(p.blocks.size());
  }
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  BlockCache<S> local;
  for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
    const auto& B = p.blocks[bi];
    BlockCache<S>& bc = cache ? cache->blocks[bi] : local;
    bc.x_in = x;
    detail::rms_forward(x, B.g1, bc.a, bc.inv1);
    bc.q.noalias() = bc.a * B.wq;
    bc.k.noalias() = bc.a * B.wk;
    bc.v.noalias() = bc.a * B.wv;
    bc.ctx.resize(L, d);
    bc.probs.resize(static_cast<std::size_t>(H));
    for (int h = 0; h < H; ++h) {
      Mat<S>& P = bc.probs[static_cast<std::size_t>(h)];
      P.noalias() = bc.q.middleCols(h * dh, dh) * bc.k.middleCols(h * dh, dh).transpose();
      P *= scale;
      for (Eigen::Index i = 0; i < L; ++i) {
        const S mx = P.row(i).maxCoeff();
        P.row(i) = (P.row(i).array() - mx).exp();
        P.row(i) /= P.row(i).sum();
      }
      bc.ctx.middleCols(h * dh, dh).noalias() = P * bc.v.middleCols(h * dh, dh);
    }
    x.noalias() += bc.ctx * B.wo;
    bc.x_mid = x;
    detail::rms_forward(x, B.g2, bc.b, bc.inv2);
    bc.u.noalias() = bc.b * B.w1;
    bc.u.rowwise() += B.b1.row(0);
    bc.gu = bc.u.unaryExpr([](S v) { return detail::gelu(v); });
    x.noalias() += bc.gu * B.w2;
    x.rowwise() += B.b2.row(0);
  }
  Mat<S> hf;
  std::vector<S> inv_f;
  detail::rms_forward(x, p.g_final, hf, inv_f);
  const S fs = S(1) / std::sqrt(static_cast<S>(d));
  f_logits.noalias() = hf.topRows(n_f) * p.tok_emb.topRows(c.out_classes).transpose();
  f_logits *= fs;
  f_logits.rowwise() += p.f_bias.row(0);
  g_logits.noalias() = hf * p.wg;
  g_logits.rowwise() += p.bg.row(0);
  if (cache) {
    cache->x_last = std::move(x);
    cache->hf = std::move(hf);
    cache->inv_f = std::move(inv_f);
  }
}

/// Accumulates parameter gradients into `grad` given logit gradients.
template <typename S>
void backward(const Params<S>& p, const Cache<S>& cache, const Mat<S>& df, const Mat<S>& dg, Params<S>& grad) {
  const NetConfig& c = p.cfg;
  const int d = c.width, H = c.heads, dh = d / H;
  const auto L = cache.hf.rows();
  const auto n_f = df.rows();
  const S fs = S(1) / std::sqrt(static_cast<S>(d));
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  Mat<S> dhf = dg * p.wg.transpose();
  grad.wg.noalias() += cache.hf.transpose() * dg;
  grad.bg += dg.colwise().sum();
  if (n_f > 0) {
    dhf.topRows(n_f).noalias() += (df * p.tok_emb.topRows(c.out_classes)) * fs;
    grad.tok_emb.topRows(c.out_classes).noalias() += (df.transpose() * cache.hf.topRows(n_f)) * fs;
    grad.f_bias += df.colwise().sum();
  }
  Mat<S> dx = detail::rms_backward(cache.x_last, p.g_final, cache.inv_f, dhf, grad.g_final);

  for (std::size_t bi = p.blocks.size(); bi-- > 0;) {
    const auto& B = p.blocks[bi];
    auto& G = grad.blocks[bi];
    const auto& bc = cache.blocks[bi];
    // Feed-forward residual.
    G.w2.noalias() += bc.gu.transpose() * dx;
    G.b2 += dx.colwise().sum();
    Mat<S> du = dx * B.w2.transpose();
    du = du.cwiseProduct(bc.u.unaryExpr([](S v) { return detail::gelu_grad(v); }));
    G.w1.noalias() += bc.b.transpose() * du;
    G.b1 += du.colwise().sum();
    const Mat<S> db = du * B.w1.transpose();
    dx += detail::rms_backward(bc.x_mid, B.g2, bc.inv2, db, G.g2);
    // Attention residual.
    G.wo.noalias() += bc.ctx.transpose() * dx;
    const Mat<S> dctx = dx * B.wo.transpose();
    Mat<S> dq(L, d), dk(L, d), dv(L, d);
    for (int h = 0; h < H; ++h) {
      const Mat<S>& P = bc.probs[static_cast<std::size_t>(h)];
      const auto dc = dctx.middleCols(h * dh, dh);
      dv.middleCols(h * dh, dh).noalias() = P.transpose() * dc;
      Mat<S> dP = dc * bc.v.middleCols(h * dh, dh).transpose();
      for (Eigen::Index i = 0; i < L; ++i) {
        const S dot = dP.row(i).dot(P.row(i));
        dP.row(i) = P.row(i).cwiseProduct((dP.row(i).array() - dot).matrix());
      }
      dP *= scale;
      dq.middleCols(h * dh, dh).noalias() = dP * bc.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh).noalias() = dP.transpose() * bc.q.middleCols(h * dh, dh);
    }
    G.wq.noalias() += bc.a.transpose() * dq;
    G.wk.noalias() += bc.a.transpose() * dk;
    G.wv.noalias() += bc.a.transpose() * dv;
    Mat<S> da = dq * B.wq.transpose();
    da.noalias() += dk * B.wk.transpose();
    da.noalias() += dv * B.wv.transpose();
    dx += detail::rms_backward(bc.x_in, B.g1, bc.inv1, da, G.g1);
  }
  for (Eigen::Index i = 0; i < L; ++i) {
    grad.tok_emb.row(cache.tokens[static_cast<std::size_t>(i)]) += dx.row(i);
    grad.pos_emb.row(i) += dx.row(i);
  }
  grad.time_emb.row(cache.t) += dx.colwise().sum();
}

}  // namespace editdiff::nn
