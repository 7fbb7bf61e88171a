#pragma once

// Learned reverse process: network outputs combined with the closed-form
// forward quantities into p(x_{t-1} | x_t).

#include <algorithm>
#include <array>
#include <climits>
#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "editdiff/core_seq.hpp"
#include "editdiff/nn/transformer.hpp"
#include "editdiff/numeric.hpp"
#include "editdiff/pfst_cumulative.hpp"
#include "editdiff/posterior.hpp"

namespace editdiff {

inline constexpr int default_bucket_cap = 8;

/// Row i of f: log-weights over data origins 0..D-1 and the insertion class D.
/// Row i of g: log-weights over the number of deleted x0 tokens directly
/// before position i; the last row belongs to the end of the sequence.
struct DenoiserOutput {
  Matrix f_logits;
  Matrix g_logits;
};

inline nn::NetConfig make_net_config(const Vocabulary& v, int T, int max_len, int width = 64, int heads = 4,
                                     int blocks = 2, int bucket_cap = default_bucket_cap) {
  nn::NetConfig c;
  c.vocab_size = v.total_size();
  c.out_classes = v.data_size + 1;
  c.count_buckets = bucket_cap + 1;
  c.max_len = max_len;
  c.steps = T;
  c.width = width;
  c.heads = heads;
  c.blocks = blocks;
  if (width % heads != 0) throw Error(errc::invalid_argument, "width must be divisible by heads");
  return c;
}

/// Network pass on x_t with an appended EOS. The cache, when given, is
/// filled for a later backward pass.
template <typename S>
DenoiserOutput denoiser_forward(const nn::Params<S>& p, const Seq& xt, int t, nn::Cache<S>* cache = nullptr) {
  if (static_cast<int>(xt.size()) > p.cfg.max_len)
    throw Error(errc::over_length, "|x_t| = " + std::to_string(xt.size()) + " exceeds " +
                                       std::to_string(p.cfg.max_len));
  if (t < 1 || t > p.cfg.steps) throw Error(errc::invalid_argument, "timestep out of range");
  std::vector<int> tokens(xt.begin(), xt.end());
  tokens.push_back(p.cfg.vocab_size - 1);
  nn::Mat<S> f, g;
  nn::forward(p, tokens, t, static_cast<int>(xt.size()), f, g, cache);
  return {f.template cast<double>(), g.template cast<double>()};
}

// ---------------------------------------------------------------------------
// Per-step constants.

struct StepTables {
  StepContext ctx;
  double rho = 0.0;
  double ins_scale = 0.0;  // (1 - alpha_t) / (1 - rho)
  double p_hat = 0.0;      // explicit-DEL probability shared by every deleted token
  std::vector<char> feasible;                 // per count bucket
  std::array<std::vector<DelCountDist>, 2> runs;  // [pair?][n]
};

/// Count tables for every t; deleted tokens are treated as exchangeable,
/// so one explicit probability (the mean over data tokens) serves all.
class ReverseTables {
 public:
  ReverseTables() = default;
  ReverseTables(const ForwardProcess& fp, int bucket_cap, int loop_cap = default_count_cap)
      : cap_(bucket_cap) {
    const Vocabulary& v = fp.vocab();
    per_t_.resize(static_cast<std::size_t>(fp.T()) + 1);
    for (int t = 1; t <= fp.T(); ++t) {
      StepTables& s = per_t_[static_cast<std::size_t>(t)];
      s.ctx = step_context(fp, t);
      s.rho = s.ctx.rho();
      s.ins_scale = (1.0 - s.ctx.step->alpha) / (1.0 - s.rho);
      double sum = 0.0;
      int n_del = 0;
      for (int x = 0; x < v.data_size; ++x) {
        if (s.ctx.now->beta_bar[x] > zero_threshold) {
          sum += explicit_delete_prob(x, s.ctx);
          ++n_del;
        }
      }
      s.p_hat = n_del ? sum / n_del : 0.0;
      s.feasible.assign(static_cast<std::size_t>(cap_) + 1, 0);
      s.feasible[0] = 1;
      for (int n = 1; n <= cap_; ++n) s.feasible[static_cast<std::size_t>(n)] = n_del > 0;
      for (int e = 0; e < 2; ++e) {
        for (int n = 0; n <= cap_; ++n) {
          std::vector<double> probs(static_cast<std::size_t>(n), s.p_hat);
          if (e) probs.push_back(1.0);
          s.runs[static_cast<std::size_t>(e)].push_back(del_count_distribution(probs, s.rho, loop_cap));
        }
      }
    }
  }

  const StepTables& at(int t) const { return per_t_.at(static_cast<std::size_t>(t)); }
  int bucket_cap() const { return cap_; }

 private:
  int cap_ = 0;
  std::vector<StepTables> per_t_;
};

namespace detail {

inline void softmax_row(const Matrix& logits, Eigen::Index r, std::vector<double>& out) {
  const auto row = logits.row(r);
  const double mx = row.maxCoeff();
  out.resize(static_cast<std::size_t>(row.size()));
  double s = 0.0;
  for (Eigen::Index j = 0; j < row.size(); ++j) s += (out[static_cast<std::size_t>(j)] = std::exp(row[j] - mx));
  for (double& x : out) x /= s;
}

/// Feasibility-masked count weights; returns the mask-weighted total G.
inline double masked_counts(const std::vector<double>& gamma, const StepTables& s, std::vector<double>& out) {
  double G = 0.0;
  out.assign(gamma.size(), 0.0);
  for (std::size_t n = 0; n < gamma.size(); ++n)
    if (s.feasible[n]) G += (out[n] = gamma[n]);
  if (!(G > 0.0)) throw Error(errc::zero_normalizer, "no feasible deletion count");
  for (double& x : out) x /= G;
  return G;
}

inline double run_mixture(const std::vector<double>& gp, const std::vector<DelCountDist>& runs, int m) {
  double c = 0.0;
  for (std::size_t n = 0; n < gp.size(); ++n)
    if (gp[n] > 0.0) c += gp[n] * runs[n].prob(m);
  return c;
}

// Softmax backward: d logits = p * (d p - <p, d p>).
inline void softmax_backward(const std::vector<double>& p, const std::vector<double>& dp, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) {
  double dot = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) dot += p[j] * dp[j];
  for (std::size_t j = 0; j < p.size(); ++j) out[static_cast<Eigen::Index>(j)] = p[j] * (dp[j] - dot);
}

// Count-head gradient for dlogC/dgamma given the run probabilities at m.
inline void count_grad(const std::vector<double>& gamma, const StepTables& s, double G,
                       const std::array<double, 2>& dC, const std::array<double, 2>& C, int m,
                       Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) {
  std::vector<double> dgam(gamma.size(), 0.0);
  for (std::size_t n = 0; n < gamma.size(); ++n) {
    if (!s.feasible[n]) continue;
    double acc = 0.0;
    for (std::size_t e = 0; e < 2; ++e)
      if (dC[e] != 0.0) acc += dC[e] * (s.runs[e][n].prob(m) - C[e]);
    dgam[n] = acc / G;
  }
  softmax_backward(gamma, dgam, out);
}

}  // namespace detail

/// Splits x_{t-1} into (DEL run, token) per non-INS token of x_t plus the
/// final run. Returns false on a structural mismatch.
inline bool split_runs(const Seq& xt, const Seq& x_prev, const Vocabulary& v, std::vector<int>& runs,
                       std::vector<Token>& ys) {
  runs.clear();
  ys.clear();
  std::size_t pos = 0;
  for (Token z : xt) {
    if (z == v.ins()) continue;
    int m = 0;
    while (pos < x_prev.size() && x_prev[pos] == v.del()) ++m, ++pos;
    if (pos == x_prev.size()) return false;
    runs.push_back(m);
    ys.push_back(x_prev[pos++]);
  }
  int m = 0;
  while (pos < x_prev.size() && x_prev[pos] == v.del()) ++m, ++pos;
  if (pos != x_prev.size()) return false;
  runs.push_back(m);
  return true;
}

/// log p(x_{t-1} | x_t) under the network output. When df/dg are given
/// they receive d log p / d logits (same shapes as the output).
inline double reverse_step_logprob(const DenoiserOutput& out, const Seq& xt, const Seq& x_prev,
                                   const StepTables& s, Matrix* df = nullptr, Matrix* dg = nullptr) {
  const Vocabulary& v = *s.ctx.vocab;
  const int D = v.data_size;
  const Token DEL = v.del();
  std::vector<int> runs;
  std::vector<Token> ys;
  if (!split_runs(xt, x_prev, v, runs, ys)) return neg_inf;
  if (df) df->setZero(out.f_logits.rows(), out.f_logits.cols());
  if (dg) dg->setZero(out.g_logits.rows(), out.g_logits.cols());
  const Matrix& Qp = s.ctx.prev->Q_bar;
  const Matrix& Qn = s.ctx.now->Q_bar;
  const Vector& ap = s.ctx.prev->alpha_bar;
  const Vector& an = s.ctx.now->alpha_bar;
  const Matrix& Qt = s.ctx.step->Q;
  const double pair_den = 1.0 / (1.0 - s.rho);
  std::vector<double> w, gamma, gp, dw(static_cast<std::size_t>(D) + 1);
  double lp = 0.0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < xt.size(); ++i) {
    const Token z = xt[i];
    if (z == v.ins()) continue;
    const int m = runs[k];
    const Token y = ys[k];
    ++k;
    const auto r = static_cast<Eigen::Index>(i);
    detail::softmax_row(out.f_logits, r, w);
    detail::softmax_row(out.g_logits, r, gamma);
    const double G = detail::masked_counts(gamma, s, gp);
    const std::array<double, 2> C{detail::run_mixture(gp, s.runs[0], m), detail::run_mixture(gp, s.runs[1], m)};
    const double qz = Qt(y, z);
    const double d00 = s.runs[0][0].prob(m);
    const double pair_y = ap[y] * qz * pair_den;
    const double u_ins = s.ins_scale * ap[y] * qz;
    double N = w[static_cast<std::size_t>(D)] * u_ins * d00, Z = w[static_cast<std::size_t>(D)] * an[z];
    double sum_copy = 0.0, sum_pair = 0.0;
    for (int x = 0; x < D; ++x) {
      const double wx = w[static_cast<std::size_t>(x)];
      const double uc = Qp(x, y) * qz, up = Qp(x, DEL) * pair_y;
      sum_copy += wx * uc;
      sum_pair += wx * up;
      Z += wx * Qn(x, z);
    }
    N += sum_copy * C[0] + sum_pair * C[1];
    if (!(N > 0.0)) return neg_inf;
    if (!(Z > 0.0)) throw Error(errc::zero_normalizer, "model places no forward mass on x_t");
    lp += std::log(N) - std::log(Z);
    if (df) {
      for (int x = 0; x < D; ++x)
        dw[static_cast<std::size_t>(x)] =
            (Qp(x, y) * qz * C[0] + Qp(x, DEL) * pair_y * C[1]) / N - Qn(x, z) / Z;
      dw[static_cast<std::size_t>(D)] = u_ins * d00 / N - an[z] / Z;
      detail::softmax_backward(w, dw, df->row(r));
    }
    if (dg) detail::count_grad(gamma, s, G, {sum_copy / N, sum_pair / N}, C, m, dg->row(r));
  }
  const int m = runs.back();
  const auto r = out.g_logits.rows() - 1;
  detail::softmax_row(out.g_logits, r, gamma);
  const double G = detail::masked_counts(gamma, s, gp);
  const double C = detail::run_mixture(gp, s.runs[0], m);
  if (!(C > 0.0)) return neg_inf;
  lp += std::log(C);
  if (dg) detail::count_grad(gamma, s, G, {1.0 / C, 0.0}, {C, 0.0}, m, dg->row(r));
  return lp;
}

/// Distribution of the intermediate token y at non-INS position i, summed
/// over origins and DEL runs.
inline std::vector<double> reverse_token_distribution(const DenoiserOutput& out, const Seq& xt, std::size_t i,
                                                      const StepTables& s) {
  const Vocabulary& v = *s.ctx.vocab;
  const int D = v.data_size, K = v.latent_size();
  const Token z = xt.at(i);
  if (z == v.ins()) throw Error(errc::invalid_argument, "INS positions carry no token");
  std::vector<double> w;
  detail::softmax_row(out.f_logits, static_cast<Eigen::Index>(i), w);
  const Matrix& Qp = s.ctx.prev->Q_bar;
  const Vector& ap = s.ctx.prev->alpha_bar;
  const Matrix& Qt = s.ctx.step->Q;
  double h_del = 0.0;
  for (int x = 0; x < D; ++x) h_del += w[static_cast<std::size_t>(x)] * Qp(x, v.del());
  std::vector<double> p(static_cast<std::size_t>(K), 0.0);
  double total = 0.0;
  for (int y = 0; y < K; ++y) {
    double h = 0.0;
    for (int x = 0; x < D; ++x) h += w[static_cast<std::size_t>(x)] * Qp(x, y);
    const double val = Qt(y, z) * (h + (h_del / (1.0 - s.rho) + w[static_cast<std::size_t>(D)] * s.ins_scale) * ap[y]);
    p[static_cast<std::size_t>(y)] = val;
    total += val;
  }
  if (!(total > 0.0)) throw Error(errc::zero_normalizer, "no origin reaches x_t[i]");
  for (double& x : p) x /= total;
  return p;
}

/// Draws x_{t-1} from the reverse step. At t = 1 the forward quantities
/// leave only data tokens and empty runs, so the draw is marker-free.
inline Seq sample_reverse_step(const DenoiserOutput& out, const Seq& xt, const StepTables& s, Rng& rng) {
  const Vocabulary& v = *s.ctx.vocab;
  const int D = v.data_size, K = v.latent_size();
  const Token DEL = v.del();
  const Matrix& Qp = s.ctx.prev->Q_bar;
  const Vector& ap = s.ctx.prev->alpha_bar;
  const Matrix& Qt = s.ctx.step->Q;
  const double pair_den = 1.0 / (1.0 - s.rho);
  std::vector<double> w, gamma, gp, choice(static_cast<std::size_t>(3 * K));
  Seq x_prev;
  auto emit_run = [&](int m) { x_prev.insert(x_prev.end(), static_cast<std::size_t>(m), DEL); };
  for (std::size_t i = 0; i < xt.size(); ++i) {
    const Token z = xt[i];
    if (z == v.ins()) continue;
    const auto r = static_cast<Eigen::Index>(i);
    detail::softmax_row(out.f_logits, r, w);
    double h_del = 0.0;
    for (int x = 0; x < D; ++x) h_del += w[static_cast<std::size_t>(x)] * Qp(x, DEL);
    for (int y = 0; y < K; ++y) {
      double h = 0.0;
      for (int x = 0; x < D; ++x) h += w[static_cast<std::size_t>(x)] * Qp(x, y);
      const double qz = Qt(y, z);
      choice[static_cast<std::size_t>(y)] = h * qz;
      choice[static_cast<std::size_t>(K + y)] = h_del * ap[y] * qz * pair_den;
      choice[static_cast<std::size_t>(2 * K + y)] = w[static_cast<std::size_t>(D)] * s.ins_scale * ap[y] * qz;
    }
    const int c = sample_categorical(choice, rng);
    const int kind = c / K;
    const Token y = c % K;
    if (kind == 2) {
      emit_run(s.runs[0][0].sample(rng));
    } else {
      detail::softmax_row(out.g_logits, r, gamma);
      detail::masked_counts(gamma, s, gp);
      const int n = sample_categorical(gp, rng);
      emit_run(s.runs[static_cast<std::size_t>(kind)][static_cast<std::size_t>(n)].sample(rng));
    }
    x_prev.push_back(y);
  }
  detail::softmax_row(out.g_logits, out.g_logits.rows() - 1, gamma);
  detail::masked_counts(gamma, s, gp);
  const int n = sample_categorical(gp, rng);
  emit_run(s.runs[0][static_cast<std::size_t>(n)].sample(rng));
  return x_prev;
}

// ---------------------------------------------------------------------------
// Length table.

struct LengthTable {
  std::vector<double> probs;  // index = |x_T|

  int max_len() const { return static_cast<int>(probs.size()) - 1; }
  double log_prob(int n) const {
    return n >= 0 && n < static_cast<int>(probs.size()) ? safe_log(probs[static_cast<std::size_t>(n)]) : neg_inf;
  }
  int sample(Rng& rng) const { return sample_categorical(probs, rng); }
};

/// Empirical |x_T| over forward draws, one pseudo-count per bin. Draws
/// longer than max_len are dropped.
inline LengthTable fit_length_table(const ForwardProcess& fp, const std::function<Seq(Rng&)>& dataset, int draws,
                                    int max_len, Rng& rng) {
  if (!fp.schedule().is_terminal()) throw Error(errc::invalid_argument, "schedule is not terminal");
  LengthTable tab;
  tab.probs.assign(static_cast<std::size_t>(max_len) + 1, 1.0);
  const auto& cT = fp.cumulative(fp.T());
  for (int i = 0; i < draws; ++i) {
    const Seq x0 = dataset(rng);
    const auto n = sample_from_x0(x0, cT, fp.vocab(), rng).first.size();
    if (n <= static_cast<std::size_t>(max_len)) tab.probs[n] += 1.0;
  }
  double total = 0.0;
  for (double p : tab.probs) total += p;
  for (double& p : tab.probs) p /= total;
  return tab;
}

/// q(|x_T| = n | x0) for n = 0..max_len.
inline std::vector<double> terminal_length_distribution(const Seq& x0, const ForwardProcess& fp, int max_len) {
  const auto& c = fp.cumulative(fp.T());
  const Token DEL = fp.vocab().del();
  std::vector<double> probs;
  for (Token x : x0) probs.push_back(std::clamp(c.Q_bar(x, DEL), 0.0, 1.0));
  const int n_max = std::max(0, max_len - static_cast<int>(x0.size()));
  const auto d = del_count_distribution(probs, c.alpha_bar[DEL], std::max(n_max, 64));
  std::vector<double> out(static_cast<std::size_t>(max_len) + 1, 0.0);
  for (int n = 0; n <= max_len; ++n) out[static_cast<std::size_t>(n)] = d.prob(n);
  return out;
}

/// Exact -E_q[log p(|x_T|)], conditioned on |x_T| within the table.
inline double length_loss(const Seq& x0, const ForwardProcess& fp, const LengthTable& tab) {
  const auto q = terminal_length_distribution(x0, fp, tab.max_len());
  double mass = 0.0, acc = 0.0;
  for (std::size_t n = 0; n < q.size(); ++n) {
    if (q[n] <= 0.0) continue;
    mass += q[n];
    acc -= q[n] * tab.log_prob(static_cast<int>(n));
  }
  if (!(mass > 0.0)) throw Error(errc::zero_normalizer, "no terminal length fits the table");
  return acc / mass;
}

// ---------------------------------------------------------------------------
// Reverse models.

class ReverseModel {
 public:
  virtual ~ReverseModel() = default;
  virtual const ForwardProcess& process() const = 0;
  virtual const LengthTable& lengths() const = 0;
  /// Longest x_t the model accepts.
  virtual int max_len() const { return INT_MAX; }
  /// log p(. | x_t) at step t, with any per-x_t work done once.
  virtual std::function<double(const Seq&)> conditional(const Seq& xt, int t) const = 0;
  virtual Seq sample(const Seq& xt, int t, Rng& rng) const = 0;

  double log_prob(const Seq& x_prev, const Seq& xt, int t) const { return conditional(xt, t)(x_prev); }
};

template <typename S>
class NetworkModel : public ReverseModel {
 public:
  NetworkModel(std::shared_ptr<const ForwardProcess> fp, nn::Params<S> params, LengthTable lengths)
      : fp_(std::move(fp)), params_(std::move(params)), lengths_(std::move(lengths)),
        tables_(*fp_, params_.cfg.count_buckets - 1) {
    if (params_.cfg.steps != fp_->T()) throw Error(errc::invalid_argument, "model and schedule disagree on T");
    if (params_.cfg.vocab_size != fp_->vocab().total_size())
      throw Error(errc::invalid_argument, "model and schedule disagree on vocabulary");
  }

  const ForwardProcess& process() const override { return *fp_; }
  const LengthTable& lengths() const override { return lengths_; }
  int max_len() const override { return params_.cfg.max_len; }
  const nn::Params<S>& params() const { return params_; }
  nn::Params<S>& params() { return params_; }
  const ReverseTables& tables() const { return tables_; }
  void set_lengths(LengthTable l) { lengths_ = std::move(l); }

  std::function<double(const Seq&)> conditional(const Seq& xt, int t) const override {
    auto out = std::make_shared<DenoiserOutput>(denoiser_forward(params_, xt, t));
    const StepTables* s = &tables_.at(t);
    return [out, xt, s](const Seq& x_prev) { return reverse_step_logprob(*out, xt, x_prev, *s); };
  }

  Seq sample(const Seq& xt, int t, Rng& rng) const override {
    return sample_reverse_step(denoiser_forward(params_, xt, t), xt, tables_.at(t), rng);
  }

 private:
  std::shared_ptr<const ForwardProcess> fp_;
  nn::Params<S> params_;
  LengthTable lengths_;
  ReverseTables tables_;
};

/// p(x_{t-1} | x_t) = q(x_{t-1} | x_t, x0) for one fixed x0, with the exact
/// terminal length distribution. Test-scale reference model.
class ExactReverse : public ReverseModel {
 public:
  ExactReverse(std::shared_ptr<const ForwardProcess> fp, Seq x0, int max_len)
      : fp_(std::move(fp)), x0_(std::move(x0)) {
    lengths_.probs = terminal_length_distribution(x0_, *fp_, max_len);
    double total = 0.0;
    for (double p : lengths_.probs) total += p;
    for (double& p : lengths_.probs) p /= total;
  }

  const ForwardProcess& process() const override { return *fp_; }
  const LengthTable& lengths() const override { return lengths_; }

  std::function<double(const Seq&)> conditional(const Seq& xt, int t) const override {
    const double lz = marginal_logprob(x0_, xt, fp_->cumulative(t));
    const ForwardProcess* fp = fp_.get();
    const Seq x0 = x0_;
    return [fp, x0, xt, t, lz](const Seq& x_prev) {
      const double step = single_step_likelihood(x_prev, xt, fp->step(t), fp->vocab());
      if (step == neg_inf) return neg_inf;
      if (t == 1) return x_prev == x0 ? step - lz : neg_inf;
      return step + marginal_logprob(x0, x_prev, fp->cumulative(t - 1)) - lz;
    };
  }

  Seq sample(const Seq& xt, int t, Rng& rng) const override {
    const auto a = sample_summary(x0_, xt, fp_->cumulative(t), rng);
    return sample_posterior_step(x0_, xt, a, step_context(*fp_, t), rng).first;
  }

 private:
  std::shared_ptr<const ForwardProcess> fp_;
  Seq x0_;
  LengthTable lengths_;
};

// ---------------------------------------------------------------------------
// Generation.

inline constexpr int default_resample_tries = 16;

/// Runs the reverse chain from x_s down to x_0. Intermediate draws longer
/// than the model accepts are redrawn, then truncated as a last resort.
inline std::vector<Seq> run_chain(const ReverseModel& model, Seq x, int s, Rng& rng, bool keep_trace) {
  std::vector<Seq> trace;
  if (keep_trace) trace.push_back(x);
  const auto limit = static_cast<std::size_t>(model.max_len());
  for (int t = s; t >= 1; --t) {
    Seq next = model.sample(x, t, rng);
    for (int k = 1; t > 1 && next.size() > limit && k < default_resample_tries; ++k) next = model.sample(x, t, rng);
    if (t > 1 && next.size() > limit) next.resize(limit);
    x = std::move(next);
    if (keep_trace) trace.push_back(x);
  }
  if (!keep_trace) trace.push_back(std::move(x));
  return trace;
}

/// Samples x_0. With `trace`, returns x_T..x_0; otherwise just {x_0}.
inline std::vector<Seq> generate(const ReverseModel& model, Rng& rng, bool trace = false) {
  const int n = model.lengths().sample(rng);
  Seq xT(static_cast<std::size_t>(n), model.process().vocab().del());
  return run_chain(model, std::move(xT), model.process().T(), rng, trace);
}

inline std::vector<Seq> conditional_denoise(const ReverseModel& model, const Seq& y, int s, int k, Rng& rng) {
  const Vocabulary& v = model.process().vocab();
  validate_sequence(y, Level::latent, v);
  if (s < 0 || s > model.process().T()) throw Error(errc::invalid_argument, "start step out of range");
  if (s > 0 && static_cast<int>(y.size()) > model.max_len())
    throw Error(errc::over_length, "input has " + std::to_string(y.size()) + " tokens, model accepts " +
                                       std::to_string(model.max_len()));
  std::vector<Seq> out;
  for (int i = 0; i < k; ++i) out.push_back(run_chain(model, y, s, rng, false).back());
  return out;
}

}  // namespace editdiff
