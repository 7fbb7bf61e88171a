#pragma once

#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "editdiff/core_seq.hpp"
#include "editdiff/forward_step.hpp"
#include "editdiff/numeric.hpp"

namespace editdiff {

/// Closed-form parameters of q(x_t, a_{0->t} | x_0).
struct CumulativeParams {
  Vector alpha_bar;  // insertion probability per output token
  Vector beta_bar;   // deletion probability per input token
  Matrix Q_bar;      // replacement probability, input x output
  int t = 0;

  double exit_prob() const { return 1.0 - alpha_bar.sum(); }
};

inline CumulativeParams identity_params(const Vocabulary& v) {
  const int K = v.latent_size();
  return {Vector::Zero(K), Vector::Zero(K), Matrix::Identity(K, K), 0};
}

/// One step of the state-elimination recursion.
inline CumulativeParams compose_step(const CumulativeParams& c, const StepParams& p,
                                     const Vocabulary& v) {
  const int DEL = v.del(), INS = v.ins();
  const double rho = c.alpha_bar[DEL];
  if (!(rho < 1.0)) throw Error(errc::invalid_argument, "DEL insertion mass must be below 1");
  const double loop = 1.0 / (1.0 - rho);
  const Vector inserted = p.Q.transpose() * c.alpha_bar;  // alpha_bar^T Q_t
  CumulativeParams out;
  out.t = c.t + 1;
  out.alpha_bar = (1.0 - p.alpha) * loop * inserted;
  out.alpha_bar[INS] += p.alpha;
  const Vector to_del = c.Q_bar.col(DEL);
  out.beta_bar = c.beta_bar + to_del * (c.exit_prob() * loop);
  out.Q_bar = c.Q_bar * p.Q + to_del * (inserted.transpose() * loop);
  return out;
}

/// Cumulative parameters for every t = 0..T of a schedule.
class ForwardProcess {
 public:
  ForwardProcess() = default;
  explicit ForwardProcess(Schedule s) : schedule_(std::move(s)) {
    cum_.push_back(identity_params(schedule_.vocab));
    for (int t = 1; t <= schedule_.T(); ++t)
      cum_.push_back(compose_step(cum_.back(), schedule_.at(t), schedule_.vocab));
  }

  const Schedule& schedule() const { return schedule_; }
  const Vocabulary& vocab() const { return schedule_.vocab; }
  int T() const { return schedule_.T(); }
  const CumulativeParams& cumulative(int t) const { return cum_.at(static_cast<std::size_t>(t)); }
  const StepParams& step(int t) const { return schedule_.at(t); }

 private:
  Schedule schedule_;
  std::vector<CumulativeParams> cum_;
};

/// Runs the two-state marginal transducer: each gap inserts until exit,
/// then each input token is deleted (staying in the delete state) or
/// replaced (opening a new gap). The summary comes out canonical.
inline std::pair<Seq, EditSummary> sample_from_x0(const Seq& x0, const CumulativeParams& c,
                                                  const Vocabulary& v, Rng& rng) {
  validate_sequence(x0, Level::data, v);
  const int K = v.latent_size();
  Vector gap_weights(K + 1);
  gap_weights.head(K) = c.alpha_bar;
  gap_weights[K] = std::max(0.0, c.exit_prob());
  Seq xt;
  EditSummary a;
  auto gap = [&] {
    for (;;) {
      const int y = sample_categorical(gap_weights, rng);
      if (y == K) return;
      xt.push_back(y);
      a.push_back(EditOp::ins(y));
    }
  };
  Vector row(K + 1);
  gap();
  for (Token x : x0) {
    row.head(K) = c.Q_bar.row(x).transpose();
    row[K] = c.beta_bar[x];
    const int z = sample_categorical(row, rng);
    if (z == K) {
      a.push_back(EditOp::del(x));
      continue;
    }
    xt.push_back(z);
    a.push_back(EditOp::rep(x, z));
    gap();
  }
  return {std::move(xt), std::move(a)};
}

/// log q(x_t, a | x_0). Interleaving-invariant within gaps.
inline double summary_logprob(const Seq& x0, const EditSummary& a, const CumulativeParams& c) {
  if (consumed(a) != x0) throw Error(errc::projection_mismatch, "summary does not consume x0");
  double lp = 0.0;
  int reps = 0;
  for (const auto& op : a) {
    switch (op.kind) {
      case EditOp::Kind::insert: lp += safe_log(c.alpha_bar[op.out]); break;
      case EditOp::Kind::remove: lp += safe_log(c.beta_bar[op.in]); break;
      case EditOp::Kind::replace:
        lp += safe_log(c.Q_bar(op.in, op.out));
        ++reps;
        break;
    }
    if (lp == neg_inf) return neg_inf;
  }
  return lp + (reps + 1) * safe_log(c.exit_prob());
}

/// log q(x_t | x_0), summing over all summaries with a forward pass over
/// the insert (A) and delete (B) states.
inline double marginal_logprob(const Seq& x0, const Seq& xt, const CumulativeParams& c) {
  const std::size_t n = x0.size(), m = xt.size();
  const double log_exit = safe_log(c.exit_prob());
  std::vector<double> A((n + 1) * (m + 1), neg_inf), B((n + 1) * (m + 1), neg_inf);
  auto at = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
  for (std::size_t i = 0; i <= n; ++i) {
    for (std::size_t j = 0; j <= m; ++j) {
      double a = (i == 0 && j == 0) ? 0.0 : neg_inf;
      if (j > 0) {
        a = log_sum_exp(a, A[at(i, j - 1)] + safe_log(c.alpha_bar[xt[j - 1]]));
        if (i > 0) a = log_sum_exp(a, B[at(i - 1, j - 1)] + safe_log(c.Q_bar(x0[i - 1], xt[j - 1])));
      }
      A[at(i, j)] = a;
      double b = a + log_exit;
      if (i > 0) b = log_sum_exp(b, B[at(i - 1, j)] + safe_log(c.beta_bar[x0[i - 1]]));
      B[at(i, j)] = b;
    }
  }
  return B[at(n, m)];
}

/// Draws a ~ q(a | x_0, x_t) by backward sampling through the same A/B
/// lattice. The result is canonical.
inline EditSummary sample_summary(const Seq& x0, const Seq& xt, const CumulativeParams& c, Rng& rng) {
  const std::size_t n = x0.size(), m = xt.size();
  const double log_exit = safe_log(c.exit_prob());
  std::vector<double> A((n + 1) * (m + 1), neg_inf), B((n + 1) * (m + 1), neg_inf);
  auto at = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
  for (std::size_t i = 0; i <= n; ++i) {
    for (std::size_t j = 0; j <= m; ++j) {
      double a = (i == 0 && j == 0) ? 0.0 : neg_inf;
      if (j > 0) {
        a = log_sum_exp(a, A[at(i, j - 1)] + safe_log(c.alpha_bar[xt[j - 1]]));
        if (i > 0) a = log_sum_exp(a, B[at(i - 1, j - 1)] + safe_log(c.Q_bar(x0[i - 1], xt[j - 1])));
      }
      A[at(i, j)] = a;
      double b = a + log_exit;
      if (i > 0) b = log_sum_exp(b, B[at(i - 1, j)] + safe_log(c.beta_bar[x0[i - 1]]));
      B[at(i, j)] = b;
    }
  }
  if (B[at(n, m)] == neg_inf) throw Error(errc::zero_normalizer, "x_t unreachable from x_0");
  EditSummary rev;
  std::size_t i = n, j = m;
  bool in_b = true;
  auto pick2 = [&](double l0, double l1) {
    const double mx = std::max(l0, l1);
    const std::array<double, 2> w{std::exp(l0 - mx), std::exp(l1 - mx)};
    return sample_categorical(w, rng);
  };
  while (i > 0 || j > 0 || in_b) {
    if (in_b) {
      const double stay = i > 0 ? B[at(i - 1, j)] + safe_log(c.beta_bar[x0[i - 1]]) : neg_inf;
      if (pick2(A[at(i, j)] + log_exit, stay) == 1) {
        rev.push_back(EditOp::del(x0[i - 1]));
        --i;
      } else {
        in_b = false;
      }
      continue;
    }
    const double ins = j > 0 ? A[at(i, j - 1)] + safe_log(c.alpha_bar[xt[j - 1]]) : neg_inf;
    const double rep =
        (i > 0 && j > 0) ? B[at(i - 1, j - 1)] + safe_log(c.Q_bar(x0[i - 1], xt[j - 1])) : neg_inf;
    if (pick2(ins, rep) == 0) {
      rev.push_back(EditOp::ins(xt[j - 1]));
      --j;
    } else {
      rev.push_back(EditOp::rep(x0[i - 1], xt[j - 1]));
      --i, --j;
      in_b = true;
    }
  }
  return {rev.rbegin(), rev.rend()};
}

}  // namespace editdiff
