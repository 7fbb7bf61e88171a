#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "editdiff/core_seq.hpp"
#include "editdiff/forward_step.hpp"
#include "editdiff/numeric.hpp"
#include "editdiff/pfst_cumulative.hpp"

namespace editdiff {

/// Everything the posterior at step t needs.
struct StepContext {
  const CumulativeParams* prev = nullptr;  // t-1
  const CumulativeParams* now = nullptr;   // t
  const StepParams* step = nullptr;        // t
  const Vocabulary* vocab = nullptr;
  int t = 0;

  double rho() const { return prev->alpha_bar[vocab->del()]; }
};

inline StepContext step_context(const ForwardProcess& fp, int t) {
  if (t < 1 || t > fp.T()) throw Error(errc::invalid_argument, "timestep out of range");
  return {&fp.cumulative(t - 1), &fp.cumulative(t), &fp.step(t), &fp.vocab(), t};
}

// ---------------------------------------------------------------------------
// Counts of consecutive DEL placeholders.

struct DelCountDist {
  std::vector<double> pmf;
  double tail = 0.0;  // mass beyond the support, before renormalization

  double prob(int m) const {
    return m >= 0 && m < static_cast<int>(pmf.size()) ? pmf[static_cast<std::size_t>(m)] : 0.0;
  }
  double log_prob(int m) const { return safe_log(prob(m)); }
  int sample(Rng& rng) const { return sample_categorical(pmf, rng); }
};

inline constexpr int default_count_cap = 16;

/// n_obs = n_explicit + NegBin(n_explicit + 1, 1 - pair_rate), with
/// n_explicit a sum of independent Bernoullis. Support is
/// 0..len(explicit_probs)+n_max.
inline DelCountDist del_count_distribution(std::span<const double> explicit_probs, double pair_rate,
                                           int n_max = default_count_cap) {
  if (!(pair_rate >= 0.0 && pair_rate < 1.0))
    throw Error(errc::invalid_argument, "pair rate must lie in [0,1)");
  std::vector<double> pe{1.0};
  for (double p : explicit_probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(errc::invalid_argument, "explicit probability outside [0,1]");
    std::vector<double> next(pe.size() + 1, 0.0);
    for (std::size_t k = 0; k < pe.size(); ++k) {
      next[k] += pe[k] * (1.0 - p);
      next[k + 1] += pe[k] * p;
    }
    pe = std::move(next);
  }
  const int support = static_cast<int>(explicit_probs.size()) + n_max + 1;
  DelCountDist d;
  d.pmf.assign(static_cast<std::size_t>(support), 0.0);
  for (std::size_t k = 0; k < pe.size(); ++k) {
    if (pe[k] == 0.0) continue;
    const double r = static_cast<double>(k + 1);
    double nb = std::pow(1.0 - pair_rate, r);
    for (int j = 0; static_cast<int>(k) + j < support; ++j) {
      if (j > 0) nb *= pair_rate * (j + r - 1) / j;
      d.pmf[k + static_cast<std::size_t>(j)] += pe[k] * nb;
    }
  }
  double total = 0.0;
  for (double p : d.pmf) total += p;
  d.tail = std::max(0.0, 1.0 - total);
  for (double& p : d.pmf) p /= total;
  return d;
}

// ---------------------------------------------------------------------------
// Per-edit explanations at t-1.

enum class Explanation {
  copy,             // Replace(x,z): x became y by t-1, then y -> z
  pair,             // Replace(x,z): x -> DEL by t-1, then an insertion y -> z
  step_insert,      // Insert(INS): inserted at step t
  carried_insert,   // Insert(z): an insertion y present at t-1, then y -> z
  silent_delete,    // Delete(x): already gone at t-1
  explicit_delete,  // Delete(x): DEL at t-1, removed at t
};

struct Outcome {
  Explanation kind;
  Token y = -1;  // intermediate value where meaningful
  double prob = 0.0;
};

struct EditPosterior {
  std::vector<std::vector<Outcome>> per_op;
};

/// Probability that a Delete(x) at t was still an explicit DEL at t-1.
inline double explicit_delete_prob(Token x, const StepContext& c) {
  const auto& P = *c.prev;
  const double explicit_mass =
      P.Q_bar(x, c.vocab->del()) * P.exit_prob() / (1.0 - c.rho());
  const double total = c.now->beta_bar[x];
  if (!(total > zero_threshold)) throw Error(errc::zero_normalizer, "deletion impossible at t");
  return std::clamp(explicit_mass / total, 0.0, 1.0);
}

inline std::vector<Outcome> replace_outcomes(Token x, Token z, const StepContext& c) {
  const auto& P = *c.prev;
  const auto& Q = c.step->Q;
  const int K = c.vocab->latent_size();
  const double pair_scale = P.Q_bar(x, c.vocab->del()) / (1.0 - c.rho());
  std::vector<Outcome> out;
  double total = 0.0;
  for (int y = 0; y < K; ++y) {
    const double w = P.Q_bar(x, y) * Q(y, z);
    if (w > 0.0) out.push_back({Explanation::copy, y, w}), total += w;
  }
  for (int y = 0; y < K; ++y) {
    const double w = pair_scale * P.alpha_bar[y] * Q(y, z);
    if (w > 0.0) out.push_back({Explanation::pair, y, w}), total += w;
  }
  if (!(total > zero_threshold)) throw Error(errc::zero_normalizer, "replacement impossible at t");
  for (auto& o : out) o.prob /= total;
  return out;
}

inline std::vector<Outcome> insert_outcomes(Token z, const StepContext& c) {
  if (z == c.vocab->ins()) return {{Explanation::step_insert, -1, 1.0}};
  const auto& P = *c.prev;
  const auto& Q = c.step->Q;
  std::vector<Outcome> out;
  double total = 0.0;
  for (int y = 0; y < c.vocab->latent_size(); ++y) {
    const double w = P.alpha_bar[y] * Q(y, z);
    if (w > 0.0) out.push_back({Explanation::carried_insert, y, w}), total += w;
  }
  if (!(total > zero_threshold)) throw Error(errc::zero_normalizer, "insertion impossible at t");
  for (auto& o : out) o.prob /= total;
  return out;
}

inline std::vector<Outcome> delete_outcomes(Token x, const StepContext& c) {
  const double pe = explicit_delete_prob(x, c);
  std::vector<Outcome> out;
  if (pe < 1.0) out.push_back({Explanation::silent_delete, -1, 1.0 - pe});
  if (pe > 0.0) out.push_back({Explanation::explicit_delete, c.vocab->del(), pe});
  return out;
}

inline EditPosterior edit_posterior(const EditSummary& a, const StepContext& c) {
  EditPosterior post;
  for (const auto& op : a) {
    switch (op.kind) {
      case EditOp::Kind::replace: post.per_op.push_back(replace_outcomes(op.in, op.out, c)); break;
      case EditOp::Kind::insert: post.per_op.push_back(insert_outcomes(op.out, c)); break;
      case EditOp::Kind::remove: post.per_op.push_back(delete_outcomes(op.in, c)); break;
    }
  }
  return post;
}

// ---------------------------------------------------------------------------
// Sampling and scoring x_{t-1}.

namespace detail {

/// Walks a canonical summary, emitting x_{t-1} and a_{0->t-1} through
/// caller-supplied choices. `loops()` returns the length of a run of
/// vanished DEL insertions; `pick(outcomes)` selects an explanation.
template <typename Loops, typename Pick>
std::pair<Seq, EditSummary> reconstruct(const EditSummary& a, const StepContext& c, Loops&& loops,
                                        Pick&& pick) {
  const Token DEL = c.vocab->del();
  Seq xp;
  EditSummary ap;
  auto run = [&] {
    const int n = loops();
    for (int i = 0; i < n; ++i) {
      xp.push_back(DEL);
      ap.push_back(EditOp::ins(DEL));
    }
  };
  bool inserting = true;
  auto leave_insert_phase = [&] {
    if (inserting) run();
    inserting = false;
  };
  for (const auto& op : a) {
    switch (op.kind) {
      case EditOp::Kind::insert: {
        if (!inserting) throw Error(errc::invalid_argument, "summary is not canonical");
        if (op.out == c.vocab->ins()) break;
        const Outcome& o = pick(insert_outcomes(op.out, c));
        run();
        xp.push_back(o.y);
        ap.push_back(EditOp::ins(o.y));
        break;
      }
      case EditOp::Kind::remove: {
        leave_insert_phase();
        const Outcome& o = pick(delete_outcomes(op.in, c));
        if (o.kind == Explanation::silent_delete) {
          ap.push_back(EditOp::del(op.in));
        } else {
          xp.push_back(DEL);
          ap.push_back(EditOp::rep(op.in, DEL));
          run();
        }
        break;
      }
      case EditOp::Kind::replace: {
        leave_insert_phase();
        const Outcome& o = pick(replace_outcomes(op.in, op.out, c));
        if (o.kind == Explanation::copy) {
          xp.push_back(o.y);
          ap.push_back(EditOp::rep(op.in, o.y));
        } else {
          xp.push_back(DEL);
          ap.push_back(EditOp::rep(op.in, DEL));
          run();
          xp.push_back(o.y);
          ap.push_back(EditOp::ins(o.y));
        }
        inserting = true;
        break;
      }
    }
  }
  leave_insert_phase();
  return {std::move(xp), canonicalize_summary(ap)};
}

}  // namespace detail

/// Draws (x_{t-1}, a_{0->t-1}) from q(. | x_t, x_0, a_{0->t}).
inline std::pair<Seq, EditSummary> sample_posterior_step(const Seq& x0, const Seq& xt,
                                                         const EditSummary& a, const StepContext& c,
                                                         Rng& rng) {
  if (consumed(a) != x0 || emitted(a) != xt)
    throw Error(errc::projection_mismatch, "summary inconsistent with (x0, x_t)");
  const double rho = c.rho();
  std::vector<Outcome> keep;
  auto pick = [&](std::vector<Outcome> outs) -> const Outcome& {
    std::vector<double> w;
    for (const auto& o : outs) w.push_back(o.prob);
    const int i = sample_categorical(w, rng);
    keep.assign(1, outs[static_cast<std::size_t>(i)]);
    return keep.front();
  };
  return detail::reconstruct(canonicalize_summary(a), c, [&] { return sample_geometric(rho, rng); },
                             pick);
}

/// log q(x_{t-1} | x_t, x_0, a_{0->t}). Each DEL run is scored with
/// del_count_distribution, so runs past its support score -inf.
inline double posterior_logprob(const Seq& x_prev, const Seq& x0, const Seq& xt,
                                const EditSummary& a_in, const StepContext& c,
                                int n_max = default_count_cap) {
  if (consumed(a_in) != x0 || emitted(a_in) != xt)
    throw Error(errc::projection_mismatch, "summary inconsistent with (x0, x_t)");
  const EditSummary a = canonicalize_summary(a_in);
  const Token DEL = c.vocab->del();
  const double rho = c.rho();
  std::size_t pos = 0;
  auto take_run = [&] {
    int m = 0;
    while (pos < x_prev.size() && x_prev[pos] == DEL) ++m, ++pos;
    return m;
  };
  std::vector<double> gap_explicit;
  double lp = 0.0;
  for (const auto& op : a) {
    if (op.kind == EditOp::Kind::remove) {
      gap_explicit.push_back(explicit_delete_prob(op.in, c));
      continue;
    }
    if (op.kind == EditOp::Kind::insert && op.out == c.vocab->ins()) continue;
    const int m = take_run();
    if (pos == x_prev.size()) return neg_inf;
    const Token y = x_prev[pos++];
    if (op.kind == EditOp::Kind::insert) {
      double py = 0.0;
      for (const auto& o : insert_outcomes(op.out, c))
        if (o.y == y) py += o.prob;
      lp += safe_log(py) + del_count_distribution({}, rho, n_max).log_prob(m);
    } else {
      double p_copy = 0.0, p_pair = 0.0;
      for (const auto& o : replace_outcomes(op.in, op.out, c)) {
        if (o.y != y) continue;
        (o.kind == Explanation::copy ? p_copy : p_pair) += o.prob;
      }
      double p = p_copy * del_count_distribution(gap_explicit, rho, n_max).prob(m);
      if (p_pair > 0.0) {
        auto with_pair = gap_explicit;
        with_pair.push_back(1.0);
        p += p_pair * del_count_distribution(with_pair, rho, n_max).prob(m);
      }
      lp += safe_log(p);
      gap_explicit.clear();
    }
    if (lp == neg_inf) return neg_inf;
  }
  const int m = take_run();
  if (pos != x_prev.size()) return neg_inf;
  return lp + del_count_distribution(gap_explicit, rho, n_max).log_prob(m);
}

/// Posterior support with every vanished-DEL run capped at `max_loops`,
/// aggregated by x_{t-1}. Returns the captured mass alongside.
inline std::map<Seq, double> enumerate_posterior(const Seq& x0, const Seq& xt, const EditSummary& a,
                                                 const StepContext& c, int max_loops,
                                                 double* captured = nullptr) {
  if (consumed(a) != x0 || emitted(a) != xt)
    throw Error(errc::projection_mismatch, "summary inconsistent with (x0, x_t)");
  const EditSummary ca = canonicalize_summary(a);
  const double rho = c.rho();
  // Depth-first over the sequence of random choices made by reconstruct.
  std::vector<int> path;  // choice index per decision
  std::map<Seq, double> out;
  double total = 0.0;
  for (;;) {
    std::size_t depth = 0;
    double prob = 1.0;
    std::vector<int> arity;
    std::vector<Outcome> keep;
    auto choose = [&](int n) {
      if (depth == path.size()) path.push_back(0);
      arity.push_back(n);
      return path[depth++];
    };
    auto loops = [&] {
      const int n = rho > 0.0 ? max_loops + 1 : 1;
      const int k = choose(n);
      prob *= std::pow(rho, k) * (1.0 - rho);
      return k;
    };
    auto pick = [&](std::vector<Outcome> outs) -> const Outcome& {
      const int k = choose(static_cast<int>(outs.size()));
      keep.assign(1, outs[static_cast<std::size_t>(k)]);
      prob *= keep.front().prob;
      return keep.front();
    };
    auto [xp, ap] = detail::reconstruct(ca, c, loops, pick);
    out[xp] += prob;
    total += prob;
    // Advance the odometer.
    path.resize(depth);
    int i = static_cast<int>(depth) - 1;
    while (i >= 0 && path[static_cast<std::size_t>(i)] + 1 == arity[static_cast<std::size_t>(i)]) --i;
    if (i < 0) break;
    ++path[static_cast<std::size_t>(i)];
    path.resize(static_cast<std::size_t>(i) + 1);
  }
  if (captured) *captured = total;
  return out;
}

/// Single-sample estimate of L_{t-1}: -log p(x_{t-1}|x_t) + log q(x_t|x_{t-1})
/// with x_{t-1} drawn from the posterior.
template <typename ReverseLogProb>
double loss_term(const Seq& x0, const Seq& xt, const EditSummary& a, const StepContext& c,
                 ReverseLogProb&& log_p, Rng& rng) {
  const auto [xp, ap] = sample_posterior_step(x0, xt, a, c, rng);
  return -log_p(xp) + single_step_likelihood(xp, xt, *c.step, *c.vocab);
}

/// Expectation of loss_term over the posterior support (test scale only).
template <typename ReverseLogProb>
double loss_term_exact(const Seq& x0, const Seq& xt, const EditSummary& a, const StepContext& c,
                       ReverseLogProb&& log_p, int max_loops) {
  double captured = 0.0;
  const auto support = enumerate_posterior(x0, xt, a, c, max_loops, &captured);
  double acc = 0.0;
  for (const auto& [xp, p] : support)
    acc += p * (-log_p(xp) + single_step_likelihood(xp, xt, *c.step, *c.vocab));
  return acc / captured;
}

}  // namespace editdiff
