#pragma once

// Oracle-equivalence suites shared by the `verify` command and the
// acceptance binary. Each suite returns its worst observed error next to
// the tolerance it was held to.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "editdiff/denoiser.hpp"
#include "editdiff/oracle.hpp"
#include "editdiff/pfst_cumulative.hpp"
#include "editdiff/posterior.hpp"
#include "editdiff/training.hpp"

namespace editdiff::verify {

struct Options {
  std::uint64_t seed = 1;
  bool perturb = false;       // skew the pair term of the cumulative recursion
  double perturbation = -0.5;  // relative change of that term
  int posterior_draws = 100000;
  int mc_draws = 100000;
  int gradient_inputs = 20;
  double prob_floor = 1e-8;   // forward enumeration drops lighter branches into its tail
};

struct SuiteReport {
  std::string name;
  bool passed = true;
  long checks = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  double tail_bound = 0.0;  // largest enumeration tail the suite relied on
  double seconds = 0.0;
  std::string note;
};

namespace detail {

class Timer {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

inline std::vector<Seq> all_data_sequences(int d, int max_len) {
  std::vector<Seq> out{{}};
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (static_cast<int>(out[i].size()) == max_len) continue;
    for (Token x = 0; x < d; ++x) {
      Seq s = out[i];
      s.push_back(x);
      out.push_back(std::move(s));
    }
  }
  return out;
}

/// compose_step with the loop constant of the pair term scaled by 1 + eps.
inline CumulativeParams skewed_compose(const CumulativeParams& c, const StepParams& p, const Vocabulary& v,
                                       double eps) {
  CumulativeParams out = compose_step(c, p, v);
  const double loop = 1.0 / (1.0 - c.alpha_bar[v.del()]);
  const Vector inserted = p.Q.transpose() * c.alpha_bar;
  out.Q_bar += eps * loop * c.Q_bar.col(v.del()) * inserted.transpose();
  return out;
}

inline StepParams random_step(const Vocabulary& v, Rng& rng) {
  const int K = v.latent_size();
  StepParams p;
  p.alpha = 0.5 * uniform01(rng);
  p.Q = Matrix::Zero(K, K);
  for (int x = 0; x <= v.ins(); ++x) {
    double total = 0;
    for (int y = 0; y < K; ++y) {
      if (y == v.ins()) continue;
      p.Q(x, y) = uniform01(rng) + (x == y ? 2.0 : 0.0);
      total += p.Q(x, y);
    }
    p.Q.row(x) /= total;
  }
  return p;
}

inline Explanation as_explanation(oracle::Label l) {
  switch (l) {
    case oracle::Label::copy: return Explanation::copy;
    case oracle::Label::pair: return Explanation::pair;
    case oracle::Label::step_insert: return Explanation::step_insert;
    case oracle::Label::carried_insert: return Explanation::carried_insert;
    case oracle::Label::silent_delete: return Explanation::silent_delete;
    case oracle::Label::explicit_delete: return Explanation::explicit_delete;
  }
  return Explanation::copy;
}

/// Count distribution by subset enumeration and repeated geometric
/// convolution, renormalized over the same support as the library.
inline std::vector<double> convolution_counts(const std::vector<double>& probs, double rho, int n_max) {
  const int n = static_cast<int>(probs.size());
  const int support = n + n_max + 1;
  std::vector<double> geo(static_cast<std::size_t>(support));
  for (int j = 0; j < support; ++j) geo[static_cast<std::size_t>(j)] = std::pow(rho, j) * (1.0 - rho);
  std::vector<double> out(static_cast<std::size_t>(support), 0.0);
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    double w = 1.0;
    int k = 0;
    for (int i = 0; i < n; ++i) {
      const bool on = (mask >> i) & 1u;
      w *= on ? probs[static_cast<std::size_t>(i)] : 1.0 - probs[static_cast<std::size_t>(i)];
      k += on;
    }
    if (w == 0.0) continue;
    std::vector<double> acc(static_cast<std::size_t>(support), 0.0);
    acc[0] = 1.0;
    for (int g = 0; g <= k; ++g) {
      std::vector<double> next(static_cast<std::size_t>(support), 0.0);
      for (int a = 0; a < support; ++a)
        for (int b = 0; a + b < support; ++b)
          next[static_cast<std::size_t>(a + b)] += acc[static_cast<std::size_t>(a)] * geo[static_cast<std::size_t>(b)];
      acc = std::move(next);
    }
    for (int m = k; m < support; ++m) out[static_cast<std::size_t>(m)] += w * acc[static_cast<std::size_t>(m - k)];
  }
  double total = 0.0;
  for (double p : out) total += p;
  for (double& p : out) p /= total;
  return out;
}

inline Schedule uniform_schedule(const Vocabulary& v, int T, double alpha, double resample, double remove) {
  Schedule s;
  s.vocab = v;
  for (int t = 1; t < T; ++t) s.steps.push_back(uniform_step(v, alpha, resample, remove));
  s.steps.push_back(terminal_step(v));
  return s;
}

inline nn::Params<double> random_params(const nn::NetConfig& c, std::uint64_t seed, double scale) {
  Rng rng(seed);
  auto p = nn::init_params<double>(c, rng);
  p.visit([&](const std::string&, nn::Mat<double>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += scale * 0.3 * nn::normal01(rng);
  });
  return p;
}

inline Seq forward_draw(const ForwardProcess& fp, int t, int max_len, Rng& rng) {
  const Vocabulary& v = fp.vocab();
  for (;;) {
    Seq x0(1 + uniform_int(rng, 4));
    for (auto& x : x0) x = static_cast<Token>(uniform_int(rng, static_cast<std::uint64_t>(v.data_size)));
    Seq xt = sample_from_x0(x0, fp.cumulative(t), v, rng).first;
    if (static_cast<int>(xt.size()) <= max_len) return xt;
  }
}

inline void note_error(SuiteReport& r, double err) {
  ++r.checks;
  if (!(err <= r.max_error)) r.max_error = std::isnan(err) ? err : std::max(r.max_error, err);
}

}  // namespace detail

/// Enumerated forward paths against the closed-form summary likelihood:
/// binary data, two steps, every x0 of length <= 2, three inserts per gap.
inline SuiteReport forward_marginal(const Options& o = {}) {
  detail::Timer clock;
  SuiteReport r{"forward_marginal"};
  r.tolerance = 1e-9;
  const Vocabulary v(2);
  const std::vector<std::vector<StepParams>> schedules{
      {uniform_step(v, 0.2, 0.3, 0.2), uniform_step(v, 0.2, 0.3, 0.2)},
      {uniform_step(v, 0.1, 0.2, 0.3), uniform_step(v, 0.2, 0.4, 0.1)},
  };
  oracle::Truncation tr;
  tr.max_inserts_per_gap = 3;
  tr.prob_floor = o.prob_floor;
  for (const auto& steps : schedules) {
    const CumulativeParams c1 = compose_step(identity_params(v), steps[0], v);
    const CumulativeParams c2 = o.perturb ? detail::skewed_compose(c1, steps[1], v, o.perturbation)
                                          : compose_step(c1, steps[1], v);
    for (const Seq& x0 : detail::all_data_sequences(2, 2)) {
      const auto e = oracle::enumerate_forward(x0, steps, v, tr);
      r.tail_bound = std::max(r.tail_bound, e.tail);
      std::map<std::pair<Seq, EditSummary>, double> agg;
      for (const auto& path : e.paths) agg[{path.xs.back(), oracle::ops_of(path.summary)}] += path.prob;
      for (const auto& [key, mass] : agg) {
        const double q = std::exp(summary_logprob(x0, key.second, c2));
        // Enumerated mass is a lower bound that may trail q by at most the tail.
        detail::note_error(r, std::max({0.0, mass - q, q - mass - e.tail}));
      }
    }
  }
  if (!(r.max_error <= r.tolerance)) r.passed = false;
  r.note = "max_error is the excess over the enumeration tail";
  r.seconds = clock.seconds();
  return r;
}

/// Closed-form posterior against the filtered enumeration, both per edit
/// and as sampled x_{t-1} frequencies.
inline SuiteReport posterior_exactness(const Options& o = {}) {
  detail::Timer clock;
  SuiteReport r{"posterior_exactness"};
  r.tolerance = 1e-6;
  const Vocabulary v(2);
  struct Instance {
    Seq x0;
    std::vector<StepParams> steps;
    bool exact;  // analytic comparison at 1e-6 (small enough tail)
  };
  const std::vector<Instance> instances{
      {{0, 1}, {uniform_step(v, 0.02, 0.3, 0.2), uniform_step(v, 0.02, 0.3, 0.2)}, true},
      {{1}, {uniform_step(v, 0.02, 0.2, 0.3), uniform_step(v, 0.02, 0.4, 0.3)}, true},
      {{0, 1}, {uniform_step(v, 0.2, 0.3, 0.2), uniform_step(v, 0.2, 0.3, 0.2)}, false},
  };
  oracle::Truncation tr;
  tr.max_inserts_per_gap = 3;
  Rng rng = derive_rng(o.seed, 0x706f7374);
  double worst_tv = 0.0;
  for (const auto& inst : instances) {
    ForwardProcess fp(Schedule{v, inst.steps});
    const int t = fp.T();
    const auto c = step_context(fp, t);
    std::set<std::pair<Seq, EditSummary>> seen;
    for (int i = 0; i < 200 && seen.size() < 6; ++i) {
      auto [xt, a] = sample_from_x0(inst.x0, fp.cumulative(t), v, rng);
      if (!seen.insert({xt, a}).second) continue;
      const auto bp = oracle::brute_posterior(inst.x0, xt, a, inst.steps, v, tr);
      if (!(bp.evidence > 0.0)) {
        r.passed = false;
        continue;
      }
      if (inst.exact) {
        const auto post = edit_posterior(a, c);
        for (std::size_t k = 0; k < a.size(); ++k) {
          std::map<std::pair<Explanation, Token>, double> closed, brute;
          for (const auto& out : post.per_op[k]) {
            const bool no_y = out.kind == Explanation::silent_delete || out.kind == Explanation::step_insert;
            closed[{out.kind, no_y ? -1 : out.y}] += out.prob;
          }
          for (const auto& [key, w] : bp.per_op[k]) brute[{detail::as_explanation(key.first), key.second}] += w;
          for (const auto& [key, w] : brute) closed.try_emplace(key, 0.0);
          for (const auto& [key, w] : closed) {
            const double err = std::fabs(w - brute[key]);
            detail::note_error(r, err);
            if (!(err <= r.tolerance)) r.passed = false;
          }
        }
      }
      std::map<Seq, double> freq;
      for (int d = 0; d < o.posterior_draws; ++d) freq[sample_posterior_step(inst.x0, xt, a, c, rng).first] += 1.0;
      double tv = 0.0;
      for (const auto& [xp, w] : bp.x_prev) tv += std::fabs(w - freq[xp] / o.posterior_draws);
      for (const auto& [xp, n] : freq)
        if (!bp.x_prev.count(xp)) tv += n / o.posterior_draws;
      worst_tv = std::max(worst_tv, tv / 2);
      if (!(tv / 2 <= 0.02)) r.passed = false;
    }
  }
  r.note = "worst total variation " + std::to_string(worst_tv) + " (bound 0.02)";
  r.seconds = clock.seconds();
  return r;
}

/// Row sums, insertion mass, and structural zeros on random schedules.
inline SuiteReport conservation(const Options& o = {}) {
  detail::Timer clock;
  SuiteReport r{"conservation"};
  r.tolerance = 1e-10;
  Rng rng = derive_rng(o.seed, 0x636f6e73);
  for (int s = 0; s < 100; ++s) {
    const Vocabulary v(2 + static_cast<int>(uniform_int(rng, 4)));
    const int T = 2 + static_cast<int>(uniform_int(rng, 9));
    Schedule sched;
    sched.vocab = v;
    for (int t = 1; t <= T; ++t) sched.steps.push_back(detail::random_step(v, rng));
    ForwardProcess fp(sched);
    for (int t = 1; t <= T; ++t) {
      const auto& c = fp.cumulative(t);
      for (int x = 0; x < v.data_size; ++x) detail::note_error(r, std::fabs(c.beta_bar[x] + c.Q_bar.row(x).sum() - 1.0));
      if (!(c.alpha_bar.sum() < 1.0)) r.passed = false;
      if (c.Q_bar.col(v.ins()).cwiseAbs().maxCoeff() != 0.0) r.passed = false;
      if (c.Q_bar.row(v.del()).cwiseAbs().maxCoeff() != 0.0) r.passed = false;
    }
  }
  if (!(r.max_error <= r.tolerance)) r.passed = false;
  r.seconds = clock.seconds();
  return r;
}

/// Closed-form count distribution against subset enumeration and repeated
/// convolution of geometrics.
inline SuiteReport count_distribution(const Options& = {}) {
  detail::Timer clock;
  SuiteReport r{"count_distribution"};
  r.tolerance = 1e-12;
  const std::vector<std::vector<double>> explicit_sets{
      {}, {0.3}, {1.0}, {0.0}, {0.2, 0.7}, {0.5, 0.5, 0.9}, {0.0, 0.4, 1.0, 0.6}, {0.05, 0.95, 0.35, 0.8, 0.5}};
  const std::vector<double> rates{0.0, 0.01, 0.1, 0.3, 0.5, 0.75, 0.9};
  for (const auto& probs : explicit_sets)
    for (double rho : rates)
      for (int n_max : {4, default_count_cap}) {
        const auto got = del_count_distribution(probs, rho, n_max);
        const auto want = detail::convolution_counts(probs, rho, n_max);
        if (got.pmf.size() != want.size()) r.passed = false;
        for (std::size_t m = 0; m < want.size(); ++m) detail::note_error(r, std::fabs(got.prob(static_cast<int>(m)) - want[m]));
      }
  if (!(r.max_error <= r.tolerance)) r.passed = false;
  r.seconds = clock.seconds();
  return r;
}

/// Monte-Carlo outcome frequencies of one forward step against
/// exp(single_step_likelihood), within three standard errors.
inline SuiteReport single_step(const Options& o = {}) {
  detail::Timer clock;
  SuiteReport r{"single_step"};
  r.tolerance = 3.0;  // in standard errors
  const Vocabulary v(2);
  const std::vector<StepParams> steps{uniform_step(v, 0.2, 0.3, 0.2), uniform_step(v, 0.05, 0.6, 0.1)};
  const std::vector<Seq> prevs{{}, {0}, {0, v.del(), 1}, {1, v.ins(), 1}};
  Rng rng = derive_rng(o.seed, 0x73746570);
  for (const auto& p : steps)
    for (const Seq& prev : prevs) {
      std::map<Seq, int> counts;
      for (int i = 0; i < o.mc_draws; ++i) ++counts[sample_forward_step(prev, p, v, rng).first];
      for (const auto& [x, k] : counts) {
        const double q = std::exp(single_step_likelihood(prev, x, p, v));
        if (q < 1e-3) continue;
        const double se = std::sqrt(q * (1 - q) / o.mc_draws);
        const double z = std::fabs(static_cast<double>(k) / o.mc_draws - q) / se;
        detail::note_error(r, z);
        if (!(z <= r.tolerance)) r.passed = false;
      }
    }
  r.note = "max_error is in standard errors";
  r.seconds = clock.seconds();
  return r;
}

/// Zero insert/delete rates: posterior and reverse step against the plain
/// categorical-diffusion formulas.
inline SuiteReport in_place(const Options& o = {}) {
  detail::Timer clock;
  SuiteReport r{"in_place"};
  r.tolerance = 1e-12;
  {
    const Vocabulary v(4);
    const int T = 4;
    const auto sched = build_arithmetic_schedule(0.0, T, v);
    ForwardProcess fp(sched);
    const int D = v.data_size;
    for (int t = 1; t <= T; ++t) {
      Matrix Qprev = Matrix::Identity(D, D);
      for (int s = 1; s < t; ++s) Qprev = Qprev * sched.at(s).Q.topLeftCorner(D, D);
      const auto c = step_context(fp, t);
      for (int x = 0; x < D; ++x)
        for (int z = 0; z < v.latent_size(); ++z) {
          double total = 0.0;
          for (int y = 0; y < D; ++y) total += Qprev(x, y) * sched.at(t).Q(y, z);
          if (total <= 0.0) continue;
          for (const auto& out : replace_outcomes(x, z, c)) {
            if (out.kind != Explanation::copy) r.passed = false;
            detail::note_error(r, std::fabs(out.prob - Qprev(x, out.y) * sched.at(t).Q(out.y, z) / total));
          }
        }
    }
  }
  {
    const Vocabulary v(5);
    const int T = 5;
    const auto sched = build_arithmetic_schedule(0.0, T, v);
    auto fp = std::make_shared<const ForwardProcess>(sched);
    ReverseTables tabs(*fp, 3);
    const auto p = detail::random_params(make_net_config(v, T, 8, 16, 2, 1, 3), o.seed + 17, 1.0);
    const int D = v.data_size;
    Rng rng = derive_rng(o.seed, 0x696e706c);
    for (int t = 1; t <= T; ++t) {
      Matrix Qprev = Matrix::Identity(D, D);
      for (int s = 1; s < t; ++s) Qprev = Qprev * sched.at(s).Q.topLeftCorner(D, D);
      const Matrix& Qt = sched.at(t).Q;
      Seq xt(6);
      for (auto& z : xt) z = t == T ? v.del() : static_cast<Token>(uniform_int(rng, D));
      const auto out = denoiser_forward(p, xt, t);
      double lp_sum = 0.0;
      Seq xp;
      for (std::size_t i = 0; i < xt.size(); ++i) {
        std::vector<double> w;
        editdiff::detail::softmax_row(out.f_logits, static_cast<Eigen::Index>(i), w);
        std::vector<double> ref(static_cast<std::size_t>(D));
        double total = 0.0;
        for (int y = 0; y < D; ++y) {
          double acc = 0.0;
          for (int x = 0; x < D; ++x) acc += w[static_cast<std::size_t>(x)] * Qprev(x, y);
          ref[static_cast<std::size_t>(y)] = acc * Qt(y, xt[i]);
          total += ref[static_cast<std::size_t>(y)];
        }
        const auto got = reverse_token_distribution(out, xt, i, tabs.at(t));
        for (int y = 0; y < v.latent_size(); ++y) {
          const double want = y < D ? ref[static_cast<std::size_t>(y)] / total : 0.0;
          detail::note_error(r, std::fabs(got[static_cast<std::size_t>(y)] - want));
        }
        const Token y = static_cast<Token>(uniform_int(rng, D));
        xp.push_back(y);
        lp_sum += std::log(ref[static_cast<std::size_t>(y)] / total);
      }
      detail::note_error(r, std::fabs(reverse_step_logprob(out, xt, xp, tabs.at(t)) - lp_sum));
    }
  }
  if (!(r.max_error <= r.tolerance)) r.passed = false;
  r.seconds = clock.seconds();
  return r;
}

/// Backpropagated gradients of the reverse log-probability against central
/// differences over every parameter of a two-block width-32 denoiser.
inline SuiteReport gradient_check(const Options& o = {}) {
  detail::Timer clock;
  SuiteReport r{"gradient_check"};
  r.tolerance = 1e-4;
  const Vocabulary v(3);
  const int T = 3;
  auto fp = std::make_shared<const ForwardProcess>(detail::uniform_schedule(v, T, 0.2, 0.3, 0.2));
  const auto cfg = make_net_config(v, T, 8, 32, 4, 2, 3);
  ReverseTables tabs(*fp, 3);
  Rng rng = derive_rng(o.seed, 0x67726164);
  for (int input = 0; input < o.gradient_inputs; ++input) {
    auto p = detail::random_params(cfg, o.seed * 1000 + static_cast<std::uint64_t>(input), 0.5);
    const int t = 1 + static_cast<int>(uniform_int(rng, T));
    const Seq xt = detail::forward_draw(*fp, t, 7, rng);
    const Seq xp = sample_reverse_step(denoiser_forward(p, xt, t), xt, tabs.at(t), rng);
    auto loss = [&](const nn::Params<double>& q) {
      return reverse_step_logprob(denoiser_forward(q, xt, t), xt, xp, tabs.at(t));
    };
    nn::Cache<double> cache;
    const auto out = denoiser_forward(p, xt, t, &cache);
    Matrix df, dg;
    if (!std::isfinite(reverse_step_logprob(out, xt, xp, tabs.at(t), &df, &dg))) {
      r.passed = false;
      continue;
    }
    auto grad = nn::zeros<double>(cfg);
    nn::backward(p, cache, nn::Mat<double>(df), nn::Mat<double>(dg), grad);
    std::vector<double> analytic, numeric;
    grad.visit([&](const std::string&, const nn::Mat<double>& m) {
      for (Eigen::Index i = 0; i < m.size(); ++i) analytic.push_back(m.data()[i]);
    });
    const double h = 1e-5;
    p.visit([&](const std::string&, nn::Mat<double>& m) {
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double keep = m.data()[i];
        m.data()[i] = keep + h;
        const double up = loss(p);
        m.data()[i] = keep - h;
        const double down = loss(p);
        m.data()[i] = keep;
        numeric.push_back((up - down) / (2 * h));
      }
    });
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nb += numeric[i] * numeric[i];
    }
    detail::note_error(r, std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12}));
  }
  if (!(r.max_error <= r.tolerance)) r.passed = false;
  r.note = "relative error of the full gradient vector";
  r.seconds = clock.seconds();
  return r;
}

/// ELBO against enumerated -log p(x_0) on a one-sequence dataset: the bound
/// holds for random and briefly trained networks, and is tight for the exact
/// reverse model. Enumerated trajectories keep every sequence within a fixed
/// length, so the enumerated likelihood is bracketed by its missing mass.
inline SuiteReport elbo_bound(const Options& o = {}) {
  detail::Timer clock;
  SuiteReport r{"elbo_bound"};
  r.tolerance = 0.0;  // errors below are excesses beyond 3 standard errors
  const Vocabulary v(2);
  const int T = 2, L = 7, n_eval = 4000;
  auto fp = std::make_shared<const ForwardProcess>(detail::uniform_schedule(v, T, 0.1, 0.3, 0.1));
  const Seq x0{0, 1};
  const std::vector<Seq> eval_set(static_cast<std::size_t>(n_eval), x0);
  const auto cfg = make_net_config(v, T, 8, 16, 2, 1, 3);

  auto brute = [&](const ReverseModel& m) {
    std::map<std::pair<Seq, int>, std::function<double(const Seq&)>> conds;
    auto log_p = [&](const Seq& prev, const Seq& xt, int t) {
      auto it = conds.find({xt, t});
      if (it == conds.end()) it = conds.emplace(std::pair{xt, t}, m.conditional(xt, t)).first;
      return it->second(prev);
    };
    return oracle::brute_nll(log_p, [&](int n) { return m.lengths().log_prob(n); }, T, x0, v, L);
  };
  std::ostringstream note;
  note << std::setprecision(4);
  auto lower_bound_check = [&](const std::string& label, const ReverseModel& m) {
    const auto b = brute(m);
    // p(x_0) <= enumerated part + mass of x_1 outside the enumeration.
    const double nll_floor = -std::log(std::exp(-b.nll) + b.missing_mass);
    const auto e = evaluate_elbo(m, eval_set, o.seed);
    detail::note_error(r, std::max(0.0, nll_floor - (e.mean + 3 * e.se)));
    note << label << " elbo " << e.mean << "+-" << e.se << " nll in [" << nll_floor << ", " << b.nll << "]; ";
    return std::pair{b, e};
  };

  lower_bound_check("random", NetworkModel<double>(fp, detail::random_params(cfg, o.seed + 31, 1.0),
                                                   LengthTable{std::vector<double>(5, 0.2)}));
  {
    Rng init = derive_rng(o.seed, 0x74726e);
    auto p = nn::init_params<double>(cfg, init);
    const Dataset one{"one", v, [x0](Rng&) { return x0; }};
    TrainConfig tc;
    tc.steps = 300;
    tc.batch = 16;
    tc.seed = o.seed;
    tc.adam.warmup_steps = 30;
    tc.adam.total_steps = tc.steps;
    tc.log_every = tc.eval_every = tc.steps;
    tc.eval_examples = 16;
    tc.eval_samples = 0;
    tc.length_table_draws = 2000;
    const auto res = train(p, fp, one, tc);
    lower_bound_check("trained", NetworkModel<double>(fp, p, res.lengths));
  }
  {
    const ExactReverse exact(fp, x0, L);
    const auto [b, e] = lower_bound_check("exact", exact);
    const double trunc = b.missing_mass + std::fabs(std::expm1(-b.nll));
    r.tail_bound = std::max(r.tail_bound, trunc);
    detail::note_error(r, std::max(0.0, std::fabs(e.mean - b.nll) - 3 * e.se - trunc));
    note << "exact enumerated " << b.nll;
  }
  r.checks = 4;
  if (!(r.max_error <= r.tolerance)) r.passed = false;
  r.note = note.str();
  r.seconds = clock.seconds();
  return r;
}

struct Suite {
  std::string name;
  std::function<SuiteReport(const Options&)> run;
};

inline std::vector<Suite> all_suites() {
  return {{"forward_marginal", forward_marginal}, {"posterior_exactness", posterior_exactness},
          {"conservation", conservation},         {"count_distribution", count_distribution},
          {"single_step", single_step},           {"in_place", in_place},
          {"gradient_check", gradient_check},     {"elbo_bound", elbo_bound}};
}

}  // namespace editdiff::verify
