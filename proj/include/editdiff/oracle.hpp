#pragma once

// Brute-force references for the closed-form code. Only the plain data
// types (Vocabulary, Seq, EditOp, StepParams) are shared with the rest of
// the library; every probability here is a product of per-step sampling
// factors, accumulated path by path.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <tuple>
#include <vector>

#include "editdiff/core_seq.hpp"
#include "editdiff/forward_step.hpp"

namespace editdiff::oracle {

struct Truncation {
  int max_inserts_per_gap = 3;
  double prob_floor = 0.0;  // branches below this are dropped into the tail
  std::uint64_t max_paths = 10'000'000;
  // When set, only paths ending in this x_t are kept; the rest is
  // reported as filtered mass rather than tail.
  const Seq* final_target = nullptr;
};

/// How one op of a_{0->t} came about, relative to time t-1.
enum class Label { copy, pair, step_insert, carried_insert, silent_delete, explicit_delete };

struct LabeledOp {
  EditOp op;
  Label label;
  Token y = -1;  // value at t-1 where meaningful
};

struct Path {
  std::vector<Seq> xs;            // x_0 .. x_t
  std::vector<LabeledOp> summary;  // a_{0->t}, inserts before deletes per gap
  double prob = 0.0;
};

struct PathEnumeration {
  std::vector<Path> paths;
  double total = 0.0;
  double filtered = 0.0;  // mass of paths excluded by the target
  double tail = 0.0;      // 1 - total - filtered
};

namespace detail {

// A token of x_s with its lineage: owner >= 0 is the x_0 index it replaces,
// owner == -1 marks a descendant of an insertion.
struct Item {
  bool alive = true;
  Token value = -1;
  int owner = -1;
  Label label = Label::copy;
  Token y = -1;
};

struct State {
  Seq x;                    // x_s
  std::vector<Item> items;  // summary order; alive items correspond to x in order
};

inline State initial_state(const Seq& x0) {
  State s;
  s.x = x0;
  for (int i = 0; i < static_cast<int>(x0.size()); ++i) s.items.push_back({true, x0[i], i});
  return s;
}

// Advances the lineage bookkeeping by one step given x_s -> x_{s+1}, where
// `image[k]` is the new value of the k-th non-DEL token of x_s and
// `ins_before[k]` / `ins_end` count fresh INS markers.
inline State advance(const State& st, const std::vector<Token>& image, const std::vector<int>& ins_before,
                     int ins_end, const Vocabulary& v) {
  State nx;
  const Token DEL = v.del();
  std::vector<Item> out;
  int pending = -1;
  std::size_t k = 0;
  auto flush = [&] {
    if (pending >= 0) out.push_back({false, -1, pending, Label::explicit_delete, DEL});
    pending = -1;
  };
  auto fresh = [&](int n) {
    for (int i = 0; i < n; ++i) out.push_back({true, v.ins(), -1, Label::step_insert, -1});
  };
  for (const auto& it : st.items) {
    if (!it.alive) {
      flush();
      Item d = it;
      d.label = Label::silent_delete;
      d.y = -1;
      out.push_back(d);
      continue;
    }
    if (it.value == DEL) {
      if (it.owner >= 0) {
        flush();
        pending = it.owner;
      }
      continue;
    }
    fresh(ins_before[k]);
    const Token z = image[k++];
    if (it.owner >= 0) {
      flush();
      out.push_back({true, z, it.owner, Label::copy, it.value});
    } else if (pending >= 0) {
      out.push_back({true, z, pending, Label::pair, it.value});
      pending = -1;
    } else {
      out.push_back({true, z, -1, Label::carried_insert, it.value});
    }
  }
  flush();
  fresh(ins_end);
  nx.items = std::move(out);
  for (const auto& it : nx.items)
    if (it.alive) nx.x.push_back(it.value);
  return nx;
}

inline std::vector<LabeledOp> summary_of(const State& st, const Seq& x0) {
  // Emit in lineage order, then move inserts ahead of deletes within gaps.
  std::vector<LabeledOp> raw, out, dels;
  for (const auto& it : st.items) {
    EditOp op;
    if (!it.alive) op = EditOp::del(x0[static_cast<std::size_t>(it.owner)]);
    else if (it.owner >= 0) op = EditOp::rep(x0[static_cast<std::size_t>(it.owner)], it.value);
    else op = EditOp::ins(it.value);
    raw.push_back({op, it.label, it.y});
  }
  for (const auto& o : raw) {
    if (o.op.kind == EditOp::Kind::insert) {
      out.push_back(o);
    } else if (o.op.kind == EditOp::Kind::remove) {
      dels.push_back(o);
    } else {
      out.insert(out.end(), dels.begin(), dels.end());
      dels.clear();
      out.push_back(o);
    }
  }
  out.insert(out.end(), dels.begin(), dels.end());
  return out;
}

}  // namespace detail

/// Every forward path x_0 -> ... -> x_t under `steps`, with per-path
/// probability equal to the product of sampling factors.
inline PathEnumeration enumerate_forward(const Seq& x0, const std::vector<StepParams>& steps,
                                         const Vocabulary& v, const Truncation& tr) {
  PathEnumeration res;
  const int K = v.latent_size();
  const Token DEL = v.del(), INS = v.ins();
  const Seq* target = tr.final_target;
  double filtered = 0.0;

  struct Frame {
    detail::State st;
    std::vector<Seq> xs;
    double prob;
  };
  std::function<void(const Frame&, std::size_t)> run_step;

  run_step = [&](const Frame& f, std::size_t s) {
    if (s == steps.size()) {
      if (res.paths.size() >= tr.max_paths) throw Error(errc::invalid_argument, "path budget exceeded");
      res.paths.push_back({f.xs, detail::summary_of(f.st, x0), f.prob});
      return;
    }
    const bool last = s + 1 == steps.size();
    const StepParams& p = steps[s];
    Seq survivors;
    for (Token y : f.st.x)
      if (y != DEL) survivors.push_back(y);
    const std::size_t m = survivors.size();
    // Every survivor of the next-to-last step is visible at the end.
    if (target && last && m > target->size()) {
      filtered += f.prob;
      return;
    }
    std::vector<Token> image(m);
    std::vector<int> ins_before(m);
    // Gap g precedes survivor g; gap m is the tail. `j` counts emitted tokens.
    std::function<void(std::size_t, std::size_t, double)> gap;
    gap = [&](std::size_t g, std::size_t j, double prob) {
      double stay = 1.0;  // alpha^n
      for (int n = 0; n <= tr.max_inserts_per_gap; ++n) {
        const double pn = prob * stay * (1.0 - p.alpha);
        stay *= p.alpha;
        if (pn <= 0.0) break;
        if (target && last && n > 0) {
          const std::size_t k = j + static_cast<std::size_t>(n) - 1;
          if (k >= target->size() || (*target)[k] != INS) {
            filtered += prob * stay / p.alpha;  // this count and every larger one
            stay = 0.0;
            break;
          }
        }
        if (pn < tr.prob_floor) continue;
        const std::size_t jn = j + static_cast<std::size_t>(n);
        if (g == m) {
          if (target && last && jn != target->size()) {
            filtered += pn;
            continue;
          }
          Frame nf;
          nf.st = detail::advance(f.st, image, ins_before, n, v);
          nf.xs = f.xs;
          nf.xs.push_back(nf.st.x);
          nf.prob = pn;
          run_step(nf, s + 1);
          continue;
        }
        ins_before[g] = n;
        for (int z = 0; z < K; ++z) {
          const double pz = pn * p.Q(survivors[g], z);
          if (pz <= 0.0) continue;
          if (target && last && (jn >= target->size() || (*target)[jn] != z)) {
            filtered += pz;
            continue;
          }
          if (pz < tr.prob_floor) continue;
          image[g] = z;
          gap(g + 1, jn + 1, pz);
        }
      }
    };
    gap(0, 0, f.prob);
  };

  Frame root{detail::initial_state(x0), {x0}, 1.0};
  run_step(root, 0);
  for (const auto& pth : res.paths) res.total += pth.prob;
  res.filtered = filtered;
  res.tail = std::max(0.0, 1.0 - res.total - filtered);
  return res;
}

inline Seq emitted_of(const std::vector<LabeledOp>& a) {
  Seq s;
  for (const auto& o : a)
    if (o.op.emits()) s.push_back(o.op.out);
  return s;
}

inline EditSummary ops_of(const std::vector<LabeledOp>& a) {
  EditSummary s;
  for (const auto& o : a) s.push_back(o.op);
  return s;
}

/// Aggregated mass per (x_t, a_{0->t}).
inline std::map<std::pair<Seq, std::vector<std::tuple<int, Token, Token>>>, double> aggregate_by_summary(
    const PathEnumeration& e) {
  std::map<std::pair<Seq, std::vector<std::tuple<int, Token, Token>>>, double> out;
  for (const auto& p : e.paths) {
    std::vector<std::tuple<int, Token, Token>> key;
    for (const auto& o : p.summary) key.emplace_back(static_cast<int>(o.op.kind), o.op.in, o.op.out);
    out[{p.xs.back(), key}] += p.prob;
  }
  return out;
}

struct BrutePosterior {
  std::map<Seq, double> x_prev;  // normalized
  // Per op of a: normalized mass per (label, y).
  std::vector<std::map<std::pair<Label, Token>, double>> per_op;
  double evidence = 0.0;  // enumerated mass of (x_t, a)
};

/// Conditional over x_{t-1} given (x_t, a_{0->t}), with t = steps.size().
inline BrutePosterior brute_posterior(const Seq& x0, const Seq& xt, const EditSummary& a,
                                      const std::vector<StepParams>& steps, const Vocabulary& v,
                                      const Truncation& tr) {
  Truncation filtered = tr;
  filtered.final_target = &xt;
  const auto e = enumerate_forward(x0, steps, v, filtered);
  BrutePosterior bp;
  bp.per_op.resize(a.size());
  for (const auto& p : e.paths) {
    if (p.xs.back() != xt || ops_of(p.summary) != a) continue;
    bp.evidence += p.prob;
    bp.x_prev[p.xs[p.xs.size() - 2]] += p.prob;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto& o = p.summary[i];
      bp.per_op[i][{o.label, o.y}] += p.prob;
    }
  }
  if (bp.evidence > 0.0) {
    for (auto& [k, w] : bp.x_prev) w /= bp.evidence;
    for (auto& m : bp.per_op)
      for (auto& [k, w] : m) w /= bp.evidence;
  }
  return bp;
}

/// Every latent-level sequence of length <= max_len over data, INS, DEL.
inline std::vector<Seq> all_latent_sequences(const Vocabulary& v, int max_len) {
  std::vector<Seq> out{{}};
  std::size_t begin = 0;
  for (int len = 1; len <= max_len; ++len) {
    const std::size_t end = out.size();
    for (std::size_t i = begin; i < end; ++i)
      for (int tok = 0; tok < v.latent_size(); ++tok) {
        Seq s = out[i];
        s.push_back(tok);
        out.push_back(std::move(s));
      }
    begin = end;
  }
  return out;
}

struct BruteNll {
  double nll = 0.0;
  double missing_mass = 0.0;  // mass of x_1 outside the enumerated set
};

/// -log p(x_0) under a reverse chain, summing over every latent trajectory
/// whose sequences have length <= max_len. `log_p(x_prev, x_t, t)` is the
/// reverse step; `log_len(n)` the log-probability of |x_T| = n, with x_T all DEL.
template <typename LogP, typename LogLen>
BruteNll brute_nll(LogP&& log_p, LogLen&& log_len, int T, const Seq& x0, const Vocabulary& v, int max_len) {
  const auto all = all_latent_sequences(v, max_len);
  std::vector<std::pair<Seq, double>> level;  // (x_t, p(x_t))
  for (int n = 0; n <= max_len; ++n) {
    const double p = std::exp(log_len(n));
    if (p > 0.0) level.emplace_back(Seq(static_cast<std::size_t>(n), v.del()), p);
  }
  for (int t = T; t >= 2; --t) {
    std::vector<std::pair<Seq, double>> next;
    for (const auto& cand : all) {
      double acc = 0.0;
      for (const auto& [x, px] : level) {
        const double lp = log_p(cand, x, t);
        if (lp > -std::numeric_limits<double>::infinity()) acc += px * std::exp(lp);
      }
      if (acc > 0.0) next.emplace_back(cand, acc);
    }
    level = std::move(next);
  }
  BruteNll r;
  double p0 = 0.0, mass1 = 0.0;
  for (const auto& [x, px] : level) {
    mass1 += px;
    const double lp = log_p(x0, x, 1);
    if (lp > -std::numeric_limits<double>::infinity()) p0 += px * std::exp(lp);
  }
  r.nll = -std::log(p0);
  r.missing_mass = std::max(0.0, 1.0 - mass1);
  return r;
}

}  // namespace editdiff::oracle
