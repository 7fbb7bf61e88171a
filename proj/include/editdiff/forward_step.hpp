#pragma once

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "editdiff/core_seq.hpp"
#include "editdiff/numeric.hpp"

namespace editdiff {

/// One corruption step. Q is latent_size x latent_size over data, INS, DEL.
struct StepParams {
  double alpha = 0.0;
  Matrix Q;
};

inline void validate_step(const StepParams& p, const Vocabulary& v) {
  const int K = v.latent_size();
  if (p.Q.rows() != K || p.Q.cols() != K)
    throw Error(errc::invalid_argument, "transition matrix has wrong shape");
  if (!(p.alpha >= 0.0 && p.alpha < 1.0))
    throw Error(errc::invalid_argument, "alpha must lie in [0,1)");
  if ((p.Q.array() < 0.0).any()) throw Error(errc::invalid_argument, "negative transition");
  for (int r = 0; r < K; ++r) {
    const double s = p.Q.row(r).sum();
    const double want = r == v.del() ? 0.0 : 1.0;
    if (std::fabs(s - want) > 1e-12)
      throw Error(errc::invalid_argument, "row " + std::to_string(r) + " sums to " + std::to_string(s));
  }
  if (p.Q.col(v.ins()).cwiseAbs().maxCoeff() > 0.0)
    throw Error(errc::invalid_argument, "transitions into INS are not allowed");
}

struct Schedule {
  Vocabulary vocab;
  std::vector<StepParams> steps;  // steps[t-1] holds step t
  double rate = std::numeric_limits<double>::quiet_NaN();

  int T() const { return static_cast<int>(steps.size()); }
  const StepParams& at(int t) const { return steps.at(static_cast<std::size_t>(t - 1)); }

  bool is_terminal() const {
    if (steps.empty()) return false;
    const auto& last = steps.back();
    if (last.alpha != 0.0) return false;
    for (int x = 0; x <= vocab.ins(); ++x)
      if (last.Q(x, vocab.del()) != 1.0) return false;
    return true;
  }
};

inline StepParams identity_step(const Vocabulary& v) {
  StepParams p;
  p.Q = Matrix::Identity(v.latent_size(), v.latent_size());
  p.Q(v.del(), v.del()) = 0.0;
  p.Q(v.ins(), v.ins()) = 0.0;
  p.Q.row(v.ins()).head(v.data_size).setConstant(1.0 / v.data_size);
  return p;
}

/// Every data token and INS becomes DEL; nothing is inserted.
inline StepParams terminal_step(const Vocabulary& v) {
  StepParams p;
  p.Q = Matrix::Zero(v.latent_size(), v.latent_size());
  for (int x = 0; x <= v.ins(); ++x) p.Q(x, v.del()) = 1.0;
  return p;
}

/// Data rows keep with `keep`, resample uniformly over data tokens (self
/// included) with `resample`, and become DEL with `remove`. INS rows are
/// uniform over data tokens.
inline StepParams uniform_step(const Vocabulary& v, double alpha, double resample, double remove) {
  const int D = v.data_size;
  StepParams p;
  p.alpha = alpha;
  p.Q = Matrix::Zero(v.latent_size(), v.latent_size());
  const double keep = 1.0 - resample - remove;
  for (int x = 0; x < D; ++x) {
    p.Q.row(x).head(D).setConstant(resample / D);
    p.Q(x, x) += keep;
    p.Q(x, v.del()) = remove;
  }
  p.Q.row(v.ins()).head(D).setConstant(1.0 / D);
  return p;
}

/// Forward sample of one step. The returned alignment consumes x_prev and
/// emits x_next: removed DELs are Del(DEL), survivors are Rep(y,z), fresh
/// markers are Ins(INS), in canonical gap order.
inline std::pair<Seq, EditSummary> sample_forward_step(const Seq& x_prev, const StepParams& p,
                                                       const Vocabulary& v, Rng& rng) {
  Seq next;
  EditSummary align;
  std::vector<EditOp> pending_dels;
  auto gap = [&] {
    const int n = sample_geometric(p.alpha, rng);
    for (int i = 0; i < n; ++i) {
      next.push_back(v.ins());
      align.push_back(EditOp::ins(v.ins()));
    }
    align.insert(align.end(), pending_dels.begin(), pending_dels.end());
    pending_dels.clear();
  };
  for (Token y : x_prev) {
    if (y == v.del()) {
      pending_dels.push_back(EditOp::del(y));
      continue;
    }
    gap();
    const Token z = sample_categorical(p.Q.row(y), rng);
    next.push_back(z);
    align.push_back(EditOp::rep(y, z));
  }
  gap();
  return {std::move(next), std::move(align)};
}

/// log q(x_next | x_prev) via the unique one-step alignment; -inf if none.
inline double single_step_likelihood(const Seq& x_prev, const Seq& x_next, const StepParams& p,
                                     const Vocabulary& v) {
  Seq survivors;
  for (Token y : x_prev)
    if (y != v.del()) survivors.push_back(y);
  const double log_a = safe_log(p.alpha);
  const double log_stop = std::log1p(-p.alpha);
  double lp = 0.0;
  std::size_t k = 0;
  long run = 0;
  auto close_gap = [&] {
    if (run > 0) lp += static_cast<double>(run) * log_a;
    lp += log_stop;
    run = 0;
  };
  for (Token z : x_next) {
    if (z == v.ins()) {
      ++run;
      continue;
    }
    if (k == survivors.size()) return neg_inf;
    close_gap();
    lp += safe_log(p.Q(survivors[k], z));
    ++k;
    if (lp == neg_inf) return neg_inf;
  }
  if (k != survivors.size()) return neg_inf;
  close_gap();
  return lp;
}

/// Writes the unique one-step alignment of (x_prev, x_next) into `out`.
/// Returns false when the pair is structurally incompatible.
inline bool step_alignment(const Seq& x_prev, const Seq& x_next, const Vocabulary& v,
                           EditSummary& out) {
  out.clear();
  std::size_t i = 0;
  std::vector<EditOp> dels;
  auto take_dels = [&] {
    while (i < x_prev.size() && x_prev[i] == v.del()) dels.push_back(EditOp::del(x_prev[i++]));
  };
  for (Token z : x_next) {
    if (z == v.ins()) {
      out.push_back(EditOp::ins(z));
      continue;
    }
    take_dels();
    if (i == x_prev.size()) return false;
    out.insert(out.end(), dels.begin(), dels.end());
    dels.clear();
    out.push_back(EditOp::rep(x_prev[i++], z));
  }
  take_dels();
  if (i != x_prev.size()) return false;
  out.insert(out.end(), dels.begin(), dels.end());
  return true;
}

/// Composes a_{0->t-1} with the one-step alignment of step t into a_{0->t}.
/// A token replaced by DEL at t-1 whose DEL is removed at t fuses with the
/// next surviving insertion into a replacement (deletion-insertion pair);
/// otherwise it becomes a deletion.
inline EditSummary compose_alignment(const EditSummary& a_prev, const EditSummary& step,
                                     const Vocabulary& v) {
  // Per surviving x_{t-1} token: INS markers emitted just before it, and its image.
  std::vector<int> ins_before;
  std::vector<Token> image;
  int run = 0;
  for (const auto& op : step) {
    if (op.kind == EditOp::Kind::insert) {
      ++run;
    } else if (op.kind == EditOp::Kind::replace) {
      ins_before.push_back(run);
      image.push_back(op.out);
      run = 0;
    }
  }
  const int ins_end = run;

  EditSummary out;
  Token pending = -1;
  std::size_t k = 0;
  auto resolve = [&] {
    if (pending >= 0) out.push_back(EditOp::del(pending));
    pending = -1;
  };
  auto next_image = [&] {
    if (k >= image.size())
      throw Error(errc::projection_mismatch, "step alignment shorter than previous summary");
    for (int i = 0; i < ins_before[k]; ++i) out.push_back(EditOp::ins(v.ins()));
    return image[k++];
  };
  for (const auto& op : a_prev) {
    switch (op.kind) {
      case EditOp::Kind::remove:
        resolve();
        out.push_back(op);
        break;
      case EditOp::Kind::replace:
        resolve();
        if (op.out == v.del()) {
          pending = op.in;
        } else {
          const Token z = next_image();
          out.push_back(EditOp::rep(op.in, z));
        }
        break;
      case EditOp::Kind::insert:
        if (op.out == v.del()) break;
        {
          const Token z = next_image();
          if (pending >= 0) {
            out.push_back(EditOp::rep(pending, z));
            pending = -1;
          } else {
            out.push_back(EditOp::ins(z));
          }
        }
        break;
    }
  }
  resolve();
  if (k != image.size())
    throw Error(errc::projection_mismatch, "step alignment longer than previous summary");
  for (int i = 0; i < ins_end; ++i) out.push_back(EditOp::ins(v.ins()));
  return canonicalize_summary(out);
}

inline EditSummary identity_summary(const Seq& x0) {
  EditSummary a;
  for (Token x : x0) a.push_back(EditOp::rep(x, x));
  return a;
}

struct TrajectoryStep {
  Seq x;
  EditSummary step_alignment;  // from x_{t-1} to x_t
};

/// Ancestral sample of x_1..x_T; element t-1 holds x_t.
inline std::vector<TrajectoryStep> sample_trajectory(const Seq& x0, const Schedule& s, Rng& rng) {
  validate_sequence(x0, Level::data, s.vocab);
  std::vector<TrajectoryStep> out;
  Seq x = x0;
  for (int t = 1; t <= s.T(); ++t) {
    auto [next, align] = sample_forward_step(x, s.at(t), s.vocab, rng);
    out.push_back({next, std::move(align)});
    x = std::move(next);
  }
  return out;
}

inline double arithmetic_fraction(int t, int T) {
  const double r = static_cast<double>(t) / (T - 1);
  return 0.1 * r + 0.9 * r * r;
}

/// Fits per-step uniform steps so that after t < T steps the expected
/// inserted fraction and the deleted fraction are both u_t * r and the
/// resampled fraction among survivors is u_t; step T is terminal.
/// The fit runs greedily on the closed-form cumulative state of a
/// symmetric schedule.
inline Schedule build_arithmetic_schedule(double r, int T, const Vocabulary& v) {
  if (!(r >= 0.0 && r < 1.0)) throw Error(errc::invalid_argument, "rate must lie in [0,1)");
  if (T < 2) throw Error(errc::invalid_argument, "T must be >= 2");
  const double D = v.data_size;
  const double cap = 1.0 - 1e-6;
  // Replacement row of a data token: a on itself, b elsewhere, d to DEL; e deleted silently.
  double a = 1, b = 0, d = 0, e = 0;
  // Insertion vector: INS entry alpha_prev, c per data token, g on DEL, s total.
  double alpha_prev = 0, c = 0, g = 0, s = 0;
  Schedule sched;
  sched.vocab = v;
  sched.rate = r;
  for (int t = 1; t < T; ++t) {
    const double u = arithmetic_fraction(t, T);
    const double target = u * r;
    const double S = a + (D - 1) * b;
    const double kappa = (s - g) / (1 - g);
    double alpha = kappa < 1 ? (target - kappa) / (1 - kappa) : 0.0;
    alpha = std::clamp(alpha, 0.0, cap);
    const double carry = d * D * c / (1 - g);
    double delta = (target - e - d * (1 - s) / (1 - g)) / (S + carry);
    delta = std::clamp(delta, 0.0, cap);
    const double h = alpha_prev / D + c * (1 - delta);
    const double S_new = (1 - delta) * S + D * d * h / (1 - g);
    double rho = 0.0;
    if (S - D * b > 1e-300)
      rho = (u * S_new - (1 - delta) * D * b - D * d * h / (1 - g)) / (S - D * b);
    rho = std::clamp(rho, 0.0, 1.0 - delta);
    sched.steps.push_back(uniform_step(v, alpha, rho, delta));

    const double k = 1 - delta - rho;
    const double pair = d * h / (1 - g);
    const double a_new = k * a + rho / D * S + pair;
    const double b_new = k * b + rho / D * S + pair;
    const double d_new = delta * (S + carry);
    const double e_new = e + d * (1 - s) / (1 - g);
    const double c_new = (1 - alpha) * h / (1 - g);
    const double g_new = (1 - alpha) * D * c * delta / (1 - g);
    const double s_new = alpha + (1 - alpha) * kappa;
    a = a_new, b = b_new, d = d_new, e = e_new;
    c = c_new, g = g_new, s = s_new, alpha_prev = alpha;
  }
  sched.steps.push_back(terminal_step(v));
  return sched;
}

/// Text form: header lines `T = n`, `rate = r`, `data_size = D`, then one
/// line per step. Only uniform and terminal steps round-trip.
inline void write_schedule_text(std::ostream& os, const Schedule& s) {
  const int D = s.vocab.data_size;
  os << std::setprecision(17);
  os << "T = " << s.T() << "\n";
  os << "rate = " << s.rate << "\n";
  os << "data_size = " << D << "\n";
  for (int t = 1; t <= s.T(); ++t) {
    const auto& p = s.at(t);
    if (t == s.T() && s.is_terminal()) {
      os << "step " << t << " terminal\n";
      continue;
    }
    const double off = D > 1 ? p.Q(0, 1) : 0.0;
    const double resample = off * D;
    const double keep = p.Q(0, 0) - off;
    os << "step " << t << " alpha=" << p.alpha << " keep=" << keep << " resample=" << resample
       << " delete=" << p.Q(0, s.vocab.del()) << "\n";
  }
}

inline Schedule read_schedule_text(std::istream& is, const Vocabulary& v) {
  Schedule s;
  s.vocab = v;
  int T = -1;
  std::string line;
  auto fail = [](const std::string& why) { return Error(errc::io, "schedule text: " + why); };
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "step") {
      int t;
      std::string rest;
      ls >> t >> rest;
      if (t != s.T() + 1) throw fail("steps out of order");
      if (rest == "terminal") {
        s.steps.push_back(terminal_step(v));
        continue;
      }
      double alpha = 0, keep = 0, resample = 0, remove = 0;
      std::string tok = rest;
      do {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw fail("bad field " + tok);
        const std::string name = tok.substr(0, eq);
        const double val = std::stod(tok.substr(eq + 1));
        if (name == "alpha") alpha = val;
        else if (name == "keep") keep = val;
        else if (name == "resample") resample = val;
        else if (name == "delete") remove = val;
        else throw fail("unknown field " + name);
      } while (ls >> tok);
      if (std::fabs(keep + resample + remove - 1.0) > 1e-9) throw fail("step probabilities do not sum to 1");
      s.steps.push_back(uniform_step(v, alpha, resample, remove));
    } else {
      std::string eq, val;
      ls >> eq >> val;
      if (eq != "=") throw fail("expected key = value");
      if (key == "T") T = std::stoi(val);
      else if (key == "rate") s.rate = std::stod(val);
      else if (key == "data_size") {
        if (std::stoi(val) != v.data_size) throw fail("data_size mismatch");
      } else {
        throw fail("unknown key " + key);
      }
    }
  }
  if (T != s.T()) throw fail("step count differs from T");
  return s;
}

}  // namespace editdiff
