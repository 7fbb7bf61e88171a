#pragma once

#include <algorithm>
#include <chrono>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "editdiff/config.hpp"
#include "editdiff/core_seq.hpp"
#include "editdiff/denoiser.hpp"
#include "editdiff/nn/adam.hpp"
#include "editdiff/nn/transformer.hpp"
#include "editdiff/pfst_cumulative.hpp"
#include "editdiff/posterior.hpp"

namespace editdiff {

// ---------------------------------------------------------------------------
// Datasets.

struct Dataset {
  std::string name;
  Vocabulary vocab;
  std::function<Seq(Rng&)> sample;
};

struct ArithmeticConfig {
  int min_step = 1;
  int max_step = 10;
  int min_len = 8;
  int max_len = 16;
  int min_value = 2;
  int max_value = 127;

  static ArithmeticConfig full_scale() { return {1, 10, 32, 64, 2, 511}; }
  static ArithmeticConfig desk() { return {}; }

  int span() const { return max_value - min_value; }
  void validate() const {
    if (min_step < 1 || max_step < min_step || min_len < 2 || max_len < min_len || min_value < 0 ||
        max_value <= min_value)
      throw Error(errc::invalid_argument, "empty arithmetic range");
    if (min_step * (min_len - 1) >= span())
      throw Error(errc::invalid_argument, "no (step, length) pair fits the value range");
  }
};

inline Seq arithmetic_sequence(int start, int step, int len, bool increasing) {
  Seq s(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i) s[static_cast<std::size_t>(i)] = start + (increasing ? i : -i) * step;
  return s;
}

/// Step and length are drawn uniformly and redrawn until s(l-1) fits the
/// value span; the start is uniform over positions that keep every value
/// in range.
inline Seq gen_arithmetic_example(const ArithmeticConfig& c, Rng& rng) {
  c.validate();
  int s = 0, len = 0;
  do {
    s = c.min_step + static_cast<int>(uniform_int(rng, static_cast<std::uint64_t>(c.max_step - c.min_step + 1)));
    len = c.min_len + static_cast<int>(uniform_int(rng, static_cast<std::uint64_t>(c.max_len - c.min_len + 1)));
  } while (s * (len - 1) >= c.span());
  const int extent = s * (len - 1);
  const int low = c.min_value + static_cast<int>(uniform_int(rng, static_cast<std::uint64_t>(c.span() - extent + 1)));
  const bool increasing = uniform_int(rng, 2) == 0;
  return increasing ? arithmetic_sequence(low, s, len, true) : arithmetic_sequence(low + extent, s, len, false);
}

inline Dataset arithmetic_dataset(const ArithmeticConfig& c) {
  c.validate();
  return {"arithmetic", Vocabulary(c.max_value + 1), [c](Rng& rng) { return gen_arithmetic_example(c, rng); }};
}

/// 26 letters, space, and '-'.
inline Vocabulary char_vocabulary() {
  std::vector<std::string> names;
  for (char c = 'a'; c <= 'z'; ++c) names.emplace_back(1, c);
  names.emplace_back(" ");
  names.emplace_back("-");
  return Vocabulary(28, std::move(names), "");
}

/// Lowercases and maps to the 28-token alphabet. Other whitespace becomes
/// a space, runs of spaces collapse, and remaining characters are dropped.
inline Seq encode_chars(const std::string& text) {
  Seq out;
  for (unsigned char ch : text) {
    const int c = std::tolower(ch);
    Token t;
    if (c >= 'a' && c <= 'z') t = c - 'a';
    else if (c == '-') t = 27;
    else if (std::isspace(c)) t = 26;
    else continue;
    if (t == 26 && !out.empty() && out.back() == 26) continue;
    out.push_back(t);
  }
  return out;
}

inline std::string decode_chars(const Seq& s) { return render(s, char_vocabulary()); }

struct CharCorpus {
  Seq tokens;
};

inline CharCorpus load_char_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::io, "cannot open corpus " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  CharCorpus c{encode_chars(ss.str())};
  if (c.tokens.empty()) throw Error(errc::invalid_argument, "corpus is empty after filtering");
  return c;
}

/// Uniformly placed chunks that never cross the corpus end.
inline Dataset make_char_dataset(std::shared_ptr<const CharCorpus> corpus, int chunk_len) {
  if (chunk_len < 1 || static_cast<std::size_t>(chunk_len) > corpus->tokens.size())
    throw Error(errc::invalid_argument, "chunk length exceeds corpus");
  return {"chars", char_vocabulary(), [corpus, chunk_len](Rng& rng) {
            const auto n = corpus->tokens.size() - static_cast<std::size_t>(chunk_len) + 1;
            const auto start = static_cast<std::ptrdiff_t>(uniform_int(rng, n));
            return Seq(corpus->tokens.begin() + start, corpus->tokens.begin() + start + chunk_len);
          }};
}

// ---------------------------------------------------------------------------
// Metrics.

/// Fraction of consecutive differences that differ from the most common
/// one; ties go to the smallest difference.
inline double sequence_error_rate(const Seq& s) {
  if (s.size() < 2) throw Error(errc::invalid_argument, "error rate needs at least two tokens");
  std::map<int, int> counts;
  for (std::size_t i = 1; i < s.size(); ++i) ++counts[s[i] - s[i - 1]];
  int best = 0;
  for (const auto& [d, c] : counts) best = std::max(best, c);
  const auto n = static_cast<double>(s.size() - 1);
  return (n - best) / n;
}

inline double error_rate(const std::vector<Seq>& samples) {
  if (samples.empty()) throw Error(errc::invalid_argument, "no samples");
  double acc = 0.0;
  for (const auto& s : samples) acc += sequence_error_rate(s);
  return acc / static_cast<double>(samples.size());
}

/// Same as error_rate, but samples too short to score count as fully wrong.
inline double generated_error_rate(const std::vector<Seq>& samples) {
  if (samples.empty()) throw Error(errc::invalid_argument, "no samples");
  double acc = 0.0;
  for (const auto& s : samples) acc += s.size() < 2 ? 1.0 : sequence_error_rate(s);
  return acc / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------
// Worker pool size.

inline int worker_threads() {
  if (const char* env = std::getenv("EDITDIFF_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

/// Runs body(i) for i in [0, n) over `threads` workers, strided.
template <typename Body>
void parallel_for(int n, int threads, Body&& body) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += threads) body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// ELBO.

inline constexpr int default_length_tries = 64;

/// (x_t, a) from the closed-form marginal, redrawn until |x_t| <= max_len.
/// Returns false when every try is too long.
inline bool sample_bounded(const Seq& x0, const CumulativeParams& c, const Vocabulary& v, int max_len, Rng& rng,
                           Seq& xt, EditSummary& a, int* redraws = nullptr) {
  for (int k = 0; k < default_length_tries; ++k) {
    auto [x, s] = sample_from_x0(x0, c, v, rng);
    if (static_cast<int>(x.size()) <= max_len) {
      xt = std::move(x);
      a = std::move(s);
      return true;
    }
    if (redraws) ++*redraws;
  }
  return false;
}

struct ElboResult {
  double mean = 0.0;
  double se = 0.0;
  std::vector<double> per_example;
  int redraws = 0;  // over-length x_t draws replaced
};

/// Single-sample estimate of -ELBO for one x0: every L_{t-1} term once plus
/// the exact length term.
inline double elbo_terms(const ReverseModel& m, const Seq& x0, Rng& rng, int* redraws = nullptr) {
  const ForwardProcess& fp = m.process();
  const Vocabulary& v = fp.vocab();
  double total = length_loss(x0, fp, m.lengths());
  for (int t = 1; t <= fp.T(); ++t) {
    Seq xt;
    EditSummary a;
    if (!sample_bounded(x0, fp.cumulative(t), v, m.max_len(), rng, xt, a, redraws))
      throw Error(errc::over_length, "cannot draw x_t within the model's length bound");
    const auto c = step_context(fp, t);
    const auto cond = m.conditional(xt, t);
    total += loss_term(x0, xt, a, c, cond, rng);
  }
  return total;
}

inline ElboResult evaluate_elbo(const ReverseModel& m, const std::vector<Seq>& x0s, std::uint64_t seed,
                                int threads = 1) {
  if (x0s.empty()) throw Error(errc::invalid_argument, "empty evaluation set");
  ElboResult r;
  r.per_example.assign(x0s.size(), 0.0);
  std::vector<int> redraws(x0s.size(), 0);
  parallel_for(static_cast<int>(x0s.size()), threads, [&](int i) {
    Rng rng = derive_rng(seed, 0x656c626f, static_cast<std::uint64_t>(i));
    r.per_example[static_cast<std::size_t>(i)] =
        elbo_terms(m, x0s[static_cast<std::size_t>(i)], rng, &redraws[static_cast<std::size_t>(i)]);
  });
  double s = 0.0, s2 = 0.0;
  for (double x : r.per_example) s += x;
  r.mean = s / static_cast<double>(x0s.size());
  for (double x : r.per_example) s2 += (x - r.mean) * (x - r.mean);
  const auto n = static_cast<double>(x0s.size());
  r.se = n > 1 ? std::sqrt(s2 / (n - 1) / n) : 0.0;
  for (int k : redraws) r.redraws += k;
  return r;
}

/// One draw of the training objective: T * L_{t-1} at a uniform t plus the
/// exact length term. Same expectation as elbo_terms.
inline double elbo_uniform_t(const ReverseModel& m, const Seq& x0, Rng& rng) {
  const ForwardProcess& fp = m.process();
  const int T = fp.T();
  const int t = 1 + static_cast<int>(uniform_int(rng, static_cast<std::uint64_t>(T)));
  Seq xt;
  EditSummary a;
  if (!sample_bounded(x0, fp.cumulative(t), fp.vocab(), m.max_len(), rng, xt, a))
    throw Error(errc::over_length, "cannot draw x_t within the model's length bound");
  return length_loss(x0, fp, m.lengths()) + T * loss_term(x0, xt, a, step_context(fp, t), m.conditional(xt, t), rng);
}

// ---------------------------------------------------------------------------
// Training.

struct TrainConfig {
  int batch = 64;
  int steps = 20000;
  nn::AdamConfig adam{};
  std::uint64_t seed = 1;
  int log_every = 100;
  int eval_every = 2000;
  int eval_examples = 256;
  int eval_samples = 256;  // generations for the error rate, 0 to skip
  int length_table_draws = 20000;
  int threads = 1;
  int shards = 8;  // fixed gradient partition, independent of `threads`

  void validate() const {
    if (batch < 1 || steps < 1 || log_every < 1 || eval_every < 1 || eval_examples < 1 || shards < 1)
      throw Error(errc::invalid_argument, "training sizes must be positive");
    if (adam.warmup_steps > steps) throw Error(errc::invalid_argument, "warmup longer than training");
  }
};

struct MetricRow {
  int step = 0;
  double loss = 0.0;  // mean per-example objective since the last row
  bool has_eval = false;
  double nll = 0.0;
  double nll_se = 0.0;
  double error_rate = 0.0;  // NaN when not measured
  double wall_s = 0.0;
};

/// Tab-separated metric lines; wall times go to a separate stream so the
/// main log is reproducible byte for byte.
class MetricLog {
 public:
  MetricLog(std::ostream* main, std::ostream* timing) : main_(main), timing_(timing) {}

  void header(const std::string& meta) {
    if (main_) *main_ << meta << "step\tloss\tnll\tnll_se\terror_rate\n";
    if (timing_) *timing_ << meta << "step\twall_s\n";
  }

  void write(const MetricRow& r) {
    if (main_) {
      std::ostringstream os;
      os << std::setprecision(8) << r.step << '\t' << r.loss << '\t';
      if (r.has_eval) {
        os << r.nll << '\t' << r.nll_se << '\t';
        if (std::isnan(r.error_rate)) os << "-";
        else os << r.error_rate;
      } else {
        os << "-\t-\t-";
      }
      *main_ << os.str() << '\n' << std::flush;
    }
    if (timing_) *timing_ << r.step << '\t' << std::fixed << std::setprecision(3) << r.wall_s << '\n' << std::flush;
  }

 private:
  std::ostream* main_;
  std::ostream* timing_;
};

struct TrainResult {
  LengthTable lengths;
  std::vector<MetricRow> rows;
  long skipped = 0;  // examples whose target fell outside the count support
  double wall_s = 0.0;
};

/// Per-example objective and logit gradients. Returns false when the target
/// has zero model probability (count beyond the tables); throws on NaN.
template <typename S>
bool example_gradient(const nn::Params<S>& p, const ForwardProcess& fp, const ReverseTables& tabs, const Seq& x0,
                      Rng& rng, nn::Cache<S>& cache, double grad_scale, nn::Params<S>& grad, double& loss) {
  const int T = fp.T();
  const Vocabulary& v = fp.vocab();
  const int t = 1 + static_cast<int>(uniform_int(rng, static_cast<std::uint64_t>(T)));
  Seq xt;
  EditSummary a;
  if (!sample_bounded(x0, fp.cumulative(t), v, p.cfg.max_len, rng, xt, a)) return false;
  const StepTables& s = tabs.at(t);
  const Seq xp = sample_posterior_step(x0, xt, a, s.ctx, rng).first;
  const auto out = denoiser_forward(p, xt, t, &cache);
  if (!out.f_logits.allFinite() || !out.g_logits.allFinite())
    throw Error(errc::divergence, "non-finite denoiser logits");
  Matrix df, dg;
  const double lp = reverse_step_logprob(out, xt, xp, s, &df, &dg);
  if (std::isnan(lp)) throw Error(errc::divergence, "non-finite reverse log-probability");
  if (lp == neg_inf) return false;
  loss = T * (-lp + single_step_likelihood(xp, xt, fp.step(t), v));
  const nn::Mat<S> dfs = (df * (-T * grad_scale)).template cast<S>();
  const nn::Mat<S> dgs = (dg * (-T * grad_scale)).template cast<S>();
  nn::backward(p, cache, dfs, dgs, grad);
  return true;
}

inline std::vector<Seq> draw_examples(const Dataset& d, int n, std::uint64_t seed, std::uint64_t stream) {
  std::vector<Seq> out;
  Rng rng = derive_rng(seed, stream);
  for (int i = 0; i < n; ++i) out.push_back(d.sample(rng));
  return out;
}

inline constexpr std::uint64_t validation_stream = 0x76616c;
inline constexpr std::uint64_t length_stream = 0x6c656e;

struct EvalReport {
  ElboResult elbo;
  double error_rate = std::numeric_limits<double>::quiet_NaN();
  std::vector<Seq> samples;
};

inline EvalReport evaluate_model(const ReverseModel& model, const std::vector<Seq>& validation, int n_samples,
                             bool arithmetic, std::uint64_t seed, int threads) {
  EvalReport r;
  r.elbo = evaluate_elbo(model, validation, seed, threads);
  if (n_samples > 0) {
    r.samples.resize(static_cast<std::size_t>(n_samples));
    parallel_for(n_samples, threads, [&](int i) {
      Rng rng = derive_rng(seed, 0x67656e, static_cast<std::uint64_t>(i));
      r.samples[static_cast<std::size_t>(i)] = generate(model, rng).back();
    });
    if (arithmetic) r.error_rate = generated_error_rate(r.samples);
  }
  return r;
}

/// Trains `params` in place. The length table is fitted once up front from
/// forward draws; evaluation rows use a fixed validation draw.
template <typename S>
TrainResult train(nn::Params<S>& params, std::shared_ptr<const ForwardProcess> fp, const Dataset& data,
                  const TrainConfig& cfg, MetricLog* log = nullptr) {
  cfg.validate();
  if (!fp->schedule().is_terminal()) throw Error(errc::invalid_argument, "schedule is not terminal");
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  TrainResult res;
  {
    Rng rng = derive_rng(cfg.seed, length_stream);
    res.lengths = fit_length_table(*fp, data.sample, cfg.length_table_draws, params.cfg.max_len, rng);
  }
  const ReverseTables tabs(*fp, params.cfg.count_buckets - 1);
  const auto validation = draw_examples(data, cfg.eval_examples, cfg.seed, validation_stream);
  const bool arithmetic = data.name == "arithmetic";
  nn::Adam<S> opt(params.cfg, cfg.adam);

  const int shards = std::min(cfg.shards, cfg.batch);
  std::vector<nn::Params<S>> grads(static_cast<std::size_t>(shards), nn::zeros<S>(params.cfg));
  std::vector<nn::Cache<S>> caches(static_cast<std::size_t>(shards));
  std::vector<double> shard_loss(static_cast<std::size_t>(shards));
  std::vector<long> shard_count(static_cast<std::size_t>(shards)), shard_skip(static_cast<std::size_t>(shards));
  nn::Params<S> total = nn::zeros<S>(params.cfg);

  double loss_acc = 0.0;
  long loss_n = 0;
  auto emit = [&](int step, bool eval) {
    MetricRow row;
    row.step = step;
    row.loss = loss_n ? loss_acc / static_cast<double>(loss_n) : 0.0;
    if (eval) {
      NetworkModel<S> model(fp, params, res.lengths);
      const auto rep = evaluate_model(model, validation, cfg.eval_samples, arithmetic, cfg.seed + static_cast<std::uint64_t>(step), cfg.threads);
      row.has_eval = true;
      row.nll = rep.elbo.mean;
      row.nll_se = rep.elbo.se;
      row.error_rate = rep.error_rate;
    }
    row.wall_s = elapsed();
    res.rows.push_back(row);
    if (log) log->write(row);
    loss_acc = 0.0;
    loss_n = 0;
  };

  for (int step = 0; step < cfg.steps; ++step) {
    parallel_for(shards, cfg.threads, [&](int sh) {
      auto& g = grads[static_cast<std::size_t>(sh)];
      g.set_zero();
      double l = 0.0;
      long n = 0, skip = 0;
      for (int b = sh; b < cfg.batch; b += shards) {
        Rng rng = derive_rng(cfg.seed, static_cast<std::uint64_t>(step) + 1, static_cast<std::uint64_t>(b));
        const Seq x0 = data.sample(rng);
        double loss = 0.0;
        if (example_gradient(params, *fp, tabs, x0, rng, caches[static_cast<std::size_t>(sh)],
                             1.0 / cfg.batch, g, loss)) {
          l += loss;
          ++n;
        } else {
          ++skip;
        }
      }
      shard_loss[static_cast<std::size_t>(sh)] = l;
      shard_count[static_cast<std::size_t>(sh)] = n;
      shard_skip[static_cast<std::size_t>(sh)] = skip;
    });
    total.set_zero();
    for (int sh = 0; sh < shards; ++sh) {
      std::vector<const nn::Mat<S>*> src;
      grads[static_cast<std::size_t>(sh)].visit([&](const std::string&, const nn::Mat<S>& m) { src.push_back(&m); });
      std::size_t i = 0;
      total.visit([&](const std::string&, nn::Mat<S>& m) { m += *src[i++]; });
      loss_acc += shard_loss[static_cast<std::size_t>(sh)];
      loss_n += shard_count[static_cast<std::size_t>(sh)];
      res.skipped += shard_skip[static_cast<std::size_t>(sh)];
    }
    if (!std::isfinite(loss_acc)) throw Error(errc::divergence, "non-finite loss at step " + std::to_string(step + 1));
    const double gnorm = opt.step(params, total);
    if (!std::isfinite(gnorm)) throw Error(errc::divergence, "non-finite gradient at step " + std::to_string(step + 1));
    const int done = step + 1;
    const bool eval = done % cfg.eval_every == 0 || done == cfg.steps;
    if (eval || done % cfg.log_every == 0) emit(done, eval);
  }
  res.wall_s = elapsed();
  return res;
}

}  // namespace editdiff
