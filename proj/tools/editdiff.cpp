// editdiff: train, sample, denoise, eval, verify.
//
// Stdout carries tab-separated records behind a `# key = value` header;
// progress and diagnostics go to stderr.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "editdiff/editdiff.hpp"

namespace ed = editdiff;
using ed::Rng;

namespace {

enum exit_status : int { ok = 0, failed = 1, usage = 2, over_length = 3, io_failure = 4, diverged = 5 };

// ---------------------------------------------------------------------------
// Run configuration: task defaults < config file < flags.

ed::KeyValues task_defaults(const std::string& task) {
  ed::KeyValues kv{
      {"task", task},         {"rate", "0.6"},          {"steps", "20000"},
      {"seed", "1"},          {"batch", "64"},          {"T", "6"},
      {"max_len", "32"},      {"width", "64"},          {"heads", "4"},
      {"blocks", "2"},        {"ffn_mult", "4"},        {"bucket_cap", "8"},
      {"lr", "0.001"},        {"warmup", "500"},        {"final_lr_fraction", "0.1"},
      {"clip", "1"},          {"log_every", "100"},     {"eval_every", "2000"},
      {"eval_examples", "256"}, {"eval_samples", "256"}, {"length_table_draws", "20000"},
  };
  if (task == "arithmetic") {
    kv.insert({{"min_value", "2"}, {"max_value", "127"}, {"min_seq_len", "8"}, {"max_seq_len", "16"},
               {"min_step", "1"}, {"max_step", "10"}});
    kv["lr"] = "0.006";
  } else if (task == "chars") {
    kv["T"] = "32";
    kv["max_len"] = "64";
    kv["steps"] = "3000";
    kv["eval_every"] = "1000";
    kv["eval_examples"] = "128";
    kv["eval_samples"] = "0";
    kv["chunk_len"] = "40";
    kv["corpus"] = "";
  } else {
    throw ed::Error(ed::errc::invalid_argument, "unknown task '" + task + "' (arithmetic or chars)");
  }
  return kv;
}

const std::string& need(const ed::KeyValues& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw ed::Error(ed::errc::invalid_argument, "missing setting '" + key + "'");
  return it->second;
}

int get_int(const ed::KeyValues& kv, const std::string& key) {
  const std::string& s = need(kv, key);
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ed::Error(ed::errc::invalid_argument, key + " is not an integer: '" + s + "'");
  return v;
}

double get_double(const ed::KeyValues& kv, const std::string& key) {
  const std::string& s = need(kv, key);
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ed::Error(ed::errc::invalid_argument, key + " is not a number: '" + s + "'");
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ed::Error(ed::errc::io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Identity of a run: every setting except paths, plus the corpus contents.
std::string run_hash(const ed::KeyValues& kv) {
  ed::KeyValues h = kv;
  h.erase("corpus");
  if (kv.count("corpus") && !kv.at("corpus").empty()) h["corpus_fnv"] = ed::hex64(ed::fnv1a(read_file(kv.at("corpus"))));
  return ed::config_hash(h);
}

ed::Dataset make_dataset(const ed::KeyValues& kv) {
  const std::string& task = need(kv, "task");
  if (task == "arithmetic") {
    ed::ArithmeticConfig c;
    c.min_step = get_int(kv, "min_step");
    c.max_step = get_int(kv, "max_step");
    c.min_len = get_int(kv, "min_seq_len");
    c.max_len = get_int(kv, "max_seq_len");
    c.min_value = get_int(kv, "min_value");
    c.max_value = get_int(kv, "max_value");
    return ed::arithmetic_dataset(c);
  }
  const std::string& path = need(kv, "corpus");
  if (path.empty()) throw ed::Error(ed::errc::invalid_argument, "chars task needs --corpus or a corpus setting");
  auto corpus = std::make_shared<const ed::CharCorpus>(ed::load_char_corpus(path));
  return ed::make_char_dataset(corpus, get_int(kv, "chunk_len"));
}

std::string meta_header(const ed::KeyValues& meta) {
  std::string s;
  for (const char* key : {"seed", "config_hash", "version", "task"})
    if (meta.count(key)) s += std::string("# ") + key + " = " + meta.at(key) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Loaded checkpoints.

struct Loaded {
  ed::Checkpoint ck;
  std::shared_ptr<const ed::ForwardProcess> fp;
  std::unique_ptr<ed::NetworkModel<float>> model;

  ed::KeyValues train_settings() const {
    ed::KeyValues kv;
    for (const auto& [k, v] : ck.meta)
      if (k.rfind("train.", 0) == 0) kv[k.substr(6)] = v;
    return kv;
  }
  std::string task() const { return ck.meta.count("task") ? ck.meta.at("task") : ""; }
};

Loaded load_model(const std::string& path) {
  Loaded l;
  l.ck = ed::load_checkpoint(path);
  l.fp = std::make_shared<const ed::ForwardProcess>(l.ck.schedule);
  l.model = std::make_unique<ed::NetworkModel<float>>(l.fp, l.ck.params, l.ck.lengths);
  return l;
}

ed::Seq parse_input(const std::string& text, const ed::Vocabulary& v, bool chars) {
  if (chars) return ed::encode_chars(text);
  ed::Seq out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) {
    if (tok == "INS" || tok == "⟨INS⟩") out.push_back(v.ins());
    else if (tok == "DEL" || tok == "⟨DEL⟩") out.push_back(v.del());
    else {
      std::size_t used = 0;
      int x = -1;
      try {
        x = std::stoi(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || !v.is_data(x))
        throw ed::Error(ed::errc::invalid_argument, "input token '" + tok + "' is not in the vocabulary");
      out.push_back(x);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands.

struct TrainArgs {
  std::string task, config, checkpoint, log, corpus;
  double rate = 0;
  int steps = 0;
  std::uint64_t seed = 0;
  bool reuse = false;
  CLI::Option *task_opt, *rate_opt, *steps_opt, *seed_opt, *corpus_opt;
};

int cmd_train(const TrainArgs& a) {
  ed::KeyValues file;
  if (!a.config.empty()) file = ed::read_key_values(a.config);
  std::string task = "arithmetic";
  if (file.count("task")) task = file.at("task");
  if (a.task_opt->count()) task = a.task;
  ed::KeyValues kv = task_defaults(task);
  for (const auto& [k, v] : file) {
    if (!kv.count(k)) throw ed::Error(ed::errc::invalid_argument, "unknown setting '" + k + "' in " + a.config);
    kv[k] = v;
  }
  kv["task"] = task;
  if (a.steps_opt->count()) kv["steps"] = std::to_string(a.steps);
  if (a.seed_opt->count()) kv["seed"] = std::to_string(a.seed);
  if (a.corpus_opt->count()) {
    if (task != "chars") throw ed::Error(ed::errc::invalid_argument, "--corpus applies to the chars task");
    kv["corpus"] = a.corpus;
  }
  if (a.rate_opt->count()) {
    std::ostringstream os;
    os << std::setprecision(15) << a.rate;
    kv["rate"] = os.str();
  }

  if (get_int(kv, "warmup") > get_int(kv, "steps")) kv["warmup"] = kv["steps"];

  const std::string hash = run_hash(kv);
  const std::string ckpt = a.checkpoint.empty() ? task + ".ckpt" : a.checkpoint;
  const std::string log_path = a.log.empty() ? ckpt + ".log" : a.log;
  const std::string timing_path = log_path + ".timing";

  if (a.reuse && std::filesystem::exists(ckpt) && std::filesystem::exists(log_path) &&
      std::filesystem::exists(timing_path)) {
    try {
      const auto old = ed::load_checkpoint(ckpt);
      if (old.meta.count("config_hash") && old.meta.at("config_hash") == hash) {
        std::cerr << "reusing " << ckpt << " (same configuration)\n";
        std::cout << meta_header(old.meta) << "checkpoint\t" << ckpt << "\nlog\t" << log_path << "\ntiming\t"
                  << timing_path << "\nreused\t1\n";
        return ok;
      }
    } catch (const ed::Error& e) {
      std::cerr << "not reusing " << ckpt << ": " << e.what() << "\n";
    }
  }

  const ed::Dataset data = make_dataset(kv);
  const int T = get_int(kv, "T");
  auto fp = std::make_shared<const ed::ForwardProcess>(ed::build_arithmetic_schedule(get_double(kv, "rate"), T, data.vocab));
  auto net = ed::make_net_config(data.vocab, T, get_int(kv, "max_len"), get_int(kv, "width"), get_int(kv, "heads"),
                                 get_int(kv, "blocks"), get_int(kv, "bucket_cap"));
  net.ffn_mult = get_int(kv, "ffn_mult");

  ed::TrainConfig tc;
  tc.seed = static_cast<std::uint64_t>(std::stoull(need(kv, "seed")));
  tc.batch = get_int(kv, "batch");
  tc.steps = get_int(kv, "steps");
  tc.adam.peak_lr = get_double(kv, "lr");
  tc.adam.warmup_steps = get_int(kv, "warmup");
  tc.adam.total_steps = tc.steps;
  tc.adam.final_lr_fraction = get_double(kv, "final_lr_fraction");
  tc.adam.clip_norm = get_double(kv, "clip");
  tc.log_every = get_int(kv, "log_every");
  tc.eval_every = get_int(kv, "eval_every");
  tc.eval_examples = get_int(kv, "eval_examples");
  tc.eval_samples = get_int(kv, "eval_samples");
  tc.length_table_draws = get_int(kv, "length_table_draws");
  tc.threads = ed::worker_threads();

  ed::KeyValues meta{{"seed", need(kv, "seed")}, {"config_hash", hash}, {"version", ed::version_string}, {"task", task}};
  for (const auto& [k, v] : kv) meta["train." + k] = v;

  Rng init = ed::derive_rng(tc.seed, 0x696e6974);
  auto params = ed::nn::init_params<float>(net, init);

  std::ofstream log_out(log_path), timing_out(timing_path);
  if (!log_out || !timing_out) throw ed::Error(ed::errc::io, "cannot write " + log_path);
  ed::MetricLog log(&log_out, &timing_out);
  log.header(meta_header(meta));
  std::cerr << "training " << task << " rate " << kv["rate"] << " for " << tc.steps << " steps, config " << hash
            << "\n";
  const auto res = ed::train(params, fp, data, tc, &log);

  ed::Checkpoint ck{fp->schedule(), params, res.lengths, meta};
  ck.meta["steps_done"] = std::to_string(tc.steps);
  ed::save_checkpoint(ckpt, ck);

  std::cout << meta_header(meta) << "checkpoint\t" << ckpt << "\nlog\t" << log_path << "\ntiming\t" << timing_path
            << "\nreused\t0\n";
  if (!res.rows.empty() && res.rows.back().has_eval) {
    const auto& r = res.rows.back();
    std::cout << std::setprecision(8) << "nll\t" << r.nll << "\nnll_se\t" << r.nll_se << "\nerror_rate\t";
    if (std::isnan(r.error_rate)) std::cout << "-\n";
    else std::cout << r.error_rate << "\n";
  }
  std::cout << "skipped\t" << res.skipped << "\nwall_s\t" << std::fixed << std::setprecision(1) << res.wall_s << "\n";
  std::cerr << "done in " << std::fixed << std::setprecision(1) << res.wall_s << " s\n";
  return ok;
}

int cmd_sample(const std::string& path, int n, bool trace, std::uint64_t seed) {
  if (n < 0) throw ed::Error(ed::errc::invalid_argument, "--n must be non-negative");
  const Loaded l = load_model(path);
  const ed::Vocabulary& v = l.fp->vocab();
  ed::KeyValues meta = l.ck.meta;
  meta["seed"] = std::to_string(seed);
  std::cout << meta_header(meta);
  for (int i = 0; i < n; ++i) {
    Rng rng = ed::derive_rng(seed, 0x73616d70, static_cast<std::uint64_t>(i));
    const auto xs = ed::generate(*l.model, rng, trace);
    if (trace) {
      if (i) std::cout << "\n";
      int t = static_cast<int>(xs.size()) - 1;
      for (const auto& x : xs) std::cout << t-- << '\t' << ed::render(x, v) << '\n';
    } else {
      std::cout << ed::render(xs.back(), v) << '\n';
    }
  }
  return ok;
}

int cmd_denoise(const std::string& path, int at, int k, const std::string& input, std::uint64_t seed) {
  const Loaded l = load_model(path);
  const ed::Vocabulary& v = l.fp->vocab();
  if (at < 0 || at > l.fp->T())
    throw ed::Error(ed::errc::invalid_argument, "--at must lie in [0, " + std::to_string(l.fp->T()) + "]");
  if (k < 0) throw ed::Error(ed::errc::invalid_argument, "--k must be non-negative");
  const ed::Seq y = parse_input(input, v, l.task() == "chars");
  Rng rng = ed::derive_rng(seed, 0x64656e6f);
  const auto outs = ed::conditional_denoise(*l.model, y, at, k, rng);
  ed::KeyValues meta = l.ck.meta;
  meta["seed"] = std::to_string(seed);
  std::cout << meta_header(meta);
  for (const auto& x : outs) {
    if (at > 0) ed::validate_sequence(x, ed::Level::data, v);
    std::cout << ed::render(x, v) << '\n';
  }
  return ok;
}

int cmd_eval(const std::string& path, int n, int samples, std::optional<std::uint64_t> seed_flag,
             const std::string& corpus) {
  if (n <= 0) throw ed::Error(ed::errc::invalid_argument, "empty evaluation set");
  const Loaded l = load_model(path);
  ed::KeyValues kv = l.train_settings();
  if (!corpus.empty()) kv["corpus"] = corpus;
  const ed::Dataset data = make_dataset(kv);
  if (!(data.vocab == l.fp->vocab())) throw ed::Error(ed::errc::invalid_argument, "dataset and checkpoint vocabularies differ");
  const std::uint64_t seed = seed_flag ? *seed_flag : std::stoull(need(l.ck.meta, "seed"));
  const bool arithmetic = data.name == "arithmetic";
  if (samples < 0) samples = arithmetic ? 256 : 0;
  const auto validation = ed::draw_examples(data, n, seed, ed::validation_stream);
  const auto rep = ed::evaluate_model(*l.model, validation, samples, arithmetic, seed, ed::worker_threads());

  ed::KeyValues meta = l.ck.meta;
  meta["seed"] = std::to_string(seed);
  std::cout << meta_header(meta) << std::setprecision(8);
  std::cout << "examples\t" << n << "\nnll\t" << rep.elbo.mean << "\nnll_se\t" << rep.elbo.se << '\n';
  std::cerr << std::fixed << std::setprecision(3) << "nll " << rep.elbo.mean << " ± " << rep.elbo.se << " nats";
  if (!arithmetic) {
    double s = 0, s2 = 0;
    for (std::size_t i = 0; i < validation.size(); ++i) {
      const double b = rep.elbo.per_example[i] / (static_cast<double>(validation[i].size()) * std::log(2.0));
      s += b;
      s2 += b * b;
    }
    const double mean = s / n;
    const double se = n > 1 ? std::sqrt(std::max(0.0, (s2 - n * mean * mean) / (n - 1)) / n) : 0.0;
    std::cout << "bits_per_char\t" << mean << "\nbits_per_char_se\t" << se << '\n';
    std::cerr << ", " << mean << " ± " << se << " bits/char";
  }
  std::cout << "error_rate\t";
  if (std::isnan(rep.error_rate)) std::cout << "-\n";
  else std::cout << rep.error_rate << '\n';
  std::cout << "generated\t" << rep.samples.size() << "\nredraws\t" << rep.elbo.redraws << '\n';
  if (!std::isnan(rep.error_rate)) std::cerr << ", error rate " << rep.error_rate;
  std::cerr << "\n";
  return ok;
}

int cmd_verify(bool perturb, const std::vector<std::string>& only, std::uint64_t seed, int gradient_inputs) {
  ed::verify::Options o;
  o.seed = seed;
  o.perturb = perturb;
  o.gradient_inputs = gradient_inputs;
  std::cout << "# seed = " << seed << "\n# version = " << ed::version_string << "\n# perturb = " << (perturb ? 1 : 0)
            << "\n# forward_prob_floor = " << o.prob_floor << "\n";
  std::cout << "suite\tstatus\tchecks\tmax_error\ttolerance\ttail_bound\tseconds\n";
  bool all = true;
  int ran = 0;
  for (const auto& s : ed::verify::all_suites()) {
    if (!only.empty() && std::find(only.begin(), only.end(), s.name) == only.end()) continue;
    ++ran;
    const auto r = s.run(o);
    all = all && r.passed;
    std::cout << std::setprecision(6) << r.name << '\t' << (r.passed ? "pass" : "FAIL") << '\t' << r.checks << '\t'
              << r.max_error << '\t' << r.tolerance << '\t' << r.tail_bound << '\t' << std::fixed
              << std::setprecision(3) << r.seconds << std::defaultfloat << '\n'
              << std::flush;
    std::cerr << r.name << ": " << (r.passed ? "pass" : "FAIL") << (r.note.empty() ? "" : " (" + r.note + ")") << "\n";
  }
  if (ran == 0) throw ed::Error(ed::errc::invalid_argument, "no suite matched");
  return all ? ok : failed;
}

int status_for(const ed::Error& e) {
  switch (e.code()) {
    case ed::errc::over_length: return over_length;
    case ed::errc::io: return io_failure;
    case ed::errc::divergence: return diverged;
    default: return usage;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Insertion/deletion denoising diffusion for discrete sequences"};
  app.set_version_flag("--version", std::string(ed::version_string));
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a denoiser and write a checkpoint and metric log");
  ta.task_opt = train->add_option("--task", ta.task, "arithmetic or chars")->check(CLI::IsMember({"arithmetic", "chars"}));
  ta.rate_opt = train->add_option("--rate", ta.rate, "insert/delete rate r in [0,1)");
  ta.steps_opt = train->add_option("--steps", ta.steps, "optimizer steps");
  ta.seed_opt = train->add_option("--seed", ta.seed, "RNG seed");
  ta.corpus_opt = train->add_option("--corpus", ta.corpus, "text file for the chars task")->check(CLI::ExistingFile);
  train->add_option("--config", ta.config, "key = value settings file (flags win)")->check(CLI::ExistingFile);
  train->add_option("--checkpoint", ta.checkpoint, "output checkpoint path (default <task>.ckpt)");
  train->add_option("--log", ta.log, "metric log path (default <checkpoint>.log)");
  train->add_flag("--reuse", ta.reuse, "skip training when the checkpoint already matches this configuration");

  std::string ckpt, input, corpus;
  int n = 10, at = 0, k = 5, samples = -1, gradient_inputs = 20;
  bool trace = false, perturb = false;
  std::uint64_t seed = 1;
  std::vector<std::string> suites;

  auto* sample = app.add_subcommand("sample", "Generate sequences from a checkpoint");
  sample->add_option("--checkpoint", ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
  sample->add_option("--n", n, "number of samples");
  sample->add_flag("--trace", trace, "emit every step as t<TAB>sequence, t descending");
  sample->add_option("--seed", seed, "RNG seed");

  auto* denoise = app.add_subcommand("denoise", "Run the reverse chain from a given x_s");
  denoise->add_option("--checkpoint", ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
  denoise->add_option("--at", at, "starting step s")->required();
  denoise->add_option("--k", k, "number of candidates");
  denoise->add_option("--input", input, "x_s as text (chars) or space-separated tokens")->required();
  denoise->add_option("--seed", seed, "RNG seed");

  std::optional<std::uint64_t> eval_seed;
  auto* eval = app.add_subcommand("eval", "Report the NLL bound and error rate on fresh data");
  eval->add_option("--checkpoint", ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
  eval->add_option("--n", n, "evaluation examples")->default_val(256);
  eval->add_option("--samples", samples, "generations for the error rate (default 256 for arithmetic)");
  eval->add_option("--seed", eval_seed, "RNG seed (default: the training seed)");
  eval->add_option("--corpus", corpus, "override the corpus path recorded at training time")->check(CLI::ExistingFile);

  auto* verify = app.add_subcommand("verify", "Run the oracle-equivalence suites");
  verify->add_flag("--perturb", perturb, "skew a recursion constant; the forward suite must then fail");
  verify->add_option("--suite", suites, "run only the named suites");
  verify->add_option("--seed", seed, "RNG seed");
  verify->add_option("--gradient-inputs", gradient_inputs, "inputs for the gradient check");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(ta);
    if (*sample) return cmd_sample(ckpt, n, trace, seed);
    if (*denoise) return cmd_denoise(ckpt, at, k, input, seed);
    if (*eval) return cmd_eval(ckpt, n, samples, eval_seed, corpus);
    if (*verify) return cmd_verify(perturb, suites, seed, gradient_inputs);
  } catch (const ed::Error& e) {
    std::cerr << "editdiff: " << e.what() << "\n";
    return status_for(e);
  } catch (const std::exception& e) {
    std::cerr << "editdiff: " << e.what() << "\n";
    return usage;
  }
  return usage;
}
