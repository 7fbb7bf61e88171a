#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

namespace {

namespace fs = std::filesystem;

struct Outcome {
  int status = -1;
  std::string out;
};

Outcome run(const std::string& args) {
  Outcome r;
  const std::string cmd = std::string(EDITDIFF_CLI) + " " + args + " 2>/dev/null";
  std::FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int st = ::pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::vector<std::string> payload(const std::string& out) {
  std::vector<std::string> lines;
  std::istringstream is(out);
  for (std::string line; std::getline(is, line);)
    if (line.empty() || line[0] != '#') lines.push_back(line);
  return lines;
}

// One tiny arithmetic checkpoint shared by the tests below.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("editdiff_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
    std::ofstream(dir_ / "tiny.cfg") << "# tiny run\nwidth = 16\nheads = 2\nblocks = 1\nbatch = 8\n"
                                        "eval_every = 20\neval_examples = 8\neval_samples = 8\n"
                                        "length_table_draws = 200\nlog_every = 5\n";
    first_ = run(train_args("a"));
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string train_args(const std::string& name) {
    return "train --task arithmetic --rate 0.6 --steps 20 --seed 3 --config " + (dir_ / "tiny.cfg").string() +
           " --checkpoint " + (dir_ / (name + ".ckpt")).string();
  }
  static std::string ckpt(const std::string& name = "a") { return (dir_ / (name + ".ckpt")).string(); }

  static inline fs::path dir_;
  static inline Outcome first_;
};

TEST_F(Cli, TrainWritesCheckpointAndLog) {
  ASSERT_EQ(first_.status, 0) << first_.out;
  EXPECT_TRUE(fs::exists(ckpt()));
  const std::string log = slurp(ckpt() + ".log");
  EXPECT_NE(log.find("# seed = 3"), std::string::npos);
  EXPECT_NE(log.find("# config_hash = "), std::string::npos);
  EXPECT_NE(log.find("# version = "), std::string::npos);
  EXPECT_NE(log.find("step\tloss\tnll\tnll_se\terror_rate\n"), std::string::npos);
  EXPECT_NE(first_.out.find("\nnll\t"), std::string::npos);
  EXPECT_TRUE(fs::exists(ckpt() + ".log.timing"));
}

TEST_F(Cli, SameSeedGivesIdenticalLog) {
  ASSERT_EQ(run(train_args("b")).status, 0);
  EXPECT_EQ(slurp(ckpt("a") + ".log"), slurp(ckpt("b") + ".log"));
}

TEST_F(Cli, ReuseSkipsMatchingRun) {
  const auto r = run(train_args("a") + " --reuse");
  ASSERT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("reused\t1"), std::string::npos);
}

TEST_F(Cli, FlagsOverrideConfigFile) {
  std::ofstream(dir_ / "steps.cfg") << slurp(dir_ / "tiny.cfg") << "steps = 20\n";
  const auto r = run("train --task arithmetic --steps 10 --config " + (dir_ / "steps.cfg").string() +
                     " --checkpoint " + ckpt("c"));
  ASSERT_EQ(r.status, 0);
  const std::string log = slurp(ckpt("c") + ".log");
  EXPECT_NE(log.find("\n10\t"), std::string::npos);
  EXPECT_EQ(log.find("\n15\t"), std::string::npos);
}

TEST_F(Cli, SampleTraceDescendsWithMarkersAndIsDeterministic) {
  const auto a = run("sample --checkpoint " + ckpt() + " --n 3 --trace --seed 5");
  ASSERT_EQ(a.status, 0);
  EXPECT_EQ(a.out, run("sample --checkpoint " + ckpt() + " --n 3 --trace --seed 5").out);
  const auto lines = payload(a.out);
  ASSERT_FALSE(lines.empty());
  EXPECT_EQ(lines.front().rfind("6\t", 0), 0u);
  int expect = 6;
  for (const auto& l : lines) {
    if (l.empty()) {
      EXPECT_EQ(expect, -1);
      expect = 6;
      continue;
    }
    EXPECT_EQ(std::stoi(l.substr(0, l.find('\t'))), expect);
    --expect;
  }
  EXPECT_NE(a.out.find("\xE2\x9F\xA8" "DEL" "\xE2\x9F\xA9"), std::string::npos);
}

TEST_F(Cli, SampleWithoutTraceEmitsOnlyData) {
  const auto r = run("sample --checkpoint " + ckpt() + " --n 4");
  ASSERT_EQ(r.status, 0);
  const auto lines = payload(r.out);
  ASSERT_EQ(lines.size(), 4u);
  for (const auto& l : lines) {
    EXPECT_EQ(l.find('\t'), std::string::npos);
    EXPECT_EQ(l.find("\xE2\x9F\xA8"), std::string::npos);
  }
}

TEST_F(Cli, DenoiseAtZeroEchoes) {
  const auto r = run("denoise --checkpoint " + ckpt() + " --at 0 --k 2 --input '5 7 9 11'");
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(payload(r.out), (std::vector<std::string>{"5 7 9 11", "5 7 9 11"}));
}

TEST_F(Cli, DenoiseFromMarkersGivesData) {
  const auto r = run("denoise --checkpoint " + ckpt() + " --at 3 --k 3 --input '5 INS 9 DEL 13'");
  ASSERT_EQ(r.status, 0);
  const auto lines = payload(r.out);
  ASSERT_EQ(lines.size(), 3u);
  for (const auto& l : lines) EXPECT_EQ(l.find("\xE2\x9F\xA8"), std::string::npos);
}

TEST_F(Cli, OverLengthInputFails) {
  std::string input;
  for (int i = 0; i < 40; ++i) input += "5 ";
  EXPECT_EQ(run("denoise --checkpoint " + ckpt() + " --at 2 --k 1 --input '" + input + "'").status, 3);
}

TEST_F(Cli, EvalReportsNats) {
  const auto r = run("eval --checkpoint " + ckpt() + " --n 8 --samples 4");
  ASSERT_EQ(r.status, 0);
  for (const char* key : {"examples\t8", "\nnll\t", "\nnll_se\t", "\nerror_rate\t", "\ngenerated\t4"})
    EXPECT_NE(r.out.find(key), std::string::npos) << key;
}

TEST_F(Cli, EmptyEvaluationSetFails) {
  EXPECT_NE(run("eval --checkpoint " + ckpt() + " --n 0").status, 0);
}

TEST_F(Cli, VerifyReportsTimingsAndTails) {
  const auto r = run("verify --suite conservation --suite count_distribution");
  ASSERT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("suite\tstatus\tchecks\tmax_error\ttolerance\ttail_bound\tseconds\n"), std::string::npos);
  EXPECT_NE(r.out.find("conservation\tpass"), std::string::npos);
  EXPECT_NE(r.out.find("count_distribution\tpass"), std::string::npos);
}

TEST_F(Cli, PerturbedRecursionFailsVerify) {
  const auto r = run("verify --perturb --suite forward_marginal");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("forward_marginal\tFAIL"), std::string::npos);
}

TEST_F(Cli, UnknownConfigKeyIsUsageError) {
  std::ofstream(dir_ / "bad.cfg") << "widht = 16\n";
  EXPECT_EQ(run("train --task arithmetic --steps 2 --config " + (dir_ / "bad.cfg").string() + " --checkpoint " +
                ckpt("bad"))
                .status,
            2);
}

}  // namespace
