#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "editdiff/pfst_cumulative.hpp"

using namespace editdiff;

namespace {

// Data {a, b}: a->a .8, a->b .1, a->DEL .1 (same for b), INS uniform, alpha .2.
StepParams worked_step(const Vocabulary& v) { return uniform_step(v, 0.2, 0.2, 0.1); }

StepParams random_step(const Vocabulary& v, Rng& rng) {
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

}  // namespace

TEST(IdentityParams, BaseCase) {
  Vocabulary v(2);
  const auto c = identity_params(v);
  EXPECT_EQ(c.alpha_bar.cwiseAbs().sum(), 0.0);
  EXPECT_EQ(c.Q_bar(0, 0), 1.0);
  EXPECT_EQ(c.Q_bar(0, 1), 0.0);
  EXPECT_EQ(c.beta_bar[1], 0.0);
}

TEST(ComposeStep, NeutralStepKeepsIdentity) {
  Vocabulary v(3);
  const auto c = compose_step(identity_params(v), identity_step(v), v);
  EXPECT_EQ(c.alpha_bar.cwiseAbs().sum(), 0.0);
  for (int x = 0; x < v.data_size; ++x) {
    EXPECT_EQ(c.beta_bar[x], 0.0);
    for (int y = 0; y < v.latent_size(); ++y) EXPECT_EQ(c.Q_bar(x, y), x == y ? 1.0 : 0.0);
  }
}

TEST(ComposeStep, InsEntryEqualsAlpha) {
  Vocabulary v(3);
  Rng rng(1);
  auto c = identity_params(v);
  for (int t = 0; t < 6; ++t) {
    const auto p = random_step(v, rng);
    c = compose_step(c, p, v);
    EXPECT_EQ(c.alpha_bar[v.ins()], p.alpha);
  }
}

TEST(ComposeStep, TwoStepWorkedExample) {
  Vocabulary v(2);
  const auto p = worked_step(v);
  const auto c2 = compose_step(compose_step(identity_params(v), p, v), p, v);
  EXPECT_NEAR(c2.Q_bar(0, 0), 0.66, 1e-12);
  EXPECT_NEAR(c2.Q_bar(0, 1), 0.17, 1e-12);
  EXPECT_NEAR(c2.Q_bar(0, v.del()), 0.09, 1e-12);
  EXPECT_NEAR(c2.beta_bar[0], 0.08, 1e-12);
  EXPECT_NEAR(c2.alpha_bar[v.ins()], 0.2, 1e-12);
  EXPECT_NEAR(c2.alpha_bar[0], 0.08, 1e-12);
  EXPECT_NEAR(c2.alpha_bar[1], 0.08, 1e-12);
  EXPECT_NEAR(c2.alpha_bar[v.del()], 0.0, 1e-12);
}

TEST(ComposeStep, ConservationOnRandomSchedules) {
  Vocabulary v(3);
  Rng rng(2);
  for (int s = 0; s < 100; ++s) {
    auto c = identity_params(v);
    for (int t = 1; t <= 8; ++t) {
      const auto prev_beta = c.beta_bar;
      c = compose_step(c, random_step(v, rng), v);
      for (int x = 0; x < v.data_size; ++x) {
        EXPECT_NEAR(c.beta_bar[x] + c.Q_bar.row(x).sum(), 1.0, 1e-10);
        EXPECT_GE(c.beta_bar[x], prev_beta[x]);
      }
      EXPECT_LT(c.alpha_bar.sum(), 1.0);
      EXPECT_EQ(c.Q_bar.col(v.ins()).cwiseAbs().maxCoeff(), 0.0);
      EXPECT_EQ(c.Q_bar.row(v.del()).cwiseAbs().maxCoeff(), 0.0);
    }
  }
}

TEST(ComposeStep, GuardsCorruptedInput) {
  Vocabulary v(2);
  auto c = identity_params(v);
  c.alpha_bar[v.del()] = 1.0;
  EXPECT_THROW(compose_step(c, worked_step(v), v), Error);
}

TEST(SampleFromX0, IdentityParamsCopy) {
  Vocabulary v(4);
  Rng rng(3);
  const Seq x0{3, 1, 2};
  auto [xt, a] = sample_from_x0(x0, identity_params(v), v, rng);
  EXPECT_EQ(xt, x0);
  EXPECT_EQ(a, identity_summary(x0));
}

TEST(SampleFromX0, TotalDeletion) {
  Vocabulary v(2);
  auto c = identity_params(v);
  c.Q_bar.setZero();
  c.beta_bar.setOnes();
  Rng rng(4);
  auto [xt, a] = sample_from_x0({0, 1, 1}, c, v, rng);
  EXPECT_TRUE(xt.empty());
  EXPECT_EQ(a.size(), 3u);
}

TEST(SummaryLogprob, WorkedExample) {
  Vocabulary v(2);
  const auto c1 = compose_step(identity_params(v), worked_step(v), v);
  EXPECT_NEAR(summary_logprob({0}, {EditOp::rep(0, 0)}, c1), std::log(0.512), 1e-12);
  EXPECT_EQ(summary_logprob({0}, {EditOp::rep(0, 0)}, identity_params(v)), 0.0);
  EXPECT_EQ(summary_logprob({0}, {EditOp::ins(v.del()), EditOp::rep(0, 0)}, c1), neg_inf);
}

TEST(SummaryLogprob, InterleavingInvariant) {
  Vocabulary v(2);
  const auto p = worked_step(v);
  auto c = identity_params(v);
  for (int t = 0; t < 3; ++t) c = compose_step(c, p, v);
  const EditSummary a{EditOp::del(0), EditOp::ins(1), EditOp::rep(1, 0), EditOp::ins(v.ins())};
  EXPECT_DOUBLE_EQ(summary_logprob({0, 1}, a, c), summary_logprob({0, 1}, canonicalize_summary(a), c));
}

TEST(SampleFromX0, EmpiricalMatchesSummaryLogprob) {
  Vocabulary v(1);
  const auto c1 = compose_step(identity_params(v), uniform_step(v, 0.2, 0.0, 0.1), v);
  Rng rng(5);
  const int n = 200000;
  std::map<std::vector<std::tuple<int, int, int>>, std::pair<int, EditSummary>> counts;
  for (int i = 0; i < n; ++i) {
    auto [xt, a] = sample_from_x0({0}, c1, v, rng);
    ASSERT_TRUE(is_canonical(a));
    std::vector<std::tuple<int, int, int>> key;
    for (const auto& op : a) key.emplace_back(static_cast<int>(op.kind), op.in, op.out);
    auto& slot = counts[key];
    ++slot.first;
    slot.second = a;
  }
  for (const auto& [key, entry] : counts) {
    const double q = std::exp(summary_logprob({0}, entry.second, c1));
    if (q < 1e-4) continue;
    const double se = std::sqrt(q * (1 - q) / n);
    EXPECT_NEAR(static_cast<double>(entry.first) / n, q, 3 * se) << render(entry.second, v);
  }
}

TEST(MarginalLogprob, MatchesSumOverSampledSummaries) {
  Vocabulary v(2);
  const auto p = worked_step(v);
  auto c = identity_params(v);
  for (int t = 0; t < 3; ++t) c = compose_step(c, p, v);
  Rng rng(6);
  const Seq x0{0, 1};
  const int n = 200000;
  std::map<Seq, int> counts;
  for (int i = 0; i < n; ++i) ++counts[sample_from_x0(x0, c, v, rng).first];
  for (const auto& [xt, k] : counts) {
    const double q = std::exp(marginal_logprob(x0, xt, c));
    if (q < 1e-3) continue;
    EXPECT_NEAR(static_cast<double>(k) / n, q, 4 * std::sqrt(q * (1 - q) / n)) << render(xt, v);
  }
}

TEST(MarginalLogprob, IdentityIsPointMass) {
  Vocabulary v(3);
  const auto c = identity_params(v);
  EXPECT_NEAR(marginal_logprob({0, 2}, {0, 2}, c), 0.0, 1e-15);
  EXPECT_EQ(marginal_logprob({0, 2}, {2, 0}, c), neg_inf);
}

TEST(SampleSummary, MatchesConditionalOfSummaryLogprob) {
  Vocabulary v(2);
  const auto p = worked_step(v);
  auto c = identity_params(v);
  for (int t = 0; t < 3; ++t) c = compose_step(c, p, v);
  Rng rng(8);
  const Seq x0{0, 1}, xt{1, 0};
  const double lz = marginal_logprob(x0, xt, c);
  const int n = 100000;
  std::map<EditSummary, int> counts;
  for (int i = 0; i < n; ++i) {
    const auto a = sample_summary(x0, xt, c, rng);
    ASSERT_TRUE(is_canonical(a));
    ASSERT_EQ(consumed(a), x0);
    ASSERT_EQ(emitted(a), xt);
    ++counts[a];
  }
  double seen = 0.0;
  for (const auto& [a, k] : counts) {
    const double q = std::exp(summary_logprob(x0, a, c) - lz);
    seen += q;
    EXPECT_NEAR(static_cast<double>(k) / n, q, 4 * std::sqrt(q * (1 - q) / n) + 1e-9) << render(a, v);
  }
  EXPECT_GT(seen, 0.999);
}
