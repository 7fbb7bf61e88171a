#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "editdiff/posterior.hpp"

using namespace editdiff;

namespace {

Schedule three_step(const Vocabulary& v, double alpha = 0.2) {
  Schedule s;
  s.vocab = v;
  for (int t = 0; t < 3; ++t) s.steps.push_back(uniform_step(v, alpha, 0.2, 0.15));
  return s;
}

// Draws a (x_t, a) from the closed-form marginal.
struct Draw {
  Seq xt;
  EditSummary a;
};

Draw draw(const Seq& x0, const ForwardProcess& fp, int t, Rng& rng) {
  auto [xt, a] = sample_from_x0(x0, fp.cumulative(t), fp.vocab(), rng);
  return {xt, a};
}

}  // namespace

TEST(DelCount, GeometricWhenNoExplicit) {
  const auto d = del_count_distribution({}, 0.5);
  for (int k = 0; k < 10; ++k) EXPECT_NEAR(d.prob(k), std::pow(0.5, k + 1) / (1 - d.tail), 1e-15);
  EXPECT_LT(d.tail, 1e-5);
}

TEST(DelCount, DeterministicExplicit) {
  const std::vector<double> p{1.0};
  const auto d = del_count_distribution(p, 0.0);
  EXPECT_DOUBLE_EQ(d.prob(1), 1.0);
  EXPECT_DOUBLE_EQ(d.prob(0), 0.0);
}

TEST(DelCount, TwoCaseMixture) {
  const std::vector<double> p{0.5};
  const double rho = 0.25;
  const auto d = del_count_distribution(p, rho, 40);
  for (int k = 0; k < 30; ++k) {
    double want = 0.5 * std::pow(rho, k) * (1 - rho);
    if (k >= 1) want += 0.5 * k * std::pow(1 - rho, 2) * std::pow(rho, k - 1);
    EXPECT_NEAR(d.prob(k), want, 1e-12) << k;
  }
}

TEST(DelCount, RejectsBadRate) {
  EXPECT_THROW(del_count_distribution({}, 1.0), Error);
  const std::vector<double> p{1.5};
  EXPECT_THROW(del_count_distribution(p, 0.1), Error);
}

TEST(EditPosterior, IdentityReplaceIsForced) {
  Vocabulary v(3);
  Schedule s;
  s.vocab = v;
  s.steps = {identity_step(v), identity_step(v)};
  ForwardProcess fp(s);
  const auto post = edit_posterior({EditOp::rep(1, 1)}, step_context(fp, 2));
  ASSERT_EQ(post.per_op[0].size(), 1u);
  EXPECT_EQ(post.per_op[0][0].kind, Explanation::copy);
  EXPECT_EQ(post.per_op[0][0].y, 1);
  EXPECT_DOUBLE_EQ(post.per_op[0][0].prob, 1.0);
}

TEST(EditPosterior, StepInsertForced) {
  Vocabulary v(2);
  ForwardProcess fp(three_step(v));
  const auto post = edit_posterior({EditOp::ins(v.ins())}, step_context(fp, 2));
  ASSERT_EQ(post.per_op[0].size(), 1u);
  EXPECT_EQ(post.per_op[0][0].kind, Explanation::step_insert);
}

TEST(EditPosterior, DeleteAtTwoIsExplicit) {
  Vocabulary v(2);
  Schedule s;
  s.vocab = v;
  s.steps = {uniform_step(v, 0.2, 0.2, 0.1), uniform_step(v, 0.2, 0.2, 0.1)};
  ForwardProcess fp(s);
  const auto post = edit_posterior({EditOp::del(0)}, step_context(fp, 2));
  ASSERT_EQ(post.per_op[0].size(), 1u);
  EXPECT_EQ(post.per_op[0][0].kind, Explanation::explicit_delete);
  EXPECT_DOUBLE_EQ(post.per_op[0][0].prob, 1.0);
}

TEST(EditPosterior, DistributionsSumToOne) {
  Vocabulary v(2);
  ForwardProcess fp(three_step(v));
  Rng rng(1);
  for (int i = 0; i < 300; ++i) {
    const auto d = draw({0, 1, 0}, fp, 3, rng);
    const auto post = edit_posterior(d.a, step_context(fp, 3));
    for (const auto& outs : post.per_op) {
      double s = 0;
      for (const auto& o : outs) {
        EXPECT_GT(o.prob, 0.0);
        s += o.prob;
      }
      EXPECT_NEAR(s, 1.0, 1e-10);
    }
  }
}

TEST(SamplePosterior, ReachableAndComposesBack) {
  Vocabulary v(2);
  ForwardProcess fp(three_step(v, 0.3));
  Rng rng(2);
  for (int t = 1; t <= 3; ++t) {
    const auto c = step_context(fp, t);
    for (int i = 0; i < 500; ++i) {
      const Seq x0{0, 1, 1};
      const auto d = draw(x0, fp, t, rng);
      const auto [xp, ap] = sample_posterior_step(x0, d.xt, d.a, c, rng);
      EXPECT_GT(single_step_likelihood(xp, d.xt, fp.step(t), v), neg_inf);
      EXPECT_EQ(consumed(ap), x0);
      EXPECT_EQ(emitted(ap), xp);
      EXPECT_GT(summary_logprob(x0, ap, fp.cumulative(t - 1)), neg_inf);
      EditSummary step;
      ASSERT_TRUE(step_alignment(xp, d.xt, v, step));
      EXPECT_EQ(compose_alignment(ap, step, v), d.a) << render(d.a, v) << " | " << render(ap, v);
      EXPECT_GT(posterior_logprob(xp, x0, d.xt, d.a, c), neg_inf);
      if (t == 1) EXPECT_EQ(xp, x0);
    }
  }
}

TEST(SamplePosterior, EnumerationMatchesLogprob) {
  Vocabulary v(2);
  ForwardProcess fp(three_step(v, 0.3));
  Rng rng(3);
  const Seq x0{0, 1};
  const auto c = step_context(fp, 3);
  for (int i = 0; i < 60; ++i) {
    Draw d;
    do d = draw(x0, fp, 3, rng);
    while (d.xt.size() > 3);
    double captured = 0;
    const auto support = enumerate_posterior(x0, d.xt, d.a, c, 4, &captured);
    EXPECT_GT(captured, 0.98);
    for (const auto& [xp, p] : support) {
      const double lp = posterior_logprob(xp, x0, d.xt, d.a, c);
      // Enumeration caps loops, so it can only undercount.
      EXPECT_LE(p, std::exp(lp) + 1e-12);
      EXPECT_NEAR(p, std::exp(lp), 1.0 - captured + 1e-12);
    }
  }
}

TEST(SamplePosterior, FrequenciesMatchLogprob) {
  Vocabulary v(2);
  ForwardProcess fp(three_step(v, 0.15));
  Rng rng(4);
  const Seq x0{0, 1};
  const auto c = step_context(fp, 3);
  // Fix one (x_t, a) with a deletion and a short x_t so the support stays small.
  Draw d;
  for (;;) {
    d = draw(x0, fp, 3, rng);
    bool has_del = false;
    for (const auto& op : d.a) has_del |= op.kind == EditOp::Kind::remove;
    if (has_del && d.xt.size() == 1) break;
  }
  const int n = 100000;
  std::map<Seq, int> counts;
  for (int i = 0; i < n; ++i) ++counts[sample_posterior_step(x0, d.xt, d.a, c, rng).first];
  double tv = 0, covered = 0;
  for (const auto& [xp, k] : counts) {
    const double q = std::exp(posterior_logprob(xp, x0, d.xt, d.a, c));
    tv += std::fabs(static_cast<double>(k) / n - q);
    covered += q;
  }
  tv += 1.0 - covered;
  EXPECT_LT(tv / 2, 0.02);
}

TEST(SamplePosterior, InPlaceReduction) {
  Vocabulary v(4);
  Schedule s;
  s.vocab = v;
  Rng rng(5);
  for (int t = 0; t < 4; ++t) s.steps.push_back(uniform_step(v, 0.0, 0.1 + 0.1 * t, 0.0));
  ForwardProcess fp(s);
  // Independent in-place posterior: plain products of the per-step matrices.
  Matrix prod = Matrix::Identity(v.latent_size(), v.latent_size());
  for (int t = 1; t <= 4; ++t) {
    const auto c = step_context(fp, t);
    for (int x = 0; x < v.data_size; ++x)
      for (int z = 0; z < v.data_size; ++z) {
        const auto outs = replace_outcomes(x, z, c);
        Vector want(v.data_size);
        for (int y = 0; y < v.data_size; ++y) want[y] = prod(x, y) * s.at(t).Q(y, z);
        want /= want.sum();
        Vector got = Vector::Zero(v.data_size);
        for (const auto& o : outs) {
          ASSERT_EQ(o.kind, Explanation::copy);
          got[o.y] += o.prob;
        }
        EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-12);
      }
    prod = prod * s.at(t).Q;
  }
}

TEST(LossTerm, DeterministicPosteriorHasZeroVariance) {
  Vocabulary v(2);
  Schedule s;
  s.vocab = v;
  s.steps = {identity_step(v), identity_step(v)};
  ForwardProcess fp(s);
  const auto c = step_context(fp, 2);
  auto log_p = [](const Seq&) { return std::log(0.5); };
  Rng r1(1), r2(99);
  const double a = loss_term({0, 1}, {0, 1}, identity_summary({0, 1}), c, log_p, r1);
  const double b = loss_term({0, 1}, {0, 1}, identity_summary({0, 1}), c, log_p, r2);
  EXPECT_EQ(a, b);
  EXPECT_NEAR(a, -std::log(0.5), 1e-14);
}

TEST(LossTerm, MeanMatchesExactExpectation) {
  Vocabulary v(2);
  ForwardProcess fp(three_step(v, 0.3));
  const auto c = step_context(fp, 3);
  Rng rng(8);
  const Seq x0{1, 0};
  Draw d;
  do d = draw(x0, fp, 3, rng);
  while (d.xt.size() != 2);
  // A fixed, arbitrary reverse log-density depending on the sample.
  auto log_p = [](const Seq& xp) { return -0.3 * static_cast<double>(xp.size()) - 0.1 * (xp.empty() ? 0 : xp[0]); };
  const double exact = loss_term_exact(x0, d.xt, d.a, c, log_p, 6);
  const int n = 10000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double l = loss_term(x0, d.xt, d.a, c, log_p, rng);
    sum += l, sq += l * l;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  EXPECT_NEAR(mean, exact, 3 * se + 1e-9);
}
