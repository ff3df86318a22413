#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dcl/negatives.hpp"
#include "dcl/objective.hpp"
#include "dcl/synthetic.hpp"
#include "dcl/trainer.hpp"

using namespace dcl;

namespace {

std::vector<double> rand_vec(std::mt19937& rng, std::size_t d) {
  std::normal_distribution<double> n(0, 1);
  std::vector<double> v(d);
  for (auto& x : v) x = n(rng);
  return v;
}

// Unit vectors with a prescribed cosine to e0: cos*e0 + sin*e1.
std::vector<double> at_cos(double c) { return {c, std::sqrt(std::max(0.0, 1 - c * c)), 0.0}; }

struct Fixture {
  ToyBackend model;
  std::vector<EncodedExample> batch;
};

Fixture fixture(std::uint64_t seed, std::size_t b, std::size_t m, std::size_t dim) {
  const auto examples = make_synthetic_corpus({b, seed, "obj"});
  const auto vocab = build_vocabulary(examples, Template::standard);
  Fixture f{ToyBackend(vocab, dim, seed), {}};
  for (const auto& ex : examples) {
    auto e = encode_example(vocab, ex, Template::standard);
    for (const auto& n : pick_counterfactuals(ex, m, seed).negatives) e.negatives.push_back(vocab.encode_text(n));
    f.batch.push_back(std::move(e));
  }
  return f;
}

}  // namespace

TEST(Nll, UniformBackendIsKLnV) {
  const auto m = ToyBackend::zeros(Vocabulary({"a", "b", "c"}), 4);
  EncodedExample ex{"x", {5, 6}, {5, 7}, {}};  // 2 tokens + EOS
  EXPECT_NEAR(nll_loss(m, ex).first, 3 * std::log(8.0), 1e-9);
  const auto lb = total_loss(m, std::span<const EncodedExample>(&ex, 1), {0.1, 2.5, 0.0, 0.0});
  EXPECT_NEAR(lb.total, 3 * std::log(8.0), 1e-9);
  ex.answer.clear();
  EXPECT_THROW(nll_loss(m, ex), std::invalid_argument);
}

TEST(Nll, PerfectModelIsZero) {
  // Empty input, so s_j is half the prefix mean. BOS points along x, "a" moves
  // the mean onto y: step 1 predicts "a", step 2 predicts EOS.
  auto m = ToyBackend::zeros(Vocabulary({"a"}), 2);
  auto& P = m.params();
  P.E.row(Vocabulary::kBos)[0] = 1.0;
  P.E.row(5)[0] = -1.0;
  P.E.row(5)[1] = 2.0;
  P.U.row(5)[0] = 4000.0;
  P.U.row(Vocabulary::kEos)[1] = 4000.0;
  const EncodedExample ex{"x", {}, {5}, {}};
  EXPECT_NEAR(nll_loss(m, ex).first, 0.0, 1e-300);
}

TEST(ClSample, SymmetricCaseIsLnMPlusOne) {
  std::mt19937 rng(1);
  const auto x = rand_vec(rng, 5);
  for (std::size_t m = 1; m <= 6; ++m) {
    std::vector<std::vector<double>> negs(m, x);
    EXPECT_NEAR(cl_sample_loss(x, x, negs, 2.5).value, std::log(m + 1.0), 1e-12);
  }
}

TEST(ClSample, WorkedCase) {
  const auto x = at_cos(1.0);
  const std::vector<std::vector<double>> negs(4, at_cos(-1.0));
  const double v = cl_sample_loss(x, x, negs, 2.5).value;
  EXPECT_NEAR(v, std::log(1 + 4 * std::exp(-0.8)), 1e-12);
  EXPECT_NEAR(v, 1.0286603347, 1e-9);
}

TEST(ClSample, MonotoneInPositiveSimilarity) {
  const std::vector<std::vector<double>> negs{at_cos(0.1), at_cos(-0.3), at_cos(0.5), at_cos(0.0)};
  double prev = INFINITY;
  for (double c = -0.9; c <= 1.0; c += 0.1) {
    const double v = cl_sample_loss(at_cos(1.0), at_cos(c), negs, 2.5).value;
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(ClSample, ZeroVectorsNamed) {
  const std::vector<double> z(3, 0.0), x{1, 0, 0};
  try {
    cl_sample_loss(x, x, {x, z}, 2.5);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("negative 1"), std::string::npos);
  }
  EXPECT_THROW(cl_sample_loss(z, x, {x}, 2.5), std::invalid_argument);
  EXPECT_THROW(cl_sample_loss(x, z, {x}, 2.5), std::invalid_argument);
  EXPECT_THROW(cl_sample_loss(x, x, {}, 2.5), std::invalid_argument);
}

TEST(ClSample, BoundsRescalingAndOrder) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = rand_vec(rng, 4), p = rand_vec(rng, 4);
    std::vector<std::vector<double>> negs;
    for (int i = 0; i < 4; ++i) negs.push_back(rand_vec(rng, 4));
    const double tau = 0.5 + trial * 0.05;
    const double v = cl_sample_loss(x, p, negs, tau).value;
    double mx = cosine(x, p), mn = mx;
    for (const auto& n : negs) {
      mx = std::max(mx, cosine(x, n));
      mn = std::min(mn, cosine(x, n));
    }
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, std::log(5.0) + (mx - mn) / tau + 1e-12);

    auto scale = [](std::vector<double> u, double c) {
      for (auto& e : u) e *= c;
      return u;
    };
    std::vector<std::vector<double>> scaled;
    for (const auto& n : negs) scaled.push_back(scale(n, 3.7));
    EXPECT_NEAR(cl_sample_loss(scale(x, 0.2), scale(p, 11.0), scaled, tau).value, v, 1e-12);

    auto rev = negs;
    std::reverse(rev.begin(), rev.end());
    EXPECT_NEAR(cl_sample_loss(x, p, rev, tau).value, v, 1e-12);
  }
}

TEST(ClBatch, WorkedAndSymmetricCases) {
  const std::vector<std::vector<double>> hx{{1, 0}, {0, 1}}, ha{{1, 0}, {0, 1}};
  EXPECT_NEAR(cl_batch_loss(hx, ha, 0.1).value, 2 * std::log(1 + std::exp(-10.0)), 1e-12);
  EXPECT_NEAR(cl_batch_loss(hx, ha, 0.1).value, 9.08e-5, 1e-7);
  for (std::size_t b = 2; b <= 6; ++b) {
    const std::vector<std::vector<double>> same(b, {0.3, -0.2, 0.9});
    EXPECT_NEAR(cl_batch_loss(same, same, 0.1).value, static_cast<double>(b) * std::log(static_cast<double>(b)), 1e-12);
  }
  EXPECT_THROW(cl_batch_loss({{1, 0}}, {{1, 0}}, 0.1), std::invalid_argument);
}

TEST(ClBatch, DuplicatedBatchChangesValue) {
  const std::vector<std::vector<double>> hx{{1, 0}, {0, 1}}, ha{{1, 0.2}, {0.1, 1}};
  auto hx2 = hx, ha2 = ha;
  hx2.insert(hx2.end(), hx.begin(), hx.end());
  ha2.insert(ha2.end(), ha.begin(), ha.end());
  const double once = cl_batch_loss(hx, ha, 0.1).value, twice = cl_batch_loss(hx2, ha2, 0.1).value;
  // Each copy gains its twin's positive in the denominator: ln 2 more per row at the limit.
  EXPECT_GT(twice, 2 * once + 1.0);
}

TEST(ClBatch, PermutationInvariant) {
  std::mt19937 rng(9);
  std::vector<std::vector<double>> hx, ha;
  for (int i = 0; i < 5; ++i) {
    hx.push_back(rand_vec(rng, 3));
    ha.push_back(rand_vec(rng, 3));
  }
  const double v = cl_batch_loss(hx, ha, 0.1).value;
  std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<std::vector<double>> px, pa;
  for (auto i : perm) {
    px.push_back(hx[i]);
    pa.push_back(ha[i]);
  }
  EXPECT_NEAR(cl_batch_loss(px, pa, 0.1).value, v, 1e-12);
}

TEST(ClBatch, RescalingInvariance) {
  std::mt19937 rng(12);
  std::vector<std::vector<double>> hx, ha, sx, sa;
  for (int i = 0; i < 4; ++i) {
    hx.push_back(rand_vec(rng, 3));
    ha.push_back(rand_vec(rng, 3));
    sx.push_back(hx.back());
    sa.push_back(ha.back());
    for (auto& v : sx.back()) v *= 0.01 * (i + 1);
    for (auto& v : sa.back()) v *= 50.0;
  }
  EXPECT_NEAR(cl_batch_loss(sx, sa, 0.1).value, cl_batch_loss(hx, ha, 0.1).value, 1e-12);
}

TEST(TotalLoss, IdentitiesAndBreakdown) {
  auto f = fixture(3, 4, 4, 8);
  const std::span<const EncodedExample> batch(f.batch);
  const LossConfig def;
  const auto full = total_loss(f.model, batch, def);
  EXPECT_NEAR(full.total, full.nll + 0.5 * full.cl_b + 0.5 * full.cl_s, 1e-12);
  EXPECT_GT(full.cl_b, 0.0);
  EXPECT_GT(full.cl_s, 0.0);

  const auto none = total_loss(f.model, batch, {0.1, 2.5, 0.0, 0.0});
  EXPECT_EQ(none.total, none.nll);
  EXPECT_EQ(none.nll, full.nll);

  // nll is the batch mean of per-example sums.
  double nll = 0;
  for (const auto& ex : f.batch) nll += nll_loss(f.model, ex).first;
  EXPECT_NEAR(full.nll, nll / 4, 1e-12);

  // cl_s is the batch mean of the per-example sample loss on pooled vectors.
  double cls = 0;
  for (const auto& ex : f.batch) {
    std::vector<std::vector<double>> negs;
    for (const auto& n : ex.negatives) negs.push_back(f.model.pooled(n));
    cls += cl_sample_loss(f.model.pooled(ex.input), f.model.pooled(ex.answer), negs, 2.5).value;
  }
  EXPECT_NEAR(full.cl_s, cls / 4, 1e-12);

  // Reversing batch order and negative order leaves every component unchanged.
  auto rev = f.batch;
  std::reverse(rev.begin(), rev.end());
  for (auto& ex : rev) std::reverse(ex.negatives.begin(), ex.negatives.end());
  const auto r = total_loss(f.model, std::span<const EncodedExample>(rev), def);
  EXPECT_NEAR(r.total, full.total, 1e-12);
  EXPECT_NEAR(r.cl_b, full.cl_b, 1e-12);
}

TEST(TotalLoss, MissingNegativesAndBatchOfOne) {
  auto f = fixture(4, 3, 2, 6);
  f.batch[1].negatives.clear();
  EXPECT_THROW(total_loss(f.model, std::span<const EncodedExample>(f.batch), LossConfig{}), std::invalid_argument);
  const auto one = total_loss(f.model, std::span<const EncodedExample>(f.batch.data(), 1), LossConfig{});
  EXPECT_EQ(one.cl_b, 0.0);
  EXPECT_THROW(total_loss(f.model, std::span<const EncodedExample>(), LossConfig{}), std::invalid_argument);
  EXPECT_THROW((LossConfig{0.0, 2.5, 0.5, 0.5}.validate()), std::invalid_argument);
}

TEST(FiniteDiff, RandomSeedsPass) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto f = fixture(seed, 4, 4, 6);
    const auto rep = finite_diff_check(f.model, std::span<const EncodedExample>(f.batch), LossConfig{});
    EXPECT_TRUE(rep.passed) << "seed " << seed << " max rel " << rep.max_rel_error;
    EXPECT_EQ(rep.checked, rep.total_parameters);
  }
}

TEST(FiniteDiff, ZeroBackendPassesNllOnly) {
  const auto z = ToyBackend::zeros(Vocabulary({"a", "b"}), 3);
  const std::vector<EncodedExample> batch{{"x", {5, 6}, {6}, {}}, {"y", {6}, {5, 5}, {}}};
  const auto rep = finite_diff_check(z, std::span<const EncodedExample>(batch), {0.1, 2.5, 0.0, 0.0});
  EXPECT_TRUE(rep.passed);
}

TEST(FiniteDiff, InjectedFaultIsNamed) {
  const auto f = fixture(2, 4, 4, 6);
  const auto clean = total_loss(f.model, std::span<const EncodedExample>(f.batch), LossConfig{}).grads;
  std::size_t target = 0;
  for (std::size_t i = 0; i < clean.size(); ++i)
    if (std::abs(clean.flat(i)) > std::abs(clean.flat(target))) target = i;
  const auto rep = finite_diff_check(f.model, std::span<const EncodedExample>(f.batch), LossConfig{}, {},
                                     [&](ToyParameters& g) { g.flat(target) = -g.flat(target); });
  EXPECT_FALSE(rep.passed);
  ASSERT_EQ(rep.failures.size(), 1u);
  EXPECT_EQ(rep.failures[0].parameter, f.model.parameter_name(target));
  EXPECT_EQ(rep.worst.front().parameter, f.model.parameter_name(target));
}
