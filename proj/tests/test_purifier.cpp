#include "dbp/errors.hpp"
#include "dbp/noise.hpp"
#include "dbp/ops.hpp"
#include "dbp/purifier.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dbp;

namespace {

const NoiseSchedule kSched(0.1, 20.0);

class ZeroScore : public ScoreModel {
 public:
  Var score(const Var& x, double) const override { return scale(x, 0.0); }
};

std::shared_ptr<const ScoreModel> unit_model(std::size_t d) {
  return std::make_shared<MixtureScore>(unit_gaussian(d), kSched);
}

PurifyConfig sde_cfg(double t_star, double dt, int copies = 1) {
  PurifyConfig c;
  c.t_star = t_star;
  c.dt = dt;
  c.copies = copies;
  return c;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(Diffuse, Examples) {
  const Tensor x = Tensor::vector({1.0, 0.0});
  const Tensor eps = Tensor::vector({0.0, 1.0});
  EXPECT_TRUE(bitwise_equal(diffuse(x, 0.0, eps, kSched), x));
  const Tensor z = diffuse(Tensor::zeros({2}), 0.3, eps, kSched);
  EXPECT_NEAR(z[1], std::sqrt(1.0 - kSched.alpha(0.3)), 1e-15);
  const Tensor y = diffuse(x, 0.1, eps, kSched);
  EXPECT_NEAR(y[0], 0.94673, 1e-5);
  EXPECT_NEAR(y[1], 0.32206, 1e-5);
  EXPECT_THROW(diffuse(x, 0.1, Tensor::zeros({3}), kSched), ShapeError);
}

TEST(CalcDx, DriftCancelsWhenScoreIsMinusHalfX) {
  // sigma^2 = 2 at t = 0 gives s(x) = -x / 2
  auto model = std::make_shared<MixtureScore>(GaussianMixture{{1.0}, {Tensor::zeros({3})}, std::sqrt(2.0)}, kSched);
  const Purifier p(kSched, model, sde_cfg(0.1, -1e-3));
  const Tensor dx = p.calc_dx(Var(Tensor::vector({0.4, -1.0, 2.0})), 0.0, Tensor::zeros({3}), nullptr).value();
  EXPECT_LT(max_abs(dx), 1e-16);
}

TEST(CalcDx, SdeDriftValue) {
  const Purifier p(kSched, std::make_shared<ZeroScore>(), sde_cfg(0.1, -1e-3));
  const Tensor dx = p.calc_dx(Var(Tensor::vector({1.0})), 0.0, Tensor::zeros({1}), nullptr).value();
  EXPECT_NEAR(dx[0], 5e-5, 1e-18);
}

TEST(CalcDx, GuidanceTerm) {
  const NoiseSchedule flat(10.0, 10.0);
  PurifyConfig c = sde_cfg(0.01, -1e-3);
  c.solver = Solver::ddpm;
  const Purifier plain(flat, std::make_shared<ZeroScore>(), c);
  c.guidance = {GuidanceSpec::Kind::mse, 1.0, GuidanceSpec::Aux::identity};
  const Purifier guided(flat, std::make_shared<ZeroScore>(), c);
  const Var x(Tensor::vector({1.0}));
  const Var g(Tensor::vector({0.0}));
  const double with = guided.calc_dx(x, 0.005, Tensor::zeros({1}), &g).value()[0];
  const double without = plain.calc_dx(x, 0.005, Tensor::zeros({1}), nullptr).value()[0];
  EXPECT_NEAR(with - without, -0.02, 1e-15);
  EXPECT_THROW(guided.calc_dx(x, 0.005, Tensor::zeros({1}), nullptr), ConfigError);
}

TEST(CalcDx, DdpmMatchesMarkovStep) {
  PurifyConfig c = sde_cfg(0.1, -1e-3);
  c.solver = Solver::ddpm;
  const Purifier p(kSched, unit_model(2), c);
  const Tensor x = Tensor::vector({0.7, -0.2});
  const Tensor z = Tensor::vector({0.3, 1.1});
  const double b = kSched.beta(0.05) * 1e-3;
  const Tensor next = p.step(Var(x), 50, 0.05, z, nullptr).value();
  for (std::size_t i = 0; i < 2; ++i) {
    const double expect = (x[i] + b * -x[i]) / std::sqrt(1 - b) + std::sqrt(b) * z[i];
    EXPECT_NEAR(next[i], expect, 1e-15);
  }
}

TEST(PurifyConfig, Validation) {
  EXPECT_EQ(sde_cfg(0.1, -1e-3).steps(), 100);
  EXPECT_EQ(sde_cfg(0.036, -1e-3).steps(), 36);
  EXPECT_THROW(sde_cfg(0.1, 1e-3).steps(), ConfigError);
  EXPECT_THROW(sde_cfg(0.1, -0.03).steps(), ConfigError);
  PurifyConfig c = sde_cfg(0.1, -1e-3);
  c.rounds = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(NoiseSampler, PureAndRangeChecked) {
  const NoiseSampler ns(5, {4}, 10, 2, 3);
  EXPECT_TRUE(bitwise_equal(ns.step_noise(1, 2, 7), ns.step_noise(1, 2, 7)));
  EXPECT_FALSE(bitwise_equal(ns.step_noise(1, 2, 7), ns.step_noise(1, 1, 7)));
  EXPECT_THROW(ns.step_noise(0, 0, 0), RangeError);
  EXPECT_THROW(ns.step_noise(0, 0, 11), RangeError);
  EXPECT_THROW(ns.step_noise(2, 0, 1), RangeError);
  EXPECT_THROW(ns.step_noise(0, 3, 1), RangeError);
}

TEST(NoiseSampler, CopiesAreUncorrelated) {
  const NoiseSampler ns(11, {10000}, 1, 1, 2);
  const Tensor a = ns.step_noise(0, 0, 1), b = ns.step_noise(0, 1, 1);
  std::vector<double> av(a.values().begin(), a.values().end()), bv(b.values().begin(), b.values().end());
  EXPECT_LT(std::abs(pearson(av, bv)), 0.05);
}

TEST(NoiseSampler, Moments) {
  const NoiseSampler ns(12, {100000}, 1, 1, 1);
  const Tensor a = ns.step_noise(0, 0, 1);
  const double m = sum(a) / 1e5;
  const double v = dot(a, a) / 1e5 - m * m;
  EXPECT_NEAR(m, 0.0, 0.02);
  EXPECT_NEAR(v, 1.0, 0.02);
}

TEST(NoiseSampler, StrideAggregatesFineDraws) {
  const NoiseSampler fine(3, {5}, 6, 1, 1, 1);
  const NoiseSampler same(3, {5}, 6, 1, 1, 1);
  const NoiseSampler coarse(3, {5}, 6, 1, 1, 3);
  EXPECT_EQ(coarse.steps(), 2);
  const Tensor expect = (fine.step_noise(0, 0, 4) + fine.step_noise(0, 0, 5) + fine.step_noise(0, 0, 6)) / std::sqrt(3.0);
  EXPECT_LT(max_abs_diff(coarse.step_noise(0, 0, 2), expect), 1e-15);
  EXPECT_TRUE(bitwise_equal(same.step_noise(0, 0, 2), fine.step_noise(0, 0, 2)));
  EXPECT_THROW(NoiseSampler(3, {5}, 7, 1, 1, 3), ConfigError);
}

TEST(PurifyForward, ZeroHorizonIsIdentity) {
  const Purifier p(kSched, unit_model(3), sde_cfg(0.0, -1e-3));
  const Tensor x = Tensor::vector({1, 2, 3});
  const PurifyState st = p.forward(x, 9);
  EXPECT_TRUE(bitwise_equal(st.output(0), x));
  EXPECT_EQ(st.states[0][0].size(), 1u);
}

TEST(PurifyForward, DeterministicPerSeed) {
  const Purifier p(kSched, unit_model(4), sde_cfg(0.05, -1e-3, 2));
  const Tensor x = Tensor::vector({0.1, 0.2, 0.3, 0.4});
  const PurifyState a = p.forward(x, 77), b = p.forward(x, 77), c = p.forward(x, 78);
  for (int k = 0; k < 2; ++k) EXPECT_TRUE(bitwise_equal(a.output(k), b.output(k)));
  EXPECT_FALSE(bitwise_equal(a.output(0), a.output(1)));
  EXPECT_FALSE(bitwise_equal(a.output(0), c.output(0)));
}

TEST(PurifyForward, StateLogLayoutAndReplay) {
  PurifyConfig c = sde_cfg(0.02, -1e-3, 2);
  c.rounds = 3;
  c.solver = Solver::ddpm;
  c.guidance = {GuidanceSpec::Kind::mse, 0.5, GuidanceSpec::Aux::identity};
  const Purifier p(kSched, unit_model(3), c);
  const Tensor x = Tensor::vector({0.5, -0.5, 1.0});
  const PurifyState st = p.forward(x, 1);
  ASSERT_EQ(st.states.size(), 2u);
  ASSERT_EQ(st.states[1].size(), 3u);
  for (int copy = 0; copy < 2; ++copy) {
    for (int r = 0; r < 3; ++r) {
      const auto& log = st.states[copy][r];
      ASSERT_EQ(log.size(), 21u);
      for (int i = 1; i <= 20; ++i) {
        const Var g(*st.guide);
        const Tensor next = p.step(Var(log[i]), i, p.time(i), p.step_noise(st.sampler, r, copy, i), &g).value();
        EXPECT_TRUE(bitwise_equal(next, log[i - 1]));
      }
    }
  }
}

TEST(PurifyForward, GuideIgnoredWithoutGuidance) {
  PurifyConfig c = sde_cfg(0.02, -1e-3);
  c.guidance.aux = GuidanceSpec::Aux::none;
  const Purifier p(kSched, unit_model(3), c);
  const Tensor x = Tensor::vector({0.5, -0.5, 1.0});
  const PurifyState a = p.forward(x, 4, Tensor::vector({9, 9, 9}));
  const PurifyState b = p.forward(x, 4);
  EXPECT_TRUE(bitwise_equal(a.output(0), b.output(0)));
  c.guidance.kind = GuidanceSpec::Kind::mse;
  const Purifier q(kSched, unit_model(3), c);
  EXPECT_THROW(q.forward(x, 4), ConfigError);
}

TEST(PurifyForward, DivergenceIsReported) {
  class Explode : public ScoreModel {
   public:
    Var score(const Var& x, double) const override { return scale(x, 1e300); }
  };
  const Purifier p(kSched, std::make_shared<Explode>(), sde_cfg(0.01, -1e-3));
  EXPECT_THROW(p.forward(Tensor::vector({1.0}), 1), NumericDivergenceError);
}

TEST(PurifyForward, FinalDdpmNoiseSwitch) {
  PurifyConfig c = sde_cfg(0.01, -1e-3);
  c.solver = Solver::ddpm;
  c.ddpm_final_noise = false;
  const Purifier p(kSched, unit_model(2), c);
  const NoiseSampler ns = p.make_sampler({2}, 3);
  EXPECT_EQ(max_abs(p.step_noise(ns, 0, 0, 1)), 0.0);
  EXPECT_GT(max_abs(p.step_noise(ns, 0, 0, 2)), 0.0);
}

TEST(PurifyForward, UnitGaussianDataVariance) {
  // Inputs drawn from the data itself: purification keeps the unit marginal.
  const Purifier p(kSched, unit_model(1), sde_cfg(0.1, -1e-2, 1));
  double m = 0, v = 0;
  std::vector<double> out;
  for (std::uint64_t k = 0; k < 2000; ++k) {
    const Tensor x = normal_tensor(stream_key(5, "x", {k}), {1});
    out.push_back(p.forward(x, k).output(0)[0]);
    m += out.back();
  }
  m /= 2000;
  for (double o : out) v += (o - m) * (o - m);
  v /= 1999;
  EXPECT_NEAR(v, 1.0, 0.1);
}

TEST(PurifyForward, DisplacementStableAcrossSeeds) {
  const Purifier p(kSched, unit_model(4), sde_cfg(0.1, -1e-3, 1000));
  const Tensor x = Tensor::vector({0.3, -0.3, 0.6, 0.0});
  std::vector<double> means;
  for (std::uint64_t seed : {1, 2}) {
    const PurifyState st = p.forward(x, seed);
    double acc = 0;
    for (int k = 0; k < 1000; ++k) acc += l2_norm(st.output(k) - x);
    means.push_back(acc / 1000);
    EXPECT_TRUE(std::isfinite(means.back()));
  }
  EXPECT_LT(std::abs(means[0] - means[1]) / means[0], 0.05);
}
