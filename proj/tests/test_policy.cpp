#include <gtest/gtest.h>

#include <random>

#include "asr/errors.hpp"
#include "asr/policy.hpp"
#include "support.hpp"

namespace asr {
namespace {

std::vector<std::size_t> run(PolicyEngine& engine, const std::vector<double>& lf) {
  std::vector<std::size_t> fired;
  for (double v : lf) {
    if (engine.decide(v).triggered) fired.push_back(engine.step());
  }
  return fired;
}

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

TEST(Policy, Names) {
  for (auto k : {PolicyKind::kNoReset, PolicyKind::kFixedInterval, PolicyKind::kRandomInterval, PolicyKind::kAsr}) {
    EXPECT_EQ(parse_policy_kind(to_string(k)), k);
  }
  EXPECT_EQ(parse_reinit_mode("full-restore"), ReinitMode::kFullRestore);
  EXPECT_EQ(parse_reinit_mode("shrink-restore"), ReinitMode::kShrinkRestore);
  EXPECT_THROW(parse_policy_kind("cotta"), ConfigError);
  EXPECT_THROW(parse_reinit_mode("perturb"), ConfigError);
}

TEST(Policy, Validation) {
  PolicyConfig p;
  p.kind = PolicyKind::kFixedInterval;
  p.interval = 0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = PolicyConfig{};
  p.kind = PolicyKind::kRandomInterval;
  p.interval_lo = 10;
  p.interval_hi = 5;
  EXPECT_THROW(p.validate(), ConfigError);
  p.interval_lo = 0;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Policy, NoResetNeverFires) {
  PolicyEngine e({PolicyKind::kNoReset}, {}, 1);
  EXPECT_TRUE(run(e, noise(3000, 1)).empty());
}

TEST(Policy, FixedIntervalFiresOnMultiples) {
  PolicyConfig p;
  p.kind = PolicyKind::kFixedInterval;
  p.interval = 1000;
  PolicyEngine e(p, {}, 1);
  EXPECT_EQ(run(e, noise(5500, 2)), (std::vector<std::size_t>{1000, 2000, 3000, 4000, 5000}));
}

TEST(Policy, RandomIntervalGapsWithinRangeAndSeeded) {
  PolicyConfig p;
  p.kind = PolicyKind::kRandomInterval;
  p.interval_lo = 30;
  p.interval_hi = 70;
  PolicyEngine a(p, {}, 9), b(p, {}, 9), c(p, {}, 10);
  const auto lf = noise(5000, 3);
  const auto fa = run(a, lf);
  EXPECT_EQ(fa, run(b, lf));
  EXPECT_NE(fa, run(c, lf));
  std::size_t prev = 0;
  for (std::size_t s : fa) {
    EXPECT_GE(s - prev, 30u);
    EXPECT_LE(s - prev, 70u);
    prev = s;
  }
}

TEST(Policy, AsrMatchesScalarOracle) {
  FlipConfig f;
  f.burn_in = 25;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto lf = noise(2000, 100 + seed);
    PolicyEngine e({PolicyKind::kAsr}, f, seed);
    EXPECT_EQ(run(e, lf), test::simulate_triggers(lf, f.beta, f.pi, f.neighborhood_radius, f.burn_in));
  }
}

TEST(Policy, MonitorClearedOnEveryReset) {
  PolicyConfig p;
  p.kind = PolicyKind::kFixedInterval;
  p.interval = 10;
  PolicyEngine e(p, {}, 1);
  for (int i = 1; i <= 25; ++i) {
    const auto d = e.decide(1.0);
    if (i % 10 == 1 && i > 1) EXPECT_FALSE(d.snapshot.armed);
  }
  // the 11th value is the first of a fresh trace, so it seeds the average
  PolicyEngine g(p, {}, 1);
  for (int i = 1; i <= 10; ++i) g.decide(5.0);
  EXPECT_EQ(g.decide(1.0).snapshot.lf_smoothed, 1.0);
}

}  // namespace
}  // namespace asr
