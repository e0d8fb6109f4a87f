#include "asr/policy.hpp"

#include <string>

#include "asr/errors.hpp"

namespace asr {

std::string_view to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::kNoReset: return "no-reset";
    case PolicyKind::kFixedInterval: return "fixed-interval";
    case PolicyKind::kRandomInterval: return "random-interval";
    case PolicyKind::kAsr: return "asr";
  }
  return "unknown";
}

PolicyKind parse_policy_kind(std::string_view name) {
  if (name == "no-reset") return PolicyKind::kNoReset;
  if (name == "fixed-interval") return PolicyKind::kFixedInterval;
  if (name == "random-interval") return PolicyKind::kRandomInterval;
  if (name == "asr") return PolicyKind::kAsr;
  throw ConfigError("unknown policy kind '" + std::string(name) + "'");
}

std::string_view to_string(ReinitMode m) {
  return m == ReinitMode::kFullRestore ? "full-restore" : "shrink-restore";
}

ReinitMode parse_reinit_mode(std::string_view name) {
  if (name == "full-restore") return ReinitMode::kFullRestore;
  if (name == "shrink-restore") return ReinitMode::kShrinkRestore;
  throw ConfigError("unknown reinit mode '" + std::string(name) + "'");
}

void PolicyConfig::validate() const {
  if (kind == PolicyKind::kFixedInterval && interval < 1) throw ConfigError("policy: interval must be >= 1");
  if (kind == PolicyKind::kRandomInterval && !(interval_lo >= 1 && interval_lo <= interval_hi)) {
    throw ConfigError("policy: interval_range must satisfy 1 <= lo <= hi");
  }
}

PolicyEngine::PolicyEngine(PolicyConfig policy, FlipConfig flip, std::uint64_t seed)
    : policy_(policy), monitor_(flip), rng_(seed) {
  policy_.validate();
  if (policy_.kind == PolicyKind::kRandomInterval) draw_gap();
}

void PolicyEngine::draw_gap() {
  std::uniform_int_distribution<std::size_t> dist(policy_.interval_lo, policy_.interval_hi);
  gap_ = dist(rng_);
}

PolicyDecision PolicyEngine::decide(double lf) {
  ++step_;
  ++since_reset_;
  PolicyDecision d;
  const bool flip_fired = monitor_.observe(lf, &d.snapshot);
  switch (policy_.kind) {
    case PolicyKind::kNoReset: break;
    case PolicyKind::kFixedInterval: d.triggered = step_ % policy_.interval == 0; break;
    case PolicyKind::kRandomInterval: d.triggered = since_reset_ >= gap_; break;
    case PolicyKind::kAsr: d.triggered = flip_fired; break;
  }
  if (d.triggered) {
    monitor_.reset();
    since_reset_ = 0;
    if (policy_.kind == PolicyKind::kRandomInterval) draw_gap();
  }
  return d;
}

}  // namespace asr
