#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

#include "asr/flip.hpp"

namespace asr {

enum class PolicyKind { kNoReset, kFixedInterval, kRandomInterval, kAsr };

std::string_view to_string(PolicyKind k);
PolicyKind parse_policy_kind(std::string_view name);
std::string_view to_string(ReinitMode m);
ReinitMode parse_reinit_mode(std::string_view name);

struct PolicyConfig {
  PolicyKind kind = PolicyKind::kAsr;
  std::size_t interval = 1000;  // fixed-interval period T
  std::size_t interval_lo = 500;
  std::size_t interval_hi = 1500;
  ReinitMode reinit = ReinitMode::kShrinkRestore;

  void validate() const;
  bool operator==(const PolicyConfig&) const = default;
};

struct PolicyDecision {
  bool triggered = false;
  FlipSnapshot snapshot;
};

/// Reset decisions as a function of the step counter and the LF sequence
/// only; never sees the model, the batch or labels. Every policy keeps a flip
/// monitor so traces carry the flip columns; the monitor is cleared on every
/// re-initialization whichever policy caused it.
///
/// Steps are counted from 1. fixed-interval fires when step % T == 0.
/// random-interval draws each gap uniformly from [lo, hi] with its own seeded
/// generator, starting at construction and after every reset.
class PolicyEngine {
 public:
  PolicyEngine(PolicyConfig policy, FlipConfig flip, std::uint64_t seed);

  PolicyDecision decide(double lf);

  std::size_t step() const { return step_; }
  const PolicyConfig& policy() const { return policy_; }

 private:
  void draw_gap();

  PolicyConfig policy_;
  FlipMonitor monitor_;
  std::mt19937_64 rng_;
  std::size_t step_ = 0;
  std::size_t since_reset_ = 0;
  std::size_t gap_ = 0;
};

}  // namespace asr
