#include "asr/flip.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "asr/errors.hpp"

namespace asr {

void FlipConfig::validate() const {
  if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("flip: beta must be in [0, 1)");
  if (!(pi > 1.0) || !std::isfinite(pi)) throw ConfigError("flip: pi must be > 1");
  if (burn_in < 1) throw ConfigError("flip: burn_in must be >= 1");
}

void ShrinkRestoreConfig::validate() const {
  if (!(lambda > 0.0 && lambda < 1.0)) throw ConfigError("shrink_restore: lambda must be in (0, 1)");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("shrink_restore: gamma must be in (0, 1)");
  if (!(lambda + gamma < 1.0)) {
    throw ConfigError("shrink_restore: lambda + gamma must be < 1 (got " + std::to_string(lambda + gamma) + ")");
  }
}

double label_flip_score(const ProbOutput& before, const ProbOutput& after) {
  if (before.size() != after.size() || before.probs.cols() != after.probs.cols()) {
    throw ContractError("label flip needs predictions of the same batch");
  }
  double lf = 0.0;
  for (std::size_t i = 0; i < after.size(); ++i) {
    const int cls = after.predicted[i];
    if (cls == before.predicted[i]) continue;
    const double conf_now = after.confidence[i];
    const double conf_prev = before.probs(i, static_cast<std::size_t>(cls));
    lf += conf_now * (conf_now - conf_prev);
  }
  return lf;
}

void ema_update(FlipTrace& trace, double lf, const FlipConfig& cfg) {
  const double s = trace.smoothed.empty() ? lf : cfg.beta * trace.smoothed.back() + (1.0 - cfg.beta) * lf;
  trace.raw.push_back(lf);
  trace.smoothed.push_back(s);
  ++trace.steps_since_reinit;
}

void update_min(FlipTrace& trace, const FlipConfig& cfg) {
  if (trace.smoothed.empty()) throw ContractError("update_min on an empty trace");
  const std::size_t last = trace.smoothed.size() - 1;
  if (!trace.min_estimate) {
    // not maintained yet: scan everything
    trace.min_index = 0;
    for (std::size_t i = 1; i <= last; ++i) {
      if (trace.smoothed[i] < trace.smoothed[trace.min_index]) trace.min_index = i;
    }
  } else if (trace.smoothed[last] < trace.smoothed[trace.min_index]) {
    trace.min_index = last;
  }

  const std::size_t k = cfg.neighborhood_radius;
  const std::size_t lo = trace.min_index >= k ? trace.min_index - k : 0;
  const std::size_t hi = std::min(last, trace.min_index + k);
  double sum = 0.0;
  for (std::size_t i = lo; i <= hi; ++i) sum += trace.smoothed[i];
  trace.min_estimate = sum / static_cast<double>(hi - lo + 1);

  if (!trace.armed && trace.steps_since_reinit >= cfg.burn_in && trace.min_index != last) {
    trace.armed = true;
  }
}

bool should_trigger(const FlipTrace& trace, const FlipConfig& cfg) {
  if (!trace.armed || !trace.min_estimate || trace.smoothed.empty()) return false;
  return trace.current() > cfg.pi * *trace.min_estimate;
}

std::vector<double> shrink_restore(std::span<const double> theta, std::span<const double> theta_pre,
                                   const ShrinkRestoreConfig& cfg) {
  if (theta.size() != theta_pre.size()) throw ShapeError("shrink_restore: length mismatch");
  cfg.validate();
  std::vector<double> out(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) out[i] = cfg.lambda * theta[i] + cfg.gamma * theta_pre[i];
  return out;
}

FlipMonitor::FlipMonitor(FlipConfig cfg) : cfg_(cfg) { cfg_.validate(); }

bool FlipMonitor::observe(double lf, FlipSnapshot* snapshot) {
  ema_update(trace_, lf, cfg_);
  update_min(trace_, cfg_);
  const bool fire = should_trigger(trace_, cfg_);
  if (snapshot) {
    *snapshot = FlipSnapshot{lf, trace_.current(), trace_.min_estimate, trace_.armed};
  }
  return fire;
}

void reinitialize(ModelState& model, ReinitMode mode, const ShrinkRestoreConfig& cfg) {
  if (mode == ReinitMode::kFullRestore) {
    model.restore_source();
    return;
  }
  const auto blended = shrink_restore(model.theta(), model.source_theta(), cfg);
  std::copy(blended.begin(), blended.end(), model.theta().begin());
  model.restore_source_stats();
}

AsrStepResult asr_step(FlipMonitor& monitor, ModelState& model, const ProbOutput& before,
                       const ProbOutput& after, const ShrinkRestoreConfig& sr_cfg) {
  AsrStepResult r;
  r.triggered = monitor.observe(label_flip_score(before, after), &r.snapshot);
  if (r.triggered) {
    reinitialize(model, ReinitMode::kShrinkRestore, sr_cfg);
    monitor.reset();
  }
  return r;
}

}  // namespace asr
