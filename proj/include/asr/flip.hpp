#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "asr/model.hpp"

namespace asr {

struct FlipConfig {
  double beta = 0.8;                    // EMA coefficient, [0, 1)
  double pi = 1.2;                      // maximum allowed rise over the minimum, > 1
  std::size_t neighborhood_radius = 2;  // k: the minimum is averaged over 2k+1 points
  std::size_t burn_in = 200;            // W: steps after a re-initialization before arming

  void validate() const;
  bool operator==(const FlipConfig&) const = default;
};

struct ShrinkRestoreConfig {
  double lambda = 0.2;  // weight kept from the adapted parameters
  double gamma = 0.75;  // weight restored from the source parameters

  /// Requires lambda, gamma in (0, 1) and lambda + gamma < 1.
  void validate() const;
  bool operator==(const ShrinkRestoreConfig&) const = default;
};

/// Confidence-weighted label flips between two predictions of the same batch:
///
///   LF = sum_i [pred_after(i) != pred_before(i)] * c_i * (c_i - p_before(i, pred_after(i)))
///
/// where c_i is the post-step model's confidence in its own prediction. The
/// sum is not clamped; a flipped sample whose new class lost probability
/// contributes a negative term.
double label_flip_score(const ProbOutput& before, const ProbOutput& after);

/// Flip history since the last re-initialization.
struct FlipTrace {
  std::vector<double> raw;
  std::vector<double> smoothed;
  std::optional<double> min_estimate;
  std::size_t min_index = 0;
  bool armed = false;
  std::size_t steps_since_reinit = 0;

  double current() const { return smoothed.back(); }
  void clear() { *this = FlipTrace{}; }
};

/// Appends lf and its EMA; the first value after a reset seeds the average.
void ema_update(FlipTrace& trace, double lf, const FlipConfig& cfg);

/// Tracks the argmin of the smoothed values (first occurrence on ties), the
/// window mean around it and the arming state. Arming is sticky until reset
/// and happens once burn-in has elapsed and the latest value is not the minimum.
/// Only the newest value is examined once Min is set; a trace without Min is
/// scanned in full.
void update_min(FlipTrace& trace, const FlipConfig& cfg);

/// Armed and current smoothed value above pi * Min.
bool should_trigger(const FlipTrace& trace, const FlipConfig& cfg);

/// lambda * theta + gamma * theta_pre, elementwise.
std::vector<double> shrink_restore(std::span<const double> theta, std::span<const double> theta_pre,
                                   const ShrinkRestoreConfig& cfg);

/// Row of the per-step flip log.
struct FlipSnapshot {
  double lf_raw = 0.0;
  double lf_smoothed = 0.0;
  std::optional<double> min_estimate;
  bool armed = false;
};

/// Scalar half of the adaptive trigger: feeds LF values through the EMA,
/// minimum tracker and trigger test. The owner calls reset() whenever the
/// model is re-initialized.
class FlipMonitor {
 public:
  explicit FlipMonitor(FlipConfig cfg);

  /// Returns whether the trigger condition holds after this value.
  bool observe(double lf, FlipSnapshot* snapshot = nullptr);
  void reset() { trace_.clear(); }

  const FlipTrace& trace() const { return trace_; }
  const FlipConfig& config() const { return cfg_; }

 private:
  FlipConfig cfg_;
  FlipTrace trace_;
};

enum class ReinitMode { kFullRestore, kShrinkRestore };

/// Writes the re-initialized parameters into the model and restores the
/// source normalization statistics.
void reinitialize(ModelState& model, ReinitMode mode, const ShrinkRestoreConfig& cfg);

struct AsrStepResult {
  bool triggered = false;
  FlipSnapshot snapshot;
};

/// Label flip of the step, then EMA, minimum tracking and the trigger test.
/// On a trigger the model is shrink-restored and the trace cleared.
AsrStepResult asr_step(FlipMonitor& monitor, ModelState& model, const ProbOutput& before,
                       const ProbOutput& after, const ShrinkRestoreConfig& sr_cfg);

}  // namespace asr
