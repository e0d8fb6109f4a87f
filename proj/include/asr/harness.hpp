#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "asr/config.hpp"
#include "asr/driftstream.hpp"
#include "asr/errors.hpp"
#include "asr/model.hpp"
#include "asr/policy.hpp"

namespace asr {

/// One row per stream step.
struct RunRow {
  std::size_t step = 0;  // 1-based
  CorruptionTag domain = CorruptionTag::kGaussianNoise;
  double severity = 0.0;
  double accuracy = 0.0;  // pre-step predictions against the evaluation labels
  double lf_raw = 0.0;
  double lf_smoothed = 0.0;
  std::optional<double> min_estimate;
  bool armed = false;
  bool triggered = false;
  double weight_norm = 0.0;  // after any re-initialization of this step
  std::size_t num_selected = 0;

  bool operator==(const RunRow&) const = default;
};

struct TriggerEvent {
  std::size_t step = 0;
  PolicyKind policy = PolicyKind::kNoReset;
  double pre_norm = 0.0;
  double post_norm = 0.0;
};

struct RunRecord {
  std::vector<RunRow> rows;
  std::vector<TriggerEvent> triggers;

  double mean_accuracy() const;
  std::size_t trigger_count() const { return triggers.size(); }
};

/// Numeric failure inside a run. Carries the rows produced before the failing step.
class RunError : public NumericError {
 public:
  RunError(const std::string& what, std::size_t step, RunRecord partial)
      : NumericError(what, step), partial_(std::move(partial)) {}
  const RunRecord& partial() const { return partial_; }

 private:
  RunRecord partial_;
};

/// Source data and the trained source model for a config.
struct SourceModel {
  GaussianTask task;
  ModelState model;
  double clean_accuracy = 0.0;
};

/// Builds the task, samples the clean source set and trains the source model.
SourceModel prepare_source(const RunConfig& cfg);

/// Task of a config (the stream and the source set share it).
GaussianTask make_config_task(const RunConfig& cfg);

DriftStream make_stream(const RunConfig& cfg, GaussianTask task);

/// Runs the stream to exhaustion: adapter step, policy decision, logging.
/// `source` must match cfg.architecture (ConfigError otherwise).
/// Called after every step with the finished row and the model as it enters
/// the next step (after any re-initialization).
using StepObserver = std::function<void(const RunRow&, const ModelState&)>;

RunRecord run_experiment(const RunConfig& cfg, const ModelState& source, const StepObserver& observer = {});
RunRecord run_experiment(const RunConfig& cfg);

/// Windowed mean accuracy of a minus b over consecutive windows; a trailing
/// partial window forms its own entry.
std::vector<double> paired_gap(const RunRecord& a, const RunRecord& b, std::size_t window);

/// Mean accuracy per consecutive window.
std::vector<double> windowed_accuracy(const RunRecord& r, std::size_t window);

/// Mean accuracy over rows [begin, end).
double mean_accuracy(const RunRecord& r, std::size_t begin, std::size_t end);

struct SweepAxis {
  std::string name;  // see apply_override
  std::vector<double> values;
};

struct SweepCell {
  std::size_t index = 0;
  std::vector<std::pair<std::string, double>> params;
  std::optional<double> mean_accuracy;
  std::size_t triggers = 0;
  std::string error;  // set when the cell failed (config or numeric)
};

/// Cartesian product of the axes, one independent run per cell, executed on
/// `threads` workers. Results come back sorted by mean accuracy (descending,
/// failed cells last), ties by cell index. Cell failures never abort the sweep.
/// Cells sharing seed, architecture, task and source settings share one
/// source model, trained before the cells run.
std::vector<SweepCell> sweep(const RunConfig& base, const std::vector<SweepAxis>& grid,
                             std::size_t threads = 1);

}  // namespace asr
