#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "asr/matrix.hpp"
#include "asr/model.hpp"

namespace asr {

inline constexpr double kMaxSeverity = 5.0;

enum class CorruptionTag { kGaussianNoise, kFeatureScale, kPlaneRotation, kFeatureMask, kMeanShift };

std::string_view to_string(CorruptionTag tag);
/// Throws ConfigError for unknown names.
CorruptionTag parse_corruption_tag(std::string_view name);

/// Per-kind scaling constants. Every transform is the identity at severity 0.
struct CorruptionConstants {
  /// gaussian-noise: x + s * sigma0 * N(0, 1) per entry.
  double noise_sigma0 = 0.5;
  /// feature-scale: x * (1 + alpha * s).
  double scale_alpha = 0.3;
  /// plane-rotation: rotate every coordinate pair (0,1), (2,3), ... by s * radians_per_severity.
  double rotation_per_severity = 0.15;
  /// feature-mask: the first ceil(fraction * d) features are multiplied by 1 - s / kMaxSeverity.
  double mask_fraction = 0.5;
  /// mean-shift: x + s * delta * u, u = (1, -1, 1, ...) / sqrt(d).
  double shift_per_severity = 0.5;

  void validate() const;
  bool operator==(const CorruptionConstants&) const = default;
};

struct CorruptionKind {
  CorruptionTag tag = CorruptionTag::kGaussianNoise;
  CorruptionConstants constants;
};

/// Closed-form transform of every row of x. Only gaussian-noise draws from rng.
Matrix apply_corruption(const Matrix& x, const CorruptionKind& kind, double severity,
                        std::mt19937_64& rng);

struct Segment {
  CorruptionTag kind = CorruptionTag::kGaussianNoise;
  double severity = 0.0;  // peak severity held for the whole segment
  std::size_t hold = 0;
};

struct ScheduleSpec {
  std::vector<Segment> segments;
  /// One entry per boundary (segments.size() - 1); 0 switches abruptly.
  std::vector<std::size_t> transitions;
};

struct ActiveCorruption {
  CorruptionTag kind;
  double weight;
  double severity;
};

/// Corruptions acting at one step; weights sum to 1.
struct BlendedCorruption {
  std::vector<ActiveCorruption> parts;

  /// Weighted severity, piecewise linear in t.
  double severity() const;
  /// Kind with the largest weight (the incoming kind wins ties).
  CorruptionTag dominant() const;
};

class DomainSchedule {
 public:
  /// Throws ConfigError on an empty segment list, zero holds, severities outside
  /// [0, kMaxSeverity] or a transition list of the wrong length.
  static DomainSchedule build(const ScheduleSpec& spec);

  std::size_t total_steps() const { return total_; }
  const ScheduleSpec& spec() const { return spec_; }

  /// Throws RangeError unless 0 <= t < total_steps().
  BlendedCorruption severity_at(std::size_t t) const;

 private:
  ScheduleSpec spec_;
  std::vector<std::size_t> hold_begin_;        // first step of each hold
  std::vector<std::size_t> transition_begin_;  // first step of each boundary ramp
  std::size_t total_ = 0;
};

/// Class-conditional Gaussian mixture with uniform prior and isotropic noise.
struct GaussianTask {
  Matrix means;  // [K x d]
  double noise_std = 1.0;
};

/// Class means are orthonormal random directions scaled so that every pair of
/// means is exactly `separation * noise_std` apart (requires K <= d; otherwise
/// random Gaussian directions of the same length are used).
GaussianTask make_task(std::size_t input_dim, std::size_t num_classes, double separation,
                       double noise_std, std::uint64_t seed);

LabeledBatch sample_clean(const GaussianTask& task, std::size_t n, std::mt19937_64& rng);

/// Seeded non-stationary stream. Advancing the cursor is the only mutation.
class DriftStream {
 public:
  DriftStream(DomainSchedule schedule, GaussianTask task, CorruptionConstants constants,
              std::uint64_t seed);

  /// Clean draw plus the blended corruption at the cursor; nullopt once the
  /// schedule is exhausted. Batch::step is the 0-based cursor.
  std::optional<LabeledBatch> sample_batch(std::size_t batch_size);

  std::size_t cursor() const { return cursor_; }
  const DomainSchedule& schedule() const { return schedule_; }
  const GaussianTask& task() const { return task_; }

 private:
  DomainSchedule schedule_;
  GaussianTask task_;
  CorruptionConstants constants_;
  std::mt19937_64 rng_;
  std::size_t cursor_ = 0;
};

}  // namespace asr
