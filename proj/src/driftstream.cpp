#include "asr/driftstream.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "asr/errors.hpp"

namespace asr {

namespace {

constexpr struct {
  CorruptionTag tag;
  std::string_view name;
} kTagNames[] = {
    {CorruptionTag::kGaussianNoise, "gaussian-noise"}, {CorruptionTag::kFeatureScale, "feature-scale"},
    {CorruptionTag::kPlaneRotation, "plane-rotation"}, {CorruptionTag::kFeatureMask, "feature-mask"},
    {CorruptionTag::kMeanShift, "mean-shift"},
};

}  // namespace

std::string_view to_string(CorruptionTag tag) {
  for (const auto& e : kTagNames) {
    if (e.tag == tag) return e.name;
  }
  return "unknown";
}

CorruptionTag parse_corruption_tag(std::string_view name) {
  for (const auto& e : kTagNames) {
    if (e.name == name) return e.tag;
  }
  throw ConfigError("unknown corruption kind '" + std::string(name) + "'");
}

void CorruptionConstants::validate() const {
  auto finite_nonneg = [](double v, const char* what) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError(std::string("corruption: ") + what + " must be >= 0");
  };
  finite_nonneg(noise_sigma0, "noise_sigma0");
  finite_nonneg(scale_alpha, "scale_alpha");
  finite_nonneg(rotation_per_severity, "rotation_per_severity");
  finite_nonneg(shift_per_severity, "shift_per_severity");
  if (!(mask_fraction >= 0.0 && mask_fraction <= 1.0)) {
    throw ConfigError("corruption: mask_fraction must be in [0, 1]");
  }
}

Matrix apply_corruption(const Matrix& x, const CorruptionKind& kind, double severity,
                        std::mt19937_64& rng) {
  if (!(severity >= 0.0) || !std::isfinite(severity)) throw ContractError("severity must be >= 0");
  Matrix y = x;
  if (severity == 0.0) return y;
  const auto& c = kind.constants;
  const std::size_t d = x.cols();
  switch (kind.tag) {
    case CorruptionTag::kGaussianNoise: {
      std::normal_distribution<double> normal(0.0, 1.0);
      const double sd = severity * c.noise_sigma0;
      for (double& v : y.data()) v += sd * normal(rng);
      break;
    }
    case CorruptionTag::kFeatureScale: {
      const double f = 1.0 + c.scale_alpha * severity;
      for (double& v : y.data()) v *= f;
      break;
    }
    case CorruptionTag::kPlaneRotation: {
      const double angle = severity * c.rotation_per_severity;
      const double cs = std::cos(angle), sn = std::sin(angle);
      for (std::size_t r = 0; r < y.rows(); ++r) {
        for (std::size_t i = 0; i + 1 < d; i += 2) {
          const double a = x(r, i), b = x(r, i + 1);
          y(r, i) = cs * a - sn * b;
          y(r, i + 1) = sn * a + cs * b;
        }
      }
      break;
    }
    case CorruptionTag::kFeatureMask: {
      const auto masked = static_cast<std::size_t>(std::ceil(c.mask_fraction * static_cast<double>(d)));
      const double keep = std::max(0.0, 1.0 - severity / kMaxSeverity);
      for (std::size_t r = 0; r < y.rows(); ++r) {
        for (std::size_t j = 0; j < std::min(masked, d); ++j) y(r, j) *= keep;
      }
      break;
    }
    case CorruptionTag::kMeanShift: {
      const double step = severity * c.shift_per_severity / std::sqrt(static_cast<double>(d));
      for (std::size_t r = 0; r < y.rows(); ++r) {
        for (std::size_t j = 0; j < d; ++j) y(r, j) += (j % 2 == 0 ? step : -step);
      }
      break;
    }
  }
  return y;
}

double BlendedCorruption::severity() const {
  double s = 0.0;
  for (const auto& p : parts) s += p.weight * p.severity;
  return s;
}

CorruptionTag BlendedCorruption::dominant() const {
  const ActiveCorruption* best = &parts.front();
  for (const auto& p : parts) {
    if (p.weight >= best->weight) best = &p;
  }
  return best->kind;
}

DomainSchedule DomainSchedule::build(const ScheduleSpec& spec) {
  if (spec.segments.empty()) throw ConfigError("schedule: at least one segment required");
  if (spec.transitions.size() != spec.segments.size() - 1) {
    throw ConfigError("schedule: expected one transition length per segment boundary");
  }
  DomainSchedule s;
  s.spec_ = spec;
  std::size_t t = 0;
  for (std::size_t i = 0; i < spec.segments.size(); ++i) {
    const Segment& seg = spec.segments[i];
    if (seg.hold == 0) throw ConfigError("schedule: segment " + std::to_string(i) + " has zero length");
    if (!(seg.severity >= 0.0 && seg.severity <= kMaxSeverity)) {
      throw ConfigError("schedule: severity must be in [0, 5]");
    }
    s.hold_begin_.push_back(t);
    t += seg.hold;
    if (i + 1 < spec.segments.size()) {
      s.transition_begin_.push_back(t);
      t += spec.transitions[i];
    }
  }
  s.total_ = t;
  return s;
}

BlendedCorruption DomainSchedule::severity_at(std::size_t t) const {
  if (t >= total_) {
    throw RangeError("step " + std::to_string(t) + " outside schedule of " + std::to_string(total_));
  }
  // Last region starting at or before t.
  const auto it = std::upper_bound(hold_begin_.begin(), hold_begin_.end(), t);
  const std::size_t seg = static_cast<std::size_t>(it - hold_begin_.begin()) - 1;
  const Segment& cur = spec_.segments[seg];
  if (t < hold_begin_[seg] + cur.hold) {
    return BlendedCorruption{{{cur.kind, 1.0, cur.severity}}};
  }
  const Segment& next = spec_.segments[seg + 1];
  const double len = static_cast<double>(spec_.transitions[seg]);
  const double w_in = static_cast<double>(t - transition_begin_[seg]) / len;
  return BlendedCorruption{{{cur.kind, 1.0 - w_in, cur.severity}, {next.kind, w_in, next.severity}}};
}

GaussianTask make_task(std::size_t input_dim, std::size_t num_classes, double separation,
                       double noise_std, std::uint64_t seed) {
  if (input_dim == 0 || num_classes < 2) throw ConfigError("task: bad dimensions");
  if (!(separation > 0.0) || !(noise_std > 0.0)) throw ConfigError("task: separation and noise_std must be > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  GaussianTask task;
  task.noise_std = noise_std;
  task.means = Matrix(num_classes, input_dim);
  const double radius = separation * noise_std / std::numbers::sqrt2;
  for (std::size_t k = 0; k < num_classes; ++k) {
    auto row = task.means.row(k);
    double norm = 0.0;
    // Gram-Schmidt against previous means while they can be orthogonal.
    do {
      for (double& v : row) v = normal(rng);
      if (num_classes <= input_dim) {
        for (std::size_t p = 0; p < k; ++p) {
          auto prev = task.means.row(p);
          double dot = 0.0;
          for (std::size_t j = 0; j < input_dim; ++j) dot += row[j] * prev[j];
          for (std::size_t j = 0; j < input_dim; ++j) row[j] -= dot * prev[j];
        }
      }
      norm = l2_norm(row);
    } while (norm < 1e-6);
    for (double& v : row) v /= norm;
  }
  for (double& v : task.means.data()) v *= radius;
  return task;
}

LabeledBatch sample_clean(const GaussianTask& task, std::size_t n, std::mt19937_64& rng) {
  const std::size_t k = task.means.rows(), d = task.means.cols();
  std::uniform_int_distribution<int> pick(0, static_cast<int>(k) - 1);
  std::normal_distribution<double> normal(0.0, task.noise_std);
  LabeledBatch out;
  out.batch.features = Matrix(n, d);
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = pick(rng);
    out.labels[i] = y;
    auto mean = task.means.row(static_cast<std::size_t>(y));
    auto row = out.batch.features.row(i);
    for (std::size_t j = 0; j < d; ++j) row[j] = mean[j] + normal(rng);
  }
  return out;
}

DriftStream::DriftStream(DomainSchedule schedule, GaussianTask task, CorruptionConstants constants,
                         std::uint64_t seed)
    : schedule_(std::move(schedule)), task_(std::move(task)), constants_(constants), rng_(seed) {
  constants_.validate();
}

std::optional<LabeledBatch> DriftStream::sample_batch(std::size_t batch_size) {
  if (cursor_ >= schedule_.total_steps()) return std::nullopt;
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  LabeledBatch lb = sample_clean(task_, batch_size, rng_);
  const BlendedCorruption blend = schedule_.severity_at(cursor_);
  const Matrix clean = std::move(lb.batch.features);
  Matrix mixed(clean.rows(), clean.cols(), 0.0);
  for (const auto& part : blend.parts) {
    const Matrix c = apply_corruption(clean, CorruptionKind{part.kind, constants_}, part.severity, rng_);
    for (std::size_t i = 0; i < mixed.data().size(); ++i) mixed.data()[i] += part.weight * c.data()[i];
  }
  lb.batch.features = std::move(mixed);
  lb.batch.step = cursor_;
  ++cursor_;
  return lb;
}

}  // namespace asr
