#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "asr/adapters.hpp"
#include "asr/driftstream.hpp"
#include "asr/flip.hpp"
#include "asr/model.hpp"
#include "asr/policy.hpp"

namespace asr {

inline constexpr int kSchemaVersion = 1;

struct TaskConfig {
  double class_separation = 3.0;  // pairwise distance of class means, in noise_std units
  double noise_std = 1.0;

  bool operator==(const TaskConfig&) const = default;
};

struct SourceConfig {
  std::size_t samples = 4000;
  SourceTrainingConfig training;

  bool operator==(const SourceConfig& o) const {
    return samples == o.samples && training.epochs == o.training.epochs &&
           training.batch_size == o.training.batch_size && training.lr == o.training.lr;
  }
};

struct StreamConfig {
  std::size_t batch_size = 64;
  ScheduleSpec schedule;
  CorruptionConstants corruption;
};

struct OutputConfig {
  std::string dir = "out";
  std::size_t plasticity_window = 500;
};

/// Everything that determines a run. Serialized verbatim into every output.
struct RunConfig {
  std::uint64_t seed = 1;
  Architecture architecture;
  TaskConfig task;
  SourceConfig source;
  StreamConfig stream;
  AdapterConfig adapter;
  double stats_momentum = 0.1;
  PolicyConfig policy;
  FlipConfig flip;
  ShrinkRestoreConfig shrink_restore;
  OutputConfig output;

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;
};

/// Default drifting stream: the other four corruption kinds alternate with
/// plane rotation at varying severity. 4,000-step holds (5,000 for the last),
/// 1,000-step ramps, 50,000 steps total.
ScheduleSpec default_schedule();

RunConfig default_run_config();

/// Strict parse: unknown keys, wrong types and constraint violations throw
/// ConfigError. Missing keys take their defaults.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical JSON with every default materialized. `indent` < 0 gives one line.
std::string dump_config(const RunConfig& cfg, int indent = 2);

/// FNV-1a 64 of the single-line canonical dump, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

/// Sets a sweepable parameter by dotted name: seed, policy.interval, flip.pi,
/// flip.burn_in, shrink_restore.lambda, shrink_restore.gamma, adapter.lr.
/// Unknown names throw ConfigError. No validation is performed.
void apply_override(RunConfig& cfg, const std::string& name, double value);

/// Derives independent sub-seeds (splitmix64) for the task, source sample,
/// model init, stream and policy generators.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_id);

enum SeedStream : std::uint64_t {
  kSeedTask = 1,
  kSeedSourceData = 2,
  kSeedInit = 3,
  kSeedStream = 4,
  kSeedPolicy = 5,
};

}  // namespace asr
