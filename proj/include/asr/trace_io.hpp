#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "asr/config.hpp"
#include "asr/harness.hpp"

namespace asr {

inline constexpr const char* kTraceColumns =
    "step,domain,severity,accuracy,lf_raw,lf_smoothed,min_estimate,armed,triggered,weight_norm,num_selected";

/// Shortest decimal that parses back to the identical double.
std::string format_double(double v);
double parse_double(const std::string& s);

/// Trace CSV: '#' comment lines (format, tool version, config hash, one-line
/// config echo), the fixed header row, then one row per step. An unset
/// min_estimate is an empty field; booleans are 0/1.
std::string write_trace(const RunRecord& record, const RunConfig& cfg);

struct ParsedTrace {
  std::optional<std::string> config_json;
  std::optional<std::string> config_hash;
  std::vector<RunRow> rows;
};

/// Throws FormatError on a missing header, wrong column order or bad fields.
ParsedTrace parse_trace(const std::string& text);

/// One JSON object per trigger: step, policy, pre_norm, post_norm.
std::string write_trigger_log(const RunRecord& record);

/// Results table: comment lines with the base-config hash, then
/// rank,cell,<param columns>,mean_accuracy,triggers,error.
std::string write_sweep_table(const std::vector<SweepCell>& cells, const RunConfig& base);

struct ReplayOutcome {
  bool identical = true;
  std::size_t first_divergent_step = 0;
  std::string column;  // first mismatching column at that step
};

/// Recomputes lf_smoothed, min_estimate, armed and triggered from the lf_raw
/// column alone and compares them exactly with the recorded values.
ReplayOutcome replay_trace(const ParsedTrace& trace, const RunConfig& cfg);

}  // namespace asr
