#include "asr/trace_io.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "asr/errors.hpp"
#include "json.hpp"

#ifndef ASR_VERSION
#define ASR_VERSION "dev"
#endif

namespace asr {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::size_t parse_count(const std::string& s) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("bad integer field '" + s + "'");
  return v;
}

bool parse_flag(const std::string& s) {
  if (s == "0") return false;
  if (s == "1") return true;
  throw FormatError("bad boolean field '" + s + "'");
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("bad numeric field '" + s + "'");
  return v;
}

std::string write_trace(const RunRecord& record, const RunConfig& cfg) {
  std::ostringstream out;
  out << "# asr-trace v1\n";
  out << "# tool_version: " << ASR_VERSION << "\n";
  out << "# config_hash: " << config_hash(cfg) << "\n";
  out << "# config: " << dump_config(cfg, -1) << "\n";
  out << kTraceColumns << "\n";
  for (const RunRow& r : record.rows) {
    out << r.step << ',' << to_string(r.domain) << ',' << format_double(r.severity) << ','
        << format_double(r.accuracy) << ',' << format_double(r.lf_raw) << ',' << format_double(r.lf_smoothed)
        << ',' << (r.min_estimate ? format_double(*r.min_estimate) : std::string()) << ','
        << (r.armed ? 1 : 0) << ',' << (r.triggered ? 1 : 0) << ',' << format_double(r.weight_norm) << ','
        << r.num_selected << '\n';
  }
  return out.str();
}

ParsedTrace parse_trace(const std::string& text) {
  ParsedTrace t;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# config: ", 0) == 0) t.config_json = line.substr(10);
      if (line.rfind("# config_hash: ", 0) == 0) t.config_hash = line.substr(15);
      continue;
    }
    if (!header_seen) {
      if (line != kTraceColumns) throw FormatError("trace header does not match the expected columns");
      header_seen = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 11) throw FormatError("line " + std::to_string(line_no) + ": expected 11 fields");
    try {
      RunRow r;
      r.step = parse_count(f[0]);
      r.domain = parse_corruption_tag(f[1]);
      r.severity = parse_double(f[2]);
      r.accuracy = parse_double(f[3]);
      r.lf_raw = parse_double(f[4]);
      r.lf_smoothed = parse_double(f[5]);
      if (!f[6].empty()) r.min_estimate = parse_double(f[6]);
      r.armed = parse_flag(f[7]);
      r.triggered = parse_flag(f[8]);
      r.weight_norm = parse_double(f[9]);
      r.num_selected = parse_count(f[10]);
      t.rows.push_back(r);
    } catch (const ConfigError& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header_seen) throw FormatError("trace has no header row");
  return t;
}

std::string write_trigger_log(const RunRecord& record) {
  std::ostringstream out;
  for (const auto& ev : record.triggers) {
    nlohmann::json j = {{"step", ev.step},
                        {"policy", std::string(to_string(ev.policy))},
                        {"pre_norm", ev.pre_norm},
                        {"post_norm", ev.post_norm}};
    out << j.dump() << '\n';
  }
  return out.str();
}

std::string write_sweep_table(const std::vector<SweepCell>& cells, const RunConfig& base) {
  std::ostringstream out;
  out << "# asr-sweep v1\n";
  out << "# tool_version: " << ASR_VERSION << "\n";
  out << "# base_config_hash: " << config_hash(base) << "\n";
  out << "# base_config: " << dump_config(base, -1) << "\n";
  out << "rank,cell";
  if (!cells.empty()) {
    for (const auto& [name, v] : cells.front().params) out << ',' << name;
  }
  out << ",mean_accuracy,triggers,error\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const SweepCell& c = cells[i];
    out << i + 1 << ',' << c.index;
    for (const auto& [name, v] : c.params) out << ',' << format_double(v);
    out << ',' << (c.mean_accuracy ? format_double(*c.mean_accuracy) : std::string()) << ',' << c.triggers << ',';
    std::string err = c.error;
    for (char& ch : err) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    out << err << '\n';
  }
  return out.str();
}

ReplayOutcome replay_trace(const ParsedTrace& trace, const RunConfig& cfg) {
  PolicyEngine engine(cfg.policy, cfg.flip, derive_seed(cfg.seed, kSeedPolicy));
  ReplayOutcome out;
  auto mismatch = [&](std::size_t step, const char* column) {
    out.identical = false;
    out.first_divergent_step = step;
    out.column = column;
    return out;
  };
  for (const RunRow& r : trace.rows) {
    const PolicyDecision d = engine.decide(r.lf_raw);
    if (r.step != engine.step()) return mismatch(r.step, "step");
    if (d.snapshot.lf_smoothed != r.lf_smoothed) return mismatch(r.step, "lf_smoothed");
    if (d.snapshot.min_estimate != r.min_estimate) return mismatch(r.step, "min_estimate");
    if (d.snapshot.armed != r.armed) return mismatch(r.step, "armed");
    if (d.triggered != r.triggered) return mismatch(r.step, "triggered");
  }
  return out;
}

}  // namespace asr
