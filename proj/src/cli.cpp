#include "asr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "asr/checkpoint.hpp"
#include "asr/config.hpp"
#include "asr/errors.hpp"
#include "asr/fileio.hpp"
#include "asr/harness.hpp"
#include "asr/plot.hpp"
#include "asr/trace_io.hpp"

namespace asr::cli {

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed_override;
  std::string out_dir;
  std::size_t threads = 1;
};

int fail(std::ostream& err, int code, const char* kind, const std::string& message) {
  std::string flat = message;
  std::replace(flat.begin(), flat.end(), '\n', ' ');
  err << "error: code=" << code << " kind=" << kind << " message=" << flat << '\n';
  return code;
}

RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig cfg = g.config.empty() ? default_run_config() : load_config(g.config);
  if (g.seed_override) cfg.seed = *g.seed_override;
  if (!g.out_dir.empty()) cfg.output.dir = g.out_dir;
  cfg.validate();
  return cfg;
}

int cmd_train_source(const GlobalOptions& g, const std::string& out_path, std::ostream& out) {
  const RunConfig cfg = resolve_config(g);
  const fs::path path = out_path.empty() ? fs::path(cfg.output.dir) / "source.ckpt" : fs::path(out_path);
  const SourceModel src = prepare_source(cfg);
  save_checkpoint(src.model, path);
  out << "checkpoint=" << path.string() << " clean_accuracy=" << format_double(src.clean_accuracy)
      << " parameters=" << src.model.theta().size() << '\n';
  return kOk;
}

void write_run_outputs(const fs::path& dir, const RunRecord& record, const RunConfig& cfg) {
  write_file_atomic(dir / "trace.csv", write_trace(record, cfg));
  write_file_atomic(dir / "triggers.jsonl", write_trigger_log(record));
  write_file_atomic(dir / "config.json", dump_config(cfg) + "\n");
}

int cmd_run(const GlobalOptions& g, const std::string& checkpoint, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve_config(g);
  const fs::path dir(cfg.output.dir);
  ModelState source;
  if (checkpoint.empty()) {
    source = prepare_source(cfg).model;
  } else {
    try {
      source = load_checkpoint(checkpoint);
    } catch (const Error& e) {
      throw ConfigError(std::string("cannot load checkpoint: ") + e.what());
    }
    if (!(source.arch() == cfg.architecture)) {
      throw ConfigError("checkpoint architecture does not match the config");
    }
  }
  try {
    const RunRecord record = run_experiment(cfg, source);
    write_run_outputs(dir, record, cfg);
    out << "rows=" << record.rows.size() << " mean_accuracy=" << format_double(record.mean_accuracy())
        << " triggers=" << record.trigger_count() << " trace=" << (dir / "trace.csv").string() << '\n';
  } catch (const RunError& e) {
    write_run_outputs(dir, e.partial(), cfg);
    return fail(err, kRunFailure, "numeric", e.what());
  }
  return kOk;
}

std::vector<SweepAxis> parse_grid(const std::vector<std::string>& specs) {
  std::vector<SweepAxis> grid;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("grid axis must look like name=v1,v2,...: " + spec);
    SweepAxis axis;
    axis.name = spec.substr(0, eq);
    std::stringstream values(spec.substr(eq + 1));
    std::string item;
    while (std::getline(values, item, ',')) {
      try {
        axis.values.push_back(parse_double(item));
      } catch (const FormatError&) {
        throw ConfigError("bad grid value '" + item + "' for " + axis.name);
      }
    }
    grid.push_back(std::move(axis));
  }
  return grid;
}

int cmd_sweep(const GlobalOptions& g, const std::vector<std::string>& grid_specs, std::ostream& out) {
  const RunConfig cfg = resolve_config(g);
  const auto grid = parse_grid(grid_specs);
  const auto cells = sweep(cfg, grid, std::max<std::size_t>(1, g.threads));
  const fs::path path = fs::path(cfg.output.dir) / "results.csv";
  write_file_atomic(path, write_sweep_table(cells, cfg));
  std::size_t failed = 0;
  for (const auto& c : cells) failed += c.mean_accuracy ? 0 : 1;
  out << "cells=" << cells.size() << " failed=" << failed << " table=" << path.string() << '\n';
  return kOk;
}

int cmd_replay(const GlobalOptions& g, const std::string& trace_path, std::optional<double> pi, std::ostream& out) {
  ParsedTrace trace;
  try {
    trace = parse_trace(read_file(trace_path));
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  RunConfig cfg;
  if (!g.config.empty()) {
    cfg = load_config(g.config);
  } else if (trace.config_json) {
    cfg = parse_config(*trace.config_json);
  } else {
    throw ConfigError("trace carries no config echo; pass --config");
  }
  if (pi) cfg.flip.pi = *pi;
  cfg.validate();
  const ReplayOutcome r = replay_trace(trace, cfg);
  if (r.identical) {
    out << "replay: identical rows=" << trace.rows.size() << '\n';
    return kOk;
  }
  out << "replay: mismatch step=" << r.first_divergent_step << " column=" << r.column << '\n';
  return kReplayMismatch;
}

int cmd_plot(const std::vector<std::string>& traces, const std::string& out_path, std::size_t window,
             std::ostream& out) {
  std::vector<PlotSeries> series;
  for (const auto& path : traces) {
    ParsedTrace t;
    try {
      t = parse_trace(read_file(path));
    } catch (const InputError& e) {
      throw FormatError(e.what());
    }
    series.push_back(PlotSeries{fs::path(path).parent_path().filename().string() + "/" +
                                    fs::path(path).filename().string(),
                                std::move(t.rows)});
  }
  write_file_atomic(out_path, render_svg(series, window));
  out << "svg=" << out_path << '\n';
  return kOk;
}

int cmd_dump_stream(const GlobalOptions& g, std::size_t batches, const std::string& out_path, std::ostream& out) {
  const RunConfig cfg = resolve_config(g);
  DriftStream stream = make_stream(cfg, make_config_task(cfg));
  std::ostringstream csv;
  csv << "step,label";
  for (std::size_t j = 0; j < cfg.architecture.input_dim; ++j) csv << ",x" << j;
  csv << '\n';
  std::size_t written = 0;
  for (std::size_t b = 0; b < batches; ++b) {
    auto lb = stream.sample_batch(cfg.stream.batch_size);
    if (!lb) break;
    for (std::size_t i = 0; i < lb->labels.size(); ++i) {
      csv << lb->batch.step << ',' << lb->labels[i];
      for (double v : lb->batch.features.row(i)) csv << ',' << format_double(v);
      csv << '\n';
    }
    ++written;
  }
  const fs::path path = out_path.empty() ? fs::path(cfg.output.dir) / "stream.csv" : fs::path(out_path);
  write_file_atomic(path, csv.str());
  out << "batches=" << written << " csv=" << path.string() << '\n';
  return kOk;
}

}  // namespace

int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Continual test-time adaptation testbed with adaptive shrink-restore", "asr"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config, "Run config (JSON)");
  app.add_option("--seed-override", g.seed_override, "Replace the config seed");
  app.add_option("--out-dir", g.out_dir, "Output directory (default: output.dir of the config)");
  app.add_option("--threads", g.threads, "Worker threads (sweep only)")->check(CLI::PositiveNumber);

  std::string ckpt_out;
  auto* train = app.add_subcommand("train-source", "Train the source model and write a checkpoint");
  train->add_option("--out", ckpt_out, "Checkpoint path (default <out-dir>/source.ckpt)");

  std::string ckpt_in;
  auto* run = app.add_subcommand("run", "Run one experiment and write trace.csv and triggers.jsonl");
  run->add_option("--checkpoint", ckpt_in, "Source checkpoint (trained from the config when omitted)");

  std::vector<std::string> grid;
  auto* sw = app.add_subcommand("sweep", "Run a parameter grid and write results.csv");
  sw->add_option("--grid", grid, "Axis as name=v1,v2,... (repeatable)")->required();

  std::string trace_path;
  std::optional<double> pi;
  auto* replay = app.add_subcommand("replay-trace", "Recompute trigger columns from lf_raw and compare");
  replay->add_option("--trace", trace_path, "Trace CSV")->required();
  replay->add_option("--pi", pi, "Override the trigger threshold");

  std::vector<std::string> plot_traces;
  std::string svg_out;
  std::size_t window = 500;
  auto* plot = app.add_subcommand("plot", "Render traces as an SVG chart");
  plot->add_option("--trace", plot_traces, "Trace CSV (repeatable)")->required();
  plot->add_option("--out", svg_out, "SVG path")->required();
  plot->add_option("--window", window, "Accuracy window in steps");

  std::size_t batches = 10;
  std::string dump_out;
  auto* dump = app.add_subcommand("dump-stream", "Write the first N stream batches as CSV");
  dump->add_option("--batches", batches, "Number of batches");
  dump->add_option("--out", dump_out, "CSV path (default <out-dir>/stream.csv)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    return fail(err, kConfigError, "usage", e.what());
  }

  try {
    if (*train) return cmd_train_source(g, ckpt_out, out);
    if (*run) return cmd_run(g, ckpt_in, out, err);
    if (*sw) return cmd_sweep(g, grid, out);
    if (*replay) return cmd_replay(g, trace_path, pi, out);
    if (*plot) return cmd_plot(plot_traces, svg_out, window, out);
    if (*dump) return cmd_dump_stream(g, batches, dump_out, out);
  } catch (const TrainingError& e) {
    return fail(err, kRunFailure, "training", e.what());
  } catch (const NumericError& e) {
    return fail(err, kRunFailure, "numeric", e.what());
  } catch (const ConfigError& e) {
    return fail(err, kConfigError, "config", e.what());
  } catch (const FormatError& e) {
    return fail(err, kConfigError, "format", e.what());
  } catch (const Error& e) {
    return fail(err, kConfigError, "input", e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(err, kConfigError, "io", e.what());
  }
  return fail(err, kConfigError, "usage", "no subcommand");
}

}  // namespace asr::cli
