#include "asr/harness.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <thread>

#include "asr/adapters.hpp"
#include "asr/errors.hpp"
#include "asr/flip.hpp"

namespace asr {

double RunRecord::mean_accuracy() const { return asr::mean_accuracy(*this, 0, rows.size()); }

double mean_accuracy(const RunRecord& r, std::size_t begin, std::size_t end) {
  end = std::min(end, r.rows.size());
  if (begin >= end) return 0.0;
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += r.rows[i].accuracy;
  return s / static_cast<double>(end - begin);
}

GaussianTask make_config_task(const RunConfig& cfg) {
  return make_task(cfg.architecture.input_dim, cfg.architecture.num_classes, cfg.task.class_separation,
                   cfg.task.noise_std, derive_seed(cfg.seed, kSeedTask));
}

SourceModel prepare_source(const RunConfig& cfg) {
  cfg.validate();
  SourceModel out;
  out.task = make_config_task(cfg);
  std::mt19937_64 rng(derive_seed(cfg.seed, kSeedSourceData));
  LabeledBatch data = sample_clean(out.task, cfg.source.samples, rng);
  TrainResult trained = train_source(cfg.architecture, data.batch.features, data.labels, cfg.source.training,
                                     derive_seed(cfg.seed, kSeedInit));
  out.model = std::move(trained.model);
  out.clean_accuracy = trained.clean_accuracy;
  return out;
}

DriftStream make_stream(const RunConfig& cfg, GaussianTask task) {
  return DriftStream(DomainSchedule::build(cfg.stream.schedule), std::move(task), cfg.stream.corruption,
                     derive_seed(cfg.seed, kSeedStream));
}

RunRecord run_experiment(const RunConfig& cfg, const ModelState& source, const StepObserver& observer) {
  cfg.validate();
  if (!(source.arch() == cfg.architecture)) {
    throw ConfigError("source model architecture does not match the config");
  }
  ModelState model = source;
  model.set_mode(StatsMode::kRunning);
  model.set_stats_momentum(cfg.stats_momentum);
  const std::uint64_t source_hash = hash_values(model.source_theta());

  DriftStream stream = make_stream(cfg, make_config_task(cfg));
  Adapter adapter(cfg.adapter, cfg.architecture);
  PolicyEngine policy(cfg.policy, cfg.flip, derive_seed(cfg.seed, kSeedPolicy));

  RunRecord record;
  record.rows.reserve(stream.schedule().total_steps());
  while (auto lb = stream.sample_batch(cfg.stream.batch_size)) {
    const std::size_t step = lb->batch.step + 1;
    const BlendedCorruption blend = stream.schedule().severity_at(lb->batch.step);
    AdaptStepResult res;
    try {
      res = adapter.step(model, lb->batch);
    } catch (const NumericError& e) {
      throw RunError(e.reason(), step, std::move(record));
    }

    RunRow row;
    row.step = step;
    row.domain = blend.dominant();
    row.severity = blend.severity();
    row.accuracy = accuracy(res.before, lb->labels);
    row.num_selected = res.num_selected;

    const PolicyDecision decision = policy.decide(label_flip_score(res.before, res.after));
    row.lf_raw = decision.snapshot.lf_raw;
    row.lf_smoothed = decision.snapshot.lf_smoothed;
    row.min_estimate = decision.snapshot.min_estimate;
    row.armed = decision.snapshot.armed;
    row.triggered = decision.triggered;
    if (decision.triggered) {
      TriggerEvent ev{step, cfg.policy.kind, weight_l2_norm(model), 0.0};
      reinitialize(model, cfg.policy.reinit, cfg.shrink_restore);
      adapter.reset();
      ev.post_norm = weight_l2_norm(model);
      record.triggers.push_back(ev);
    }
    row.weight_norm = weight_l2_norm(model);
    record.rows.push_back(row);
    if (observer) observer(row, model);
  }
  if (hash_values(model.source_theta()) != source_hash) {
    throw ContractError("source parameters changed during the run");
  }
  return record;
}

RunRecord run_experiment(const RunConfig& cfg) {
  const SourceModel src = prepare_source(cfg);
  return run_experiment(cfg, src.model);
}

std::vector<double> windowed_accuracy(const RunRecord& r, std::size_t window) {
  if (window == 0) throw ContractError("window must be >= 1");
  std::vector<double> out;
  for (std::size_t b = 0; b < r.rows.size(); b += window) out.push_back(mean_accuracy(r, b, b + window));
  return out;
}

std::vector<double> paired_gap(const RunRecord& a, const RunRecord& b, std::size_t window) {
  if (a.rows.size() != b.rows.size()) throw ContractError("paired_gap needs records of equal length");
  const auto wa = windowed_accuracy(a, window);
  const auto wb = windowed_accuracy(b, window);
  std::vector<double> gap(wa.size());
  for (std::size_t i = 0; i < gap.size(); ++i) gap[i] = wa[i] - wb[i];
  return gap;
}

namespace {

std::string source_key(const RunConfig& c) {
  RunConfig k = default_run_config();
  k.seed = c.seed;
  k.architecture = c.architecture;
  k.task = c.task;
  k.source = c.source;
  return dump_config(k, -1);
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  threads = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

}  // namespace

std::vector<SweepCell> sweep(const RunConfig& base, const std::vector<SweepAxis>& grid, std::size_t threads) {
  // Reject unknown axis names up front rather than per cell.
  for (const auto& axis : grid) {
    RunConfig probe = base;
    if (axis.values.empty()) throw ConfigError("sweep axis '" + axis.name + "' has no values");
    apply_override(probe, axis.name, axis.values.front());
  }

  std::vector<SweepCell> cells(1);
  for (const auto& axis : grid) {
    std::vector<SweepCell> next;
    for (const auto& c : cells) {
      for (double v : axis.values) {
        SweepCell n = c;
        n.params.emplace_back(axis.name, v);
        next.push_back(std::move(n));
      }
    }
    cells = std::move(next);
  }

  std::vector<std::optional<RunConfig>> configs(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    cells[i].index = i;
    RunConfig cfg = base;
    try {
      for (const auto& [name, value] : cells[i].params) apply_override(cfg, name, value);
      cfg.validate();
      configs[i] = cfg;
    } catch (const Error& e) {
      cells[i].error = std::string("config error: ") + e.what();
    }
  }

  // Distinct source models, each trained once.
  std::map<std::string, std::size_t> key_index;
  std::vector<const RunConfig*> key_configs;
  std::vector<std::size_t> cell_source(cells.size(), 0);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!configs[i]) continue;
    const std::string key = source_key(*configs[i]);
    auto [it, inserted] = key_index.emplace(key, key_configs.size());
    if (inserted) key_configs.push_back(&*configs[i]);
    cell_source[i] = it->second;
  }
  std::vector<std::optional<SourceModel>> sources(key_configs.size());
  std::vector<std::string> source_errors(key_configs.size());
  parallel_for(key_configs.size(), threads, [&](std::size_t k) {
    try {
      sources[k] = prepare_source(*key_configs[k]);
    } catch (const std::exception& e) {
      source_errors[k] = e.what();
    }
  });

  parallel_for(cells.size(), threads, [&](std::size_t i) {
    if (!configs[i]) return;
    const std::size_t k = cell_source[i];
    if (!sources[k]) {
      cells[i].error = "source training failed: " + source_errors[k];
      return;
    }
    try {
      const RunRecord r = run_experiment(*configs[i], sources[k]->model);
      cells[i].mean_accuracy = r.mean_accuracy();
      cells[i].triggers = r.trigger_count();
    } catch (const std::exception& e) {
      cells[i].error = e.what();
    }
  });

  std::stable_sort(cells.begin(), cells.end(), [](const SweepCell& a, const SweepCell& b) {
    if (a.mean_accuracy.has_value() != b.mean_accuracy.has_value()) return a.mean_accuracy.has_value();
    if (a.mean_accuracy && *a.mean_accuracy != *b.mean_accuracy) return *a.mean_accuracy > *b.mean_accuracy;
    return a.index < b.index;
  });
  return cells;
}

}  // namespace asr
