#include "asr/config.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <utility>

#include "asr/errors.hpp"
#include "asr/fileio.hpp"
#include "json.hpp"

namespace asr {

using nlohmann::json;

namespace {

// Object view that remembers which keys were read so leftovers can be rejected.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  ~Section() = default;

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  const json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string path(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + path_ + "." + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_architecture(Section s, Architecture& a) {
  s.get("input_dim", a.input_dim);
  s.get("hidden_widths", a.hidden_widths);
  s.get("num_classes", a.num_classes);
  if (s.has("norm_after_hidden")) {
    s.get("norm_after_hidden", a.norm_after_hidden);
  } else {
    a.norm_after_hidden.assign(a.hidden_widths.size(), true);
  }
  s.finish();
}

void parse_corruption(Section s, CorruptionConstants& c) {
  s.get("noise_sigma0", c.noise_sigma0);
  s.get("scale_alpha", c.scale_alpha);
  s.get("rotation_per_severity", c.rotation_per_severity);
  s.get("mask_fraction", c.mask_fraction);
  s.get("shift_per_severity", c.shift_per_severity);
  s.finish();
}

void parse_stream(Section s, StreamConfig& st) {
  s.get("batch_size", st.batch_size);
  if (s.has("segments")) {
    const json& segs = s.at("segments");
    if (!segs.is_array()) throw ConfigError(s.path("segments") + ": expected an array");
    st.schedule.segments.clear();
    for (std::size_t i = 0; i < segs.size(); ++i) {
      Section seg(segs[i], s.path("segments") + "[" + std::to_string(i) + "]");
      Segment out;
      std::string kind;
      seg.get("kind", kind);
      if (kind.empty()) throw ConfigError(s.path("segments") + ": segment kind required");
      out.kind = parse_corruption_tag(kind);
      seg.get("severity", out.severity);
      seg.get("hold", out.hold);
      seg.finish();
      st.schedule.segments.push_back(out);
    }
  }
  const std::size_t boundaries = st.schedule.segments.empty() ? 0 : st.schedule.segments.size() - 1;
  if (s.has("transition_steps")) {
    const json& t = s.at("transition_steps");
    try {
      if (t.is_array()) {
        st.schedule.transitions = t.get<std::vector<std::size_t>>();
      } else {
        st.schedule.transitions.assign(boundaries, t.get<std::size_t>());
      }
    } catch (const json::exception&) {
      throw ConfigError(s.path("transition_steps") + ": wrong type");
    }
  } else if (st.schedule.transitions.size() != boundaries) {
    st.schedule.transitions.assign(boundaries, 0);
  }
  if (s.has("corruption")) parse_corruption(Section(s.at("corruption"), s.path("corruption")), st.corruption);
  s.finish();
}

void parse_adapter(Section s, RunConfig& cfg) {
  std::string method = std::string(to_string(cfg.adapter.method));
  s.get("method", method);
  AdapterConfig a = AdapterConfig::defaults(parse_adapter_method(method), cfg.architecture.num_classes);
  const bool gradient_method = a.method != AdapterMethod::kBnStats;
  const bool eata_method = a.method == AdapterMethod::kEataLite;
  for (const char* key : {"lr", "trainable"}) {
    if (!gradient_method && s.has(key)) {
      throw ConfigError(s.path(key) + " is not allowed for method bn-stats");
    }
  }
  for (const char* key : {"entropy_threshold", "diversity_threshold", "anchor_weight", "prob_momentum"}) {
    if (!eata_method && s.has(key)) {
      throw ConfigError(s.path(key) + " is only allowed for method eata-lite");
    }
  }
  if (gradient_method) {
    s.get("lr", a.gradient->lr);
    std::string trainable(to_string(a.gradient->trainable));
    s.get("trainable", trainable);
    a.gradient->trainable = parse_mask_policy(trainable);
  }
  if (eata_method) {
    s.get("entropy_threshold", a.eata->entropy_threshold);
    s.get("diversity_threshold", a.eata->diversity_threshold);
    s.get("anchor_weight", a.eata->anchor_weight);
    s.get("prob_momentum", a.eata->prob_momentum);
  }
  s.get("update_stats", a.update_stats);
  s.get("stats_momentum", cfg.stats_momentum);
  s.finish();
  cfg.adapter = a;
}

void parse_policy(Section s, PolicyConfig& p) {
  std::string kind(to_string(p.kind));
  s.get("kind", kind);
  p.kind = parse_policy_kind(kind);
  s.get("interval", p.interval);
  if (s.has("interval_range")) {
    std::vector<std::size_t> range;
    s.get("interval_range", range);
    if (range.size() != 2) throw ConfigError(s.path("interval_range") + ": expected [lo, hi]");
    p.interval_lo = range[0];
    p.interval_hi = range[1];
  }
  p.reinit = p.kind == PolicyKind::kAsr ? ReinitMode::kShrinkRestore : ReinitMode::kFullRestore;
  if (s.has("reinit")) {
    std::string reinit;
    s.get("reinit", reinit);
    p.reinit = parse_reinit_mode(reinit);
  }
  s.finish();
}

json to_json(const RunConfig& c) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = c.seed;
  j["architecture"] = {{"input_dim", c.architecture.input_dim},
                       {"hidden_widths", c.architecture.hidden_widths},
                       {"num_classes", c.architecture.num_classes},
                       {"norm_after_hidden", c.architecture.norm_after_hidden}};
  j["task"] = {{"class_separation", c.task.class_separation}, {"noise_std", c.task.noise_std}};
  j["source"] = {{"samples", c.source.samples},
                 {"epochs", c.source.training.epochs},
                 {"batch_size", c.source.training.batch_size},
                 {"lr", c.source.training.lr}};
  json segs = json::array();
  for (const auto& s : c.stream.schedule.segments) {
    segs.push_back({{"kind", std::string(to_string(s.kind))}, {"severity", s.severity}, {"hold", s.hold}});
  }
  const auto& k = c.stream.corruption;
  j["stream"] = {{"batch_size", c.stream.batch_size},
                 {"segments", segs},
                 {"transition_steps", c.stream.schedule.transitions},
                 {"corruption",
                  {{"noise_sigma0", k.noise_sigma0},
                   {"scale_alpha", k.scale_alpha},
                   {"rotation_per_severity", k.rotation_per_severity},
                   {"mask_fraction", k.mask_fraction},
                   {"shift_per_severity", k.shift_per_severity}}}};
  json a = {{"method", std::string(to_string(c.adapter.method))},
            {"update_stats", c.adapter.update_stats},
            {"stats_momentum", c.stats_momentum}};
  if (c.adapter.gradient) {
    a["lr"] = c.adapter.gradient->lr;
    a["trainable"] = std::string(to_string(c.adapter.gradient->trainable));
  }
  if (c.adapter.eata) {
    a["entropy_threshold"] = c.adapter.eata->entropy_threshold;
    a["diversity_threshold"] = c.adapter.eata->diversity_threshold;
    a["anchor_weight"] = c.adapter.eata->anchor_weight;
    a["prob_momentum"] = c.adapter.eata->prob_momentum;
  }
  j["adapter"] = a;
  j["policy"] = {{"kind", std::string(to_string(c.policy.kind))},
                 {"interval", c.policy.interval},
                 {"interval_range", {c.policy.interval_lo, c.policy.interval_hi}},
                 {"reinit", std::string(to_string(c.policy.reinit))}};
  j["flip"] = {{"beta", c.flip.beta},
               {"pi", c.flip.pi},
               {"neighborhood_radius", c.flip.neighborhood_radius},
               {"burn_in", c.flip.burn_in}};
  j["shrink_restore"] = {{"lambda", c.shrink_restore.lambda}, {"gamma", c.shrink_restore.gamma}};
  j["output"] = {{"dir", c.output.dir}, {"plasticity_window", c.output.plasticity_window}};
  return j;
}

}  // namespace

void RunConfig::validate() const {
  architecture.validate();
  if (!(task.class_separation > 0.0) || !(task.noise_std > 0.0)) {
    throw ConfigError("task: class_separation and noise_std must be > 0");
  }
  if (source.samples < 1) throw ConfigError("source: samples must be >= 1");
  if (source.training.batch_size < 2) throw ConfigError("source: batch_size must be >= 2");
  if (!(source.training.lr > 0.0)) throw ConfigError("source: lr must be > 0");
  if (stream.batch_size < 1) throw ConfigError("stream: batch_size must be >= 1");
  if (adapter.method == AdapterMethod::kBnStats && stream.batch_size < 2) {
    throw ConfigError("stream: bn-stats needs batch_size >= 2");
  }
  DomainSchedule::build(stream.schedule);
  stream.corruption.validate();
  adapter.validate();
  if (!(stats_momentum > 0.0 && stats_momentum <= 1.0)) throw ConfigError("adapter: stats_momentum must be in (0, 1]");
  policy.validate();
  flip.validate();
  shrink_restore.validate();
  if (output.plasticity_window < 1) throw ConfigError("output: plasticity_window must be >= 1");
}

ScheduleSpec default_schedule() {
  using enum CorruptionTag;
  ScheduleSpec s;
  const std::pair<CorruptionTag, double> away[] = {
      {kGaussianNoise, 5.0}, {kFeatureMask, 5.0}, {kFeatureScale, 5.0}, {kGaussianNoise, 5.0}, {kMeanShift, 5.0}};
  const double rotation[] = {5.0, 4.0, 5.0, 3.0, 5.0};
  for (std::size_t i = 0; i < 5; ++i) {
    s.segments.push_back(Segment{away[i].first, away[i].second, 4000});
    s.segments.push_back(Segment{kPlaneRotation, rotation[i], 4000});
  }
  s.segments.back().hold = 5000;
  s.transitions.assign(s.segments.size() - 1, 1000);
  return s;
}

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.stream.schedule = default_schedule();
  cfg.adapter = AdapterConfig::defaults(AdapterMethod::kTent, cfg.architecture.num_classes);
  return cfg;
}

RunConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg = default_run_config();
  Section s(root, "config");
  int version = kSchemaVersion;
  s.get("schema_version", version);
  if (version != kSchemaVersion) throw ConfigError("unsupported schema_version " + std::to_string(version));
  s.get("seed", cfg.seed);
  if (s.has("architecture")) parse_architecture(Section(s.at("architecture"), "architecture"), cfg.architecture);
  if (s.has("task")) {
    Section t(s.at("task"), "task");
    t.get("class_separation", cfg.task.class_separation);
    t.get("noise_std", cfg.task.noise_std);
    t.finish();
  }
  if (s.has("source")) {
    Section t(s.at("source"), "source");
    t.get("samples", cfg.source.samples);
    t.get("epochs", cfg.source.training.epochs);
    t.get("batch_size", cfg.source.training.batch_size);
    t.get("lr", cfg.source.training.lr);
    t.finish();
  }
  if (s.has("stream")) parse_stream(Section(s.at("stream"), "stream"), cfg.stream);
  cfg.adapter = AdapterConfig::defaults(cfg.adapter.method, cfg.architecture.num_classes);
  if (s.has("adapter")) parse_adapter(Section(s.at("adapter"), "adapter"), cfg);
  if (s.has("policy")) parse_policy(Section(s.at("policy"), "policy"), cfg.policy);
  if (s.has("flip")) {
    Section t(s.at("flip"), "flip");
    t.get("beta", cfg.flip.beta);
    t.get("pi", cfg.flip.pi);
    t.get("neighborhood_radius", cfg.flip.neighborhood_radius);
    t.get("burn_in", cfg.flip.burn_in);
    t.finish();
  }
  if (s.has("shrink_restore")) {
    Section t(s.at("shrink_restore"), "shrink_restore");
    t.get("lambda", cfg.shrink_restore.lambda);
    t.get("gamma", cfg.shrink_restore.gamma);
    t.finish();
  }
  if (s.has("output")) {
    Section t(s.at("output"), "output");
    t.get("dir", cfg.output.dir);
    t.get("plasticity_window", cfg.output.plasticity_window);
    t.finish();
  }
  s.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

std::string dump_config(const RunConfig& cfg, int indent) { return to_json(cfg).dump(indent); }

std::string config_hash(const RunConfig& cfg) {
  const std::string text = dump_config(cfg, -1);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void apply_override(RunConfig& cfg, const std::string& name, double value) {
  auto as_count = [&](const char* what) {
    if (!(value >= 0.0) || value != std::floor(value)) throw ConfigError(std::string(what) + " must be a non-negative integer");
    return static_cast<std::size_t>(value);
  };
  if (name == "seed") {
    cfg.seed = as_count("seed");
  } else if (name == "policy.interval") {
    cfg.policy.interval = as_count("policy.interval");
  } else if (name == "flip.pi") {
    cfg.flip.pi = value;
  } else if (name == "flip.burn_in") {
    cfg.flip.burn_in = as_count("flip.burn_in");
  } else if (name == "shrink_restore.lambda") {
    cfg.shrink_restore.lambda = value;
  } else if (name == "shrink_restore.gamma") {
    cfg.shrink_restore.gamma = value;
  } else if (name == "adapter.lr") {
    if (!cfg.adapter.gradient) throw ConfigError("adapter.lr does not apply to " + std::string(to_string(cfg.adapter.method)));
    cfg.adapter.gradient->lr = value;
  } else {
    throw ConfigError("unknown sweep parameter '" + name + "'");
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_id) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream_id + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace asr
