#include "asr/adapters.hpp"

#include <cmath>
#include <string>

#include "asr/errors.hpp"

namespace asr {

namespace {

void check_loss(const LossGrad& lg, std::size_t step) {
  if (!std::isfinite(lg.loss)) throw NumericError("non-finite adaptation loss", step);
  for (double g : lg.grad) {
    if (!std::isfinite(g)) throw NumericError("non-finite adaptation gradient", step);
  }
}

double mean_entropy(const ProbOutput& out) {
  const auto h = row_entropy(out);
  double s = 0.0;
  for (double v : h) s += v;
  return h.empty() ? 0.0 : s / static_cast<double>(h.size());
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  const double na = l2_norm(a), nb = l2_norm(b);
  return (na == 0.0 || nb == 0.0) ? 0.0 : dot / (na * nb);
}

}  // namespace

std::string_view to_string(AdapterMethod m) {
  switch (m) {
    case AdapterMethod::kBnStats: return "bn-stats";
    case AdapterMethod::kTent: return "tent";
    case AdapterMethod::kEataLite: return "eata-lite";
  }
  return "unknown";
}

AdapterMethod parse_adapter_method(std::string_view name) {
  if (name == "bn-stats") return AdapterMethod::kBnStats;
  if (name == "tent") return AdapterMethod::kTent;
  if (name == "eata-lite") return AdapterMethod::kEataLite;
  throw ConfigError("unknown adapter method '" + std::string(name) + "'");
}

std::string_view to_string(MaskPolicy p) {
  return p == MaskPolicy::kNormAffineOnly ? "norm-affine-only" : "all-parameters";
}

MaskPolicy parse_mask_policy(std::string_view name) {
  if (name == "norm-affine-only") return MaskPolicy::kNormAffineOnly;
  if (name == "all-parameters") return MaskPolicy::kAllParameters;
  throw ConfigError("unknown trainable mask policy '" + std::string(name) + "'");
}

AdapterConfig AdapterConfig::defaults(AdapterMethod method, std::size_t num_classes) {
  AdapterConfig cfg;
  cfg.method = method;
  if (method != AdapterMethod::kBnStats) cfg.gradient = GradientParams{};
  if (method == AdapterMethod::kEataLite) {
    EataParams e;
    e.entropy_threshold = 0.4 * std::log(static_cast<double>(num_classes));
    cfg.eata = e;
  }
  return cfg;
}

void AdapterConfig::validate() const {
  const bool wants_gradient = method != AdapterMethod::kBnStats;
  const bool wants_eata = method == AdapterMethod::kEataLite;
  if (gradient.has_value() != wants_gradient) {
    throw ConfigError(std::string("adapter: lr/trainable ") + (wants_gradient ? "required" : "not allowed") +
                      " for method " + std::string(to_string(method)));
  }
  if (eata.has_value() != wants_eata) {
    throw ConfigError(std::string("adapter: eata-lite fields ") + (wants_eata ? "required" : "not allowed") +
                      " for method " + std::string(to_string(method)));
  }
  if (gradient && !(gradient->lr >= 0.0 && std::isfinite(gradient->lr))) {
    throw ConfigError("adapter: lr must be finite and >= 0");
  }
  if (eata) {
    if (!(eata->entropy_threshold >= 0.0)) throw ConfigError("adapter: entropy_threshold must be >= 0");
    if (!(eata->diversity_threshold > 0.0 && eata->diversity_threshold <= 1.0)) {
      throw ConfigError("adapter: diversity_threshold must be in (0, 1]");
    }
    if (!(eata->anchor_weight >= 0.0)) throw ConfigError("adapter: anchor_weight must be >= 0");
    if (!(eata->prob_momentum >= 0.0 && eata->prob_momentum < 1.0)) {
      throw ConfigError("adapter: prob_momentum must be in [0, 1)");
    }
  }
}

AdaptStepResult bn_stats_step(ModelState& model, const Batch& batch) {
  if (batch.size() < 2) throw DegenerateInputError("bn-stats needs at least two samples");
  AdaptStepResult r;
  r.before = forward(model, batch.features);
  update_norm_stats(model, batch.features, 1.0);
  r.after = forward(model, batch.features);
  r.loss = mean_entropy(r.after);
  r.num_selected = batch.size();
  return r;
}

AdaptStepResult tent_step(ModelState& model, const Batch& batch, const AdapterConfig& cfg) {
  if (!cfg.gradient) throw ConfigError("tent requires gradient settings");
  const ParamMask mask = make_mask(model.arch(), cfg.gradient->trainable);
  AdaptStepResult r;
  r.before = forward(model, batch.features);
  if (cfg.update_stats) update_norm_stats(model, batch.features, model.stats_momentum());
  LossGrad lg = entropy_and_grad(model, batch, mask);
  check_loss(lg, batch.step);
  sgd_step(model, lg.grad, cfg.gradient->lr, mask);
  r.after = forward(model, batch.features);
  r.loss = lg.loss;
  r.num_selected = batch.size();
  return r;
}

AdaptStepResult eata_lite_step(ModelState& model, const Batch& batch, const AdapterConfig& cfg,
                               std::optional<std::vector<double>>& running_avg) {
  if (!cfg.gradient || !cfg.eata) throw ConfigError("eata-lite requires gradient and eata settings");
  const EataParams& e = *cfg.eata;
  if (batch.size() == 0) throw DegenerateInputError("empty batch");
  const ParamMask mask = make_mask(model.arch(), cfg.gradient->trainable);

  AdaptStepResult r;
  r.before = forward(model, batch.features);
  if (cfg.update_stats) update_norm_stats(model, batch.features, model.stats_momentum());
  const ProbOutput current = cfg.update_stats ? forward(model, batch.features) : r.before;
  const std::vector<double> entropy = row_entropy(current);

  const std::size_t n = batch.size(), k = model.arch().num_classes;
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(entropy[i] < e.entropy_threshold)) continue;
    if (running_avg && cosine(current.probs.row(i), *running_avg) > e.diversity_threshold) continue;
    selected.push_back(i);
  }
  r.num_selected = selected.size();

  if (!selected.empty()) {
    std::vector<double> weights(n, 0.0);
    const double inv = 1.0 / static_cast<double>(selected.size());
    for (std::size_t i : selected) weights[i] = std::exp(e.entropy_threshold - entropy[i]) * inv;
    LossGrad lg = weighted_entropy_and_grad(model, batch.features, weights);
    const auto theta = model.theta();
    const auto source = model.source_theta();
    for (std::size_t j = 0; j < lg.grad.size(); ++j) {
      if (!mask[j]) {
        lg.grad[j] = 0.0;
        continue;
      }
      const double diff = theta[j] - source[j];
      lg.loss += e.anchor_weight * diff * diff;
      lg.grad[j] += 2.0 * e.anchor_weight * diff;
    }
    check_loss(lg, batch.step);
    sgd_step(model, lg.grad, cfg.gradient->lr, mask);
    r.loss = lg.loss;

    std::vector<double> mean(k, 0.0);
    for (std::size_t i : selected) {
      for (std::size_t c = 0; c < k; ++c) mean[c] += current.probs(i, c) * inv;
    }
    if (running_avg) {
      for (std::size_t c = 0; c < k; ++c) {
        (*running_avg)[c] = e.prob_momentum * (*running_avg)[c] + (1.0 - e.prob_momentum) * mean[c];
      }
    } else {
      running_avg = std::move(mean);
    }
  }
  r.after = forward(model, batch.features);
  return r;
}

Adapter::Adapter(AdapterConfig cfg, const Architecture& arch) : cfg_(std::move(cfg)) {
  cfg_.validate();
  arch.validate();
}

AdaptStepResult Adapter::step(ModelState& model, const Batch& batch) {
  switch (cfg_.method) {
    case AdapterMethod::kBnStats: return bn_stats_step(model, batch);
    case AdapterMethod::kTent: return tent_step(model, batch, cfg_);
    case AdapterMethod::kEataLite: return eata_lite_step(model, batch, cfg_, running_avg_);
  }
  throw ConfigError("unknown adapter method");
}

void Adapter::reset() { running_avg_.reset(); }

}  // namespace asr
