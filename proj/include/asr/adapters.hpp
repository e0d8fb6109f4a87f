#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "asr/model.hpp"

namespace asr {

enum class AdapterMethod { kBnStats, kTent, kEataLite };

std::string_view to_string(AdapterMethod m);
AdapterMethod parse_adapter_method(std::string_view name);
std::string_view to_string(MaskPolicy p);
MaskPolicy parse_mask_policy(std::string_view name);

/// Settings of the gradient-based methods (tent, eata-lite).
struct GradientParams {
  double lr = 1e-2;
  MaskPolicy trainable = MaskPolicy::kNormAffineOnly;

  bool operator==(const GradientParams&) const = default;
};

/// Sample filtering and anchoring of eata-lite.
struct EataParams {
  double entropy_threshold = 0.0;     // H0; defaults to 0.4 * ln K
  double diversity_threshold = 0.95;  // cosine similarity cut-off
  double anchor_weight = 2e-3;        // rho
  double prob_momentum = 0.9;         // running average of selected predictions

  bool operator==(const EataParams&) const = default;
};

struct AdapterConfig {
  AdapterMethod method = AdapterMethod::kTent;
  std::optional<GradientParams> gradient;  // present iff tent or eata-lite
  std::optional<EataParams> eata;          // present iff eata-lite
  /// tent / eata-lite: running statistics follow every batch before the
  /// gradient step. bn-stats always replaces them.
  bool update_stats = true;

  /// Defaults for `method`; K fixes the eata-lite entropy threshold.
  static AdapterConfig defaults(AdapterMethod method, std::size_t num_classes);

  void validate() const;
  bool operator==(const AdapterConfig&) const = default;
};

struct AdaptStepResult {
  ProbOutput before;  // pre-step model (parameters and statistics) on the batch
  ProbOutput after;   // post-step model on the same batch
  double loss = 0.0;
  std::size_t num_selected = 0;
};

/// Replaces the running statistics with the batch statistics. Weights are not touched.
AdaptStepResult bn_stats_step(ModelState& model, const Batch& batch);

/// One SGD step on the mean prediction entropy.
AdaptStepResult tent_step(ModelState& model, const Batch& batch, const AdapterConfig& cfg);

/// Entropy- and diversity-filtered, confidence-weighted entropy step with an
/// isotropic L2 anchor to the source parameters:
///
///   keep i iff H_i < H0 and cos(p_i, avg) <= eps   (no diversity test while avg is unset)
///   loss = (1/|S|) sum_{i in S} exp(H0 - H_i) H_i + rho * ||theta - theta_pre||^2_mask
///
/// With no selected sample only the statistics update happens. `running_avg`
/// is then updated from the selected predictions with the configured momentum.
AdaptStepResult eata_lite_step(ModelState& model, const Batch& batch, const AdapterConfig& cfg,
                               std::optional<std::vector<double>>& running_avg);

/// Adapter instance owning per-run state (the eata-lite running average).
class Adapter {
 public:
  Adapter(AdapterConfig cfg, const Architecture& arch);

  AdaptStepResult step(ModelState& model, const Batch& batch);
  /// Forgets accumulated state; called after a model re-initialization.
  void reset();

  const AdapterConfig& config() const { return cfg_; }

 private:
  AdapterConfig cfg_;
  std::optional<std::vector<double>> running_avg_;
};

}  // namespace asr
