#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "asr/matrix.hpp"

namespace asr {

/// Layer shapes of the classifier: dense -> [norm] -> relu per hidden layer,
/// followed by a dense output layer and softmax.
struct Architecture {
  std::size_t input_dim = 16;
  std::vector<std::size_t> hidden_widths{32};
  std::size_t num_classes = 5;
  std::vector<bool> norm_after_hidden{true};

  /// Throws ConfigError on zero dimensions, K < 2 or a norm-flag/width length mismatch.
  void validate() const;

  /// Length of the flat parameter vector.
  ///
  /// Per hidden layer of width w with fan-in n: n*w weights + w biases, plus
  /// 2*w (scale, shift) when the layer is normalized. Output layer: w_last*K + K.
  /// Normalization running statistics are not parameters.
  std::size_t parameter_count() const;

  std::size_t norm_layer_count() const;

  bool operator==(const Architecture&) const = default;
};

/// Offsets of one layer's blocks inside the flat parameter vector.
struct LayerSlots {
  std::size_t fan_in = 0;
  std::size_t width = 0;
  std::size_t weight = 0;  // [width x fan_in], row-major
  std::size_t bias = 0;
  bool normalized = false;
  std::size_t scale = 0;
  std::size_t shift = 0;
  std::size_t norm_index = 0;  // index into ModelState::stats()
};

/// Resolved parameter layout; the output layer is the last entry.
class ParamLayout {
 public:
  explicit ParamLayout(const Architecture& arch);

  std::span<const LayerSlots> layers() const { return layers_; }
  std::size_t size() const { return size_; }

 private:
  std::vector<LayerSlots> layers_;
  std::size_t size_ = 0;
};

/// Running mean/variance of one normalization layer's input.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> var;

  bool operator==(const NormStats&) const = default;
};

/// Which statistics the normalization layers use in a forward pass.
enum class StatsMode {
  kBatch,    // normalize with the statistics of the batch itself
  kRunning,  // normalize with the stored running statistics
};

/// Flat parameters of the current model plus the frozen source snapshot.
///
/// The source snapshot (parameters and statistics) is written only by
/// freeze_source(), which train_source calls once on completion.
class ModelState {
 public:
  ModelState() = default;
  explicit ModelState(Architecture arch);

  const Architecture& arch() const { return arch_; }
  const ParamLayout& layout() const { return layout_; }

  std::span<double> theta() { return theta_; }
  std::span<const double> theta() const { return theta_; }
  std::span<const double> source_theta() const { return source_theta_; }

  std::vector<NormStats>& stats() { return stats_; }
  const std::vector<NormStats>& stats() const { return stats_; }
  const std::vector<NormStats>& source_stats() const { return source_stats_; }

  StatsMode mode() const { return mode_; }
  void set_mode(StatsMode mode) { mode_ = mode; }

  /// Momentum used when running statistics track incoming batches.
  double stats_momentum() const { return stats_momentum_; }
  void set_stats_momentum(double m);

  /// Copies the current parameters and statistics into the source snapshot.
  void freeze_source();

  /// theta <- theta_pre and stats <- source stats.
  void restore_source();
  void restore_source_stats();

  /// Replaces parameters and snapshot wholesale (checkpoint loading).
  void assign(std::vector<double> theta, std::vector<double> source_theta,
              std::vector<NormStats> stats, std::vector<NormStats> source_stats);

 private:
  Architecture arch_;
  ParamLayout layout_{Architecture{}};
  std::vector<double> theta_;
  std::vector<double> source_theta_;
  std::vector<NormStats> stats_;
  std::vector<NormStats> source_stats_;
  StatsMode mode_ = StatsMode::kBatch;
  double stats_momentum_ = 0.1;
};

/// Unlabeled input to a model. This is everything an adapter ever sees.
struct Batch {
  Matrix features;
  std::size_t step = 0;

  std::size_t size() const { return features.rows(); }
};

/// Batch plus ground truth. Labels are consumed by the metrics path only.
struct LabeledBatch {
  Batch batch;
  std::vector<int> labels;
};

struct ProbOutput {
  Matrix probs;  // [batch x K]
  std::vector<int> predicted;
  std::vector<double> confidence;

  std::size_t size() const { return predicted.size(); }
};

/// Selects the entries of the parameter vector a gradient step may touch.
using ParamMask = std::vector<bool>;

enum class MaskPolicy { kNormAffineOnly, kAllParameters };

ParamMask make_mask(const Architecture& arch, MaskPolicy policy);

/// Seeded initialization.
///
/// Dense weights ~ U(-b, b) with b = sqrt(6 / fan_in) (He-uniform), drawn as
/// binary32 values so checkpoints are lossless. Biases and shifts 0, scales 1.
/// Running statistics mean 0, variance 1. The source snapshot equals theta.
ModelState init_model(const Architecture& arch, std::uint64_t seed);

/// Softmax predictions. Pure: model statistics are not touched.
ProbOutput forward(const ModelState& model, const Matrix& features);

/// Forward pass; when update_stats is set the running statistics move toward
/// the batch statistics with model.stats_momentum() after the output is computed.
ProbOutput forward(ModelState& model, const Batch& batch, bool update_stats);

/// Moves running statistics toward the statistics of `features` using
/// `momentum` (1 replaces them). Batch statistics are those of a pass that
/// normalizes every layer with its own batch statistics. Variances are biased.
void update_norm_stats(ModelState& model, const Matrix& features, double momentum);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean Shannon entropy of the predictions and its exact gradient, zeroed
/// outside `mask`. Logs are clamped at 1e-12.
LossGrad entropy_and_grad(const ModelState& model, const Batch& batch, const ParamMask& mask);

/// Weighted entropy sum_i w_i H_i with analytic gradient (all parameters).
/// Rows with weight 0 still take part in batch statistics in kBatch mode.
LossGrad weighted_entropy_and_grad(const ModelState& model, const Matrix& features,
                                   std::span<const double> weights);

/// Mean cross-entropy against labels with gradient (all parameters).
LossGrad cross_entropy_and_grad(const ModelState& model, const Matrix& features,
                                std::span<const int> labels);

/// Shannon entropy per row (clamped log).
std::vector<double> row_entropy(const ProbOutput& out);

/// theta <- theta - lr * grad on the masked entries. An empty mask means all entries.
void sgd_step(ModelState& model, std::span<const double> grad, double lr,
              const ParamMask& mask = {});

double weight_l2_norm(const ModelState& model);
double l2_norm(std::span<const double> v);

/// FNV-1a over the raw bytes of a vector; used to assert immutability.
std::uint64_t hash_values(std::span<const double> v);

struct SourceTrainingConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr = 0.05;
};

struct TrainResult {
  ModelState model;
  double clean_accuracy = 0.0;
};

/// Supervised cross-entropy training on clean source data.
///
/// Plain minibatch SGD over all parameters with batch-statistics
/// normalization; lr drops x0.1 after 2/3 of the epochs. Afterwards the
/// running statistics are recomputed exactly over the full data set,
/// parameters are rounded to binary32, the model switches to running
/// statistics and the source snapshot is frozen.
TrainResult train_source(const Architecture& arch, const Matrix& features,
                         std::span<const int> labels, const SourceTrainingConfig& cfg,
                         std::uint64_t seed);

double accuracy(const ProbOutput& out, std::span<const int> labels);

}  // namespace asr
