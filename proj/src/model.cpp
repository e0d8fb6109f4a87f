#include "asr/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <string>

#include "asr/errors.hpp"

namespace asr {

namespace {

constexpr double kNormEps = 1e-5;
constexpr double kLogFloor = 1e-12;
constexpr double kVarFloor = 1e-12;

double clamped_log(double p) { return std::log(std::max(p, kLogFloor)); }

// Activations of one layer recorded for backpropagation.
struct LayerTape {
  Matrix input;  // [n x fan_in]
  Matrix pre;    // dense output
  Matrix xhat;   // (pre - mean) * inv_std, normalized layers only
  std::vector<double> inv_std;
  Matrix act_in;  // relu input (hidden) or logits (output)
};

struct Tape {
  std::vector<LayerTape> layers;
  Matrix probs;
};

void check_features(const ModelState& model, const Matrix& x) {
  if (x.cols() != model.arch().input_dim) {
    throw ShapeError("feature width " + std::to_string(x.cols()) + " does not match input_dim " +
                     std::to_string(model.arch().input_dim));
  }
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw InputError("non-finite feature value");
  }
}

Matrix dense(const Matrix& in, std::span<const double> theta, const LayerSlots& s) {
  const std::size_t n = in.rows();
  Matrix out(n, s.width);
  const double* w = theta.data() + s.weight;
  const double* b = theta.data() + s.bias;
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = in.row(i).data();
    double* o = out.row(i).data();
    for (std::size_t j = 0; j < s.width; ++j) {
      const double* wj = w + j * s.fan_in;
      double acc = b[j];
      for (std::size_t k = 0; k < s.fan_in; ++k) acc += wj[k] * x[k];
      o[j] = acc;
    }
  }
  return out;
}

void column_moments(const Matrix& z, std::vector<double>& mean, std::vector<double>& var) {
  const std::size_t n = z.rows(), w = z.cols();
  mean.assign(w, 0.0);
  var.assign(w, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < w; ++j) mean[j] += z(i, j);
  }
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double d = z(i, j) - mean[j];
      var[j] += d * d;
    }
  }
  for (double& v : var) v /= static_cast<double>(n);
}

void softmax_rows(const Matrix& logits, Matrix& probs) {
  probs = Matrix(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto l = logits.row(i);
    auto p = probs.row(i);
    const double mx = *std::max_element(l.begin(), l.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < l.size(); ++k) {
      p[k] = std::exp(l[k] - mx);
      sum += p[k];
    }
    for (double& v : p) v /= sum;
  }
}

// When `batch_stats_out` is non-null the pass normalizes with batch statistics
// and reports them per norm layer, regardless of the model's mode.
Tape run_forward(const ModelState& model, const Matrix& x, StatsMode mode,
                 std::vector<NormStats>* batch_stats_out = nullptr) {
  const auto theta = model.theta();
  const auto layers = model.layout().layers();
  Tape tape;
  tape.layers.resize(layers.size());
  Matrix current = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerSlots& s = layers[l];
    LayerTape& lt = tape.layers[l];
    lt.input = std::move(current);
    lt.pre = dense(lt.input, theta, s);
    const bool is_output = l + 1 == layers.size();
    if (is_output) {
      lt.act_in = lt.pre;
      break;
    }
    if (s.normalized) {
      std::vector<double> mean, var;
      if (mode == StatsMode::kBatch || batch_stats_out) {
        column_moments(lt.pre, mean, var);
        if (batch_stats_out) (*batch_stats_out)[s.norm_index] = NormStats{mean, var};
      } else {
        mean = model.stats()[s.norm_index].mean;
        var = model.stats()[s.norm_index].var;
      }
      lt.inv_std.resize(s.width);
      for (std::size_t j = 0; j < s.width; ++j) lt.inv_std[j] = 1.0 / std::sqrt(var[j] + kNormEps);
      lt.xhat = Matrix(lt.pre.rows(), s.width);
      lt.act_in = Matrix(lt.pre.rows(), s.width);
      for (std::size_t i = 0; i < lt.pre.rows(); ++i) {
        for (std::size_t j = 0; j < s.width; ++j) {
          const double xh = (lt.pre(i, j) - mean[j]) * lt.inv_std[j];
          lt.xhat(i, j) = xh;
          lt.act_in(i, j) = theta[s.scale + j] * xh + theta[s.shift + j];
        }
      }
    } else {
      lt.act_in = lt.pre;
    }
    current = lt.act_in;
    for (double& v : current.data()) v = std::max(v, 0.0);
  }
  softmax_rows(tape.layers.back().act_in, tape.probs);
  return tape;
}

// Backpropagates dL/dlogits through the tape; returns the full gradient.
std::vector<double> run_backward(const ModelState& model, const Tape& tape, StatsMode mode,
                                 Matrix dlogits) {
  const auto theta = model.theta();
  const auto layers = model.layout().layers();
  std::vector<double> grad(theta.size(), 0.0);
  Matrix dz = std::move(dlogits);  // gradient w.r.t. the current layer's dense output
  for (std::size_t l = layers.size(); l-- > 0;) {
    const LayerSlots& s = layers[l];
    const LayerTape& lt = tape.layers[l];
    const std::size_t n = lt.input.rows();
    const bool is_output = l + 1 == layers.size();

    if (!is_output) {
      // dz currently holds d/d(relu output); go back through relu and norm.
      Matrix dy(n, s.width);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < s.width; ++j) {
          dy(i, j) = lt.act_in(i, j) > 0.0 ? dz(i, j) : 0.0;
        }
      }
      if (s.normalized) {
        Matrix dpre(n, s.width);
        for (std::size_t j = 0; j < s.width; ++j) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            sum_dy += dy(i, j);
            sum_dy_xhat += dy(i, j) * lt.xhat(i, j);
          }
          grad[s.scale + j] += sum_dy_xhat;
          grad[s.shift + j] += sum_dy;
          const double sc = theta[s.scale + j];
          if (mode == StatsMode::kBatch) {
            const double nn = static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
              const double dxhat = dy(i, j) * sc;
              dpre(i, j) = lt.inv_std[j] / nn *
                           (nn * dxhat - sc * sum_dy - lt.xhat(i, j) * sc * sum_dy_xhat);
            }
          } else {
            for (std::size_t i = 0; i < n; ++i) dpre(i, j) = dy(i, j) * sc * lt.inv_std[j];
          }
        }
        dz = std::move(dpre);
      } else {
        dz = std::move(dy);
      }
    }

    // Dense layer.
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = lt.input.row(i).data();
      for (std::size_t j = 0; j < s.width; ++j) {
        const double g = dz(i, j);
        if (g == 0.0) continue;
        grad[s.bias + j] += g;
        double* gw = grad.data() + s.weight + j * s.fan_in;
        for (std::size_t k = 0; k < s.fan_in; ++k) gw[k] += g * x[k];
      }
    }
    if (l == 0) break;
    Matrix dinput(n, s.fan_in);
    for (std::size_t i = 0; i < n; ++i) {
      double* di = dinput.row(i).data();
      for (std::size_t j = 0; j < s.width; ++j) {
        const double g = dz(i, j);
        if (g == 0.0) continue;
        const double* wj = theta.data() + s.weight + j * s.fan_in;
        for (std::size_t k = 0; k < s.fan_in; ++k) di[k] += g * wj[k];
      }
    }
    dz = std::move(dinput);
  }
  return grad;
}

ProbOutput to_output(Matrix probs) {
  ProbOutput out;
  const std::size_t n = probs.rows();
  out.predicted.resize(n);
  out.confidence.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto p = probs.row(i);
    const auto it = std::max_element(p.begin(), p.end());
    out.predicted[i] = static_cast<int>(it - p.begin());
    out.confidence[i] = *it;
  }
  out.probs = std::move(probs);
  return out;
}

double round_to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void Architecture::validate() const {
  if (input_dim == 0) throw ConfigError("architecture: input_dim must be >= 1");
  if (num_classes < 2) throw ConfigError("architecture: num_classes must be >= 2");
  if (norm_after_hidden.size() != hidden_widths.size()) {
    throw ConfigError("architecture: norm_after_hidden must have one entry per hidden layer");
  }
  for (std::size_t w : hidden_widths) {
    if (w == 0) throw ConfigError("architecture: hidden widths must be >= 1");
  }
}

std::size_t Architecture::parameter_count() const { return ParamLayout(*this).size(); }

std::size_t Architecture::norm_layer_count() const {
  return static_cast<std::size_t>(std::count(norm_after_hidden.begin(), norm_after_hidden.end(), true));
}

ParamLayout::ParamLayout(const Architecture& arch) {
  arch.validate();
  std::size_t offset = 0;
  std::size_t fan_in = arch.input_dim;
  std::size_t norm_index = 0;
  auto add = [&](std::size_t width, bool normalized) {
    LayerSlots s;
    s.fan_in = fan_in;
    s.width = width;
    s.weight = offset;
    offset += width * fan_in;
    s.bias = offset;
    offset += width;
    s.normalized = normalized;
    if (normalized) {
      s.scale = offset;
      offset += width;
      s.shift = offset;
      offset += width;
      s.norm_index = norm_index++;
    }
    layers_.push_back(s);
    fan_in = width;
  };
  for (std::size_t l = 0; l < arch.hidden_widths.size(); ++l) {
    add(arch.hidden_widths[l], arch.norm_after_hidden[l]);
  }
  add(arch.num_classes, false);
  size_ = offset;
}

ModelState::ModelState(Architecture arch) : arch_(std::move(arch)), layout_(arch_) {
  theta_.assign(layout_.size(), 0.0);
  source_theta_ = theta_;
  for (const auto& s : layout_.layers()) {
    if (s.normalized) stats_.push_back(NormStats{std::vector<double>(s.width, 0.0),
                                                 std::vector<double>(s.width, 1.0)});
  }
  source_stats_ = stats_;
}

void ModelState::set_stats_momentum(double m) {
  if (!(m > 0.0 && m <= 1.0)) throw ConfigError("stats momentum must be in (0, 1]");
  stats_momentum_ = m;
}

void ModelState::freeze_source() {
  source_theta_ = theta_;
  source_stats_ = stats_;
}

void ModelState::restore_source() {
  theta_ = source_theta_;
  stats_ = source_stats_;
}

void ModelState::restore_source_stats() { stats_ = source_stats_; }

void ModelState::assign(std::vector<double> theta, std::vector<double> source_theta,
                        std::vector<NormStats> stats, std::vector<NormStats> source_stats) {
  if (theta.size() != layout_.size() || source_theta.size() != layout_.size()) {
    throw ShapeError("parameter vector length does not match architecture");
  }
  if (stats.size() != stats_.size() || source_stats.size() != stats_.size()) {
    throw ShapeError("norm statistics count does not match architecture");
  }
  for (std::size_t i = 0; i < stats_.size(); ++i) {
    const std::size_t w = stats_[i].mean.size();
    for (const auto* st : {&stats[i], &source_stats[i]}) {
      if (st->mean.size() != w || st->var.size() != w) throw ShapeError("norm statistics width mismatch");
      for (double v : st->var) {
        if (!(v > 0.0)) throw InputError("running variance must be positive");
      }
    }
  }
  theta_ = std::move(theta);
  source_theta_ = std::move(source_theta);
  stats_ = std::move(stats);
  source_stats_ = std::move(source_stats);
}

ParamMask make_mask(const Architecture& arch, MaskPolicy policy) {
  const ParamLayout layout(arch);
  if (policy == MaskPolicy::kAllParameters) return ParamMask(layout.size(), true);
  ParamMask mask(layout.size(), false);
  for (const auto& s : layout.layers()) {
    if (!s.normalized) continue;
    std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(s.scale), s.width, true);
    std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(s.shift), s.width, true);
  }
  return mask;
}

ModelState init_model(const Architecture& arch, std::uint64_t seed) {
  ModelState model(arch);
  std::mt19937_64 rng(seed);
  auto theta = model.theta();
  for (const auto& s : model.layout().layers()) {
    const double bound = std::sqrt(6.0 / static_cast<double>(s.fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < s.width * s.fan_in; ++i) theta[s.weight + i] = round_to_float(dist(rng));
    if (s.normalized) std::fill_n(theta.begin() + static_cast<std::ptrdiff_t>(s.scale), s.width, 1.0);
  }
  model.freeze_source();
  return model;
}

ProbOutput forward(const ModelState& model, const Matrix& features) {
  check_features(model, features);
  return to_output(run_forward(model, features, model.mode()).probs);
}

ProbOutput forward(ModelState& model, const Batch& batch, bool update_stats) {
  ProbOutput out = forward(static_cast<const ModelState&>(model), batch.features);
  if (update_stats) update_norm_stats(model, batch.features, model.stats_momentum());
  return out;
}

void update_norm_stats(ModelState& model, const Matrix& features, double momentum) {
  check_features(model, features);
  if (model.stats().empty()) return;
  std::vector<NormStats> batch_stats(model.stats().size());
  run_forward(model, features, StatsMode::kBatch, &batch_stats);
  for (std::size_t i = 0; i < batch_stats.size(); ++i) {
    NormStats& rs = model.stats()[i];
    for (std::size_t j = 0; j < rs.mean.size(); ++j) {
      rs.mean[j] = (1.0 - momentum) * rs.mean[j] + momentum * batch_stats[i].mean[j];
      rs.var[j] = std::max((1.0 - momentum) * rs.var[j] + momentum * batch_stats[i].var[j], kVarFloor);
    }
  }
}

std::vector<double> row_entropy(const ProbOutput& out) {
  std::vector<double> h(out.probs.rows(), 0.0);
  for (std::size_t i = 0; i < h.size(); ++i) {
    for (double p : out.probs.row(i)) h[i] -= p * clamped_log(p);
  }
  return h;
}

LossGrad weighted_entropy_and_grad(const ModelState& model, const Matrix& features,
                                   std::span<const double> weights) {
  check_features(model, features);
  if (features.rows() == 0) throw DegenerateInputError("entropy of an empty batch");
  if (weights.size() != features.rows()) throw ShapeError("one weight per row required");
  const StatsMode mode = model.mode();
  Tape tape = run_forward(model, features, mode);
  const std::size_t n = features.rows(), k = model.arch().num_classes;
  Matrix dlogits(n, k);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto p = tape.probs.row(i);
    double h = 0.0;
    for (double v : p) h -= v * clamped_log(v);
    loss += weights[i] * h;
    for (std::size_t c = 0; c < k; ++c) {
      dlogits(i, c) = -weights[i] * p[c] * (clamped_log(p[c]) + h);
    }
  }
  return LossGrad{loss, run_backward(model, tape, mode, std::move(dlogits))};
}

LossGrad entropy_and_grad(const ModelState& model, const Batch& batch, const ParamMask& mask) {
  if (mask.size() != model.theta().size()) {
    throw ShapeError("mask length does not match parameter count");
  }
  if (batch.size() == 0) throw DegenerateInputError("entropy of an empty batch");
  const std::vector<double> w(batch.size(), 1.0 / static_cast<double>(batch.size()));
  LossGrad lg = weighted_entropy_and_grad(model, batch.features, w);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) lg.grad[i] = 0.0;
  }
  return lg;
}

LossGrad cross_entropy_and_grad(const ModelState& model, const Matrix& features,
                                std::span<const int> labels) {
  check_features(model, features);
  const std::size_t n = features.rows(), k = model.arch().num_classes;
  if (n == 0) throw DegenerateInputError("cross-entropy of an empty batch");
  if (labels.size() != n) throw ShapeError("one label per row required");
  const StatsMode mode = model.mode();
  Tape tape = run_forward(model, features, mode);
  Matrix dlogits(n, k);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw InputError("label out of range");
    loss -= clamped_log(tape.probs(i, static_cast<std::size_t>(y))) * inv_n;
    for (std::size_t c = 0; c < k; ++c) {
      dlogits(i, c) = (tape.probs(i, c) - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0)) * inv_n;
    }
  }
  return LossGrad{loss, run_backward(model, tape, mode, std::move(dlogits))};
}

void sgd_step(ModelState& model, std::span<const double> grad, double lr, const ParamMask& mask) {
  auto theta = model.theta();
  if (grad.size() != theta.size()) throw ShapeError("gradient length does not match parameter count");
  if (!mask.empty() && mask.size() != theta.size()) throw ShapeError("mask length does not match");
  if (!(lr >= 0.0)) throw ContractError("learning rate must be non-negative");
  for (double g : grad) {
    if (!std::isfinite(g)) throw NumericError("non-finite gradient", 0);
  }
  if (lr == 0.0) return;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (mask.empty() || mask[i]) theta[i] -= lr * grad[i];
  }
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double weight_l2_norm(const ModelState& model) { return l2_norm(model.theta()); }

std::uint64_t hash_values(std::span<const double> v) {
  std::uint64_t h = 1469598103934665603ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
  for (std::size_t i = 0; i < v.size_bytes(); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

double accuracy(const ProbOutput& out, std::span<const int> labels) {
  if (labels.size() != out.size()) throw ShapeError("label count does not match predictions");
  if (labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += out.predicted[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

TrainResult train_source(const Architecture& arch, const Matrix& features,
                         std::span<const int> labels, const SourceTrainingConfig& cfg,
                         std::uint64_t seed) {
  arch.validate();
  if (features.rows() == 0) throw InputError("source data is empty");
  if (labels.size() != features.rows()) throw ShapeError("one label per source sample required");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= arch.num_classes) {
      throw InputError("source label out of range");
    }
  }
  if (cfg.batch_size < 2) throw ConfigError("source batch_size must be >= 2");
  if (!(cfg.lr > 0.0)) throw ConfigError("source lr must be > 0");

  ModelState model = init_model(arch, seed);
  check_features(model, features);
  model.set_mode(StatsMode::kBatch);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(features.rows());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t decay_epoch = (2 * cfg.epochs) / 3;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = epoch >= decay_epoch ? cfg.lr * 0.1 : cfg.lr;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start + 1 < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (end - start < 2) break;
      Matrix xb(end - start, features.cols());
      std::vector<int> yb(end - start);
      for (std::size_t i = start; i < end; ++i) {
        std::copy_n(features.row(order[i]).begin(), features.cols(), xb.row(i - start).begin());
        yb[i - start] = labels[order[i]];
      }
      LossGrad lg = cross_entropy_and_grad(model, xb, yb);
      ++step;
      if (!std::isfinite(lg.loss)) throw TrainingError("source training diverged", step);
      for (double g : lg.grad) {
        if (!std::isfinite(g)) throw TrainingError("source training diverged", step);
      }
      sgd_step(model, lg.grad, lr);
    }
  }

  for (double& v : model.theta()) {
    v = round_to_float(v);
    if (!std::isfinite(v)) throw TrainingError("source weights overflow float32", step);
  }
  // Exact population statistics over the full source set.
  update_norm_stats(model, features, 1.0);
  for (auto& st : model.stats()) {
    for (double& v : st.mean) v = round_to_float(v);
    for (double& v : st.var) v = std::max(round_to_float(v), static_cast<double>(1e-12f));
  }
  model.set_mode(StatsMode::kRunning);
  model.freeze_source();

  TrainResult result;
  result.clean_accuracy = accuracy(forward(model, features), labels);
  result.model = std::move(model);
  return result;
}

}  // namespace asr
