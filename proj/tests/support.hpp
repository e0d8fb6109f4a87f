#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "asr/config.hpp"
#include "asr/model.hpp"

namespace asr::test {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto tag = std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()) + "_" +
                     std::to_string(counter++);
    path_ = fs::temp_directory_path() / ("asr_test_" + tag);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = n(rng);
  return m;
}

// Model with every parameter perturbed away from its init so that no gradient
// is trivially zero (scales away from 1, shifts and biases away from 0).
inline ModelState perturbed_model(const Architecture& arch, std::uint64_t seed) {
  ModelState m = init_model(arch, seed);
  std::mt19937_64 rng(seed + 17);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (double& v : m.theta()) v += u(rng);
  for (auto& s : m.stats()) {
    for (double& v : s.mean) v = u(rng);
    for (double& v : s.var) v = 1.0 + 2.0 * std::abs(u(rng));
  }
  return m;
}

// Mean Shannon entropy of the pure forward pass, evaluated independently of
// the library's entropy routine.
inline double mean_entropy(const ModelState& model, const Matrix& x) {
  const ProbOutput out = forward(model, x);
  double total = 0.0;
  for (std::size_t i = 0; i < out.probs.rows(); ++i) {
    for (std::size_t c = 0; c < out.probs.cols(); ++c) {
      const double p = out.probs(i, c);
      total -= p * std::log(std::max(p, 1e-12));
    }
  }
  return total / static_cast<double>(out.probs.rows());
}

// Central finite differences of mean_entropy with respect to every parameter.
inline std::vector<double> fd_entropy_gradient(ModelState model, const Matrix& x, double h = 1e-5) {
  std::vector<double> g(model.theta().size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    const double orig = model.theta()[j];
    model.theta()[j] = orig + h;
    const double up = mean_entropy(model, x);
    model.theta()[j] = orig - h;
    const double down = mean_entropy(model, x);
    model.theta()[j] = orig;
    g[j] = (up - down) / (2.0 * h);
  }
  return g;
}

// Components below floor are effectively compared in absolute terms; central
// differences at h = 1e-5 carry round-off near 1e-11.
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-4) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

// Scalar brute-force simulator of the adaptive trigger: every quantity is
// recomputed from the full history at each step, and the history is dropped
// after a trigger. Returns the 1-based trigger steps.
inline std::vector<std::size_t> simulate_triggers(const std::vector<double>& lf, double beta, double pi,
                                                  std::size_t k, std::size_t burn_in) {
  std::vector<std::size_t> fired;
  std::vector<double> s;
  bool armed = false;
  for (std::size_t t = 0; t < lf.size(); ++t) {
    s.push_back(s.empty() ? lf[t] : beta * s.back() + (1.0 - beta) * lf[t]);
    std::size_t argmin = 0;
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (s[i] < s[argmin]) argmin = i;
    }
    const long lo = std::max<long>(0, static_cast<long>(argmin) - static_cast<long>(k));
    const long hi = std::min<long>(static_cast<long>(s.size()) - 1, static_cast<long>(argmin + k));
    double sum = 0.0;
    for (long i = lo; i <= hi; ++i) sum += s[static_cast<std::size_t>(i)];
    const double min_est = sum / static_cast<double>(hi - lo + 1);
    if (s.size() >= burn_in && argmin + 1 != s.size()) armed = true;
    if (armed && s.back() > pi * min_est) {
      fired.push_back(t + 1);
      s.clear();
      armed = false;
    }
  }
  return fired;
}

// Small stream config for fast end-to-end tests.
inline RunConfig tiny_config(std::size_t hold = 150, std::uint64_t seed = 3) {
  RunConfig cfg = default_run_config();
  cfg.seed = seed;
  cfg.source.samples = 600;
  cfg.source.training.epochs = 5;
  cfg.stream.batch_size = 32;
  cfg.stream.schedule.segments = {{CorruptionTag::kGaussianNoise, 4.0, hold},
                                  {CorruptionTag::kPlaneRotation, 5.0, hold}};
  cfg.stream.schedule.transitions = {50};
  cfg.flip.burn_in = 20;
  return cfg;
}

}  // namespace asr::test
