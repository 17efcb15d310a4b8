#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dcae/tensor.hpp"

namespace dcae::nn {

using ad::Tensor;

// Uniform draw on [0, 1) from the top 53 bits; unlike std::uniform_real_distribution
// the sequence is the same with every standard library.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// splitmix64 finaliser, used to derive independent seeds from (seed, a, b, ...).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
};

// U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
template <typename T>
Tensor<T> kaiming_uniform(ad::Shape shape, std::size_t fan_in, std::mt19937_64& rng);

template <typename T>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::mt19937_64& rng);

  Tensor<T> forward(const Tensor<T>& x) const { return ad::conv1d(x, weight, bias); }
  void collect(const std::string& prefix, std::vector<Parameter<T>>& out) const;

  Tensor<T> weight, bias;
};

template <typename T>
class Dense {
 public:
  Dense() = default;
  Dense(std::size_t in_features, std::size_t out_features, std::mt19937_64& rng);

  Tensor<T> forward(const Tensor<T>& x) const { return ad::dense(x, weight, bias); }
  void collect(const std::string& prefix, std::vector<Parameter<T>>& out) const;

  Tensor<T> weight, bias;
};

template <typename T>
class BatchNorm1d {
 public:
  BatchNorm1d() = default;
  explicit BatchNorm1d(std::size_t channels, double momentum = 0.1, double eps = 1e-5);

  // Train mode normalises with batch statistics and folds them into the running
  // estimates (unbiased variance); eval mode uses the running estimates.
  Tensor<T> forward(const Tensor<T>& x, bool train);
  void collect(const std::string& prefix, std::vector<Parameter<T>>& out) const;

  Tensor<T> gamma, beta;
  std::vector<double> running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter<T>> params, AdamOptions opts = {});

  // Bias-corrected update from the accumulated gradients. If any gradient is
  // non-finite nothing is modified and NonFiniteGradient names the tensors.
  void step();
  void zero_grad();

  std::uint64_t steps() const { return t_; }
  const AdamOptions& options() const { return opts_; }
  const std::vector<Parameter<T>>& params() const { return params_; }
  std::vector<std::vector<T>>& first_moment() { return m_; }
  std::vector<std::vector<T>>& second_moment() { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  std::vector<Parameter<T>> params_;
  AdamOptions opts_;
  std::vector<std::vector<T>> m_, v_;
  std::uint64_t t_ = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Gradients smaller than loss_floor * max(1, |f|) are compared absolutely.
  double loss_floor = 1e-6;
  // Elements probed per tensor; 0 probes all of them.
  std::size_t max_elements = 0;
  std::uint64_t seed = 1;
  bool throw_on_failure = true;
};

struct GradCheckEntry {
  std::string name;
  std::size_t probed = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t kinks = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::size_t kinks = 0;
  bool passed = true;
};

// Compares analytic gradients of loss() against central differences
// (f(θ+h) - f(θ-h)) / 2h for every listed tensor. The error of one element is
// |a - n| / max(|a|, |n|, 1e-3 * max|a| over that tensor, loss_floor * max(1, |f|)),
// which keeps elements whose true gradient is ~0 (a conv bias feeding a batch
// norm, say) from dominating through cancellation.
// A relu, max-pool or L1 kink inside [θ-h, θ+h] breaks the central difference.
// Such an element shows one-sided slopes that disagree by more than the
// central mismatch; it then has to match one of those slopes instead, and is
// counted in `kinks`.
// loss must be deterministic and rebuild its graph on each call.
GradCheckReport grad_check(const std::function<Tensor<double>()>& loss, std::vector<Parameter<double>> inputs,
                           const GradCheckOptions& opts = {});

}  // namespace dcae::nn
