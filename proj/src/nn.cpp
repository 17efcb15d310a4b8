#include "dcae/nn.hpp"

#include <algorithm>
#include <cmath>

#include "dcae/error.hpp"

namespace dcae::nn {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto sm = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = sm(seed);
  h = sm(h ^ a);
  h = sm(h ^ b);
  return sm(h ^ c);
}

template <typename T>
Tensor<T> kaiming_uniform(ad::Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  require(fan_in > 0, ErrorCode::ConfigInvalid, "fan_in must be positive");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<T> v(ad::numel(shape));
  for (auto& x : v) x = static_cast<T>((2.0 * uniform01(rng) - 1.0) * bound);
  return Tensor<T>::from(std::move(shape), std::move(v), true);
}

template <typename T>
Conv1d<T>::Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::mt19937_64& rng) {
  require(kernel % 2 == 1, ErrorCode::ConfigInvalid, "conv kernel must be odd");
  weight = kaiming_uniform<T>({out_channels, in_channels, kernel}, in_channels * kernel, rng);
  bias = Tensor<T>::zeros({out_channels}, true);
}

template <typename T>
void Conv1d<T>::collect(const std::string& prefix, std::vector<Parameter<T>>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

template <typename T>
Dense<T>::Dense(std::size_t in_features, std::size_t out_features, std::mt19937_64& rng) {
  weight = kaiming_uniform<T>({out_features, in_features}, in_features, rng);
  bias = Tensor<T>::zeros({out_features}, true);
}

template <typename T>
void Dense<T>::collect(const std::string& prefix, std::vector<Parameter<T>>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

template <typename T>
BatchNorm1d<T>::BatchNorm1d(std::size_t channels, double momentum_, double eps_)
    : gamma(Tensor<T>::full({channels}, T(1), true)),
      beta(Tensor<T>::zeros({channels}, true)),
      running_mean(channels, 0.0),
      running_var(channels, 1.0),
      momentum(momentum_),
      eps(eps_) {}

template <typename T>
Tensor<T> BatchNorm1d<T>::forward(const Tensor<T>& x, bool train) {
  if (!train) return ad::batch_norm_eval(x, gamma, beta, running_mean, running_var, eps);
  std::vector<double> mean, var;
  auto y = ad::batch_norm_train(x, gamma, beta, eps, &mean, &var);
  const double m = static_cast<double>(x.dim(0) * x.dim(2));
  for (std::size_t c = 0; c < mean.size(); ++c) {
    running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean[c];
    running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var[c] * m / (m - 1.0);
  }
  return y;
}

template <typename T>
void BatchNorm1d<T>::collect(const std::string& prefix, std::vector<Parameter<T>>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

template <typename T>
Adam<T>::Adam(std::vector<Parameter<T>> params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), T(0));
    v_.emplace_back(p.tensor.numel(), T(0));
  }
}

template <typename T>
void Adam<T>::step() {
  std::string bad;
  for (const auto& p : params_) {
    const auto g = p.tensor.grad();
    if (!std::all_of(g.begin(), g.end(), [](T x) { return std::isfinite(x); })) bad += (bad.empty() ? "" : ", ") + p.name;
  }
  require(bad.empty(), ErrorCode::NonFiniteGradient, "non-finite gradient in " + bad + "; step skipped");

  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  const T b1 = static_cast<T>(opts_.beta1), b2 = static_cast<T>(opts_.beta2);
  const T step = static_cast<T>(opts_.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(opts_.eps);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].tensor;
    const auto g = p.grad();
    auto w = p.value();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      w[j] -= step * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

GradCheckReport grad_check(const std::function<Tensor<double>()>& loss, std::vector<Parameter<double>> inputs,
                           const GradCheckOptions& opts) {
  for (auto& p : inputs) p.tensor.zero_grad();
  auto base = loss();
  base.backward();
  // below this a gradient is indistinguishable from rounding in f(θ±h)
  const double f0 = base.item();
  const double noise = opts.loss_floor * std::max(1.0, std::abs(f0));

  GradCheckReport report;
  std::mt19937_64 rng(opts.seed);
  std::string offenders;
  for (auto& p : inputs) {
    auto& values = p.tensor.values();
    const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    double amax = 0.0;
    for (double a : analytic) amax = std::max(amax, std::abs(a));
    const double floor = std::max({1e-3 * amax, noise, 1e-12});

    std::vector<std::size_t> idx(values.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (opts.max_elements && idx.size() > opts.max_elements) {
      for (std::size_t i = 0; i < opts.max_elements; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(idx.size() - i));
        std::swap(idx[i], idx[j]);
      }
      idx.resize(opts.max_elements);
    }

    GradCheckEntry e{p.name, idx.size(), 0.0, 0.0};
    for (std::size_t i : idx) {
      const double orig = values[i];
      values[i] = orig + opts.step;
      const double fp = loss().item();
      values[i] = orig - opts.step;
      const double fm = loss().item();
      values[i] = orig;
      const double numeric = (fp - fm) / (2.0 * opts.step);
      auto rel_to = [&](double n) { return std::abs(analytic[i] - n) / std::max({std::abs(analytic[i]), std::abs(n), floor}); };
      double diff = std::abs(analytic[i] - numeric);
      double rel = rel_to(numeric);
      if (rel > opts.tolerance) {
        const double up = (fp - f0) / opts.step, down = (f0 - fm) / opts.step;
        const double one_sided = std::min(rel_to(up), rel_to(down));
        if (std::abs(up - down) > diff && one_sided <= opts.tolerance) {
          ++e.kinks;
          rel = one_sided;
          diff = std::min(std::abs(analytic[i] - up), std::abs(analytic[i] - down));
        }
      }
      e.max_rel_error = std::max(e.max_rel_error, rel);
      e.max_abs_error = std::max(e.max_abs_error, diff);
    }
    if (e.max_rel_error > opts.tolerance) {
      report.passed = false;
      offenders += (offenders.empty() ? "" : ", ") + p.name + " (" + std::to_string(e.max_rel_error) + ")";
    }
    report.max_rel_error = std::max(report.max_rel_error, e.max_rel_error);
    report.kinks += e.kinks;
    report.entries.push_back(std::move(e));
  }
  if (!report.passed && opts.throw_on_failure)
    fail(ErrorCode::ToleranceExceeded, "gradient mismatch above " + std::to_string(opts.tolerance) + ": " + offenders);
  return report;
}

template Tensor<float> kaiming_uniform<float>(ad::Shape, std::size_t, std::mt19937_64&);
template Tensor<double> kaiming_uniform<double>(ad::Shape, std::size_t, std::mt19937_64&);
template class Conv1d<float>;
template class Conv1d<double>;
template class Dense<float>;
template class Dense<double>;
template class BatchNorm1d<float>;
template class BatchNorm1d<double>;
template class Adam<float>;
template class Adam<double>;

}  // namespace dcae::nn
