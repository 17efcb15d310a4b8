#include "dcae/fft.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "dcae/error.hpp"

namespace dcae {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

FftPlan::FftPlan(std::size_t n) : n_(n) {
  require(is_power_of_two(n), ErrorCode::InvalidArgument, "FFT length must be a power of two");
  bitrev_.resize(n);
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b)
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
    bitrev_[i] = r;
  }
  twiddle_.resize(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k)
    twiddle_[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
}

void FftPlan::forward(std::span<std::complex<double>> a) const {
  require(a.size() == n_, ErrorCode::ShapeMismatch, "FFT buffer length does not match plan");
  for (std::size_t i = 0; i < n_; ++i)
    if (i < bitrev_[i]) std::swap(a[i], a[bitrev_[i]]);
  // Interleaved re/im view; spelled out because std::complex operator* goes
  // through the slow NaN-aware path without -ffast-math.
  double* d = reinterpret_cast<double*>(a.data());
  const double* tw = reinterpret_cast<const double*>(twiddle_.data());
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      for (std::size_t j = 0; j < half; ++j) {
        double* u = d + 2 * (start + j);
        double* v = d + 2 * (start + j + half);
        const double wr = tw[2 * j * stride], wi = tw[2 * j * stride + 1];
        const double vr = v[0] * wr - v[1] * wi;
        const double vi = v[0] * wi + v[1] * wr;
        v[0] = u[0] - vr;
        v[1] = u[1] - vi;
        u[0] += vr;
        u[1] += vi;
      }
    }
  }
}

const FftPlan& fft_plan(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<FftPlan>> plans;
  std::lock_guard<std::mutex> lock(mu);
  auto& p = plans[n];
  if (!p) p = std::make_unique<FftPlan>(n);
  return *p;
}

}  // namespace dcae
