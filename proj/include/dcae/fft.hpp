#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace dcae {

// In-place iterative radix-2 FFT for one power-of-two length. Immutable after
// construction, so a plan may be shared across threads.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);

  std::size_t size() const { return n_; }

  // X_k = sum_n x_n exp(-2 pi i k n / N), unnormalised.
  void forward(std::span<std::complex<double>> data) const;

 private:
  std::size_t n_;
  std::vector<std::size_t> bitrev_;
  std::vector<std::complex<double>> twiddle_;  // exp(-2 pi i k / N), k < N/2
};

// Shared plan for length n (created on first use).
const FftPlan& fft_plan(std::size_t n);

bool is_power_of_two(std::size_t n);

}  // namespace dcae
