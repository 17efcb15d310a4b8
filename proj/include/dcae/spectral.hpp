#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "dcae/matrix.hpp"

namespace dcae {

inline constexpr std::size_t kStftFrame = 64;
inline constexpr std::size_t kStftHop = 8;
inline constexpr double kNormEpsilon = 1e-8;

// One-sided magnitude spectrum per channel, [channels x bins].
struct Spectrum {
  std::size_t channels = 0;
  std::size_t bins = 0;
  double df = 0.0;  // Hz per bin
  std::vector<double> magnitudes;

  double at(std::size_t c, std::size_t k) const { return magnitudes[c * bins + k]; }
};

// Framed magnitudes, [channels x bins x frames].
struct Spectrogram {
  std::size_t channels = 0;
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::size_t frame_len = 0;
  std::size_t hop = 0;
  std::vector<double> magnitudes;

  double at(std::size_t c, std::size_t k, std::size_t m) const { return magnitudes[(c * bins + k) * frames + m]; }
};

// Inclusive bin range.
struct BandMask {
  std::size_t lo_bin = 0;
  std::size_t hi_bin = 0;

  std::size_t width() const { return hi_bin - lo_bin + 1; }
  // Closed band [lo_hz, hi_hz] at resolution df.
  static BandMask from_hz(double lo_hz, double hi_hz, double df);
};

// Raw |X_k| for k = 0..T/2 of every row; no window, no scaling. T must be a power of two.
Spectrum rfft_magnitude(const SignalMatrix& window, double fs = 256.0);

// Periodic Hann window of length n.
const std::vector<double>& hann_window(std::size_t n);

// Hann-windowed frames at starts 0, hop, 2*hop, ... (no centre padding).
Spectrogram stft_magnitude(const SignalMatrix& window, std::size_t frame_len = kStftFrame, std::size_t hop = kStftHop);

// Throws MaskOutOfRange when the mask does not fit the spectrum.
Spectrum band_select(const Spectrum& spec, const BandMask& mask);

// Quantile with linear interpolation between order statistics (position q*(n-1)).
double quantile_linear(std::span<const double> values, double q);

// Both tensors divided by max(p99(original), eps); returns the divisor as well.
struct Normalized {
  std::vector<double> original;
  std::vector<double> reconstruction;
  double scale = 1.0;
};
Normalized p99_normalize(std::span<const double> original, std::span<const double> reconstruction);

}  // namespace dcae
