#include "dcae/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>

#include "dcae/error.hpp"
#include "dcae/fft.hpp"
#include "dcae/kernels.hpp"

namespace dcae {

BandMask BandMask::from_hz(double lo_hz, double hi_hz, double df) {
  require(df > 0.0 && lo_hz >= 0.0 && hi_hz >= lo_hz, ErrorCode::InvalidArgument, "invalid band");
  BandMask m;
  m.lo_bin = static_cast<std::size_t>(std::ceil(lo_hz / df - 1e-9));
  m.hi_bin = static_cast<std::size_t>(std::floor(hi_hz / df + 1e-9));
  require(m.hi_bin >= m.lo_bin, ErrorCode::MaskOutOfRange, "band contains no bins");
  return m;
}

Spectrum rfft_magnitude(const SignalMatrix& window, double fs) {
  require(is_power_of_two(window.cols), ErrorCode::InvalidArgument, "window length must be a power of two");
  Spectrum s;
  s.channels = window.rows;
  s.bins = window.cols / 2 + 1;
  s.df = fs / static_cast<double>(window.cols);
  s.magnitudes.resize(s.channels * s.bins);
  kernels::parallel::rfft_magnitude<double>({window.rows, window.cols}, window.data.data(), s.magnitudes.data(),
                                            nullptr);
  return s;
}

const std::vector<double>& hann_window(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::vector<double>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& w = cache[n];
  if (w.empty()) {
    w.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

Spectrogram stft_magnitude(const SignalMatrix& window, std::size_t frame_len, std::size_t hop) {
  require(is_power_of_two(frame_len) && hop > 0, ErrorCode::InvalidArgument, "frame must be a power of two");
  require(window.cols >= frame_len, ErrorCode::TooShort, "window shorter than one STFT frame");
  const kernels::StftShape shape{window.rows, window.cols, frame_len, hop};
  Spectrogram s;
  s.channels = window.rows;
  s.bins = shape.bins();
  s.frames = shape.frames();
  s.frame_len = frame_len;
  s.hop = hop;
  s.magnitudes.resize(s.channels * s.bins * s.frames);
  kernels::parallel::stft_magnitude<double>(shape, hann_window(frame_len).data(), window.data.data(),
                                            s.magnitudes.data(), nullptr);
  return s;
}

Spectrum band_select(const Spectrum& spec, const BandMask& mask) {
  require(mask.lo_bin <= mask.hi_bin && mask.hi_bin < spec.bins, ErrorCode::MaskOutOfRange,
          "band bins [" + std::to_string(mask.lo_bin) + ", " + std::to_string(mask.hi_bin) + "] exceed " +
              std::to_string(spec.bins) + " spectrum bins");
  Spectrum out;
  out.channels = spec.channels;
  out.bins = mask.width();
  out.df = spec.df;
  out.magnitudes.reserve(out.channels * out.bins);
  for (std::size_t c = 0; c < spec.channels; ++c)
    for (std::size_t k = mask.lo_bin; k <= mask.hi_bin; ++k) out.magnitudes.push_back(spec.at(c, k));
  return out;
}

double quantile_linear(std::span<const double> values, double q) {
  require(!values.empty(), ErrorCode::InvalidArgument, "quantile of an empty set");
  require(q >= 0.0 && q <= 1.0, ErrorCode::InvalidArgument, "quantile must lie in [0, 1]");
  std::vector<double> v(values.begin(), values.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  double b = a;
  if (hi != lo) b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
  return a + (pos - static_cast<double>(lo)) * (b - a);
}

Normalized p99_normalize(std::span<const double> original, std::span<const double> reconstruction) {
  require(!original.empty(), ErrorCode::InvalidArgument, "original must be nonempty");
  Normalized n;
  n.scale = std::max(quantile_linear(original, 0.99), kNormEpsilon);
  n.original.reserve(original.size());
  for (double v : original) n.original.push_back(v / n.scale);
  n.reconstruction.reserve(reconstruction.size());
  for (double v : reconstruction) n.reconstruction.push_back(v / n.scale);
  return n;
}

}  // namespace dcae
