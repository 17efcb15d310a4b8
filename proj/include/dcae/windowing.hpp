#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcae/matrix.hpp"

namespace dcae {

inline constexpr std::size_t kWindowSamples = 512;  // 2 s at 256 Hz
inline constexpr std::size_t kWindowHop = 256;      // 50% overlap

// Windows of `window` samples starting every `hop` samples; the trailing
// remainder is dropped. Throws TooShort when the matrix is shorter than one window.
std::vector<SignalMatrix> segment_windows(const SignalMatrix& matrix, std::size_t window = kWindowSamples,
                                          std::size_t hop = kWindowHop);

inline std::size_t window_count(std::size_t length, std::size_t window = kWindowSamples,
                                std::size_t hop = kWindowHop) {
  return length < window ? 0 : (length - window) / hop + 1;
}

enum class RejectReason { None, StdHigh, StdLow };

const char* to_string(RejectReason r);

struct PlausibilityOptions {
  double std_high_uv = 5000.0;
  double std_low_uv = 0.01;
  std::size_t max_flat_channels = 8;
};

struct Plausibility {
  bool keep = true;
  RejectReason reason = RejectReason::None;
};

// Population standard deviation of one row.
double channel_std(std::span<const double> row);

Plausibility plausibility_check(const SignalMatrix& window, const PlausibilityOptions& opts = {});

struct ChannelStats {
  double median = 0.0;
  double p5 = 0.0;
  double p95 = 0.0;
};

// Fixed-width histogram whose range grows on demand. Bin k covers
// [origin + k*width, origin + (k+1)*width).
class ExpandableHistogram {
 public:
  explicit ExpandableHistogram(double bin_width = 1.0, double origin = -0.5);

  void add(double value, std::uint64_t count = 1);
  void merge(const ExpandableHistogram& other);

  // Linear interpolation inside the bin where the cumulative count crosses q*total.
  double quantile(double q) const;

  std::uint64_t total() const { return total_; }
  double bin_width() const { return width_; }
  double origin() const { return origin_; }
  std::int64_t first_bin() const { return first_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  // Restores a histogram from persisted parts.
  static ExpandableHistogram from_counts(double bin_width, double origin, std::int64_t first_bin,
                                         std::vector<std::uint64_t> counts);

 private:
  double width_;
  double origin_;
  std::int64_t first_ = 0;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

class HistogramScaler {
 public:
  HistogramScaler() = default;
  HistogramScaler(std::vector<std::string> labels, double bin_width = 1.0);

  std::size_t channels() const { return hists_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const ExpandableHistogram& histogram(std::size_t c) const { return hists_[c]; }

  void observe(std::size_t channel, double value);
  // Accumulates every row of a channels x time window.
  void observe(const SignalMatrix& window);
  // Count-wise addition of partial fits over the same channel set.
  void merge(const HistogramScaler& other);

  // Throws EmptyChannel when channel c has seen no samples.
  ChannelStats stats(std::size_t c) const;

  void save(const std::filesystem::path& path) const;
  static HistogramScaler load(const std::filesystem::path& path);

 private:
  std::vector<std::string> labels_;
  std::vector<ExpandableHistogram> hists_;
};

// (value - median) / (p95 - p5), then clipped to [-clip, clip]. Throws
// DegenerateScale if any channel has p95 - p5 < 1e-9.
SignalMatrix scaler_apply(const std::vector<ChannelStats>& stats, const SignalMatrix& window, double clip = 1.0);
SignalMatrix scaler_apply(const HistogramScaler& scaler, const SignalMatrix& window, double clip = 1.0);

// Row permutation swapping homologous left/right electrodes in montage order;
// midline rows map to themselves.
const std::array<std::size_t, 23>& flip_permutation();

SignalMatrix flip_electrodes(const SignalMatrix& window);
// In-place variant over one [C x T] row-major block.
template <typename T>
void flip_electrodes_inplace(std::span<T> block, std::size_t time) {
  const auto& perm = flip_permutation();
  for (std::size_t r = 0; r < perm.size(); ++r) {
    const std::size_t s = perm[r];
    if (s <= r) continue;
    for (std::size_t t = 0; t < time; ++t) std::swap(block[r * time + t], block[s * time + t]);
  }
}

}  // namespace dcae
