#include "dcae/windowing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "dcae/error.hpp"
#include "dcae/preprocess.hpp"

namespace dcae {

std::vector<SignalMatrix> segment_windows(const SignalMatrix& matrix, std::size_t window, std::size_t hop) {
  require(window > 0 && hop > 0, ErrorCode::InvalidArgument, "window and hop must be positive");
  require(matrix.cols >= window, ErrorCode::TooShort,
          "signal has " + std::to_string(matrix.cols) + " samples, window needs " + std::to_string(window));
  const std::size_t n = window_count(matrix.cols, window, hop);
  std::vector<SignalMatrix> out;
  out.reserve(n);
  for (std::size_t w = 0; w < n; ++w) {
    SignalMatrix win(matrix.rows, window);
    for (std::size_t r = 0; r < matrix.rows; ++r) {
      auto src = matrix.row(r).subspan(w * hop, window);
      std::copy(src.begin(), src.end(), win.row(r).begin());
    }
    out.push_back(std::move(win));
  }
  return out;
}

const char* to_string(RejectReason r) {
  switch (r) {
    case RejectReason::None: return "none";
    case RejectReason::StdHigh: return "std-high";
    case RejectReason::StdLow: return "std-low";
  }
  return "unknown";
}

double channel_std(std::span<const double> row) {
  if (row.empty()) return 0.0;
  double mean = 0.0;
  for (double v : row) mean += v;
  mean /= static_cast<double>(row.size());
  double ss = 0.0;
  for (double v : row) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(row.size()));
}

Plausibility plausibility_check(const SignalMatrix& window, const PlausibilityOptions& opts) {
  std::size_t flat = 0;
  bool high = false;
  for (std::size_t r = 0; r < window.rows; ++r) {
    const double s = channel_std(window.row(r));
    if (s > opts.std_high_uv) high = true;
    if (s < opts.std_low_uv) ++flat;
  }
  if (high) return {false, RejectReason::StdHigh};
  if (flat > opts.max_flat_channels) return {false, RejectReason::StdLow};
  return {};
}

// ---------------------------------------------------------------------------

ExpandableHistogram::ExpandableHistogram(double bin_width, double origin) : width_(bin_width), origin_(origin) {
  require(bin_width > 0.0 && std::isfinite(bin_width), ErrorCode::InvalidArgument, "bin width must be positive");
}

void ExpandableHistogram::add(double value, std::uint64_t count) {
  require(std::isfinite(value), ErrorCode::InvalidArgument, "histogram value must be finite");
  const auto bin = static_cast<std::int64_t>(std::floor((value - origin_) / width_));
  if (counts_.empty()) {
    first_ = bin;
    counts_.assign(1, 0);
  } else if (bin < first_) {
    counts_.insert(counts_.begin(), static_cast<std::size_t>(first_ - bin), 0);
    first_ = bin;
  } else if (bin >= first_ + static_cast<std::int64_t>(counts_.size())) {
    counts_.resize(static_cast<std::size_t>(bin - first_ + 1), 0);
  }
  counts_[static_cast<std::size_t>(bin - first_)] += count;
  total_ += count;
}

void ExpandableHistogram::merge(const ExpandableHistogram& other) {
  require(other.width_ == width_ && other.origin_ == origin_, ErrorCode::InvalidArgument,
          "cannot merge histograms with different binning");
  for (std::size_t i = 0; i < other.counts_.size(); ++i) {
    if (other.counts_[i] == 0) continue;
    const double centre = origin_ + (static_cast<double>(other.first_ + static_cast<std::int64_t>(i)) + 0.5) * width_;
    add(centre, other.counts_[i]);
  }
}

double ExpandableHistogram::quantile(double q) const {
  require(total_ > 0, ErrorCode::EmptyChannel, "histogram is empty");
  require(q >= 0.0 && q <= 1.0, ErrorCode::InvalidArgument, "quantile must lie in [0, 1]");
  const double target = q * static_cast<double>(total_);
  double cum = 0.0;
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    const auto c = static_cast<double>(counts_[i]);
    if (c == 0.0) continue;
    if (cum + c >= target) {
      const double lo = origin_ + static_cast<double>(first_ + static_cast<std::int64_t>(i)) * width_;
      return lo + width_ * (target - cum) / c;
    }
    cum += c;
  }
  return origin_ + static_cast<double>(first_ + static_cast<std::int64_t>(counts_.size())) * width_;
}

ExpandableHistogram ExpandableHistogram::from_counts(double bin_width, double origin, std::int64_t first_bin,
                                                     std::vector<std::uint64_t> counts) {
  ExpandableHistogram h(bin_width, origin);
  h.first_ = first_bin;
  h.counts_ = std::move(counts);
  for (auto c : h.counts_) h.total_ += c;
  return h;
}

// ---------------------------------------------------------------------------

HistogramScaler::HistogramScaler(std::vector<std::string> labels, double bin_width) : labels_(std::move(labels)) {
  hists_.assign(labels_.size(), ExpandableHistogram(bin_width, -bin_width / 2.0));
}

void HistogramScaler::observe(std::size_t channel, double value) {
  require(channel < hists_.size(), ErrorCode::ShapeMismatch, "channel index out of range");
  hists_[channel].add(value);
}

void HistogramScaler::observe(const SignalMatrix& window) {
  require(window.rows == hists_.size(), ErrorCode::ShapeMismatch,
          "window has " + std::to_string(window.rows) + " rows, scaler has " + std::to_string(hists_.size()));
  const auto n = static_cast<std::ptrdiff_t>(window.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n; ++r)
    for (double v : window.row(static_cast<std::size_t>(r))) hists_[static_cast<std::size_t>(r)].add(v);
}

void HistogramScaler::merge(const HistogramScaler& other) {
  require(other.labels_ == labels_, ErrorCode::InvalidArgument, "cannot merge scalers over different channels");
  for (std::size_t c = 0; c < hists_.size(); ++c) hists_[c].merge(other.hists_[c]);
}

ChannelStats HistogramScaler::stats(std::size_t c) const {
  require(c < hists_.size(), ErrorCode::ShapeMismatch, "channel index out of range");
  require(hists_[c].total() > 0, ErrorCode::EmptyChannel, "channel " + labels_[c] + " saw no samples");
  return {hists_[c].quantile(0.5), hists_[c].quantile(0.05), hists_[c].quantile(0.95)};
}

void HistogramScaler::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "dcae-histogram-scaler";
  j["version"] = 1;
  auto& chans = j["channels"] = nlohmann::json::array();
  for (std::size_t c = 0; c < hists_.size(); ++c) {
    const auto& h = hists_[c];
    chans.push_back({{"label", labels_[c]},
                     {"bin_width", h.bin_width()},
                     {"origin", h.origin()},
                     {"first_bin", h.first_bin()},
                     {"counts", h.counts()}});
  }
  std::ofstream f(path);
  if (!f) fail(ErrorCode::Io, "cannot create " + path.string());
  f << j.dump(1) << '\n';
}

HistogramScaler HistogramScaler::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::Io, "cannot open " + path.string());
  HistogramScaler s;
  try {
    const auto j = nlohmann::json::parse(f);
    if (j.at("format") != "dcae-histogram-scaler" || j.at("version") != 1)
      fail(ErrorCode::UnsupportedFeature, "not a version-1 scaler file");
    for (const auto& c : j.at("channels")) {
      s.labels_.push_back(c.at("label").get<std::string>());
      s.hists_.push_back(ExpandableHistogram::from_counts(c.at("bin_width").get<double>(), c.at("origin").get<double>(),
                                                          c.at("first_bin").get<std::int64_t>(),
                                                          c.at("counts").get<std::vector<std::uint64_t>>()));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedHeader, std::string("scaler file: ") + e.what());
  }
  return s;
}

SignalMatrix scaler_apply(const std::vector<ChannelStats>& stats, const SignalMatrix& window, double clip) {
  require(stats.size() == window.rows, ErrorCode::ShapeMismatch, "scaler/window channel count mismatch");
  SignalMatrix out(window.rows, window.cols);
  for (std::size_t r = 0; r < window.rows; ++r) {
    const double spread = stats[r].p95 - stats[r].p5;
    require(spread >= 1e-9, ErrorCode::DegenerateScale, "channel " + std::to_string(r) + " has p95 - p5 < 1e-9");
    auto src = window.row(r);
    auto dst = out.row(r);
    for (std::size_t t = 0; t < window.cols; ++t)
      dst[t] = std::clamp((src[t] - stats[r].median) / spread, -clip, clip);
  }
  return out;
}

SignalMatrix scaler_apply(const HistogramScaler& scaler, const SignalMatrix& window, double clip) {
  std::vector<ChannelStats> stats;
  for (std::size_t c = 0; c < scaler.channels(); ++c) stats.push_back(scaler.stats(c));
  return scaler_apply(stats, window, clip);
}

const std::array<std::size_t, 23>& flip_permutation() {
  static const std::array<std::size_t, 23> perm = [] {
    const auto& labels = montage_labels();
    const std::array<std::pair<const char*, const char*>, 10> pairs = {{{"FP1", "FP2"},
                                                                        {"F3", "F4"},
                                                                        {"C3", "C4"},
                                                                        {"P3", "P4"},
                                                                        {"O1", "O2"},
                                                                        {"F7", "F8"},
                                                                        {"T7", "T8"},
                                                                        {"P7", "P8"},
                                                                        {"A1", "A2"},
                                                                        {"T1", "T2"}}};
    auto idx = [&](const char* l) {
      return static_cast<std::size_t>(std::find(labels.begin(), labels.end(), l) - labels.begin());
    };
    std::array<std::size_t, 23> p{};
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = i;
    for (const auto& [a, b] : pairs) {
      p[idx(a)] = idx(b);
      p[idx(b)] = idx(a);
    }
    return p;
  }();
  return perm;
}

SignalMatrix flip_electrodes(const SignalMatrix& window) {
  const auto& perm = flip_permutation();
  require(window.rows == perm.size(), ErrorCode::ShapeMismatch, "electrode flip needs 23 montage rows");
  SignalMatrix out(window.rows, window.cols);
  for (std::size_t r = 0; r < window.rows; ++r) {
    auto src = window.row(perm[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace dcae
