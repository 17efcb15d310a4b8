#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dcae/dcae.hpp"

namespace dcae::report {

// Vertical bars, one per (label, value).
std::string svg_bar_chart(const std::string& title, const std::vector<std::pair<std::string, double>>& bars);

struct Panel {
  std::string title;
  std::vector<double> x;
  std::vector<double> original;
  std::vector<double> reconstruction;
};

// Panels stacked vertically; each holds exactly two polylines (original, reconstruction).
std::string svg_overlay(const std::string& title, const std::vector<Panel>& panels);

struct ModelResult {
  LossMode mode;
  Metrics metrics;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<ModelResult> models;
};

struct Verdict {
  bool ts_best_time = false;
  bool ft_best_frequency = false;
  bool stft_within_margin = false;
  bool all() const { return ts_best_time && ft_best_frequency && stft_within_margin; }
};

// Ordering checks for one seed; `margin` is the relative slack allowed for the STFT model.
Verdict judge(const SeedResult& r, double margin = 0.15);

inline const char* verdict_word(bool ok) { return ok ? "confirmed" : "violated"; }

// Two metric rows by one column per model.
std::string comparison_csv(const SeedResult& r);
std::string comparison_markdown(const std::vector<SeedResult>& seeds, std::size_t required_seeds = 2);

}  // namespace dcae::report
