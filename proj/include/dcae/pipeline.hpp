#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dcae/dcae.hpp"
#include "dcae/preprocess.hpp"
#include "dcae/synthgen.hpp"
#include "dcae/windowing.hpp"
#include "json.hpp"

namespace dcae {

struct PathsConfig {
  std::filesystem::path corpus_dir = "corpus";
  std::filesystem::path work_dir = "work";
};

struct PipelineConfig {
  PipelineOptions filter;
  double window_s = 2.0;
  double overlap = 0.5;
  double clip = 1.0;
  PlausibilityOptions plausibility;
  // Every dev_every-th file (in sorted order) goes to the dev split.
  std::size_t dev_every = 5;
  double scaler_bin_width_uv = 1.0;

  std::size_t window_samples() const;
  std::size_t hop_samples() const;
};

struct TrainingConfig {
  std::size_t epochs = 50;
  std::size_t batch = 256;
  double lr = 0.001;
  std::uint64_t seed = 0;
  double flip_probability = 0.5;
};

struct ExperimentConfig {
  std::vector<LossMode> loss_modes{LossMode::TS, LossMode::TS_FT, LossMode::TS_STFT};
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

struct RunConfig {
  PathsConfig paths;
  PipelineConfig pipeline;
  DcaeConfig model;
  TrainingConfig training;
  ExperimentConfig experiment;
  SynthSpec synth;

  // Cross-section consistency; throws ConfigInvalid.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
// Unknown keys anywhere raise ConfigInvalid; absent keys keep defaults.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& c, const std::filesystem::path& path);

// ---------------------------------------------------------------------------

struct WindowCounts {
  std::size_t kept = 0;
  std::size_t std_high = 0;
  std::size_t std_low = 0;
  std::size_t missing_channels = 0;  // whole files, counted in files
  std::size_t too_short = 0;         // whole files
  std::size_t unreadable = 0;        // whole files
};

struct FileWindows {
  std::string file;
  std::string split;  // "train" or "dev"
  std::vector<SignalMatrix> windows;  // accepted, unscaled, montage order
  WindowCounts counts;
  std::string error;
};

// Reads, preprocesses, windows and screens every file (in parallel). Failures
// are recorded per file rather than thrown.
std::vector<FileWindows> extract_windows(const std::vector<std::filesystem::path>& files, const PipelineConfig& cfg);

struct PreparedData {
  HistogramScaler scaler;
  WindowSet train;
  WindowSet dev;
  std::vector<FileWindows> files;  // windows cleared, counts kept
};

// Fits the scaler on the train split only and scales both splits.
PreparedData prepare_dataset(const std::vector<std::filesystem::path>& files, const PipelineConfig& cfg);

WindowSet read_window_set(const std::filesystem::path& path);
void write_window_set(const std::filesystem::path& path, const WindowSet& set);

void write_preprocess_report(const std::filesystem::path& path, const std::vector<FileWindows>& files);

}  // namespace dcae
