#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dcae/dcae.hpp"
#include "dcae/error.hpp"
#include "dcae/pipeline.hpp"
#include "dcae/report.hpp"
#include "dcae/signal_io.hpp"

namespace dcae::cli {

// 0 success, 1 usage/config, 2 data, 3 numeric.
int exit_code_for(ErrorCode code);

struct StatsResult {
  RateCensus census;
  std::size_t files = 0;
  std::size_t warnings = 0;
};
// census.csv and census.svg in out_dir.
StatsResult cmd_stats(const std::filesystem::path& corpus_dir, const std::filesystem::path& out_dir);

// train.dcaet, dev.dcaet, scaler.json, preprocess_report.csv, resolved_config.json.
// Throws EmptyDataset when no window survives.
PreparedData cmd_preprocess(const RunConfig& cfg, const std::filesystem::path& out_dir);

struct TrainRequest {
  std::filesystem::path data_dir;  // holds train.dcaet
  std::filesystem::path out_dir;   // model.ckpt, train_log.csv
  std::optional<std::filesystem::path> resume;
  std::function<void(const EpochLog&)> on_epoch;
};
std::vector<EpochLog> cmd_train(const RunConfig& cfg, const TrainRequest& req);

// metrics.csv with one row per split present in data_dir.
std::vector<std::pair<std::string, Metrics>> cmd_eval(const std::filesystem::path& checkpoint,
                                                      const std::filesystem::path& data_dir,
                                                      const std::filesystem::path& out_dir);

// reconstruction_traces.svg, reconstruction_spectrum.svg and plot_data.csv.
void cmd_plot(const std::filesystem::path& checkpoint, const std::filesystem::path& windows_file,
              std::size_t window_id, const std::vector<std::string>& channels, double fs,
              const std::filesystem::path& out_dir);

struct ExperimentHooks {
  std::function<void(std::uint64_t seed, LossMode mode, const EpochLog&)> on_epoch;
};
// For every experiment seed: synthesise a corpus, preprocess it, train one
// model per loss mode and evaluate on the dev split. Writes report.md,
// comparison_seed<k>.csv and experiment.json.
std::vector<report::SeedResult> cmd_experiment(const RunConfig& cfg, const std::filesystem::path& out_dir,
                                               const ExperimentHooks& hooks = {});

// Full command-line entry point; never throws.
int main(int argc, char** argv);

}  // namespace dcae::cli
