#include "dcae/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>

#include "dcae/error.hpp"
#include "dcae/log.hpp"

namespace dcae {

using nlohmann::json;

std::size_t PipelineConfig::window_samples() const {
  return static_cast<std::size_t>(std::llround(window_s * filter.target_fs));
}

std::size_t PipelineConfig::hop_samples() const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(window_samples()) * (1.0 - overlap)));
}

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) { require(ok, ErrorCode::ConfigInvalid, msg); };
  model.validate();
  synth.validate();
  need(pipeline.filter.target_fs > 0.0, "pipeline.target_fs must be positive");
  need(pipeline.overlap >= 0.0 && pipeline.overlap < 1.0, "pipeline.overlap must lie in [0, 1)");
  need(pipeline.hop_samples() > 0, "pipeline window/overlap give a zero hop");
  need(pipeline.clip > 0.0, "pipeline.clip must be positive");
  need(pipeline.scaler_bin_width_uv > 0.0, "pipeline.scaler_bin_width_uv must be positive");
  need(pipeline.window_samples() == model.in_time,
       "pipeline window (" + std::to_string(pipeline.window_samples()) + " samples) must equal model.in_time (" +
           std::to_string(model.in_time) + ")");
  need(model.in_channels == kMontageChannels, "model.in_channels must equal the montage size (23)");
  need(model.fs == pipeline.filter.target_fs, "model.fs must equal pipeline.target_fs");
  need(training.epochs > 0 && training.batch > 0, "training.epochs and training.batch must be positive");
  need(training.lr > 0.0, "training.lr must be positive");
  need(training.flip_probability >= 0.0 && training.flip_probability <= 1.0,
       "training.flip_probability must lie in [0, 1]");
  need(!experiment.loss_modes.empty() && !experiment.seeds.empty(), "experiment needs loss modes and seeds");
}

namespace {

using Handlers = std::map<std::string, std::function<void(const json&)>>;

void parse_object(const json& j, const std::string& section, const Handlers& handlers) {
  require(j.is_object(), ErrorCode::ConfigInvalid, section + " must be an object");
  for (const auto& [key, v] : j.items()) {
    auto it = handlers.find(key);
    require(it != handlers.end(), ErrorCode::ConfigInvalid, "unknown key '" + section + "." + key + "'");
    try {
      it->second(v);
    } catch (const json::exception& e) {
      fail(ErrorCode::ConfigInvalid, section + "." + key + ": " + e.what());
    }
  }
}

template <typename V>
std::function<void(const json&)> into(V& target) {
  return [&target](const json& v) { target = v.get<V>(); };
}

}  // namespace

json to_json(const RunConfig& c) {
  const auto& p = c.pipeline;
  json modes = json::array();
  for (auto m : c.experiment.loss_modes) modes.push_back(to_string(m));
  return json{
      {"paths", {{"corpus_dir", c.paths.corpus_dir.string()}, {"work_dir", c.paths.work_dir.string()}}},
      {"pipeline",
       {{"target_fs", p.filter.target_fs},
        {"bandpass_hz", {p.filter.highpass_hz, p.filter.lowpass_hz}},
        {"notch_hz", p.filter.notch_hz},
        {"notch_bandwidth_hz", p.filter.notch_bandwidth_hz},
        {"window_s", p.window_s},
        {"overlap", p.overlap},
        {"clip", p.clip},
        {"std_high_uv", p.plausibility.std_high_uv},
        {"std_low_uv", p.plausibility.std_low_uv},
        {"max_flat_channels", p.plausibility.max_flat_channels},
        {"dev_every", p.dev_every},
        {"scaler_bin_width_uv", p.scaler_bin_width_uv}}},
      {"model", c.model},
      {"training",
       {{"epochs", c.training.epochs},
        {"batch", c.training.batch},
        {"lr", c.training.lr},
        {"seed", c.training.seed},
        {"flip_probability", c.training.flip_probability}}},
      {"experiment", {{"loss_modes", modes}, {"seeds", c.experiment.seeds}}},
      {"synth", c.synth}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  std::string corpus = c.paths.corpus_dir.string(), work = c.paths.work_dir.string();
  auto& p = c.pipeline;
  parse_object(
      j, "config",
      {{"paths",
        [&](const json& v) { parse_object(v, "paths", {{"corpus_dir", into(corpus)}, {"work_dir", into(work)}}); }},
       {"pipeline",
        [&](const json& v) {
          parse_object(v, "pipeline",
                       {{"target_fs", into(p.filter.target_fs)},
                        {"bandpass_hz",
                         [&](const json& b) {
                           const auto a = b.get<std::array<double, 2>>();
                           p.filter.highpass_hz = a[0];
                           p.filter.lowpass_hz = a[1];
                         }},
                        {"notch_hz", into(p.filter.notch_hz)},
                        {"notch_bandwidth_hz", into(p.filter.notch_bandwidth_hz)},
                        {"window_s", into(p.window_s)},
                        {"overlap", into(p.overlap)},
                        {"clip", into(p.clip)},
                        {"std_high_uv", into(p.plausibility.std_high_uv)},
                        {"std_low_uv", into(p.plausibility.std_low_uv)},
                        {"max_flat_channels", into(p.plausibility.max_flat_channels)},
                        {"dev_every", into(p.dev_every)},
                        {"scaler_bin_width_uv", into(p.scaler_bin_width_uv)}});
        }},
       {"model", [&](const json& v) { from_json(v, c.model); }},
       {"training",
        [&](const json& v) {
          parse_object(v, "training",
                       {{"epochs", into(c.training.epochs)},
                        {"batch", into(c.training.batch)},
                        {"lr", into(c.training.lr)},
                        {"seed", into(c.training.seed)},
                        {"flip_probability", into(c.training.flip_probability)}});
        }},
       {"experiment",
        [&](const json& v) {
          parse_object(v, "experiment",
                       {{"loss_modes",
                         [&](const json& m) {
                           c.experiment.loss_modes.clear();
                           for (const auto& s : m) c.experiment.loss_modes.push_back(loss_mode_from_string(s));
                         }},
                        {"seeds", into(c.experiment.seeds)}});
        }},
       {"synth", [&](const json& v) { from_json(v, c.synth); }}});
  c.paths.corpus_dir = corpus;
  c.paths.work_dir = work;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(bool(in), ErrorCode::ConfigInvalid, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigInvalid, path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const RunConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(bool(out), ErrorCode::Io, "cannot write " + path.string());
  out << to_json(c).dump(2) << '\n';
}

// ---------------------------------------------------------------------------

std::vector<FileWindows> extract_windows(const std::vector<std::filesystem::path>& files, const PipelineConfig& cfg) {
  std::vector<FileWindows> out(files.size());
  const std::size_t win = cfg.window_samples(), hop = cfg.hop_samples();
  const auto N = static_cast<std::ptrdiff_t>(files.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ii = 0; ii < N; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    auto& fw = out[i];
    fw.file = files[i].filename().string();
    fw.split = cfg.dev_every && i % cfg.dev_every == cfg.dev_every - 1 ? "dev" : "train";
    try {
      const auto rec = read_edf(files[i]);
      // The screen looks at the referential rows: re-referencing would smear a
      // dead electrode with the average of the others.
      SignalMatrix referential;
      const auto montage = preprocess_recording(rec, cfg.filter, MontageSpec::standard(), &referential);
      if (montage.cols < win) {
        fw.counts.too_short = 1;
        continue;
      }
      auto screened = segment_windows(referential, win, hop);
      auto windows = segment_windows(montage, win, hop);
      for (std::size_t k = 0; k < windows.size(); ++k) {
        auto& w = windows[k];
        const auto verdict = plausibility_check(screened[k], cfg.plausibility);
        if (verdict.keep) {
          fw.windows.push_back(std::move(w));
          ++fw.counts.kept;
        } else if (verdict.reason == RejectReason::StdHigh) {
          ++fw.counts.std_high;
        } else {
          ++fw.counts.std_low;
        }
      }
    } catch (const Error& e) {
      fw.error = e.what();
      switch (e.code()) {
        case ErrorCode::MissingChannels: fw.counts.missing_channels = 1; break;
        case ErrorCode::TooShort: fw.counts.too_short = 1; break;
        default: fw.counts.unreadable = 1; break;
      }
    }
  }
  for (const auto& fw : out)
    if (!fw.error.empty()) log::warn(fw.file + ": " + fw.error);
  return out;
}

namespace {

void append_scaled(WindowSet& set, const std::vector<ChannelStats>& stats, const SignalMatrix& w, double clip) {
  const auto scaled = scaler_apply(stats, w, clip);
  set.data.insert(set.data.end(), scaled.data.begin(), scaled.data.end());
}

}  // namespace

PreparedData prepare_dataset(const std::vector<std::filesystem::path>& files, const PipelineConfig& cfg) {
  auto sorted = files;
  std::sort(sorted.begin(), sorted.end());
  PreparedData d;
  d.files = extract_windows(sorted, cfg);

  const auto& labels = montage_labels();
  d.scaler = HistogramScaler(std::vector<std::string>(labels.begin(), labels.end()), cfg.scaler_bin_width_uv);
  std::size_t train_windows = 0;
  for (const auto& fw : d.files) {
    if (fw.split != "train") continue;
    for (const auto& w : fw.windows) d.scaler.observe(w);
    train_windows += fw.windows.size();
  }
  require(train_windows > 0, ErrorCode::EmptyDataset, "no accepted windows in the train split");

  std::vector<ChannelStats> stats;
  for (std::size_t c = 0; c < d.scaler.channels(); ++c) stats.push_back(d.scaler.stats(c));
  const std::size_t T = cfg.window_samples();
  d.train = WindowSet{kMontageChannels, T, {}};
  d.dev = WindowSet{kMontageChannels, T, {}};
  for (auto& fw : d.files) {
    auto& set = fw.split == "train" ? d.train : d.dev;
    for (const auto& w : fw.windows) append_scaled(set, stats, w, cfg.clip);
    fw.windows.clear();
    fw.windows.shrink_to_fit();
  }
  return d;
}

WindowSet read_window_set(const std::filesystem::path& path) {
  auto t = read_tensor(path);
  require(t.dims.size() == 3, ErrorCode::ShapeMismatch, path.string() + ": expected a rank-3 window tensor");
  WindowSet s;
  s.channels = t.dims[1];
  s.time = t.dims[2];
  s.data = std::move(t.data);
  return s;
}

void write_window_set(const std::filesystem::path& path, const WindowSet& set) {
  const std::uint64_t dims[3] = {set.size(), set.channels, set.time};
  write_tensor(path, dims, set.data);
}

void write_preprocess_report(const std::filesystem::path& path, const std::vector<FileWindows>& files) {
  std::ofstream out(path);
  require(bool(out), ErrorCode::Io, "cannot write " + path.string());
  out << "file,split,kept,std-high,std-low,missing-channels,too-short,unreadable\n";
  WindowCounts total;
  for (const auto& f : files) {
    const auto& c = f.counts;
    out << f.file << ',' << f.split << ',' << c.kept << ',' << c.std_high << ',' << c.std_low << ','
        << c.missing_channels << ',' << c.too_short << ',' << c.unreadable << '\n';
    total.kept += c.kept;
    total.std_high += c.std_high;
    total.std_low += c.std_low;
    total.missing_channels += c.missing_channels;
    total.too_short += c.too_short;
    total.unreadable += c.unreadable;
  }
  out << "TOTAL,," << total.kept << ',' << total.std_high << ',' << total.std_low << ',' << total.missing_channels
      << ',' << total.too_short << ',' << total.unreadable << '\n';
}

}  // namespace dcae
