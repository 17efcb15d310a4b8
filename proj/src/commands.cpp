#include "dcae/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dcae/kernels.hpp"
#include "dcae/log.hpp"
#include "dcae/preprocess.hpp"
#include "dcae/synthgen.hpp"

namespace dcae::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::InvalidArgument: return 1;
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::ToleranceExceeded:
    case ErrorCode::DegenerateScale: return 3;
    default: return 2;
  }
}

namespace {

void ensure_dir(const fs::path& d) {
  std::error_code ec;
  fs::create_directories(d, ec);
  require(!ec, ErrorCode::Io, "cannot create " + d.string() + ": " + ec.message());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream o(p);
  require(bool(o), ErrorCode::Io, "cannot write " + p.string());
  o << text;
}

std::string fs_label(double fs) {
  std::ostringstream o;
  o << fs;
  return o.str();
}

}  // namespace

StatsResult cmd_stats(const fs::path& corpus_dir, const fs::path& out_dir) {
  ensure_dir(out_dir);
  StatsResult r;
  std::vector<fs::path> files;
  if (fs::is_directory(corpus_dir)) files = list_edf_files(corpus_dir);
  r.files = files.size();
  if (files.empty()) {
    log::warn("no EDF files under " + corpus_dir.string());
    ++r.warnings;
  }
  r.census = sampling_rate_census(files);
  for (const auto& [path, why] : r.census.unreadable) {
    log::warn("unreadable: " + path + ": " + why);
    ++r.warnings;
  }

  std::string csv = "fs_hz,files\n";
  std::vector<std::pair<std::string, double>> bars;
  for (const auto& [rate, count] : r.census.counts) {
    csv += fs_label(rate) + "," + std::to_string(count) + "\n";
    bars.emplace_back(fs_label(rate) + " Hz", static_cast<double>(count));
  }
  csv += "unreadable," + std::to_string(r.census.unreadable.size()) + "\n";
  write_text(out_dir / "census.csv", csv);
  write_text(out_dir / "census.svg", report::svg_bar_chart("Initial sampling rates", bars));
  return r;
}

PreparedData cmd_preprocess(const RunConfig& cfg, const fs::path& out_dir) {
  ensure_dir(out_dir);
  save_run_config(cfg, out_dir / "resolved_config.json");
  const auto files = fs::is_directory(cfg.paths.corpus_dir) ? list_edf_files(cfg.paths.corpus_dir)
                                                            : std::vector<fs::path>{};
  require(!files.empty(), ErrorCode::EmptyDataset, "no EDF files under " + cfg.paths.corpus_dir.string());
  auto d = prepare_dataset(files, cfg.pipeline);
  write_preprocess_report(out_dir / "preprocess_report.csv", d.files);
  write_window_set(out_dir / "train.dcaet", d.train);
  write_window_set(out_dir / "dev.dcaet", d.dev);
  d.scaler.save(out_dir / "scaler.json");
  log::info("kept " + std::to_string(d.train.size()) + " train and " + std::to_string(d.dev.size()) + " dev windows");
  return d;
}

std::vector<EpochLog> cmd_train(const RunConfig& cfg, const TrainRequest& req) {
  ensure_dir(req.out_dir);
  save_run_config(cfg, req.out_dir / "resolved_config.json");
  const auto data = read_window_set(req.data_dir / "train.dcaet");
  TrainState state = req.resume ? load_checkpoint(*req.resume) : make_train_state(cfg.model, cfg.training.seed, cfg.training.lr);
  TrainOptions opts;
  opts.epochs = cfg.training.epochs;
  opts.batch = cfg.training.batch;
  opts.lr = cfg.training.lr;
  opts.seed = state.seed;
  opts.flip_probability = cfg.training.flip_probability;
  opts.checkpoint_path = req.out_dir / "model.ckpt";
  opts.log_csv = req.out_dir / "train_log.csv";
  opts.on_epoch = req.on_epoch;
  return train(state, data, opts);
}

std::vector<std::pair<std::string, Metrics>> cmd_eval(const fs::path& checkpoint, const fs::path& data_dir,
                                                      const fs::path& out_dir) {
  ensure_dir(out_dir);
  auto model = load_reconstructor(checkpoint);
  std::vector<std::pair<std::string, Metrics>> out;
  for (const char* split : {"train", "dev"}) {
    const auto path = data_dir / (std::string(split) + ".dcaet");
    if (!fs::exists(path)) continue;
    const auto set = read_window_set(path);
    if (set.size() == 0) continue;
    out.emplace_back(split, evaluate(*model, set));
  }
  require(!out.empty(), ErrorCode::EmptyDataset, "no windows under " + data_dir.string());
  std::string csv = "split,mae_time,mae_frequency,windows\n";
  for (const auto& [split, m] : out) {
    char b[160];
    std::snprintf(b, sizeof b, "%s,%.9g,%.9g,%zu\n", split.c_str(), m.mae_time, m.mae_frequency, m.windows);
    csv += b;
  }
  write_text(out_dir / "metrics.csv", csv);
  return out;
}

void cmd_plot(const fs::path& checkpoint, const fs::path& windows_file, std::size_t window_id,
              const std::vector<std::string>& channels, double fs, const fs::path& out_dir) {
  ensure_dir(out_dir);
  auto model = load_reconstructor(checkpoint);
  const auto set = read_window_set(windows_file);
  require(window_id < set.size(), ErrorCode::InvalidArgument,
          "window " + std::to_string(window_id) + " out of range (" + std::to_string(set.size()) + " windows)");
  const auto rec = reconstruct(*model, set.matrix(window_id), fs);

  const auto& labels = montage_labels();
  std::vector<std::size_t> rows;
  for (const auto& raw : channels) {
    const auto name = normalize_label(raw);
    auto it = name ? std::find(labels.begin(), labels.end(), *name) : labels.end();
    require(it != labels.end(), ErrorCode::InvalidArgument, "unknown channel '" + raw + "'");
    rows.push_back(static_cast<std::size_t>(it - labels.begin()));
  }

  std::vector<report::Panel> traces, spectra;
  std::string csv = "channel,bin,freq_hz,original,reconstruction\n";
  for (std::size_t r : rows) {
    report::Panel t{labels[r], {}, {}, {}};
    for (std::size_t i = 0; i < rec.original.cols; ++i) {
      t.x.push_back(static_cast<double>(i) / fs);
      t.original.push_back(rec.original(r, i));
      t.reconstruction.push_back(rec.reconstruction(r, i));
    }
    traces.push_back(std::move(t));
    report::Panel s{labels[r] + " |X(f)|", {}, {}, {}};
    for (std::size_t k = 0; k < rec.original_spectrum.bins; ++k) {
      const double f = static_cast<double>(k) * rec.original_spectrum.df;
      s.x.push_back(f);
      s.original.push_back(rec.original_spectrum.at(r, k));
      s.reconstruction.push_back(rec.reconstruction_spectrum.at(r, k));
      char b[160];
      std::snprintf(b, sizeof b, "%s,%zu,%g,%.17g,%.17g\n", labels[r].c_str(), k, f, rec.original_spectrum.at(r, k),
                    rec.reconstruction_spectrum.at(r, k));
      csv += b;
    }
    spectra.push_back(std::move(s));
  }
  write_text(out_dir / "reconstruction_traces.svg",
             report::svg_overlay("Window " + std::to_string(window_id) + ": original (black) vs reconstruction (red)",
                                 traces));
  write_text(out_dir / "reconstruction_spectrum.svg",
             report::svg_overlay("Magnitude spectra, unnormalised", spectra));
  write_text(out_dir / "plot_data.csv", csv);
}

std::vector<report::SeedResult> cmd_experiment(const RunConfig& cfg, const fs::path& out_dir,
                                               const ExperimentHooks& hooks) {
  ensure_dir(out_dir);
  save_run_config(cfg, out_dir / "resolved_config.json");
  std::vector<report::SeedResult> results;
  json record = json::array();
  for (std::uint64_t seed : cfg.experiment.seeds) {
    const fs::path dir = out_dir / ("seed_" + std::to_string(seed));
    RunConfig c = cfg;
    c.synth.seed = seed;
    c.training.seed = seed;
    c.paths.corpus_dir = dir / "corpus";
    c.paths.work_dir = dir / "data";
    log::info("seed " + std::to_string(seed) + ": generating corpus");
    generate_corpus(c.synth, c.paths.corpus_dir);
    const auto data = cmd_preprocess(c, c.paths.work_dir);
    const bool use_dev = data.dev.size() > 0;
    const WindowSet& eval_set = use_dev ? data.dev : data.train;

    report::SeedResult sr;
    sr.seed = seed;
    json models = json::object();
    for (LossMode mode : cfg.experiment.loss_modes) {
      RunConfig m = c;
      m.model.loss_mode = mode;
      const fs::path mdir = dir / model_name(mode);
      log::info("seed " + std::to_string(seed) + ": training " + model_name(mode));
      TrainRequest req{c.paths.work_dir, mdir, std::nullopt, nullptr};
      if (hooks.on_epoch) req.on_epoch = [&](const EpochLog& e) { hooks.on_epoch(seed, mode, e); };
      cmd_train(m, req);
      auto model = load_reconstructor(mdir / "model.ckpt");
      const auto metrics = evaluate(*model, eval_set);
      sr.models.push_back({mode, metrics});
      models[model_name(mode)] = {{"mae_time", metrics.mae_time}, {"mae_frequency", metrics.mae_frequency}};
    }
    write_text(out_dir / ("comparison_seed" + std::to_string(seed) + ".csv"), report::comparison_csv(sr));
    const auto v = report::judge(sr);
    record.push_back({{"seed", seed},
                      {"eval_split", use_dev ? "dev" : "train"},
                      {"train_windows", data.train.size()},
                      {"eval_windows", eval_set.size()},
                      {"models", models},
                      {"ts_best_time", report::verdict_word(v.ts_best_time)},
                      {"ts_ft_best_frequency", report::verdict_word(v.ft_best_frequency)},
                      {"ts_stft_within_15pct", report::verdict_word(v.stft_within_margin)}});
    results.push_back(std::move(sr));
  }
  write_text(out_dir / "report.md", report::comparison_markdown(results));
  write_text(out_dir / "experiment.json", record.dump(2) + "\n");
  return results;
}

// ---------------------------------------------------------------------------

namespace {

void apply_thread_cap() {
  if (const char* env = std::getenv("DCAE_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    require(end != env && *end == '\0' && n > 0, ErrorCode::ConfigInvalid,
            std::string("DCAE_THREADS must be a positive integer, got '") + env + "'");
    kernels::set_max_threads(static_cast<int>(n));
  }
}

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::string out;
  std::string checkpoint;
  std::string channels;
  std::string data;
  std::string corpus;
  std::size_t window_id = 0;
  bool verbose = false;
};

RunConfig resolve(const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (f.has_seed) {
    c.training.seed = f.seed;
    c.synth.seed = f.seed;
  }
  c.validate();
  return c;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG preprocessing and convolutional autoencoder toolkit"};
  app.require_subcommand(1);
  Flags f;
  auto common = [&](CLI::App* sub, bool checkpoint) {
    sub->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { f.seed = s, f.has_seed = true; },
                                            "override training and synthesis seeds");
    sub->add_option("--out", f.out, "output directory (default: paths.work_dir)");
    if (checkpoint) sub->add_option("--checkpoint", f.checkpoint, "model checkpoint");
    sub->add_flag("-v,--verbose", f.verbose, "progress messages");
  };
  auto* stats = app.add_subcommand("stats", "sampling-rate census of a corpus");
  common(stats, false);
  stats->add_option("--corpus", f.corpus, "corpus directory (default: paths.corpus_dir)");
  auto* pre = app.add_subcommand("preprocess", "clean, filter, window and scale a corpus");
  common(pre, false);
  auto* tr = app.add_subcommand("train", "train one autoencoder (resume with --checkpoint)");
  common(tr, true);
  tr->add_option("--data", f.data, "directory with train.dcaet (default: paths.work_dir)");
  auto* ev = app.add_subcommand("eval", "time and frequency reconstruction error");
  common(ev, true);
  ev->add_option("--data", f.data, "directory with train/dev tensors (default: paths.work_dir)");
  auto* pl = app.add_subcommand("plot", "SVG overlays of one reconstructed window");
  common(pl, true);
  pl->add_option("--data", f.data, "window tensor file (default: paths.work_dir/dev.dcaet)");
  pl->add_option("--window", f.window_id, "window index");
  pl->add_option("--channels", f.channels, "comma-separated electrodes")->default_str("O2,C4,P7,Cz");
  auto* ex = app.add_subcommand("experiment", "train and compare the three loss variants");
  common(ex, false);
  auto* sy = app.add_subcommand("synth", "write a synthetic EDF corpus");
  common(sy, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (f.verbose) log::level() = log::Level::Info;
    apply_thread_cap();
    const RunConfig cfg = resolve(f);
    const fs::path out = f.out.empty() ? cfg.paths.work_dir : fs::path(f.out);
    auto need_checkpoint = [&] {
      require(!f.checkpoint.empty(), ErrorCode::ConfigInvalid, "--checkpoint is required");
      return fs::path(f.checkpoint);
    };

    if (*stats) {
      const auto r = cmd_stats(f.corpus.empty() ? cfg.paths.corpus_dir : fs::path(f.corpus), out);
      std::cout << "fs_hz,files\n";
      for (const auto& [rate, n] : r.census.counts) std::cout << rate << ',' << n << '\n';
      std::cout << "unreadable," << r.census.unreadable.size() << '\n';
      if (r.warnings) std::cerr << r.warnings << " warning(s)\n";
    } else if (*pre) {
      const auto d = cmd_preprocess(cfg, out);
      std::cout << "train windows: " << d.train.size() << "\ndev windows: " << d.dev.size() << '\n';
    } else if (*tr) {
      TrainRequest req{f.data.empty() ? cfg.paths.work_dir : fs::path(f.data), out, std::nullopt, nullptr};
      if (!f.checkpoint.empty()) req.resume = fs::path(f.checkpoint);
      req.on_epoch = [](const EpochLog& e) { std::cout << train_log_row(e) << std::endl; };
      std::cout << train_log_header() << '\n';
      cmd_train(cfg, req);
    } else if (*ev) {
      const auto rows = cmd_eval(need_checkpoint(), f.data.empty() ? cfg.paths.work_dir : fs::path(f.data), out);
      std::cout << "split,mae_time,mae_frequency,windows\n";
      for (const auto& [split, m] : rows)
        std::cout << split << ',' << m.mae_time << ',' << m.mae_frequency << ',' << m.windows << '\n';
    } else if (*pl) {
      const fs::path data = f.data.empty() ? cfg.paths.work_dir / "dev.dcaet" : fs::path(f.data);
      cmd_plot(need_checkpoint(), data, f.window_id, split_csv(f.channels.empty() ? "O2,C4,P7,Cz" : f.channels),
               cfg.pipeline.filter.target_fs, out);
    } else if (*ex) {
      const auto results = cmd_experiment(cfg, out);
      std::cout << report::comparison_markdown(results);
    } else if (*sy) {
      const auto m = generate_corpus(cfg.synth, f.out.empty() ? cfg.paths.corpus_dir : fs::path(f.out));
      std::cout << "wrote " << m.files.size() << " files\n";
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace dcae::cli
