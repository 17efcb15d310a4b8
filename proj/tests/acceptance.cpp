// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Usage: dcae_acceptance [criterion numbers...]   (default: all)
// The comparison experiment writes into ./acceptance_run.

#include <cfloat>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>

#include "dcae/commands.hpp"
#include "dcae/dcae.hpp"
#include "dcae/nn.hpp"
#include "dcae/pipeline.hpp"
#include "dcae/preprocess.hpp"
#include "dcae/spectral.hpp"
#include "dcae/synthgen.hpp"
#include "dcae/windowing.hpp"
#include "test_support.hpp"

using namespace dcae;
namespace fs = std::filesystem;
using TD = ad::Tensor<double>;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1

// Contract an op's output with fixed random weights so every output element
// reaches the scalar with its own coefficient.
double check_op(const std::function<TD()>& op, std::vector<nn::Parameter<double>> inputs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = op().numel();
  const auto w = TD::from({1, n}, testing::uniform(n, rng));
  const auto b = TD::zeros({1});
  nn::GradCheckOptions o;
  o.throw_on_failure = false;
  o.tolerance = 1e-4;
  const auto rep = nn::grad_check([&] { return ad::sum(ad::dense(ad::reshape(op(), {1, n}), w, b)); }, inputs, o);
  return rep.max_rel_error;
}

Outcome gradient_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  auto rnd = [&](ad::Shape s) {
    const auto n = ad::numel(s);
    return TD::from(std::move(s), testing::uniform(n, rng), true);
  };

  std::vector<std::pair<std::string, double>> layers;
  {
    auto x = rnd({2, 3, 9}), w = rnd({4, 3, 5}), b = rnd({4});
    layers.emplace_back("conv1d", check_op([&] { return ad::conv1d(x, w, b); }, {{"x", x}, {"w", w}, {"b", b}}, 1));
  }
  {
    auto x = rnd({3, 6}), w = rnd({4, 6}), b = rnd({4});
    layers.emplace_back("dense", check_op([&] { return ad::dense(x, w, b); }, {{"x", x}, {"w", w}, {"b", b}}, 2));
  }
  {
    auto x = rnd({4, 3, 6}), g = rnd({3}), be = rnd({3});
    layers.emplace_back("batch_norm_train", check_op([&] { return ad::batch_norm_train(x, g, be, 1e-5); },
                                                     {{"x", x}, {"gamma", g}, {"beta", be}}, 3));
    const std::vector<double> mean{0.1, -0.2, 0.3}, var{0.5, 1.5, 2.0};
    layers.emplace_back("batch_norm_eval", check_op([&] { return ad::batch_norm_eval(x, g, be, mean, var, 1e-5); },
                                                    {{"x", x}, {"gamma", g}, {"beta", be}}, 4));
  }
  {
    auto x = rnd({2, 3, 8});
    layers.emplace_back("relu", check_op([&] { return ad::relu(x); }, {{"x", x}}, 5));
    layers.emplace_back("tanh", check_op([&] { return ad::tanh(x); }, {{"x", x}}, 6));
    layers.emplace_back("dropout", check_op([&] { return ad::dropout(x, 0.2, 9); }, {{"x", x}}, 7));
    layers.emplace_back("maxpool2", check_op([&] { return ad::maxpool2(x); }, {{"x", x}}, 8));
    layers.emplace_back("upsample2", check_op([&] { return ad::upsample2(x); }, {{"x", x}}, 9));
    layers.emplace_back("reshape", check_op([&] { return ad::reshape(x, {6, 8}); }, {{"x", x}}, 10));
    layers.emplace_back("scale", check_op([&] { return ad::scale(x, -1.7); }, {{"x", x}}, 11));
    layers.emplace_back("slice_last", check_op([&] { return ad::slice_last(x, 2, 5); }, {{"x", x}}, 12));
    const std::vector<double> d{0.7, 2.5};
    layers.emplace_back("divide_rows", check_op([&] { return ad::divide_rows(x, d); }, {{"x", x}}, 13));
    auto y = rnd({2, 3, 8});
    layers.emplace_back("add", check_op([&] { return ad::add(x, y); }, {{"x", x}, {"y", y}}, 14));
    layers.emplace_back("l1_loss", check_op([&] { return ad::l1_loss(x, y); }, {{"x", x}, {"y", y}}, 15));
    layers.emplace_back("sum", check_op([&] { return ad::sum(x); }, {{"x", x}}, 16));
  }
  {
    auto x = rnd({2, 3, 32});
    layers.emplace_back("rfft_magnitude", check_op([&] { return ad::rfft_magnitude(x); }, {{"x", x}}, 17));
    layers.emplace_back("stft_magnitude", check_op([&] { return ad::stft_magnitude(x, 16, 4); }, {{"x", x}}, 18));
  }

  std::vector<std::pair<std::string, double>> whole;
  std::size_t kinks = 0;
  {
    const DcaeConfig cfg;
    auto x = rnd({2, 2, 512}), xh = rnd({2, 2, 512});
    nn::GradCheckOptions o;
    o.throw_on_failure = false;
    o.tolerance = 1e-3;
    whole.emplace_back("loss_ft", nn::grad_check([&] { return loss_ft(x, xh, cfg.band()); }, {{"xhat", xh}}, o).max_rel_error);
    whole.emplace_back("loss_stft", nn::grad_check([&] { return loss_stft(x, xh); }, {{"xhat", xh}}, o).max_rel_error);
  }
  for (LossMode mode : {LossMode::TS, LossMode::TS_FT, LossMode::TS_STFT}) {
    DcaeConfig cfg;
    cfg.in_channels = 2;
    cfg.in_time = 32;
    cfg.latent_dim = 5;
    cfg.widths = {4, 6, 6};
    cfg.stft_frame = 16;
    cfg.stft_hop = 4;
    cfg.loss_mode = mode;
    DcaeModel<double> m(cfg, 11);
    const auto x = TD::from({3, 2, 32}, testing::uniform(192, rng));
    nn::GradCheckOptions o;
    o.throw_on_failure = false;
    o.tolerance = 1e-3;
    const auto rep = nn::grad_check([&] { return combined_loss(x, m.forward(x, true, 7).recon, cfg).objective; },
                                    m.parameters(), o);
    whole.emplace_back(model_name(mode), rep.max_rel_error);
    kinks += rep.kinks;
  }

  const double t = seconds_since(t0);
  auto worst = [](const auto& v) { return *std::max_element(v.begin(), v.end(), [](auto& a, auto& b) { return a.second < b.second; }); };
  const auto wl = worst(layers), ww = worst(whole);
  Outcome r;
  r.pass = wl.second < 1e-4 && ww.second < 1e-3 && t < 120.0;
  r.detail = std::to_string(layers.size()) + " ops, worst " + wl.first + " " + fmt(wl.second) + " (< 1e-4); " +
             std::to_string(whole.size()) + " losses/models, worst " + ww.first + " " + fmt(ww.second) +
             " (< 1e-3); " + std::to_string(kinks) + " model elements checked one-sided at a kink; " + fmt(t) +
             " s (< 120)";
  return r;
}

// ---------------------------------------------------------------------------
// 2

Outcome spectral_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  double worst_fft = 0.0, worst_stft = 0.0;
  std::size_t frames = 0, bins = 0;
  for (int w = 0; w < 100; ++w) {
    const auto m = testing::random_matrix(23, 512, rng, 1.0 + w);
    const auto s = rfft_magnitude(m);
    const auto g = stft_magnitude(m);
    frames = g.frames;
    bins = g.bins;
    for (std::size_t c = 0; c < 23; ++c) {
      const auto ref = testing::naive_dft_magnitude(&m.data[c * 512], 512);
      for (std::size_t k = 0; k < ref.size(); ++k) worst_fft = std::max(worst_fft, std::abs(s.at(c, k) - ref[k]) / ref[k]);
      const auto sref = testing::naive_stft(&m.data[c * 512], 512, kStftFrame, kStftHop);
      for (std::size_t k = 0; k < sref.size(); ++k)
        for (std::size_t f = 0; f < sref[k].size(); ++f)
          worst_stft = std::max(worst_stft, std::abs(g.at(c, k, f) - sref[k][f]) / sref[k][f]);
    }
  }
  const auto band = DcaeConfig{}.band();
  const double t = seconds_since(t0);
  Outcome r;
  r.pass = worst_fft <= 1e-6 && worst_stft <= 1e-6 && frames == 57 && bins == 33 && band.lo_bin == 16 &&
           band.hi_bin == 60 && t < 60.0;
  r.detail = "rfft rel " + fmt(worst_fft) + ", stft rel " + fmt(worst_stft) + " (<= 1e-6); frames " +
             std::to_string(frames) + "; band [" + std::to_string(band.lo_bin) + ", " + std::to_string(band.hi_bin) +
             "]; " + fmt(t) + " s (< 60)";
  return r;
}

// ---------------------------------------------------------------------------
// 3

Outcome filter_responses() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto bp = design_bandpass(256.0), notch = design_notch(256.0);
  auto gain = [](const BiquadCascade& c, double f) {
    return testing::sine_gain_db([&c](const std::vector<double>& x) { return apply_filter(c, std::span<const double>(x)); },
                                 f, 256.0);
  };
  const double lo = gain(bp, 0.5), hi = gain(bp, 70.0);
  const double n59 = gain(notch, 59.0), n61 = gain(notch, 61.0), n60 = gain(notch, 60.0);
  const double t = seconds_since(t0);
  Outcome r;
  r.pass = std::abs(lo + 3.0) <= 0.1 && std::abs(hi + 3.0) <= 0.1 && std::abs(n59 + 3.0) <= 0.5 &&
           std::abs(n61 + 3.0) <= 0.5 && n60 <= -30.0 && t < 60.0;
  r.detail = "bandpass 0.5 Hz " + fmt(lo) + " dB, 70 Hz " + fmt(hi) + " dB; notch 59 Hz " + fmt(n59) + ", 61 Hz " +
             fmt(n61) + ", 60 Hz " + fmt(n60) + " dB; " + fmt(t) + " s";
  return r;
}

// ---------------------------------------------------------------------------
// 4

Outcome scaler_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(404);
  double worst = 0.0;
  bool clipped = true;
  for (int d = 0; d < 20; ++d) {
    const std::size_t n = 5000 + 2500 * static_cast<std::size_t>(d);
    std::vector<double> v(n);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double loc = 200.0 * u(rng), spread = 1.0 + 150.0 * (u(rng) + 1.0);
    std::normal_distribution<double> gauss(loc, spread);
    std::exponential_distribution<double> expo(1.0 / spread);
    std::lognormal_distribution<double> logn(std::log(spread), 0.8);
    std::student_t_distribution<double> heavy(2.5);
    std::bernoulli_distribution coin(0.3);
    for (auto& x : v) {
      switch (d % 5) {
        case 0: x = gauss(rng); break;
        case 1: x = loc + spread * u(rng); break;
        case 2: x = loc - expo(rng); break;
        case 3: x = loc + (coin(rng) ? logn(rng) : -0.2 * logn(rng)); break;
        default: x = loc + 0.3 * spread * heavy(rng); break;
      }
    }
    HistogramScaler s({"Cz"});
    for (double x : v) s.observe(0, x);
    const auto st = s.stats(0);
    worst = std::max({worst, std::abs(st.median - testing::sorted_quantile(v, 0.5)),
                      std::abs(st.p5 - testing::sorted_quantile(v, 0.05)),
                      std::abs(st.p95 - testing::sorted_quantile(v, 0.95))});

    // scaled windows drawn well beyond the fitted range
    SignalMatrix w(1, 512);
    for (auto& x : w.data) x = loc + 20.0 * spread * u(rng);
    for (double y : scaler_apply(s, w).data) clipped = clipped && y >= -1.0 && y <= 1.0;
  }
  const double t = seconds_since(t0);
  Outcome r;
  r.pass = worst <= 1.0 && clipped && t < 60.0;
  r.detail = "worst quantile gap " + fmt(worst) + " uV over 20 distributions (<= 1); scaled output " +
             (clipped ? "within" : "outside") + " [-1, 1]; " + fmt(t) + " s";
  return r;
}

// ---------------------------------------------------------------------------
// 5 and 7 share one comparison experiment

struct ExperimentRun {
  std::vector<report::SeedResult> seeds;
  double seconds = 0.0;
  std::size_t epochs_seen = 0, batches_seen = 0;
  double worst_total_gap = 0.0;      // logged total vs weighted components
  double worst_objective_gap = 0.0;  // backpropagated value vs weighted components, relative
  std::size_t min_windows = 0;
  std::size_t epochs = 0;
  std::string error;
};

ExperimentRun run_experiment() {
  ExperimentRun run;
  const auto cfg = load_run_config(fs::path(DCAE_CONFIG_DIR) / "tiny.json");
  run.epochs = cfg.training.epochs;
  const fs::path out = fs::current_path() / "acceptance_run";
  fs::remove_all(out);

  cli::ExperimentHooks hooks;
  hooks.on_epoch = [&](std::uint64_t, LossMode mode, const EpochLog& log) {
    ++run.epochs_seen;
    for (const auto& b : log.batches) {
      ++run.batches_seen;
      double expect = b.l_ts;
      if (mode == LossMode::TS_FT) expect = 20.0 * b.l_ft + b.l_ts;
      if (mode == LossMode::TS_STFT) expect = 20.0 * b.l_stft + b.l_ts;
      run.worst_total_gap = std::max(run.worst_total_gap, std::abs(b.total - expect));
      run.worst_objective_gap = std::max(run.worst_objective_gap, std::abs(b.objective - expect) / std::max(1.0, expect));
    }
  };
  const auto t0 = std::chrono::steady_clock::now();
  try {
    run.seeds = cli::cmd_experiment(cfg, out, hooks);
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  run.seconds = seconds_since(t0);
  run.min_windows = SIZE_MAX;
  for (auto seed : cfg.experiment.seeds) {
    const auto dir = out / ("seed_" + std::to_string(seed)) / "data";
    std::size_t n = 0;
    for (const char* f : {"train.dcaet", "dev.dcaet"})
      if (fs::exists(dir / f)) n += read_window_set(dir / f).size();
    run.min_windows = std::min(run.min_windows, n);
  }
  return run;
}

Outcome loss_arithmetic(const ExperimentRun& run) {
  // the same identity on a double-precision graph
  std::mt19937_64 rng(505);
  const auto x = TD::from({2, 23, 512}, testing::uniform(2 * 23 * 512, rng));
  const auto y = TD::from({2, 23, 512}, testing::uniform(2 * 23 * 512, rng));
  double worst_double = 0.0;
  for (LossMode mode : {LossMode::TS_FT, LossMode::TS_STFT}) {
    DcaeConfig cfg;
    cfg.loss_mode = mode;
    const double spectral = mode == LossMode::TS_FT ? loss_ft(x, y, cfg.band()).item() : loss_stft(x, y).item();
    const double expect = 20.0 * spectral + loss_ts(x, y).item();
    worst_double = std::max(worst_double, std::abs(combined_loss(x, y, cfg).objective.item() - expect));
  }
  // float32 graph: a few roundings of the weighted sum
  const double float_tol = 4.0 * FLT_EPSILON;
  const std::size_t expected_epochs = run.seeds.size() * 3 * run.epochs;
  Outcome r;
  r.pass = run.error.empty() && run.batches_seen > 0 && run.epochs_seen == expected_epochs &&
           run.worst_total_gap <= 1e-7 && run.worst_objective_gap <= float_tol && worst_double <= 1e-7;
  r.detail = std::to_string(run.batches_seen) + " batches over " + std::to_string(run.epochs_seen) +
             " epochs: logged total gap " + fmt(run.worst_total_gap) + " (<= 1e-7), float objective rel gap " +
             fmt(run.worst_objective_gap) + " (<= " + fmt(float_tol) + "); double graph gap " + fmt(worst_double);
  if (!run.error.empty()) r.detail += "; experiment failed: " + run.error;
  return r;
}

Outcome loss_comparison(const ExperimentRun& run) {
  std::size_t satisfied = 0;
  std::ostringstream seeds;
  for (const auto& s : run.seeds) {
    const auto v = report::judge(s);
    satisfied += v.all();
    seeds << " seed " << s.seed << ":" << (v.ts_best_time ? "T" : "t") << (v.ft_best_frequency ? "F" : "f")
          << (v.stft_within_margin ? "S" : "s");
  }
  Outcome r;
  r.pass = run.error.empty() && run.seeds.size() == 3 && satisfied >= 2 && run.min_windows >= 2000 &&
           run.epochs >= 20 && run.seconds < 1800.0;
  r.detail = std::to_string(satisfied) + " of " + std::to_string(run.seeds.size()) + " seeds satisfy every ordering (>= 2;" +
             seeds.str() + ", upper case = holds); >= " + std::to_string(run.min_windows) + " windows per seed, " +
             std::to_string(run.epochs) + " epochs; " + fmt(run.seconds / 60.0) + " min (< 30)";
  if (!run.error.empty()) r.detail += "; experiment failed: " + run.error;
  return r;
}

// ---------------------------------------------------------------------------
// 6

Outcome phase_blindness() {
  std::vector<double> a(23 * 512, 0.0), b(23 * 512, 0.0);
  for (std::size_t c = 0; c < 23; ++c) {
    a[c * 512 + 100] = 1.0;
    b[c * 512 + 300] = 1.0;
  }
  const auto x = TD::from({1, 23, 512}, a), y = TD::from({1, 23, 512}, b);
  const double ft = loss_ft(x, y, DcaeConfig{}.band()).item();
  const double stft = loss_stft(x, y).item();
  Outcome r;
  r.pass = ft < 1e-6 && stft > 0.01;
  r.detail = "impulse at 100 vs 300: loss_ft " + fmt(ft) + " (< 1e-6), loss_stft " + fmt(stft) + " (> 0.01)";
  return r;
}

// ---------------------------------------------------------------------------
// 8

Outcome pipeline_determinism() {
  const auto t0 = std::chrono::steady_clock::now();
  testing::TempDir dir("accept");
  RunConfig cfg;
  cfg.synth.n_files = 6;
  cfg.synth.duration_s = 30;
  cfg.synth.seed = 808;
  generate_corpus(cfg.synth, dir / "corpus");
  cfg.paths.corpus_dir = dir / "corpus";
  cfg.model.widths = {8, 16, 16};
  cfg.model.latent_dim = 64;
  cfg.training.epochs = 1;
  cfg.training.batch = 32;
  cfg.training.seed = 5;

  cli::cmd_preprocess(cfg, dir / "a");
  cli::cmd_preprocess(cfg, dir / "b");
  bool same_files = true;
  for (const char* f : {"train.dcaet", "dev.dcaet", "scaler.json"})
    same_files = same_files && testing::read_bytes(dir / "a" / f) == testing::read_bytes(dir / "b" / f);

  const auto l1 = cli::cmd_train(cfg, {dir / "a", dir / "m1", std::nullopt, {}});
  const auto l2 = cli::cmd_train(cfg, {dir / "b", dir / "m2", std::nullopt, {}});
  const bool same_loss = !l1.empty() && !l2.empty() && l1[0].mean.total == l2[0].mean.total &&
                         l1[0].mean.l_ts == l2[0].mean.l_ts && l1[0].mean.l_ft == l2[0].mean.l_ft &&
                         l1[0].mean.l_stft == l2[0].mean.l_stft;
  const bool same_ckpt = testing::read_bytes(dir / "m1" / "model.ckpt") == testing::read_bytes(dir / "m2" / "model.ckpt");
  Outcome r;
  r.pass = same_files && same_loss && same_ckpt;
  r.detail = std::string("tensor files ") + (same_files ? "identical" : "differ") + ", epoch-1 loss " +
             (same_loss ? "identical" : "differs") + " (" + (l1.empty() ? "none" : fmt(l1[0].mean.total)) +
             "), checkpoints " + (same_ckpt ? "identical" : "differ") + "; " + fmt(seconds_since(t0)) + " s";
  return r;
}

// ---------------------------------------------------------------------------
// 9

Outcome edf_round_trip() {
  testing::TempDir dir("accept");
  std::mt19937_64 rng(909);
  const double q = 2000.0 / 65535.0;
  const double rates[] = {128.0, 200.0, 250.0, 256.0, 500.0, 512.0};
  double worst = 0.0;
  bool shapes = true;
  for (int i = 0; i < 50; ++i) {
    Recording rec;
    rec.patient_id = "p" + std::to_string(i);
    const std::size_t channels = 1 + rng() % 24;
    // whole seconds most of the time, occasionally a half second over
    rec.duration_s = static_cast<double>(1 + rng() % 20) + (i % 5 == 4 ? 0.5 : 0.0);
    std::uniform_real_distribution<double> amp(1.0, 999.0), u(-1.0, 1.0);
    for (std::size_t c = 0; c < channels; ++c) {
      ChannelSignal ch;
      ch.label = "EEG CH" + std::to_string(c) + "-REF";
      ch.fs = rates[rng() % std::size(rates)];
      ch.samples.resize(static_cast<std::size_t>(std::llround(ch.fs * rec.duration_s)));
      const double a = amp(rng);
      double walk = 0.0;
      for (auto& x : ch.samples) {
        walk = std::clamp(walk + 0.05 * a * u(rng), -a, a);
        x = walk;
      }
      rec.channels.push_back(std::move(ch));
    }
    const auto path = dir / ("r" + std::to_string(i) + ".edf");
    write_edf_subset(rec, path);
    const auto back = read_edf(path);
    shapes = shapes && back.channels.size() == channels;
    for (std::size_t c = 0; c < std::min(channels, back.channels.size()); ++c) {
      const auto& s = rec.channels[c].samples;
      const auto& t = back.channels[c].samples;
      shapes = shapes && t.size() == s.size() && back.channels[c].label == rec.channels[c].label;
      for (std::size_t k = 0; k < std::min(s.size(), t.size()); ++k) worst = std::max(worst, std::abs(s[k] - t[k]));
    }
  }
  Outcome r;
  r.pass = shapes && worst <= q;
  r.detail = "50 recordings, worst error " + fmt(worst) + " uV (<= " + fmt(q) + "), layout " + (shapes ? "kept" : "changed");
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> want;
  for (int i = 1; i < argc; ++i) want.insert(std::atoi(argv[i]));
  auto on = [&](int k) { return want.empty() || want.count(k) > 0; };

  std::optional<ExperimentRun> experiment;
  auto shared_run = [&]() -> const ExperimentRun& {
    if (!experiment) experiment = run_experiment();
    return *experiment;
  };

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, gradient_checks},
      {2, spectral_oracles},
      {3, filter_responses},
      {4, scaler_fidelity},
      {5, [&] { return loss_arithmetic(shared_run()); }},
      {6, phase_blindness},
      {7, [&] { return loss_comparison(shared_run()); }},
      {8, pipeline_determinism},
      {9, edf_round_trip},
  };

  bool all = true;
  for (const auto& [k, fn] : criteria) {
    if (!on(k)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << "criterion " << k << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  }
  return all ? 0 : 1;
}
