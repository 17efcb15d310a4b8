#include "dcae/dcae.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "dcae/error.hpp"
#include "dcae/fft.hpp"
#include "dcae/kernels.hpp"
#include "dcae/log.hpp"
#include "dcae/windowing.hpp"

namespace dcae {

using nlohmann::json;

const char* to_string(LossMode m) {
  switch (m) {
    case LossMode::TS: return "TS";
    case LossMode::TS_FT: return "TS_FT";
    case LossMode::TS_STFT: return "TS_STFT";
  }
  return "?";
}

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "TS" || s == "ts") return LossMode::TS;
  if (s == "TS_FT" || s == "ts-ft" || s == "ts_ft") return LossMode::TS_FT;
  if (s == "TS_STFT" || s == "ts-stft" || s == "ts_stft") return LossMode::TS_STFT;
  fail(ErrorCode::ConfigInvalid, "unknown loss mode '" + s + "' (expected TS, TS_FT or TS_STFT)");
}

std::string model_name(LossMode m) {
  switch (m) {
    case LossMode::TS: return "DCAE_ts";
    case LossMode::TS_FT: return "DCAE_ts-ft";
    case LossMode::TS_STFT: return "DCAE_ts-stft";
  }
  return "DCAE_?";
}

BandMask DcaeConfig::band() const {
  return BandMask::from_hz(band_lo_hz, band_hi_hz, fs / static_cast<double>(in_time));
}

void DcaeConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) { require(ok, ErrorCode::ConfigInvalid, msg); };
  need(in_channels > 0, "in_channels must be positive");
  need(is_power_of_two(in_time) && in_time >= 4, "in_time must be a power of two >= 4");
  need(latent_dim > 0, "latent_dim must be positive");
  for (std::size_t i = 0; i < 3; ++i) {
    need(widths[i] > 0, "widths must be positive");
    need(kernels[i] % 2 == 1, "kernels must be odd");
  }
  need(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  need(ft_weight >= 0.0 && stft_weight >= 0.0, "loss weights must be nonnegative");
  need(fs > 0.0, "fs must be positive");
  need(band_lo_hz >= 0.0 && band_hi_hz >= band_lo_hz && band_hi_hz <= fs / 2.0, "band must lie within [0, fs/2]");
  need(is_power_of_two(stft_frame) && stft_frame <= in_time && stft_hop > 0,
       "stft_frame must be a power of two no longer than in_time, stft_hop positive");
}

void to_json(json& j, const DcaeConfig& c) {
  j = json{{"in_channels", c.in_channels},
           {"in_time", c.in_time},
           {"latent_dim", c.latent_dim},
           {"widths", c.widths},
           {"kernels", c.kernels},
           {"dropout", c.dropout},
           {"activation", c.activation == Activation::ReLU ? "relu" : "tanh"},
           {"loss_mode", to_string(c.loss_mode)},
           {"ft_weight", c.ft_weight},
           {"stft_weight", c.stft_weight},
           {"band_hz", {c.band_lo_hz, c.band_hi_hz}},
           {"fs", c.fs},
           {"stft_frame", c.stft_frame},
           {"stft_hop", c.stft_hop}};
}

void from_json(const json& j, DcaeConfig& c) {
  require(j.is_object(), ErrorCode::ConfigInvalid, "model config must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "in_channels") c.in_channels = v.get<std::size_t>();
      else if (key == "in_time") c.in_time = v.get<std::size_t>();
      else if (key == "latent_dim") c.latent_dim = v.get<std::size_t>();
      else if (key == "widths") c.widths = v.get<std::array<std::size_t, 3>>();
      else if (key == "kernels") c.kernels = v.get<std::array<std::size_t, 3>>();
      else if (key == "dropout") c.dropout = v.get<double>();
      else if (key == "activation") {
        const auto s = v.get<std::string>();
        require(s == "relu" || s == "tanh", ErrorCode::ConfigInvalid, "activation must be relu or tanh");
        c.activation = s == "relu" ? Activation::ReLU : Activation::Tanh;
      } else if (key == "loss_mode") c.loss_mode = loss_mode_from_string(v.get<std::string>());
      else if (key == "ft_weight") c.ft_weight = v.get<double>();
      else if (key == "stft_weight") c.stft_weight = v.get<double>();
      else if (key == "band_hz") {
        const auto b = v.get<std::array<double, 2>>();
        c.band_lo_hz = b[0];
        c.band_hi_hz = b[1];
      } else if (key == "fs") c.fs = v.get<double>();
      else if (key == "stft_frame") c.stft_frame = v.get<std::size_t>();
      else if (key == "stft_hop") c.stft_hop = v.get<std::size_t>();
      else fail(ErrorCode::ConfigInvalid, "unknown model key '" + key + "'");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigInvalid, std::string("model config: ") + e.what());
  }
}

double weighted_total(const LossBreakdown& b, LossMode mode, double ft_weight, double stft_weight) {
  switch (mode) {
    case LossMode::TS: return b.l_ts;
    case LossMode::TS_FT: return ft_weight * b.l_ft + b.l_ts;
    case LossMode::TS_STFT: return stft_weight * b.l_stft + b.l_ts;
  }
  return b.l_ts;
}

SignalMatrix WindowSet::matrix(std::size_t i) const {
  SignalMatrix m(channels, time);
  const auto w = window(i);
  m.data.assign(w.begin(), w.end());
  return m;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
void check_pair(const ad::Tensor<T>& x, const ad::Tensor<T>& xhat) {
  require(x.shape() == xhat.shape(), ErrorCode::ShapeMismatch,
          "original " + ad::shape_str(x.shape()) + " vs reconstruction " + ad::shape_str(xhat.shape()));
  require(x.rank() == 3, ErrorCode::ShapeMismatch, "losses expect [N, C, T], got " + ad::shape_str(x.shape()));
}

// Linear-interpolation 99th percentile of each leading slice, floored at eps.
template <typename T>
std::vector<double> p99_per_row(const ad::Tensor<T>& mags) {
  const std::size_t n = mags.dim(0), per = mags.numel() / n;
  std::vector<double> out(n), buf(per);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(mags.value().data() + r * per, per, buf.begin());
    out[r] = std::max(quantile_linear(buf, 0.99), kNormEpsilon);
  }
  return out;
}

}  // namespace

template <typename T>
ad::Tensor<T> loss_ts(const ad::Tensor<T>& x, const ad::Tensor<T>& xhat) {
  check_pair(x, xhat);
  return ad::l1_loss(x, xhat);
}

template <typename T>
ad::Tensor<T> loss_ft(const ad::Tensor<T>& x, const ad::Tensor<T>& xhat, const BandMask& band) {
  check_pair(x, xhat);
  auto ref = ad::slice_last(ad::rfft_magnitude(x), band.lo_bin, band.hi_bin);
  auto rec = ad::slice_last(ad::rfft_magnitude(xhat), band.lo_bin, band.hi_bin);
  const auto s = p99_per_row(ref);
  return ad::l1_loss(ad::divide_rows(ref, s), ad::divide_rows(rec, s));
}

template <typename T>
ad::Tensor<T> loss_stft(const ad::Tensor<T>& x, const ad::Tensor<T>& xhat, std::size_t frame, std::size_t hop) {
  check_pair(x, xhat);
  auto ref = ad::stft_magnitude(x, frame, hop);
  auto rec = ad::stft_magnitude(xhat, frame, hop);
  const auto s = p99_per_row(ref);
  return ad::l1_loss(ad::divide_rows(ref, s), ad::divide_rows(rec, s));
}

template <typename T>
CombinedLoss<T> combined_loss(const ad::Tensor<T>& x, const ad::Tensor<T>& xhat, const DcaeConfig& cfg) {
  const LossMode mode = cfg.loss_mode;
  CombinedLoss<T> out;
  auto ts = loss_ts(x, xhat);
  ad::Tensor<T> ft, stft;
  {
    std::optional<ad::NoGradGuard> off;
    if (mode != LossMode::TS_FT) off.emplace();
    ft = loss_ft(x, xhat, cfg.band());
  }
  {
    std::optional<ad::NoGradGuard> off;
    if (mode != LossMode::TS_STFT) off.emplace();
    stft = loss_stft(x, xhat, cfg.stft_frame, cfg.stft_hop);
  }
  switch (mode) {
    case LossMode::TS: out.objective = ts; break;
    case LossMode::TS_FT: out.objective = ad::add(ad::scale(ft, cfg.ft_weight), ts); break;
    case LossMode::TS_STFT: out.objective = ad::add(ad::scale(stft, cfg.stft_weight), ts); break;
  }
  auto& b = out.breakdown;
  b.l_ts = ts.item();
  b.l_ft = ft.item();
  b.l_stft = stft.item();
  b.n = x.numel();
  b.total = weighted_total(b, mode, cfg.ft_weight, cfg.stft_weight);
  b.objective = out.objective.item();
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
DcaeModel<T>::DcaeModel(const DcaeConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const auto& w = cfg_.widths;
  const auto& k = cfg_.kernels;
  enc1_ = nn::Conv1d<T>(cfg_.in_channels, w[0], k[0], rng);
  bn1_ = nn::BatchNorm1d<T>(w[0]);
  enc2_ = nn::Conv1d<T>(w[0], w[1], k[1], rng);
  bn2_ = nn::BatchNorm1d<T>(w[1]);
  enc3_ = nn::Conv1d<T>(w[1], w[2], k[2], rng);
  bn3_ = nn::BatchNorm1d<T>(w[2]);
  to_latent_ = nn::Dense<T>(cfg_.flat_features(), cfg_.latent_dim, rng);
  from_latent_ = nn::Dense<T>(cfg_.latent_dim, cfg_.flat_features(), rng);
  dec1_ = nn::Conv1d<T>(w[2], w[1], k[2], rng);
  dbn1_ = nn::BatchNorm1d<T>(w[1]);
  dec2_ = nn::Conv1d<T>(w[1], w[0], k[1], rng);
  dbn2_ = nn::BatchNorm1d<T>(w[0]);
  out_ = nn::Conv1d<T>(w[0], cfg_.in_channels, k[0], rng);
}

template <typename T>
ad::Tensor<T> DcaeModel<T>::act(const ad::Tensor<T>& x) const {
  return cfg_.activation == Activation::ReLU ? ad::relu(x) : ad::tanh(x);
}

template <typename T>
typename DcaeModel<T>::Output DcaeModel<T>::forward(const ad::Tensor<T>& x, bool train, std::uint64_t dropout_seed) {
  require(x.rank() == 3 && x.dim(1) == cfg_.in_channels && x.dim(2) == cfg_.in_time, ErrorCode::ShapeMismatch,
          "model expects [N, " + std::to_string(cfg_.in_channels) + ", " + std::to_string(cfg_.in_time) + "], got " +
              ad::shape_str(x.shape()));
  const std::size_t n = x.dim(0);
  auto drop = [&](const ad::Tensor<T>& h, std::uint64_t layer) {
    if (!train || cfg_.dropout == 0.0) return h;
    return ad::dropout(h, cfg_.dropout, nn::mix_seed(dropout_seed, layer));
  };

  auto h = drop(act(bn1_.forward(enc1_.forward(x), train)), 1);
  h = ad::maxpool2(act(bn2_.forward(enc2_.forward(h), train)));
  h = ad::maxpool2(act(bn3_.forward(enc3_.forward(h), train)));
  Output o;
  o.latent = to_latent_.forward(ad::reshape(h, {n, cfg_.flat_features()}));

  auto d = ad::reshape(from_latent_.forward(o.latent), {n, cfg_.widths[2], cfg_.bottleneck_time()});
  d = drop(act(dbn1_.forward(dec1_.forward(ad::upsample2(d)), train)), 2);
  d = drop(act(dbn2_.forward(dec2_.forward(ad::upsample2(d)), train)), 3);
  o.recon = out_.forward(d);
  return o;
}

template <typename T>
std::vector<T> DcaeModel<T>::reconstruct(std::span<const T> in, std::size_t n) {
  require(in.size() == n * cfg_.in_channels * cfg_.in_time, ErrorCode::ShapeMismatch,
          "reconstruct: buffer does not hold " + std::to_string(n) + " windows");
  ad::NoGradGuard off;
  auto x = ad::Tensor<T>::from({n, cfg_.in_channels, cfg_.in_time}, std::vector<T>(in.begin(), in.end()));
  return forward(x, false).recon.values();
}

template <typename T>
std::vector<nn::Parameter<T>> DcaeModel<T>::parameters() const {
  std::vector<nn::Parameter<T>> p;
  enc1_.collect("enc1", p);
  bn1_.collect("bn1", p);
  enc2_.collect("enc2", p);
  bn2_.collect("bn2", p);
  enc3_.collect("enc3", p);
  bn3_.collect("bn3", p);
  to_latent_.collect("to_latent", p);
  from_latent_.collect("from_latent", p);
  dec1_.collect("dec1", p);
  dbn1_.collect("dbn1", p);
  dec2_.collect("dec2", p);
  dbn2_.collect("dbn2", p);
  out_.collect("out", p);
  return p;
}

template <typename T>
std::vector<nn::BatchNorm1d<T>*> DcaeModel<T>::batch_norms() {
  return {&bn1_, &bn2_, &bn3_, &dbn1_, &dbn2_};
}

std::vector<float> ModelReconstructor::reconstruct(std::span<const float> in, std::size_t n) {
  const std::size_t per = channels() * time();
  std::vector<float> out;
  out.reserve(in.size());
  for (std::size_t i = 0; i < n; i += batch_) {
    const std::size_t m = std::min(batch_, n - i);
    auto r = model_->reconstruct(in.subspan(i * per, m * per), m);
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

// ---------------------------------------------------------------------------

TrainState make_train_state(const DcaeConfig& cfg, std::uint64_t seed, double lr) {
  TrainState s;
  s.model = std::make_shared<DcaeModel<float>>(cfg, seed);
  s.optimizer = nn::Adam<float>(s.model->parameters(), nn::AdamOptions{lr});
  s.seed = seed;
  return s;
}

const char* train_log_header() { return "epoch,l_ts,l_ft,l_stft,total,wall_seconds"; }

std::string train_log_row(const EpochLog& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.3f", e.epoch, e.mean.l_ts, e.mean.l_ft, e.mean.l_stft,
                e.mean.total, e.wall_seconds);
  return buf;
}

std::vector<EpochLog> train(TrainState& state, const WindowSet& data, const TrainOptions& opts) {
  auto& model = *state.model;
  const auto& cfg = model.config();
  require(data.channels == cfg.in_channels && data.time == cfg.in_time, ErrorCode::ShapeMismatch,
          "dataset windows are " + std::to_string(data.channels) + "x" + std::to_string(data.time) +
              ", model expects " + std::to_string(cfg.in_channels) + "x" + std::to_string(cfg.in_time));
  require(opts.batch > 0 && data.size() >= opts.batch, ErrorCode::EmptyDataset,
          std::to_string(data.size()) + " windows do not fill one batch of " + std::to_string(opts.batch));
  const bool can_flip = cfg.in_channels == flip_permutation().size();
  require(opts.flip_probability == 0.0 || can_flip, ErrorCode::ConfigInvalid,
          "electrode flipping needs the full montage");

  const std::size_t steps = data.size() / opts.batch;
  const std::size_t per = cfg.in_channels * cfg.in_time;

  if (opts.log_csv && (state.epochs_done == 0 || !std::filesystem::exists(*opts.log_csv))) {
    std::ofstream f(*opts.log_csv, std::ios::trunc);
    require(bool(f), ErrorCode::Io, "cannot write " + opts.log_csv->string());
    f << train_log_header() << '\n';
  }

  std::vector<EpochLog> logs;
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = state.epochs_done + 1; epoch <= opts.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(nn::mix_seed(state.seed, epoch, 0x5eed));
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(nn::uniform01(rng) * static_cast<double>(i + 1));
      std::swap(order[i], order[j]);
    }

    EpochLog log;
    log.epoch = epoch;
    std::vector<float> buf(opts.batch * per);
    for (std::size_t step = 0; step < steps; ++step) {
      for (std::size_t b = 0; b < opts.batch; ++b) {
        const auto w = data.window(order[step * opts.batch + b]);
        std::span<float> dst(buf.data() + b * per, per);
        std::copy(w.begin(), w.end(), dst.begin());
        if (can_flip && nn::uniform01(rng) < opts.flip_probability) flip_electrodes_inplace(dst, cfg.in_time);
      }
      auto x = ad::Tensor<float>::from({opts.batch, cfg.in_channels, cfg.in_time}, buf);
      state.optimizer.zero_grad();
      auto out = model.forward(x, true, nn::mix_seed(state.seed, epoch, step + 1));
      auto loss = combined_loss(x, out.recon, cfg);
      require(std::isfinite(loss.breakdown.total) && std::isfinite(loss.breakdown.l_ft) &&
                  std::isfinite(loss.breakdown.l_stft),
              ErrorCode::NonFiniteLoss,
              "epoch " + std::to_string(epoch) + " batch " + std::to_string(step) + ": non-finite loss");
      loss.objective.backward();
      state.optimizer.step();
      log.batches.push_back(loss.breakdown);
    }

    for (const auto& b : log.batches) {
      log.mean.l_ts += b.l_ts;
      log.mean.l_ft += b.l_ft;
      log.mean.l_stft += b.l_stft;
      log.mean.n += b.n;
    }
    const double k = static_cast<double>(steps);
    log.mean.l_ts /= k;
    log.mean.l_ft /= k;
    log.mean.l_stft /= k;
    log.mean.total = weighted_total(log.mean, cfg.loss_mode, cfg.ft_weight, cfg.stft_weight);
    log.steps = steps;
    log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    state.epochs_done = epoch;

    if (opts.checkpoint_path) save_checkpoint(*opts.checkpoint_path, state);
    if (opts.log_csv) {
      std::ofstream f(*opts.log_csv, std::ios::app);
      f << train_log_row(log) << '\n';
    }
    log::info("epoch " + std::to_string(epoch) + " total " + std::to_string(log.mean.total));
    if (opts.on_epoch) opts.on_epoch(log);
    logs.push_back(std::move(log));
  }
  return logs;
}

// ---------------------------------------------------------------------------

Metrics evaluate(Reconstructor& model, const WindowSet& data, std::size_t batch) {
  require(data.size() > 0, ErrorCode::EmptyDataset, "no windows to evaluate");
  require(data.channels == model.channels() && data.time == model.time(), ErrorCode::ShapeMismatch,
          "dataset windows do not match the model input");
  require(is_power_of_two(data.time), ErrorCode::ShapeMismatch, "window length must be a power of two");
  const std::size_t n = data.size(), C = data.channels, T = data.time, per = C * T;
  const kernels::SpectrumShape ss{C, T};
  std::vector<double> time_sums(n), freq_sums(n);

  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t m = std::min(batch, n - start);
    const auto in = std::span<const float>(data.data).subspan(start * per, m * per);
    const auto out = model.reconstruct(in, m);
    const auto M = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < M; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      std::vector<double> x(in.begin() + i * per, in.begin() + (i + 1) * per);
      std::vector<double> y(out.begin() + i * per, out.begin() + (i + 1) * per);
      double st = 0.0;
      for (std::size_t j = 0; j < per; ++j) st += std::abs(x[j] - y[j]);
      std::vector<double> mx(C * ss.bins()), my(C * ss.bins());
      kernels::serial::rfft_magnitude<double>(ss, x.data(), mx.data(), nullptr);
      kernels::serial::rfft_magnitude<double>(ss, y.data(), my.data(), nullptr);
      const double s = std::max(quantile_linear(mx, 0.99), kNormEpsilon);
      double sf = 0.0;
      for (std::size_t j = 0; j < mx.size(); ++j) sf += std::abs(mx[j] - my[j]) / s;
      time_sums[start + i] = st;
      freq_sums[start + i] = sf;
    }
  }
  // Summing in sorted order makes the result independent of dataset order.
  std::sort(time_sums.begin(), time_sums.end());
  std::sort(freq_sums.begin(), freq_sums.end());
  Metrics r;
  r.windows = n;
  r.mae_time = std::accumulate(time_sums.begin(), time_sums.end(), 0.0) / static_cast<double>(n * per);
  r.mae_frequency =
      std::accumulate(freq_sums.begin(), freq_sums.end(), 0.0) / static_cast<double>(n * C * ss.bins());
  return r;
}

Reconstruction reconstruct(Reconstructor& model, const SignalMatrix& window, double fs) {
  require(window.rows == model.channels() && window.cols == model.time(), ErrorCode::ShapeMismatch,
          "window is " + std::to_string(window.rows) + "x" + std::to_string(window.cols) + ", model expects " +
              std::to_string(model.channels()) + "x" + std::to_string(model.time()));
  std::vector<float> in(window.data.begin(), window.data.end());
  const auto out = model.reconstruct(in, 1);
  Reconstruction r;
  // The original as the model saw it (float precision), so the pair is comparable.
  r.original = SignalMatrix(window.rows, window.cols);
  r.original.data.assign(in.begin(), in.end());
  r.reconstruction = SignalMatrix(window.rows, window.cols);
  r.reconstruction.data.assign(out.begin(), out.end());
  r.original_spectrum = rfft_magnitude(r.original, fs);
  r.reconstruction_spectrum = rfft_magnitude(r.reconstruction, fs);
  return r;
}

#define DCAE_INSTANTIATE(T)                                                                             \
  template ad::Tensor<T> loss_ts(const ad::Tensor<T>&, const ad::Tensor<T>&);                          \
  template ad::Tensor<T> loss_ft(const ad::Tensor<T>&, const ad::Tensor<T>&, const BandMask&);          \
  template ad::Tensor<T> loss_stft(const ad::Tensor<T>&, const ad::Tensor<T>&, std::size_t, std::size_t); \
  template CombinedLoss<T> combined_loss(const ad::Tensor<T>&, const ad::Tensor<T>&, const DcaeConfig&); \
  template class DcaeModel<T>;

DCAE_INSTANTIATE(float)
DCAE_INSTANTIATE(double)

}  // namespace dcae
