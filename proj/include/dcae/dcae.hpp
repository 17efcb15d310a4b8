#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dcae/matrix.hpp"
#include "dcae/nn.hpp"
#include "dcae/spectral.hpp"
#include "json.hpp"

namespace dcae {

enum class LossMode { TS, TS_FT, TS_STFT };
enum class Activation { ReLU, Tanh };

const char* to_string(LossMode m);
LossMode loss_mode_from_string(const std::string& s);
// Table-style model name: DCAE_ts, DCAE_ts-ft, DCAE_ts-stft.
std::string model_name(LossMode m);

struct DcaeConfig {
  std::size_t in_channels = 23;
  std::size_t in_time = 512;
  std::size_t latent_dim = 500;
  std::array<std::size_t, 3> widths{32, 64, 128};
  std::array<std::size_t, 3> kernels{7, 5, 3};
  double dropout = 0.2;
  Activation activation = Activation::ReLU;
  LossMode loss_mode = LossMode::TS;
  double ft_weight = 20.0;
  double stft_weight = 20.0;
  double band_lo_hz = 8.0;
  double band_hi_hz = 30.0;
  double fs = 256.0;
  std::size_t stft_frame = kStftFrame;
  std::size_t stft_hop = kStftHop;

  // Throws ConfigInvalid.
  void validate() const;
  std::size_t bottleneck_time() const { return in_time / 4; }
  std::size_t flat_features() const { return widths[2] * bottleneck_time(); }
  BandMask band() const;
};

void to_json(nlohmann::json& j, const DcaeConfig& c);
// Missing keys keep their defaults; unknown keys raise ConfigInvalid.
void from_json(const nlohmann::json& j, DcaeConfig& c);

struct LossBreakdown {
  double l_ts = 0.0;
  double l_ft = 0.0;
  double l_stft = 0.0;
  double total = 0.0;
  // value of the graph that was backpropagated, at working precision
  double objective = 0.0;
  std::size_t n = 0;  // elements in the time-domain MAE
};

// total from the components under the weighting of `mode`.
double weighted_total(const LossBreakdown& b, LossMode mode, double ft_weight = 20.0, double stft_weight = 20.0);

// A batch of windows, [N, C, T] row-major.
struct WindowSet {
  std::size_t channels = 0;
  std::size_t time = 0;
  std::vector<float> data;

  std::size_t size() const { return channels && time ? data.size() / (channels * time) : 0; }
  std::span<const float> window(std::size_t i) const { return {data.data() + i * channels * time, channels * time}; }
  SignalMatrix matrix(std::size_t i) const;
};

// Losses on [N, C, T] tensors. The percentile divisor of each window comes from
// the original x and is treated as a constant.
template <typename T>
ad::Tensor<T> loss_ts(const ad::Tensor<T>& x, const ad::Tensor<T>& xhat);
template <typename T>
ad::Tensor<T> loss_ft(const ad::Tensor<T>& x, const ad::Tensor<T>& xhat, const BandMask& band);
template <typename T>
ad::Tensor<T> loss_stft(const ad::Tensor<T>& x, const ad::Tensor<T>& xhat, std::size_t frame = kStftFrame,
                        std::size_t hop = kStftHop);

template <typename T>
struct CombinedLoss {
  ad::Tensor<T> objective;  // differentiable weighted total
  LossBreakdown breakdown;  // every component, in double
};

// Components outside the active mode are still evaluated (without a graph) for logging.
template <typename T>
CombinedLoss<T> combined_loss(const ad::Tensor<T>& x, const ad::Tensor<T>& xhat, const DcaeConfig& cfg);

// Anything that maps windows to reconstructions.
class Reconstructor {
 public:
  virtual ~Reconstructor() = default;
  // in: n windows [n, C, T]; returns the same shape.
  virtual std::vector<float> reconstruct(std::span<const float> in, std::size_t n) = 0;
  virtual std::size_t channels() const = 0;
  virtual std::size_t time() const = 0;
};

class IdentityModel final : public Reconstructor {
 public:
  IdentityModel(std::size_t channels, std::size_t time) : c_(channels), t_(time) {}
  std::vector<float> reconstruct(std::span<const float> in, std::size_t) override {
    return {in.begin(), in.end()};
  }
  std::size_t channels() const override { return c_; }
  std::size_t time() const override { return t_; }

 private:
  std::size_t c_, t_;
};

template <typename T>
class DcaeModel {
 public:
  DcaeModel(const DcaeConfig& cfg, std::uint64_t seed);

  struct Output {
    ad::Tensor<T> latent;  // [N, d]
    ad::Tensor<T> recon;   // [N, C, T]
  };

  // `train` selects batch statistics and dropout; dropout masks derive from dropout_seed.
  Output forward(const ad::Tensor<T>& x, bool train, std::uint64_t dropout_seed = 0);

  // Eval-mode, graph-free reconstruction.
  std::vector<T> reconstruct(std::span<const T> in, std::size_t n);

  const DcaeConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  // Fixed order; checkpoints and the optimizer rely on it.
  std::vector<nn::Parameter<T>> parameters() const;
  std::vector<nn::BatchNorm1d<T>*> batch_norms();

 private:
  ad::Tensor<T> act(const ad::Tensor<T>& x) const;

  DcaeConfig cfg_;
  std::uint64_t seed_;
  nn::Conv1d<T> enc1_, enc2_, enc3_;
  nn::BatchNorm1d<T> bn1_, bn2_, bn3_;
  nn::Dense<T> to_latent_, from_latent_;
  nn::Conv1d<T> dec1_, dec2_, out_;
  nn::BatchNorm1d<T> dbn1_, dbn2_;
};

class ModelReconstructor final : public Reconstructor {
 public:
  explicit ModelReconstructor(std::shared_ptr<DcaeModel<float>> m, std::size_t batch = 256)
      : model_(std::move(m)), batch_(batch) {}
  std::vector<float> reconstruct(std::span<const float> in, std::size_t n) override;
  std::size_t channels() const override { return model_->config().in_channels; }
  std::size_t time() const override { return model_->config().in_time; }
  DcaeModel<float>& model() { return *model_; }

 private:
  std::shared_ptr<DcaeModel<float>> model_;
  std::size_t batch_;
};

// ---------------------------------------------------------------------------
// Training

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown mean;
  double wall_seconds = 0.0;
  std::size_t steps = 0;
  std::vector<LossBreakdown> batches;
};

struct TrainOptions {
  std::size_t epochs = 50;
  std::size_t batch = 256;
  double lr = 0.001;
  std::uint64_t seed = 0;
  double flip_probability = 0.5;
  // Written after every epoch when set.
  std::optional<std::filesystem::path> checkpoint_path;
  std::optional<std::filesystem::path> log_csv;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainState {
  std::shared_ptr<DcaeModel<float>> model;
  nn::Adam<float> optimizer;
  std::size_t epochs_done = 0;
  std::uint64_t seed = 0;
};

TrainState make_train_state(const DcaeConfig& cfg, std::uint64_t seed, double lr = 0.001);

// Continues from state.epochs_done + 1 up to opts.epochs. Each epoch shuffles
// with an RNG derived from (seed, epoch), so a resumed run replays an unbroken
// one exactly. Throws NonFiniteLoss naming the batch.
std::vector<EpochLog> train(TrainState& state, const WindowSet& data, const TrainOptions& opts);

const char* train_log_header();
std::string train_log_row(const EpochLog& e);

// ---------------------------------------------------------------------------
// Evaluation

struct Metrics {
  double mae_time = 0.0;
  double mae_frequency = 0.0;
  std::size_t windows = 0;
};

// mae_time over all elements; mae_frequency over all one-sided bins after
// dividing both spectra by the original's 99th percentile, per window.
// Throws EmptyDataset.
Metrics evaluate(Reconstructor& model, const WindowSet& data, std::size_t batch = 256);

struct Reconstruction {
  SignalMatrix original;
  SignalMatrix reconstruction;
  Spectrum original_spectrum;  // unnormalised magnitudes
  Spectrum reconstruction_spectrum;
};

Reconstruction reconstruct(Reconstructor& model, const SignalMatrix& window, double fs = 256.0);

// ---------------------------------------------------------------------------
// Checkpoints: "DCKP" | u16 version | u64 header bytes | JSON header |
// per parameter: u64 count + float32[count] | per batch norm: u64 C + f64 mean[C]
// + f64 var[C] | u8 has_optimizer [| u64 t | per parameter m, v as float32].

void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);
// Writes a checkpoint that loads as an IdentityModel.
void save_identity_checkpoint(const std::filesystem::path& path, std::size_t channels, std::size_t time);
// Real model or identity stub, whichever the file holds.
std::unique_ptr<Reconstructor> load_reconstructor(const std::filesystem::path& path);

}  // namespace dcae
