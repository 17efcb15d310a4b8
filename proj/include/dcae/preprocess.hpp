#pragma once

#include <array>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "dcae/matrix.hpp"
#include "dcae/signal_io.hpp"

namespace dcae {

inline constexpr std::size_t kMontageChannels = 23;

// Row order of every montaged matrix, window and tensor downstream.
inline const std::array<std::string, kMontageChannels>& montage_labels() {
  static const std::array<std::string, kMontageChannels> labels = {
      "FP1", "FP2", "F3", "F4", "C3", "C4", "P3", "P4", "O1", "O2", "F7", "F8",
      "T7",  "T8",  "P7", "P8", "Fz", "Cz", "Pz", "A1", "A2", "T1", "T2"};
  return labels;
}

enum class Reference { Average };

struct MontageSpec {
  std::vector<std::string> required_labels{montage_labels().begin(), montage_labels().end()};
  Reference reference = Reference::Average;

  static MontageSpec standard() { return {}; }
  void validate() const;
  std::optional<std::size_t> index_of(const std::string& label) const;
};

// Maps a raw EDF label ("EEG T3-REF", "eeg fz-le") to its canonical 10-20
// spelling ("T7", "Fz"), or nullopt when it is not a recognised scalp site.
std::optional<std::string> normalize_label(const std::string& raw);

// Keeps scalp 10-20 channels under their canonical names; drops SP1/SP2,
// auxiliary physiological signals and unrecognised labels. Duplicate
// canonical names keep the first occurrence.
Recording clean_channels(const Recording& rec);

// Natural cubic spline through (i/fs, x_i) evaluated at j/target_fs for
// j in [0, floor(duration * target_fs)).
ChannelSignal resample_cubic(const ChannelSignal& sig, double target_fs);

struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;  // a0 normalised to 1

  std::complex<double> response(double freq_hz, double fs) const;
  // Roots of z^2 + a1 z + a2.
  std::array<std::complex<double>, 2> poles() const;
};

struct BiquadCascade {
  std::vector<Biquad> sections;
  double gain = 1.0;

  std::complex<double> response(double freq_hz, double fs) const;
  double magnitude_db(double freq_hz, double fs) const;
  double max_pole_radius() const;
};

// First-order Butterworth high-pass at `highpass_hz` cascaded with a
// fourth-order Butterworth low-pass at `lowpass_hz`, both bilinear with
// frequency pre-warping.
BiquadCascade design_bandpass(double fs, double highpass_hz = 0.5, double lowpass_hz = 70.0);

// Second-order notch whose -3 dB points sit at f0 +/- bandwidth/2.
BiquadCascade design_notch(double fs, double f0 = 60.0, double bandwidth = 2.0);

// Causal direct-form II transposed, zero initial state.
std::vector<double> apply_filter(const BiquadCascade& cascade, std::span<const double> x);
ChannelSignal apply_filter(const BiquadCascade& cascade, const ChannelSignal& sig);

// Rows in MontageSpec order, each sample re-referenced to the channel mean.
// Throws MissingChannels naming every absent label.
SignalMatrix average_montage(const Recording& rec, const MontageSpec& spec);

struct PipelineOptions {
  double target_fs = 256.0;
  double highpass_hz = 0.5;
  double lowpass_hz = 70.0;
  double notch_hz = 60.0;
  double notch_bandwidth_hz = 2.0;
};

// clean -> resample -> bandpass -> notch -> montage. When `referential` is
// given it receives the filtered rows before re-referencing (same shape).
SignalMatrix preprocess_recording(const Recording& rec, const PipelineOptions& opts = {},
                                  const MontageSpec& spec = MontageSpec::standard(),
                                  SignalMatrix* referential = nullptr);

}  // namespace dcae
