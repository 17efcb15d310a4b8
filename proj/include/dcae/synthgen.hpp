#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dcae/signal_io.hpp"
#include "json.hpp"

namespace dcae {

// Sinusoid with frequency drawn per channel from [lo_hz, hi_hz]. With
// burst_fraction < 1 it is gated by smooth bursts covering that share of time.
struct Oscillation {
  double lo_hz = 10.0;
  double hi_hz = 10.0;
  double amplitude_uv = 50.0;
  double burst_fraction = 1.0;
};

struct SynthSpec {
  std::size_t n_files = 10;
  double duration_s = 60.0;
  // Sampling rate -> probability weight.
  std::map<double, double> rate_mix{{256.0, 0.7}, {250.0, 0.2}, {512.0, 0.1}};
  double pink_uv = 20.0;
  std::vector<Oscillation> oscillations{{8.0, 13.0, 30.0, 0.6}, {13.0, 30.0, 12.0, 0.5}};
  double spike_rate_per_min = 6.0;
  double spike_amplitude_uv = 120.0;
  double lr_correlation = 0.6;
  double sensor_noise_uv = 2.0;
  double clamp_uv = 2000.0;
  // Non-EEG channels added to each file; the cleaner must drop them.
  bool aux_channels = true;
  std::uint64_t seed = 1;

  // Throws ConfigInvalid.
  void validate() const;
};

void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

struct ManifestEntry {
  std::string file;
  double fs = 0.0;
  std::uint64_t seed = 0;
  double duration_s = 0.0;
  std::size_t spikes = 0;
};

struct Manifest {
  SynthSpec spec;
  std::vector<ManifestEntry> files;
};

// One synthetic recording, fully determined by (spec.seed, index).
Recording synth_recording(const SynthSpec& spec, std::size_t index, ManifestEntry* entry = nullptr);

// Writes synth_0000.edf ... plus manifest.csv into out_dir. Throws Io.
Manifest generate_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace dcae
