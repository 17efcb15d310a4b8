#include "dcae/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <exception>
#include <fstream>
#include <numbers>
#include <random>

#include "dcae/error.hpp"
#include "dcae/fft.hpp"
#include "dcae/nn.hpp"
#include "dcae/preprocess.hpp"
#include "dcae/windowing.hpp"

namespace dcae {

using nlohmann::json;

void SynthSpec::validate() const {
  auto need = [](bool ok, const std::string& msg) { require(ok, ErrorCode::ConfigInvalid, "synth: " + msg); };
  need(n_files > 0, "n_files must be positive");
  need(duration_s >= 1.0 && std::isfinite(duration_s), "duration_s must be at least 1");
  need(!rate_mix.empty(), "rate_mix is empty");
  for (const auto& [fs, w] : rate_mix) need(fs > 0.0 && w > 0.0, "rate_mix needs positive rates and weights");
  need(pink_uv >= 0.0 && sensor_noise_uv >= 0.0 && spike_amplitude_uv >= 0.0 && spike_rate_per_min >= 0.0,
       "amplitudes and rates must be nonnegative");
  for (const auto& o : oscillations) {
    need(o.amplitude_uv > 0.0, "oscillation amplitude must be positive");
    need(o.lo_hz > 0.0 && o.hi_hz >= o.lo_hz, "oscillation band must satisfy 0 < lo <= hi");
    need(o.burst_fraction > 0.0 && o.burst_fraction <= 1.0, "burst_fraction must lie in (0, 1]");
  }
  need(lr_correlation >= 0.0 && lr_correlation <= 1.0, "lr_correlation must lie in [0, 1]");
  need(clamp_uv > 0.0, "clamp_uv must be positive");
}

void to_json(json& j, const SynthSpec& s) {
  json mix = json::object();
  for (const auto& [fs, w] : s.rate_mix) mix[json(fs).dump()] = w;
  json osc = json::array();
  for (const auto& o : s.oscillations)
    osc.push_back({{"lo_hz", o.lo_hz}, {"hi_hz", o.hi_hz}, {"amplitude_uv", o.amplitude_uv},
                   {"burst_fraction", o.burst_fraction}});
  j = json{{"n_files", s.n_files},
           {"duration_s", s.duration_s},
           {"rate_mix", mix},
           {"pink_uv", s.pink_uv},
           {"oscillations", osc},
           {"spike_rate_per_min", s.spike_rate_per_min},
           {"spike_amplitude_uv", s.spike_amplitude_uv},
           {"lr_correlation", s.lr_correlation},
           {"sensor_noise_uv", s.sensor_noise_uv},
           {"clamp_uv", s.clamp_uv},
           {"aux_channels", s.aux_channels},
           {"seed", s.seed}};
}

void from_json(const json& j, SynthSpec& s) {
  require(j.is_object(), ErrorCode::ConfigInvalid, "synth config must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "n_files") s.n_files = v.get<std::size_t>();
      else if (key == "duration_s") s.duration_s = v.get<double>();
      else if (key == "rate_mix") {
        s.rate_mix.clear();
        for (const auto& [fs, w] : v.items()) s.rate_mix[std::stod(fs)] = w.get<double>();
      } else if (key == "pink_uv") s.pink_uv = v.get<double>();
      else if (key == "oscillations") {
        s.oscillations.clear();
        for (const auto& o : v) {
          Oscillation osc;
          for (const auto& [k, x] : o.items()) {
            if (k == "lo_hz") osc.lo_hz = x.get<double>();
            else if (k == "hi_hz") osc.hi_hz = x.get<double>();
            else if (k == "amplitude_uv") osc.amplitude_uv = x.get<double>();
            else if (k == "burst_fraction") osc.burst_fraction = x.get<double>();
            else fail(ErrorCode::ConfigInvalid, "unknown oscillation key '" + k + "'");
          }
          s.oscillations.push_back(osc);
        }
      } else if (key == "spike_rate_per_min") s.spike_rate_per_min = v.get<double>();
      else if (key == "spike_amplitude_uv") s.spike_amplitude_uv = v.get<double>();
      else if (key == "lr_correlation") s.lr_correlation = v.get<double>();
      else if (key == "sensor_noise_uv") s.sensor_noise_uv = v.get<double>();
      else if (key == "clamp_uv") s.clamp_uv = v.get<double>();
      else if (key == "aux_channels") s.aux_channels = v.get<bool>();
      else if (key == "seed") s.seed = v.get<std::uint64_t>();
      else fail(ErrorCode::ConfigInvalid, "unknown synth key '" + key + "'");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigInvalid, std::string("synth config: ") + e.what());
  } catch (const std::invalid_argument&) {
    fail(ErrorCode::ConfigInvalid, "synth config: rate_mix keys must be numbers");
  }
}

namespace {

using nn::uniform01;

double gaussian(std::mt19937_64& rng) {
  // Box-Muller; avoids implementation-defined std::normal_distribution.
  const double u1 = 1.0 - uniform01(rng), u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Old-style 10-20 names as found in clinical exports.
std::string file_label(const std::string& montage) {
  static const std::map<std::string, std::string> legacy = {{"T7", "T3"}, {"T8", "T4"}, {"P7", "T5"}, {"P8", "T6"}};
  auto it = legacy.find(montage);
  std::string name = it == legacy.end() ? montage : it->second;
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::toupper(c); });
  return "EEG " + name + "-REF";
}

// 1/sqrt(f) amplitude spectrum with random phases, unit standard deviation.
std::vector<double> pink_noise(std::size_t n, std::mt19937_64& rng) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  std::vector<std::complex<double>> X(m);
  for (std::size_t k = 1; k <= m / 2; ++k) {
    const double phase = 2.0 * std::numbers::pi * uniform01(rng);
    const double amp = 1.0 / std::sqrt(static_cast<double>(k));
    X[k] = k == m / 2 ? std::complex<double>(amp * std::cos(phase), 0.0) : std::polar(amp, phase);
    if (k != m / 2) X[m - k] = std::conj(X[k]);
  }
  // Inverse transform through the forward one: x = conj(F(conj(X))) / m.
  for (auto& v : X) v = std::conj(v);
  fft_plan(m).forward(X);
  std::vector<double> x(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += x[i] = X[i].real();
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (auto& v : x) {
    v -= mean;
    var += v * v;
  }
  const double sd = std::sqrt(var / static_cast<double>(n));
  if (sd > 0.0)
    for (auto& v : x) v /= sd;
  return x;
}

// On/off gate with exponential segment lengths (mean on-time 1 s) and
// raised-cosine edges, on for about `fraction` of the time.
std::vector<double> burst_gate(std::size_t n, double fs, double fraction, std::mt19937_64& rng) {
  std::vector<double> g(n, 1.0);
  if (fraction >= 1.0) return g;
  const double mean_on = 1.0 * fs, mean_off = mean_on * (1.0 - fraction) / fraction;
  std::vector<char> on(n);
  bool state = uniform01(rng) < fraction;
  for (std::size_t i = 0; i < n;) {
    const double mean = state ? mean_on : mean_off;
    const auto len = static_cast<std::size_t>(std::ceil(-std::log(1.0 - uniform01(rng)) * mean));
    for (std::size_t j = 0; j < len && i < n; ++j, ++i) on[i] = state;
    state = !state;
  }
  // Moving average over 0.1 s softens the edges.
  const auto half = static_cast<std::size_t>(std::max(1.0, 0.05 * fs));
  std::vector<double> c(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) c[i + 1] = c[i] + on[i];
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = i >= half ? i - half : 0, b = std::min(n, i + half + 1);
    const double avg = (c[b] - c[a]) / static_cast<double>(b - a);
    g[i] = 0.5 - 0.5 * std::cos(std::numbers::pi * avg);
  }
  return g;
}

}  // namespace

Recording synth_recording(const SynthSpec& spec, std::size_t index, ManifestEntry* entry) {
  spec.validate();
  const std::uint64_t file_seed = nn::mix_seed(spec.seed, index, 0x5717);
  std::mt19937_64 rng(file_seed);

  double wsum = 0.0;
  for (const auto& [fs, w] : spec.rate_mix) wsum += w;
  double pick = uniform01(rng) * wsum, fs = spec.rate_mix.rbegin()->first;
  for (const auto& [r, w] : spec.rate_mix) {
    if (pick < w) {
      fs = r;
      break;
    }
    pick -= w;
  }
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * fs));
  const double dt = 1.0 / fs;
  const auto& labels = montage_labels();
  const auto& perm = flip_permutation();
  const std::size_t C = labels.size();

  // Clean sources per channel: pink background plus gated oscillations.
  std::vector<std::vector<double>> gates;
  for (const auto& o : spec.oscillations) gates.push_back(burst_gate(n, fs, o.burst_fraction, rng));
  std::vector<std::vector<double>> src(C, std::vector<double>(n, 0.0));
  for (std::size_t c = 0; c < C; ++c) {
    if (spec.pink_uv > 0.0) {
      const auto p = pink_noise(n, rng);
      for (std::size_t i = 0; i < n; ++i) src[c][i] = spec.pink_uv * p[i];
    }
    for (std::size_t k = 0; k < spec.oscillations.size(); ++k) {
      const auto& o = spec.oscillations[k];
      const double f = o.lo_hz + (o.hi_hz - o.lo_hz) * uniform01(rng);
      const double phase = 2.0 * std::numbers::pi * uniform01(rng);
      const double w = 2.0 * std::numbers::pi * f * dt;
      for (std::size_t i = 0; i < n; ++i)
        src[c][i] += o.amplitude_uv * gates[k][i] * std::sin(w * static_cast<double>(i) + phase);
    }
  }
  // Right-hemisphere channels lean on their left homologue.
  const double rho = spec.lr_correlation, rest = std::sqrt(1.0 - rho * rho);
  for (std::size_t c = 0; c < C; ++c) {
    const std::size_t left = perm[c];
    if (left >= c) continue;
    for (std::size_t i = 0; i < n; ++i) src[c][i] = rho * src[left][i] + rest * src[c][i];
  }

  // Biphasic 70 ms transients on a random subset of channels.
  std::size_t spikes = 0;
  if (spec.spike_rate_per_min > 0.0 && spec.spike_amplitude_uv > 0.0) {
    const double rate = spec.spike_rate_per_min / 60.0;
    const auto width = static_cast<std::size_t>(std::llround(0.07 * fs));
    for (double t = -std::log(1.0 - uniform01(rng)) / rate; t < spec.duration_s;
         t += -std::log(1.0 - uniform01(rng)) / rate) {
      const auto start = static_cast<std::size_t>(t * fs);
      ++spikes;
      for (std::size_t c = 0; c < C; ++c) {
        if (uniform01(rng) < 0.5) continue;
        const double a = spec.spike_amplitude_uv * (0.5 + 0.5 * uniform01(rng));
        for (std::size_t j = 0; j < width && start + j < n; ++j)
          src[c][start + j] += a * std::sin(2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(width));
      }
    }
  }

  Recording rec;
  rec.patient_id = "synth_" + std::to_string(index);
  rec.duration_s = static_cast<double>(n) / fs;
  for (std::size_t c = 0; c < C; ++c) {
    ChannelSignal ch{file_label(labels[c]), fs, std::move(src[c])};
    for (auto& v : ch.samples) {
      if (spec.sensor_noise_uv > 0.0) v += spec.sensor_noise_uv * gaussian(rng);
      v = std::clamp(v, -spec.clamp_uv, spec.clamp_uv);
    }
    rec.channels.push_back(std::move(ch));
  }
  if (spec.aux_channels) {
    ChannelSignal ekg{"EKG1-REF", fs, std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
      const double ph = std::fmod(static_cast<double>(i) * dt * 1.2, 1.0);
      ekg.samples[i] = std::clamp(800.0 * std::exp(-std::pow((ph - 0.3) / 0.02, 2.0)), -spec.clamp_uv, spec.clamp_uv);
    }
    rec.channels.push_back(std::move(ekg));
    rec.channels.push_back(ChannelSignal{"PHOTIC-REF", fs, std::vector<double>(n, 0.0)});
  }
  if (entry) *entry = ManifestEntry{"", fs, file_seed, rec.duration_s, spikes};
  return rec;
}

Manifest generate_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  require(!ec, ErrorCode::Io, "cannot create " + out_dir.string() + ": " + ec.message());

  Manifest m;
  m.spec = spec;
  m.files.resize(spec.n_files);
  std::vector<std::exception_ptr> errors(spec.n_files);
  EdfWriteOptions opts;
  opts.physical_min = -spec.clamp_uv;
  opts.physical_max = spec.clamp_uv;
  const auto N = static_cast<std::ptrdiff_t>(spec.n_files);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ii = 0; ii < N; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    try {
      char name[32];
      std::snprintf(name, sizeof name, "synth_%04zu.edf", i);
      auto rec = synth_recording(spec, i, &m.files[i]);
      m.files[i].file = name;
      write_edf_subset(rec, out_dir / name, opts);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::ofstream csv(out_dir / "manifest.csv");
  require(bool(csv), ErrorCode::Io, "cannot write manifest in " + out_dir.string());
  csv << "file,fs,seed,duration_s,spikes,pink_uv,oscillations,spike_rate_per_min,lr_correlation,sensor_noise_uv\n";
  std::string osc;
  for (const auto& o : spec.oscillations) {
    char b[96];
    std::snprintf(b, sizeof b, "%s%g-%g:%g@%g", osc.empty() ? "" : ";", o.lo_hz, o.hi_hz, o.amplitude_uv,
                  o.burst_fraction);
    osc += b;
  }
  for (const auto& f : m.files)
    csv << f.file << ',' << f.fs << ',' << f.seed << ',' << f.duration_s << ',' << f.spikes << ',' << spec.pink_uv
        << ',' << osc << ',' << spec.spike_rate_per_min << ',' << spec.lr_correlation << ',' << spec.sensor_noise_uv
        << '\n';
  std::ofstream(out_dir / "synth_spec.json") << json(spec).dump(2) << '\n';
  return m;
}

}  // namespace dcae
