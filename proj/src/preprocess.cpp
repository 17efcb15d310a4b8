#include "dcae/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <map>
#include <numbers>
#include <set>

#include "dcae/error.hpp"
#include "dcae/log.hpp"

namespace dcae {

void MontageSpec::validate() const {
  require(required_labels.size() == kMontageChannels, ErrorCode::ConfigInvalid,
          "montage must list exactly 23 labels");
  std::set<std::string> seen(required_labels.begin(), required_labels.end());
  require(seen.size() == required_labels.size(), ErrorCode::ConfigInvalid, "montage labels must be unique");
}

std::optional<std::size_t> MontageSpec::index_of(const std::string& label) const {
  auto it = std::find(required_labels.begin(), required_labels.end(), label);
  if (it == required_labels.end()) return std::nullopt;
  return static_cast<std::size_t>(it - required_labels.begin());
}

namespace {

std::string upper_trimmed(const std::string& s) {
  std::string out;
  for (char c : s) out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  const auto b = out.find_first_not_of(' ');
  if (b == std::string::npos) return {};
  const auto e = out.find_last_not_of(' ');
  return out.substr(b, e - b + 1);
}

bool strip_prefix(std::string& s, std::string_view p) {
  if (s.rfind(p, 0) != 0) return false;
  s.erase(0, p.size());
  return true;
}

bool strip_suffix(std::string& s, std::string_view p) {
  if (s.size() < p.size() || s.compare(s.size() - p.size(), p.size(), p) != 0) return false;
  s.erase(s.size() - p.size());
  return true;
}

// Upper-cased 10-20 scalp sites (plus the ear and anterior temporal
// electrodes) mapped to canonical spelling. Old temporal names are folded
// onto their modern equivalents.
const std::map<std::string, std::string>& scalp_sites() {
  static const std::map<std::string, std::string> sites = {
      {"FP1", "FP1"}, {"FP2", "FP2"}, {"FPZ", "Fpz"}, {"F3", "F3"}, {"F4", "F4"}, {"F7", "F7"},
      {"F8", "F8"},   {"FZ", "Fz"},   {"C3", "C3"},   {"C4", "C4"}, {"CZ", "Cz"}, {"P3", "P3"},
      {"P4", "P4"},   {"P7", "P7"},   {"P8", "P8"},   {"PZ", "Pz"}, {"O1", "O1"}, {"O2", "O2"},
      {"OZ", "Oz"},   {"T7", "T7"},   {"T8", "T8"},   {"A1", "A1"}, {"A2", "A2"}, {"T1", "T1"},
      {"T2", "T2"},   {"T3", "T7"},   {"T4", "T8"},   {"T5", "P7"}, {"T6", "P8"}};
  return sites;
}

}  // namespace

std::optional<std::string> normalize_label(const std::string& raw) {
  std::string s = upper_trimmed(raw);
  strip_prefix(s, "EEG ");
  if (!strip_suffix(s, "-REF")) strip_suffix(s, "-LE");
  s = upper_trimmed(s);
  const auto& sites = scalp_sites();
  auto it = sites.find(s);
  if (it == sites.end()) return std::nullopt;
  return it->second;
}

Recording clean_channels(const Recording& rec) {
  Recording out;
  out.patient_id = rec.patient_id;
  out.duration_s = rec.duration_s;
  std::set<std::string> seen;
  for (const auto& ch : rec.channels) {
    auto name = normalize_label(ch.label);
    if (!name) continue;
    if (!seen.insert(*name).second) {
      log::warn("duplicate channel " + *name + " ('" + ch.label + "') ignored");
      continue;
    }
    ChannelSignal kept = ch;
    kept.label = *name;
    out.channels.push_back(std::move(kept));
  }
  return out;
}

ChannelSignal resample_cubic(const ChannelSignal& sig, double target_fs) {
  require(sig.fs > 0.0 && target_fs > 0.0, ErrorCode::InvalidArgument, "sampling rates must be positive");
  const std::size_t n = sig.samples.size();
  require(n >= 4, ErrorCode::TooShort, "cubic spline needs at least 4 samples, got " + std::to_string(n));
  const auto& y = sig.samples;

  // Second derivatives in sample units (knot spacing 1), natural boundary.
  std::vector<double> m(n, 0.0);
  {
    const std::size_t k = n - 2;
    std::vector<double> diag(k, 4.0), rhs(k);
    for (std::size_t i = 0; i < k; ++i) rhs[i] = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]);
    for (std::size_t i = 1; i < k; ++i) {
      const double w = 1.0 / diag[i - 1];
      diag[i] -= w;
      rhs[i] -= w * rhs[i - 1];
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for (std::size_t i = k - 1; i >= 1; --i) m[i] = (rhs[i - 1] - m[i + 1]) / diag[i - 1];
  }

  const double duration = static_cast<double>(n) / sig.fs;
  const auto n_out = static_cast<std::size_t>(std::floor(duration * target_fs + 1e-9));
  ChannelSignal out;
  out.label = sig.label;
  out.fs = target_fs;
  out.samples.resize(n_out);
  for (std::size_t j = 0; j < n_out; ++j) {
    const double u = static_cast<double>(j) * sig.fs / target_fs;
    const std::size_t i = std::min(static_cast<std::size_t>(u), n - 2);
    const double t = u - static_cast<double>(i);
    const double b = (y[i + 1] - y[i]) - (2.0 * m[i] + m[i + 1]) / 6.0;
    const double c = m[i] / 2.0;
    const double d = (m[i + 1] - m[i]) / 6.0;
    out.samples[j] = y[i] + t * (b + t * (c + t * d));
  }
  return out;
}

std::complex<double> Biquad::response(double freq_hz, double fs) const {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * freq_hz / fs);
  return (b0 + b1 * z1 + b2 * z1 * z1) / (1.0 + a1 * z1 + a2 * z1 * z1);
}

std::array<std::complex<double>, 2> Biquad::poles() const {
  const std::complex<double> disc = std::sqrt(std::complex<double>(a1 * a1 - 4.0 * a2));
  return {(-a1 + disc) / 2.0, (-a1 - disc) / 2.0};
}

std::complex<double> BiquadCascade::response(double freq_hz, double fs) const {
  std::complex<double> h = gain;
  for (const auto& s : sections) h *= s.response(freq_hz, fs);
  return h;
}

double BiquadCascade::magnitude_db(double freq_hz, double fs) const {
  return 20.0 * std::log10(std::abs(response(freq_hz, fs)));
}

double BiquadCascade::max_pole_radius() const {
  double r = 0.0;
  for (const auto& s : sections)
    for (const auto& p : s.poles()) r = std::max(r, std::abs(p));
  return r;
}

BiquadCascade design_bandpass(double fs, double highpass_hz, double lowpass_hz) {
  require(fs > 0.0 && highpass_hz > 0.0 && highpass_hz < lowpass_hz, ErrorCode::InvalidArgument,
          "bandpass corners must satisfy 0 < highpass < lowpass");
  require(lowpass_hz < fs / 2.0, ErrorCode::CornerAboveNyquist,
          "low-pass corner " + std::to_string(lowpass_hz) + " Hz is not below Nyquist for fs=" + std::to_string(fs));
  BiquadCascade c;

  {
    const double k = std::tan(std::numbers::pi * highpass_hz / fs);
    Biquad hp;
    hp.b0 = 1.0 / (1.0 + k);
    hp.b1 = -hp.b0;
    hp.b2 = 0.0;
    hp.a1 = (k - 1.0) / (k + 1.0);
    hp.a2 = 0.0;
    c.sections.push_back(hp);
  }

  const double k = std::tan(std::numbers::pi * lowpass_hz / fs);
  constexpr int order = 4;
  for (int i = 0; i < order / 2; ++i) {
    const double theta = std::numbers::pi * (2.0 * i + 1.0) / (2.0 * order);
    const double q = 1.0 / (2.0 * std::cos(theta));
    const double norm = 1.0 / (1.0 + k / q + k * k);
    Biquad lp;
    lp.b0 = k * k * norm;
    lp.b1 = 2.0 * lp.b0;
    lp.b2 = lp.b0;
    lp.a1 = 2.0 * (k * k - 1.0) * norm;
    lp.a2 = (1.0 - k / q + k * k) * norm;
    c.sections.push_back(lp);
  }
  return c;
}

BiquadCascade design_notch(double fs, double f0, double bandwidth) {
  require(fs > 0.0 && f0 > 0.0 && bandwidth > 0.0 && bandwidth < 2.0 * f0, ErrorCode::InvalidArgument,
          "notch needs 0 < bandwidth < 2*f0");
  require(f0 + bandwidth / 2.0 < fs / 2.0, ErrorCode::CornerAboveNyquist,
          "notch band edge is not below Nyquist for fs=" + std::to_string(fs));
  // Allpass-based notch: the -3 dB width in digital frequency equals
  // 2*pi*bandwidth/fs exactly.
  const double k = std::tan(std::numbers::pi * bandwidth / fs);
  const double g = 1.0 / (1.0 + k);
  const double cw = std::cos(2.0 * std::numbers::pi * f0 / fs);
  Biquad n;
  n.b0 = g;
  n.b1 = -2.0 * g * cw;
  n.b2 = g;
  n.a1 = -2.0 * g * cw;
  n.a2 = 2.0 * g - 1.0;
  BiquadCascade c;
  c.sections.push_back(n);
  return c;
}

std::vector<double> apply_filter(const BiquadCascade& cascade, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  for (const auto& s : cascade.sections) {
    double z1 = 0.0, z2 = 0.0;
    for (auto& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  if (cascade.gain != 1.0)
    for (auto& v : y) v *= cascade.gain;
  return y;
}

ChannelSignal apply_filter(const BiquadCascade& cascade, const ChannelSignal& sig) {
  ChannelSignal out;
  out.label = sig.label;
  out.fs = sig.fs;
  out.samples = apply_filter(cascade, std::span<const double>(sig.samples));
  return out;
}

SignalMatrix average_montage(const Recording& rec, const MontageSpec& spec) {
  spec.validate();
  std::vector<const ChannelSignal*> rows;
  std::string missing;
  for (const auto& label : spec.required_labels) {
    const ChannelSignal* ch = rec.find(label);
    if (!ch) {
      missing += (missing.empty() ? "" : ",") + label;
      continue;
    }
    rows.push_back(ch);
  }
  if (!missing.empty()) fail(ErrorCode::MissingChannels, missing);

  std::size_t len = rows.front()->samples.size(), max_len = len;
  for (const auto* ch : rows) {
    require(std::abs(ch->fs - rows.front()->fs) < 1e-9, ErrorCode::ShapeMismatch,
            "montage channels differ in sampling rate");
    len = std::min(len, ch->samples.size());
    max_len = std::max(max_len, ch->samples.size());
  }
  require(max_len - len <= 1, ErrorCode::ShapeMismatch, "montage channels differ in length");

  const std::size_t c = rows.size();
  SignalMatrix out(c, len);
  for (std::size_t t = 0; t < len; ++t) {
    double sum = 0.0;
    for (std::size_t r = 0; r < c; ++r) sum += rows[r]->samples[t];
    const double mean = sum / static_cast<double>(c);
    for (std::size_t r = 0; r < c; ++r) out(r, t) = rows[r]->samples[t] - mean;
  }
  return out;
}

SignalMatrix preprocess_recording(const Recording& rec, const PipelineOptions& opts, const MontageSpec& spec,
                                  SignalMatrix* referential) {
  Recording cleaned = clean_channels(rec);

  // Only montage channels are carried forward; check presence before the
  // expensive stages so skipped recordings cost nothing.
  Recording selected;
  selected.patient_id = cleaned.patient_id;
  selected.duration_s = cleaned.duration_s;
  std::string missing;
  for (const auto& label : spec.required_labels) {
    const ChannelSignal* ch = cleaned.find(label);
    if (ch)
      selected.channels.push_back(*ch);
    else
      missing += (missing.empty() ? "" : ",") + label;
  }
  if (!missing.empty()) fail(ErrorCode::MissingChannels, missing);

  const BiquadCascade bandpass = design_bandpass(opts.target_fs, opts.highpass_hz, opts.lowpass_hz);
  const BiquadCascade notch = design_notch(opts.target_fs, opts.notch_hz, opts.notch_bandwidth_hz);

  auto& chans = selected.channels;
  const auto n = static_cast<std::ptrdiff_t>(chans.size());
  std::vector<std::exception_ptr> errors(chans.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto& ch = chans[static_cast<std::size_t>(i)];
    try {
      if (ch.fs != opts.target_fs) ch = resample_cubic(ch, opts.target_fs);
      ch.samples = apply_filter(bandpass, std::span<const double>(ch.samples));
      ch.samples = apply_filter(notch, std::span<const double>(ch.samples));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  SignalMatrix out = average_montage(selected, spec);
  if (referential) {
    *referential = SignalMatrix(out.rows, out.cols);
    for (std::size_t r = 0; r < out.rows; ++r)
      std::copy_n(chans[r].samples.begin(), out.cols, referential->row(r).begin());
  }
  return out;
}

}  // namespace dcae
