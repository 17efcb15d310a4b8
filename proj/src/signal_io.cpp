#include "dcae/signal_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>

#include "dcae/error.hpp"
#include "dcae/log.hpp"

namespace dcae {

namespace fs = std::filesystem;

const ChannelSignal* Recording::find(const std::string& label) const {
  for (const auto& ch : channels)
    if (ch.label == label) return &ch;
  return nullptr;
}

double Recording::max_fs() const {
  double m = 0.0;
  for (const auto& ch : channels) m = std::max(m, ch.fs);
  return m;
}

void validate(const Recording& rec) {
  std::set<std::string> labels;
  for (const auto& ch : rec.channels) {
    require(ch.fs > 0.0 && std::isfinite(ch.fs), ErrorCode::InvalidArgument,
            "channel " + ch.label + " has non-positive sampling rate");
    require(!ch.samples.empty(), ErrorCode::InvalidArgument, "channel " + ch.label + " is empty");
    require(std::all_of(ch.samples.begin(), ch.samples.end(), [](double v) { return std::isfinite(v); }),
            ErrorCode::InvalidArgument, "channel " + ch.label + " has non-finite samples");
    require(labels.insert(ch.label).second, ErrorCode::InvalidArgument, "duplicate channel label " + ch.label);
    require(std::abs(ch.duration_s() - rec.duration_s) <= 1.0 / ch.fs + 1e-9, ErrorCode::InvalidArgument,
            "channel " + ch.label + " duration disagrees with recording duration");
  }
}

namespace {

std::vector<std::uint8_t> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

class FieldReader {
 public:
  FieldReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::string text(std::size_t width) {
    if (pos_ + width > bytes_.size()) fail(ErrorCode::MalformedHeader, "header truncated");
    std::string s(reinterpret_cast<const char*>(bytes_.data()) + pos_, width);
    pos_ += width;
    return trim(s);
  }

  double number(std::size_t width, const char* field) {
    const std::string s = text(width);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
      fail(ErrorCode::MalformedHeader, std::string("field '") + field + "' is not numeric: '" + s + "'");
    return v;
  }

  std::int64_t integer(std::size_t width, const char* field) {
    const double v = number(width, field);
    if (v != std::floor(v)) fail(ErrorCode::MalformedHeader, std::string("field '") + field + "' is not an integer");
    return static_cast<std::int64_t>(v);
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

EdfHeader parse_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 256) fail(ErrorCode::MalformedHeader, "file shorter than the 256-byte main header");
  FieldReader r(bytes);
  EdfHeader h;
  h.version = r.text(8);
  if (h.version != "0") fail(ErrorCode::UnsupportedFeature, "version field '" + h.version + "' is not EDF");
  h.patient = r.text(80);
  h.recording = r.text(80);
  h.start_date = r.text(8);
  h.start_time = r.text(8);
  h.header_bytes = r.integer(8, "header bytes");
  h.reserved = r.text(44);
  h.num_records = r.integer(8, "number of records");
  h.record_duration_s = r.number(8, "record duration");
  const std::int64_t ns = r.integer(4, "number of signals");

  if (ns < 0) fail(ErrorCode::MalformedHeader, "negative signal count");
  if (h.header_bytes != 256 * (ns + 1))
    fail(ErrorCode::MalformedHeader, "header byte count " + std::to_string(h.header_bytes) + " does not match " +
                                         std::to_string(ns) + " signals");
  if (bytes.size() < static_cast<std::size_t>(h.header_bytes))
    fail(ErrorCode::MalformedHeader, "file shorter than declared header");
  if (h.reserved.rfind("EDF+D", 0) == 0)
    fail(ErrorCode::UnsupportedFeature, "discontinuous EDF+D recordings are not supported");
  if (!(h.record_duration_s > 0.0)) fail(ErrorCode::MalformedHeader, "record duration must be positive");

  h.signals.resize(static_cast<std::size_t>(ns));
  for (auto& s : h.signals) s.label = r.text(16);
  for (auto& s : h.signals) s.transducer = r.text(80);
  for (auto& s : h.signals) s.physical_dimension = r.text(8);
  for (auto& s : h.signals) s.physical_min = r.number(8, "physical minimum");
  for (auto& s : h.signals) s.physical_max = r.number(8, "physical maximum");
  for (auto& s : h.signals) s.digital_min = r.integer(8, "digital minimum");
  for (auto& s : h.signals) s.digital_max = r.integer(8, "digital maximum");
  for (auto& s : h.signals) s.prefiltering = r.text(80);
  for (auto& s : h.signals) {
    s.samples_per_record = r.integer(8, "samples per record");
    if (s.samples_per_record <= 0) fail(ErrorCode::MalformedHeader, "signal " + s.label + " has no samples per record");
  }
  for (std::size_t i = 0; i < h.signals.size(); ++i) r.text(32);
  return h;
}

bool is_annotation(const EdfSignalHeader& s) { return s.label == "EDF Annotations"; }

// Formats a number into at most `width` characters, dropping precision as needed.
std::string format_number(double v, std::size_t width) {
  char buf[64];
  for (int prec = 12; prec >= 1; --prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    std::string s(buf);
    if (s.size() <= width && s.find('e') == std::string::npos) return s;
  }
  fail(ErrorCode::InvalidArgument, "value does not fit an EDF header field");
}

void put_field(std::string& out, const std::string& s, std::size_t width) {
  std::string f = s.substr(0, width);
  f.resize(width, ' ');
  out += f;
}

double parse_back(const std::string& s) {
  double v = 0.0;
  std::from_chars(s.data(), s.data() + s.size(), v);
  return v;
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

EdfHeader read_edf_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> head(256);
  in.read(reinterpret_cast<char*>(head.data()), 256);
  head.resize(static_cast<std::size_t>(in.gcount()));
  if (head.size() < 256) fail(ErrorCode::MalformedHeader, "file shorter than the 256-byte main header");
  // Peek at the signal count to know how much more to read.
  const std::string ns_text = trim(std::string_view(reinterpret_cast<const char*>(head.data()) + 252, 4));
  int ns = 0;
  auto [p, ec] = std::from_chars(ns_text.data(), ns_text.data() + ns_text.size(), ns);
  if (ec != std::errc() || ns < 0) fail(ErrorCode::MalformedHeader, "bad signal count");
  head.resize(256 + 256 * static_cast<std::size_t>(ns));
  in.read(reinterpret_cast<char*>(head.data()) + 256, 256 * ns);
  head.resize(256 + static_cast<std::size_t>(in.gcount()));
  return parse_header(head);
}

Recording read_edf(const fs::path& path, std::vector<std::string>* warnings) {
  const auto bytes = slurp(path);
  const EdfHeader h = parse_header(bytes);

  std::size_t record_samples = 0;
  for (const auto& s : h.signals) record_samples += static_cast<std::size_t>(s.samples_per_record);
  const std::size_t record_bytes = record_samples * 2;
  const std::size_t data_bytes = bytes.size() - static_cast<std::size_t>(h.header_bytes);

  std::size_t n_records = 0;
  if (h.num_records < 0) {
    if (record_bytes == 0 || data_bytes % record_bytes != 0)
      fail(ErrorCode::MalformedHeader, "data section is not a whole number of records");
    n_records = data_bytes / record_bytes;
  } else {
    n_records = static_cast<std::size_t>(h.num_records);
    if (data_bytes < n_records * record_bytes)
      fail(ErrorCode::MalformedHeader, "data section holds " + std::to_string(data_bytes) + " bytes, header declares " +
                                           std::to_string(n_records * record_bytes));
  }

  auto warn = [&](const std::string& msg) {
    log::warn(path.filename().string() + ": " + msg);
    if (warnings) warnings->push_back(msg);
  };

  Recording rec;
  rec.patient_id = h.patient;
  rec.duration_s = static_cast<double>(n_records) * h.record_duration_s;

  std::vector<std::size_t> offsets(h.signals.size());
  std::size_t off = 0;
  for (std::size_t i = 0; i < h.signals.size(); ++i) {
    offsets[i] = off;
    off += static_cast<std::size_t>(h.signals[i].samples_per_record) * 2;
  }

  const std::uint8_t* data = bytes.data() + h.header_bytes;
  for (std::size_t i = 0; i < h.signals.size(); ++i) {
    const auto& s = h.signals[i];
    if (is_annotation(s)) continue;
    if (s.digital_max == s.digital_min) {
      warn("channel '" + s.label + "' dropped: " + to_string(ErrorCode::DegenerateCalibration));
      continue;
    }
    ChannelSignal ch;
    ch.label = s.label;
    ch.fs = s.fs(h.record_duration_s);
    const auto spr = static_cast<std::size_t>(s.samples_per_record);
    ch.samples.resize(spr * n_records);
    const double dmin = static_cast<double>(s.digital_min);
    const double dmax = static_cast<double>(s.digital_max);
    for (std::size_t r = 0; r < n_records; ++r) {
      const std::uint8_t* p = data + r * record_bytes + offsets[i];
      for (std::size_t k = 0; k < spr; ++k) {
        const auto raw = static_cast<std::int16_t>(static_cast<std::uint16_t>(p[2 * k] | (p[2 * k + 1] << 8)));
        ch.samples[r * spr + k] = digital_to_physical(raw, dmin, dmax, s.physical_min, s.physical_max);
      }
    }
    rec.channels.push_back(std::move(ch));
  }
  return rec;
}

void write_edf_subset(const Recording& rec, const fs::path& path, const EdfWriteOptions& opts) {
  require(opts.physical_max > opts.physical_min, ErrorCode::InvalidArgument, "empty physical range");
  require(opts.digital_max > opts.digital_min && opts.digital_min >= -32768 && opts.digital_max <= 32767,
          ErrorCode::InvalidArgument, "digital range must be a nonempty 16-bit interval");
  require(!rec.channels.empty(), ErrorCode::InvalidArgument, "recording has no channels");

  // One-second records when every channel holds whole seconds at an integral rate.
  bool whole_seconds = true;
  for (const auto& ch : rec.channels) {
    const double r = std::round(ch.fs);
    if (std::abs(ch.fs - r) > 1e-9 || r < 1.0 || ch.samples.size() % static_cast<std::size_t>(r) != 0)
      whole_seconds = false;
  }
  const std::size_t n0 = rec.channels.front().samples.size();
  std::size_t n_records = 0;
  std::string duration_text;
  std::vector<std::size_t> spr(rec.channels.size());
  if (whole_seconds) {
    n_records = n0 / static_cast<std::size_t>(std::round(rec.channels.front().fs));
    duration_text = "1";
    for (std::size_t i = 0; i < rec.channels.size(); ++i) {
      spr[i] = static_cast<std::size_t>(std::round(rec.channels[i].fs));
      require(rec.channels[i].samples.size() / spr[i] == n_records, ErrorCode::InvalidArgument,
              "channels span different numbers of seconds");
    }
  } else {
    n_records = 1;
    duration_text = format_number(rec.channels.front().duration_s(), 8);
    for (std::size_t i = 0; i < rec.channels.size(); ++i) spr[i] = rec.channels[i].samples.size();
  }

  const std::string pmin_text = format_number(opts.physical_min, 8);
  const std::string pmax_text = format_number(opts.physical_max, 8);
  const double pmin = parse_back(pmin_text);
  const double pmax = parse_back(pmax_text);
  const double dmin = opts.digital_min;
  const double dmax = opts.digital_max;

  const std::size_t ns = rec.channels.size();
  std::string header;
  header.reserve(256 * (ns + 1));
  put_field(header, "0", 8);
  put_field(header, rec.patient_id.empty() ? "X" : rec.patient_id, 80);
  put_field(header, "Startdate X X X X", 80);
  put_field(header, "01.01.00", 8);
  put_field(header, "00.00.00", 8);
  put_field(header, std::to_string(256 * (ns + 1)), 8);
  put_field(header, "", 44);
  put_field(header, std::to_string(n_records), 8);
  put_field(header, duration_text, 8);
  put_field(header, std::to_string(ns), 4);
  for (const auto& ch : rec.channels) put_field(header, ch.label, 16);
  for (std::size_t i = 0; i < ns; ++i) put_field(header, "", 80);
  for (std::size_t i = 0; i < ns; ++i) put_field(header, "uV", 8);
  for (std::size_t i = 0; i < ns; ++i) put_field(header, pmin_text, 8);
  for (std::size_t i = 0; i < ns; ++i) put_field(header, pmax_text, 8);
  for (std::size_t i = 0; i < ns; ++i) put_field(header, std::to_string(opts.digital_min), 8);
  for (std::size_t i = 0; i < ns; ++i) put_field(header, std::to_string(opts.digital_max), 8);
  for (std::size_t i = 0; i < ns; ++i) put_field(header, "", 80);
  for (std::size_t i = 0; i < ns; ++i) put_field(header, std::to_string(spr[i]), 8);
  for (std::size_t i = 0; i < ns; ++i) put_field(header, "", 32);

  std::vector<std::uint8_t> out(header.begin(), header.end());
  std::size_t total = 0;
  for (auto s : spr) total += s;
  out.reserve(out.size() + total * n_records * 2);

  const double scale = (dmax - dmin) / (pmax - pmin);
  for (std::size_t r = 0; r < n_records; ++r) {
    for (std::size_t i = 0; i < ns; ++i) {
      const auto& ch = rec.channels[i];
      for (std::size_t k = 0; k < spr[i]; ++k) {
        const double v = ch.samples[r * spr[i] + k];
        if (!(v >= pmin && v <= pmax))
          fail(ErrorCode::RangeOverflow, "channel " + ch.label + " sample " + std::to_string(r * spr[i] + k) +
                                             " = " + std::to_string(v) + " outside [" + pmin_text + ", " + pmax_text +
                                             "]");
        const double d = std::clamp(std::round((v - pmin) * scale + dmin), dmin, dmax);
        const auto u = static_cast<std::uint16_t>(static_cast<std::int16_t>(d));
        out.push_back(static_cast<std::uint8_t>(u & 0xff));
        out.push_back(static_cast<std::uint8_t>(u >> 8));
      }
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::Io, "cannot create " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorCode::Io, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------

std::uint64_t TensorFile::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<std::uint8_t> encode_tensor(std::span<const std::uint64_t> dims, std::span<const float> data) {
  require(dims.size() <= 255, ErrorCode::InvalidArgument, "tensor rank exceeds 255");
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  require(n == data.size(), ErrorCode::ShapeMismatch,
          "payload has " + std::to_string(data.size()) + " values, shape implies " + std::to_string(n));

  std::vector<std::uint8_t> out;
  out.reserve(7 + 8 * dims.size() + 4 * data.size());
  for (char c : {'D', 'C', 'A', 'E'}) out.push_back(static_cast<std::uint8_t>(c));
  out.push_back(static_cast<std::uint8_t>(kTensorFormatVersion & 0xff));
  out.push_back(static_cast<std::uint8_t>(kTensorFormatVersion >> 8));
  out.push_back(static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) put_u64(out, d);
  std::size_t pos = out.size();
  out.resize(pos + 4 * data.size());
  for (float v : data) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) out[pos++] = static_cast<std::uint8_t>(bits >> (8 * i));
  }
  return out;
}

TensorFile decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 7) fail(ErrorCode::LengthMismatch, "tensor file shorter than its fixed header");
  if (bytes[0] != 'D' || bytes[1] != 'C' || bytes[2] != 'A' || bytes[3] != 'E')
    fail(ErrorCode::MalformedHeader, "bad tensor magic");
  const auto version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
  if (version != kTensorFormatVersion)
    fail(ErrorCode::UnsupportedFeature, "tensor format version " + std::to_string(version));
  const std::size_t rank = bytes[6];
  std::size_t pos = 7;
  if (bytes.size() < pos + 8 * rank) fail(ErrorCode::LengthMismatch, "tensor file truncated inside dims");

  TensorFile t;
  t.dims.resize(rank);
  for (auto& d : t.dims) {
    d = 0;
    for (int i = 0; i < 8; ++i) d |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
  }
  const std::uint64_t n = t.element_count();
  if (bytes.size() - pos != n * 4)
    fail(ErrorCode::LengthMismatch, "payload holds " + std::to_string(bytes.size() - pos) + " bytes, dims imply " +
                                        std::to_string(n * 4));
  t.data.resize(n);
  for (std::uint64_t k = 0; k < n; ++k, pos += 4) {
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[pos]) | (static_cast<std::uint32_t>(bytes[pos + 1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[pos + 2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[pos + 3]) << 24);
    t.data[k] = std::bit_cast<float>(bits);
  }
  return t;
}

void write_tensor(const fs::path& path, std::span<const std::uint64_t> dims, std::span<const float> data) {
  const auto bytes = encode_tensor(dims, data);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::Io, "cannot create " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorCode::Io, "write failed for " + path.string());
}

TensorFile read_tensor(const fs::path& path) { return decode_tensor(slurp(path)); }

// ---------------------------------------------------------------------------

RateCensus sampling_rate_census(std::span<const fs::path> paths) {
  RateCensus census;
  for (const auto& p : paths) {
    try {
      const EdfHeader h = read_edf_header(p);
      double max_fs = 0.0;
      for (const auto& s : h.signals)
        if (!is_annotation(s)) max_fs = std::max(max_fs, s.fs(h.record_duration_s));
      if (max_fs <= 0.0) fail(ErrorCode::MalformedHeader, "no data signals");
      ++census.counts[max_fs];
    } catch (const std::exception& e) {
      census.unreadable.emplace_back(p.string(), e.what());
    }
  }
  return census;
}

std::vector<fs::path> list_edf_files(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".edf") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace dcae
