#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dcae {

struct ChannelSignal {
  std::string label;
  double fs = 0.0;              // Hz
  std::vector<double> samples;  // microvolts

  double duration_s() const { return fs > 0.0 ? static_cast<double>(samples.size()) / fs : 0.0; }
};

struct Recording {
  std::string patient_id;
  std::vector<ChannelSignal> channels;
  double duration_s = 0.0;

  const ChannelSignal* find(const std::string& label) const;
  double max_fs() const;
};

// Checks the Recording/ChannelSignal invariants (unique labels, equal
// durations within one sample period, finite nonempty samples).
void validate(const Recording& rec);

// Per-signal header of an EDF file, already parsed to numbers.
struct EdfSignalHeader {
  std::string label;
  std::string transducer;
  std::string physical_dimension;
  double physical_min = 0.0;
  double physical_max = 0.0;
  std::int64_t digital_min = 0;
  std::int64_t digital_max = 0;
  std::string prefiltering;
  std::int64_t samples_per_record = 0;

  double fs(double record_duration_s) const {
    return static_cast<double>(samples_per_record) / record_duration_s;
  }
};

struct EdfHeader {
  std::string version;
  std::string patient;
  std::string recording;
  std::string start_date;
  std::string start_time;
  std::int64_t header_bytes = 0;
  std::string reserved;
  std::int64_t num_records = 0;
  double record_duration_s = 0.0;
  std::vector<EdfSignalHeader> signals;
};

// Parses only the fixed header block; does not touch the data section.
EdfHeader read_edf_header(const std::filesystem::path& path);

// Reads a continuous EDF / EDF+C file into physical units. Channels with a
// degenerate calibration (digMax == digMin) are dropped and reported through
// `warnings`; EDF+ annotation signals are skipped.
Recording read_edf(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

struct EdfWriteOptions {
  double physical_min = -1000.0;  // microvolts
  double physical_max = 1000.0;
  std::int32_t digital_min = -32768;
  std::int32_t digital_max = 32767;
};

// Writes a 16-bit continuous EDF. Channel rates must be integral per record:
// one-second records when every channel spans a whole number of seconds,
// otherwise a single record covering the recording.
void write_edf_subset(const Recording& rec, const std::filesystem::path& path,
                      const EdfWriteOptions& opts = {});

// Affine digital -> physical conversion used by read_edf.
inline double digital_to_physical(double dig, double dig_min, double dig_max, double phys_min,
                                  double phys_max) {
  return (dig - dig_min) * (phys_max - phys_min) / (dig_max - dig_min) + phys_min;
}

// ---------------------------------------------------------------------------
// Internal tensor format: "DCAE" | u16 version | u8 rank | rank x u64 dims |
// row-major little-endian float32 payload.

inline constexpr std::uint16_t kTensorFormatVersion = 1;

struct TensorFile {
  std::vector<std::uint64_t> dims;
  std::vector<float> data;

  std::uint64_t element_count() const;
};

std::vector<std::uint8_t> encode_tensor(std::span<const std::uint64_t> dims, std::span<const float> data);
TensorFile decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, std::span<const std::uint64_t> dims,
                  std::span<const float> data);
TensorFile read_tensor(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

struct RateCensus {
  std::map<double, std::size_t> counts;  // max channel fs -> number of files
  std::vector<std::pair<std::string, std::string>> unreadable;  // path, reason
};

RateCensus sampling_rate_census(std::span<const std::filesystem::path> paths);

// Sorted list of *.edf files directly inside `dir` (case-insensitive extension).
std::vector<std::filesystem::path> list_edf_files(const std::filesystem::path& dir);

}  // namespace dcae
