#include <cstring>
#include <numbers>

#include "dcae/error.hpp"
#include "dcae/signal_io.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace dcae;
using testing::TempDir;

namespace {

Recording two_sines(double fs = 256.0, double seconds = 4.0) {
  Recording r;
  r.patient_id = "p1";
  r.channels.push_back(testing::sine_channel("EEG FP1-REF", fs, seconds, 10.0, 100.0));
  r.channels.push_back(testing::sine_channel("EEG FP2-REF", fs, seconds, 3.0, 250.0, 0.3));
  r.duration_s = seconds;
  return r;
}

// Overwrite one fixed-width ASCII field of a signal header.
void patch_field(std::vector<std::uint8_t>& b, std::size_t offset, std::size_t width, const std::string& text) {
  std::string f = text;
  f.resize(width, ' ');
  std::memcpy(b.data() + offset, f.data(), width);
}

}  // namespace

TEST_CASE("digital to physical calibration") {
  CHECK(digital_to_physical(0, -32768, 32767, -1000, 1000) == doctest::Approx(0.01526).epsilon(1e-3));
  CHECK(digital_to_physical(-32768, -32768, 32767, -1000, 1000) == -1000.0);
  CHECK(digital_to_physical(32767, -32768, 32767, -1000, 1000) == 1000.0);
  // monotone
  double prev = -1e9;
  for (int d = -32768; d <= 32767; d += 977) {
    const double p = digital_to_physical(d, -32768, 32767, -1000, 1000);
    CHECK(p > prev);
    prev = p;
  }
}

TEST_CASE("edf round trip stays within one quantisation step") {
  TempDir dir("edf");
  const auto rec = two_sines();
  write_edf_subset(rec, dir / "a.edf");
  const auto back = read_edf(dir / "a.edf");
  REQUIRE(back.channels.size() == 2);
  const double q = 2000.0 / 65535.0;
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(back.channels[c].label == rec.channels[c].label);
    CHECK(back.channels[c].fs == 256.0);
    REQUIRE(back.channels[c].samples.size() == rec.channels[c].samples.size());
    double err = 0;
    for (std::size_t i = 0; i < rec.channels[c].samples.size(); ++i)
      err = std::max(err, std::abs(back.channels[c].samples[i] - rec.channels[c].samples[i]));
    CHECK(err <= q);
  }
  CHECK(back.duration_s == doctest::Approx(4.0));
  CHECK(back.patient_id == "p1");
}

TEST_CASE("edf round trip with a fractional duration uses one record") {
  TempDir dir("edf");
  Recording r;
  r.channels.push_back(testing::sine_channel("C3", 250.0, 2.5, 7.0, 80.0));
  r.channels.push_back(testing::sine_channel("C4", 500.0, 2.5, 7.0, 80.0));
  r.duration_s = 2.5;
  r.channels[1].samples.resize(1250);
  write_edf_subset(r, dir / "f.edf");
  const auto back = read_edf(dir / "f.edf");
  CHECK(back.channels[0].fs == doctest::Approx(250.0));
  CHECK(back.channels[1].fs == doctest::Approx(500.0));
  CHECK(back.channels[1].samples.size() == 1250);
  CHECK(back.max_fs() == doctest::Approx(500.0));
}

TEST_CASE("edf layout of a one second 256 Hz channel") {
  TempDir dir("edf");
  Recording r;
  r.channels.push_back({"Cz", 256.0, std::vector<double>(256, 0.0)});
  r.duration_s = 1.0;
  write_edf_subset(r, dir / "z.edf");
  const auto bytes = testing::read_bytes(dir / "z.edf");
  REQUIRE(bytes.size() == 256 + 256 + 512);
  // zero maps to round((0 - pmin) * 65535 / 2000 + dmin) = round(-0.5)
  const auto expected = static_cast<std::int16_t>(std::round((0.0 + 1000.0) * 65535.0 / 2000.0 - 32768.0));
  for (std::size_t i = 0; i < 256; ++i) {
    const auto v = static_cast<std::int16_t>(bytes[512 + 2 * i] | (bytes[512 + 2 * i + 1] << 8));
    CHECK(v == expected);
  }
}

TEST_CASE("edf writer rejects out of range samples") {
  TempDir dir("edf");
  Recording r;
  r.channels.push_back({"Cz", 256.0, std::vector<double>(256, 0.0)});
  r.channels[0].samples[17] = 1500.0;
  r.duration_s = 1.0;
  try {
    write_edf_subset(r, dir / "x.edf");
    FAIL("expected RangeOverflow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RangeOverflow);
  }
}

TEST_CASE("edf reader errors") {
  TempDir dir("edf");
  write_edf_subset(two_sines(), dir / "ok.edf");
  auto bytes = testing::read_bytes(dir / "ok.edf");

  SUBCASE("truncated header") {
    testing::write_bytes(dir / "t.edf", {bytes.begin(), bytes.begin() + 300});
    try {
      read_edf(dir / "t.edf");
      FAIL("expected MalformedHeader");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MalformedHeader);
    }
  }
  SUBCASE("discontinuous EDF+") {
    patch_field(bytes, 192, 44, "EDF+D");
    testing::write_bytes(dir / "d.edf", bytes);
    try {
      read_edf(dir / "d.edf");
      FAIL("expected UnsupportedFeature");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UnsupportedFeature);
    }
  }
  SUBCASE("unknown version") {
    patch_field(bytes, 0, 8, "1");
    testing::write_bytes(dir / "v.edf", bytes);
    try {
      read_edf(dir / "v.edf");
      FAIL("expected UnsupportedFeature");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UnsupportedFeature);
    }
  }
  SUBCASE("degenerate calibration drops the channel with a warning") {
    const std::size_t ns = 2;
    // digital max field of signal 1 := its digital min
    patch_field(bytes, 256 + 128 * ns + 8 * 1, 8, "-32768");
    testing::write_bytes(dir / "g.edf", bytes);
    std::vector<std::string> warnings;
    const auto rec = read_edf(dir / "g.edf", &warnings);
    REQUIRE(rec.channels.size() == 1);
    CHECK(rec.channels[0].label == "EEG FP1-REF");
    CHECK(warnings.size() == 1);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_edf(dir / "nope.edf"), Error);
  }
}

TEST_CASE("tensor format") {
  SUBCASE("zeros 23x512") {
    std::vector<std::uint64_t> dims{23, 512};
    std::vector<float> z(23 * 512, 0.f);
    const auto bytes = encode_tensor(dims, z);
    CHECK(bytes.size() == 4 + 2 + 1 + 2 * 8 + 47104);
    CHECK(std::memcmp(bytes.data(), "DCAE", 4) == 0);
  }
  SUBCASE("scalar") {
    std::vector<std::uint64_t> dims{};
    std::vector<float> one{1.0f};
    const auto bytes = encode_tensor(dims, one);
    CHECK(bytes.size() == 4 + 2 + 1 + 4);
    CHECK(bytes[6] == 0);
    const auto t = decode_tensor(bytes);
    CHECK(t.dims.empty());
    REQUIRE(t.data.size() == 1);
    CHECK(t.data[0] == 1.0f);
  }
  SUBCASE("random shapes round trip bit for bit") {
    TempDir dir("tensor");
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 25; ++trial) {
      std::vector<std::uint64_t> dims;
      const int rank = static_cast<int>(rng() % 4);
      std::uint64_t n = 1;
      for (int i = 0; i < rank; ++i) {
        dims.push_back(1 + rng() % 7);
        n *= dims.back();
      }
      std::vector<float> v(n);
      for (auto& x : v) {
        std::uint32_t bits = static_cast<std::uint32_t>(rng());
        std::memcpy(&x, &bits, 4);
        if (!std::isfinite(x)) x = 0.5f;
      }
      write_tensor(dir / "t.dcaet", dims, v);
      const auto t = read_tensor(dir / "t.dcaet");
      CHECK(t.dims == dims);
      REQUIRE(t.data.size() == v.size());
      CHECK(std::memcmp(t.data.data(), v.data(), v.size() * 4) == 0);
    }
  }
  SUBCASE("(3,5,7) tensor") {
    std::vector<std::uint64_t> dims{3, 5, 7};
    std::mt19937_64 rng(3);
    std::vector<float> v(105);
    for (auto& x : v) x = static_cast<float>(testing::uniform(1, rng)[0]);
    const auto t = decode_tensor(encode_tensor(dims, v));
    CHECK(std::memcmp(t.data.data(), v.data(), v.size() * 4) == 0);
    CHECK(t.element_count() == 105);
  }
  SUBCASE("truncated payload") {
    std::vector<std::uint64_t> dims{4, 4};
    std::vector<float> v(16, 2.f);
    auto bytes = encode_tensor(dims, v);
    bytes.resize(bytes.size() - 3);
    try {
      decode_tensor(bytes);
      FAIL("expected LengthMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::LengthMismatch);
    }
  }
  SUBCASE("bad magic") {
    auto bytes = encode_tensor(std::vector<std::uint64_t>{1}, std::vector<float>{1.f});
    bytes[0] = 'X';
    try {
      decode_tensor(bytes);
      FAIL("expected MalformedHeader");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MalformedHeader);
    }
    bytes[0] = 'D';
    bytes[4] = 9;
    try {
      decode_tensor(bytes);
      FAIL("expected UnsupportedFeature");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UnsupportedFeature);
    }
  }
}

TEST_CASE("sampling rate census") {
  TempDir dir("census");
  std::vector<std::filesystem::path> paths;
  const double rates[] = {256, 256, 256, 250};
  for (int i = 0; i < 4; ++i) {
    Recording r;
    r.channels.push_back(testing::sine_channel("Cz", rates[i], 2.0, 5.0, 10.0));
    r.duration_s = 2.0;
    paths.push_back(dir / ("f" + std::to_string(i) + ".edf"));
    write_edf_subset(r, paths.back());
  }
  auto census = sampling_rate_census(paths);
  CHECK(census.counts.size() == 2);
  CHECK(census.counts[256.0] == 3);
  CHECK(census.counts[250.0] == 1);
  CHECK(census.unreadable.empty());

  CHECK(sampling_rate_census({}).counts.empty());

  testing::write_bytes(dir / "bad.edf", {'n', 'o', 'p', 'e'});
  paths.push_back(dir / "bad.edf");
  census = sampling_rate_census(paths);
  CHECK(census.counts[256.0] == 3);
  CHECK(census.unreadable.size() == 1);

  const auto listed = list_edf_files(dir.path());
  CHECK(listed.size() == 5);
  CHECK(std::is_sorted(listed.begin(), listed.end()));
}

TEST_CASE("recording invariants") {
  Recording r = two_sines();
  CHECK_NOTHROW(validate(r));
  r.channels[1].label = r.channels[0].label;
  CHECK_THROWS_AS(validate(r), Error);
  r = two_sines();
  r.channels[1].samples.resize(r.channels[1].samples.size() - 10);
  CHECK_THROWS_AS(validate(r), Error);
  r = two_sines();
  r.channels[0].samples[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(validate(r), Error);
}
