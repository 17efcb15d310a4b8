#include <numbers>

#include "dcae/error.hpp"
#include "dcae/preprocess.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace dcae;

namespace {

constexpr double kPi = std::numbers::pi;

// Direct form I, straight from the difference equation of each section.
std::vector<double> difference_equation(const BiquadCascade& c, std::vector<double> x) {
  for (const auto& s : c.sections) {
    std::vector<double> y(x.size());
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (std::size_t n = 0; n < x.size(); ++n) {
      y[n] = s.b0 * x[n] + s.b1 * x1 + s.b2 * x2 - s.a1 * y1 - s.a2 * y2;
      x2 = x1, x1 = x[n], y2 = y1, y1 = y[n];
    }
    x = std::move(y);
  }
  for (auto& v : x) v *= c.gain;
  return x;
}

auto runner(const BiquadCascade& c) {
  return [&c](const std::vector<double>& x) { return apply_filter(c, std::span<const double>(x)); };
}

Recording full_montage_recording(double fs, double seconds, std::mt19937_64& rng) {
  Recording r;
  r.duration_s = seconds;
  std::uniform_real_distribution<double> f(1.0, 30.0), a(5.0, 60.0);
  for (const auto& lab : montage_labels())
    r.channels.push_back(testing::sine_channel("EEG " + lab + "-REF", fs, seconds, f(rng), a(rng), f(rng)));
  return r;
}

}  // namespace

TEST_CASE("label normalisation") {
  CHECK(normalize_label("EEG FP1-REF") == "FP1");
  CHECK(normalize_label("EEG T3-REF") == "T7");
  CHECK(normalize_label("EEG T4-LE") == "T8");
  CHECK(normalize_label("EEG T5-REF") == "P7");
  CHECK(normalize_label("EEG T6-REF") == "P8");
  CHECK(normalize_label("eeg fz-le") == "Fz");
  CHECK(normalize_label("Cz") == "Cz");
  CHECK_FALSE(normalize_label("EEG SP1-REF").has_value());
  CHECK_FALSE(normalize_label("ECG EKG-REF").has_value());
  CHECK_FALSE(normalize_label("PHOTIC PH").has_value());
}

TEST_CASE("clean_channels keeps scalp sites only") {
  Recording r;
  r.duration_s = 1;
  for (const char* l : {"EEG FP1-REF", "EEG SP1-REF", "ECG EKG-REF"}) r.channels.push_back({l, 256, std::vector<double>(256, 1.0)});
  auto c = clean_channels(r);
  REQUIRE(c.channels.size() == 1);
  CHECK(c.channels[0].label == "FP1");

  r.channels.push_back({"EEG T3-REF", 256, std::vector<double>(256, 2.0)});
  r.channels.push_back({"EEG T3-LE", 256, std::vector<double>(256, 3.0)});
  c = clean_channels(r);
  REQUIRE(c.channels.size() == 2);
  CHECK(c.channels[1].label == "T7");
  CHECK(c.channels[1].samples[0] == 2.0);
}

TEST_CASE("cubic resampling") {
  SUBCASE("constant is reproduced exactly") {
    ChannelSignal s{"Cz", 250.0, std::vector<double>(2500, 42.0)};
    const auto r = resample_cubic(s, 256.0);
    CHECK(r.fs == 256.0);
    CHECK(r.samples.size() == 2560);
    for (double v : r.samples) CHECK(v == doctest::Approx(42.0).epsilon(1e-12));
  }
  SUBCASE("10 Hz sine 250 -> 256") {
    const auto s = testing::sine_channel("Cz", 250.0, 10.0, 10.0, 1.0);
    const auto r = resample_cubic(s, 256.0);
    REQUIRE(r.samples.size() == 2560);
    double err = 0;
    for (std::size_t j = 0; j < r.samples.size(); ++j)
      err = std::max(err, std::abs(r.samples[j] - std::sin(2 * kPi * 10.0 * static_cast<double>(j) / 256.0)));
    CHECK(err < 1e-3);
  }
  SUBCASE("same rate is the identity") {
    const auto s = testing::sine_channel("Cz", 256.0, 3.0, 7.0, 30.0);
    const auto r = resample_cubic(s, 256.0);
    CHECK(r.samples == s.samples);
  }
  SUBCASE("linear ramp survives away from the ends") {
    ChannelSignal s{"Cz", 200.0, {}};
    for (int i = 0; i < 1000; ++i) s.samples.push_back(3.0 * i / 200.0 - 1.0);
    const auto r = resample_cubic(s, 256.0);
    for (std::size_t j = 10; j + 10 < r.samples.size(); ++j)
      CHECK(r.samples[j] == doctest::Approx(3.0 * static_cast<double>(j) / 256.0 - 1.0).epsilon(1e-9));
  }
}

TEST_CASE("bandpass response at 256 Hz") {
  const auto bp = design_bandpass(256.0);
  CHECK(std::abs(bp.magnitude_db(0.5, 256) + 3.0) <= 0.1);
  CHECK(std::abs(bp.magnitude_db(70.0, 256) + 3.0) <= 0.1);
  CHECK(std::abs(bp.magnitude_db(10.0, 256)) < 0.1);
  const double q = bp.magnitude_db(0.25, 256);
  CHECK(q <= -6.0);
  CHECK(q >= -7.6);
  // measured on actual sinusoids, independently of response()
  CHECK(std::abs(testing::sine_gain_db(runner(bp), 0.5, 256) + 3.0) <= 0.1);
  CHECK(std::abs(testing::sine_gain_db(runner(bp), 70.0, 256) + 3.0) <= 0.1);
  CHECK(std::abs(testing::sine_gain_db(runner(bp), 10.0, 256)) < 0.1);
  CHECK(bp.max_pole_radius() < 1.0 - 1e-9);
}

TEST_CASE("notch response") {
  const auto n = design_notch(256.0);
  CHECK(n.magnitude_db(60.0, 256) <= -30.0);
  CHECK(std::abs(n.magnitude_db(10.0, 256)) <= 0.2);
  CHECK(std::abs(n.magnitude_db(59.0, 256) + 3.0) <= 0.5);
  CHECK(std::abs(n.magnitude_db(61.0, 256) + 3.0) <= 0.5);
  CHECK(std::abs(n.magnitude_db(0.0, 256)) <= 0.1);
  CHECK(std::abs(n.magnitude_db(128.0, 256)) <= 0.1);
  CHECK(testing::sine_gain_db(runner(n), 60.0, 256) <= -30.0);
  CHECK(std::abs(testing::sine_gain_db(runner(n), 59.0, 256) + 3.0) <= 0.5);
  CHECK(n.max_pole_radius() < 1.0 - 1e-9);
}

TEST_CASE("filters are linear time invariant") {
  std::mt19937_64 rng(5);
  for (const auto& c : {design_bandpass(256.0), design_notch(256.0), design_bandpass(250.0)}) {
    const auto a = testing::uniform(1024, rng), b = testing::uniform(1024, rng);
    std::vector<double> mix(1024);
    for (std::size_t i = 0; i < 1024; ++i) mix[i] = 2.5 * a[i] - 0.75 * b[i];
    const auto ya = apply_filter(c, std::span<const double>(a)), yb = apply_filter(c, std::span<const double>(b));
    const auto ym = apply_filter(c, std::span<const double>(mix));
    for (std::size_t i = 0; i < 1024; ++i) CHECK(ym[i] == doctest::Approx(2.5 * ya[i] - 0.75 * yb[i]).epsilon(1e-9).scale(1));

    // shift by 37 samples
    std::vector<double> shifted(1024, 0.0);
    std::copy(a.begin(), a.end() - 37, shifted.begin() + 37);
    const auto ys = apply_filter(c, std::span<const double>(shifted));
    for (std::size_t i = 37; i < 1024; ++i) CHECK(std::abs(ys[i] - ya[i - 37]) < 1e-9);

    std::vector<double> imp(512, 0.0);
    imp[0] = 1.0;
    const auto h = apply_filter(c, std::span<const double>(imp));
    const auto ref = difference_equation(c, imp);
    for (std::size_t i = 0; i < 512; ++i) CHECK(std::abs(h[i] - ref[i]) < 1e-10);
  }
}

TEST_CASE("filter design rejects a corner above Nyquist") {
  try {
    design_bandpass(100.0, 0.5, 70.0);
    FAIL("expected CornerAboveNyquist");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CornerAboveNyquist);
  }
}

TEST_CASE("average montage") {
  std::mt19937_64 rng(9);
  const auto rec = clean_channels(full_montage_recording(256.0, 2.0, rng));
  const auto m = average_montage(rec, MontageSpec::standard());
  REQUIRE(m.rows == 23);
  REQUIRE(m.cols == 512);
  for (std::size_t t = 0; t < m.cols; ++t) {
    double sum = 0, mean = 0;
    for (std::size_t r = 0; r < 23; ++r) {
      sum += m(r, t);
      mean += rec.find(montage_labels()[r])->samples[t];
    }
    mean /= 23.0;
    CHECK(std::abs(sum) < 1e-9);
    for (std::size_t r = 0; r < 23; ++r) CHECK(m(r, t) == rec.find(montage_labels()[r])->samples[t] - mean);
  }
}

TEST_CASE("missing montage channels are named") {
  std::mt19937_64 rng(9);
  auto rec = clean_channels(full_montage_recording(256.0, 2.0, rng));
  rec.channels.erase(std::remove_if(rec.channels.begin(), rec.channels.end(),
                                    [](const ChannelSignal& c) { return c.label == "A1" || c.label == "T2"; }),
                     rec.channels.end());
  try {
    average_montage(rec, MontageSpec::standard());
    FAIL("expected MissingChannels");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingChannels);
    const std::string what = e.what();
    CHECK(what.find("A1") != std::string::npos);
    CHECK(what.find("T2") != std::string::npos);
  }
}

TEST_CASE("full preprocessing chain") {
  std::mt19937_64 rng(13);
  const auto rec = full_montage_recording(250.0, 10.0, rng);
  SignalMatrix referential;
  const auto m = preprocess_recording(rec, {}, MontageSpec::standard(), &referential);
  CHECK(m.rows == 23);
  CHECK(m.cols == 2560);
  CHECK(referential.rows == 23);
  CHECK(referential.cols == 2560);
  for (std::size_t t = 0; t < m.cols; t += 97) {
    double s = 0;
    for (std::size_t r = 0; r < 23; ++r) s += m(r, t);
    CHECK(std::abs(s) < 1e-9);
  }
  CHECK(preprocess_recording(rec) == m);
}

TEST_CASE("a 256 Hz sine passes through the chain") {
  Recording r;
  r.duration_s = 20;
  for (const auto& lab : montage_labels()) r.channels.push_back({lab, 256.0, std::vector<double>(256 * 20, 0.0)});
  // only Cz oscillates; after re-referencing it keeps 22/23 of its amplitude
  r.channels[17] = testing::sine_channel("Cz", 256.0, 20.0, 10.0, 50.0);
  const auto m = preprocess_recording(r);
  double peak = 0;
  for (std::size_t t = 256 * 10; t < m.cols; ++t) peak = std::max(peak, std::abs(m(17, t)));
  CHECK(peak == doctest::Approx(50.0 * 22.0 / 23.0).epsilon(0.01));
}
