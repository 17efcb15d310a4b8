#include <numbers>

#include "dcae/error.hpp"
#include "dcae/preprocess.hpp"
#include "dcae/windowing.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace dcae;

namespace {

SignalMatrix sine_window(double amp, std::size_t rows = 23) {
  SignalMatrix w(rows, kWindowSamples);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < w.cols; ++t)
      w(r, t) = amp * std::sin(2 * std::numbers::pi * 10.0 * static_cast<double>(t) / 256.0 + 0.1 * static_cast<double>(r));
  return w;
}

std::size_t row_of(const std::string& label) {
  const auto& l = montage_labels();
  return static_cast<std::size_t>(std::find(l.begin(), l.end(), label) - l.begin());
}

}  // namespace

TEST_CASE("window segmentation") {
  CHECK(window_count(2560) == 9);
  CHECK(window_count(512) == 1);
  CHECK(window_count(767) == 1);
  CHECK(window_count(768) == 2);
  CHECK(window_count(511) == 0);

  SignalMatrix m(2, 2560);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = static_cast<double>(i);
  const auto ws = segment_windows(m);
  REQUIRE(ws.size() == 9);
  for (std::size_t k = 0; k < ws.size(); ++k) {
    CHECK(ws[k].rows == 2);
    CHECK(ws[k].cols == 512);
    CHECK(ws[k](0, 0) == m(0, k * 256));
    CHECK(ws[k](1, 511) == m(1, k * 256 + 511));
  }
  try {
    segment_windows(SignalMatrix(2, 511));
    FAIL("expected TooShort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooShort);
  }
}

TEST_CASE("plausibility screening") {
  const auto zero = plausibility_check(SignalMatrix(23, 512));
  CHECK_FALSE(zero.keep);
  CHECK(zero.reason == RejectReason::StdLow);

  CHECK(plausibility_check(sine_window(6000.0)).keep);
  const auto loud = plausibility_check(sine_window(7100.0));
  CHECK_FALSE(loud.keep);
  CHECK(loud.reason == RejectReason::StdHigh);

  // up to eight flat channels are tolerated
  auto w = sine_window(50.0);
  for (std::size_t r = 0; r < 8; ++r) std::fill(w.row(r).begin(), w.row(r).end(), 3.0);
  CHECK(plausibility_check(w).keep);
  std::fill(w.row(8).begin(), w.row(8).end(), 3.0);
  CHECK(plausibility_check(w).reason == RejectReason::StdLow);

  CHECK(channel_std(std::vector<double>{1, 3}) == doctest::Approx(1.0));
}

TEST_CASE("histogram quantiles") {
  SUBCASE("1..1000") {
    HistogramScaler s({"Cz"});
    for (int v = 1; v <= 1000; ++v) s.observe(0, v);
    const auto st = s.stats(0);
    CHECK(std::abs(st.median - 500.5) <= 1.0);
    CHECK(std::abs(st.p5 - 50.5) <= 1.0);
    CHECK(std::abs(st.p95 - 950.5) <= 1.0);
  }
  SUBCASE("constant") {
    for (double c : {-12.3, 0.0, 7.0, 431.9}) {
      HistogramScaler s({"Cz"});
      for (int i = 0; i < 500; ++i) s.observe(0, c);
      const auto st = s.stats(0);
      CHECK(std::abs(st.median - c) <= 1.0);
      CHECK(std::abs(st.p5 - c) <= 1.0);
      CHECK(std::abs(st.p95 - c) <= 1.0);
    }
  }
  SUBCASE("gaussian, a million draws") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g(0.0, 10.0);
    HistogramScaler s({"Cz"});
    for (int i = 0; i < 1000000; ++i) s.observe(0, g(rng));
    const auto st = s.stats(0);
    CHECK(std::abs(st.median) <= 0.1);
    const double spread = 2 * 1.6448536269514722 * 10.0;
    CHECK(std::abs((st.p95 - st.p5) - spread) <= 0.02 * spread);
  }
  SUBCASE("exact-sort oracle within one bin") {
    std::mt19937_64 rng(4);
    auto v = testing::uniform(20000, rng, -300, 700);
    HistogramScaler s({"Cz"});
    for (double x : v) s.observe(0, x);
    const auto st = s.stats(0);
    CHECK(std::abs(st.median - testing::sorted_quantile(v, 0.5)) <= 1.0);
    CHECK(std::abs(st.p5 - testing::sorted_quantile(v, 0.05)) <= 1.0);
    CHECK(std::abs(st.p95 - testing::sorted_quantile(v, 0.95)) <= 1.0);
  }
  SUBCASE("empty channel") {
    HistogramScaler s({"Cz", "Pz"});
    s.observe(0, 1.0);
    try {
      s.stats(1);
      FAIL("expected EmptyChannel");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyChannel);
    }
  }
}

TEST_CASE("scaler merge adds counts") {
  std::mt19937_64 rng(8);
  const auto a = testing::random_matrix(3, 512, rng, 80), b = testing::random_matrix(3, 512, rng, 300);
  HistogramScaler whole({"a", "b", "c"}), left({"a", "b", "c"}), right({"a", "b", "c"});
  whole.observe(a);
  whole.observe(b);
  left.observe(a);
  right.observe(b);
  left.merge(right);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(left.histogram(c).total() == 1024);
    CHECK(left.histogram(c).counts() == whole.histogram(c).counts());
    CHECK(left.histogram(c).first_bin() == whole.histogram(c).first_bin());
  }
}

TEST_CASE("scaler persistence") {
  testing::TempDir dir("scaler");
  std::mt19937_64 rng(2);
  HistogramScaler s({"FP1", "FP2"}, 0.5);
  s.observe(testing::random_matrix(2, 512, rng, 100));
  s.save(dir / "s.json");
  const auto t = HistogramScaler::load(dir / "s.json");
  CHECK(t.labels() == s.labels());
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(t.histogram(c).counts() == s.histogram(c).counts());
    CHECK(t.stats(c).median == s.stats(c).median);
    CHECK(t.stats(c).p95 == s.stats(c).p95);
  }
}

TEST_CASE("scaling and clipping") {
  SignalMatrix w(1, 2);
  w(0, 0) = 10;
  w(0, 1) = 100;
  const auto y = scaler_apply(std::vector<ChannelStats>{{2.0, -2.0, 6.0}}, w);
  CHECK(y(0, 0) == doctest::Approx(1.0));
  CHECK(y(0, 1) == 1.0);
  w(0, 0) = 4;
  CHECK(scaler_apply(std::vector<ChannelStats>{{2.0, -2.0, 6.0}}, w)(0, 0) == doctest::Approx(0.25));

  std::mt19937_64 rng(6);
  const auto big = testing::random_matrix(4, 512, rng, 1e4);
  std::vector<ChannelStats> st(4, {1.0, -30.0, 50.0});
  for (double v : scaler_apply(st, big).data) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }

  try {
    scaler_apply(std::vector<ChannelStats>{{1.0, 3.0, 3.0}}, SignalMatrix(1, 4));
    FAIL("expected DegenerateScale");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateScale);
  }
}

TEST_CASE("left/right electrode flip") {
  const auto& p = flip_permutation();
  for (std::size_t r = 0; r < 23; ++r) CHECK(p[p[r]] == r);
  for (const char* mid : {"Fz", "Cz", "Pz"}) CHECK(p[row_of(mid)] == row_of(mid));
  CHECK(p[row_of("FP1")] == row_of("FP2"));
  CHECK(p[row_of("T7")] == row_of("T8"));
  CHECK(p[row_of("A1")] == row_of("A2"));

  SignalMatrix w(23, 512);
  std::fill(w.row(row_of("FP1")).begin(), w.row(row_of("FP1")).end(), 1.0);
  std::fill(w.row(row_of("FP2")).begin(), w.row(row_of("FP2")).end(), 2.0);
  const auto f = flip_electrodes(w);
  CHECK(f(row_of("FP1"), 100) == 2.0);
  CHECK(f(row_of("FP2"), 100) == 1.0);

  std::mt19937_64 rng(3);
  const auto x = testing::random_matrix(23, 512, rng, 40);
  CHECK(flip_electrodes(flip_electrodes(x)) == x);
  auto copy = x.data;
  flip_electrodes_inplace<double>(copy, 512);
  CHECK(copy == flip_electrodes(x).data);

  for (double amp : {0.0, 6000.0, 7100.0}) {
    auto sw = sine_window(amp);
    CHECK(plausibility_check(sw).keep == plausibility_check(flip_electrodes(sw)).keep);
  }
}
