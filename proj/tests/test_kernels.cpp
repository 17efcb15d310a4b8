// OpenMP kernels against the serial reference, and the reference against plain loops.

#include <complex>

#include "dcae/kernels.hpp"
#include "dcae/spectral.hpp"
#include "doctest.h"
#include "test_support.hpp"

namespace k = dcae::kernels;

namespace {

template <typename T>
std::vector<T> rnd(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(u(rng));
  return v;
}

template <typename T>
double tol() {
  return std::is_same_v<T, float> ? 2e-4 : 1e-11;
}

template <typename T>
void check_close(const std::vector<T>& a, const std::vector<T>& b) {
  REQUIRE(a.size() == b.size());
  double scale = 1.0;
  for (auto v : a) scale = std::max(scale, std::abs(double(v)));
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
  CHECK(worst <= tol<T>() * scale);
}

const std::vector<k::ConvShape> conv_shapes = {{1, 1, 1, 7, 1}, {2, 3, 4, 16, 3}, {3, 5, 2, 33, 5}, {4, 8, 16, 64, 7}};

}  // namespace

TEST_CASE_TEMPLATE("conv1d serial matches a direct loop", T, float, double) {
  std::mt19937_64 rng(1);
  for (const auto& s : conv_shapes) {
    const auto x = rnd<T>(s.batch * s.in_channels * s.length, rng);
    const auto w = rnd<T>(s.out_channels * s.in_channels * s.kernel, rng);
    const auto b = rnd<T>(s.out_channels, rng);
    std::vector<T> y(s.batch * s.out_channels * s.length), ref(y.size());
    k::serial::conv1d_forward<T>(s, x.data(), w.data(), b.data(), y.data());
    const auto L = static_cast<long>(s.length), P = static_cast<long>(s.pad());
    for (std::size_t n = 0; n < s.batch; ++n)
      for (std::size_t o = 0; o < s.out_channels; ++o)
        for (long t = 0; t < L; ++t) {
          double acc = b[o];
          for (std::size_t i = 0; i < s.in_channels; ++i)
            for (long j = 0; j < static_cast<long>(s.kernel); ++j) {
              const long src = t + j - P;
              if (src < 0 || src >= L) continue;
              acc += double(w[(o * s.in_channels + i) * s.kernel + j]) * x[(n * s.in_channels + i) * s.length + src];
            }
          ref[(n * s.out_channels + o) * s.length + t] = static_cast<T>(acc);
        }
    check_close(y, ref);
  }
}

TEST_CASE_TEMPLATE("conv1d parallel matches serial", T, float, double) {
  std::mt19937_64 rng(2);
  for (const auto& s : conv_shapes) {
    const auto x = rnd<T>(s.batch * s.in_channels * s.length, rng);
    const auto w = rnd<T>(s.out_channels * s.in_channels * s.kernel, rng);
    const auto b = rnd<T>(s.out_channels, rng);
    const auto g = rnd<T>(s.batch * s.out_channels * s.length, rng);
    std::vector<T> ys(g.size()), yp(g.size());
    k::serial::conv1d_forward<T>(s, x.data(), w.data(), b.data(), ys.data());
    k::parallel::conv1d_forward<T>(s, x.data(), w.data(), b.data(), yp.data());
    check_close(ys, yp);

    std::vector<T> gis(x.size(), T(0.5)), gip(x.size(), T(0.5));
    k::serial::conv1d_backward_input<T>(s, g.data(), w.data(), gis.data());
    k::parallel::conv1d_backward_input<T>(s, g.data(), w.data(), gip.data());
    check_close(gis, gip);

    std::vector<T> gws(w.size(), T(0.25)), gwp(w.size(), T(0.25)), gbs(b.size()), gbp(b.size());
    k::serial::conv1d_backward_weight<T>(s, g.data(), x.data(), gws.data(), gbs.data());
    k::parallel::conv1d_backward_weight<T>(s, g.data(), x.data(), gwp.data(), gbp.data());
    check_close(gws, gwp);
    check_close(gbs, gbp);
  }
}

TEST_CASE_TEMPLATE("dense parallel matches serial", T, float, double) {
  std::mt19937_64 rng(3);
  for (const k::DenseShape s : {k::DenseShape{1, 1, 1}, k::DenseShape{3, 17, 5}, k::DenseShape{8, 300, 33}}) {
    const auto x = rnd<T>(s.batch * s.in_features, rng);
    const auto w = rnd<T>(s.out_features * s.in_features, rng);
    const auto b = rnd<T>(s.out_features, rng);
    const auto g = rnd<T>(s.batch * s.out_features, rng);
    std::vector<T> ys(g.size()), yp(g.size());
    k::serial::dense_forward<T>(s, x.data(), w.data(), b.data(), ys.data());
    k::parallel::dense_forward<T>(s, x.data(), w.data(), b.data(), yp.data());
    check_close(ys, yp);
    // no bias
    k::parallel::dense_forward<T>(s, x.data(), w.data(), nullptr, yp.data());
    for (std::size_t o = 0; o < s.out_features; ++o) {
      double acc = 0;
      for (std::size_t i = 0; i < s.in_features; ++i) acc += double(w[o * s.in_features + i]) * x[i];
      CHECK(std::abs(acc - yp[o]) <= tol<T>() * std::max(1.0, std::abs(acc)) * 10);
    }

    std::vector<T> gis(x.size()), gip(x.size());
    k::serial::dense_backward_input<T>(s, g.data(), w.data(), gis.data());
    k::parallel::dense_backward_input<T>(s, g.data(), w.data(), gip.data());
    check_close(gis, gip);
    std::vector<T> gws(w.size()), gwp(w.size()), gbs(b.size()), gbp(b.size());
    k::serial::dense_backward_weight<T>(s, g.data(), x.data(), gws.data(), gbs.data());
    k::parallel::dense_backward_weight<T>(s, g.data(), x.data(), gwp.data(), gbp.data());
    check_close(gws, gwp);
    check_close(gbs, gbp);
  }
}

TEST_CASE_TEMPLATE("rfft magnitude parallel matches serial", T, float, double) {
  std::mt19937_64 rng(4);
  // odd row counts exercise the unpaired last row of the packed transform
  for (const k::SpectrumShape s : {k::SpectrumShape{1, 8}, k::SpectrumShape{3, 64}, k::SpectrumShape{7, 512}}) {
    const auto x = rnd<T>(s.rows * s.n, rng);
    std::vector<T> ms(s.rows * s.bins()), mp(ms.size());
    std::vector<std::complex<double>> ss(ms.size()), sp(ms.size());
    k::serial::rfft_magnitude<T>(s, x.data(), ms.data(), ss.data());
    k::parallel::rfft_magnitude<T>(s, x.data(), mp.data(), sp.data());
    check_close(ms, mp);
    for (std::size_t i = 0; i < ss.size(); ++i) CHECK(std::abs(ss[i] - sp[i]) <= 1e-9 * std::max(1.0, std::abs(ss[i])));
    for (std::size_t r = 0; r < s.rows; ++r) {
      std::vector<double> row(x.begin() + r * s.n, x.begin() + (r + 1) * s.n);
      const auto ref = testing::naive_dft_magnitude(row.data(), s.n);
      for (std::size_t b = 0; b < s.bins(); ++b) CHECK(std::abs(ref[b] - mp[r * s.bins() + b]) <= tol<T>() * 10 * std::max(1.0, ref[b]));
    }

    const auto g = rnd<T>(ms.size(), rng);
    std::vector<T> gs(x.size(), T(1)), gp(x.size(), T(1));
    k::serial::rfft_magnitude_backward<T>(s, ss.data(), ms.data(), g.data(), gs.data());
    k::parallel::rfft_magnitude_backward<T>(s, sp.data(), mp.data(), g.data(), gp.data());
    check_close(gs, gp);
  }
}

TEST_CASE_TEMPLATE("stft magnitude parallel matches serial", T, float, double) {
  std::mt19937_64 rng(5);
  for (const k::StftShape s : {k::StftShape{1, 64, 64, 8}, k::StftShape{3, 128, 16, 4}, k::StftShape{5, 512, 64, 8},
                               k::StftShape{2, 100, 32, 7}}) {
    const double* win = dcae::hann_window(s.frame).data();
    const auto x = rnd<T>(s.rows * s.n, rng);
    const std::size_t m = s.rows * s.bins() * s.frames();
    std::vector<T> ms(m), mp(m);
    std::vector<std::complex<double>> ss(m), sp(m);
    k::serial::stft_magnitude<T>(s, win, x.data(), ms.data(), ss.data());
    k::parallel::stft_magnitude<T>(s, win, x.data(), mp.data(), sp.data());
    check_close(ms, mp);
    std::vector<T> mq(m);
    k::parallel::stft_magnitude<T>(s, win, x.data(), mq.data(), nullptr);
    CHECK(mq == mp);

    const auto g = rnd<T>(m, rng);
    std::vector<T> gs(x.size(), T(-1)), gp(x.size(), T(-1));
    k::serial::stft_magnitude_backward<T>(s, win, ss.data(), ms.data(), g.data(), gs.data());
    k::parallel::stft_magnitude_backward<T>(s, win, sp.data(), mp.data(), g.data(), gp.data());
    check_close(gs, gp);
  }
}

TEST_CASE("thread count does not change results") {
  std::mt19937_64 rng(6);
  const k::ConvShape s{4, 8, 8, 128, 5};
  const auto x = rnd<float>(s.batch * s.in_channels * s.length, rng);
  const auto w = rnd<float>(s.out_channels * s.in_channels * s.kernel, rng);
  const auto g = rnd<float>(s.batch * s.out_channels * s.length, rng);
  std::vector<float> a(w.size()), b(w.size()), ab(8), bb(8);
  k::set_max_threads(1);
  CHECK(k::max_threads() == 1);
  k::parallel::conv1d_backward_weight<float>(s, g.data(), x.data(), a.data(), ab.data());
  k::set_max_threads(4);
  k::parallel::conv1d_backward_weight<float>(s, g.data(), x.data(), b.data(), bb.data());
  k::set_max_threads(0);
  CHECK(a == b);
  CHECK(ab == bb);
}
