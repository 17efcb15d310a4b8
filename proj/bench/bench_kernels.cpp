// Serial reference kernels vs the OpenMP versions, plus one full training step.
// usage: dcae_bench [repeats]

#include <chrono>
#include <complex>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <string>
#include <vector>

#include "dcae/dcae.hpp"
#include "dcae/kernels.hpp"
#include "dcae/spectral.hpp"

using namespace dcae;
namespace k = dcae::kernels;

namespace {

template <typename F>
double best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

std::vector<float> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double max_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
  return m;
}

void row(const char* name, double ts, double tp, double diff) {
  std::printf("%-28s serial %9.3f ms  parallel %9.3f ms  x%5.2f  max|diff| %.2e\n", name, ts * 1e3, tp * 1e3, ts / tp,
              diff);
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 5;
  std::printf("threads: %d\n", k::max_threads());
  std::mt19937_64 rng(7);

  // Shapes of the full-size second encoder block at batch 32.
  const k::ConvShape cs{32, 32, 64, 512, 5};
  auto x = random_vec(cs.batch * cs.in_channels * cs.length, rng);
  auto w = random_vec(cs.out_channels * cs.in_channels * cs.kernel, rng);
  auto b = random_vec(cs.out_channels, rng);
  auto g = random_vec(cs.batch * cs.out_channels * cs.length, rng);
  std::vector<float> ys(g.size()), yp(g.size());
  double ts = best_of(reps, [&] { k::serial::conv1d_forward<float>(cs, x.data(), w.data(), b.data(), ys.data()); });
  double tp = best_of(reps, [&] { k::parallel::conv1d_forward<float>(cs, x.data(), w.data(), b.data(), yp.data()); });
  row("conv1d forward", ts, tp, max_diff(ys, yp));

  std::vector<float> gs(x.size()), gp(x.size());
  ts = best_of(reps, [&] {
    std::fill(gs.begin(), gs.end(), 0.f);
    k::serial::conv1d_backward_input<float>(cs, g.data(), w.data(), gs.data());
  });
  tp = best_of(reps, [&] {
    std::fill(gp.begin(), gp.end(), 0.f);
    k::parallel::conv1d_backward_input<float>(cs, g.data(), w.data(), gp.data());
  });
  row("conv1d backward input", ts, tp, max_diff(gs, gp));

  std::vector<float> ws(w.size()), wp(w.size()), bs(b.size()), bp(b.size());
  ts = best_of(reps, [&] {
    std::fill(ws.begin(), ws.end(), 0.f);
    std::fill(bs.begin(), bs.end(), 0.f);
    k::serial::conv1d_backward_weight<float>(cs, g.data(), x.data(), ws.data(), bs.data());
  });
  tp = best_of(reps, [&] {
    std::fill(wp.begin(), wp.end(), 0.f);
    std::fill(bp.begin(), bp.end(), 0.f);
    k::parallel::conv1d_backward_weight<float>(cs, g.data(), x.data(), wp.data(), bp.data());
  });
  row("conv1d backward weight", ts, tp, max_diff(ws, wp));

  const k::DenseShape ds{32, 16384, 500};
  auto dx = random_vec(ds.batch * ds.in_features, rng);
  auto dw = random_vec(ds.out_features * ds.in_features, rng);
  std::vector<float> dys(ds.batch * ds.out_features), dyp(dys.size());
  ts = best_of(reps, [&] { k::serial::dense_forward<float>(ds, dx.data(), dw.data(), nullptr, dys.data()); });
  tp = best_of(reps, [&] { k::parallel::dense_forward<float>(ds, dx.data(), dw.data(), nullptr, dyp.data()); });
  row("dense forward", ts, tp, max_diff(dys, dyp));

  const k::StftShape ss{32 * 23, 512, kStftFrame, kStftHop};
  auto sx = random_vec(ss.rows * ss.n, rng);
  std::vector<float> ms(ss.rows * ss.bins() * ss.frames()), mp(ms.size());
  const double* win = hann_window(kStftFrame).data();
  ts = best_of(reps, [&] { k::serial::stft_magnitude<float>(ss, win, sx.data(), ms.data(), nullptr); });
  tp = best_of(reps, [&] { k::parallel::stft_magnitude<float>(ss, win, sx.data(), mp.data(), nullptr); });
  row("stft magnitude", ts, tp, max_diff(ms, mp));

  std::vector<std::complex<double>> spec(ms.size());
  k::serial::stft_magnitude<float>(ss, win, sx.data(), ms.data(), spec.data());
  auto sg = random_vec(ms.size(), rng);
  std::vector<float> sgs(sx.size()), sgp(sx.size());
  ts = best_of(reps, [&] {
    std::fill(sgs.begin(), sgs.end(), 0.f);
    k::serial::stft_magnitude_backward<float>(ss, win, spec.data(), ms.data(), sg.data(), sgs.data());
  });
  tp = best_of(reps, [&] {
    std::fill(sgp.begin(), sgp.end(), 0.f);
    k::parallel::stft_magnitude_backward<float>(ss, win, spec.data(), ms.data(), sg.data(), sgp.data());
  });
  row("stft magnitude backward", ts, tp, max_diff(sgs, sgp));

  const k::SpectrumShape fs{32 * 23, 512};
  std::vector<float> fms(fs.rows * fs.bins()), fmp(fms.size());
  ts = best_of(reps, [&] { k::serial::rfft_magnitude<float>(fs, sx.data(), fms.data(), nullptr); });
  tp = best_of(reps, [&] { k::parallel::rfft_magnitude<float>(fs, sx.data(), fmp.data(), nullptr); });
  row("rfft magnitude", ts, tp, max_diff(fms, fmp));

  std::vector<std::complex<double>> fspec(fms.size());
  k::serial::rfft_magnitude<float>(fs, sx.data(), fms.data(), fspec.data());
  auto fg = random_vec(fms.size(), rng);
  ts = best_of(reps, [&] {
    std::fill(sgs.begin(), sgs.end(), 0.f);
    k::serial::rfft_magnitude_backward<float>(fs, fspec.data(), fms.data(), fg.data(), sgs.data());
  });
  tp = best_of(reps, [&] {
    std::fill(sgp.begin(), sgp.end(), 0.f);
    k::parallel::rfft_magnitude_backward<float>(fs, fspec.data(), fms.data(), fg.data(), sgp.data());
  });
  row("rfft magnitude backward", ts, tp, max_diff(sgs, sgp));

  // One optimiser step of the full-size model per loss mode.
  for (LossMode mode : {LossMode::TS, LossMode::TS_FT, LossMode::TS_STFT}) {
    DcaeConfig cfg;
    cfg.loss_mode = mode;
    auto state = make_train_state(cfg, 1);
    WindowSet data{23, 512, random_vec(32 * 23 * 512, rng)};
    TrainOptions opts;
    opts.epochs = 1;
    opts.batch = 32;
    const double t = best_of(1, [&] { train(state, data, opts); });
    std::printf("train step, batch 32, %-8s %9.3f ms\n", to_string(mode), t * 1e3);
  }
  return 0;
}
