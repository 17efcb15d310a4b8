#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dcae/fft.hpp"
#include "dcae/kernels.hpp"

namespace dcae::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_max_threads(int n) {
#ifdef _OPENMP
  static const int initial = omp_get_max_threads();
  omp_set_num_threads(n > 0 ? n : initial);
#else
  (void)n;
#endif
}

namespace parallel {

namespace {

// Valid output range [lo, hi) for tap k so that t + k - pad stays in [0, L).
inline void tap_range(std::ptrdiff_t L, std::ptrdiff_t k, std::ptrdiff_t pad, std::ptrdiff_t& lo, std::ptrdiff_t& hi) {
  lo = std::max<std::ptrdiff_t>(0, pad - k);
  hi = std::min<std::ptrdiff_t>(L, L + pad - k);
}

}  // namespace

template <typename T>
void conv1d_forward(const ConvShape& s, const T* in, const T* w, const T* b, T* out) {
  const auto L = static_cast<std::ptrdiff_t>(s.length);
  const auto pad = static_cast<std::ptrdiff_t>(s.pad());
  const auto N = static_cast<std::ptrdiff_t>(s.batch);
  const auto Co = static_cast<std::ptrdiff_t>(s.out_channels);
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t n = 0; n < N; ++n)
    for (std::ptrdiff_t co = 0; co < Co; ++co) {
      T* o = out + (n * Co + co) * L;
      std::fill(o, o + L, b ? b[co] : T(0));
      for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
        const T* x = in + (static_cast<std::size_t>(n) * s.in_channels + ci) * s.length;
        const T* wk = w + (static_cast<std::size_t>(co) * s.in_channels + ci) * s.kernel;
        for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(s.kernel); ++k) {
          const T wv = wk[k];
          std::ptrdiff_t lo, hi;
          tap_range(L, k, pad, lo, hi);
          const T* xs = x + k - pad;
#pragma omp simd
          for (std::ptrdiff_t t = lo; t < hi; ++t) o[t] += wv * xs[t];
        }
      }
    }
}

template <typename T>
void conv1d_backward_input(const ConvShape& s, const T* gout, const T* w, T* gin) {
  const auto L = static_cast<std::ptrdiff_t>(s.length);
  const auto pad = static_cast<std::ptrdiff_t>(s.pad());
  const auto N = static_cast<std::ptrdiff_t>(s.batch);
  const auto Ci = static_cast<std::ptrdiff_t>(s.in_channels);
#pragma omp parallel
  {
    std::vector<T> acc(s.length);
#pragma omp for collapse(2) schedule(static)
    for (std::ptrdiff_t n = 0; n < N; ++n)
      for (std::ptrdiff_t ci = 0; ci < Ci; ++ci) {
        std::fill(acc.begin(), acc.end(), T(0));
        T* a = acc.data();
        for (std::size_t co = 0; co < s.out_channels; ++co) {
          const T* g = gout + (static_cast<std::size_t>(n) * s.out_channels + co) * s.length;
          const T* wk = w + (co * s.in_channels + static_cast<std::size_t>(ci)) * s.kernel;
          for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(s.kernel); ++k) {
            const T wv = wk[k];
            // input position x receives gout[x - k + pad]
            const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, k - pad);
            const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(L, L + k - pad);
            const T* gs = g - k + pad;
#pragma omp simd
            for (std::ptrdiff_t x = lo; x < hi; ++x) a[x] += wv * gs[x];
          }
        }
        T* dst = gin + (n * Ci + ci) * L;
#pragma omp simd
        for (std::ptrdiff_t x = 0; x < L; ++x) dst[x] += a[x];
      }
  }
}

template <typename T>
void conv1d_backward_weight(const ConvShape& s, const T* gout, const T* in, T* gw, T* gb) {
  const auto L = static_cast<std::ptrdiff_t>(s.length);
  const auto pad = static_cast<std::ptrdiff_t>(s.pad());
  const auto Co = static_cast<std::ptrdiff_t>(s.out_channels);
  const auto Ci = static_cast<std::ptrdiff_t>(s.in_channels);
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t co = 0; co < Co; ++co)
    for (std::ptrdiff_t ci = 0; ci < Ci; ++ci)
      for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(s.kernel); ++k) {
        std::ptrdiff_t lo, hi;
        tap_range(L, k, pad, lo, hi);
        T acc = 0;
        for (std::size_t n = 0; n < s.batch; ++n) {
          const T* g = gout + (n * s.out_channels + static_cast<std::size_t>(co)) * s.length;
          const T* xs = in + (n * s.in_channels + static_cast<std::size_t>(ci)) * s.length + k - pad;
          T part = 0;
#pragma omp simd reduction(+ : part)
          for (std::ptrdiff_t t = lo; t < hi; ++t) part += g[t] * xs[t];
          acc += part;
        }
        gw[(co * Ci + ci) * static_cast<std::ptrdiff_t>(s.kernel) + k] += acc;
      }
  if (gb) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t co = 0; co < Co; ++co) {
      T acc = 0;
      for (std::size_t n = 0; n < s.batch; ++n) {
        const T* g = gout + (n * s.out_channels + static_cast<std::size_t>(co)) * s.length;
        T part = 0;
#pragma omp simd reduction(+ : part)
        for (std::ptrdiff_t t = 0; t < L; ++t) part += g[t];
        acc += part;
      }
      gb[co] += acc;
    }
  }
}

template <typename T>
void dense_forward(const DenseShape& s, const T* in, const T* w, const T* b, T* out) {
  const auto N = static_cast<std::ptrdiff_t>(s.batch);
  const auto O = static_cast<std::ptrdiff_t>(s.out_features);
  const auto I = static_cast<std::ptrdiff_t>(s.in_features);
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t n = 0; n < N; ++n)
    for (std::ptrdiff_t o = 0; o < O; ++o) {
      const T* x = in + n * I;
      const T* wr = w + o * I;
      T acc = 0;
#pragma omp simd reduction(+ : acc)
      for (std::ptrdiff_t i = 0; i < I; ++i) acc += wr[i] * x[i];
      out[n * O + o] = (b ? b[o] : T(0)) + acc;
    }
}

template <typename T>
void dense_backward_input(const DenseShape& s, const T* gout, const T* w, T* gin) {
  const auto N = static_cast<std::ptrdiff_t>(s.batch);
  const auto O = static_cast<std::ptrdiff_t>(s.out_features);
  const auto I = static_cast<std::ptrdiff_t>(s.in_features);
  // Split the feature axis as well so a small batch still fans out.
  constexpr std::ptrdiff_t kBlock = 256;
  const std::ptrdiff_t blocks = (I + kBlock - 1) / kBlock;
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t n = 0; n < N; ++n)
    for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
      const std::ptrdiff_t lo = blk * kBlock, hi = std::min(I, lo + kBlock);
      T acc[kBlock] = {};
      for (std::ptrdiff_t o = 0; o < O; ++o) {
        const T g = gout[n * O + o];
        const T* wr = w + o * I;
#pragma omp simd
        for (std::ptrdiff_t i = lo; i < hi; ++i) acc[i - lo] += g * wr[i];
      }
      T* dst = gin + n * I;
      for (std::ptrdiff_t i = lo; i < hi; ++i) dst[i] += acc[i - lo];
    }
}

template <typename T>
void dense_backward_weight(const DenseShape& s, const T* gout, const T* in, T* gw, T* gb) {
  const auto N = static_cast<std::ptrdiff_t>(s.batch);
  const auto O = static_cast<std::ptrdiff_t>(s.out_features);
  const auto I = static_cast<std::ptrdiff_t>(s.in_features);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t o = 0; o < O; ++o) {
    T* dst = gw + o * I;
    T bacc = 0;
    for (std::ptrdiff_t n = 0; n < N; ++n) {
      const T g = gout[n * O + o];
      bacc += g;
      if (g == T(0)) continue;
      const T* x = in + n * I;
#pragma omp simd
      for (std::ptrdiff_t i = 0; i < I; ++i) dst[i] += g * x[i];
    }
    if (gb) gb[o] += bacc;
  }
}

// Two real rows share one complex transform: z = a + i b, and
// A[k] = (Z[k] + conj Z[-k]) / 2, B[k] = (Z[k] - conj Z[-k]) / 2i.
template <typename T>
void rfft_magnitude(const SpectrumShape& s, const T* x, T* mag, std::complex<double>* spec) {
  const FftPlan& plan = fft_plan(s.n);
  const std::size_t n = s.n, bins = s.bins();
  const auto P = static_cast<std::ptrdiff_t>((s.rows + 1) / 2);
#pragma omp parallel
  {
    std::vector<std::complex<double>> buf(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t p = 0; p < P; ++p) {
      const std::size_t ra = 2 * static_cast<std::size_t>(p), rb = ra + 1;
      const bool pair = rb < s.rows;
      const T* xa = x + ra * n;
      const T* xb = pair ? x + rb * n : nullptr;
      for (std::size_t i = 0; i < n; ++i)
        buf[i] = {static_cast<double>(xa[i]), pair ? static_cast<double>(xb[i]) : 0.0};
      plan.forward(buf);
      for (std::size_t k = 0; k < bins; ++k) {
        const std::complex<double> z = buf[k], zc = std::conj(buf[(n - k) % n]);
        const std::complex<double> A = 0.5 * (z + zc);
        const std::complex<double> dz = z - zc;
        const std::complex<double> B{0.5 * dz.imag(), -0.5 * dz.real()};
        mag[ra * bins + k] = static_cast<T>(std::sqrt(A.real() * A.real() + A.imag() * A.imag()));
        if (spec) spec[ra * bins + k] = A;
        if (pair) {
          mag[rb * bins + k] = static_cast<T>(std::sqrt(B.real() * B.real() + B.imag() * B.imag()));
          if (spec) spec[rb * bins + k] = B;
        }
      }
    }
  }
}

// d|X_k|/dx = Re FFT(conj c) with c_k = g_k X_k / |X_k| on the one-sided bins.
// Re FFT(u) = FFT(h) for the Hermitian part h_k = (u_k + conj u_-k) / 2, whose
// transform is real, so two rows again share one transform.
template <typename T>
void rfft_magnitude_backward(const SpectrumShape& s, const std::complex<double>* spec, const T* /*mag*/,
                             const T* gmag, T* gx) {
  const FftPlan& plan = fft_plan(s.n);
  const std::size_t n = s.n, bins = s.bins();
  const auto P = static_cast<std::ptrdiff_t>((s.rows + 1) / 2);
#pragma omp parallel
  {
    std::vector<std::complex<double>> ua(n), ub(n), buf(n);
    auto load = [&](std::size_t r, std::vector<std::complex<double>>& u) {
      std::fill(u.begin(), u.end(), std::complex<double>{});
      for (std::size_t k = 0; k < bins; ++k) {
        const std::complex<double> X = spec[r * bins + k];
        const double a = std::sqrt(X.real() * X.real() + X.imag() * X.imag());
        if (a == 0.0) continue;
        u[k] = std::conj(static_cast<double>(gmag[r * bins + k]) / a * X);
      }
    };
#pragma omp for schedule(static)
    for (std::ptrdiff_t p = 0; p < P; ++p) {
      const std::size_t ra = 2 * static_cast<std::size_t>(p), rb = ra + 1;
      const bool pair = rb < s.rows;
      load(ra, ua);
      if (pair) load(rb, ub);
      else std::fill(ub.begin(), ub.end(), std::complex<double>{});
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t mk = (n - k) % n;
        const std::complex<double> ha = 0.5 * (ua[k] + std::conj(ua[mk]));
        const std::complex<double> hb = 0.5 * (ub[k] + std::conj(ub[mk]));
        buf[k] = ha + std::complex<double>{-hb.imag(), hb.real()};
      }
      plan.forward(buf);
      T* da = gx + ra * n;
      for (std::size_t i = 0; i < n; ++i) da[i] += static_cast<T>(buf[i].real());
      if (pair) {
        T* db = gx + rb * n;
        for (std::size_t i = 0; i < n; ++i) db[i] += static_cast<T>(buf[i].imag());
      }
    }
  }
}

// Short frames: a windowed DFT as dense dot products vectorises far better
// than a 64-point FFT per frame. Rows [0, bins) hold w*cos, rows [bins, 2*bins) -w*sin.
template <typename T>
std::vector<T> windowed_dft_basis(const StftShape& s, const double* window) {
  const std::size_t bins = s.bins(), F = s.frame;
  std::vector<T> basis(2 * bins * F);
  for (std::size_t k = 0; k < bins; ++k)
    for (std::size_t j = 0; j < F; ++j) {
      const double ph = 2.0 * std::numbers::pi * static_cast<double>((k * j) % F) / static_cast<double>(F);
      basis[k * F + j] = static_cast<T>(window[j] * std::cos(ph));
      basis[(bins + k) * F + j] = static_cast<T>(-window[j] * std::sin(ph));
    }
  return basis;
}

// Lanes of one 512-bit register; chunks of this width keep accumulators in registers.
template <typename T>
constexpr std::size_t kLanes = 64 / sizeof(T);

// FB frames at once against a transposed basis bt[j * K + kk]; out[f * K + kk].
template <typename T, std::size_t FB>
inline void dft_frames(const T* bt, std::size_t K, std::size_t F, const T* src, std::size_t hop, T* out) {
  constexpr std::size_t L = kLanes<T>;
  for (std::size_t k0 = 0; k0 < K; k0 += L) {
    T acc[FB][L] = {};
    for (std::size_t j = 0; j < F; ++j) {
      const T* b = bt + j * K + k0;
      for (std::size_t f = 0; f < FB; ++f) {
        const T v = src[f * hop + j];
#pragma omp simd
        for (std::size_t l = 0; l < L; ++l) acc[f][l] += b[l] * v;
      }
    }
    for (std::size_t f = 0; f < FB; ++f) std::copy_n(acc[f], L, out + f * K + k0);
  }
}

// Adjoint of dft_frames: g[f * F + j] = sum_kk basis[kk * F + j] * c[kk * cs + f].
template <typename T, std::size_t FB>
inline void dft_frames_adjoint(const T* basis, std::size_t K2, std::size_t F, const T* c, std::size_t cs, T* g) {
  constexpr std::size_t L = kLanes<T>;
  for (std::size_t j0 = 0; j0 < F; j0 += L) {
    const std::size_t w = std::min(L, F - j0);
    T acc[FB][L] = {};
    if (w == L) {
      for (std::size_t kk = 0; kk < K2; ++kk) {
        const T* b = basis + kk * F + j0;
        for (std::size_t f = 0; f < FB; ++f) {
          const T cv = c[kk * cs + f];
#pragma omp simd
          for (std::size_t l = 0; l < L; ++l) acc[f][l] += b[l] * cv;
        }
      }
    } else {
      for (std::size_t kk = 0; kk < K2; ++kk)
        for (std::size_t f = 0; f < FB; ++f)
          for (std::size_t l = 0; l < w; ++l) acc[f][l] += basis[kk * F + j0 + l] * c[kk * cs + f];
    }
    for (std::size_t f = 0; f < FB; ++f) std::copy_n(acc[f], w, g + f * F + j0);
  }
}

template <typename T>
void stft_magnitude(const StftShape& s, const double* window, const T* x, T* mag, std::complex<double>* spec) {
  const std::size_t bins = s.bins(), frames = s.frames(), F = s.frame;
  constexpr std::size_t FB = 4;
  const std::size_t K = (2 * bins + kLanes<T> - 1) / kLanes<T> * kLanes<T>;
  // Transposed, zero-padded basis.
  const std::vector<T> basis = windowed_dft_basis<T>(s, window);
  std::vector<T> bt(F * K, T(0));
  for (std::size_t kk = 0; kk < 2 * bins; ++kk)
    for (std::size_t j = 0; j < F; ++j) bt[j * K + kk] = basis[kk * F + j];
  const auto R = static_cast<std::ptrdiff_t>(s.rows);
#pragma omp parallel
  {
    std::vector<T> acc(FB * K);
#pragma omp for schedule(static)
    for (std::ptrdiff_t r = 0; r < R; ++r)
      for (std::size_t m0 = 0; m0 < frames; m0 += FB) {
        const T* src = x + static_cast<std::size_t>(r) * s.n + m0 * s.hop;
        const std::size_t nb = std::min(FB, frames - m0);
        if (nb == FB)
          dft_frames<T, FB>(bt.data(), K, F, src, s.hop, acc.data());
        else
          for (std::size_t f = 0; f < nb; ++f) dft_frames<T, 1>(bt.data(), K, F, src + f * s.hop, s.hop, acc.data() + f * K);
        for (std::size_t f = 0; f < nb; ++f)
          for (std::size_t k = 0; k < bins; ++k) {
            const T re = acc[f * K + k], im = acc[f * K + bins + k];
            const std::size_t o = (static_cast<std::size_t>(r) * bins + k) * frames + m0 + f;
            mag[o] = std::sqrt(re * re + im * im);
            if (spec) spec[o] = {static_cast<double>(re), static_cast<double>(im)};
          }
      }
  }
}

template <typename T>
void stft_magnitude_backward(const StftShape& s, const double* window, const std::complex<double>* spec,
                             const T* /*mag*/, const T* gmag, T* gx) {
  const std::size_t bins = s.bins(), frames = s.frames(), F = s.frame;
  constexpr std::size_t FB = 4;
  const std::size_t K = 2 * bins;
  const std::vector<T> basis = windowed_dft_basis<T>(s, window);
  const auto R = static_cast<std::ptrdiff_t>(s.rows);
  const std::size_t per = bins * frames;
#pragma omp parallel
  {
    // c = g * X / |X| laid out [re bins | im bins][frames], then frame gradients.
    std::vector<T> c(2 * per), g(FB * F);
#pragma omp for schedule(static)
    for (std::ptrdiff_t r = 0; r < R; ++r) {
      const double* sp = reinterpret_cast<const double*>(spec + static_cast<std::size_t>(r) * per);
      const T* gm = gmag + static_cast<std::size_t>(r) * per;
      T* cre = c.data();
      T* cim = c.data() + per;
#pragma omp simd
      for (std::size_t i = 0; i < per; ++i) {
        const double re = sp[2 * i], im = sp[2 * i + 1];
        const double a = std::sqrt(re * re + im * im);
        const double q = a > 0.0 ? static_cast<double>(gm[i]) / a : 0.0;
        cre[i] = static_cast<T>(q * re);
        cim[i] = static_cast<T>(q * im);
      }
      T* row = gx + static_cast<std::size_t>(r) * s.n;
      for (std::size_t m0 = 0; m0 < frames; m0 += FB) {
        const std::size_t nb = std::min(FB, frames - m0);
        if (nb == FB)
          dft_frames_adjoint<T, FB>(basis.data(), K, F, c.data() + m0, frames, g.data());
        else
          for (std::size_t f = 0; f < nb; ++f)
            dft_frames_adjoint<T, 1>(basis.data(), K, F, c.data() + m0 + f, frames, g.data() + f * F);
        // Overlapping frames: accumulate in frame order.
        for (std::size_t f = 0; f < nb; ++f)
          for (std::size_t j = 0; j < F; ++j) row[(m0 + f) * s.hop + j] += g[f * F + j];
      }
    }
  }
}

#define DCAE_INSTANTIATE(T)                                                                                      \
  template void conv1d_forward<T>(const ConvShape&, const T*, const T*, const T*, T*);                           \
  template void conv1d_backward_input<T>(const ConvShape&, const T*, const T*, T*);                              \
  template void conv1d_backward_weight<T>(const ConvShape&, const T*, const T*, T*, T*);                         \
  template void dense_forward<T>(const DenseShape&, const T*, const T*, const T*, T*);                           \
  template void dense_backward_input<T>(const DenseShape&, const T*, const T*, T*);                              \
  template void dense_backward_weight<T>(const DenseShape&, const T*, const T*, T*, T*);                         \
  template void rfft_magnitude<T>(const SpectrumShape&, const T*, T*, std::complex<double>*);                    \
  template void rfft_magnitude_backward<T>(const SpectrumShape&, const std::complex<double>*, const T*, const T*, \
                                           T*);                                                                  \
  template void stft_magnitude<T>(const StftShape&, const double*, const T*, T*, std::complex<double>*);         \
  template void stft_magnitude_backward<T>(const StftShape&, const double*, const std::complex<double>*,         \
                                           const T*, const T*, T*);

DCAE_INSTANTIATE(float)
DCAE_INSTANTIATE(double)

}  // namespace parallel
}  // namespace dcae::kernels
