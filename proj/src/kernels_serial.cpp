#include <algorithm>
#include <cmath>
#include <vector>

#include "dcae/fft.hpp"
#include "dcae/kernels.hpp"

namespace dcae::kernels::serial {

template <typename T>
void conv1d_forward(const ConvShape& s, const T* in, const T* w, const T* b, T* out) {
  const auto L = static_cast<std::ptrdiff_t>(s.length);
  const auto pad = static_cast<std::ptrdiff_t>(s.pad());
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t co = 0; co < s.out_channels; ++co)
      for (std::ptrdiff_t t = 0; t < L; ++t) {
        T acc = b ? b[co] : T(0);
        for (std::size_t ci = 0; ci < s.in_channels; ++ci)
          for (std::size_t k = 0; k < s.kernel; ++k) {
            const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(k) - pad;
            if (src < 0 || src >= L) continue;
            acc += w[(co * s.in_channels + ci) * s.kernel + k] * in[(n * s.in_channels + ci) * s.length + src];
          }
        out[(n * s.out_channels + co) * s.length + t] = acc;
      }
}

template <typename T>
void conv1d_backward_input(const ConvShape& s, const T* gout, const T* w, T* gin) {
  const auto L = static_cast<std::ptrdiff_t>(s.length);
  const auto pad = static_cast<std::ptrdiff_t>(s.pad());
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t ci = 0; ci < s.in_channels; ++ci)
      for (std::ptrdiff_t x = 0; x < L; ++x) {
        T acc = 0;
        for (std::size_t co = 0; co < s.out_channels; ++co)
          for (std::size_t k = 0; k < s.kernel; ++k) {
            const std::ptrdiff_t t = x - static_cast<std::ptrdiff_t>(k) + pad;
            if (t < 0 || t >= L) continue;
            acc += w[(co * s.in_channels + ci) * s.kernel + k] * gout[(n * s.out_channels + co) * s.length + t];
          }
        gin[(n * s.in_channels + ci) * s.length + x] += acc;
      }
}

template <typename T>
void conv1d_backward_weight(const ConvShape& s, const T* gout, const T* in, T* gw, T* gb) {
  const auto L = static_cast<std::ptrdiff_t>(s.length);
  const auto pad = static_cast<std::ptrdiff_t>(s.pad());
  for (std::size_t co = 0; co < s.out_channels; ++co) {
    for (std::size_t ci = 0; ci < s.in_channels; ++ci)
      for (std::size_t k = 0; k < s.kernel; ++k) {
        T acc = 0;
        for (std::size_t n = 0; n < s.batch; ++n)
          for (std::ptrdiff_t t = 0; t < L; ++t) {
            const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(k) - pad;
            if (src < 0 || src >= L) continue;
            acc += gout[(n * s.out_channels + co) * s.length + t] * in[(n * s.in_channels + ci) * s.length + src];
          }
        gw[(co * s.in_channels + ci) * s.kernel + k] += acc;
      }
    if (gb) {
      T acc = 0;
      for (std::size_t n = 0; n < s.batch; ++n)
        for (std::ptrdiff_t t = 0; t < L; ++t) acc += gout[(n * s.out_channels + co) * s.length + t];
      gb[co] += acc;
    }
  }
}

template <typename T>
void dense_forward(const DenseShape& s, const T* in, const T* w, const T* b, T* out) {
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t o = 0; o < s.out_features; ++o) {
      T acc = b ? b[o] : T(0);
      for (std::size_t i = 0; i < s.in_features; ++i) acc += w[o * s.in_features + i] * in[n * s.in_features + i];
      out[n * s.out_features + o] = acc;
    }
}

template <typename T>
void dense_backward_input(const DenseShape& s, const T* gout, const T* w, T* gin) {
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t i = 0; i < s.in_features; ++i) {
      T acc = 0;
      for (std::size_t o = 0; o < s.out_features; ++o) acc += gout[n * s.out_features + o] * w[o * s.in_features + i];
      gin[n * s.in_features + i] += acc;
    }
}

template <typename T>
void dense_backward_weight(const DenseShape& s, const T* gout, const T* in, T* gw, T* gb) {
  for (std::size_t o = 0; o < s.out_features; ++o) {
    for (std::size_t i = 0; i < s.in_features; ++i) {
      T acc = 0;
      for (std::size_t n = 0; n < s.batch; ++n) acc += gout[n * s.out_features + o] * in[n * s.in_features + i];
      gw[o * s.in_features + i] += acc;
    }
    if (gb) {
      T acc = 0;
      for (std::size_t n = 0; n < s.batch; ++n) acc += gout[n * s.out_features + o];
      gb[o] += acc;
    }
  }
}

template <typename T>
void rfft_magnitude(const SpectrumShape& s, const T* x, T* mag, std::complex<double>* spec) {
  const FftPlan& plan = fft_plan(s.n);
  const std::size_t bins = s.bins();
  std::vector<std::complex<double>> buf(s.n);
  for (std::size_t r = 0; r < s.rows; ++r) {
    for (std::size_t i = 0; i < s.n; ++i) buf[i] = static_cast<double>(x[r * s.n + i]);
    plan.forward(buf);
    for (std::size_t k = 0; k < bins; ++k) {
      mag[r * bins + k] = static_cast<T>(std::abs(buf[k]));
      if (spec) spec[r * bins + k] = buf[k];
    }
  }
}

template <typename T>
void rfft_magnitude_backward(const SpectrumShape& s, const std::complex<double>* spec, const T* /*mag*/,
                             const T* gmag, T* gx) {
  const FftPlan& plan = fft_plan(s.n);
  const std::size_t bins = s.bins();
  std::vector<std::complex<double>> buf(s.n);
  for (std::size_t r = 0; r < s.rows; ++r) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (std::size_t k = 0; k < bins; ++k) {
      const std::complex<double> X = spec[r * bins + k];
      const double a = std::abs(X);
      if (a == 0.0) continue;  // subgradient 0 at a zero bin
      buf[k] = std::conj(static_cast<double>(gmag[r * bins + k]) * X / a);
    }
    plan.forward(buf);
    for (std::size_t i = 0; i < s.n; ++i) gx[r * s.n + i] += static_cast<T>(buf[i].real());
  }
}

template <typename T>
void stft_magnitude(const StftShape& s, const double* window, const T* x, T* mag, std::complex<double>* spec) {
  const FftPlan& plan = fft_plan(s.frame);
  const std::size_t bins = s.bins(), frames = s.frames();
  std::vector<std::complex<double>> buf(s.frame);
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t m = 0; m < frames; ++m) {
      const T* src = x + r * s.n + m * s.hop;
      for (std::size_t j = 0; j < s.frame; ++j) buf[j] = window[j] * static_cast<double>(src[j]);
      plan.forward(buf);
      for (std::size_t k = 0; k < bins; ++k) {
        const std::size_t o = (r * bins + k) * frames + m;
        mag[o] = static_cast<T>(std::abs(buf[k]));
        if (spec) spec[o] = buf[k];
      }
    }
}

template <typename T>
void stft_magnitude_backward(const StftShape& s, const double* window, const std::complex<double>* spec,
                             const T* /*mag*/, const T* gmag, T* gx) {
  const FftPlan& plan = fft_plan(s.frame);
  const std::size_t bins = s.bins(), frames = s.frames();
  std::vector<std::complex<double>> buf(s.frame);
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t m = 0; m < frames; ++m) {
      std::fill(buf.begin(), buf.end(), std::complex<double>{});
      for (std::size_t k = 0; k < bins; ++k) {
        const std::size_t o = (r * bins + k) * frames + m;
        const double a = std::abs(spec[o]);
        if (a == 0.0) continue;
        buf[k] = std::conj(static_cast<double>(gmag[o]) * spec[o] / a);
      }
      plan.forward(buf);
      T* dst = gx + r * s.n + m * s.hop;
      for (std::size_t j = 0; j < s.frame; ++j) dst[j] += static_cast<T>(window[j] * buf[j].real());
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

}  // namespace dcae::kernels::serial
