#pragma once

#include <complex>
#include <cstddef>

// Compute kernels behind the differentiable layers. Each kernel exists twice:
// `serial` is the plain textbook loop nest kept as the reference, `parallel`
// is the OpenMP version used by training. Every parallel kernel assigns each
// output element to exactly one thread and reduces in a fixed order, so its
// result does not depend on the thread count.
//
// Layouts are row-major: activations [N, C, L], conv weights [Cout, Cin, K],
// dense activations [N, D], dense weights [Dout, Din]. Backward kernels
// accumulate (+=) into their outputs.

namespace dcae::kernels {

struct ConvShape {
  std::size_t batch, in_channels, out_channels, length, kernel;
  std::size_t pad() const { return (kernel - 1) / 2; }
};

struct DenseShape {
  std::size_t batch, in_features, out_features;
};

// Rows of length `n` (power of two) -> one-sided spectra (n/2+1 bins).
struct SpectrumShape {
  std::size_t rows, n;
  std::size_t bins() const { return n / 2 + 1; }
};

// Framed transform of rows: frames of `frame` samples every `hop`, each
// multiplied by `window` before the one-sided DFT. Output [rows, bins, frames].
struct StftShape {
  std::size_t rows, n, frame, hop;
  std::size_t frames() const { return (n - frame) / hop + 1; }
  std::size_t bins() const { return frame / 2 + 1; }
};

#define DCAE_DECLARE_KERNELS                                                                                   \
  template <typename T>                                                                                        \
  void conv1d_forward(const ConvShape& s, const T* in, const T* w, const T* b, T* out);                         \
  template <typename T>                                                                                        \
  void conv1d_backward_input(const ConvShape& s, const T* gout, const T* w, T* gin);                           \
  template <typename T>                                                                                        \
  void conv1d_backward_weight(const ConvShape& s, const T* gout, const T* in, T* gw, T* gb);                   \
  template <typename T>                                                                                        \
  void dense_forward(const DenseShape& s, const T* in, const T* w, const T* b, T* out);                        \
  template <typename T>                                                                                        \
  void dense_backward_input(const DenseShape& s, const T* gout, const T* w, T* gin);                           \
  template <typename T>                                                                                        \
  void dense_backward_weight(const DenseShape& s, const T* gout, const T* in, T* gw, T* gb);                   \
  /* spec may be null when the complex spectrum is not needed. */                                              \
  template <typename T>                                                                                        \
  void rfft_magnitude(const SpectrumShape& s, const T* x, T* mag, std::complex<double>* spec);                 \
  /* gx += d|X|/dx applied to gmag, given the stored spectrum. */                                              \
  template <typename T>                                                                                        \
  void rfft_magnitude_backward(const SpectrumShape& s, const std::complex<double>* spec, const T* mag,         \
                               const T* gmag, T* gx);                                                          \
  template <typename T>                                                                                        \
  void stft_magnitude(const StftShape& s, const double* window, const T* x, T* mag, std::complex<double>* spec); \
  template <typename T>                                                                                        \
  void stft_magnitude_backward(const StftShape& s, const double* window, const std::complex<double>* spec,      \
                               const T* mag, const T* gmag, T* gx);

namespace serial {
DCAE_DECLARE_KERNELS
}  // namespace serial

namespace parallel {
DCAE_DECLARE_KERNELS
}  // namespace parallel

#undef DCAE_DECLARE_KERNELS

// Number of worker threads the parallel kernels will use.
int max_threads();
// Caps the worker count; n <= 0 restores the runtime default.
void set_max_threads(int n);

}  // namespace dcae::kernels
