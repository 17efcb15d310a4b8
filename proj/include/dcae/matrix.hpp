#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dcae {

// Dense row-major channels x time block of samples.
struct SignalMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  SignalMatrix() = default;
  SignalMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const SignalMatrix&) const = default;
};

}  // namespace dcae
