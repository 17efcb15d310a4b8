#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

// Minimal reverse-mode differentiable tensor. A Tensor is a cheap handle to a
// graph node; operations on tensors that require gradients record a backward
// closure, and Tensor::backward() replays them in reverse topological order.

namespace dcae::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward;

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool grad_enabled();

 private:
  bool prev_;
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<T> value() { return node_->value; }
  std::span<const T> value() const { return node_->value; }
  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }
  // Zero-filled span when no gradient has reached this tensor yet.
  std::span<const T> grad() const;
  std::vector<T>& grad_storage() { return node_->ensure_grad(); }
  T item() const;

  void zero_grad();
  // Seeds d(this)/d(this) = 1; this must be a scalar.
  void backward();

  // Same storage of values, cut from the graph.
  Tensor detach() const;

  std::shared_ptr<Node<T>> node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<Node<T>> node_;
};

// ---------------------------------------------------------------------------
// Operations. Shapes: activations [N, C, L]; dense activations [N, D].

// 'same' zero padding, stride 1, odd kernel. w: [Cout, Cin, K], b: [Cout].
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// x: [N, Din], w: [Dout, Din], b: [Dout].
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// Train-mode batch normalisation over (N, L) per channel. Writes the biased
// batch mean and variance used for normalising into mean_out / var_out.
template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps,
                           std::vector<double>* mean_out = nullptr, std::vector<double>* var_out = nullptr);

template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          std::span<const double> running_mean, std::span<const double> running_var, double eps);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> tanh(const Tensor<T>& x);

// Inverted dropout with a mask drawn from `seed`.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::uint64_t seed);

// Window 2, stride 2 over the last axis; ties go to the first element.
template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x);

// Nearest-neighbour x2 along the last axis.
template <typename T>
Tensor<T> upsample2(const Tensor<T>& x);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& a);

// mean |a - b| over all elements, accumulated in double.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b);

// |rfft| along the last axis (power-of-two length): [..., T] -> [..., T/2+1].
template <typename T>
Tensor<T> rfft_magnitude(const Tensor<T>& x);

// Hann-framed |rfft| along the last axis: [..., T] -> [..., frame/2+1, frames].
template <typename T>
Tensor<T> stft_magnitude(const Tensor<T>& x, std::size_t frame, std::size_t hop);

// Inclusive slice [lo, hi] of the last axis.
template <typename T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t lo, std::size_t hi);

// x[n, ...] / divisors[n]; divisors are constants.
template <typename T>
Tensor<T> divide_rows(const Tensor<T>& x, std::span<const double> divisors);

}  // namespace dcae::ad
