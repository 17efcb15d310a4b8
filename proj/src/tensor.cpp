#include "dcae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <unordered_set>

#include "dcae/error.hpp"
#include "dcae/fft.hpp"
#include "dcae/kernels.hpp"
#include "dcae/spectral.hpp"

namespace dcae::ad {

namespace k = dcae::kernels::parallel;

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool NoGradGuard::grad_enabled() { return g_grad_enabled; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto n = std::make_shared<Node<T>>();
  n->value.assign(ad::numel(shape), value);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  require(ad::numel(shape) == values.size(), ErrorCode::ShapeMismatch,
          "shape " + shape_str(shape) + " does not hold " + std::to_string(values.size()) + " values");
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return node_->ensure_grad();
}

template <typename T>
T Tensor<T>::item() const {
  require(numel() == 1, ErrorCode::ShapeMismatch, "item() on a tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
void Tensor<T>::backward() {
  require(numel() == 1, ErrorCode::ShapeMismatch, "backward() needs a scalar, got " + shape_str(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS: each node appears once, after all its parents.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node<T>* p = n->parents[i++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node<T>* n : order) n->ensure_grad();
  node_->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(shape(), values(), false);
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
Tensor<T> make_result(Shape shape, std::initializer_list<const Tensor<T>*> inputs) {
  auto n = std::make_shared<Node<T>>();
  n->value.assign(numel(shape), T(0));
  n->shape = std::move(shape);
  if (NoGradGuard::grad_enabled()) {
    for (const auto* in : inputs)
      if (in && in->defined() && in->requires_grad()) n->requires_grad = true;
    if (n->requires_grad)
      for (const auto* in : inputs)
        if (in && in->defined()) n->parents.push_back(in->node());
  }
  return Tensor<T>(n);
}

template <typename T>
T* grad_of(const Tensor<T>& t) {
  return t.defined() && t.requires_grad() ? t.node()->ensure_grad().data() : nullptr;
}

void check(bool ok, const std::string& what) { require(ok, ErrorCode::ShapeMismatch, what); }

}  // namespace

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  check(x.rank() == 3 && w.rank() == 3, "conv1d expects x [N,C,L] and w [Cout,Cin,K]");
  check(w.dim(1) == x.dim(1), "conv1d: input has " + std::to_string(x.dim(1)) + " channels, weight expects " +
                                  std::to_string(w.dim(1)));
  check(w.dim(2) % 2 == 1, "conv1d: kernel size must be odd");
  check(!b.defined() || (b.rank() == 1 && b.dim(0) == w.dim(0)), "conv1d: bias must be [Cout]");
  const kernels::ConvShape s{x.dim(0), x.dim(1), w.dim(0), x.dim(2), w.dim(2)};
  auto out = make_result<T>({s.batch, s.out_channels, s.length}, {&x, &w, &b});
  k::conv1d_forward<T>(s, x.value().data(), w.value().data(), b.defined() ? b.value().data() : nullptr,
                       out.value().data());
  if (out.requires_grad()) {
    Node<T>* o = out.node().get();
    Tensor<T> xs = x, ws = w, bs = b;
    o->backward = [o, s, xs, ws, bs]() {
      if (T* gx = grad_of(xs)) k::conv1d_backward_input<T>(s, o->grad.data(), ws.value().data(), gx);
      T* gw = grad_of(ws);
      T* gb = grad_of(bs);
      if (gw) k::conv1d_backward_weight<T>(s, o->grad.data(), xs.value().data(), gw, gb);
      else if (gb) {
        for (std::size_t n = 0; n < s.batch; ++n)
          for (std::size_t c = 0; c < s.out_channels; ++c)
            for (std::size_t t = 0; t < s.length; ++t) gb[c] += o->grad[(n * s.out_channels + c) * s.length + t];
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  check(x.rank() == 2 && w.rank() == 2 && w.dim(1) == x.dim(1),
        "dense: x " + shape_str(x.shape()) + " incompatible with w " + shape_str(w.shape()));
  check(!b.defined() || (b.rank() == 1 && b.dim(0) == w.dim(0)), "dense: bias must be [Dout]");
  const kernels::DenseShape s{x.dim(0), x.dim(1), w.dim(0)};
  auto out = make_result<T>({s.batch, s.out_features}, {&x, &w, &b});
  k::dense_forward<T>(s, x.value().data(), w.value().data(), b.defined() ? b.value().data() : nullptr,
                      out.value().data());
  if (out.requires_grad()) {
    Node<T>* o = out.node().get();
    Tensor<T> xs = x, ws = w, bs = b;
    o->backward = [o, s, xs, ws, bs]() {
      if (T* gx = grad_of(xs)) k::dense_backward_input<T>(s, o->grad.data(), ws.value().data(), gx);
      T* gw = grad_of(ws);
      T* gb = grad_of(bs);
      if (gw) k::dense_backward_weight<T>(s, o->grad.data(), xs.value().data(), gw, gb);
      else if (gb) {
        for (std::size_t n = 0; n < s.batch; ++n)
          for (std::size_t j = 0; j < s.out_features; ++j) gb[j] += o->grad[n * s.out_features + j];
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps,
                           std::vector<double>* mean_out, std::vector<double>* var_out) {
  check(x.rank() == 3, "batch_norm expects [N,C,L]");
  const std::size_t N = x.dim(0), C = x.dim(1), L = x.dim(2), M = N * L;
  check(gamma.numel() == C && beta.numel() == C, "batch_norm: affine parameters must have C entries");
  require(M > 1, ErrorCode::DegenerateBatch, "train-mode batch norm needs N*L > 1");

  auto out = make_result<T>(x.shape(), {&x, &gamma, &beta});
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(C);
  std::vector<double> mean(C), var(C);
  const T* xv = x.value().data();
  T* ov = out.value().data();
  const auto Cs = static_cast<std::ptrdiff_t>(C);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < Cs; ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    double s = 0.0;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t t = 0; t < L; ++t) s += xv[(n * C + c) * L + t];
    const double mu = s / static_cast<double>(M);
    double ss = 0.0;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t t = 0; t < L; ++t) {
        const double d = xv[(n * C + c) * L + t] - mu;
        ss += d * d;
      }
    const double v = ss / static_cast<double>(M);
    const double is = 1.0 / std::sqrt(v + eps);
    mean[c] = mu;
    var[c] = v;
    (*inv_std)[c] = is;
    const double g = gamma.value()[c], bt = beta.value()[c];
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t i = (n * C + c) * L + t;
        const double h = (xv[i] - mu) * is;
        (*xhat)[i] = static_cast<T>(h);
        ov[i] = static_cast<T>(g * h + bt);
      }
  }
  if (mean_out) *mean_out = mean;
  if (var_out) *var_out = var;

  if (out.requires_grad()) {
    Node<T>* o = out.node().get();
    Tensor<T> xs = x, gs = gamma, bs = beta;
    o->backward = [o, xs, gs, bs, xhat, inv_std, N, C, L, M]() {
      T* gx = grad_of(xs);
      T* gg = grad_of(gs);
      T* gb = grad_of(bs);
      const T* gy = o->grad.data();
      const auto Cs = static_cast<std::ptrdiff_t>(C);
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t ci = 0; ci < Cs; ++ci) {
        const auto c = static_cast<std::size_t>(ci);
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t t = 0; t < L; ++t) {
            const std::size_t i = (n * C + c) * L + t;
            sum_dy += gy[i];
            sum_dy_xhat += static_cast<double>(gy[i]) * (*xhat)[i];
          }
        if (gg) gg[c] += static_cast<T>(sum_dy_xhat);
        if (gb) gb[c] += static_cast<T>(sum_dy);
        if (gx) {
          const double g = gs.value()[c];
          const double k = g * (*inv_std)[c] / static_cast<double>(M);
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t t = 0; t < L; ++t) {
              const std::size_t i = (n * C + c) * L + t;
              gx[i] += static_cast<T>(k * (static_cast<double>(M) * gy[i] - sum_dy - (*xhat)[i] * sum_dy_xhat));
            }
        }
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          std::span<const double> running_mean, std::span<const double> running_var, double eps) {
  check(x.rank() == 3, "batch_norm expects [N,C,L]");
  const std::size_t N = x.dim(0), C = x.dim(1), L = x.dim(2);
  check(gamma.numel() == C && beta.numel() == C && running_mean.size() == C && running_var.size() == C,
        "batch_norm: per-channel parameters must have C entries");
  auto out = make_result<T>(x.shape(), {&x, &gamma, &beta});
  auto scale_c = std::make_shared<std::vector<double>>(C);
  for (std::size_t c = 0; c < C; ++c) (*scale_c)[c] = 1.0 / std::sqrt(running_var[c] + eps);
  std::vector<double> mean(running_mean.begin(), running_mean.end());
  const T* xv = x.value().data();
  T* ov = out.value().data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const double a = gamma.value()[c] * (*scale_c)[c];
      const double b = beta.value()[c] - a * mean[c];
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t i = (n * C + c) * L + t;
        ov[i] = static_cast<T>(a * xv[i] + b);
      }
    }
  if (out.requires_grad()) {
    Node<T>* o = out.node().get();
    Tensor<T> xs = x, gs = gamma, bs = beta;
    o->backward = [o, xs, gs, bs, scale_c, mean, N, C, L]() {
      T* gx = grad_of(xs);
      T* gg = grad_of(gs);
      T* gb = grad_of(bs);
      const T* gy = o->grad.data();
      for (std::size_t c = 0; c < C; ++c) {
        const double sc = (*scale_c)[c];
        const double a = gs.value()[c] * sc;
        double sdy = 0.0, sdyh = 0.0;
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t t = 0; t < L; ++t) {
            const std::size_t i = (n * C + c) * L + t;
            sdy += gy[i];
            sdyh += gy[i] * (xs.value()[i] - mean[c]) * sc;
            if (gx) gx[i] += static_cast<T>(a * gy[i]);
          }
        if (gg) gg[c] += static_cast<T>(sdyh);
        if (gb) gb[c] += static_cast<T>(sdy);
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  auto out = make_result<T>(x.shape(), {&x});
  const auto xv = x.value();
  auto ov = out.value();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] > T(0) ? xv[i] : T(0);
  if (out.requires_grad()) {
    Node<T>* o = out.node().get();
    Tensor<T> xs = x;
    o->backward = [o, xs]() {
      T* gx = grad_of(xs);
      const T* xv = xs.value().data();
      const T* go = o->grad.data();
      const std::size_t n = o->grad.size();
#pragma omp simd
      for (std::size_t i = 0; i < n; ++i) gx[i] += xv[i] > T(0) ? go[i] : T(0);
    };
  }
  return out;
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  auto out = make_result<T>(x.shape(), {&x});
  const auto xv = x.value();
  auto ov = out.value();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = std::tanh(xv[i]);
  if (out.requires_grad()) {
    Node<T>* o = out.node().get();
    Tensor<T> xs = x;
    o->backward = [o, xs]() {
      T* gx = grad_of(xs);
      for (std::size_t i = 0; i < o->value.size(); ++i) gx[i] += o->grad[i] * (T(1) - o->value[i] * o->value[i]);
    };
  }
  return out;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::uint64_t seed) {
  require(rate >= 0.0 && rate < 1.0, ErrorCode::InvalidArgument, "dropout rate must lie in [0, 1)");
  auto out = make_result<T>(x.shape(), {&x});
  auto mask = std::make_shared<std::vector<T>>(x.numel());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  // splitmix64 stream: cheap, seedable, identical on every platform. Element i
  // uses state seed + (i + 1) * gamma, so the loop has no carried state.
  const std::size_t n = mask->size();
  T* mk = mask->data();
  const std::uint64_t threshold = static_cast<std::uint64_t>(std::ceil(rate * 0x1.0p53));
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t z = seed + (static_cast<std::uint64_t>(i) + 1) * 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    // (z >> 11) * 2^-53 < rate, in integers.
    mk[i] = (z >> 11) < threshold ? T(0) : keep_scale;
  }
  const T* xv = x.value().data();
  T* ov = out.value().data();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] * mk[i];
  if (out.requires_grad()) {
    Node<T>* o = out.node().get();
    Tensor<T> xs = x;
    o->backward = [o, xs, mask]() {
      T* gx = grad_of(xs);
      const T* mk = mask->data();
      const T* go = o->grad.data();
#pragma omp simd
      for (std::size_t i = 0; i < mask->size(); ++i) gx[i] += go[i] * mk[i];
    };
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x) {
  check(x.rank() >= 1, "maxpool2 needs at least one axis");
  const std::size_t L = x.shape().back();
  require(L % 2 == 0, ErrorCode::OddLength, "maxpool2 needs an even length, got " + std::to_string(L));
  Shape shape = x.shape();
  shape.back() = L / 2;
  auto out = make_result<T>(shape, {&x});
  auto arg = std::make_shared<std::vector<std::uint32_t>>(out.numel());
  const auto xv = x.value();
  auto ov = out.value();
  for (std::size_t j = 0; j < ov.size(); ++j) {
    const std::size_t i = 2 * j;
    const bool second = xv[i + 1] > xv[i];
    (*arg)[j] = static_cast<std::uint32_t>(second ? i + 1 : i);
    ov[j] = second ? xv[i + 1] : xv[i];
  }
  if (out.requires_grad()) {
    Node<T>* o = out.node().get();
    Tensor<T> xs = x;
    o->backward = [o, xs, arg]() {
      T* gx = grad_of(xs);
      for (std::size_t j = 0; j < arg->size(); ++j) gx[(*arg)[j]] += o->grad[j];
    };
  }
  return out;
}

template <typename T>
Tensor<T> upsample2(const Tensor<T>& x) {
  check(x.rank() >= 1, "upsample2 needs at least one axis");
  Shape shape = x.shape();
  shape.back() *= 2;
  auto out = make_result<T>(shape, {&x});
  const auto xv = x.value();
  auto ov = out.value();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[2 * i] = ov[2 * i + 1] = xv[i];
  if (out.requires_grad()) {
    Node<T>* o = out.node().get();
    Tensor<T> xs = x;
    o->backward = [o, xs]() {
      T* gx = grad_of(xs);
      for (std::size_t i = 0; i < xs.numel(); ++i) gx[i] += o->grad[2 * i] + o->grad[2 * i + 1];
    };
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  check(numel(shape) == x.numel(), "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  auto out = make_result<T>(std::move(shape), {&x});
  std::copy(x.value().begin(), x.value().end(), out.value().begin());
  if (out.requires_grad()) {
    Node<T>* o = out.node().get();
    Tensor<T> xs = x;
    o->backward = [o, xs]() {
      T* gx = grad_of(xs);
      for (std::size_t i = 0; i < o->grad.size(); ++i) gx[i] += o->grad[i];
    };
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), "add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  auto out = make_result<T>(a.shape(), {&a, &b});
  for (std::size_t i = 0; i < a.numel(); ++i) out.value()[i] = a.value()[i] + b.value()[i];
  if (out.requires_grad()) {
    Node<T>* o = out.node().get();
    Tensor<T> as = a, bs = b;
    o->backward = [o, as, bs]() {
      if (T* ga = grad_of(as))
        for (std::size_t i = 0; i < o->grad.size(); ++i) ga[i] += o->grad[i];
      if (T* gb = grad_of(bs))
        for (std::size_t i = 0; i < o->grad.size(); ++i) gb[i] += o->grad[i];
    };
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double factor) {
  auto out = make_result<T>(a.shape(), {&a});
  for (std::size_t i = 0; i < a.numel(); ++i) out.value()[i] = static_cast<T>(factor * a.value()[i]);
  if (out.requires_grad()) {
    Node<T>* o = out.node().get();
    Tensor<T> as = a;
    o->backward = [o, as, factor]() {
      T* ga = grad_of(as);
      for (std::size_t i = 0; i < o->grad.size(); ++i) ga[i] += static_cast<T>(factor * o->grad[i]);
    };
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  auto out = make_result<T>({}, {&a});
  double s = 0.0;
  for (T v : a.value()) s += v;
  out.value()[0] = static_cast<T>(s);
  if (out.requires_grad()) {
    Node<T>* o = out.node().get();
    Tensor<T> as = a;
    o->backward = [o, as]() {
      T* ga = grad_of(as);
      for (std::size_t i = 0; i < as.numel(); ++i) ga[i] += o->grad[0];
    };
  }
  return out;
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), "l1_loss: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  require(a.numel() > 0, ErrorCode::ShapeMismatch, "l1_loss of empty tensors");
  auto out = make_result<T>({}, {&a, &b});
  double s = 0.0;
  const auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < av.size(); ++i) s += std::abs(static_cast<double>(av[i]) - static_cast<double>(bv[i]));
  const double n = static_cast<double>(av.size());
  out.value()[0] = static_cast<T>(s / n);
  if (out.requires_grad()) {
    Node<T>* o = out.node().get();
    Tensor<T> as = a, bs = b;
    o->backward = [o, as, bs, n]() {
      const T g = static_cast<T>(o->grad[0] / n);
      T* ga = grad_of(as);
      T* gb = grad_of(bs);
      const T* av = as.value().data();
      const T* bv = bs.value().data();
      const std::size_t m = as.numel();
      auto sign = [g](T d) { return d > T(0) ? g : (d < T(0) ? -g : T(0)); };
      if (ga) {
#pragma omp simd
        for (std::size_t i = 0; i < m; ++i) ga[i] += sign(av[i] - bv[i]);
      }
      if (gb) {
#pragma omp simd
        for (std::size_t i = 0; i < m; ++i) gb[i] -= sign(av[i] - bv[i]);
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> rfft_magnitude(const Tensor<T>& x) {
  check(x.rank() >= 1, "rfft_magnitude needs at least one axis");
  const std::size_t n = x.shape().back();
  require(is_power_of_two(n), ErrorCode::InvalidArgument, "rfft length must be a power of two");
  const kernels::SpectrumShape s{x.numel() / n, n};
  Shape shape = x.shape();
  shape.back() = s.bins();
  auto out = make_result<T>(shape, {&x});
  auto spec = out.requires_grad() ? std::make_shared<std::vector<std::complex<double>>>(out.numel()) : nullptr;
  k::rfft_magnitude<T>(s, x.value().data(), out.value().data(), spec ? spec->data() : nullptr);
  if (out.requires_grad()) {
    Node<T>* o = out.node().get();
    Tensor<T> xs = x;
    o->backward = [o, xs, spec, s]() {
      k::rfft_magnitude_backward<T>(s, spec->data(), o->value.data(), o->grad.data(), grad_of(xs));
    };
  }
  return out;
}

template <typename T>
Tensor<T> stft_magnitude(const Tensor<T>& x, std::size_t frame, std::size_t hop) {
  check(x.rank() >= 1, "stft_magnitude needs at least one axis");
  const std::size_t n = x.shape().back();
  require(is_power_of_two(frame) && hop > 0 && n >= frame, ErrorCode::InvalidArgument,
          "stft needs a power-of-two frame no longer than the signal");
  const kernels::StftShape s{x.numel() / n, n, frame, hop};
  Shape shape = x.shape();
  shape.back() = s.bins();
  shape.push_back(s.frames());
  auto out = make_result<T>(shape, {&x});
  const double* win = hann_window(frame).data();
  auto spec = out.requires_grad() ? std::make_shared<std::vector<std::complex<double>>>(out.numel()) : nullptr;
  k::stft_magnitude<T>(s, win, x.value().data(), out.value().data(), spec ? spec->data() : nullptr);
  if (out.requires_grad()) {
    Node<T>* o = out.node().get();
    Tensor<T> xs = x;
    o->backward = [o, xs, spec, s, win]() {
      k::stft_magnitude_backward<T>(s, win, spec->data(), o->value.data(), o->grad.data(), grad_of(xs));
    };
  }
  return out;
}

template <typename T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t lo, std::size_t hi) {
  check(x.rank() >= 1, "slice_last needs at least one axis");
  const std::size_t n = x.shape().back();
  require(lo <= hi && hi < n, ErrorCode::MaskOutOfRange,
          "slice [" + std::to_string(lo) + ", " + std::to_string(hi) + "] outside axis of " + std::to_string(n));
  const std::size_t w = hi - lo + 1, rows = x.numel() / n;
  Shape shape = x.shape();
  shape.back() = w;
  auto out = make_result<T>(shape, {&x});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.value().data() + r * n + lo, w, out.value().data() + r * w);
  if (out.requires_grad()) {
    Node<T>* o = out.node().get();
    Tensor<T> xs = x;
    o->backward = [o, xs, rows, n, w, lo]() {
      T* gx = grad_of(xs);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < w; ++j) gx[r * n + lo + j] += o->grad[r * w + j];
    };
  }
  return out;
}

template <typename T>
Tensor<T> divide_rows(const Tensor<T>& x, std::span<const double> divisors) {
  check(x.rank() >= 1 && x.dim(0) == divisors.size(), "divide_rows: one divisor per leading index required");
  const std::size_t per = x.dim(0) ? x.numel() / x.dim(0) : 0;
  auto out = make_result<T>(x.shape(), {&x});
  auto inv = std::make_shared<std::vector<double>>(divisors.size());
  for (std::size_t r = 0; r < divisors.size(); ++r) (*inv)[r] = 1.0 / divisors[r];
  for (std::size_t r = 0; r < divisors.size(); ++r)
    for (std::size_t j = 0; j < per; ++j)
      out.value()[r * per + j] = static_cast<T>(x.value()[r * per + j] * (*inv)[r]);
  if (out.requires_grad()) {
    Node<T>* o = out.node().get();
    Tensor<T> xs = x;
    o->backward = [o, xs, inv, per]() {
      T* gx = grad_of(xs);
      for (std::size_t r = 0; r < inv->size(); ++r)
        for (std::size_t j = 0; j < per; ++j) gx[r * per + j] += static_cast<T>(o->grad[r * per + j] * (*inv)[r]);
    };
  }
  return out;
}

#define DCAE_INSTANTIATE(T)                                                                                      \
  template class Tensor<T>;                                                                                      \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> batch_norm_train(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double,              \
                                      std::vector<double>*, std::vector<double>*);                               \
  template Tensor<T> batch_norm_eval(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                       \
                                     std::span<const double>, std::span<const double>, double);                  \
  template Tensor<T> relu(const Tensor<T>&);                                                                     \
  template Tensor<T> tanh(const Tensor<T>&);                                                                     \
  template Tensor<T> dropout(const Tensor<T>&, double, std::uint64_t);                                           \
  template Tensor<T> maxpool2(const Tensor<T>&);                                                                 \
  template Tensor<T> upsample2(const Tensor<T>&);                                                                \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                           \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                    \
  template Tensor<T> scale(const Tensor<T>&, double);                                                            \
  template Tensor<T> sum(const Tensor<T>&);                                                                      \
  template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&);                                                \
  template Tensor<T> rfft_magnitude(const Tensor<T>&);                                                           \
  template Tensor<T> stft_magnitude(const Tensor<T>&, std::size_t, std::size_t);                                 \
  template Tensor<T> slice_last(const Tensor<T>&, std::size_t, std::size_t);                                    \
  template Tensor<T> divide_rows(const Tensor<T>&, std::span<const double>);

DCAE_INSTANTIATE(float)
DCAE_INSTANTIATE(double)

}  // namespace dcae::ad
