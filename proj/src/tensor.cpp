#include "benet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace benet {

namespace detail {

namespace {
std::atomic<std::uint64_t> g_seq{0};
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool b) { g_grad_enabled = b; }

}  // namespace detail

NoGradGuard::NoGradGuard() : prev_(detail::grad_enabled()) {
  detail::set_grad_enabled(false);
}
NoGradGuard::~NoGradGuard() { detail::set_grad_enabled(prev_); }

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

namespace {

using detail::Node;

std::int64_t numel_of(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

void check_shape(const std::vector<int>& shape) {
  for (int e : shape) {
    if (e <= 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
  }
}

std::shared_ptr<Node> new_node(std::vector<int> shape, std::vector<real> values) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->seq = ++detail::g_seq;
  return n;
}

// Wires the result into the graph when recording is active and any parent
// requires grad; otherwise the result is a detached constant.
Tensor make_result(std::vector<int> shape, std::vector<real> values,
                   std::vector<Tensor> parents, std::function<void(Node&)> backprop) {
  auto n = new_node(std::move(shape), std::move(values));
  bool track = false;
  if (detail::grad_enabled()) {
    for (const auto& p : parents) track = track || p.requires_grad();
  }
  if (track) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backprop = std::move(backprop);
  }
  return Tensor(std::move(n));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  check_shape(shape);
  std::vector<real> v(static_cast<size_t>(numel_of(shape)), real(0));
  auto n = new_node(std::move(shape), std::move(v));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, real value, bool requires_grad) {
  check_shape(shape);
  std::vector<real> v(static_cast<size_t>(numel_of(shape)), value);
  auto n = new_node(std::move(shape), std::move(v));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from(std::vector<int> shape, std::vector<real> values, bool requires_grad) {
  check_shape(shape);
  if (numel_of(shape) != static_cast<std::int64_t>(values.size())) {
    throw std::invalid_argument("Tensor::from: " + std::to_string(values.size()) +
                                " values for shape " + shape_str(shape));
  }
  auto n = new_node(std::move(shape), std::move(values));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(real value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

const std::vector<real>& Tensor::grad() const {
  node_->grad_data();
  return node_->grad;
}

std::vector<real>& Tensor::grad_mut() {
  node_->grad_data();
  return node_->grad;
}

void Tensor::zero_grad() {
  node_->grad.assign(node_->values.size(), real(0));
}

real Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("item(): tensor has " + std::to_string(numel()) + " elements");
  }
  return node_->values[0];
}

// ---- elementwise ------------------------------------------------------------

namespace {

template <typename F, typename B>
Tensor binary_same_shape(const Tensor& a, const Tensor& b, const char* name, F&& f, B&& backprop) {
  require_same_shape(a, b, name);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<real> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i]);
  return make_result(a.shape(), std::move(out), {a, b}, std::forward<B>(backprop));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_same_shape(a, b, "add", [](real x, real y) { return x + y; },
      [](Node& self) {
        for (int k = 0; k < 2; ++k) {
          Node& p = *self.parents[static_cast<size_t>(k)];
          if (!p.requires_grad) continue;
          real* g = p.grad_data();
          for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_same_shape(a, b, "sub", [](real x, real y) { return x - y; },
      [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
          real* g = pa.grad_data();
          for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
        if (pb.requires_grad) {
          real* g = pb.grad_data();
          for (size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
        }
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_same_shape(a, b, "mul", [](real x, real y) { return x * y; },
      [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
          real* g = pa.grad_data();
          for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pb.values[i];
        }
        if (pb.requires_grad) {
          real* g = pb.grad_data();
          for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pa.values[i];
        }
      });
}

namespace {

template <typename F, typename B>
Tensor unary(const Tensor& a, F&& f, B&& backprop) {
  const auto& av = a.values();
  std::vector<real> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return make_result(a.shape(), std::move(out), {a}, std::forward<B>(backprop));
}

// Backward for ops whose local derivative depends only on (x, y).
template <typename D>
auto unary_backward(D dfdx) {
  return [dfdx](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    real* g = p.grad_data();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      g[i] += self.grad[i] * dfdx(p.values[i], self.values[i]);
    }
  };
}

}  // namespace

Tensor add_scalar(const Tensor& a, real c) {
  return unary(a, [c](real x) { return x + c; },
               unary_backward([](real, real) { return real(1); }));
}

Tensor mul_scalar(const Tensor& a, real c) {
  return unary(a, [c](real x) { return x * c; },
               [c](Node& self) {
                 Node& p = *self.parents[0];
                 if (!p.requires_grad) return;
                 real* g = p.grad_data();
                 for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * c;
               });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, real(-1)); }

Tensor abs(const Tensor& a) {
  // Subgradient 0 at x == 0.
  return unary(a, [](real x) { return std::abs(x); },
               unary_backward([](real x, real) { return x > 0 ? real(1) : (x < 0 ? real(-1) : real(0)); }));
}

Tensor relu(const Tensor& a) {
  return unary(a, [](real x) { return x > 0 ? x : real(0); },
               unary_backward([](real x, real) { return x > 0 ? real(1) : real(0); }));
}

Tensor sigmoid(const Tensor& a) {
  return unary(a,
               [](real x) {
                 if (x >= 0) return real(1) / (real(1) + std::exp(-x));
                 real e = std::exp(x);
                 return e / (real(1) + e);
               },
               unary_backward([](real, real y) { return y * (real(1) - y); }));
}

Tensor exp(const Tensor& a) {
  return unary(a, [](real x) { return std::exp(x); },
               unary_backward([](real, real y) { return y; }));
}

Tensor log(const Tensor& a) {
  return unary(a, [](real x) { return std::log(x); },
               unary_backward([](real x, real) { return real(1) / x; }));
}

Tensor sqrt(const Tensor& a) {
  return unary(a, [](real x) { return std::sqrt(x); },
               unary_backward([](real, real y) { return real(0.5) / y; }));
}

Tensor reciprocal(const Tensor& a) {
  return unary(a, [](real x) { return real(1) / x; },
               unary_backward([](real, real y) { return -y * y; }));
}

Tensor clamp(const Tensor& a, real lo, real hi) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  return unary(a, [lo, hi](real x) { return std::min(std::max(x, lo), hi); },
               [lo, hi](Node& self) {
                 Node& p = *self.parents[0];
                 if (!p.requires_grad) return;
                 real* g = p.grad_data();
                 for (size_t i = 0; i < self.grad.size(); ++i) {
                   if (p.values[i] >= lo && p.values[i] <= hi) g[i] += self.grad[i];
                 }
               });
}

Tensor clamp_min(const Tensor& a, real lo) {
  return unary(a, [lo](real x) { return std::max(x, lo); },
               [lo](Node& self) {
                 Node& p = *self.parents[0];
                 if (!p.requires_grad) return;
                 real* g = p.grad_data();
                 for (size_t i = 0; i < self.grad.size(); ++i) {
                   if (p.values[i] >= lo) g[i] += self.grad[i];
                 }
               });
}

// ---- reductions / linear algebra ---------------------------------------------

Tensor sum(const Tensor& a) {
  real acc = 0;
  for (real x : a.values()) acc += x;
  return make_result({1}, {acc}, {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    real* g = p.grad_data();
    const real dy = self.grad[0];
    for (size_t i = 0; i < p.values.size(); ++i) g[i] += dy;
  });
}

Tensor mean(const Tensor& a) {
  const real inv = real(1) / static_cast<real>(a.numel());
  real acc = 0;
  for (real x : a.values()) acc += x;
  return make_result({1}, {acc * inv}, {a}, [inv](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    real* g = p.grad_data();
    const real dy = self.grad[0] * inv;
    for (size_t i = 0; i < p.values.size(); ++i) g[i] += dy;
  });
}

Tensor sum_axis(const Tensor& a, int axis) {
  const auto& shape = a.shape();
  if (axis < 0 || axis >= a.dim()) throw std::invalid_argument("sum_axis: bad axis");
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < a.dim(); ++i) inner *= shape[static_cast<size_t>(i)];
  const std::int64_t n = shape[static_cast<size_t>(axis)];

  std::vector<int> out_shape;
  for (int i = 0; i < a.dim(); ++i) {
    if (i != axis) out_shape.push_back(shape[static_cast<size_t>(i)]);
  }
  if (out_shape.empty()) out_shape.push_back(1);

  std::vector<real> out(static_cast<size_t>(outer * inner), real(0));
  const real* src = a.values().data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t k = 0; k < n; ++k) {
      const real* row = src + (o * n + k) * inner;
      real* dst = out.data() + o * inner;
      for (std::int64_t i = 0; i < inner; ++i) dst[i] += row[i];
    }
  }
  return make_result(std::move(out_shape), std::move(out), {a},
                     [outer, inner, n](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       real* g = p.grad_data();
                       for (std::int64_t o = 0; o < outer; ++o) {
                         const real* dy = self.grad.data() + o * inner;
                         for (std::int64_t k = 0; k < n; ++k) {
                           real* dst = g + (o * n + k) * inner;
                           for (std::int64_t i = 0; i < inner; ++i) dst[i] += dy[i];
                         }
                       }
                     });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.dim() != 1 || b.dim() != 1) throw std::invalid_argument("dot: expects 1-D tensors");
  require_same_shape(a, b, "dot");
  real acc = 0;
  for (size_t i = 0; i < a.values().size(); ++i) acc += a.values()[i] * b.values()[i];
  return make_result({1}, {acc}, {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const real dy = self.grad[0];
    if (pa.requires_grad) {
      real* g = pa.grad_data();
      for (size_t i = 0; i < pa.values.size(); ++i) g[i] += dy * pb.values[i];
    }
    if (pb.requires_grad) {
      real* g = pb.grad_data();
      for (size_t i = 0; i < pb.values.size(); ++i) g[i] += dy * pa.values[i];
    }
  });
}

namespace {
constexpr real kNormFloor = real(1e-12);
}

Tensor l2_norm(const Tensor& a) {
  real ssq = 0;
  for (real x : a.values()) ssq += x * x;
  const real n = std::sqrt(ssq);
  return make_result({1}, {n}, {a}, [n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    real* g = p.grad_data();
    const real dy = self.grad[0] / std::max(n, kNormFloor);
    for (size_t i = 0; i < p.values.size(); ++i) g[i] += dy * p.values[i];
  });
}

Tensor row_l2_norms(const Tensor& a) {
  if (a.dim() != 2) throw std::invalid_argument("row_l2_norms: expects (N,D)");
  const int n = a.extent(0), d = a.extent(1);
  std::vector<real> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    real ssq = 0;
    const real* row = a.values().data() + static_cast<std::int64_t>(i) * d;
    for (int j = 0; j < d; ++j) ssq += row[j] * row[j];
    out[static_cast<size_t>(i)] = std::sqrt(ssq);
  }
  return make_result({n}, std::move(out), {a}, [n, d](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    real* g = p.grad_data();
    for (int i = 0; i < n; ++i) {
      const real dy = self.grad[static_cast<size_t>(i)] /
                      std::max(self.values[static_cast<size_t>(i)], kNormFloor);
      const real* row = p.values.data() + static_cast<std::int64_t>(i) * d;
      real* grow = g + static_cast<std::int64_t>(i) * d;
      for (int j = 0; j < d; ++j) grow[j] += dy * row[j];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2) throw std::invalid_argument("matmul: expects 2-D tensors");
  const int m = a.extent(0), k = a.extent(1), k2 = b.extent(0), n = b.extent(1);
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  }
  std::vector<real> out(static_cast<size_t>(m) * n, real(0));
  const real* av = a.values().data();
  const real* bv = b.values().data();
  for (int i = 0; i < m; ++i) {
    for (int kk = 0; kk < k; ++kk) {
      const real aik = av[static_cast<std::int64_t>(i) * k + kk];
      const real* brow = bv + static_cast<std::int64_t>(kk) * n;
      real* orow = out.data() + static_cast<std::int64_t>(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const real* dy = self.grad.data();
    if (pa.requires_grad) {  // dA = dY B^T
      real* g = pa.grad_data();
      for (int i = 0; i < m; ++i) {
        for (int kk = 0; kk < k; ++kk) {
          real acc = 0;
          const real* dyrow = dy + static_cast<std::int64_t>(i) * n;
          const real* brow = pb.values.data() + static_cast<std::int64_t>(kk) * n;
          for (int j = 0; j < n; ++j) acc += dyrow[j] * brow[j];
          g[static_cast<std::int64_t>(i) * k + kk] += acc;
        }
      }
    }
    if (pb.requires_grad) {  // dB = A^T dY
      real* g = pb.grad_data();
      for (int kk = 0; kk < k; ++kk) {
        for (int i = 0; i < m; ++i) {
          const real aik = pa.values[static_cast<std::int64_t>(i) * k + kk];
          const real* dyrow = dy + static_cast<std::int64_t>(i) * n;
          real* grow = g + static_cast<std::int64_t>(kk) * n;
          for (int j = 0; j < n; ++j) grow[j] += aik * dyrow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.dim() != 2) throw std::invalid_argument("transpose: expects 2-D tensor");
  const int m = a.extent(0), n = a.extent(1);
  std::vector<real> out(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::int64_t>(j) * m + i] = a.values()[static_cast<std::int64_t>(i) * n + j];
  return make_result({n, m}, std::move(out), {a}, [m, n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    real* g = p.grad_data();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        g[static_cast<std::int64_t>(i) * n + j] += self.grad[static_cast<std::int64_t>(j) * m + i];
  });
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
  if (a.dim() != 2 || s.dim() != 1 || s.extent(0) != a.extent(0)) {
    throw std::invalid_argument("scale_rows: expects (N,D) and (N)");
  }
  const int n = a.extent(0), d = a.extent(1);
  std::vector<real> out(a.values().size());
  for (int i = 0; i < n; ++i) {
    const real si = s.values()[static_cast<size_t>(i)];
    const real* row = a.values().data() + static_cast<std::int64_t>(i) * d;
    real* orow = out.data() + static_cast<std::int64_t>(i) * d;
    for (int j = 0; j < d; ++j) orow[j] = row[j] * si;
  }
  return make_result(a.shape(), std::move(out), {a, s}, [n, d](Node& self) {
    Node& pa = *self.parents[0];
    Node& ps = *self.parents[1];
    if (pa.requires_grad) {
      real* g = pa.grad_data();
      for (int i = 0; i < n; ++i) {
        const real si = ps.values[static_cast<size_t>(i)];
        const real* dyrow = self.grad.data() + static_cast<std::int64_t>(i) * d;
        real* grow = g + static_cast<std::int64_t>(i) * d;
        for (int j = 0; j < d; ++j) grow[j] += dyrow[j] * si;
      }
    }
    if (ps.requires_grad) {
      real* g = ps.grad_data();
      for (int i = 0; i < n; ++i) {
        real acc = 0;
        const real* dyrow = self.grad.data() + static_cast<std::int64_t>(i) * d;
        const real* arow = pa.values.data() + static_cast<std::int64_t>(i) * d;
        for (int j = 0; j < d; ++j) acc += dyrow[j] * arow[j];
        g[static_cast<size_t>(i)] += acc;
      }
    }
  });
}

Tensor sub_col(const Tensor& a, const Tensor& v) {
  if (a.dim() != 2 || v.dim() != 1 || v.extent(0) != a.extent(0)) {
    throw std::invalid_argument("sub_col: expects (N,D) and (N)");
  }
  const int n = a.extent(0), d = a.extent(1);
  std::vector<real> out(a.values().size());
  for (int i = 0; i < n; ++i) {
    const real vi = v.values()[static_cast<size_t>(i)];
    const real* row = a.values().data() + static_cast<std::int64_t>(i) * d;
    real* orow = out.data() + static_cast<std::int64_t>(i) * d;
    for (int j = 0; j < d; ++j) orow[j] = row[j] - vi;
  }
  return make_result(a.shape(), std::move(out), {a, v}, [n, d](Node& self) {
    Node& pa = *self.parents[0];
    Node& pv = *self.parents[1];
    if (pa.requires_grad) {
      real* g = pa.grad_data();
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (pv.requires_grad) {
      real* g = pv.grad_data();
      for (int i = 0; i < n; ++i) {
        real acc = 0;
        const real* dyrow = self.grad.data() + static_cast<std::int64_t>(i) * d;
        for (int j = 0; j < d; ++j) acc += dyrow[j];
        g[static_cast<size_t>(i)] -= acc;
      }
    }
  });
}

Tensor add_row_vector(const Tensor& a, const Tensor& b) {
  if (a.dim() != 2 || b.dim() != 1 || b.extent(0) != a.extent(1)) {
    throw std::invalid_argument("add_row_vector: expects (N,K) and (K)");
  }
  const int n = a.extent(0), k = a.extent(1);
  std::vector<real> out(a.values().size());
  for (int i = 0; i < n; ++i) {
    const real* row = a.values().data() + static_cast<std::int64_t>(i) * k;
    real* orow = out.data() + static_cast<std::int64_t>(i) * k;
    for (int j = 0; j < k; ++j) orow[j] = row[j] + b.values()[static_cast<size_t>(j)];
  }
  return make_result(a.shape(), std::move(out), {a, b}, [n, k](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      real* g = pa.grad_data();
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      real* g = pb.grad_data();
      for (int i = 0; i < n; ++i) {
        const real* dyrow = self.grad.data() + static_cast<std::int64_t>(i) * k;
        for (int j = 0; j < k; ++j) g[static_cast<size_t>(j)] += dyrow[j];
      }
    }
  });
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  check_shape(shape);
  if (numel_of(shape) != a.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                shape_str(shape));
  }
  std::vector<real> out = a.values();
  return make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    real* g = p.grad_data();
    for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor softmax(const Tensor& a, int axis) {
  const auto& shape = a.shape();
  if (axis < 0 || axis >= a.dim()) throw std::invalid_argument("softmax: bad axis");
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < a.dim(); ++i) inner *= shape[static_cast<size_t>(i)];
  const std::int64_t n = shape[static_cast<size_t>(axis)];

  std::vector<real> out(a.values().size());
  const real* src = a.values().data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      const std::int64_t base = o * n * inner + i;
      real mx = src[base];
      for (std::int64_t k = 1; k < n; ++k) mx = std::max(mx, src[base + k * inner]);
      real denom = 0;
      for (std::int64_t k = 0; k < n; ++k) {
        const real e = std::exp(src[base + k * inner] - mx);
        out[static_cast<size_t>(base + k * inner)] = e;
        denom += e;
      }
      const real inv = real(1) / denom;
      for (std::int64_t k = 0; k < n; ++k) out[static_cast<size_t>(base + k * inner)] *= inv;
    }
  }
  return make_result(a.shape(), std::move(out), {a}, [outer, inner, n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    real* g = p.grad_data();
    const real* y = self.values.data();
    const real* dy = self.grad.data();
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t i = 0; i < inner; ++i) {
        const std::int64_t base = o * n * inner + i;
        real s = 0;
        for (std::int64_t k = 0; k < n; ++k) s += dy[base + k * inner] * y[base + k * inner];
        for (std::int64_t k = 0; k < n; ++k) {
          const std::int64_t idx = base + k * inner;
          g[idx] += (dy[idx] - s) * y[idx];
        }
      }
    }
  });
}

// ---- spatial ------------------------------------------------------------------

namespace {

void require_nchw(const Tensor& t, const char* op) {
  if (t.dim() != 4) {
    throw std::invalid_argument(std::string(op) + ": expects NCHW tensor, got " +
                                shape_str(t.shape()));
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
  require_nchw(input, "conv2d");
  if (kernel.dim() != 4) {
    throw std::invalid_argument("conv2d: kernel must be (O,C,kh,kw), got " +
                                shape_str(kernel.shape()));
  }
  if (stride < 1 || padding < 0) throw std::invalid_argument("conv2d: bad stride/padding");
  const int n = input.extent(0), ci = input.extent(1), h = input.extent(2), w = input.extent(3);
  const int co = kernel.extent(0), kci = kernel.extent(1), kh = kernel.extent(2),
            kw = kernel.extent(3);
  if (ci != kci) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(ci) +
                                " channels but kernel expects " + std::to_string(kci));
  }
  if (h + 2 * padding < kh || w + 2 * padding < kw) {
    throw std::invalid_argument("conv2d: kernel " + shape_str(kernel.shape()) +
                                " larger than padded input " + shape_str(input.shape()));
  }
  const int oh = (h + 2 * padding - kh) / stride + 1;
  const int ow = (w + 2 * padding - kw) / stride + 1;

  // Kernel-outer direct convolution: per kernel element, the valid output
  // window is a rectangle, leaving branch-free inner loops.
  const auto out_range = [stride, padding](int k, int in, int out_extent, int& lo, int& hi) {
    const int shift = padding - k;  // i = o*stride - shift must land in [0, in)
    lo = shift <= 0 ? 0 : (shift + stride - 1) / stride;
    hi = std::min(out_extent - 1, (in - 1 + shift) / stride);
  };

  std::vector<real> out(static_cast<size_t>(n) * co * oh * ow, real(0));
  const real* x = input.values().data();
  const real* kv = kernel.values().data();
  for (int b = 0; b < n; ++b) {
    for (int oc = 0; oc < co; ++oc) {
      real* out_plane = out.data() + (static_cast<std::int64_t>(b) * co + oc) * oh * ow;
      for (int ic = 0; ic < ci; ++ic) {
        const real* x_plane = x + (static_cast<std::int64_t>(b) * ci + ic) * h * w;
        const real* k_base = kv + (static_cast<std::int64_t>(oc) * ci + ic) * kh * kw;
        for (int ky = 0; ky < kh; ++ky) {
          int oy0, oy1;
          out_range(ky, h, oh, oy0, oy1);
          for (int kx = 0; kx < kw; ++kx) {
            const real kval = k_base[ky * kw + kx];
            int ox0, ox1;
            out_range(kx, w, ow, ox0, ox1);
            for (int oy = oy0; oy <= oy1; ++oy) {
              const int iy = oy * stride - padding + ky;
              const real* xrow = x_plane + static_cast<std::int64_t>(iy) * w - padding + kx;
              real* orow = out_plane + static_cast<std::int64_t>(oy) * ow;
              if (stride == 1) {
                for (int ox = ox0; ox <= ox1; ++ox) orow[ox] += kval * xrow[ox];
              } else {
                for (int ox = ox0; ox <= ox1; ++ox) orow[ox] += kval * xrow[ox * stride];
              }
            }
          }
        }
      }
    }
  }

  return make_result(
      {n, co, oh, ow}, std::move(out), {input, kernel},
      [n, ci, h, w, co, kh, kw, oh, ow, stride, padding, out_range](Node& self) {
        Node& px = *self.parents[0];
        Node& pk = *self.parents[1];
        const bool need_dx = px.requires_grad;
        const bool need_dk = pk.requires_grad;
        if (!need_dx && !need_dk) return;
        real* dx = need_dx ? px.grad_data() : nullptr;
        real* dk = need_dk ? pk.grad_data() : nullptr;
        const real* x = px.values.data();
        const real* kv = pk.values.data();
        const real* dy = self.grad.data();
        for (int b = 0; b < n; ++b) {
          for (int oc = 0; oc < co; ++oc) {
            const real* dy_plane = dy + (static_cast<std::int64_t>(b) * co + oc) * oh * ow;
            for (int ic = 0; ic < ci; ++ic) {
              const std::int64_t xoff = (static_cast<std::int64_t>(b) * ci + ic) * h * w;
              const std::int64_t koff = (static_cast<std::int64_t>(oc) * ci + ic) * kh * kw;
              for (int ky = 0; ky < kh; ++ky) {
                int oy0, oy1;
                out_range(ky, h, oh, oy0, oy1);
                for (int kx = 0; kx < kw; ++kx) {
                  int ox0, ox1;
                  out_range(kx, w, ow, ox0, ox1);
                  const real kval = need_dx ? kv[koff + ky * kw + kx] : real(0);
                  real kgrad = 0;
                  for (int oy = oy0; oy <= oy1; ++oy) {
                    const int iy = oy * stride - padding + ky;
                    const real* dyrow = dy_plane + static_cast<std::int64_t>(oy) * ow;
                    const std::int64_t xrow = xoff + static_cast<std::int64_t>(iy) * w - padding + kx;
                    if (stride == 1) {
                      if (need_dx) {
                        for (int ox = ox0; ox <= ox1; ++ox) dx[xrow + ox] += kval * dyrow[ox];
                      }
                      if (need_dk) {
                        for (int ox = ox0; ox <= ox1; ++ox) kgrad += x[xrow + ox] * dyrow[ox];
                      }
                    } else {
                      if (need_dx) {
                        for (int ox = ox0; ox <= ox1; ++ox) {
                          dx[xrow + ox * stride] += kval * dyrow[ox];
                        }
                      }
                      if (need_dk) {
                        for (int ox = ox0; ox <= ox1; ++ox) kgrad += x[xrow + ox * stride] * dyrow[ox];
                      }
                    }
                  }
                  if (need_dk) dk[koff + ky * kw + kx] += kgrad;
                }
              }
            }
          }
        }
      });
}

Tensor add_channel_bias(const Tensor& input, const Tensor& bias) {
  require_nchw(input, "add_channel_bias");
  if (bias.dim() != 1 || bias.extent(0) != input.extent(1)) {
    throw std::invalid_argument("add_channel_bias: bias " + shape_str(bias.shape()) +
                                " does not match channels of " + shape_str(input.shape()));
  }
  const int n = input.extent(0), c = input.extent(1);
  const std::int64_t hw = static_cast<std::int64_t>(input.extent(2)) * input.extent(3);
  std::vector<real> out(input.values().size());
  const real* x = input.values().data();
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const real bc = bias.values()[static_cast<size_t>(ch)];
      const std::int64_t off = (static_cast<std::int64_t>(b) * c + ch) * hw;
      for (std::int64_t i = 0; i < hw; ++i) out[off + i] = x[off + i] + bc;
    }
  }
  return make_result(input.shape(), std::move(out), {input, bias}, [n, c, hw](Node& self) {
    Node& px = *self.parents[0];
    Node& pb = *self.parents[1];
    if (px.requires_grad) {
      real* g = px.grad_data();
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      real* g = pb.grad_data();
      for (int b = 0; b < n; ++b) {
        for (int ch = 0; ch < c; ++ch) {
          const std::int64_t off = (static_cast<std::int64_t>(b) * c + ch) * hw;
          real acc = 0;
          for (std::int64_t i = 0; i < hw; ++i) acc += self.grad[off + i];
          g[static_cast<size_t>(ch)] += acc;
        }
      }
    }
  });
}

Tensor adaptive_avg_pool(const Tensor& input, int out_h, int out_w) {
  require_nchw(input, "adaptive_avg_pool");
  const int n = input.extent(0), c = input.extent(1), h = input.extent(2), w = input.extent(3);
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("adaptive_avg_pool: bad output size");
  if (out_h > h || out_w > w) {
    throw std::invalid_argument("adaptive_avg_pool: output " + std::to_string(out_h) + "x" +
                                std::to_string(out_w) + " exceeds input " + std::to_string(h) +
                                "x" + std::to_string(w) + " (upsampling is a separate operation)");
  }
  auto win = [](int i, int in, int out, int& s, int& e) {
    s = (i * in) / out;
    e = ((i + 1) * in + out - 1) / out;  // ceil
  };
  std::vector<real> out(static_cast<size_t>(n) * c * out_h * out_w);
  const real* x = input.values().data();
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const real* plane = x + (static_cast<std::int64_t>(b) * c + ch) * h * w;
      real* oplane = out.data() + (static_cast<std::int64_t>(b) * c + ch) * out_h * out_w;
      for (int i = 0; i < out_h; ++i) {
        int ys, ye;
        win(i, h, out_h, ys, ye);
        for (int j = 0; j < out_w; ++j) {
          int xs, xe;
          win(j, w, out_w, xs, xe);
          real acc = 0;
          for (int yy = ys; yy < ye; ++yy)
            for (int xx = xs; xx < xe; ++xx) acc += plane[static_cast<std::int64_t>(yy) * w + xx];
          oplane[static_cast<std::int64_t>(i) * out_w + j] =
              acc / (static_cast<real>(ye - ys) * static_cast<real>(xe - xs));
        }
      }
    }
  }
  return make_result({n, c, out_h, out_w}, std::move(out), {input},
                     [n, c, h, w, out_h, out_w, win](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       real* g = p.grad_data();
                       for (int b = 0; b < n; ++b) {
                         for (int ch = 0; ch < c; ++ch) {
                           real* gplane = g + (static_cast<std::int64_t>(b) * c + ch) * h * w;
                           const real* dy = self.grad.data() +
                                            (static_cast<std::int64_t>(b) * c + ch) * out_h * out_w;
                           for (int i = 0; i < out_h; ++i) {
                             int ys, ye;
                             win(i, h, out_h, ys, ye);
                             for (int j = 0; j < out_w; ++j) {
                               int xs, xe;
                               win(j, w, out_w, xs, xe);
                               const real share =
                                   dy[static_cast<std::int64_t>(i) * out_w + j] /
                                   (static_cast<real>(ye - ys) * static_cast<real>(xe - xs));
                               for (int yy = ys; yy < ye; ++yy)
                                 for (int xx = xs; xx < xe; ++xx)
                                   gplane[static_cast<std::int64_t>(yy) * w + xx] += share;
                             }
                           }
                         }
                       }
                     });
}

namespace {

// Half-pixel-center source coordinate mapping (align_corners disabled).
struct LerpCoord {
  int lo, hi;
  real t;
};

LerpCoord bilinear_coord(int i, int in, int out) {
  real src = (static_cast<real>(i) + real(0.5)) * static_cast<real>(in) / static_cast<real>(out) -
             real(0.5);
  if (src < 0) src = 0;
  if (src > static_cast<real>(in - 1)) src = static_cast<real>(in - 1);
  const int lo = static_cast<int>(std::floor(src));
  const int hi = std::min(lo + 1, in - 1);
  return {lo, hi, src - static_cast<real>(lo)};
}

}  // namespace

Tensor upsample_bilinear(const Tensor& input, int out_h, int out_w) {
  require_nchw(input, "upsample_bilinear");
  const int n = input.extent(0), c = input.extent(1), h = input.extent(2), w = input.extent(3);
  if (out_h < h || out_w < w) {
    throw std::invalid_argument("upsample_bilinear: output smaller than input (use pooling)");
  }
  std::vector<LerpCoord> ys(static_cast<size_t>(out_h)), xs(static_cast<size_t>(out_w));
  for (int i = 0; i < out_h; ++i) ys[static_cast<size_t>(i)] = bilinear_coord(i, h, out_h);
  for (int j = 0; j < out_w; ++j) xs[static_cast<size_t>(j)] = bilinear_coord(j, w, out_w);

  std::vector<real> out(static_cast<size_t>(n) * c * out_h * out_w);
  const real* x = input.values().data();
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const real* plane = x + (static_cast<std::int64_t>(b) * c + ch) * h * w;
      real* oplane = out.data() + (static_cast<std::int64_t>(b) * c + ch) * out_h * out_w;
      for (int i = 0; i < out_h; ++i) {
        const auto& yc = ys[static_cast<size_t>(i)];
        for (int j = 0; j < out_w; ++j) {
          const auto& xc = xs[static_cast<size_t>(j)];
          const real v00 = plane[static_cast<std::int64_t>(yc.lo) * w + xc.lo];
          const real v01 = plane[static_cast<std::int64_t>(yc.lo) * w + xc.hi];
          const real v10 = plane[static_cast<std::int64_t>(yc.hi) * w + xc.lo];
          const real v11 = plane[static_cast<std::int64_t>(yc.hi) * w + xc.hi];
          const real top = v00 + (v01 - v00) * xc.t;
          const real bot = v10 + (v11 - v10) * xc.t;
          oplane[static_cast<std::int64_t>(i) * out_w + j] = top + (bot - top) * yc.t;
        }
      }
    }
  }
  return make_result({n, c, out_h, out_w}, std::move(out), {input},
                     [n, c, h, w, out_h, out_w, ys, xs](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       real* g = p.grad_data();
                       for (int b = 0; b < n; ++b) {
                         for (int ch = 0; ch < c; ++ch) {
                           real* gplane = g + (static_cast<std::int64_t>(b) * c + ch) * h * w;
                           const real* dy = self.grad.data() +
                                            (static_cast<std::int64_t>(b) * c + ch) * out_h * out_w;
                           for (int i = 0; i < out_h; ++i) {
                             const auto& yc = ys[static_cast<size_t>(i)];
                             for (int j = 0; j < out_w; ++j) {
                               const auto& xc = xs[static_cast<size_t>(j)];
                               const real gv = dy[static_cast<std::int64_t>(i) * out_w + j];
                               gplane[static_cast<std::int64_t>(yc.lo) * w + xc.lo] +=
                                   gv * (1 - yc.t) * (1 - xc.t);
                               gplane[static_cast<std::int64_t>(yc.lo) * w + xc.hi] +=
                                   gv * (1 - yc.t) * xc.t;
                               gplane[static_cast<std::int64_t>(yc.hi) * w + xc.lo] +=
                                   gv * yc.t * (1 - xc.t);
                               gplane[static_cast<std::int64_t>(yc.hi) * w + xc.hi] +=
                                   gv * yc.t * xc.t;
                             }
                           }
                         }
                       }
                     });
}

Tensor upsample_nearest(const Tensor& input, int factor) {
  require_nchw(input, "upsample_nearest");
  if (factor < 1) throw std::invalid_argument("upsample_nearest: factor must be >= 1");
  const int n = input.extent(0), c = input.extent(1), h = input.extent(2), w = input.extent(3);
  const int oh = h * factor, ow = w * factor;
  std::vector<real> out(static_cast<size_t>(n) * c * oh * ow);
  const real* x = input.values().data();
  for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc) {
    const real* plane = x + pc * h * w;
    real* oplane = out.data() + pc * oh * ow;
    for (int i = 0; i < oh; ++i) {
      const real* row = plane + static_cast<std::int64_t>(i / factor) * w;
      real* orow = oplane + static_cast<std::int64_t>(i) * ow;
      for (int j = 0; j < ow; ++j) orow[j] = row[j / factor];
    }
  }
  return make_result({n, c, oh, ow}, std::move(out), {input}, [n, c, h, w, factor](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    real* g = p.grad_data();
    const int oh = h * factor, ow = w * factor;
    for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc) {
      real* gplane = g + pc * h * w;
      const real* dy = self.grad.data() + pc * oh * ow;
      for (int i = 0; i < oh; ++i) {
        real* grow = gplane + static_cast<std::int64_t>(i / factor) * w;
        const real* dyrow = dy + static_cast<std::int64_t>(i) * ow;
        for (int j = 0; j < ow; ++j) grow[j / factor] += dyrow[j];
      }
    }
  });
}

Tensor lsa_attention(const Tensor& query, const Tensor& key_value, int patch) {
  require_nchw(query, "lsa_attention");
  require_same_shape(query, key_value, "lsa_attention");
  const int n = query.extent(0), c = query.extent(1), h = query.extent(2), w = query.extent(3);
  if (patch < 1 || h % patch != 0 || w % patch != 0) {
    throw std::invalid_argument("lsa_attention: patch " + std::to_string(patch) +
                                " does not divide spatial extent " + std::to_string(h) + "x" +
                                std::to_string(w));
  }
  const int pp = patch * patch;
  std::vector<real> out(query.values().size());
  std::vector<real> wbuf(static_cast<size_t>(pp));
  const real* q = query.values().data();
  const real* kv = key_value.values().data();
  for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc) {
    const real* qp = q + pc * h * w;
    const real* zp = kv + pc * h * w;
    real* op = out.data() + pc * h * w;
    for (int py = 0; py < h; py += patch) {
      for (int px = 0; px < w; px += patch) {
        for (int dy_ = 0; dy_ < patch; ++dy_) {
          for (int dx_ = 0; dx_ < patch; ++dx_) {
            const std::int64_t pos = static_cast<std::int64_t>(py + dy_) * w + (px + dx_);
            const real alpha = qp[pos];
            // softmax(alpha * Z) over the patch entries
            real mx = -std::numeric_limits<real>::infinity();
            int t = 0;
            for (int zy = 0; zy < patch; ++zy)
              for (int zx = 0; zx < patch; ++zx)
                mx = std::max(mx, alpha * zp[static_cast<std::int64_t>(py + zy) * w + (px + zx)]);
            real denom = 0;
            t = 0;
            for (int zy = 0; zy < patch; ++zy)
              for (int zx = 0; zx < patch; ++zx) {
                const real e =
                    std::exp(alpha * zp[static_cast<std::int64_t>(py + zy) * w + (px + zx)] - mx);
                wbuf[static_cast<size_t>(t++)] = e;
                denom += e;
              }
            real beta = 0;
            t = 0;
            for (int zy = 0; zy < patch; ++zy)
              for (int zx = 0; zx < patch; ++zx) {
                beta += (wbuf[static_cast<size_t>(t++)] / denom) *
                        zp[static_cast<std::int64_t>(py + zy) * w + (px + zx)];
              }
            op[pos] = beta;
          }
        }
      }
    }
  }

  return make_result(query.shape(), std::move(out), {query, key_value},
                     [n, c, h, w, patch](Node& self) {
                       Node& pq = *self.parents[0];
                       Node& pz = *self.parents[1];
                       const bool need_dq = pq.requires_grad;
                       const bool need_dz = pz.requires_grad;
                       if (!need_dq && !need_dz) return;
                       real* dq = need_dq ? pq.grad_data() : nullptr;
                       real* dz = need_dz ? pz.grad_data() : nullptr;
                       const int pp = patch * patch;
                       std::vector<real> wv(static_cast<size_t>(pp));
                       std::vector<real> zv(static_cast<size_t>(pp));
                       for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc) {
                         const real* qp = pq.values.data() + pc * h * w;
                         const real* zp = pz.values.data() + pc * h * w;
                         const real* dyp = self.grad.data() + pc * h * w;
                         const real* yp = self.values.data() + pc * h * w;
                         for (int py = 0; py < h; py += patch) {
                           for (int px = 0; px < w; px += patch) {
                             int t = 0;
                             for (int zy = 0; zy < patch; ++zy)
                               for (int zx = 0; zx < patch; ++zx)
                                 zv[static_cast<size_t>(t++)] =
                                     zp[static_cast<std::int64_t>(py + zy) * w + (px + zx)];
                             for (int dy_ = 0; dy_ < patch; ++dy_) {
                               for (int dx_ = 0; dx_ < patch; ++dx_) {
                                 const std::int64_t pos =
                                     static_cast<std::int64_t>(py + dy_) * w + (px + dx_);
                                 const real gout = dyp[pos];
                                 if (gout == 0) continue;
                                 const real alpha = qp[pos];
                                 const real beta = yp[pos];
                                 // recompute softmax weights for this query
                                 real mx = -std::numeric_limits<real>::infinity();
                                 for (int k = 0; k < pp; ++k)
                                   mx = std::max(mx, alpha * zv[static_cast<size_t>(k)]);
                                 real denom = 0;
                                 for (int k = 0; k < pp; ++k) {
                                   const real e = std::exp(alpha * zv[static_cast<size_t>(k)] - mx);
                                   wv[static_cast<size_t>(k)] = e;
                                   denom += e;
                                 }
                                 for (int k = 0; k < pp; ++k) wv[static_cast<size_t>(k)] /= denom;
                                 if (need_dq) {
                                   // d beta / d alpha = sum_k w_k z_k (z_k - beta)
                                   real acc = 0;
                                   for (int k = 0; k < pp; ++k) {
                                     const real z = zv[static_cast<size_t>(k)];
                                     acc += wv[static_cast<size_t>(k)] * z * (z - beta);
                                   }
                                   dq[pc * h * w + pos] += gout * acc;
                                 }
                                 if (need_dz) {
                                   // d beta / d z_k = w_k (1 + alpha (z_k - beta))
                                   int u = 0;
                                   for (int zy = 0; zy < patch; ++zy)
                                     for (int zx = 0; zx < patch; ++zx) {
                                       const real z = zv[static_cast<size_t>(u)];
                                       const real d =
                                           wv[static_cast<size_t>(u)] * (1 + alpha * (z - beta));
                                       dz[pc * h * w + static_cast<std::int64_t>(py + zy) * w +
                                          (px + zx)] += gout * d;
                                       ++u;
                                     }
                                 }
                               }
                             }
                           }
                         }
                       }
                     });
}

// ---- autograd ----------------------------------------------------------------

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  auto root = loss.node();
  root->grad_data()[0] += real(1);

  // Collect the reachable subgraph, then replay in reverse execution order.
  std::vector<detail::Node*> order;
  std::vector<detail::Node*> seen;
  auto mark = [&seen](detail::Node* n) {
    // linear probe is fine: graphs are a few hundred nodes
    for (auto* s : seen)
      if (s == n) return false;
    seen.push_back(n);
    return true;
  };
  mark(root.get());
  order.push_back(root.get());
  size_t head = 0;
  std::vector<detail::Node*> work{root.get()};
  while (head < work.size()) {
    detail::Node* n = work[head++];
    for (auto& p : n->parents) {
      if (mark(p.get())) {
        order.push_back(p.get());
        work.push_back(p.get());
      }
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });
  for (detail::Node* n : order) {
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

real grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point, real eps) {
  Tensor x = Tensor::from(point.shape(), point.values(), true);
  Tensor y = f(x);
  if (y.numel() != 1) throw std::invalid_argument("grad_check: f must be scalar-valued");
  backward(y);
  const std::vector<real> analytic = x.grad();

  Tensor probe = Tensor::from(point.shape(), point.values(), false);
  real worst = 0;
  NoGradGuard ng;
  for (size_t i = 0; i < probe.values_mut().size(); ++i) {
    const real orig = probe.values_mut()[i];
    probe.values_mut()[i] = orig + eps;
    const real fp = f(probe).item();
    probe.values_mut()[i] = orig - eps;
    const real fm = f(probe).item();
    probe.values_mut()[i] = orig;
    const real fd = (fp - fm) / (2 * eps);
    const real ad = analytic[i];
    const real rel = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), real(1e-8)});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace benet
