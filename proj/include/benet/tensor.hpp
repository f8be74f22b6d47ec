#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace benet {

#ifdef BENET_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

namespace detail {

// One node of the implicitly recorded computation graph. Leaves have no
// parents; interior nodes keep shared ownership of their inputs so the
// graph stays alive as long as any downstream tensor does. `seq` is a
// global execution counter; backward() replays nodes in decreasing seq,
// which is exactly reverse execution order.
struct Node {
  std::vector<int> shape;
  std::vector<real> values;
  bool requires_grad = false;
  std::vector<real> grad;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
  }
  // Allocates (zeroed) on first touch.
  real* grad_data() {
    if (grad.empty()) grad.assign(values.size(), real(0));
    return grad.data();
  }
};

bool grad_enabled();

}  // namespace detail

// Dense row-major tensor with optional gradient tracking. Value-semantic
// handle: copies share the underlying buffer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, real value, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<real> values,
                     bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t numel() const { return node_->numel(); }
  int extent(int axis) const { return node_->shape[static_cast<size_t>(axis)]; }

  const std::vector<real>& values() const { return node_->values; }
  // Direct mutation is only meaningful on leaves (parameters, data buffers).
  std::vector<real>& values_mut() { return node_->values; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  const std::vector<real>& grad() const;
  std::vector<real>& grad_mut();
  void zero_grad();

  real item() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Disables graph recording for its lifetime (current thread).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

std::string shape_str(const std::vector<int>& shape);

// ---- elementwise ----------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, real c);
Tensor mul_scalar(const Tensor& a, real c);
Tensor neg(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor reciprocal(const Tensor& a);
Tensor clamp(const Tensor& a, real lo, real hi);
Tensor clamp_min(const Tensor& a, real lo);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// ---- reductions / linear algebra ------------------------------------------
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, int axis);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor l2_norm(const Tensor& a);
Tensor row_l2_norms(const Tensor& a);            // (N,D) -> (N)
Tensor matmul(const Tensor& a, const Tensor& b);  // (m,k)x(k,n)
Tensor transpose(const Tensor& a);                // 2-D
Tensor scale_rows(const Tensor& a, const Tensor& s);      // (N,D)*(N)
Tensor sub_col(const Tensor& a, const Tensor& v);         // (N,D)-(N) per row
Tensor add_row_vector(const Tensor& a, const Tensor& b);  // (N,K)+(K)
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor softmax(const Tensor& a, int axis);

// ---- spatial ---------------------------------------------------------------
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding);
Tensor add_channel_bias(const Tensor& input, const Tensor& bias);  // NCHW + (C)
Tensor adaptive_avg_pool(const Tensor& input, int out_h, int out_w);
Tensor upsample_bilinear(const Tensor& input, int out_h, int out_w);
Tensor upsample_nearest(const Tensor& input, int factor);

// Patch attention between a query map and a key/value map (NCHW, P x P
// non-overlapping patches; see model layer for the per-position semantics).
Tensor lsa_attention(const Tensor& query, const Tensor& key_value, int patch);

// ---- autograd --------------------------------------------------------------
void backward(const Tensor& loss);

// Central finite differences vs. reverse mode at `point`; returns the max
// over coordinates of |fd-ad| / max(|fd|,|ad|,1e-8).
real grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                real eps);

}  // namespace benet
