#pragma once

// Dense f64 arrays (rank 0, 1 or 2) with tape-based reverse-mode
// differentiation. Every op builds a node holding its value, a gradient
// buffer when any input requires grad, and a backward rule.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "twc/error.hpp"

namespace twc::tensor {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Node() = default;
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  // Long tapes would recurse once per node in the default destructor.
  ~Node() {
    std::vector<std::shared_ptr<Node>> stack = std::move(parents);
    while (!stack.empty()) {
      std::shared_ptr<Node> n = std::move(stack.back());
      stack.pop_back();
      if (n && n.use_count() == 1) {
        for (auto& p : n->parents) stack.push_back(std::move(p));
        n->parents.clear();
      }
    }
  }

  Node* parent(std::size_t i) const { return parents[i].get(); }
};

namespace detail {
inline thread_local bool grad_flag = true;
}

// Scope in which no tape is recorded (evaluation).
class NoGrad {
 public:
  NoGrad() : prev_(detail::grad_flag) { detail::grad_flag = false; }
  ~NoGrad() { detail::grad_flag = prev_; }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_flag; }

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor make(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (data.size() != numel(shape))
      throw ShapeMismatch("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    if (requires_grad) n->grad.assign(n->value.size(), 0.0);
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = numel(shape);
    return make(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) { return make({}, {v}, requires_grad); }
  static Tensor vector(std::vector<double> v, bool requires_grad = false) {
    const std::size_t n = v.size();
    return make({n}, std::move(v), requires_grad);
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v, bool requires_grad = false) {
    return make({rows, cols}, std::move(v), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return rank() == 2 ? shape()[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? shape()[1] : (rank() == 1 ? shape()[0] : 1); }
  const std::vector<double>& data() const { return node_->value; }
  std::vector<double>& mutable_data() { return node_->value; }
  const std::vector<double>& grad() const { return node_->grad; }
  std::vector<double>& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  double item() const {
    if (size() != 1) throw NotScalar("expected a scalar, got shape " + shape_str(shape()));
    return node_->value[0];
  }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }

  // Fresh leaf with a copy of this tensor's values.
  Tensor detach() const { return make(shape(), data(), false); }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

inline Tensor result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                     std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool needs = false;
  if (grad_enabled())
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  if (needs) {
    n->requires_grad = true;
    n->grad.assign(n->value.size(), 0.0);
    for (auto& t : inputs) n->parents.push_back(t.ptr());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

inline void accumulate(Node* p, std::size_t i, double g) {
  if (p->requires_grad) p->grad[i] += g;
}

inline void require_rank(const Tensor& t, std::size_t r, const char* op) {
  if (t.rank() != r)
    throw ShapeMismatch(std::string(op) + ": expected rank " + std::to_string(r) + ", got " + shape_str(t.shape()));
}

inline void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeMismatch(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline void check_finite(const Tensor& t, const char* op) {
  for (double v : t.data())
    if (!std::isfinite(v)) throw NonFinite(std::string(op) + ": non-finite input");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// backward pass

// Reverse-mode accumulation from a scalar. Leaf gradients accumulate; call
// zero_grad on parameters between updates.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1) throw NotScalar("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;
  // iterative post-order DFS over nodes that require grad
  std::vector<Node*> order;
  std::unordered_set<Node*> visited{loss.node()};
  std::vector<std::pair<Node*, std::size_t>> frames{{loss.node(), 0}};
  while (!frames.empty()) {
    auto& [n, next] = frames.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) frames.emplace_back(p, 0);
    } else {
      order.push_back(n);
      frames.pop_back();
    }
  }
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

// ---------------------------------------------------------------------------
// elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same(a, b, "add");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
  return detail::result(a.shape(), std::move(v), {a, b}, [](Node& n) {
    for (int k = 0; k < 2; ++k)
      if (n.parent(k)->requires_grad)
        for (std::size_t i = 0; i < n.grad.size(); ++i) n.parent(k)->grad[i] += n.grad[i];
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same(a, b, "sub");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
  return detail::result(a.shape(), std::move(v), {a, b}, [](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      detail::accumulate(n.parent(0), i, n.grad[i]);
      detail::accumulate(n.parent(1), i, -n.grad[i]);
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same(a, b, "mul");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
  return detail::result(a.shape(), std::move(v), {a, b}, [](Node& n) {
    Node* pa = n.parent(0);
    Node* pb = n.parent(1);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      detail::accumulate(pa, i, n.grad[i] * pb->value[i]);
      detail::accumulate(pb, i, n.grad[i] * pa->value[i]);
    }
  });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * c;
  return detail::result(a.shape(), std::move(v), {a}, [c](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.parent(0)->grad[i] += c * n.grad[i];
  });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + c;
  return detail::result(a.shape(), std::move(v), {a}, [](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.parent(0)->grad[i] += n.grad[i];
  });
}

namespace detail {
template <class F, class D>
Tensor unary(const Tensor& a, F f, D dfdx_from_y_x) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(a[i]);
  return result(a.shape(), std::move(v), {a}, [dfdx_from_y_x](Node& n) {
    Node* p = n.parent(0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i] * dfdx_from_y_x(n.value[i], p->value[i]);
  });
}
}  // namespace detail

inline Tensor relu(const Tensor& a) {
  return detail::unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double, double x) { return x > 0 ? 1.0 : 0.0; });
}

inline Tensor leaky_relu(const Tensor& a, double slope = 0.2) {
  return detail::unary(
      a, [slope](double x) { return x > 0 ? x : slope * x; }, [slope](double, double x) { return x > 0 ? 1.0 : slope; });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary(a, [](double x) { return std::tanh(x); }, [](double y, double) { return 1.0 - y * y; });
}

inline double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(a, sigmoid_scalar, [](double y, double) { return y * (1.0 - y); });
}

inline Tensor square(const Tensor& a) {
  return detail::unary(a, [](double x) { return x * x; }, [](double, double x) { return 2.0 * x; });
}

inline Tensor log(const Tensor& a) {
  return detail::unary(a, [](double x) { return std::log(x); }, [](double, double x) { return 1.0 / x; });
}

// ---------------------------------------------------------------------------
// reductions

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return detail::result({}, {s}, {a}, [](Node& n) {
    for (auto& g : n.parent(0)->grad) g += n.grad[0];
  });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

inline Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }

// m x n -> n (mean over rows)
inline Tensor mean_rows(const Tensor& a) {
  detail::require_rank(a, 2, "mean_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> v(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) v[j] += a.at(i, j);
  for (auto& x : v) x /= static_cast<double>(m);
  return detail::result({n}, std::move(v), {a}, [m, n](Node& nd) {
    Node* p = nd.parent(0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) p->grad[i * n + j] += nd.grad[j] / static_cast<double>(m);
  });
}

// Element i of a vector as a scalar.
inline Tensor pick(const Tensor& a, std::size_t i) {
  if (i >= a.size()) throw ShapeMismatch("pick: index " + std::to_string(i) + " out of " + shape_str(a.shape()));
  return detail::result({}, {a[i]}, {a}, [i](Node& n) { n.parent(0)->grad[i] += n.grad[0]; });
}

// ---------------------------------------------------------------------------
// linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) throw ShapeMismatch("matmul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> c(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = B + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
  return detail::result({m, n}, std::move(c), {a, b}, [m, k, n](Node& nd) {
    Node* pa = nd.parent(0);
    Node* pb = nd.parent(1);
    const double* G = nd.grad.data();
    if (pa->requires_grad) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double* bp = pb->value.data() + p * n;
          const double* gi = G + i * n;
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += gi[j] * bp[j];
          pa->grad[i * k + p] += s;
        }
    }
    if (pb->requires_grad) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = pa->value[i * k + p];
          if (aip == 0.0) continue;
          double* gb = pb->grad.data() + p * n;
          const double* gi = G + i * n;
          for (std::size_t j = 0; j < n; ++j) gb[j] += aip * gi[j];
        }
    }
  });
}

// (m x k) . (k) -> (m)
inline Tensor matvec(const Tensor& a, const Tensor& x) {
  detail::require_rank(a, 2, "matvec");
  detail::require_rank(x, 1, "matvec");
  const std::size_t m = a.rows(), k = a.cols();
  if (x.size() != k) throw ShapeMismatch("matvec: " + shape_str(a.shape()) + " vs " + shape_str(x.shape()));
  std::vector<double> y(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a.data().data() + i * k;
    double s = 0.0;
    for (std::size_t p = 0; p < k; ++p) s += ai[p] * x[p];
    y[i] = s;
  }
  return detail::result({m}, std::move(y), {a, x}, [m, k](Node& nd) {
    Node* pa = nd.parent(0);
    Node* px = nd.parent(1);
    for (std::size_t i = 0; i < m; ++i) {
      const double g = nd.grad[i];
      if (pa->requires_grad)
        for (std::size_t p = 0; p < k; ++p) pa->grad[i * k + p] += g * px->value[p];
      if (px->requires_grad)
        for (std::size_t p = 0; p < k; ++p) px->grad[p] += g * pa->value[i * k + p];
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank(a, 2, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> v(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) v[j * m + i] = a.at(i, j);
  return detail::result({n, m}, std::move(v), {a}, [m, n](Node& nd) {
    Node* p = nd.parent(0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) p->grad[i * n + j] += nd.grad[j * m + i];
  });
}

// ---------------------------------------------------------------------------
// shape manipulation

// Concatenation of vectors.
inline Tensor concat(const std::vector<Tensor>& parts) {
  std::vector<double> v;
  std::vector<std::size_t> sizes;
  for (const auto& t : parts) {
    detail::require_rank(t, 1, "concat");
    v.insert(v.end(), t.data().begin(), t.data().end());
    sizes.push_back(t.size());
  }
  const std::size_t n = v.size();
  return detail::result({n}, std::move(v), parts, [sizes](Node& nd) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      Node* p = nd.parent(k);
      if (p->requires_grad)
        for (std::size_t i = 0; i < sizes[k]; ++i) p->grad[i] += nd.grad[off + i];
      off += sizes[k];
    }
  });
}

// Column-wise concatenation of matrices with equal row counts.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t n = 0;
  for (const auto& t : parts) {
    detail::require_rank(t, 2, "concat_cols");
    if (t.rows() != m) throw ShapeMismatch("concat_cols: " + shape_str(parts[0].shape()) + " vs " + shape_str(t.shape()));
    widths.push_back(t.cols());
    n += t.cols();
  }
  std::vector<double> v(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      std::copy_n(parts[k].data().begin() + static_cast<long>(i * widths[k]), widths[k], v.begin() + static_cast<long>(i * n + off));
      off += widths[k];
    }
  }
  return detail::result({m, n}, std::move(v), parts, [m, n, widths](Node& nd) {
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        Node* p = nd.parent(k);
        if (p->requires_grad)
          for (std::size_t j = 0; j < widths[k]; ++j) p->grad[i * widths[k] + j] += nd.grad[i * n + off + j];
        off += widths[k];
      }
    }
  });
}

// Row-wise concatenation of matrices with equal column counts.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::vector<double> v;
  std::vector<std::size_t> sizes;
  for (const auto& t : parts) {
    detail::require_rank(t, 2, "concat_rows");
    if (t.cols() != n) throw ShapeMismatch("concat_rows: " + shape_str(parts[0].shape()) + " vs " + shape_str(t.shape()));
    v.insert(v.end(), t.data().begin(), t.data().end());
    sizes.push_back(t.size());
  }
  const std::size_t m = v.size() / n;
  return detail::result({m, n}, std::move(v), parts, [sizes](Node& nd) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      Node* p = nd.parent(k);
      if (p->requires_grad)
        for (std::size_t i = 0; i < sizes[k]; ++i) p->grad[i] += nd.grad[off + i];
      off += sizes[k];
    }
  });
}

// Vectors of equal length as the rows of a matrix.
inline Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ShapeMismatch("stack_rows: no inputs");
  const std::size_t n = rows[0].size();
  std::vector<double> v;
  v.reserve(rows.size() * n);
  for (const auto& r : rows) {
    detail::require_rank(r, 1, "stack_rows");
    if (r.size() != n) throw ShapeMismatch("stack_rows: " + shape_str(rows[0].shape()) + " vs " + shape_str(r.shape()));
    v.insert(v.end(), r.data().begin(), r.data().end());
  }
  return detail::result({rows.size(), n}, std::move(v), rows, [n](Node& nd) {
    for (std::size_t k = 0; k < nd.parents.size(); ++k) {
      Node* p = nd.parent(k);
      if (p->requires_grad)
        for (std::size_t j = 0; j < n; ++j) p->grad[j] += nd.grad[k * n + j];
    }
  });
}

inline Tensor row(const Tensor& a, std::size_t i) {
  detail::require_rank(a, 2, "row");
  const std::size_t n = a.cols();
  if (i >= a.rows()) throw ShapeMismatch("row: index " + std::to_string(i) + " out of " + shape_str(a.shape()));
  std::vector<double> v(a.data().begin() + static_cast<long>(i * n), a.data().begin() + static_cast<long>((i + 1) * n));
  return detail::result({n}, std::move(v), {a}, [i, n](Node& nd) {
    for (std::size_t j = 0; j < n; ++j) nd.parent(0)->grad[i * n + j] += nd.grad[j];
  });
}

// Vector as a 1 x n matrix, or any tensor with a new shape of equal size.
inline Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) throw ShapeMismatch("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  return detail::result(std::move(shape), a.data(), {a}, [](Node& nd) {
    for (std::size_t i = 0; i < nd.grad.size(); ++i) nd.parent(0)->grad[i] += nd.grad[i];
  });
}

inline Tensor as_row(const Tensor& v) { return reshape(v, {1, v.size()}); }
inline Tensor flatten(const Tensor& a) { return reshape(a, {a.size()}); }

// m copies of a vector as rows.
inline Tensor repeat_rows(const Tensor& v, std::size_t m) {
  detail::require_rank(v, 1, "repeat_rows");
  const std::size_t n = v.size();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) std::copy(v.data().begin(), v.data().end(), out.begin() + static_cast<long>(i * n));
  return detail::result({m, n}, std::move(out), {v}, [m, n](Node& nd) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) nd.parent(0)->grad[j] += nd.grad[i * n + j];
  });
}

inline Tensor reverse_rows(const Tensor& a) {
  detail::require_rank(a, 2, "reverse_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> v(m * n);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(a.data().begin() + static_cast<long>((m - 1 - i) * n), n, v.begin() + static_cast<long>(i * n));
  return detail::result({m, n}, std::move(v), {a}, [m, n](Node& nd) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) nd.parent(0)->grad[(m - 1 - i) * n + j] += nd.grad[i * n + j];
  });
}

// ---------------------------------------------------------------------------
// broadcasting helpers (only what the agent needs)

// M + v on every row.
inline Tensor add_row(const Tensor& m, const Tensor& v) {
  detail::require_rank(m, 2, "add_row");
  detail::require_rank(v, 1, "add_row");
  const std::size_t r = m.rows(), c = m.cols();
  if (v.size() != c) throw ShapeMismatch("add_row: " + shape_str(m.shape()) + " vs " + shape_str(v.shape()));
  std::vector<double> out(m.data());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += v[j];
  return detail::result({r, c}, std::move(out), {m, v}, [r, c](Node& nd) {
    Node* pm = nd.parent(0);
    Node* pv = nd.parent(1);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        detail::accumulate(pm, i * c + j, nd.grad[i * c + j]);
        detail::accumulate(pv, j, nd.grad[i * c + j]);
      }
  });
}

// M with every row multiplied elementwise by v.
inline Tensor mul_row(const Tensor& m, const Tensor& v) {
  detail::require_rank(m, 2, "mul_row");
  detail::require_rank(v, 1, "mul_row");
  const std::size_t r = m.rows(), c = m.cols();
  if (v.size() != c) throw ShapeMismatch("mul_row: " + shape_str(m.shape()) + " vs " + shape_str(v.shape()));
  std::vector<double> out(m.data());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= v[j];
  return detail::result({r, c}, std::move(out), {m, v}, [r, c](Node& nd) {
    Node* pm = nd.parent(0);
    Node* pv = nd.parent(1);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double g = nd.grad[i * c + j];
        detail::accumulate(pm, i * c + j, g * pv->value[j]);
        detail::accumulate(pv, j, g * pm->value[i * c + j]);
      }
  });
}

// out[i][j] = u[i] + v[j]
inline Tensor add_outer(const Tensor& u, const Tensor& v) {
  detail::require_rank(u, 1, "add_outer");
  detail::require_rank(v, 1, "add_outer");
  const std::size_t r = u.size(), c = v.size();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = u[i] + v[j];
  return detail::result({r, c}, std::move(out), {u, v}, [r, c](Node& nd) {
    Node* pu = nd.parent(0);
    Node* pv = nd.parent(1);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        detail::accumulate(pu, i, nd.grad[i * c + j]);
        detail::accumulate(pv, j, nd.grad[i * c + j]);
      }
  });
}

// ---------------------------------------------------------------------------
// softmax family

namespace detail {

// Stable softmax of x[0..n) into y, over entries where mask is set (all if
// mask is null). Masked entries get 0.
inline void softmax_span(const double* x, double* y, std::size_t n, const unsigned char* mask = nullptr) {
  double mx = -INFINITY;
  for (std::size_t i = 0; i < n; ++i)
    if (!mask || mask[i]) mx = std::max(mx, x[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = (!mask || mask[i]) ? std::exp(x[i] - mx) : 0.0;
    s += y[i];
  }
  for (std::size_t i = 0; i < n; ++i) y[i] /= s;
}

inline void softmax_backward_span(const double* y, const double* gy, double* gx, std::size_t n) {
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) d += gy[i] * y[i];
  for (std::size_t i = 0; i < n; ++i) gx[i] += y[i] * (gy[i] - d);
}

}  // namespace detail

inline Tensor softmax(const Tensor& x) {
  detail::check_finite(x, "softmax");
  if (x.rank() == 2) throw ShapeMismatch("softmax: use softmax_rows for matrices, got " + shape_str(x.shape()));
  std::vector<double> y(x.size());
  detail::softmax_span(x.data().data(), y.data(), x.size());
  return detail::result(x.shape(), std::move(y), {x}, [](Node& nd) {
    detail::softmax_backward_span(nd.value.data(), nd.grad.data(), nd.parent(0)->grad.data(), nd.value.size());
  });
}

// Softmax along each row. With a mask (row-major, same shape as x) only the
// set entries of each row take part; every row needs one set entry.
inline Tensor softmax_rows(const Tensor& x, const std::vector<unsigned char>* mask = nullptr) {
  detail::require_rank(x, 2, "softmax_rows");
  detail::check_finite(x, "softmax_rows");
  const std::size_t r = x.rows(), c = x.cols();
  if (mask && mask->size() != x.size()) throw ShapeMismatch("softmax_rows: mask size mismatch " + shape_str(x.shape()));
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < r; ++i)
    detail::softmax_span(x.data().data() + i * c, y.data() + i * c, c, mask ? mask->data() + i * c : nullptr);
  return detail::result({r, c}, std::move(y), {x}, [r, c](Node& nd) {
    for (std::size_t i = 0; i < r; ++i)
      detail::softmax_backward_span(nd.value.data() + i * c, nd.grad.data() + i * c, nd.parent(0)->grad.data() + i * c, c);
  });
}

inline Tensor log_softmax(const Tensor& x) {
  detail::require_rank(x, 1, "log_softmax");
  detail::check_finite(x, "log_softmax");
  const std::size_t n = x.size();
  double mx = *std::max_element(x.data().begin(), x.data().end());
  double s = 0.0;
  for (double v : x.data()) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - lse;
  return detail::result({n}, std::move(y), {x}, [n](Node& nd) {
    double gs = 0.0;
    for (double g : nd.grad) gs += g;
    for (std::size_t i = 0; i < n; ++i) nd.parent(0)->grad[i] += nd.grad[i] - std::exp(nd.value[i]) * gs;
  });
}

// ---------------------------------------------------------------------------
// gradient checking

// Central-difference check of d(f())/d(param) for every entry of every
// parameter; returns the largest |a - n| / max(|a|, |n|, 1e-3).
inline double max_gradient_error(const std::function<Tensor()>& f, std::vector<Tensor> params, double eps = 1e-6) {
  for (auto& p : params) p.zero_grad();
  Tensor loss = f();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.push_back(p.grad());
  double worst = 0.0;
  NoGrad guard;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& data = params[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + eps;
      const double up = f().item();
      data[i] = orig - eps;
      const double down = f().item();
      data[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace twc::tensor
