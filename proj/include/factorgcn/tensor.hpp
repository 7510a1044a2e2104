#pragma once

// Dense double-precision tensors with a reverse-mode gradient record.
//
// A Tensor is a shared handle to a node. Operations on tensors that require
// gradients append nodes to an implicit DAG; Tensor::backward() walks that DAG
// once in reverse topological order. Leaf gradients accumulate (+=) across
// backward calls until zero_grad() is called.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "factorgcn/errors.hpp"

namespace factorgcn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

struct Node {
  std::string_view op = "leaf";
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is written
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(const Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (shape_size(shape) != values.size()) {
      throw ShapeError("tensor of shape " + shape_string(shape) + " cannot hold " +
                       std::to_string(values.size()) + " values");
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return from({1}, {value}, requires_grad);
  }

  /// Row-major matrix literal, e.g. Tensor::matrix({{1, 2}, {3, 4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged matrix literal");
      values.insert(values.end(), row.begin(), row.end());
    }
    return from({r, c}, std::move(values), requires_grad);
  }

  static Tensor vector(std::vector<double> values, bool requires_grad = false) {
    const std::size_t n = values.size();
    return from({n}, std::move(values), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rows() const { return rank() == 2 ? dim(0) : 1; }
  std::size_t cols() const { return rank() == 2 ? dim(1) : (rank() == 1 ? dim(0) : 1); }

  std::span<const double> data() const { return node_->data; }
  /// Direct write access; intended for parameters and optimizers, not for
  /// tensors that already feed recorded operations.
  std::span<double> mutable_data() { return node_->data; }

  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }
  double item() const {
    if (size() != 1) throw UsageError("item() on tensor of shape " + shape_string(shape()));
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  std::string_view op() const { return node_->op; }
  bool has_grad() const { return node_->grad.size() == node_->data.size() && !node_->data.empty(); }
  /// Gradient values; all zeros when nothing has been accumulated yet.
  std::vector<double> grad() const {
    if (node_->grad.size() == node_->data.size()) return node_->grad;
    return std::vector<double>(node_->data.size(), 0.0);
  }
  void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

  /// A constant copy of the values, cut from the gradient record.
  Tensor detach() const { return from(shape(), node_->data, false); }

  void backward() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  friend Tensor make_result(std::string_view, Shape, std::vector<double>,
                            std::vector<Tensor>, std::function<void(const detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

/// Creates an operation result. The backward rule is kept only if some input
/// requires a gradient.
inline Tensor make_result(std::string_view op, Shape shape, std::vector<double> values,
                          std::vector<Tensor> inputs,
                          std::function<void(const detail::Node&)> backward) {
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  auto& node = *out.node_;
  node.op = op;
  if (needs) {
    node.requires_grad = true;
    node.inputs.reserve(inputs.size());
    for (auto& t : inputs) node.inputs.push_back(t.node_);
    node.backward = std::move(backward);
  }
  return out;
}

inline void Tensor::backward() const {
  if (size() != 1) {
    throw UsageError("backward() requires a scalar, got shape " + shape_string(shape()));
  }
  if (!requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are per-pass scratch; only leaves accumulate.
  for (auto* node : order) {
    if (!node->inputs.empty()) node->grad.assign(node->data.size(), 0.0);
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

namespace detail {

inline void require_matrix(const Tensor& t, std::string_view op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got shape " +
                     shape_string(t.shape()));
  }
}

inline void accumulate(const std::shared_ptr<Node>& target, std::span<const double> g) {
  if (!target->requires_grad) return;
  auto& buf = target->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

// Maps each flat index of `a` to a flat index of a broadcastable `b`.
struct Broadcast {
  enum class Kind { same, scalar, row, column } kind;
  std::size_t cols = 1;

  std::size_t operator()(std::size_t i) const {
    switch (kind) {
      case Kind::same: return i;
      case Kind::scalar: return 0;
      case Kind::row: return i % cols;
      case Kind::column: return i / cols;
    }
    return i;
  }
};

inline Broadcast broadcast_plan(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() == b.shape()) return {Broadcast::Kind::same};
  if (b.size() == 1) return {Broadcast::Kind::scalar};
  if (a.rank() == 2) {
    const std::size_t m = a.dim(0), n = a.dim(1);
    const bool row = (b.rank() == 1 && b.dim(0) == n) ||
                     (b.rank() == 2 && b.dim(0) == 1 && b.dim(1) == n);
    if (row) return {Broadcast::Kind::row, n};
    if (b.rank() == 2 && b.dim(0) == m && b.dim(1) == 1) return {Broadcast::Kind::column, n};
  }
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(b.shape()) + " onto " +
                   shape_string(a.shape()));
}

template <class Forward, class Partials>
Tensor binary_op(std::string_view name, const Tensor& a, const Tensor& b, Forward f,
                 Partials partials) {
  const Broadcast bc = broadcast_plan(a, b, name);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = f(ad[i], bd[bc(i)]);
  return make_result(name, a.shape(), std::move(out), {a, b},
                     [bc, partials](const Node& self) {
                       const auto& na = self.inputs[0];
                       const auto& nb = self.inputs[1];
                       std::vector<double>* ga = na->requires_grad ? &na->grad_buffer() : nullptr;
                       std::vector<double>* gb = nb->requires_grad ? &nb->grad_buffer() : nullptr;
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         const std::size_t j = bc(i);
                         const auto [da, db] = partials(na->data[i], nb->data[j]);
                         if (ga) (*ga)[i] += self.grad[i] * da;
                         if (gb) (*gb)[j] += self.grad[i] * db;
                       }
                     });
}

// `derivative(x, y)` receives the input and the forward output.
template <class Forward, class Derivative>
Tensor unary_op(std::string_view name, const Tensor& x, Forward f, Derivative derivative) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  return make_result(name, x.shape(), std::move(out), {x}, [derivative](const Node& self) {
    const auto& in = self.inputs[0];
    auto& g = in->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      g[i] += self.grad[i] * derivative(in->data[i], self.data[i]);
    }
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return std::pair{1.0, 1.0}; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return std::pair{1.0, -1.0}; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair{y, x}; });
}

inline Tensor scale(const Tensor& x, double factor) {
  return detail::unary_op(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

inline double sigmoid(double x) {
  // Branches keep exp() from overflowing for large |x|.
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary_op(
      "sigmoid", x, [](double v) { return sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary_op(
      "relu", x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

inline Tensor leaky_relu(const Tensor& x, double slope) {
  return detail::unary_op(
      "leaky_relu", x, [slope](double v) { return v > 0 ? v : slope * v; },
      [slope](double v, double) { return v > 0 ? 1.0 : slope; });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary_op(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0)) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return detail::unary_op(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * bd[p * n + j];
    }
  }
  return make_result("matmul", {m, n}, std::move(out), {a, b},
                     [m, k, n](const detail::Node& self) {
                       const auto& na = self.inputs[0];
                       const auto& nb = self.inputs[1];
                       const auto& g = self.grad;
                       if (na->requires_grad) {  // dA = G * B^T
                         auto& ga = na->grad_buffer();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             double s = 0;
                             for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * nb->data[p * n + j];
                             ga[i * k + p] += s;
                           }
                       }
                       if (nb->requires_grad) {  // dB = A^T * G
                         auto& gb = nb->grad_buffer();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             const double av = na->data[i * k + p];
                             if (av == 0.0) continue;
                             for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
                           }
                       }
                     });
}

inline Tensor transpose(const Tensor& x) {
  detail::require_matrix(x, "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  const auto xd = x.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = xd[i * n + j];
  return make_result("transpose", {n, m}, std::move(out), {x}, [m, n](const detail::Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

/// x · Wᵀ, the row-per-sample form of a linear map with weight W (out × in).
inline Tensor linear(const Tensor& x, const Tensor& weight) { return matmul(x, transpose(weight)); }

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x) {
  double s = 0;
  for (double v : x.data()) s += v;
  return make_result("sum", {1}, {s}, {x}, [](const detail::Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (double& v : g) v += self.grad[0];
  });
}

inline Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean of an empty tensor");
  const double inv = 1.0 / static_cast<double>(x.size());
  double s = 0;
  for (double v : x.data()) s += v;
  return make_result("mean", {1}, {s * inv}, {x}, [inv](const detail::Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (double& v : g) v += self.grad[0] * inv;
  });
}

namespace detail {

// Views the tensor as [outer, len, inner] around `axis`.
struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

inline AxisView axis_view(const Shape& shape, std::size_t axis, std::string_view op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " +
                     shape_string(shape));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

inline Tensor reduce_axis(std::string_view name, const Tensor& x, std::size_t axis, bool keepdims,
                          bool average) {
  const AxisView v = axis_view(x.shape(), axis, name);
  if (average && v.len == 0) throw ShapeError(std::string(name) + " over an empty axis");
  const double factor = average ? 1.0 / static_cast<double>(v.len) : 1.0;
  Shape out_shape = x.shape();
  if (keepdims) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out_shape.empty()) out_shape = {1};
  }
  const auto xd = x.data();
  std::vector<double> out(v.outer * v.inner, 0.0);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t l = 0; l < v.len; ++l)
      for (std::size_t i = 0; i < v.inner; ++i)
        out[o * v.inner + i] += xd[(o * v.len + l) * v.inner + i];
  for (double& s : out) s *= factor;
  return make_result(name, std::move(out_shape), std::move(out), {x},
                     [v, factor](const Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t o = 0; o < v.outer; ++o)
                         for (std::size_t l = 0; l < v.len; ++l)
                           for (std::size_t i = 0; i < v.inner; ++i)
                             g[(o * v.len + l) * v.inner + i] += self.grad[o * v.inner + i] * factor;
                     });
}

}  // namespace detail

inline Tensor sum(const Tensor& x, std::size_t axis, bool keepdims = false) {
  return detail::reduce_axis("sum_axis", x, axis, keepdims, false);
}

inline Tensor mean(const Tensor& x, std::size_t axis, bool keepdims = false) {
  return detail::reduce_axis("mean_axis", x, axis, keepdims, true);
}

// ---------------------------------------------------------------------------
// Structural

inline Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  detail::axis_view(first, axis, "concat");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis && p.dim(d) != first[d]) {
        throw ShapeError("concat: " + shape_string(p.shape()) + " does not match " +
                         shape_string(first) + " off axis " + std::to_string(axis));
      }
    }
    lens.push_back(p.dim(axis));
    out_shape[axis] += p.dim(axis);
  }
  const auto v = detail::axis_view(out_shape, axis, "concat");
  std::vector<double> out(shape_size(out_shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pd = parts[k].data();
    for (std::size_t o = 0; o < v.outer; ++o)
      std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(o * lens[k] * v.inner), lens[k] * v.inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * v.len + offset) * v.inner));
    offset += lens[k];
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result("concat", std::move(out_shape), std::move(out), std::move(inputs),
                     [v, lens](const detail::Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < lens.size(); ++k) {
                         const auto& in = self.inputs[k];
                         if (in->requires_grad) {
                           auto& g = in->grad_buffer();
                           for (std::size_t o = 0; o < v.outer; ++o)
                             for (std::size_t l = 0; l < lens[k] * v.inner; ++l)
                               g[o * lens[k] * v.inner + l] +=
                                   self.grad[(o * v.len + offset) * v.inner + l];
                         }
                         offset += lens[k];
                       }
                     });
}

inline Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

/// Half-open range [begin, end) along `axis`.
inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto v = detail::axis_view(x.shape(), axis, "slice");
  if (begin > end || end > v.len) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") outside axis of length " + std::to_string(v.len));
  }
  const std::size_t len = end - begin;
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  const auto xd = x.data();
  std::vector<double> out(v.outer * len * v.inner);
  for (std::size_t o = 0; o < v.outer; ++o)
    std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>((o * v.len + begin) * v.inner),
                len * v.inner, out.begin() + static_cast<std::ptrdiff_t>(o * len * v.inner));
  return make_result("slice", std::move(out_shape), std::move(out), {x},
                     [v, begin, len](const detail::Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t o = 0; o < v.outer; ++o)
                         for (std::size_t l = 0; l < len * v.inner; ++l)
                           g[(o * v.len + begin) * v.inner + l] += self.grad[o * len * v.inner + l];
                     });
}

/// Same values under a new shape of equal size.
inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  return make_result("reshape", std::move(shape), {x.data().begin(), x.data().end()}, {x},
                     [](const detail::Node& self) { detail::accumulate(self.inputs[0], self.grad); });
}

/// Rows of a matrix picked by index; repeated indices are allowed.
inline Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  detail::require_matrix(x, "gather_rows");
  const std::size_t n = x.dim(1);
  const auto xd = x.data();
  std::vector<double> out(index.size() * n);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= x.dim(0)) throw ShapeError("gather_rows: index out of range");
    std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(index[r] * n), n,
                out.begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result("gather_rows", {index.size(), n}, std::move(out), {x},
                     [idx = std::move(idx), n](const detail::Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t r = 0; r < idx.size(); ++r)
                         for (std::size_t c = 0; c < n; ++c) g[idx[r] * n + c] += self.grad[r * n + c];
                     });
}

/// Sparse weighted neighbour sum over a list of arcs:
///   out[src[k]] += weight[k] * scale[k] * x[dst[k]]
/// `weight` holds one value per arc (shape [m] or [m,1]) and takes gradients;
/// `scale` is a constant per-arc factor. Rows with no outgoing arc stay zero.
inline Tensor weighted_neighbor_sum(const Tensor& x, const Tensor& weight,
                                    std::span<const std::size_t> src,
                                    std::span<const std::size_t> dst,
                                    std::span<const double> scale) {
  detail::require_matrix(x, "weighted_neighbor_sum");
  const std::size_t m = src.size();
  if (dst.size() != m || scale.size() != m || weight.size() != m) {
    throw ShapeError("weighted_neighbor_sum: arc arrays and weights disagree in length");
  }
  const std::size_t rows = x.dim(0), f = x.dim(1);
  const auto xd = x.data();
  const auto wd = weight.data();
  std::vector<double> out(rows * f, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    if (src[k] >= rows || dst[k] >= rows) throw ShapeError("weighted_neighbor_sum: arc out of range");
    const double c = wd[k] * scale[k];
    for (std::size_t j = 0; j < f; ++j) out[src[k] * f + j] += c * xd[dst[k] * f + j];
  }
  std::vector<std::size_t> s(src.begin(), src.end()), d(dst.begin(), dst.end());
  std::vector<double> sc(scale.begin(), scale.end());
  return make_result(
      "weighted_neighbor_sum", {rows, f}, std::move(out), {x, weight},
      [s = std::move(s), d = std::move(d), sc = std::move(sc), f](const detail::Node& self) {
        const auto& nx = self.inputs[0];
        const auto& nw = self.inputs[1];
        std::vector<double>* gx = nx->requires_grad ? &nx->grad_buffer() : nullptr;
        std::vector<double>* gw = nw->requires_grad ? &nw->grad_buffer() : nullptr;
        for (std::size_t k = 0; k < s.size(); ++k) {
          const double* go = &self.grad[s[k] * f];
          if (gx) {
            const double c = nw->data[k] * sc[k];
            for (std::size_t j = 0; j < f; ++j) (*gx)[d[k] * f + j] += c * go[j];
          }
          if (gw) {
            double dot = 0;
            for (std::size_t j = 0; j < f; ++j) dot += go[j] * nx->data[d[k] * f + j];
            (*gw)[k] += dot * sc[k];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Softmax and losses

inline Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto v = detail::axis_view(x.shape(), axis, "softmax");
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t i = 0; i < v.inner; ++i) {
      auto at = [&](std::size_t l) { return (o * v.len + l) * v.inner + i; };
      double mx = -INFINITY;
      for (std::size_t l = 0; l < v.len; ++l) mx = std::max(mx, xd[at(l)]);
      double z = 0;
      for (std::size_t l = 0; l < v.len; ++l) z += (out[at(l)] = std::exp(xd[at(l)] - mx));
      for (std::size_t l = 0; l < v.len; ++l) out[at(l)] /= z;
    }
  return make_result("softmax", x.shape(), std::move(out), {x}, [v](const detail::Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t i = 0; i < v.inner; ++i) {
        auto at = [&](std::size_t l) { return (o * v.len + l) * v.inner + i; };
        double dot = 0;
        for (std::size_t l = 0; l < v.len; ++l) dot += self.grad[at(l)] * self.data[at(l)];
        for (std::size_t l = 0; l < v.len; ++l)
          g[at(l)] += self.data[at(l)] * (self.grad[at(l)] - dot);
      }
  });
}

/// Clamp applied to probabilities before any log in the losses below.
inline constexpr double probability_clip = 1e-7;

/// Mean binary cross-entropy; `pred` holds probabilities, `target` 0/1 values.
inline Tensor binary_cross_entropy(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("binary_cross_entropy: " + shape_string(pred.shape()) + " vs " +
                     shape_string(target.shape()));
  }
  if (pred.size() == 0) throw ShapeError("binary_cross_entropy of empty tensors");
  for (double t : target.data()) {
    if (t != 0.0 && t != 1.0) throw InputError("binary_cross_entropy: target must be 0 or 1");
  }
  const auto pd = pred.data();
  const auto td = target.data();
  const double inv = 1.0 / static_cast<double>(pd.size());
  double loss = 0;
  for (std::size_t i = 0; i < pd.size(); ++i) {
    const double p = std::clamp(pd[i], probability_clip, 1.0 - probability_clip);
    loss -= td[i] * std::log(p) + (1.0 - td[i]) * std::log(1.0 - p);
  }
  return make_result("binary_cross_entropy", {1}, {loss * inv}, {pred},
                     [inv, t = std::vector<double>(td.begin(), td.end())](const detail::Node& self) {
                       const auto& np = self.inputs[0];
                       auto& g = np->grad_buffer();
                       for (std::size_t i = 0; i < t.size(); ++i) {
                         const double p = np->data[i];
                         if (p < probability_clip || p > 1.0 - probability_clip) continue;
                         g[i] += self.grad[0] * inv * (p - t[i]) / (p * (1.0 - p));
                       }
                     });
}

/// Mean negative log-likelihood of class `targets[r]` under probability rows.
inline Tensor nll_loss(const Tensor& probs, std::span<const std::size_t> targets) {
  detail::require_matrix(probs, "nll_loss");
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  if (targets.size() != n) throw ShapeError("nll_loss: one target per row required");
  if (n == 0) throw ShapeError("nll_loss of an empty batch");
  for (auto t : targets) {
    if (t >= c) throw InputError("nll_loss: class index " + std::to_string(t) + " out of range");
  }
  const auto pd = probs.data();
  const double inv = 1.0 / static_cast<double>(n);
  double loss = 0;
  for (std::size_t r = 0; r < n; ++r)
    loss -= std::log(std::clamp(pd[r * c + targets[r]], probability_clip, 1.0 - probability_clip));
  std::vector<std::size_t> t(targets.begin(), targets.end());
  return make_result("nll_loss", {1}, {loss * inv}, {probs},
                     [inv, c, t = std::move(t)](const detail::Node& self) {
                       const auto& np = self.inputs[0];
                       auto& g = np->grad_buffer();
                       for (std::size_t r = 0; r < t.size(); ++r) {
                         const double p = np->data[r * c + t[r]];
                         if (p < probability_clip || p > 1.0 - probability_clip) continue;
                         g[r * c + t[r]] -= self.grad[0] * inv / p;
                       }
                     });
}

/// Mean cross-entropy of logit rows against class indices.
inline Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  detail::require_matrix(logits, "cross_entropy");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (targets.size() != n) throw ShapeError("cross_entropy: one target per row required");
  if (n == 0) throw ShapeError("cross_entropy of an empty batch");
  for (auto t : targets) {
    if (t >= c) throw InputError("cross_entropy: class index " + std::to_string(t) + " out of range");
  }
  const auto ld = logits.data();
  std::vector<double> probs(ld.size());
  double loss = 0;
  for (std::size_t r = 0; r < n; ++r) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, ld[r * c + j]);
    double z = 0;
    for (std::size_t j = 0; j < c; ++j) z += (probs[r * c + j] = std::exp(ld[r * c + j] - mx));
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] /= z;
    loss -= ld[r * c + targets[r]] - mx - std::log(z);
  }
  const double inv = 1.0 / static_cast<double>(n);
  std::vector<std::size_t> t(targets.begin(), targets.end());
  return make_result("cross_entropy", {1}, {loss * inv}, {logits},
                     [inv, c, probs = std::move(probs), t = std::move(t)](const detail::Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t r = 0; r < t.size(); ++r)
                         for (std::size_t j = 0; j < c; ++j)
                           g[r * c + j] +=
                               self.grad[0] * inv * (probs[r * c + j] - (j == t[r] ? 1.0 : 0.0));
                     });
}

/// Mean absolute difference.
inline Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  if (pred.size() != target.size()) {
    throw ShapeError("l1_loss: " + shape_string(pred.shape()) + " vs " +
                     shape_string(target.shape()));
  }
  if (pred.size() == 0) throw ShapeError("l1_loss of empty tensors");
  const auto pd = pred.data();
  const auto td = target.data();
  const double inv = 1.0 / static_cast<double>(pd.size());
  double loss = 0;
  for (std::size_t i = 0; i < pd.size(); ++i) loss += std::abs(pd[i] - td[i]);
  return make_result("l1_loss", {1}, {loss * inv}, {pred, target}, [inv](const detail::Node& self) {
    const auto& np = self.inputs[0];
    const auto& nt = self.inputs[1];
    for (std::size_t i = 0; i < np->data.size(); ++i) {
      const double diff = np->data[i] - nt->data[i];
      const double s = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
      if (np->requires_grad) np->grad_buffer()[i] += self.grad[0] * inv * s;
      if (nt->requires_grad) nt->grad_buffer()[i] -= self.grad[0] * inv * s;
    }
  });
}

}  // namespace factorgcn
