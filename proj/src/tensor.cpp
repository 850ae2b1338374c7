#include "restad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "restad/errors.hpp"

namespace restad {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

namespace {

thread_local bool g_grad_enabled = true;
std::size_t g_num_threads = 1;

// Splits [0, n) into contiguous chunks. Every index is handled by exactly one
// call of `body`, so results are independent of the thread count.
template <typename F>
void parallel_for(std::size_t n, std::size_t work_per_item, F&& body) {
  const std::size_t threads = std::min(g_num_threads, n);
  if (threads <= 1 || n * work_per_item < 32768) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  const std::size_t chunk = (n + threads - 1) / threads;
  auto run = [&](std::size_t begin) {
    const std::size_t end = std::min(n, begin + chunk);
    for (std::size_t i = begin; i < end; ++i) body(i);
  };
  for (std::size_t t = 1; t < threads; ++t) {
    if (t * chunk < n) pool.emplace_back(run, t * chunk);
  }
  run(0);
  for (auto& th : pool) th.join();
}

NodePtr make_node(Shape shape, std::vector<double> value, const char* op) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  return node;
}

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Attaches inputs and backward rule when any input participates in the tape.
Tensor finish(NodePtr out, std::initializer_list<const Tensor*> inputs,
              std::function<void(Node&)> rule) {
  if (any_requires_grad(inputs)) {
    out->requires_grad = true;
    for (const Tensor* t : inputs) out->inputs.push_back(t->node());
    out->backward = std::move(rule);
  }
  return Tensor(std::move(out));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor operand");
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa == sb) return sa;
  if (b.size() == 1) return sa;
  if (a.size() == 1) return sb;
  if (is_suffix(sb, sa)) return sa;
  if (is_suffix(sa, sb)) return sb;
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(sa) + " with " +
                       shape_string(sb));
}

void accumulate_broadcast(Node& target, std::span<const double> g) {
  if (!target.requires_grad) return;
  auto& tg = target.ensure_grad();
  const std::size_t n = tg.size();
  if (n == g.size()) {
    for (std::size_t i = 0; i < n; ++i) tg[i] += g[i];
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) tg[i % n] += g[i];
  }
}

template <typename Fwd>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, Fwd fwd,
              std::function<void(Node&)> rule) {
  require_defined(a, op);
  require_defined(b, op);
  Shape shape = broadcast_shape(a, b, op);
  const std::size_t n = shape_numel(shape);
  auto av = a.values();
  auto bv = b.values();
  const std::size_t na = av.size();
  const std::size_t nb = bv.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i % na], bv[i % nb]);
  return finish(make_node(std::move(shape), std::move(out), op), {&a, &b}, std::move(rule));
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Deriv deriv) {
  require_defined(a, op);
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return finish(make_node(a.shape(), std::move(out), op), {&a}, [deriv](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * deriv(in.value[i], self.value[i]);
    }
  });
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor of shape " + shape_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  node_ = make_node(std::move(shape), std::move(values), "leaf");
  node_->requires_grad = requires_grad;
  if (requires_grad) node_->ensure_grad();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const {
  require_defined(*this, "shape");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::size() const { return defined() ? node_->value.size() : 0; }

std::span<const double> Tensor::values() const& {
  require_defined(*this, "values");
  return node_->value;
}

std::span<double> Tensor::mutable_values() {
  require_defined(*this, "mutable_values");
  if (!is_leaf()) throw ContractError("mutable_values: only leaf tensors may be written in place");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item: tensor of shape " + shape_string(shape()) + " is not a scalar");
  return node_->value[0];
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

bool Tensor::is_leaf() const { return defined() && !node_->backward; }

std::vector<double> Tensor::to_vector() const {
  auto v = values();
  return {v.begin(), v.end()};
}

std::span<const double> Tensor::grad() const& {
  if (!requires_grad()) return {};
  return node_->ensure_grad();
}

std::span<double> Tensor::mutable_grad() {
  if (!requires_grad()) return {};
  return node_->ensure_grad();
}

void Tensor::zero_grad() {
  if (requires_grad()) std::fill(node_->ensure_grad().begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  require_defined(*this, "detach");
  return Tensor(node_->shape, node_->value, false);
}

Tensor Tensor::clone() const {
  require_defined(*this, "clone");
  return Tensor(node_->shape, node_->value, node_->requires_grad);
}

// ---------------------------------------------------------------------------
// Tape

Tape Tape::record(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss does not depend on any tensor that requires grad");
  }
  Tape tape;
  std::unordered_set<const Node*> visited;
  // Iterative post-order DFS: a node is emitted after all of its inputs.
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodePtr child = node->inputs[next++];
      if (child->requires_grad && visited.insert(child.get()).second) {
        stack.emplace_back(std::move(child), 0);
      }
    } else {
      tape.order_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

void Tape::backward() {
  if (order_.empty()) return;
  for (auto& node : order_) {
    if (!node->backward) continue;
    auto& g = node->ensure_grad();
    std::fill(g.begin(), g.end(), 0.0);
  }
  order_.back()->ensure_grad()[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node& node = **it;
    if (node.backward) node.backward(node);
  }
}

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(order_.size());
  for (const auto& n : order_) names.emplace_back(n->op);
  return names;
}

void backward(const Tensor& loss) { Tape::record(loss).backward(); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_mode_enabled() { return g_grad_enabled; }

void set_num_threads(std::size_t n) { g_num_threads = std::max<std::size_t>(1, n); }
std::size_t num_threads() { return g_num_threads; }

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; }, [](Node& self) {
    accumulate_broadcast(*self.inputs[0], self.grad);
    accumulate_broadcast(*self.inputs[1], self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, "sub", [](double x, double y) { return x - y; }, [](Node& self) {
    accumulate_broadcast(*self.inputs[0], self.grad);
    if (self.inputs[1]->requires_grad) {
      std::vector<double> neg(self.grad.size());
      for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -self.grad[i];
      accumulate_broadcast(*self.inputs[1], neg);
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, "mul", [](double x, double y) { return x * y; }, [](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const std::size_t n = self.grad.size();
    const std::size_t sa = na.value.size();
    const std::size_t sb = nb.value.size();
    std::vector<double> tmp(n);
    if (na.requires_grad) {
      for (std::size_t i = 0; i < n; ++i) tmp[i] = self.grad[i] * nb.value[i % sb];
      accumulate_broadcast(na, tmp);
    }
    if (nb.requires_grad) {
      for (std::size_t i = 0; i < n; ++i) tmp[i] = self.grad[i] * na.value[i % sa];
      accumulate_broadcast(nb, tmp);
    }
  });
}

Tensor negate(const Tensor& a) {
  return unary(a, "negate", [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, "scale", [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Tensor exp(const Tensor& a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor square(const Tensor& a) {
  return unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double total = 0.0;
  for (double v : a.values()) total += v;
  return finish(make_node({1}, {total}, "sum"), {&a}, [](Node& self) {
    Node& in = *self.inputs[0];
    auto& g = in.ensure_grad();
    for (double& x : g) x += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

// ---------------------------------------------------------------------------
// matmul

namespace {

struct MatmulDims {
  std::size_t n, k, m;
  std::size_t batch;
  bool a_batched, b_batched;
  Shape out_shape;
};

MatmulDims matmul_dims(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  auto mismatch = [&] {
    return DimensionError("matmul: incompatible shapes " + shape_string(sa) + " and " + shape_string(sb));
  };
  if (sa.size() < 2 || sb.size() < 2) throw mismatch();
  MatmulDims d{};
  d.n = sa[sa.size() - 2];
  d.k = sa.back();
  d.m = sb.back();
  if (sb[sb.size() - 2] != d.k) throw mismatch();
  const Shape batch_a(sa.begin(), sa.end() - 2);
  const Shape batch_b(sb.begin(), sb.end() - 2);
  Shape batch;
  if (batch_a == batch_b) {
    batch = batch_a;
    d.a_batched = d.b_batched = !batch.empty();
  } else if (batch_b.empty()) {
    batch = batch_a;
    d.a_batched = true;
    d.b_batched = false;
  } else if (batch_a.empty()) {
    batch = batch_b;
    d.a_batched = false;
    d.b_batched = true;
  } else {
    throw mismatch();
  }
  d.batch = shape_numel(batch);
  d.out_shape = batch;
  d.out_shape.push_back(d.n);
  d.out_shape.push_back(d.m);
  return d;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  const MatmulDims d = matmul_dims(a, b);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  std::vector<double> out(d.batch * d.n * d.m, 0.0);
  double* ov = out.data();
  parallel_for(d.batch * d.n, d.k * d.m, [&](std::size_t row) {
    const std::size_t bi = row / d.n;
    const std::size_t i = row % d.n;
    const double* arow = av + (d.a_batched ? bi * d.n * d.k : 0) + i * d.k;
    const double* bmat = bv + (d.b_batched ? bi * d.k * d.m : 0);
    double* orow = ov + row * d.m;
    for (std::size_t p = 0; p < d.k; ++p) {
      const double s = arow[p];
      const double* brow = bmat + p * d.m;
      for (std::size_t j = 0; j < d.m; ++j) orow[j] += s * brow[j];
    }
  });
  return finish(make_node(d.out_shape, std::move(out), "matmul"), {&a, &b}, [d](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const double* g = self.grad.data();
    if (na.requires_grad) {
      double* ga = na.ensure_grad().data();
      const double* bval = nb.value.data();
      // dA = dC * B^T; when A is shared across batches, rows accumulate in batch order.
      const std::size_t a_count = d.a_batched ? d.batch : 1;
      parallel_for(a_count * d.n, d.k * d.m, [&](std::size_t row) {
        const std::size_t ab = row / d.n;
        const std::size_t i = row % d.n;
        double* garow = ga + row * d.k;
        const std::size_t b_from = d.a_batched ? ab : 0;
        const std::size_t b_to = d.a_batched ? ab + 1 : d.batch;
        for (std::size_t bi = b_from; bi < b_to; ++bi) {
          const double* grow = g + (bi * d.n + i) * d.m;
          const double* bmat = bval + (d.b_batched ? bi * d.k * d.m : 0);
          for (std::size_t p = 0; p < d.k; ++p) {
            const double* brow = bmat + p * d.m;
            double acc = 0.0;
            for (std::size_t j = 0; j < d.m; ++j) acc += grow[j] * brow[j];
            garow[p] += acc;
          }
        }
      });
    }
    if (nb.requires_grad) {
      double* gb = nb.ensure_grad().data();
      const double* aval = na.value.data();
      // dB = A^T * dC, one task per row of B.
      const std::size_t b_count = d.b_batched ? d.batch : 1;
      parallel_for(b_count * d.k, d.n * d.m, [&](std::size_t row) {
        const std::size_t bb = row / d.k;
        const std::size_t p = row % d.k;
        double* gbrow = gb + row * d.m;
        const std::size_t b_from = d.b_batched ? bb : 0;
        const std::size_t b_to = d.b_batched ? bb + 1 : d.batch;
        for (std::size_t bi = b_from; bi < b_to; ++bi) {
          const double* amat = aval + (d.a_batched ? bi * d.n * d.k : 0);
          for (std::size_t i = 0; i < d.n; ++i) {
            const double s = amat[i * d.k + p];
            const double* grow = g + (bi * d.n + i) * d.m;
            for (std::size_t j = 0; j < d.m; ++j) gbrow[j] += s * grow[j];
          }
        }
      });
    }
  });
}

// ---------------------------------------------------------------------------
// softmax

Tensor softmax(const Tensor& a, std::size_t axis) {
  require_defined(a, "softmax");
  const Shape& s = a.shape();
  if (axis >= s.size()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  auto av = a.values();
  std::vector<double> out(av.size());
  parallel_for(outer * inner, len * 4, [&](std::size_t line) {
    const std::size_t o = line / inner;
    const std::size_t in = line % inner;
    const std::size_t base = o * len * inner + in;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, av[base + j * inner]);
    double total = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      const double e = std::exp(av[base + j * inner] - mx);
      out[base + j * inner] = e;
      total += e;
    }
    for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
  });
  return finish(make_node(s, std::move(out), "softmax"), {&a}, [outer, inner, len](Node& self) {
    Node& in_node = *self.inputs[0];
    auto& g = in_node.ensure_grad();
    parallel_for(outer * inner, len * 4, [&](std::size_t line) {
      const std::size_t o = line / inner;
      const std::size_t in = line % inner;
      const std::size_t base = o * len * inner + in;
      double dot = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t idx = base + j * inner;
        dot += self.grad[idx] * self.value[idx];
      }
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t idx = base + j * inner;
        g[idx] += self.value[idx] * (self.grad[idx] - dot);
      }
    });
  });
}

Tensor softmax_last(const Tensor& a) { return softmax(a, a.rank() - 1); }

// ---------------------------------------------------------------------------
// layer_norm

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  require_defined(a, "layer_norm");
  const std::size_t width = a.shape().back();
  if (gain.shape() != Shape{width} || bias.shape() != Shape{width}) {
    throw DimensionError("layer_norm: gain " + shape_string(gain.shape()) + " and bias " +
                         shape_string(bias.shape()) + " must match last dim of " +
                         shape_string(a.shape()));
  }
  const std::size_t rows = a.size() / width;
  auto av = a.values();
  auto gv = gain.values();
  auto bv = bias.values();
  std::vector<double> out(av.size());
  // Cache normalized values and inverse std for the backward rule.
  auto normed = std::make_shared<std::vector<double>>(av.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * width;
    double mu = 0.0;
    for (std::size_t j = 0; j < width; ++j) mu += x[j];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(width);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < width; ++j) {
      const double xh = (x[j] - mu) * is;
      (*normed)[r * width + j] = xh;
      out[r * width + j] = gv[j] * xh + bv[j];
    }
  }
  return finish(make_node(a.shape(), std::move(out), "layer_norm"), {&a, &gain, &bias},
                [rows, width, normed, inv_std](Node& self) {
                  Node& nx = *self.inputs[0];
                  Node& ng = *self.inputs[1];
                  Node& nb = *self.inputs[2];
                  const double* g = self.grad.data();
                  const double* xh = normed->data();
                  if (ng.requires_grad) {
                    auto& gg = ng.ensure_grad();
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t j = 0; j < width; ++j) gg[j] += g[r * width + j] * xh[r * width + j];
                    }
                  }
                  if (nb.requires_grad) {
                    auto& gb = nb.ensure_grad();
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t j = 0; j < width; ++j) gb[j] += g[r * width + j];
                    }
                  }
                  if (nx.requires_grad) {
                    auto& gx = nx.ensure_grad();
                    const double inv_w = 1.0 / static_cast<double>(width);
                    std::vector<double> dxh(width);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double m1 = 0.0, m2 = 0.0;
                      for (std::size_t j = 0; j < width; ++j) {
                        dxh[j] = g[r * width + j] * ng.value[j];
                        m1 += dxh[j];
                        m2 += dxh[j] * xh[r * width + j];
                      }
                      m1 *= inv_w;
                      m2 *= inv_w;
                      const double is = (*inv_std)[r];
                      for (std::size_t j = 0; j < width; ++j) {
                        gx[r * width + j] += is * (dxh[j] - m1 - xh[r * width + j] * m2);
                      }
                    }
                  }
                });
}

// ---------------------------------------------------------------------------
// Shape ops

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return finish(make_node(std::move(shape), std::move(out), "reshape"), {&a}, [](Node& self) {
    accumulate_broadcast(*self.inputs[0], self.grad);
  });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  require_defined(a, "permute");
  const Shape& s = a.shape();
  const std::size_t r = s.size();
  if (axes.size() != r) {
    throw DimensionError("permute: " + std::to_string(axes.size()) + " axes given for " + shape_string(s));
  }
  std::vector<bool> seen(r, false);
  for (std::size_t ax : axes) {
    if (ax >= r || seen[ax]) throw DimensionError("permute: axes are not a permutation for " + shape_string(s));
    seen[ax] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = s[axes[i]];
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * s[i + 1];
  // Offset into the input for each output element, shared by forward and backward.
  auto gather = std::make_shared<std::vector<std::size_t>>(a.size());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < a.size(); ++flat) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_strides[axes[i]];
    (*gather)[flat] = off;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  auto av = a.values();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[(*gather)[i]];
  return finish(make_node(std::move(out_shape), std::move(out), "permute"), {&a}, [gather](Node& self) {
    Node& in = *self.inputs[0];
    auto& g = in.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[(*gather)[i]] += self.grad[i];
  });
}

Tensor transpose(const Tensor& a, std::size_t axis0, std::size_t axis1) {
  std::vector<std::size_t> axes(a.rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  if (axis0 >= axes.size() || axis1 >= axes.size()) {
    throw DimensionError("transpose: axes out of range for " + shape_string(a.shape()));
  }
  std::swap(axes[axis0], axes[axis1]);
  return permute(a, axes);
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  require_defined(a, "gather_rows");
  if (rows.empty()) throw ContractError("gather_rows: no rows requested");
  const std::size_t n = a.dim(0);
  const std::size_t stride = a.size() / n;
  auto av = a.values();
  std::vector<double> out;
  out.reserve(rows.size() * stride);
  for (std::size_t r : rows) {
    if (r >= n) throw ContractError("gather_rows: row " + std::to_string(r) + " out of range " + std::to_string(n));
    out.insert(out.end(), av.begin() + r * stride, av.begin() + (r + 1) * stride);
  }
  Shape shape = a.shape();
  shape[0] = rows.size();
  return Tensor(std::move(shape), std::move(out));
}

// ---------------------------------------------------------------------------
// squared_distance

Tensor squared_distance(const Tensor& points, const Tensor& centers) {
  require_defined(points, "squared_distance");
  require_defined(centers, "squared_distance");
  const Shape& ps = points.shape();
  const Shape& cs = centers.shape();
  if (cs.size() != 2 || ps.back() != cs[1]) {
    throw DimensionError("squared_distance: points " + shape_string(ps) + " incompatible with centers " +
                         shape_string(cs));
  }
  const std::size_t dim = cs[1];
  const std::size_t m = cs[0];
  const std::size_t rows = points.size() / dim;
  Shape out_shape(ps.begin(), ps.end() - 1);
  out_shape.push_back(m);
  auto pv = points.values();
  auto cv = centers.values();
  std::vector<double> out(rows * m);
  parallel_for(rows, m * dim, [&](std::size_t r) {
    const double* h = pv.data() + r * dim;
    for (std::size_t c = 0; c < m; ++c) {
      const double* ctr = cv.data() + c * dim;
      double acc = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double diff = h[j] - ctr[j];
        acc += diff * diff;
      }
      out[r * m + c] = acc;
    }
  });
  return finish(make_node(std::move(out_shape), std::move(out), "squared_distance"), {&points, &centers},
                [rows, m, dim](Node& self) {
                  Node& np = *self.inputs[0];
                  Node& nc = *self.inputs[1];
                  const double* g = self.grad.data();
                  const double* h = np.value.data();
                  const double* c = nc.value.data();
                  if (np.requires_grad) {
                    double* gp = np.ensure_grad().data();
                    parallel_for(rows, m * dim, [&](std::size_t r) {
                      for (std::size_t k = 0; k < m; ++k) {
                        const double w = 2.0 * g[r * m + k];
                        for (std::size_t j = 0; j < dim; ++j) {
                          gp[r * dim + j] += w * (h[r * dim + j] - c[k * dim + j]);
                        }
                      }
                    });
                  }
                  if (nc.requires_grad) {
                    double* gc = nc.ensure_grad().data();
                    parallel_for(m, rows * dim, [&](std::size_t k) {
                      for (std::size_t r = 0; r < rows; ++r) {
                        const double w = 2.0 * g[r * m + k];
                        for (std::size_t j = 0; j < dim; ++j) {
                          gc[k * dim + j] -= w * (h[r * dim + j] - c[k * dim + j]);
                        }
                      }
                    });
                  }
                });
}

}  // namespace restad
