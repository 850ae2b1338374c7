#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace restad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense row-major array of 64-bit reals that can take part in reverse-mode
/// differentiation. Copies share the underlying buffer (handle semantics);
/// use detach() for an independent leaf.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> values() const&;
  // A span into a temporary would dangle.
  std::span<const double> values() const&& = delete;
  std::vector<double> to_vector() const;
  /// Writable view; only legal on leaves (parameters, inputs).
  std::span<double> mutable_values();
  double item() const;

  bool requires_grad() const;
  bool is_leaf() const;
  /// Empty span unless requires_grad().
  std::span<const double> grad() const&;
  std::span<const double> grad() const&& = delete;
  std::span<double> mutable_grad();
  void zero_grad();

  Tensor detach() const;
  /// Deep copy preserving requires_grad; the copy is a fresh leaf.
  Tensor clone() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Operations recorded while grad mode is on, in topological order.
class Tape {
 public:
  static Tape record(const Tensor& loss);

  /// Seeds d(loss)/d(loss) = 1 and runs every backward rule once, in reverse.
  void backward();

  std::size_t size() const { return order_.size(); }
  std::vector<std::string> op_names() const;

 private:
  std::vector<std::shared_ptr<detail::Node>> order_;
};

/// Record and run the tape rooted at a scalar loss. Leaf grads accumulate.
void backward(const Tensor& loss);

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// Worker threads used inside large kernels. Results do not depend on it.
void set_num_threads(std::size_t n);
std::size_t num_threads();

// Elementwise binary ops broadcast when the operands are equal-shaped, when one
// is a single value, or when one shape is a trailing suffix of the other.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor negate(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// [.., n, k] x [.., k, m]. Batch dims must match, or one side is rank 2.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor softmax(const Tensor& a, std::size_t axis);
Tensor softmax_last(const Tensor& a);

/// Normalizes over the last dimension then applies gain and bias.
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor transpose(const Tensor& a, std::size_t axis0, std::size_t axis1);

/// Copies the listed slices along axis 0 into a new leaf (no gradient flow).
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);

/// Squared Euclidean distance of every row of `points` [.., D] to every row of
/// `centers` [M, D], giving [.., M]. Computed from differences, so a point that
/// equals a center yields exactly 0.
Tensor squared_distance(const Tensor& points, const Tensor& centers);

}  // namespace restad
