#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdam {

/// Shape or extent mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// No admissible choice remains (every entry masked, every node visited).
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computed quantity came out NaN or infinite where a finite value is
/// required.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration (bad batch size for BN, feature width, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Caller broke an operation precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace mdam

namespace mdam::ad {

namespace detail {

// Fixed 64-byte alignment so vectorized kernels take the same code path
// (and round the same way) whatever address the heap hands back.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), alignment));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Buffer value;
  Buffer grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;
};

}  // namespace detail

/// Dense row-major 2-D tensor of doubles with an optional gradient slot.
///
/// A Tensor is a handle: copies share storage. Results of differentiable
/// operations keep their inputs alive and record how to propagate
/// gradients back to them; calling ad::backward on a scalar walks that
/// graph in reverse topological order.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, bool requires_grad = false);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values,
         bool requires_grad = false);

  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  std::span<double> values() { return node_->value; }
  const double* data() const { return node_->value.data(); }
  double* data() { return node_->value.data(); }
  double operator()(std::size_t r, std::size_t c) const {
    return node_->value[r * node_->cols + c];
  }
  double& at(std::size_t r, std::size_t c) { return node_->value[r * node_->cols + c]; }
  double item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool is_leaf() const { return node_->inputs.empty(); }
  const char* op() const { return node_->op; }

  /// Empty span when the tensor does not track gradients.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> grad() { return node_->grad; }
  void zero_grad();

  /// Copy of the values with no history and no gradient.
  Tensor detach() const;
  /// Deep copy preserving the requires_grad flag but not the history.
  Tensor clone() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_result(const char* op, std::size_t rows, std::size_t cols,
                            std::initializer_list<Tensor> inputs);
  friend Tensor make_result(const char* op, std::size_t rows, std::size_t cols,
                            std::span<const Tensor> inputs);
};

/// Creates the output node of an operation. The node requires grad iff
/// gradient recording is enabled and any input requires grad; only then
/// are the inputs retained.
Tensor make_result(const char* op, std::size_t rows, std::size_t cols,
                   std::initializer_list<Tensor> inputs);
Tensor make_result(const char* op, std::size_t rows, std::size_t cols,
                   std::span<const Tensor> inputs);

bool grad_enabled();

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

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires
/// grad. Interior gradients are recomputed from scratch on each call, so
/// repeated calls add up at the leaves only.
void backward(const Tensor& loss);

}  // namespace mdam::ad
