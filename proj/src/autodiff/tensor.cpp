#include "mdam/autodiff/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace mdam::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor::Tensor(std::size_t rows, std::size_t cols, bool requires_grad)
    : Tensor(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values,
               bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (values.size() != rows * cols) {
    throw DimensionError("tensor value count does not match " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  node_->rows = rows;
  node_->cols = cols;
  node_->value.assign(values.begin(), values.end());
  node_->requires_grad = requires_grad;
  if (requires_grad) node_->grad.assign(rows * cols, 0.0);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(1, 1, std::vector<double>{v}, requires_grad);
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on a non-scalar tensor");
  return node_->value[0];
}

void Tensor::zero_grad() {
  if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  Tensor t(rows(), cols(), false);
  t.node_->value = node_->value;
  return t;
}

Tensor Tensor::clone() const {
  Tensor t(rows(), cols(), requires_grad());
  t.node_->value = node_->value;
  return t;
}

Tensor make_result(const char* op, std::size_t rows, std::size_t cols,
                   std::initializer_list<Tensor> inputs) {
  return make_result(op, rows, cols, std::span<const Tensor>(inputs.begin(), inputs.size()));
}

Tensor make_result(const char* op, std::size_t rows, std::size_t cols,
                   std::span<const Tensor> inputs) {
  auto node = std::make_shared<detail::Node>();
  node->rows = rows;
  node->cols = cols;
  node->op = op;
  node->value.assign(rows * cols, 0.0);
  if (g_grad_enabled) {
    bool any = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (const auto& t : inputs) node->inputs.push_back(t.node());
    }
  }
  return Tensor(std::move(node));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() requires a scalar loss");
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; children are visited in input order so the
  // resulting order (and hence the accumulation order) is deterministic.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
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

  for (detail::Node* node : order) {
    if (!node->inputs.empty()) node->grad.assign(node->value.size(), 0.0);
  }
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward) node->backward(*node);
  }
  // Interior gradients are scratch space; release them with the graph.
  for (detail::Node* node : order) {
    if (!node->inputs.empty()) {
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
}

}  // namespace mdam::ad
