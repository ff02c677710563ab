#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vidctl/core/tensor.hpp"

namespace vidctl::core {

// Reverse-mode autodiff. A forward pass dynamically builds a DAG of Nodes;
// backward() traverses it in reverse topological order. Gradients only
// propagate through nodes whose requires_grad flag is set, which is inherited
// from parents at construction time.

template <typename T>
class Node;

template <typename T>
using Var = std::shared_ptr<Node<T>>;

// Thread-local gradient mode, mirrors the usual no_grad() idiom.
bool grad_enabled();
void set_grad_enabled(bool enabled);

class NoGradGuard {
 public:
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
class Node {
 public:
  Tensor<T> value;
  Tensor<T> grad;  // lazily allocated during backward
  bool requires_grad = false;
  std::vector<Var<T>> parents;
  std::function<void(Node<T>&)> backward_fn;
  std::string name;  // set for parameters only

  const Shape& shape() const { return value.shape(); }
  int64_t numel() const { return value.numel(); }

  void accumulate(const Tensor<T>& g) {
    if (!requires_grad) return;
    if (!grad.defined()) {
      grad = g.clone();
      return;
    }
    check_same_shape(grad, g, "Node::accumulate");
    T* dst = grad.data();
    const T* src = g.data();
    for (int64_t i = 0; i < grad.numel(); ++i) dst[i] += src[i];
  }

  void zero_grad() { grad = Tensor<T>(); }
};

template <typename T>
Var<T> make_leaf(Tensor<T> value, bool requires_grad = false, std::string name = {}) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->name = std::move(name);
  return node;
}

template <typename T>
Var<T> constant(Tensor<T> value) {
  return make_leaf<T>(std::move(value), false);
}

template <typename T>
Var<T> detach(const Var<T>& v) {
  return make_leaf<T>(v->value, false);
}

// Builds an op node. When gradients are off (or no parent needs them) the
// parents and closure are dropped so the graph does not grow.
template <typename T, typename F>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents, F&& backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (grad_enabled()) {
    for (const auto& p : parents)
      if (p->requires_grad) {
        node->requires_grad = true;
        break;
      }
  }
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward_fn = std::forward<F>(backward_fn);
  }
  return node;
}

// When VIDCTL_PROFILE_BACKWARD is set, backward() accumulates per-op wall
// time keyed by the backward closure's type name (which embeds the op that
// created it). dump_backward_profile() prints and clears the table.
void profile_backward_add(const char* type_name, double seconds);
bool backward_profiling_enabled();
void dump_backward_profile();

template <typename T>
void backward(const Var<T>& root, Tensor<T> seed = {}) {
  if (!root->requires_grad)
    throw std::logic_error("backward: root does not require gradients");
  // Iterative post-order DFS to get a topological order.
  std::vector<Node<T>*> topo;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }
  if (seed.defined()) {
    check_same_shape(root->value, seed, "backward seed");
    root->grad = seed.clone();
  } else {
    root->grad = Tensor<T>::full(root->value.shape(), T(1));
  }
  if (backward_profiling_enabled()) {
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
      Node<T>* node = *it;
      if (node->backward_fn && node->grad.defined()) {
        const auto t0 = std::chrono::steady_clock::now();
        node->backward_fn(*node);
        profile_backward_add(node->backward_fn.target_type().name(),
                             std::chrono::duration<double>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count());
      }
    }
    return;
  }
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn && node->grad.defined()) node->backward_fn(*node);
  }
}

}  // namespace vidctl::core
