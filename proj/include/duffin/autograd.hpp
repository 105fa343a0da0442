#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "duffin/tensor.hpp"

namespace duffin {

// Reverse-mode tape node. Graphs are DAGs built functionally: parents are
// fixed at construction, so cycles cannot arise, but backward() still
// verifies acyclicity while ordering the tape.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until materialized; then value-shaped and zeroed
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // scatter self.grad into parents
  bool requires_grad = false;
  bool grad_populated = false;

  explicit Node(Tensor<T> v) : value(std::move(v)) {}

  // Gradient storage is allocated on first use so that forward-only passes
  // never pay for it.
  void materialize_grad() {
    if (grad.numel() != value.numel())
      grad = Tensor<T>(value.shape());
    else
      grad.fill(T(0));
  }
};

// Shared handle to a graph node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}
  explicit Var(Tensor<T> value) : node_(std::make_shared<Node<T>>(std::move(value))) {}

  static Var leaf(Tensor<T> value, bool requires_grad) {
    Var v(std::move(value));
    v.node_->requires_grad = requires_grad;
    if (requires_grad) v.node_->materialize_grad();
    return v;
  }

  bool defined() const { return node_ != nullptr; }
  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& grad() { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }

  void zero_grad() {
    node_->materialize_grad();
    node_->grad_populated = false;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

// Iterative post-order DFS. Throws if a back edge is found.
template <typename T>
std::vector<Node<T>*> topo_order(Node<T>* root) {
  std::vector<Node<T>*> order;
  std::unordered_map<Node<T>*, int> state;  // 0 unseen, 1 on stack, 2 done
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(root, 0);
  state[root] = 1;
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node<T>* p = n->parents[idx++].get();
      int& st = state[p];
      if (st == 1) throw std::logic_error("cycle detected in computation graph");
      if (st == 0) {
        st = 1;
        stack.emplace_back(p, 0);
      }
    } else {
      state[n] = 2;
      order.push_back(n);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

}  // namespace detail

// Populates d(loss)/d(node) for every node reachable from the scalar loss.
// Subgraphs that do not require gradients are skipped.
template <typename T>
void backward(const Var<T>& loss) {
  if (loss.value().numel() != 1)
    throw shape_error("backward requires a scalar root, got " + shape_str(loss.shape()));
  auto order = detail::topo_order(loss.ptr().get());
  for (Node<T>* n : order) {
    n->materialize_grad();
    n->grad_populated = false;
  }
  loss.ptr()->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    n->grad_populated = true;
    if (n->backward_fn && n->requires_grad) n->backward_fn(*n);
  }
}

// Named, ordered store of leaf tensors. Trainable records are the model
// parameters; non-trainable ones carry persistent state such as batch-norm
// running statistics.
template <typename T>
class ParameterStore {
 public:
  struct Record {
    std::string name;
    Var<T> var;
    bool trainable;
  };

  Var<T> add(const std::string& name, Tensor<T> init, bool trainable = true) {
    if (index_.count(name)) throw config_error("duplicate parameter name: " + name);
    Var<T> v = Var<T>::leaf(std::move(init), trainable);
    index_[name] = records_.size();
    records_.push_back({name, v, trainable});
    return v;
  }

  // Shares an existing leaf under this store (used to build filtered views).
  void adopt(const std::string& name, const Var<T>& var, bool trainable) {
    if (index_.count(name)) throw config_error("duplicate parameter name: " + name);
    index_[name] = records_.size();
    records_.push_back({name, var, trainable});
  }

  ParameterStore filtered(const std::string& prefix) const {
    ParameterStore out;
    for (const auto& r : records_)
      if (r.name.rfind(prefix, 0) == 0) out.adopt(r.name, r.var, r.trainable);
    return out;
  }

  Var<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw config_error("unknown parameter: " + name);
    return records_[it->second].var;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<Record>& records() const { return records_; }
  std::vector<Record>& records() { return records_; }
  size_t size() const { return records_.size(); }

  size_t trainable_scalars() const {
    size_t n = 0;
    for (const auto& r : records_)
      if (r.trainable) n += r.var.value().numel();
    return n;
  }

  void zero_grads() {
    for (auto& r : records_) r.var.zero_grad();
  }

  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& r : records_) out.add(r.name, r.var.value().template cast<U>(), r.trainable);
    return out;
  }

 private:
  std::vector<Record> records_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace duffin
