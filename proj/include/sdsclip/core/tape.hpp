#pragma once

#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdsclip/core/param_store.hpp"
#include "sdsclip/core/tensor.hpp"

namespace sdsclip {

// Dynamic tape, rebuilt for every training step. Nodes are appended in
// forward order, so reverse creation order is a valid topological order for
// the backward sweep. A tape can run backward exactly once; build a fresh
// tape to differentiate again.
template <typename S>
class TapeT {
 public:
  // out_grad is the cotangent of this node; parent_grads are accumulation
  // buffers aligned with the op inputs, nullptr for constant inputs.
  using GradFn = std::function<void(const std::vector<S>& out_grad, const std::vector<std::vector<S>*>& parent_grads)>;

  TapeT() = default;
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  TensorT<S> leaf(const TensorT<S>& value) {
    if (value.tape() == this) return value;
    if (value.tape() != nullptr) throw std::invalid_argument("tape: tensor already belongs to another tape");
    const int id = add_node(value.shape(), {}, {});
    return value.with_node(this, id);
  }

  // Leaf bound to a parameter store entry; gradients are harvested into the
  // entry at the end of backward when the entry is trainable. Repeated
  // requests for the same name return the same node.
  TensorT<S> param(ParamStoreT<S>& store, const std::string& name) {
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end()) {
      const Node& n = nodes_[static_cast<std::size_t>(it->second)];
      if (n.store != &store) throw std::invalid_argument("tape: parameter " + name + " bound to a different store");
      return store.tensor(name).with_node(this, it->second);
    }
    const TensorT<S>& value = store.tensor(name);
    const int id = add_node(value.shape(), {}, {});
    nodes_[static_cast<std::size_t>(id)].store = &store;
    nodes_[static_cast<std::size_t>(id)].param_name = name;
    param_nodes_[name] = id;
    return value.with_node(this, id);
  }

  int add_node(const Shape& shape, std::vector<int> parents, GradFn vjp) {
    Node n;
    n.shape = shape;
    n.numel = shape_numel(shape);
    n.parents = std::move(parents);
    n.vjp = std::move(vjp);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return used_; }

  // Reverse sweep from `loss`, then deposit gradients of trainable bound
  // parameters into `store`. Gradients still flow *through* frozen
  // parameters; their grad slots are just never written.
  void backward(const TensorT<S>& loss, ParamStoreT<S>& store) {
    if (used_) throw std::runtime_error("backward: tape already consumed, rebuild the graph first");
    if (loss.numel() != 1)
      throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
    if (loss.tape() != this || loss.node() < 0)
      throw std::invalid_argument("backward: loss is not connected to this tape");
    used_ = true;

    nodes_[static_cast<std::size_t>(loss.node())].grad.assign(1, S(1));
    std::vector<std::vector<S>*> parent_ptrs;
    for (int id = loss.node(); id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.grad.empty() || !n.vjp) continue;
      parent_ptrs.clear();
      for (int pid : n.parents) {
        if (pid >= 0) {
          Node& p = nodes_[static_cast<std::size_t>(pid)];
          if (p.grad.empty()) p.grad.assign(p.numel, S(0));
          parent_ptrs.push_back(&p.grad);
        } else {
          parent_ptrs.push_back(nullptr);
        }
      }
      n.vjp(n.grad, parent_ptrs);
    }

    for (const auto& [name, id] : param_nodes_) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.store != &store)
        throw std::invalid_argument("backward: parameter " + name + " is bound to a different store");
      if (n.grad.empty()) continue;
      if (store.entry(name).trainable) store.accumulate_grad(name, n.grad);
    }
  }

  // Gradient buffer of a tensor after backward; empty tensor when unreached.
  TensorT<S> gradient(const TensorT<S>& t) const {
    if (t.tape() != this || t.node() < 0) return {};
    const Node& n = nodes_[static_cast<std::size_t>(t.node())];
    if (n.grad.empty()) return {};
    return TensorT<S>(n.shape, n.grad);
  }

 private:
  struct Node {
    Shape shape;
    std::size_t numel = 0;
    std::vector<int> parents;
    GradFn vjp;
    std::vector<S> grad;
    ParamStoreT<S>* store = nullptr;
    std::string param_name;
  };

  std::vector<Node> nodes_;
  std::map<std::string, int> param_nodes_;
  bool used_ = false;
};

using Tape = TapeT<double>;

// Free-function spelling of the backward contract.
template <typename S>
void backward(const TensorT<S>& loss, ParamStoreT<S>& store) {
  if (loss.tape() == nullptr) throw std::invalid_argument("backward: loss is a constant, nothing to differentiate");
  loss.tape()->backward(loss, store);
}

}  // namespace sdsclip
