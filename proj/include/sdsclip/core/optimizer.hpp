#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdsclip/core/param_store.hpp"

namespace sdsclip {

// Adaptive-moment optimizer with decoupled weight decay. Moment slots are
// created lazily per trainable entry; frozen entries are never touched.
template <typename S>
struct OptimStateT {
  struct Slot {
    std::vector<double> m;
    std::vector<double> v;
  };

  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::int64_t step = 0;
  std::map<std::string, Slot> slots;
};

using OptimState = OptimStateT<double>;

template <typename S>
void optimizer_step(ParamStoreT<S>& store, OptimStateT<S>& state) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (const std::string& name : store.names()) {
    const auto& entry = store.entry(name);
    if (!entry.trainable) continue;
    if (entry.grad.empty())
      throw std::runtime_error("optimizer_step: trainable entry " + name + " has no gradient");
    auto& slot = state.slots[name];
    const std::size_t n = entry.tensor.numel();
    if (slot.m.empty()) {
      slot.m.assign(n, 0.0);
      slot.v.assign(n, 0.0);
    }
    if (slot.m.size() != n) throw std::runtime_error("optimizer_step: moment shape mismatch for " + name);
    const auto& g = entry.grad.data();
    std::vector<S> p(entry.tensor.data());
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = static_cast<double>(g[i]);
      slot.m[i] = state.beta1 * slot.m[i] + (1.0 - state.beta1) * gi;
      slot.v[i] = state.beta2 * slot.v[i] + (1.0 - state.beta2) * gi * gi;
      const double mh = slot.m[i] / bc1;
      const double vh = slot.v[i] / bc2;
      double pv = static_cast<double>(p[i]);
      pv -= state.lr * (mh / (std::sqrt(vh) + state.eps) + state.weight_decay * pv);
      p[i] = static_cast<S>(pv);
    }
    store.set_tensor(name, TensorT<S>(entry.tensor.shape(), std::move(p)));
  }
  store.clear_grads();
}

}  // namespace sdsclip
