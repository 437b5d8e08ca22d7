#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "sdsclip/core/tape.hpp"
#include "sdsclip/core/tensor.hpp"

namespace sdsclip {
namespace detail {

// Per-op output sweep; release builds rely on the explicit input checks in
// log/softmax plus the loss checks in the training loops instead.
template <typename S>
void check_finite(const char* op, const std::vector<S>& data) {
#ifdef NDEBUG
  (void)op;
  (void)data;
#else
  for (S v : data) {
    if (!std::isfinite(static_cast<double>(v)))
      throw std::runtime_error(std::string(op) + ": produced non-finite values");
  }
#endif
}

template <typename S>
void check_finite_input(const char* op, const TensorT<S>& t) {
  if (!t.all_finite()) throw std::runtime_error(std::string(op) + ": non-finite input");
}

// Records the result on the tape of any tape-connected input. The vjp lambda
// is only wrapped into a std::function when a tape is actually involved, so
// inference-only forwards pay no graph cost.
template <typename S, typename VjpFn>
TensorT<S> make_result(const char* op, Shape shape, std::vector<S> data,
                       std::initializer_list<const TensorT<S>*> inputs, VjpFn&& vjp) {
  check_finite(op, data);
  TapeT<S>* tape = nullptr;
  for (const TensorT<S>* in : inputs) {
    if (in->tape() == nullptr) continue;
    if (tape == nullptr) tape = in->tape();
    else if (tape != in->tape())
      throw std::invalid_argument(std::string(op) + ": inputs live on different tapes");
  }
  TensorT<S> out(std::move(shape), std::move(data));
  if (!tape) return out;
  std::vector<int> parents;
  parents.reserve(inputs.size());
  for (const TensorT<S>* in : inputs) parents.push_back(in->tape() ? in->node() : -1);
  const int id = tape->add_node(out.shape(), std::move(parents), typename TapeT<S>::GradFn(std::forward<VjpFn>(vjp)));
  return out.with_node(tape, id);
}

// numpy-style right-aligned broadcast; stride 0 marks a stretched dimension
struct BroadcastPlan {
  Shape out_shape;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  std::size_t out_numel = 0;
};

inline std::vector<std::size_t> aligned_strides(const Shape& in, const Shape& out, const char* op,
                                                const Shape& other) {
  const std::size_t off = out.size() - in.size();
  std::vector<std::size_t> stride(out.size(), 0);
  std::size_t s = 1;
  for (std::size_t d = in.size(); d-- > 0;) {
    if (in[d] != out[d + off] && in[d] != 1)
      throw std::invalid_argument(std::string(op) + ": shapes " + shape_str(in) + " and " + shape_str(other) +
                                  " are not broadcast-compatible");
    stride[d + off] = (in[d] == 1 && out[d + off] != 1) ? 0 : s;
    s *= in[d];
  }
  return stride;
}

inline BroadcastPlan make_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan p;
  const std::size_t rank = std::max(a.size(), b.size());
  p.out_shape.assign(rank, 1);
  for (std::size_t d = 0; d < rank; ++d) {
    const std::size_t da = d + a.size() >= rank ? a[d + a.size() - rank] : 1;
    const std::size_t db = d + b.size() >= rank ? b[d + b.size() - rank] : 1;
    if (da != db && da != 1 && db != 1)
      throw std::invalid_argument(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                                  " are not broadcast-compatible");
    p.out_shape[d] = std::max(da, db);
  }
  p.stride_a = aligned_strides(a, p.out_shape, op, b);
  p.stride_b = aligned_strides(b, p.out_shape, op, a);
  p.out_numel = shape_numel(p.out_shape);
  return p;
}

// Calls f(out_flat, a_flat, b_flat) over the broadcast iteration space.
template <typename F>
void for_each_bc(const BroadcastPlan& p, F&& f) {
  const std::size_t rank = p.out_shape.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < p.out_numel; ++o) {
    f(o, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += p.stride_a[d];
      ib += p.stride_b[d];
      if (idx[d] < p.out_shape[d]) break;
      ia -= p.stride_a[d] * p.out_shape[d];
      ib -= p.stride_b[d] * p.out_shape[d];
      idx[d] = 0;
    }
  }
}

// C[m, n] += A[m, k] . B[k, n]; k unrolled for instruction-level parallelism
template <typename S>
void gemm_acc(const S* __restrict a, const S* __restrict b, S* __restrict c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const S* arow = a + i * k;
    S* crow = c + i * n;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const S a0 = arow[p], a1 = arow[p + 1], a2 = arow[p + 2], a3 = arow[p + 3];
      const S* b0 = b + p * n;
      const S* b1 = b0 + n;
      const S* b2 = b1 + n;
      const S* b3 = b2 + n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
    }
    for (; p < k; ++p) {
      const S av = arow[p];
      const S* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m, k] += A[m, n] . B[k, n]^T, i.e. row-by-row dot products
template <typename S>
void gemm_acc_bt(const S* __restrict a, const S* __restrict b, S* __restrict c, std::size_t m, std::size_t n,
                 std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const S* arow = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const S* brow = b + p * n;
      S acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        acc0 += arow[j] * brow[j];
        acc1 += arow[j + 1] * brow[j + 1];
        acc2 += arow[j + 2] * brow[j + 2];
        acc3 += arow[j + 3] * brow[j + 3];
      }
      for (; j < n; ++j) acc0 += arow[j] * brow[j];
      c[i * k + p] += acc0 + acc1 + acc2 + acc3;
    }
  }
}

// C[k, n] += A[m, k]^T . G[m, n]; m unrolled so each output row is touched
// once per four inputs
template <typename S>
void gemm_acc_at(const S* __restrict a, const S* __restrict g, S* __restrict c, std::size_t m, std::size_t k,
                 std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const S* a0 = a + i * k;
    const S* a1 = a0 + k;
    const S* a2 = a1 + k;
    const S* a3 = a2 + k;
    const S* g0 = g + i * n;
    const S* g1 = g0 + n;
    const S* g2 = g1 + n;
    const S* g3 = g2 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const S v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
      S* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += v0 * g0[j] + v1 * g1[j] + v2 * g2[j] + v3 * g3[j];
    }
  }
  for (; i < m; ++i) {
    const S* arow = a + i * k;
    const S* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const S av = arow[p];
      S* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

// outer/inner split around one axis, the workhorse for axis-wise ops
struct AxisSplit {
  std::size_t outer = 1, axis = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size())
    throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                                shape_str(s));
  AxisSplit sp;
  for (std::size_t d = 0; d < axis; ++d) sp.outer *= s[d];
  sp.axis = s[axis];
  for (std::size_t d = axis + 1; d < s.size(); ++d) sp.inner *= s[d];
  return sp;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise arithmetic (broadcasting)
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() == b.shape()) {
    const auto& da = a.data();
    const auto& db = b.data();
    std::vector<S> out(da.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
    return detail::make_result<S>("add", a.shape(), std::move(out), {&a, &b},
                                  [](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
                                    for (std::size_t i = 0; i < g.size(); ++i) {
                                      if (pg[0]) (*pg[0])[i] += g[i];
                                      if (pg[1]) (*pg[1])[i] += g[i];
                                    }
                                  });
  }
  const auto plan = detail::make_broadcast(a.shape(), b.shape(), "add");
  std::vector<S> out(plan.out_numel);
  {
    const auto& da = a.data();
    const auto& db = b.data();
    detail::for_each_bc(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = da[ia] + db[ib]; });
  }
  return detail::make_result<S>(
      "add", plan.out_shape, std::move(out), {&a, &b},
      [plan](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
        detail::for_each_bc(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
          if (pg[0]) (*pg[0])[ia] += g[o];
          if (pg[1]) (*pg[1])[ib] += g[o];
        });
      });
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() == b.shape()) {
    const auto& da = a.data();
    const auto& db = b.data();
    std::vector<S> out(da.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
    return detail::make_result<S>("sub", a.shape(), std::move(out), {&a, &b},
                                  [](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
                                    for (std::size_t i = 0; i < g.size(); ++i) {
                                      if (pg[0]) (*pg[0])[i] += g[i];
                                      if (pg[1]) (*pg[1])[i] -= g[i];
                                    }
                                  });
  }
  const auto plan = detail::make_broadcast(a.shape(), b.shape(), "sub");
  std::vector<S> out(plan.out_numel);
  {
    const auto& da = a.data();
    const auto& db = b.data();
    detail::for_each_bc(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = da[ia] - db[ib]; });
  }
  return detail::make_result<S>(
      "sub", plan.out_shape, std::move(out), {&a, &b},
      [plan](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
        detail::for_each_bc(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
          if (pg[0]) (*pg[0])[ia] += g[o];
          if (pg[1]) (*pg[1])[ib] -= g[o];
        });
      });
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() == b.shape()) {
    const auto& da = a.data();
    const auto& db = b.data();
    std::vector<S> out(da.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
    return detail::make_result<S>("mul", a.shape(), std::move(out), {&a, &b},
                                  [a, b](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
                                    const auto& va = a.data();
                                    const auto& vb = b.data();
                                    for (std::size_t i = 0; i < g.size(); ++i) {
                                      if (pg[0]) (*pg[0])[i] += g[i] * vb[i];
                                      if (pg[1]) (*pg[1])[i] += g[i] * va[i];
                                    }
                                  });
  }
  const auto plan = detail::make_broadcast(a.shape(), b.shape(), "mul");
  std::vector<S> out(plan.out_numel);
  {
    const auto& da = a.data();
    const auto& db = b.data();
    detail::for_each_bc(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = da[ia] * db[ib]; });
  }
  return detail::make_result<S>(
      "mul", plan.out_shape, std::move(out), {&a, &b},
      [plan, a, b](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
        const auto& da = a.data();
        const auto& db = b.data();
        detail::for_each_bc(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
          if (pg[0]) (*pg[0])[ia] += g[o] * db[ib];
          if (pg[1]) (*pg[1])[ib] += g[o] * da[ia];
        });
      });
}

template <typename S>
TensorT<S> scale(const TensorT<S>& a, double c) {
  std::vector<S> out(a.data());
  for (auto& v : out) v = static_cast<S>(v * c);
  return detail::make_result<S>("scale", a.shape(), std::move(out), {&a},
                                [c](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
                                  if (!pg[0]) return;
                                  for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += static_cast<S>(g[i] * c);
                                });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<S> out(m * n, S(0));
  detail::gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  return detail::make_result<S>(
      "matmul", {m, n}, std::move(out), {&a, &b},
      [a, b, m, k, n](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
        if (pg[0]) detail::gemm_acc_bt(g.data(), b.data().data(), pg[0]->data(), m, n, k);  // dA = g . B^T
        if (pg[1]) detail::gemm_acc_at(a.data().data(), g.data(), pg[1]->data(), m, k, n);  // dB = A^T . g
      });
}

template <typename S>
TensorT<S> transpose(const TensorT<S>& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<S> out(m * n);
  {
    const auto& da = a.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j * m + i] = da[i * n + j];
  }
  return detail::make_result<S>("transpose", {n, m}, std::move(out), {&a},
                                [m, n](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
                                  if (!pg[0]) return;
                                  for (std::size_t j = 0; j < n; ++j)
                                    for (std::size_t i = 0; i < m; ++i) (*pg[0])[i * n + j] += g[j * m + i];
                                });
}

// ---------------------------------------------------------------------------
// shape surgery
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> reshape(const TensorT<S>& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  TensorT<S> out(shape, a.payload());  // shares the payload
  if (!a.tape()) return out;
  const int id = a.tape()->add_node(
      shape, {a.node()}, [](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
        if (!pg[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
      });
  return out.with_node(a.tape(), id);
}

template <typename S>
TensorT<S> concat(const std::vector<TensorT<S>>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& ref = parts[0].shape();
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != ref.size()) throw std::invalid_argument("concat: rank mismatch");
    for (std::size_t d = 0; d < ref.size(); ++d) {
      if (d != axis && p.shape()[d] != ref[d])
        throw std::invalid_argument("concat: shape mismatch " + shape_str(p.shape()) + " vs " + shape_str(ref));
    }
    out_shape[axis] += p.shape()[axis];
  }
  const auto sp = detail::split_axis(out_shape, axis, "concat");
  std::vector<S> out(shape_numel(out_shape));
  std::size_t row_off = 0;
  for (const auto& p : parts) {
    const std::size_t rows = p.shape()[axis];
    const auto& dp = p.data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy(dp.begin() + static_cast<std::ptrdiff_t>(o * rows * sp.inner),
                dp.begin() + static_cast<std::ptrdiff_t>((o + 1) * rows * sp.inner),
                out.begin() + static_cast<std::ptrdiff_t>((o * sp.axis + row_off) * sp.inner));
    }
    row_off += rows;
  }
  std::vector<const TensorT<S>*> input_ptrs;
  std::vector<std::size_t> part_rows;
  for (const auto& p : parts) part_rows.push_back(p.shape()[axis]);

  // make_result takes an initializer_list; concat has a variable input count,
  // so record manually.
  detail::check_finite("concat", out);
  TapeT<S>* tape = nullptr;
  for (const auto& p : parts) {
    if (p.tape() == nullptr) continue;
    if (tape == nullptr) tape = p.tape();
    else if (tape != p.tape())
      throw std::invalid_argument("concat: inputs live on different tapes");
  }
  TensorT<S> result(out_shape, std::move(out));
  if (!tape) return result;
  std::vector<int> parents;
  for (const auto& p : parts) parents.push_back(p.tape() ? p.node() : -1);
  const int id = tape->add_node(
      out_shape, std::move(parents),
      [sp, part_rows](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
        std::size_t row_off2 = 0;
        for (std::size_t pi = 0; pi < part_rows.size(); ++pi) {
          const std::size_t rows = part_rows[pi];
          if (pg[pi]) {
            for (std::size_t o = 0; o < sp.outer; ++o) {
              const S* src = g.data() + (o * sp.axis + row_off2) * sp.inner;
              S* dst = pg[pi]->data() + o * rows * sp.inner;
              for (std::size_t i = 0; i < rows * sp.inner; ++i) dst[i] += src[i];
            }
          }
          row_off2 += rows;
        }
      });
  return result.with_node(tape, id);
}

template <typename S>
TensorT<S> slice(const TensorT<S>& a, std::size_t axis, std::size_t start, std::size_t len) {
  const auto sp = detail::split_axis(a.shape(), axis, "slice");
  if (start + len > sp.axis || len == 0)
    throw std::invalid_argument("slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                                ") out of bounds for axis size " + std::to_string(sp.axis));
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  std::vector<S> out(sp.outer * len * sp.inner);
  {
    const auto& da = a.data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      const S* src = da.data() + (o * sp.axis + start) * sp.inner;
      std::copy(src, src + len * sp.inner, out.begin() + static_cast<std::ptrdiff_t>(o * len * sp.inner));
    }
  }
  return detail::make_result<S>(
      "slice", out_shape, std::move(out), {&a},
      [sp, start, len](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
        if (!pg[0]) return;
        for (std::size_t o = 0; o < sp.outer; ++o) {
          const S* src = g.data() + o * len * sp.inner;
          S* dst = pg[0]->data() + (o * sp.axis + start) * sp.inner;
          for (std::size_t i = 0; i < len * sp.inner; ++i) dst[i] += src[i];
        }
      });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> sum(const TensorT<S>& a) {
  S acc = 0;
  for (S v : a.data()) acc += v;
  return detail::make_result<S>("sum", {1}, {acc}, {&a},
                                [](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
                                  if (!pg[0]) return;
                                  for (auto& v : *pg[0]) v += g[0];
                                });
}

template <typename S>
TensorT<S> mean(const TensorT<S>& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  S acc = 0;
  for (S v : a.data()) acc += v;
  return detail::make_result<S>("mean", {1}, {static_cast<S>(acc * inv)}, {&a},
                                [inv](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
                                  if (!pg[0]) return;
                                  for (auto& v : *pg[0]) v += static_cast<S>(g[0] * inv);
                                });
}

template <typename S>
TensorT<S> sum_axis(const TensorT<S>& a, std::size_t axis) {
  const auto sp = detail::split_axis(a.shape(), axis, "sum_axis");
  Shape out_shape;
  for (std::size_t d = 0; d < a.rank(); ++d)
    if (d != axis) out_shape.push_back(a.shape()[d]);
  if (out_shape.empty()) out_shape = {1};
  std::vector<S> out(sp.outer * sp.inner, S(0));
  {
    const auto& da = a.data();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t r = 0; r < sp.axis; ++r)
        for (std::size_t i = 0; i < sp.inner; ++i) out[o * sp.inner + i] += da[(o * sp.axis + r) * sp.inner + i];
  }
  return detail::make_result<S>(
      "sum_axis", out_shape, std::move(out), {&a},
      [sp](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
        if (!pg[0]) return;
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t r = 0; r < sp.axis; ++r)
            for (std::size_t i = 0; i < sp.inner; ++i) (*pg[0])[(o * sp.axis + r) * sp.inner + i] += g[o * sp.inner + i];
      });
}

template <typename S>
TensorT<S> mean_axis(const TensorT<S>& a, std::size_t axis) {
  return scale(sum_axis(a, axis), 1.0 / static_cast<double>(a.shape()[axis]));
}

// ---------------------------------------------------------------------------
// nonlinearities
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> exp(const TensorT<S>& a) {
  std::vector<S> out(a.data());
  for (auto& v : out) v = static_cast<S>(std::exp(static_cast<double>(v)));
  TensorT<S> value(a.shape(), std::move(out));
  return detail::make_result<S>("exp", a.shape(), std::vector<S>(value.data()), {&a},
                                [value](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
                                  if (!pg[0]) return;
                                  const auto& y = value.data();
                                  for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * y[i];
                                });
}

template <typename S>
TensorT<S> log(const TensorT<S>& a) {
  detail::check_finite_input("log", a);
  std::vector<S> out(a.data());
  for (auto& v : out) v = static_cast<S>(std::log(static_cast<double>(v)));
  return detail::make_result<S>("log", a.shape(), std::move(out), {&a},
                                [a](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
                                  if (!pg[0]) return;
                                  const auto& x = a.data();
                                  for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] / x[i];
                                });
}

template <typename S>
TensorT<S> gelu(const TensorT<S>& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  std::vector<S> out(a.numel());
  {
    const auto& x = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double xv = static_cast<double>(x[i]);
      out[i] = static_cast<S>(0.5 * xv * (1.0 + std::erf(xv * kInvSqrt2)));
    }
  }
  return detail::make_result<S>(
      "gelu", a.shape(), std::move(out), {&a},
      [a](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
        if (!pg[0]) return;
        const auto& x = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double xv = static_cast<double>(x[i]);
          const double phi = 0.5 * (1.0 + std::erf(xv * kInvSqrt2));
          const double dens = kInvSqrt2Pi * std::exp(-0.5 * xv * xv);
          (*pg[0])[i] += static_cast<S>(g[i] * (phi + xv * dens));
        }
      });
}

namespace detail {
template <typename S>
std::vector<S> softmax_values(const TensorT<S>& a, std::size_t axis, const char* op) {
  check_finite_input(op, a);
  const auto sp = split_axis(a.shape(), axis, op);
  const auto& x = a.data();
  std::vector<S> out(a.numel());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      double mx = -1e300;
      for (std::size_t r = 0; r < sp.axis; ++r)
        mx = std::max(mx, static_cast<double>(x[(o * sp.axis + r) * sp.inner + i]));
      double z = 0.0;
      for (std::size_t r = 0; r < sp.axis; ++r)
        z += std::exp(static_cast<double>(x[(o * sp.axis + r) * sp.inner + i]) - mx);
      for (std::size_t r = 0; r < sp.axis; ++r) {
        const std::size_t at = (o * sp.axis + r) * sp.inner + i;
        out[at] = static_cast<S>(std::exp(static_cast<double>(x[at]) - mx) / z);
      }
    }
  }
  return out;
}
}  // namespace detail

template <typename S>
TensorT<S> softmax(const TensorT<S>& a, std::size_t axis) {
  const auto sp = detail::split_axis(a.shape(), axis, "softmax");
  std::vector<S> out = detail::softmax_values(a, axis, "softmax");
  TensorT<S> value(a.shape(), out);
  return detail::make_result<S>(
      "softmax", a.shape(), std::move(out), {&a},
      [value, sp](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
        if (!pg[0]) return;
        const auto& s = value.data();
        for (std::size_t o = 0; o < sp.outer; ++o) {
          for (std::size_t i = 0; i < sp.inner; ++i) {
            S dot = 0;
            for (std::size_t r = 0; r < sp.axis; ++r) {
              const std::size_t at = (o * sp.axis + r) * sp.inner + i;
              dot += g[at] * s[at];
            }
            for (std::size_t r = 0; r < sp.axis; ++r) {
              const std::size_t at = (o * sp.axis + r) * sp.inner + i;
              (*pg[0])[at] += s[at] * (g[at] - dot);
            }
          }
        }
      });
}

template <typename S>
TensorT<S> log_softmax(const TensorT<S>& a, std::size_t axis) {
  detail::check_finite_input("log_softmax", a);
  const auto sp = detail::split_axis(a.shape(), axis, "log_softmax");
  const auto& x = a.data();
  std::vector<S> out(a.numel());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      double mx = -1e300;
      for (std::size_t r = 0; r < sp.axis; ++r)
        mx = std::max(mx, static_cast<double>(x[(o * sp.axis + r) * sp.inner + i]));
      double z = 0.0;
      for (std::size_t r = 0; r < sp.axis; ++r)
        z += std::exp(static_cast<double>(x[(o * sp.axis + r) * sp.inner + i]) - mx);
      const double lz = std::log(z) + mx;
      for (std::size_t r = 0; r < sp.axis; ++r) {
        const std::size_t at = (o * sp.axis + r) * sp.inner + i;
        out[at] = static_cast<S>(static_cast<double>(x[at]) - lz);
      }
    }
  }
  TensorT<S> value(a.shape(), out);
  return detail::make_result<S>(
      "log_softmax", a.shape(), std::move(out), {&a},
      [value, sp](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
        if (!pg[0]) return;
        const auto& ls = value.data();
        for (std::size_t o = 0; o < sp.outer; ++o) {
          for (std::size_t i = 0; i < sp.inner; ++i) {
            S gsum = 0;
            for (std::size_t r = 0; r < sp.axis; ++r) gsum += g[(o * sp.axis + r) * sp.inner + i];
            for (std::size_t r = 0; r < sp.axis; ++r) {
              const std::size_t at = (o * sp.axis + r) * sp.inner + i;
              (*pg[0])[at] += g[at] - static_cast<S>(std::exp(static_cast<double>(ls[at]))) * gsum;
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

inline constexpr double kLayerNormEps = 1e-5;

// Normalizes along `axis` to zero mean / unit variance, then applies the
// per-position affine (gain, bias), both shaped [dim(axis)].
template <typename S>
TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& gain, const TensorT<S>& bias, std::size_t axis) {
  const auto sp = detail::split_axis(x.shape(), axis, "layer_norm");
  if (gain.numel() != sp.axis || bias.numel() != sp.axis)
    throw std::invalid_argument("layer_norm: gain/bias must have " + std::to_string(sp.axis) + " elements, got " +
                                shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
  const auto& xd = x.data();
  const auto& gd = gain.data();
  const auto& bd = bias.data();
  std::vector<S> out(x.numel());
  std::vector<S> norm(x.numel());      // pre-affine normalized values
  std::vector<S> inv_std(sp.outer * sp.inner);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      double mu = 0.0;
      for (std::size_t r = 0; r < sp.axis; ++r) mu += static_cast<double>(xd[(o * sp.axis + r) * sp.inner + i]);
      mu /= static_cast<double>(sp.axis);
      double var = 0.0;
      for (std::size_t r = 0; r < sp.axis; ++r) {
        const double d = static_cast<double>(xd[(o * sp.axis + r) * sp.inner + i]) - mu;
        var += d * d;
      }
      var /= static_cast<double>(sp.axis);
      const double is = 1.0 / std::sqrt(var + kLayerNormEps);
      inv_std[o * sp.inner + i] = static_cast<S>(is);
      for (std::size_t r = 0; r < sp.axis; ++r) {
        const std::size_t at = (o * sp.axis + r) * sp.inner + i;
        const double nv = (static_cast<double>(xd[at]) - mu) * is;
        norm[at] = static_cast<S>(nv);
        out[at] = static_cast<S>(nv * static_cast<double>(gd[r]) + static_cast<double>(bd[r]));
      }
    }
  }
  TensorT<S> norm_t(x.shape(), std::move(norm));
  TensorT<S> inv_t({sp.outer * sp.inner}, std::move(inv_std));
  return detail::make_result<S>(
      "layer_norm", x.shape(), std::move(out), {&x, &gain, &bias},
      [sp, gain, norm_t, inv_t](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
        const auto& gd = gain.data();
        const auto& nv = norm_t.data();
        const auto& is = inv_t.data();
        const double n = static_cast<double>(sp.axis);
        for (std::size_t o = 0; o < sp.outer; ++o) {
          for (std::size_t i = 0; i < sp.inner; ++i) {
            double sum_dy = 0.0, sum_dyy = 0.0;
            for (std::size_t r = 0; r < sp.axis; ++r) {
              const std::size_t at = (o * sp.axis + r) * sp.inner + i;
              const double dy = static_cast<double>(g[at]) * static_cast<double>(gd[r]);
              sum_dy += dy;
              sum_dyy += dy * static_cast<double>(nv[at]);
            }
            for (std::size_t r = 0; r < sp.axis; ++r) {
              const std::size_t at = (o * sp.axis + r) * sp.inner + i;
              const double dy = static_cast<double>(g[at]) * static_cast<double>(gd[r]);
              if (pg[0])
                (*pg[0])[at] += static_cast<S>(static_cast<double>(is[o * sp.inner + i]) *
                                               (dy - sum_dy / n - static_cast<double>(nv[at]) * sum_dyy / n));
              if (pg[1]) (*pg[1])[r] += g[at] * nv[at];
              if (pg[2]) (*pg[2])[r] += g[at];
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// lookups and attention
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> embedding(const TensorT<S>& table, const std::vector<int>& ids) {
  if (table.rank() != 2) throw std::invalid_argument("embedding: table must be rank 2, got " + shape_str(table.shape()));
  const std::size_t v = table.dim(0), d = table.dim(1);
  if (ids.empty()) throw std::invalid_argument("embedding: empty id list");
  std::vector<S> out(ids.size() * d);
  {
    const auto& td = table.data();
    for (std::size_t l = 0; l < ids.size(); ++l) {
      if (ids[l] < 0 || static_cast<std::size_t>(ids[l]) >= v)
        throw std::invalid_argument("embedding: id " + std::to_string(ids[l]) + " out of range for table " +
                                    shape_str(table.shape()));
      std::copy(td.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(ids[l]) * d),
                td.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(ids[l]) + 1) * d),
                out.begin() + static_cast<std::ptrdiff_t>(l * d));
    }
  }
  return detail::make_result<S>("embedding", {ids.size(), d}, std::move(out), {&table},
                                [ids, d](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
                                  if (!pg[0]) return;
                                  for (std::size_t l = 0; l < ids.size(); ++l) {
                                    S* row = pg[0]->data() + static_cast<std::size_t>(ids[l]) * d;
                                    for (std::size_t j = 0; j < d; ++j) row[j] += g[l * d + j];
                                  }
                                });
}

// scaled dot-product attention for one head; composed from primitives so its
// gradient falls out of the op set above
template <typename S>
TensorT<S> attention(const TensorT<S>& q, const TensorT<S>& k, const TensorT<S>& v, bool causal) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0))
    throw std::invalid_argument("attention: incompatible shapes " + shape_str(q.shape()) + ", " +
                                shape_str(k.shape()) + ", " + shape_str(v.shape()));
  TensorT<S> scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(q.dim(1))));
  if (causal) {
    if (q.dim(0) != k.dim(0)) throw std::invalid_argument("attention: causal masking needs square scores");
    const std::size_t n = q.dim(0);
    std::vector<S> m(n * n, S(0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = static_cast<S>(-1e9);
    scores = add(scores, TensorT<S>({n, n}, std::move(m)));
  }
  return matmul(softmax(scores, 1), v);
}

template <typename S>
TensorT<S> l2_normalize(const TensorT<S>& a) {
  const auto& x = a.data();
  double sq = 0.0;
  for (S v : x) sq += static_cast<double>(v) * static_cast<double>(v);
  const double n = std::sqrt(sq);
  if (n <= 0.0) throw std::runtime_error("l2_normalize: zero vector");
  std::vector<S> out(x);
  for (auto& v : out) v = static_cast<S>(v / n);
  TensorT<S> value(a.shape(), out);
  return detail::make_result<S>("l2_normalize", a.shape(), std::move(out), {&a},
                                [value, n](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
                                  if (!pg[0]) return;
                                  const auto& y = value.data();
                                  double dot = 0.0;
                                  for (std::size_t i = 0; i < g.size(); ++i)
                                    dot += static_cast<double>(g[i]) * static_cast<double>(y[i]);
                                  for (std::size_t i = 0; i < g.size(); ++i)
                                    (*pg[0])[i] += static_cast<S>((static_cast<double>(g[i]) -
                                                                   static_cast<double>(y[i]) * dot) / n);
                                });
}

// ---------------------------------------------------------------------------
// convolutional ops (stride 1, zero padding)
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b, std::size_t pad) {
  if (x.rank() != 3 || w.rank() != 4 || x.dim(0) != w.dim(1))
    throw std::invalid_argument("conv2d: incompatible shapes " + shape_str(x.shape()) + " and " +
                                shape_str(w.shape()));
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (kh > h + 2 * pad || kw > wd + 2 * pad) throw std::invalid_argument("conv2d: kernel larger than padded input");
  const std::size_t oh = h + 2 * pad - kh + 1, ow = wd + 2 * pad - kw + 1;
  if (b.numel() != cout) throw std::invalid_argument("conv2d: bias must have " + std::to_string(cout) + " elements");
  std::vector<S> out(cout * oh * ow, S(0));
  {
    const auto& xd = x.data();
    const auto& wdt = w.data();
    const auto& bd = b.data();
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = static_cast<double>(bd[co]);
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t u = 0; u < kh; ++u) {
              const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(i + u) - static_cast<std::ptrdiff_t>(pad);
              if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t vv = 0; vv < kw; ++vv) {
                const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(j + vv) - static_cast<std::ptrdiff_t>(pad);
                if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(wd)) continue;
                acc += static_cast<double>(xd[(ci * h + static_cast<std::size_t>(yy)) * wd + static_cast<std::size_t>(xx)]) *
                       static_cast<double>(wdt[((co * cin + ci) * kh + u) * kw + vv]);
              }
            }
          }
          out[(co * oh + i) * ow + j] = static_cast<S>(acc);
        }
      }
    }
  }
  return detail::make_result<S>(
      "conv2d", {cout, oh, ow}, std::move(out), {&x, &w, &b},
      [x, w, pad, cin, h, wd, cout, kh, kw, oh, ow](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
        const auto& xd = x.data();
        const auto& wdt = w.data();
        for (std::size_t co = 0; co < cout; ++co) {
          for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
              const S go = g[(co * oh + i) * ow + j];
              if (pg[2]) (*pg[2])[co] += go;
              for (std::size_t ci = 0; ci < cin; ++ci) {
                for (std::size_t u = 0; u < kh; ++u) {
                  const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(i + u) - static_cast<std::ptrdiff_t>(pad);
                  if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
                  for (std::size_t vv = 0; vv < kw; ++vv) {
                    const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(j + vv) - static_cast<std::ptrdiff_t>(pad);
                    if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(wd)) continue;
                    const std::size_t xat = (ci * h + static_cast<std::size_t>(yy)) * wd + static_cast<std::size_t>(xx);
                    const std::size_t wat = ((co * cin + ci) * kh + u) * kw + vv;
                    if (pg[0]) (*pg[0])[xat] += go * wdt[wat];
                    if (pg[1]) (*pg[1])[wat] += go * xd[xat];
                  }
                }
              }
            }
          }
        }
      });
}

template <typename S>
TensorT<S> avg_pool2d(const TensorT<S>& x, std::size_t k) {
  if (x.rank() != 3 || x.dim(1) % k != 0 || x.dim(2) % k != 0)
    throw std::invalid_argument("avg_pool2d: shape " + shape_str(x.shape()) + " not divisible by " +
                                std::to_string(k));
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), oh = h / k, ow = w / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  std::vector<S> out(c * oh * ow, S(0));
  {
    const auto& xd = x.data();
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = 0.0;
          for (std::size_t u = 0; u < k; ++u)
            for (std::size_t vv = 0; vv < k; ++vv) acc += static_cast<double>(xd[(ci * h + i * k + u) * w + j * k + vv]);
          out[(ci * oh + i) * ow + j] = static_cast<S>(acc * inv);
        }
  }
  return detail::make_result<S>("avg_pool2d", {c, oh, ow}, std::move(out), {&x},
                                [c, h, w, oh, ow, k, inv](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
                                  if (!pg[0]) return;
                                  for (std::size_t ci = 0; ci < c; ++ci)
                                    for (std::size_t i = 0; i < oh; ++i)
                                      for (std::size_t j = 0; j < ow; ++j) {
                                        const S go = static_cast<S>(g[(ci * oh + i) * ow + j] * inv);
                                        for (std::size_t u = 0; u < k; ++u)
                                          for (std::size_t vv = 0; vv < k; ++vv)
                                            (*pg[0])[(ci * h + i * k + u) * w + j * k + vv] += go;
                                      }
                                });
}

template <typename S>
TensorT<S> upsample_nearest(const TensorT<S>& x, std::size_t k) {
  if (x.rank() != 3) throw std::invalid_argument("upsample_nearest: expected rank 3, got " + shape_str(x.shape()));
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), oh = h * k, ow = w * k;
  std::vector<S> out(c * oh * ow);
  {
    const auto& xd = x.data();
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) out[(ci * oh + i) * ow + j] = xd[(ci * h + i / k) * w + j / k];
  }
  return detail::make_result<S>("upsample_nearest", {c, oh, ow}, std::move(out), {&x},
                                [c, h, w, oh, ow, k](const std::vector<S>& g, const std::vector<std::vector<S>*>& pg) {
                                  if (!pg[0]) return;
                                  for (std::size_t ci = 0; ci < c; ++ci)
                                    for (std::size_t i = 0; i < oh; ++i)
                                      for (std::size_t j = 0; j < ow; ++j)
                                        (*pg[0])[(ci * h + i / k) * w + j / k] += g[(ci * oh + i) * ow + j];
                                });
}

// ---------------------------------------------------------------------------
// composites
// ---------------------------------------------------------------------------

// sum of squared differences; shared sub node keeps the graph small
template <typename S>
TensorT<S> squared_error_sum(const TensorT<S>& a, const TensorT<S>& b) {
  TensorT<S> d = sub(a, b);
  return sum(mul(d, d));
}

}  // namespace sdsclip
