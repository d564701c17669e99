#include "lit4/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "lit4/error.hpp"
#include "lit4/rng.hpp"
#include "lit4/tape.hpp"

namespace lit4::ops {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

template <typename T>
void record(const char* op, std::vector<NodePtr<T>> inputs, Tensor<T>& out,
            typename Tape<T>::BackwardFn fn) {
  out.set_requires_grad(true);
  active_tape<T>()->record(op, std::move(inputs), out.node(), std::move(fn));
}

Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1)
      throw DimensionError(std::string(op) + ": cannot broadcast " +
                           to_string(a) + " with " + to_string(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// For every flat index of `dst`, the flat index of the element of `src` that
// broadcasts onto it.
std::vector<std::size_t> broadcast_index(const Shape& src, const Shape& dst) {
  const std::size_t rank = dst.size();
  const std::size_t offset = rank - src.size();
  std::vector<std::size_t> stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t i = src.size(); i-- > 0;) {
    stride[i + offset] = src[i] == 1 ? 0 : s;
    s *= src[i];
  }
  const std::size_t n = numel(dst);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t flat = 0;
  for (std::size_t i = 0; i < n; ++i) {
    map[i] = flat;
    for (std::size_t ax = rank; ax-- > 0;) {
      if (++idx[ax] < dst[ax]) {
        flat += stride[ax];
        break;
      }
      flat -= stride[ax] * (idx[ax] - 1);
      idx[ax] = 0;
    }
  }
  return map;
}

struct AxisSplit {
  std::size_t outer;
  std::size_t n;
  std::size_t inner;
};

AxisSplit split_at(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size())
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " invalid for shape " + to_string(shape));
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// C[m,n] += A[m,k] B[k,n]
template <typename T>
void gemm_nn(const T* A, const T* B, T* C, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* c = C + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T a = A[i * k + p];
      const T* b = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
    }
  }
}

// C[m,n] += A[m,k] B[n,k]^T
template <typename T>
void gemm_nt(const T* A, const T* B, T* C, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* a = A + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* b = B + j * k;
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p] * b[p];
      C[i * n + j] += acc;
    }
  }
}

// C[m,n] += A[k,m]^T B[k,n]
template <typename T>
void gemm_tn(const T* A, const T* B, T* C, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* b = B + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T a = A[p * m + i];
      T* c = C + i * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
    }
  }
}

template <typename T, typename Fwd, typename DA, typename DB>
Tensor<T> binary_op(const char* name, const Tensor<T>& a, const Tensor<T>& b,
                    Fwd fwd, DA da, DB db) {
  Shape out_shape = broadcast_shapes(a.shape(), b.shape(), name);
  const std::size_t n = numel(out_shape);
  const bool same_a = a.shape() == out_shape;
  const bool same_b = b.shape() == out_shape;
  std::vector<std::size_t> ia, ib;
  if (!same_a) ia = broadcast_index(a.shape(), out_shape);
  if (!same_b) ib = broadcast_index(b.shape(), out_shape);
  const auto A = a.data();
  const auto B = b.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = fwd(A[same_a ? i : ia[i]], B[same_b ? i : ib[i]]);
  Tensor<T> y(std::move(out_shape), std::move(out));
  if (detail::should_record<T>({&a, &b})) {
    auto an = a.node();
    auto bn = b.node();
    record<T>(name, {an, bn}, y,
              [an, bn, ia = std::move(ia), ib = std::move(ib), same_a, same_b,
               da, db](std::span<const T> g) {
                auto ga = detail::grad_of(an);
                auto gb = detail::grad_of(bn);
                const auto& A = an->data;
                const auto& B = bn->data;
                for (std::size_t i = 0; i < g.size(); ++i) {
                  const std::size_t ka = same_a ? i : ia[i];
                  const std::size_t kb = same_b ? i : ib[i];
                  if (!ga.empty()) ga[ka] += g[i] * da(A[ka], B[kb]);
                  if (!gb.empty()) gb[kb] += g[i] * db(A[ka], B[kb]);
                }
              });
  }
  return y;
}

// `df(x, y)` is the derivative of the op at input x with output y.
template <typename T, typename Fwd, typename Df>
Tensor<T> unary_op(const char* name, const Tensor<T>& x, Fwd fwd, Df df) {
  const auto X = x.data();
  std::vector<T> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = fwd(X[i]);
  Tensor<T> y(x.shape(), std::move(out));
  if (detail::should_record<T>({&x})) {
    auto xn = x.node();
    auto yn = y.node();
    std::weak_ptr<TensorNode<T>> yw = yn;
    record<T>(name, {xn}, y, [xn, yw, df](std::span<const T> g) {
      auto gx = detail::grad_of(xn);
      auto yn = yw.lock();
      for (std::size_t i = 0; i < g.size(); ++i)
        gx[i] += g[i] * df(xn->data[i], yn->data[i]);
    });
  }
  return y;
}

template <typename T>
Tensor<T> gather_op(const char* name, const Tensor<T>& x, Shape out_shape,
                    std::vector<std::size_t> map) {
  const auto X = x.data();
  std::vector<T> out(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = X[map[i]];
  Tensor<T> y(std::move(out_shape), std::move(out));
  if (detail::should_record<T>({&x})) {
    auto xn = x.node();
    record<T>(name, {xn}, y,
              [xn, map = std::move(map)](std::span<const T> g) {
                auto gx = detail::grad_of(xn);
                for (std::size_t i = 0; i < g.size(); ++i) gx[map[i]] += g[i];
              });
  }
  return y;
}

}  // namespace

// ---- shape manipulation -------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel())
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) +
                         " as " + to_string(shape));
  Tensor<T> y(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (detail::should_record<T>({&x})) {
    auto xn = x.node();
    record<T>("reshape", {xn}, y, [xn](std::span<const T> g) {
      auto gx = detail::grad_of(xn);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const std::size_t rank = x.rank();
  if (perm.size() != rank)
    throw DimensionError("permute: permutation rank " +
                         std::to_string(perm.size()) + " for shape " +
                         to_string(x.shape()));
  std::vector<bool> seen(rank, false);
  for (auto p : perm) {
    if (p >= rank || seen[p])
      throw DimensionError("permute: invalid permutation for shape " +
                           to_string(x.shape()));
    seen[p] = true;
  }
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;)
    in_stride[i - 1] = in_stride[i] * x.shape()[i];
  Shape out_shape(rank);
  std::vector<std::size_t> stride(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = x.shape()[perm[i]];
    stride[i] = in_stride[perm[i]];
  }
  const std::size_t n = x.numel();
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t flat = 0;
  for (std::size_t i = 0; i < n; ++i) {
    map[i] = flat;
    for (std::size_t ax = rank; ax-- > 0;) {
      if (++idx[ax] < out_shape[ax]) {
        flat += stride[ax];
        break;
      }
      flat -= stride[ax] * (idx[ax] - 1);
      idx[ax] = 0;
    }
  }
  return gather_op("permute", x, std::move(out_shape), std::move(map));
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  if (x.rank() < 2)
    throw DimensionError("transpose: needs rank >= 2, got " +
                         to_string(x.shape()));
  std::vector<std::size_t> perm(x.rank());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
  return permute(x, perm);
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start,
                std::size_t length) {
  const auto s = split_at(x.shape(), axis, "slice");
  if (length == 0 || start + length > s.n)
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") outside axis " +
                         std::to_string(axis) + " of " + to_string(x.shape()));
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::vector<std::size_t> map;
  map.reserve(s.outer * length * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < length; ++j)
      for (std::size_t k = 0; k < s.inner; ++k)
        map.push_back((o * s.n + start + j) * s.inner + k);
  return gather_op("slice", x, std::move(out_shape), std::move(map));
}

template <typename T>
Tensor<T> gather(const Tensor<T>& x, Shape shape, std::vector<std::size_t> map) {
  if (numel(shape) != map.size())
    throw DimensionError("gather: map of " + std::to_string(map.size()) +
                         " entries for shape " + to_string(shape));
  for (auto i : map)
    if (i >= x.numel())
      throw DimensionError("gather: index " + std::to_string(i) +
                           " outside input " + to_string(x.shape()));
  return gather_op("gather", x, std::move(shape), std::move(map));
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  split_at(first, axis, "concat");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape a = p.shape();
    Shape b = first;
    if (a.size() != b.size())
      throw DimensionError("concat: rank mismatch " + to_string(a) + " vs " +
                           to_string(b));
    a[axis] = b[axis] = 0;
    if (a != b)
      throw DimensionError("concat: shape mismatch " + to_string(p.shape()) +
                           " vs " + to_string(first));
    out_shape[axis] += p.shape()[axis];
  }
  const auto s = split_at(out_shape, axis, "concat");
  std::vector<T> out(numel(out_shape));
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t len = p.shape()[axis];
    const auto P = p.data();
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(P.data() + o * len * s.inner, len * s.inner,
                  out.data() + (o * s.n + offset) * s.inner);
    offset += len;
  }
  Tensor<T> y(std::move(out_shape), std::move(out));
  if (detail::should_record<T>(parts)) {
    std::vector<NodePtr<T>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    record<T>("concat", nodes, y,
              [nodes, offsets, s, axis](std::span<const T> g) {
                for (std::size_t k = 0; k < nodes.size(); ++k) {
                  auto gp = detail::grad_of(nodes[k]);
                  if (gp.empty()) continue;
                  const std::size_t len = nodes[k]->shape[axis];
                  for (std::size_t o = 0; o < s.outer; ++o) {
                    const T* src = g.data() + (o * s.n + offsets[k]) * s.inner;
                    T* dst = gp.data() + o * len * s.inner;
                    for (std::size_t i = 0; i < len * s.inner; ++i)
                      dst[i] += src[i];
                  }
                }
              });
  }
  return y;
}

// ---- linear algebra -----------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2 ||
      a.shape()[a.rank() - 1] != b.shape()[b.rank() - 2])
    throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) +
                         " and " + to_string(b.shape()));
  const std::size_t m = a.shape()[a.rank() - 2];
  const std::size_t k = a.shape()[a.rank() - 1];
  const std::size_t n = b.shape()[b.rank() - 1];
  const Shape ba(a.shape().begin(), a.shape().end() - 2);
  const Shape bb(b.shape().begin(), b.shape().end() - 2);
  Shape batch;
  try {
    batch = broadcast_shapes(ba, bb, "matmul");
  } catch (const DimensionError&) {
    throw DimensionError("matmul: batch axes of " + to_string(a.shape()) +
                         " and " + to_string(b.shape()) +
                         " do not broadcast");
  }
  const std::size_t nb = numel(batch);
  auto ia = broadcast_index(ba, batch);
  auto ib = broadcast_index(bb, batch);
  std::vector<T> out(nb * m * n, T(0));
  const T* A = a.data().data();
  const T* B = b.data().data();
  for (std::size_t i = 0; i < nb; ++i)
    gemm_nn(A + ia[i] * m * k, B + ib[i] * k * n, out.data() + i * m * n, m,
            k, n);
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor<T> y(std::move(out_shape), std::move(out));
  if (detail::should_record<T>({&a, &b})) {
    auto an = a.node();
    auto bn = b.node();
    record<T>("matmul", {an, bn}, y,
              [an, bn, ia = std::move(ia), ib = std::move(ib), m, k, n,
               nb](std::span<const T> g) {
                auto ga = detail::grad_of(an);
                auto gb = detail::grad_of(bn);
                for (std::size_t i = 0; i < nb; ++i) {
                  const T* G = g.data() + i * m * n;
                  if (!ga.empty())
                    gemm_nt(G, bn->data.data() + ib[i] * k * n,
                            ga.data() + ia[i] * m * k, m, n, k);
                  if (!gb.empty())
                    gemm_tn(an->data.data() + ia[i] * m * k, G,
                            gb.data() + ib[i] * k * n, k, m, n);
                }
              });
  }
  return y;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  if (weight.rank() != 2 || x.rank() < 1 ||
      x.shape().back() != weight.shape()[0])
    throw DimensionError("linear: input " + to_string(x.shape()) +
                         " incompatible with weight " +
                         to_string(weight.shape()));
  const std::size_t in = weight.shape()[0];
  const std::size_t outd = weight.shape()[1];
  if (bias.defined() && (bias.rank() != 1 || bias.shape()[0] != outd))
    throw DimensionError("linear: bias " + to_string(bias.shape()) +
                         " does not match weight " + to_string(weight.shape()));
  const std::size_t rows = x.numel() / in;
  std::vector<T> out(rows * outd, T(0));
  if (bias.defined()) {
    const auto Bv = bias.data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(Bv.begin(), Bv.end(), out.begin() + r * outd);
  }
  gemm_nn(x.data().data(), weight.data().data(), out.data(), rows, in, outd);
  Shape out_shape = x.shape();
  out_shape.back() = outd;
  Tensor<T> y(std::move(out_shape), std::move(out));
  if (detail::should_record<T>({&x, &weight, &bias})) {
    auto xn = x.node();
    auto wn = weight.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    std::vector<NodePtr<T>> inputs{xn, wn};
    if (bn) inputs.push_back(bn);
    record<T>("linear", inputs, y,
              [xn, wn, bn, rows, in, outd](std::span<const T> g) {
                auto gx = detail::grad_of(xn);
                auto gw = detail::grad_of(wn);
                if (!gx.empty())
                  gemm_nt(g.data(), wn->data.data(), gx.data(), rows, outd, in);
                if (!gw.empty())
                  gemm_tn(xn->data.data(), g.data(), gw.data(), in, rows, outd);
                auto gb = detail::grad_of(bn);
                if (!gb.empty())
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < outd; ++j)
                      gb[j] += g[r * outd + j];
              });
  }
  return y;
}

// ---- elementwise --------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  for (auto v : b.data())
    if (v == T(0)) throw ParameterError("div: division by zero");
  return binary_op(
      "div", a, b, [](T x, T y) { return x / y; },
      [](T, T y) { return T(1) / y; }, [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary_op(
      "scale", x, [factor](T v) { return v * factor; },
      [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary_op(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

namespace {
constexpr double kGeluCubic = 0.044715;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  const T k = static_cast<T>(kGeluCubic);
  return unary_op(
      "gelu", x,
      [c, k](T v) { return T(0.5) * v * (T(1) + std::tanh(c * (v + k * v * v * v))); },
      [c, k](T v, T) {
        const T t = std::tanh(c * (v + k * v * v * v));
        return T(0.5) * (T(1) + t) +
               T(0.5) * v * (T(1) - t * t) * c * (T(1) + T(3) * k * v * v);
      });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  return unary_op(
      "silu", x, [](T v) { return v / (T(1) + std::exp(-v)); },
      [](T v, T) {
        const T s = T(1) / (T(1) + std::exp(-v));
        return s * (T(1) + v * (T(1) - s));
      });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary_op(
      "tanh", x, [](T v) { return std::tanh(v); },
      [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation act) {
  switch (act) {
    case Activation::identity:
      return x;
    case Activation::relu:
      return relu(x);
    case Activation::gelu:
      return gelu(x);
    case Activation::silu:
      return silu(x);
    case Activation::tanh:
      return tanh(x);
  }
  throw ParameterError("activate: unknown activation");
}

// ---- normalization and softmax -------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const auto s = split_at(x.shape(), axis, "softmax");
  const auto X = x.data();
  std::vector<T> out(X.size());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      T mx = X[base];
      for (std::size_t j = 1; j < s.n; ++j)
        mx = std::max(mx, X[base + j * s.inner]);
      T total = 0;
      for (std::size_t j = 0; j < s.n; ++j) {
        const T e = std::exp(X[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.n; ++j) out[base + j * s.inner] /= total;
    }
  Tensor<T> y(x.shape(), std::move(out));
  if (detail::should_record<T>({&x})) {
    auto xn = x.node();
    std::weak_ptr<TensorNode<T>> yw = y.node();
    record<T>("softmax", {xn}, y, [xn, yw, s](std::span<const T> g) {
      auto gx = detail::grad_of(xn);
      const auto& Y = yw.lock()->data;
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = o * s.n * s.inner + in;
          T dot = 0;
          for (std::size_t j = 0; j < s.n; ++j)
            dot += g[base + j * s.inner] * Y[base + j * s.inner];
          for (std::size_t j = 0; j < s.n; ++j) {
            const std::size_t i = base + j * s.inner;
            gx[i] += Y[i] * (g[i] - dot);
          }
        }
    });
  }
  return y;
}

template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& x,
                         std::span<const std::uint8_t> valid) {
  if (x.rank() < 2)
    throw DimensionError("masked_softmax: needs rank >= 2, got " +
                         to_string(x.shape()));
  const std::size_t batch = x.shape()[0];
  const std::size_t keys = x.shape().back();
  if (valid.size() != batch * keys)
    throw DimensionError("masked_softmax: mask of " +
                         std::to_string(valid.size()) + " entries for " +
                         to_string(x.shape()));
  const std::size_t rows = x.numel() / keys;
  const std::size_t per_batch = rows / batch;
  const auto X = x.data();
  std::vector<T> out(X.size(), T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::uint8_t* v = valid.data() + (r / per_batch) * keys;
    const T* xr = X.data() + r * keys;
    T* yr = out.data() + r * keys;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < keys; ++j)
      if (v[j]) mx = std::max(mx, xr[j]);
    if (!std::isfinite(mx))
      throw ContractError("masked_softmax: row without any valid key");
    T total = 0;
    for (std::size_t j = 0; j < keys; ++j)
      if (v[j]) {
        yr[j] = std::exp(xr[j] - mx);
        total += yr[j];
      }
    for (std::size_t j = 0; j < keys; ++j) yr[j] /= total;
  }
  Tensor<T> y(x.shape(), std::move(out));
  if (detail::should_record<T>({&x})) {
    auto xn = x.node();
    std::weak_ptr<TensorNode<T>> yw = y.node();
    record<T>("masked_softmax", {xn}, y,
              [xn, yw, rows, keys](std::span<const T> g) {
                auto gx = detail::grad_of(xn);
                const auto& Y = yw.lock()->data;
                for (std::size_t r = 0; r < rows; ++r) {
                  const std::size_t base = r * keys;
                  T dot = 0;
                  for (std::size_t j = 0; j < keys; ++j)
                    dot += g[base + j] * Y[base + j];
                  for (std::size_t j = 0; j < keys; ++j)
                    gx[base + j] += Y[base + j] * (g[base + j] - dot);
                }
              });
  }
  return y;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps) {
  if (!(eps > T(0))) throw ParameterError("layer_norm: eps must be > 0");
  if (x.rank() < 1) throw DimensionError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
    throw DimensionError("layer_norm: gamma/beta " + to_string(gamma.shape()) +
                         "/" + to_string(beta.shape()) + " for input " +
                         to_string(x.shape()));
  const std::size_t rows = x.numel() / d;
  const auto X = x.data();
  const auto G = gamma.data();
  const auto Bt = beta.data();
  std::vector<T> out(X.size());
  std::vector<T> xhat(X.size());
  std::vector<T> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = X.data() + r * d;
    double mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    rstd[r] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    for (std::size_t j = 0; j < d; ++j) {
      const T h = static_cast<T>(xr[j] - mean) * rstd[r];
      xhat[r * d + j] = h;
      out[r * d + j] = h * G[j] + Bt[j];
    }
  }
  Tensor<T> y(x.shape(), std::move(out));
  if (detail::should_record<T>({&x, &gamma, &beta})) {
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    record<T>("layer_norm", {xn, gn, bn}, y,
              [xn, gn, bn, xhat = std::move(xhat), rstd = std::move(rstd), rows,
               d](std::span<const T> g) {
                auto gx = detail::grad_of(xn);
                auto gg = detail::grad_of(gn);
                auto gb = detail::grad_of(bn);
                const auto& G = gn->data;
                for (std::size_t r = 0; r < rows; ++r) {
                  const T* gr = g.data() + r * d;
                  const T* hr = xhat.data() + r * d;
                  T sum_dh = 0, sum_dh_h = 0;
                  for (std::size_t j = 0; j < d; ++j) {
                    const T dh = gr[j] * G[j];
                    sum_dh += dh;
                    sum_dh_h += dh * hr[j];
                    if (!gg.empty()) gg[j] += gr[j] * hr[j];
                    if (!gb.empty()) gb[j] += gr[j];
                  }
                  if (gx.empty()) continue;
                  const T inv_d = T(1) / static_cast<T>(d);
                  for (std::size_t j = 0; j < d; ++j) {
                    const T dh = gr[j] * G[j];
                    gx[r * d + j] +=
                        rstd[r] * (dh - inv_d * sum_dh - hr[j] * inv_d * sum_dh_h);
                  }
                }
              });
  }
  return y;
}

template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x, std::size_t axis, T eps) {
  if (!(eps > T(0))) throw ParameterError("l2_normalize: eps must be > 0");
  const auto s = split_at(x.shape(), axis, "l2_normalize");
  const auto X = x.data();
  std::vector<T> out(X.size());
  std::vector<T> norms(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      T sq = 0;
      for (std::size_t j = 0; j < s.n; ++j) {
        const T v = X[base + j * s.inner];
        sq += v * v;
      }
      const T norm = std::sqrt(sq);
      norms[o * s.inner + in] = norm;
      const T den = std::max(norm, eps);
      for (std::size_t j = 0; j < s.n; ++j)
        out[base + j * s.inner] = X[base + j * s.inner] / den;
    }
  Tensor<T> y(x.shape(), std::move(out));
  if (detail::should_record<T>({&x})) {
    auto xn = x.node();
    std::weak_ptr<TensorNode<T>> yw = y.node();
    record<T>("l2_normalize", {xn}, y,
              [xn, yw, s, eps, norms = std::move(norms)](std::span<const T> g) {
                auto gx = detail::grad_of(xn);
                const auto& Y = yw.lock()->data;
                for (std::size_t o = 0; o < s.outer; ++o)
                  for (std::size_t in = 0; in < s.inner; ++in) {
                    const std::size_t base = o * s.n * s.inner + in;
                    const T norm = norms[o * s.inner + in];
                    if (norm > eps) {
                      T dot = 0;
                      for (std::size_t j = 0; j < s.n; ++j)
                        dot += Y[base + j * s.inner] * g[base + j * s.inner];
                      for (std::size_t j = 0; j < s.n; ++j) {
                        const std::size_t i = base + j * s.inner;
                        gx[i] += (g[i] - Y[i] * dot) / norm;
                      }
                    } else {
                      for (std::size_t j = 0; j < s.n; ++j)
                        gx[base + j * s.inner] += g[base + j * s.inner] / eps;
                    }
                  }
              });
  }
  return y;
}

template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma,
                       const Tensor<T>& beta, Tensor<T>& running_mean,
                       Tensor<T>& running_var, const BatchNormState& state) {
  if (x.rank() != 4)
    throw DimensionError("batch_norm2d: expected [b, c, h, w], got " +
                         to_string(x.shape()));
  if (!(state.eps > 0)) throw ParameterError("batch_norm2d: eps must be > 0");
  const std::size_t b = x.shape()[0], c = x.shape()[1];
  const std::size_t hw = x.shape()[2] * x.shape()[3];
  for (const Tensor<T>* t : {&gamma, &beta, static_cast<const Tensor<T>*>(&running_mean),
                             static_cast<const Tensor<T>*>(&running_var)})
    if (t->shape() != Shape{c})
      throw DimensionError("batch_norm2d: parameter shape " +
                           to_string(t->shape()) + " for input " +
                           to_string(x.shape()));
  const std::size_t count = b * hw;
  const auto X = x.data();
  const auto G = gamma.data();
  const auto Bt = beta.data();
  std::vector<T> out(X.size());
  std::vector<T> xhat(X.size());
  std::vector<T> rstd(c);
  auto rm = running_mean.mutable_data();
  auto rv = running_var.mutable_data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean, var;
    if (state.training) {
      double acc = 0;
      for (std::size_t n = 0; n < b; ++n)
        for (std::size_t i = 0; i < hw; ++i) acc += X[(n * c + ch) * hw + i];
      mean = acc / static_cast<double>(count);
      double sq = 0;
      for (std::size_t n = 0; n < b; ++n)
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = X[(n * c + ch) * hw + i] - mean;
          sq += d * d;
        }
      var = sq / static_cast<double>(count);
      const double unbiased =
          count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1)
                    : var;
      rm[ch] = static_cast<T>((1.0 - state.momentum) * rm[ch] + state.momentum * mean);
      rv[ch] = static_cast<T>((1.0 - state.momentum) * rv[ch] + state.momentum * unbiased);
    } else {
      mean = rm[ch];
      var = rv[ch];
    }
    rstd[ch] = static_cast<T>(1.0 / std::sqrt(var + state.eps));
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t k = (n * c + ch) * hw + i;
        const T h = static_cast<T>(X[k] - mean) * rstd[ch];
        xhat[k] = h;
        out[k] = h * G[ch] + Bt[ch];
      }
  }
  Tensor<T> y(x.shape(), std::move(out));
  if (detail::should_record<T>({&x, &gamma, &beta})) {
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    const bool training = state.training;
    record<T>("batch_norm2d", {xn, gn, bn}, y,
              [xn, gn, bn, xhat = std::move(xhat), rstd = std::move(rstd), b, c,
               hw, count, training](std::span<const T> g) {
                auto gx = detail::grad_of(xn);
                auto gg = detail::grad_of(gn);
                auto gb = detail::grad_of(bn);
                const auto& G = gn->data;
                for (std::size_t ch = 0; ch < c; ++ch) {
                  T sum_g = 0, sum_g_h = 0;
                  for (std::size_t n = 0; n < b; ++n)
                    for (std::size_t i = 0; i < hw; ++i) {
                      const std::size_t k = (n * c + ch) * hw + i;
                      sum_g += g[k];
                      sum_g_h += g[k] * xhat[k];
                    }
                  if (!gg.empty()) gg[ch] += sum_g_h;
                  if (!gb.empty()) gb[ch] += sum_g;
                  if (gx.empty()) continue;
                  const T scale = G[ch] * rstd[ch];
                  const T inv = T(1) / static_cast<T>(count);
                  for (std::size_t n = 0; n < b; ++n)
                    for (std::size_t i = 0; i < hw; ++i) {
                      const std::size_t k = (n * c + ch) * hw + i;
                      if (training)
                        gx[k] += scale * (g[k] - inv * sum_g - xhat[k] * inv * sum_g_h);
                      else
                        gx[k] += scale * g[k];
                    }
                }
              });
  }
  return y;
}

// ---- convolution --------------------------------------------------------

namespace {

struct ConvGeometry {
  std::size_t b, cin, h, w, cout, cin_g, cout_g, kh, kw, oh, ow, stride, pad,
      groups;
};

// Valid output range [lo, hi) along one axis for kernel offset k.
inline void valid_range(std::size_t k, std::size_t in, std::size_t out,
                        std::size_t stride, std::size_t pad, std::size_t& lo,
                        std::size_t& hi) {
  // i = o * stride + k - pad must lie in [0, in)
  lo = k >= pad ? 0 : (pad - k + stride - 1) / stride;
  const long long top = static_cast<long long>(in) - 1 +
                        static_cast<long long>(pad) - static_cast<long long>(k);
  if (top < 0) {
    hi = lo;
    return;
  }
  hi = std::min(out, static_cast<std::size_t>(top) / stride + 1);
  if (hi < lo) hi = lo;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias, const Conv2dOptions& opt) {
  if (x.rank() != 4 || weight.rank() != 4)
    throw DimensionError("conv2d: expected x[b,c,h,w] and w[o,i,kh,kw], got " +
                         to_string(x.shape()) + " and " +
                         to_string(weight.shape()));
  if (opt.stride == 0 || opt.groups == 0)
    throw ParameterError("conv2d: stride and groups must be positive");
  ConvGeometry g{};
  g.b = x.shape()[0];
  g.cin = x.shape()[1];
  g.h = x.shape()[2];
  g.w = x.shape()[3];
  g.cout = weight.shape()[0];
  g.kh = weight.shape()[2];
  g.kw = weight.shape()[3];
  g.stride = opt.stride;
  g.pad = opt.padding;
  g.groups = opt.groups;
  if (g.cin % g.groups != 0 || g.cout % g.groups != 0 ||
      weight.shape()[1] != g.cin / g.groups)
    throw DimensionError("conv2d: channel/group mismatch: input " +
                         to_string(x.shape()) + ", weight " +
                         to_string(weight.shape()) + ", groups " +
                         std::to_string(g.groups));
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw)
    throw DimensionError("conv2d: kernel larger than padded input " +
                         to_string(x.shape()));
  if (bias.defined() && bias.shape() != Shape{g.cout})
    throw DimensionError("conv2d: bias " + to_string(bias.shape()) +
                         " for " + std::to_string(g.cout) + " outputs");
  g.cin_g = g.cin / g.groups;
  g.cout_g = g.cout / g.groups;
  g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;

  const T* X = x.data().data();
  const T* W = weight.data().data();
  std::vector<T> out(g.b * g.cout * g.oh * g.ow, T(0));
  for (std::size_t n = 0; n < g.b; ++n)
    for (std::size_t oc = 0; oc < g.cout; ++oc) {
      T* o = out.data() + (n * g.cout + oc) * g.oh * g.ow;
      if (bias.defined()) std::fill(o, o + g.oh * g.ow, bias.data()[oc]);
      const std::size_t grp = oc / g.cout_g;
      for (std::size_t icg = 0; icg < g.cin_g; ++icg) {
        const std::size_t ic = grp * g.cin_g + icg;
        const T* xi = X + (n * g.cin + ic) * g.h * g.w;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          std::size_t y0, y1;
          valid_range(ky, g.h, g.oh, g.stride, g.pad, y0, y1);
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            std::size_t x0, x1;
            valid_range(kx, g.w, g.ow, g.stride, g.pad, x0, x1);
            const T wv = W[((oc * g.cin_g + icg) * g.kh + ky) * g.kw + kx];
            for (std::size_t oy = y0; oy < y1; ++oy) {
              const T* row = xi + (oy * g.stride + ky - g.pad) * g.w;
              T* orow = o + oy * g.ow;
              for (std::size_t ox = x0; ox < x1; ++ox)
                orow[ox] += wv * row[ox * g.stride + kx - g.pad];
            }
          }
        }
      }
    }
  Tensor<T> y(Shape{g.b, g.cout, g.oh, g.ow}, std::move(out));
  if (detail::should_record<T>({&x, &weight, &bias})) {
    auto xn = x.node();
    auto wn = weight.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    std::vector<NodePtr<T>> inputs{xn, wn};
    if (bn) inputs.push_back(bn);
    record<T>("conv2d", inputs, y, [xn, wn, bn, g](std::span<const T> gr) {
      auto gx = detail::grad_of(xn);
      auto gw = detail::grad_of(wn);
      auto gb = detail::grad_of(bn);
      const T* X = xn->data.data();
      const T* W = wn->data.data();
      for (std::size_t n = 0; n < g.b; ++n)
        for (std::size_t oc = 0; oc < g.cout; ++oc) {
          const T* go = gr.data() + (n * g.cout + oc) * g.oh * g.ow;
          if (!gb.empty())
            for (std::size_t i = 0; i < g.oh * g.ow; ++i) gb[oc] += go[i];
          const std::size_t grp = oc / g.cout_g;
          for (std::size_t icg = 0; icg < g.cin_g; ++icg) {
            const std::size_t ic = grp * g.cin_g + icg;
            const std::size_t xoff = (n * g.cin + ic) * g.h * g.w;
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
              std::size_t y0, y1;
              valid_range(ky, g.h, g.oh, g.stride, g.pad, y0, y1);
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                std::size_t x0, x1;
                valid_range(kx, g.w, g.ow, g.stride, g.pad, x0, x1);
                const std::size_t widx =
                    ((oc * g.cin_g + icg) * g.kh + ky) * g.kw + kx;
                const T wv = W[widx];
                T acc = 0;
                for (std::size_t oy = y0; oy < y1; ++oy) {
                  const std::size_t rowoff =
                      xoff + (oy * g.stride + ky - g.pad) * g.w;
                  const T* grow = go + oy * g.ow;
                  for (std::size_t ox = x0; ox < x1; ++ox) {
                    const std::size_t xi = rowoff + ox * g.stride + kx - g.pad;
                    acc += grow[ox] * X[xi];
                    if (!gx.empty()) gx[xi] += wv * grow[ox];
                  }
                }
                if (!gw.empty()) gw[widx] += acc;
              }
            }
          }
        }
    });
  }
  return y;
}

// ---- reductions, lookup, regularization ---------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (auto v : x.data()) acc += v;
  Tensor<T> y = Tensor<T>::scalar(acc);
  if (detail::should_record<T>({&x})) {
    auto xn = x.node();
    record<T>("sum", {xn}, y, [xn](std::span<const T> g) {
      auto gx = detail::grad_of(xn);
      for (auto& v : gx) v += g[0];
    });
  }
  return y;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::size_t axis) {
  const auto s = split_at(x.shape(), axis, "mean");
  const auto X = x.data();
  std::vector<T> out(s.outer * s.inner, T(0));
  const T inv = T(1) / static_cast<T>(s.n);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.n; ++j)
      for (std::size_t in = 0; in < s.inner; ++in)
        out[o * s.inner + in] += X[(o * s.n + j) * s.inner + in];
  for (auto& v : out) v *= inv;
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor<T> y(std::move(out_shape), std::move(out));
  if (detail::should_record<T>({&x})) {
    auto xn = x.node();
    record<T>("mean", {xn}, y, [xn, s, inv](std::span<const T> g) {
      auto gx = detail::grad_of(xn);
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t j = 0; j < s.n; ++j)
          for (std::size_t in = 0; in < s.inner; ++in)
            gx[(o * s.n + j) * s.inner + in] += g[o * s.inner + in] * inv;
    });
  }
  return y;
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids,
                    const Shape& id_shape) {
  if (table.rank() != 2)
    throw DimensionError("embedding: table must be [vocab, d], got " +
                         to_string(table.shape()));
  if (numel(id_shape) != ids.size())
    throw DimensionError("embedding: id shape " + to_string(id_shape) +
                         " does not match " + std::to_string(ids.size()) +
                         " ids");
  const std::size_t vocab = table.shape()[0];
  const std::size_t d = table.shape()[1];
  for (auto id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= vocab)
      throw InputError("embedding: id " + std::to_string(id) +
                       " outside vocabulary of " + std::to_string(vocab));
  std::vector<std::size_t> map(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < d; ++j)
      map[i * d + j] = static_cast<std::size_t>(ids[i]) * d + j;
  Shape out_shape = id_shape;
  out_shape.push_back(d);
  return gather_op("embedding", table, std::move(out_shape), std::move(map));
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training,
                  std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0))
    throw ParameterError("dropout: p must lie in [0, 1), got " +
                         std::to_string(p));
  if (!training || p == 0.0) return x;
  const std::uint64_t key = CounterRng(seed).key();
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = CounterRng::uniform_at(key, i) >= p ? keep_scale : T(0);
  const auto X = x.data();
  std::vector<T> out(X.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = X[i] * mask[i];
  Tensor<T> y(x.shape(), std::move(out));
  if (detail::should_record<T>({&x})) {
    auto xn = x.node();
    record<T>("dropout", {xn}, y,
              [xn, mask = std::move(mask)](std::span<const T> g) {
                auto gx = detail::grad_of(xn);
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
              });
  }
  return y;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits,
                        std::span<const std::int32_t> targets) {
  if (logits.rank() != 1 && logits.rank() != 2)
    throw DimensionError("cross_entropy: logits must be [n] or [b, n], got " +
                         to_string(logits.shape()));
  const std::size_t b = logits.rank() == 1 ? 1 : logits.shape()[0];
  const std::size_t n = logits.shape().back();
  if (targets.size() != b)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for batch of " + std::to_string(b));
  for (auto t : targets)
    if (t < 0 || static_cast<std::size_t>(t) >= n)
      throw InputError("cross_entropy: target " + std::to_string(t) +
                       " outside [0, " + std::to_string(n) + ")");
  const auto X = logits.data();
  std::vector<T> probs(X.size());
  double loss = 0;
  for (std::size_t r = 0; r < b; ++r) {
    const T* xr = X.data() + r * n;
    T mx = xr[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    double total = 0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(static_cast<double>(xr[j] - mx));
    const double lse = static_cast<double>(mx) + std::log(total);
    for (std::size_t j = 0; j < n; ++j)
      probs[r * n + j] = static_cast<T>(std::exp(static_cast<double>(xr[j]) - lse));
    loss += lse - static_cast<double>(xr[targets[r]]);
  }
  Tensor<T> y = Tensor<T>::scalar(static_cast<T>(loss / static_cast<double>(b)));
  if (detail::should_record<T>({&logits})) {
    auto xn = logits.node();
    std::vector<std::int32_t> tg(targets.begin(), targets.end());
    record<T>("cross_entropy", {xn}, y,
              [xn, probs = std::move(probs), tg = std::move(tg), b,
               n](std::span<const T> g) {
                auto gx = detail::grad_of(xn);
                const T s = g[0] / static_cast<T>(b);
                for (std::size_t r = 0; r < b; ++r)
                  for (std::size_t j = 0; j < n; ++j) {
                    const T onehot =
                        static_cast<std::size_t>(tg[r]) == j ? T(1) : T(0);
                    gx[r * n + j] += s * (probs[r * n + j] - onehot);
                  }
              });
  }
  return y;
}

#define LIT4_INSTANTIATE_OPS(T)                                                \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                         \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&); \
  template Tensor<T> transpose(const Tensor<T>&);                              \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t,         \
                           std::size_t);                                       \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);       \
  template Tensor<T> gather(const Tensor<T>&, Shape, std::vector<std::size_t>); \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&,                \
                            const Tensor<T>&);                                 \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> scale(const Tensor<T>&, T);                               \
  template Tensor<T> relu(const Tensor<T>&);                                   \
  template Tensor<T> gelu(const Tensor<T>&);                                   \
  template Tensor<T> silu(const Tensor<T>&);                                   \
  template Tensor<T> tanh(const Tensor<T>&);                                   \
  template Tensor<T> activate(const Tensor<T>&, Activation);                   \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                   \
  template Tensor<T> masked_softmax(const Tensor<T>&,                          \
                                    std::span<const std::uint8_t>);            \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&,            \
                                const Tensor<T>&, T);                          \
  template Tensor<T> l2_normalize(const Tensor<T>&, std::size_t, T);           \
  template Tensor<T> batch_norm2d(const Tensor<T>&, const Tensor<T>&,          \
                                  const Tensor<T>&, Tensor<T>&, Tensor<T>&,    \
                                  const BatchNormState&);                      \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&,                \
                            const Tensor<T>&, const Conv2dOptions&);           \
  template Tensor<T> sum(const Tensor<T>&);                                    \
  template Tensor<T> mean(const Tensor<T>&, std::size_t);                      \
  template Tensor<T> embedding(const Tensor<T>&,                               \
                               std::span<const std::int32_t>, const Shape&);   \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, std::uint64_t);   \
  template Tensor<T> cross_entropy(const Tensor<T>&,                           \
                                   std::span<const std::int32_t>);

LIT4_INSTANTIATE_OPS(float)
LIT4_INSTANTIATE_OPS(double)

#undef LIT4_INSTANTIATE_OPS

}  // namespace lit4::ops
