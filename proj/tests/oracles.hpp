#pragma once

// Brute-force reference implementations. They share nothing with the
// library beyond plain vectors, so a bug in an op cannot hide in its oracle.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "lit4/rng.hpp"
#include "lit4/tensor.hpp"

namespace oracle {

using Vec = std::vector<double>;

// a[m, k] * b[k, n]
inline Vec matmul(const Vec& a, const Vec& b, std::size_t m, std::size_t k, std::size_t n) {
  Vec c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

inline Vec transpose(const Vec& a, std::size_t m, std::size_t n) {
  Vec t(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  return t;
}

struct ConvGeom {
  std::size_t batch, cin, h, w, cout, kh, kw, stride, pad, groups;
  std::size_t oh() const { return (h + 2 * pad - kh) / stride + 1; }
  std::size_t ow() const { return (w + 2 * pad - kw) / stride + 1; }
};

// Cross-correlation, zero padding, grouped.
inline Vec conv2d(const Vec& x, const Vec& wt, const Vec& bias, const ConvGeom& g) {
  const std::size_t cin_g = g.cin / g.groups, cout_g = g.cout / g.groups;
  Vec y(g.batch * g.cout * g.oh() * g.ow(), 0.0);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t co = 0; co < g.cout; ++co) {
      const std::size_t grp = co / cout_g;
      for (std::size_t oy = 0; oy < g.oh(); ++oy)
        for (std::size_t ox = 0; ox < g.ow(); ++ox) {
          double s = bias.empty() ? 0.0 : bias[co];
          for (std::size_t ci = 0; ci < cin_g; ++ci)
            for (std::size_t ky = 0; ky < g.kh; ++ky)
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.h) ||
                    ix >= static_cast<long>(g.w))
                  continue;
                const std::size_t c = grp * cin_g + ci;
                s += x[((b * g.cin + c) * g.h + static_cast<std::size_t>(iy)) * g.w +
                       static_cast<std::size_t>(ix)] *
                     wt[((co * cin_g + ci) * g.kh + ky) * g.kw + kx];
              }
          y[((b * g.cout + co) * g.oh() + oy) * g.ow() + ox] = s;
        }
    }
  return y;
}

// Softmax of each row of a[rows, n].
inline Vec softmax_rows(const Vec& a, std::size_t rows, std::size_t n) {
  Vec out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, a[r * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(a[r * n + j] - mx);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = std::exp(a[r * n + j] - mx) / z;
  }
  return out;
}

// Single-head scaled dot-product attention, q[tq, dh], k/v[tk, dh].
inline Vec attention(const Vec& q, const Vec& k, const Vec& v, std::size_t tq, std::size_t tk,
                     std::size_t dh) {
  Vec s = matmul(q, transpose(k, tk, dh), tq, dh, tk);
  for (auto& e : s) e /= std::sqrt(static_cast<double>(dh));
  return matmul(softmax_rows(s, tq, tk), v, tq, tk, dh);
}

inline Vec random_vec(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  lit4::CounterRng rng(seed, 77);
  Vec v(n);
  for (auto& e : v) e = scale * rng.normal();
  return v;
}

template <typename T = double>
lit4::Tensor<T> tensor(const lit4::Shape& shape, const Vec& v, bool grad = false) {
  return lit4::Tensor<T>(shape, std::vector<T>(v.begin(), v.end()), grad);
}

template <typename T>
Vec values(const lit4::Tensor<T>& t) {
  auto d = t.data();
  return Vec(d.begin(), d.end());
}

inline double max_abs_diff(const Vec& a, const Vec& b) {
  double m = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs(const Vec& a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace oracle
