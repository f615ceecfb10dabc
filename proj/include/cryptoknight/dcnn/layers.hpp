#pragma once

// Layer primitives with hand-written backward passes. Activations are
// maps x rows x cols tensors; every convolution row has its own kernel.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "cryptoknight/common/error.hpp"

namespace cryptoknight::dcnn {

struct Tensor3 {
  std::size_t maps = 0, rows = 0, cols = 0;
  std::vector<double> v;

  Tensor3() = default;
  Tensor3(std::size_t m, std::size_t r, std::size_t c, double fill = 0.0) : maps(m), rows(r), cols(c), v(m * r * c, fill) {}

  double& at(std::size_t m, std::size_t r, std::size_t c) { return v[(m * rows + r) * cols + c]; }
  double at(std::size_t m, std::size_t r, std::size_t c) const { return v[(m * rows + r) * cols + c]; }
  double* row(std::size_t m, std::size_t r) { return v.data() + (m * rows + r) * cols; }
  const double* row(std::size_t m, std::size_t r) const { return v.data() + (m * rows + r) * cols; }
  bool operator==(const Tensor3&) const = default;
};

// ---------------------------------------------------------------- wide convolution

/// Kernel layout [out][in][row][t], bias [out][row]. Output column j is
/// bias + sum_i sum_t k[t] * x[j - t], positions outside x read as zero.
inline Tensor3 wide_conv(const Tensor3& x, std::span<const double> kernel, std::span<const double> bias,
                         std::size_t maps_out, std::size_t width) {
  if (x.cols < 1) throw ConfigError("wide convolution needs at least one input column");
  const std::size_t out_cols = x.cols + width - 1;
  Tensor3 y(maps_out, x.rows, out_cols);
  for (std::size_t o = 0; o < maps_out; ++o) {
    for (std::size_t r = 0; r < x.rows; ++r) {
      double* out = y.row(o, r);
      std::fill(out, out + out_cols, bias[o * x.rows + r]);
      for (std::size_t i = 0; i < x.maps; ++i) {
        const double* in = x.row(i, r);
        const double* k = kernel.data() + ((o * x.maps + i) * x.rows + r) * width;
        for (std::size_t t = 0; t < width; ++t) {
          const double kt = k[t];
          double* dst = out + t;
          for (std::size_t c = 0; c < x.cols; ++c) dst[c] += kt * in[c];
        }
      }
    }
  }
  return y;
}

/// Accumulates kernel/bias gradients and, when `dx` is non-null, writes the input gradient.
inline void wide_conv_backward(const Tensor3& x, std::span<const double> kernel, std::size_t width, const Tensor3& dy,
                               Tensor3* dx, std::span<double> dkernel, std::span<double> dbias) {
  const std::size_t maps_out = dy.maps;
  if (dx) *dx = Tensor3(x.maps, x.rows, x.cols);
  for (std::size_t o = 0; o < maps_out; ++o) {
    for (std::size_t r = 0; r < x.rows; ++r) {
      const double* g = dy.row(o, r);
      double sum = 0.0;
      for (std::size_t c = 0; c < dy.cols; ++c) sum += g[c];
      dbias[o * x.rows + r] += sum;
      for (std::size_t i = 0; i < x.maps; ++i) {
        const double* in = x.row(i, r);
        const std::size_t base = ((o * x.maps + i) * x.rows + r) * width;
        const double* k = kernel.data() + base;
        double* dk = dkernel.data() + base;
        double* din = dx ? dx->row(i, r) : nullptr;
        for (std::size_t t = 0; t < width; ++t) {
          const double* gt = g + t;
          double acc = 0.0;
          for (std::size_t c = 0; c < x.cols; ++c) acc += gt[c] * in[c];
          dk[t] += acc;
          if (din) {
            const double kt = k[t];
            for (std::size_t c = 0; c < x.cols; ++c) din[c] += kt * gt[c];
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------- folding

/// Sums row pairs (2i, 2i+1) of every map.
inline Tensor3 fold(const Tensor3& x) {
  if (x.rows % 2 != 0) throw ConfigError("fold needs an even row count");
  Tensor3 y(x.maps, x.rows / 2, x.cols);
  for (std::size_t m = 0; m < x.maps; ++m) {
    for (std::size_t r = 0; r < y.rows; ++r) {
      const double* a = x.row(m, 2 * r);
      const double* b = x.row(m, 2 * r + 1);
      double* out = y.row(m, r);
      for (std::size_t c = 0; c < x.cols; ++c) out[c] = a[c] + b[c];
    }
  }
  return y;
}

inline Tensor3 fold_backward(const Tensor3& dy) {
  Tensor3 dx(dy.maps, dy.rows * 2, dy.cols);
  for (std::size_t m = 0; m < dy.maps; ++m) {
    for (std::size_t r = 0; r < dy.rows; ++r) {
      const double* g = dy.row(m, r);
      std::copy(g, g + dy.cols, dx.row(m, 2 * r));
      std::copy(g, g + dy.cols, dx.row(m, 2 * r + 1));
    }
  }
  return dx;
}

// ---------------------------------------------------------------- k-max pooling

/// Indices of the k largest entries of `row` in original order; larger value
/// first, earlier index on ties. When the row is shorter than k the
/// remaining slots hold -1 (a zero output).
inline void kmax_indices(const double* row, std::size_t len, std::size_t k, std::int32_t* out,
                         std::vector<std::int32_t>& scratch) {
  const std::size_t take = std::min(k, len);
  scratch.resize(len);
  std::iota(scratch.begin(), scratch.end(), 0);
  auto better = [row](std::int32_t a, std::int32_t b) { return row[a] > row[b] || (row[a] == row[b] && a < b); };
  if (take < len) std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(take) - 1, scratch.end(), better);
  std::sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(take));
  std::copy(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(take), out);
  std::fill(out + take, out + k, -1);
}

struct KMaxResult {
  Tensor3 y;
  std::vector<std::int32_t> indices;  // maps*rows*k source columns, -1 for padding
  std::size_t padded = 0;             // slots filled with zero because the row was short
};

inline KMaxResult kmax_pool(const Tensor3& x, std::size_t k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  KMaxResult res;
  res.y = Tensor3(x.maps, x.rows, k);
  res.indices.resize(x.maps * x.rows * k);
  res.padded = x.cols < k ? (k - x.cols) * x.maps * x.rows : 0;
  std::vector<std::int32_t> scratch;
  for (std::size_t m = 0; m < x.maps; ++m) {
    for (std::size_t r = 0; r < x.rows; ++r) {
      const double* in = x.row(m, r);
      std::int32_t* idx = res.indices.data() + (m * x.rows + r) * k;
      kmax_indices(in, x.cols, k, idx, scratch);
      double* out = res.y.row(m, r);
      for (std::size_t j = 0; j < k; ++j) out[j] = idx[j] >= 0 ? in[idx[j]] : 0.0;
    }
  }
  return res;
}

/// Single-row convenience form.
inline std::vector<double> kmax_pool(std::span<const double> row, std::size_t k) {
  Tensor3 x(1, 1, row.size());
  std::copy(row.begin(), row.end(), x.v.begin());
  return kmax_pool(x, k).y.v;
}

inline Tensor3 kmax_backward(const Tensor3& dy, std::span<const std::int32_t> indices, std::size_t cols_in) {
  Tensor3 dx(dy.maps, dy.rows, cols_in);
  const std::size_t k = dy.cols;
  for (std::size_t m = 0; m < dy.maps; ++m) {
    for (std::size_t r = 0; r < dy.rows; ++r) {
      const std::int32_t* idx = indices.data() + (m * dy.rows + r) * k;
      const double* g = dy.row(m, r);
      double* out = dx.row(m, r);
      for (std::size_t j = 0; j < k; ++j) {
        if (idx[j] >= 0) out[idx[j]] += g[j];
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- tanh

inline Tensor3 tanh_forward(Tensor3 x) {
  for (auto& v : x.v) v = std::tanh(v);
  return x;
}

/// Gradient through tanh given its output y.
inline Tensor3 tanh_backward(const Tensor3& y, Tensor3 dy) {
  for (std::size_t i = 0; i < dy.v.size(); ++i) dy.v[i] *= 1.0 - y.v[i] * y.v[i];
  return dy;
}

// ---------------------------------------------------------------- fully connected + softmax

/// logits = W f + b with W laid out [class][feature].
inline std::vector<double> dense_forward(std::span<const double> features, std::span<const double> weights,
                                         std::span<const double> bias) {
  const std::size_t classes = bias.size(), n = features.size();
  std::vector<double> logits(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    const double* w = weights.data() + c * n;
    double acc = bias[c];
    for (std::size_t i = 0; i < n; ++i) acc += w[i] * features[i];
    logits[c] = acc;
  }
  return logits;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (auto& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

/// -log p[target], floored away from log(0).
inline double cross_entropy(std::span<const double> probs, std::size_t target) {
  return -std::log(std::max(probs[target], 1e-300));
}

/// dL/dlogits for softmax + cross-entropy.
inline std::vector<double> softmax_ce_backward(std::span<const double> probs, std::size_t target) {
  std::vector<double> g(probs.begin(), probs.end());
  g[target] -= 1.0;
  return g;
}

/// Accumulates dW, db and returns dL/dfeatures.
inline std::vector<double> dense_backward(std::span<const double> features, std::span<const double> weights,
                                          std::span<const double> dlogits, std::span<double> dweights,
                                          std::span<double> dbias) {
  const std::size_t classes = dlogits.size(), n = features.size();
  std::vector<double> df(n, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    const double g = dlogits[c];
    dbias[c] += g;
    const double* w = weights.data() + c * n;
    double* dw = dweights.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) {
      dw[i] += g * features[i];
      df[i] += g * w[i];
    }
  }
  return df;
}

}  // namespace cryptoknight::dcnn
