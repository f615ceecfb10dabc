#pragma once

// Central finite-difference checks of the hand-written backward passes.
// Each check draws a random input, reduces the layer output with random
// weights (so every output element contributes a distinct gradient) and
// compares analytic and numeric derivatives for every input and parameter.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cryptoknight/common/rng.hpp"
#include "cryptoknight/dcnn/layers.hpp"
#include "cryptoknight/dcnn/model.hpp"

namespace gradcheck {

namespace dc = cryptoknight::dcnn;

inline constexpr double kStep = 1e-5;
// Denominator floor: derivatives this small are compared absolutely.
inline constexpr double kFloor = 1e-6;

struct Result {
  std::string name;
  double max_rel = 0.0;
  std::size_t checked = 0;
};

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kFloor});
}

/// Compares `analytic[i]` with the central difference of `objective` in x[i].
inline void compare(Result& r, std::vector<double>& x, const std::vector<double>& analytic,
                    const std::function<double()>& objective) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + kStep;
    const double up = objective();
    x[i] = keep - kStep;
    const double down = objective();
    x[i] = keep;
    r.max_rel = std::max(r.max_rel, rel_error(analytic[i], (up - down) / (2 * kStep)));
    ++r.checked;
  }
}

inline std::vector<double> random_vector(cryptoknight::Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline double weighted_sum(const std::vector<double>& y, const std::vector<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

inline Result wide_conv(std::uint64_t seed) {
  cryptoknight::Rng rng(seed);
  const std::size_t maps_in = 2, maps_out = 3, rows = 4, cols = 6, width = 3;
  dc::Tensor3 x(maps_in, rows, cols);
  x.v = random_vector(rng, x.v.size());
  auto kernel = random_vector(rng, maps_out * maps_in * rows * width);
  auto bias = random_vector(rng, maps_out * rows);
  const auto w = random_vector(rng, maps_out * rows * (cols + width - 1));
  auto objective = [&] { return weighted_sum(dc::wide_conv(x, kernel, bias, maps_out, width).v, w); };

  dc::Tensor3 dy(maps_out, rows, cols + width - 1);
  dy.v = w;
  dc::Tensor3 dx;
  std::vector<double> dk(kernel.size()), db(bias.size());
  dc::wide_conv_backward(x, kernel, width, dy, &dx, dk, db);
  Result r{"wide convolution"};
  compare(r, x.v, dx.v, objective);
  compare(r, kernel, dk, objective);
  compare(r, bias, db, objective);
  return r;
}

inline Result fold(std::uint64_t seed) {
  cryptoknight::Rng rng(seed);
  dc::Tensor3 x(2, 8, 5);
  x.v = random_vector(rng, x.v.size());
  const auto w = random_vector(rng, 2 * 4 * 5);
  auto objective = [&] { return weighted_sum(dc::fold(x).v, w); };
  dc::Tensor3 dy(2, 4, 5);
  dy.v = w;
  Result r{"folding"};
  compare(r, x.v, dc::fold_backward(dy).v, objective);
  return r;
}

inline Result kmax(std::uint64_t seed) {
  cryptoknight::Rng rng(seed);
  dc::Tensor3 x(2, 3, 9);
  x.v = random_vector(rng, x.v.size());
  const std::size_t k = 4;
  const auto w = random_vector(rng, 2 * 3 * k);
  auto objective = [&] { return weighted_sum(dc::kmax_pool(x, k).y.v, w); };
  const auto pooled = dc::kmax_pool(x, k);
  dc::Tensor3 dy(2, 3, k);
  dy.v = w;
  Result r{"k-max pooling"};
  compare(r, x.v, dc::kmax_backward(dy, pooled.indices, x.cols).v, objective);
  return r;
}

inline Result tanh(std::uint64_t seed) {
  cryptoknight::Rng rng(seed);
  dc::Tensor3 x(2, 3, 4);
  x.v = random_vector(rng, x.v.size(), -2.0, 2.0);
  const auto w = random_vector(rng, x.v.size());
  auto objective = [&] { return weighted_sum(dc::tanh_forward(x).v, w); };
  dc::Tensor3 dy(2, 3, 4);
  dy.v = w;
  Result r{"tanh"};
  compare(r, x.v, dc::tanh_backward(dc::tanh_forward(x), dy).v, objective);
  return r;
}

inline Result dense_softmax(std::uint64_t seed) {
  cryptoknight::Rng rng(seed);
  const std::size_t n = 10, classes = 5, target = 3;
  auto f = random_vector(rng, n);
  auto weights = random_vector(rng, classes * n);
  auto bias = random_vector(rng, classes);
  auto objective = [&] { return dc::cross_entropy(dc::softmax(dc::dense_forward(f, weights, bias)), target); };
  const auto probs = dc::softmax(dc::dense_forward(f, weights, bias));
  std::vector<double> dw(weights.size()), db(bias.size());
  const auto df = dc::dense_backward(f, weights, dc::softmax_ce_backward(probs, target), dw, db);
  Result r{"fully connected + softmax"};
  compare(r, f, df, objective);
  compare(r, weights, dw, objective);
  compare(r, bias, db, objective);
  return r;
}

/// Two convolutional layers with a fold and training-mode dropout; the
/// dropout mask is reproduced on every evaluation by reseeding.
inline Result composed_model(std::uint64_t seed) {
  dc::ModelConfig c;
  c.d = 4;
  c.filter_widths = {3, 2};
  c.feature_maps = {2, 3};
  c.fold_layers = {2};
  c.k_top = 3;
  c.dropout = 0.25;
  c.classes = 3;
  c.input_transform = dc::InputTransform::log1p;
  c.seed = seed;
  dc::Model model(c);
  cryptoknight::Rng rng(cryptoknight::derive_seed(seed, 1));
  cryptoknight::features::SentenceMatrix x;
  x.d = 4;
  x.s = 7;
  x.values = random_vector(rng, x.d * x.s, 0.0, 5.0);
  const std::size_t target = 1;
  auto run = [&](dc::ForwardCache* cache) {
    cryptoknight::Rng drop(cryptoknight::derive_seed(seed, 2));
    return dc::cross_entropy(model.forward(x, true, &drop, cache), target);
  };
  dc::ForwardCache cache;
  run(&cache);
  std::vector<double> grads(model.layout().total, 0.0);
  model.backward(cache, target, grads);
  std::vector<double> params(model.params().begin(), model.params().end());
  auto objective = [&] {
    std::copy(params.begin(), params.end(), model.params().begin());
    return run(nullptr);
  };
  Result r{"composed 2-layer model"};
  compare(r, params, grads, objective);
  std::copy(params.begin(), params.end(), model.params().begin());
  return r;
}

inline std::vector<Result> all(std::uint64_t seed) {
  return {wide_conv(seed), fold(seed), kmax(seed), tanh(seed), dense_softmax(seed), composed_model(seed)};
}

}  // namespace gradcheck
