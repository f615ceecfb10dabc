#pragma once

// Per layer: wide convolution -> fold(s) -> dynamic k-max pooling -> tanh,
// with dropout after the first layer in training. Then flatten -> dense ->
// softmax. All parameters live in one flat vector addressed by a layout.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "cryptoknight/common/error.hpp"
#include "cryptoknight/common/rng.hpp"
#include "cryptoknight/dcnn/config.hpp"
#include "cryptoknight/dcnn/layers.hpp"
#include "cryptoknight/features/sentence.hpp"

namespace cryptoknight::dcnn {

struct Slot {
  std::size_t offset = 0;
  std::size_t size = 0;
};

struct ParamLayout {
  std::vector<Slot> kernels;  // [out][in][row][t] per layer
  std::vector<Slot> biases;   // [out][row] per layer
  Slot dense_weights;         // [class][feature]
  Slot dense_bias;
  std::size_t flat = 0;
  std::size_t total = 0;
};

inline ParamLayout layout_of(const ModelConfig& c) {
  validate_config(c);
  ParamLayout lay;
  std::size_t offset = 0, maps = 1, rows = c.d;
  auto take = [&](std::size_t n) {
    Slot s{offset, n};
    offset += n;
    return s;
  };
  for (std::size_t l = 1; l <= c.layers(); ++l) {
    const std::size_t out = c.feature_maps[l - 1], width = c.filter_widths[l - 1];
    lay.kernels.push_back(take(out * maps * rows * width));
    lay.biases.push_back(take(out * rows));
    maps = out;
    rows >>= c.folds_at(l);
  }
  lay.flat = maps * rows * c.k_top;
  lay.dense_weights = take(c.classes * lay.flat);
  lay.dense_bias = take(c.classes);
  lay.total = offset;
  return lay;
}

struct LayerCache {
  Tensor3 input;
  std::size_t pooled_from = 0;  // columns entering the pooling stage
  std::vector<std::int32_t> indices;
  Tensor3 output;               // tanh output before dropout
  std::vector<double> mask;     // dropout multipliers, empty when inactive
};

struct ForwardCache {
  std::size_t s = 0;
  std::vector<LayerCache> layers;
  std::vector<double> flat;
  std::vector<double> probs;
  std::size_t padded = 0;  // zero slots introduced by short rows across all poolings
};

class Model {
 public:
  explicit Model(ModelConfig config) : config_(std::move(config)), layout_(layout_of(config_)), params_(layout_.total) {
    initialize();
  }

  Model(ModelConfig config, std::vector<double> params)
      : config_(std::move(config)), layout_(layout_of(config_)), params_(std::move(params)) {
    if (params_.size() != layout_.total) {
      throw DataError("parameter count " + std::to_string(params_.size()) + " does not match configuration (" +
                      std::to_string(layout_.total) + ")");
    }
  }

  const ModelConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }

  std::span<const double> slot(const Slot& s) const { return std::span<const double>(params_).subspan(s.offset, s.size); }

  /// Class probabilities. `dropout_rng` is consulted only when `train` is set.
  std::vector<double> forward(const features::SentenceMatrix& x, bool train, Rng* dropout_rng,
                              ForwardCache* cache) const {
    if (x.d != config_.d) {
      throw DataError("input has d=" + std::to_string(x.d) + ", model expects d=" + std::to_string(config_.d));
    }
    if (x.s < 1 || x.values.size() != x.d * x.s) throw DataError("malformed sentence matrix");
    const std::size_t L = config_.layers();
    ForwardCache local;
    ForwardCache& fc = cache ? *cache : local;
    fc = ForwardCache{};
    fc.s = x.s;
    fc.layers.resize(L);

    Tensor3 act(1, x.d, x.s);
    for (std::size_t i = 0; i < x.values.size(); ++i) {
      act.v[i] = config_.input_transform == InputTransform::log1p ? std::log1p(x.values[i]) : x.values[i];
    }
    for (std::size_t l = 1; l <= L; ++l) {
      auto& lc = fc.layers[l - 1];
      Tensor3 conv = wide_conv(act, slot(layout_.kernels[l - 1]), slot(layout_.biases[l - 1]),
                               config_.feature_maps[l - 1], config_.filter_widths[l - 1]);
      for (std::size_t f = 0; f < config_.folds_at(l); ++f) conv = fold(conv);
      lc.pooled_from = conv.cols;
      const std::size_t k = l == L ? config_.k_top : dynamic_k(l, L, x.s, config_.k_top);
      auto pooled = kmax_pool(conv, k);
      fc.padded += pooled.padded;
      lc.indices = std::move(pooled.indices);
      Tensor3 out = tanh_forward(std::move(pooled.y));
      lc.input = std::move(act);
      act = out;
      if (l == 1 && train && config_.dropout > 0.0) {
        if (!dropout_rng) throw Error("dropout needs a random source in training mode");
        const double keep = 1.0 - config_.dropout;
        lc.mask.resize(act.v.size());
        for (std::size_t i = 0; i < act.v.size(); ++i) {
          lc.mask[i] = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
          act.v[i] *= lc.mask[i];
        }
      }
      lc.output = std::move(out);
    }
    fc.flat = std::move(act.v);
    const auto logits = dense_forward(fc.flat, slot(layout_.dense_weights), slot(layout_.dense_bias));
    fc.probs = softmax(logits);
    return fc.probs;
  }

  std::vector<double> predict(const features::SentenceMatrix& x) const { return forward(x, false, nullptr, nullptr); }

  /// Adds dLoss/dparams for cross-entropy against `target` into `grads`.
  void backward(const ForwardCache& fc, std::size_t target, std::span<double> grads) const {
    if (fc.layers.size() != config_.layers() || fc.probs.empty()) throw Error("backward needs a forward cache");
    if (target >= config_.classes) throw DataError("target class out of range");
    if (grads.size() != layout_.total) throw Error("gradient buffer has the wrong size");
    auto gslot = [&](const Slot& s) { return grads.subspan(s.offset, s.size); };

    const auto dlogits = softmax_ce_backward(fc.probs, target);
    auto dflat = dense_backward(fc.flat, slot(layout_.dense_weights), dlogits, gslot(layout_.dense_weights),
                                gslot(layout_.dense_bias));
    const std::size_t L = config_.layers();
    const auto& last = fc.layers.back().output;
    Tensor3 d(last.maps, last.rows, last.cols);
    d.v = std::move(dflat);
    for (std::size_t l = L; l >= 1; --l) {
      const auto& lc = fc.layers[l - 1];
      if (!lc.mask.empty()) {
        for (std::size_t i = 0; i < d.v.size(); ++i) d.v[i] *= lc.mask[i];
      }
      Tensor3 dpool = tanh_backward(lc.output, std::move(d));
      Tensor3 dconv = kmax_backward(dpool, lc.indices, lc.pooled_from);
      for (std::size_t f = 0; f < config_.folds_at(l); ++f) dconv = fold_backward(dconv);
      Tensor3 dx;
      wide_conv_backward(lc.input, slot(layout_.kernels[l - 1]), config_.filter_widths[l - 1], dconv,
                         l > 1 ? &dx : nullptr, gslot(layout_.kernels[l - 1]), gslot(layout_.biases[l - 1]));
      d = std::move(dx);
    }
  }

 private:
  void initialize() {
    Rng rng(derive_seed(config_.seed, 0x494e4954ULL));
    std::size_t maps = 1;
    for (std::size_t l = 0; l < config_.layers(); ++l) {
      const double fan_in = static_cast<double>(maps * config_.filter_widths[l]);
      const double fan_out = static_cast<double>(config_.feature_maps[l] * config_.filter_widths[l]);
      fill_uniform(layout_.kernels[l], std::sqrt(6.0 / (fan_in + fan_out)), rng);
      maps = config_.feature_maps[l];
    }
    fill_uniform(layout_.dense_weights,
                 std::sqrt(6.0 / static_cast<double>(layout_.flat + config_.classes)), rng);
  }

  void fill_uniform(const Slot& s, double limit, Rng& rng) {
    for (std::size_t i = 0; i < s.size; ++i) params_[s.offset + i] = rng.uniform(-limit, limit);
  }

  ModelConfig config_;
  ParamLayout layout_;
  std::vector<double> params_;
};

}  // namespace cryptoknight::dcnn
