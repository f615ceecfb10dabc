#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "cryptoknight/common/error.hpp"

namespace cryptoknight::dcnn {

enum class InputTransform : std::uint8_t { none, log1p };

struct ModelConfig {
  std::size_t d = 12;                       // input rows
  std::vector<std::size_t> filter_widths;   // one per convolutional layer
  std::vector<std::size_t> feature_maps;    // output maps per layer
  std::vector<std::size_t> fold_layers;     // 1-based layers that fold; a repeated index folds repeatedly
  std::size_t k_top = 8;
  double dropout = 0.0;
  std::size_t classes = 2;
  InputTransform input_transform = InputTransform::log1p;
  std::uint64_t seed = 1;
  bool operator==(const ModelConfig&) const = default;

  std::size_t layers() const { return filter_widths.size(); }

  std::size_t folds_at(std::size_t layer) const {
    return static_cast<std::size_t>(std::count(fold_layers.begin(), fold_layers.end(), layer));
  }
};

struct TrainSettings {
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  double learning_rate = 0.01;
  double momentum = 0.9;
  bool operator==(const TrainSettings&) const = default;
};

/// Pooling size at layer l of L for a sentence of length s: max(k_top, ceil((L - l) s / L)).
inline std::size_t dynamic_k(std::size_t l, std::size_t L, std::size_t s, std::size_t k_top) {
  if (L == 0 || l < 1 || l > L) throw ConfigError("dynamic_k needs 1 <= l <= L");
  const std::size_t scaled = ((L - l) * s + L - 1) / L;
  return std::max(k_top, scaled);
}

/// Throws ConfigError describing the first violated constraint.
inline void validate_config(const ModelConfig& c) {
  const std::size_t L = c.layers();
  if (L == 0) throw ConfigError("at least one convolutional layer is required");
  if (c.feature_maps.size() != L) throw ConfigError("feature_maps must have one entry per layer");
  for (auto m : c.filter_widths) {
    if (m < 1) throw ConfigError("filter widths must be >= 1");
  }
  for (auto f : c.feature_maps) {
    if (f < 1) throw ConfigError("feature map counts must be >= 1");
  }
  if (c.k_top < 1) throw ConfigError("k_top must be >= 1");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (c.classes < 2) throw ConfigError("at least two classes are required");
  if (c.d < 1) throw ConfigError("d must be >= 1");
  for (auto l : c.fold_layers) {
    if (l < 1 || l > L) throw ConfigError("fold layer " + std::to_string(l) + " outside 1.." + std::to_string(L));
  }
  std::size_t rows = c.d;
  for (std::size_t l = 1; l <= L; ++l) {
    for (std::size_t f = 0; f < c.folds_at(l); ++f) {
      if (rows % 2 != 0) {
        throw ConfigError("fold at layer " + std::to_string(l) + " needs an even row count, got " + std::to_string(rows));
      }
      rows /= 2;
    }
  }
}

struct LayerShape {
  std::size_t maps_in = 0, rows_in = 0, cols_in = 0;
  std::size_t width = 0, maps_out = 0;
  std::size_t conv_cols = 0;  // cols_in + width - 1
  std::size_t rows_out = 0;   // after folding
  std::size_t k = 0;          // columns after pooling
};

/// Row/column bookkeeping through every layer for a sentence of length s.
inline std::vector<LayerShape> shape_algebra(const ModelConfig& c, std::size_t s) {
  validate_config(c);
  if (s < 1) throw ConfigError("sentence length must be >= 1");
  std::vector<LayerShape> out;
  std::size_t maps = 1, rows = c.d, cols = s;
  const std::size_t L = c.layers();
  for (std::size_t l = 1; l <= L; ++l) {
    LayerShape sh;
    sh.maps_in = maps;
    sh.rows_in = rows;
    sh.cols_in = cols;
    sh.width = c.filter_widths[l - 1];
    sh.maps_out = c.feature_maps[l - 1];
    sh.conv_cols = cols + sh.width - 1;
    sh.rows_out = rows >> c.folds_at(l);
    sh.k = l == L ? c.k_top : dynamic_k(l, L, s, c.k_top);
    out.push_back(sh);
    maps = sh.maps_out;
    rows = sh.rows_out;
    cols = sh.k;
  }
  return out;
}

/// Flattened feature count entering the fully connected layer.
inline std::size_t flat_features(const ModelConfig& c) {
  validate_config(c);
  std::size_t rows = c.d >> c.fold_layers.size();
  return c.feature_maps.back() * rows * c.k_top;
}

/// Three layers, widths 7/5/5, two maps each, one fold before the last pooling.
inline ModelConfig desk_preset(std::size_t d = 12, std::size_t classes = 6) {
  ModelConfig c;
  c.d = d;
  c.filter_widths = {7, 5, 5};
  c.feature_maps = {2, 2, 2};
  c.fold_layers = {3};
  c.k_top = 8;
  c.dropout = 0.3;
  c.classes = classes;
  return c;
}

/// Fourteen layers: width 20 first, 12 last, 10 between; two maps
/// throughout; two composed folds at layer 13; k_top 56; dropout 0.6; 8 outputs.
inline ModelConfig paper_preset(std::size_t d = 12) {
  ModelConfig c;
  c.d = d;
  c.filter_widths.assign(14, 10);
  c.filter_widths.front() = 20;
  c.filter_widths.back() = 12;
  c.feature_maps.assign(14, 2);
  c.fold_layers = {13, 13};
  c.k_top = 56;
  c.dropout = 0.6;
  c.classes = 8;
  return c;
}

inline std::string name_of(InputTransform t) { return t == InputTransform::log1p ? "log1p" : "none"; }

inline nlohmann::json to_json(const ModelConfig& c) {
  return nlohmann::json{{"d", c.d},
                        {"filter_widths", c.filter_widths},
                        {"feature_maps", c.feature_maps},
                        {"fold_layers", c.fold_layers},
                        {"k_top", c.k_top},
                        {"dropout", c.dropout},
                        {"classes", c.classes},
                        {"input_transform", name_of(c.input_transform)},
                        {"seed", c.seed}};
}

inline nlohmann::json to_json(const TrainSettings& t) {
  return nlohmann::json{{"epochs", t.epochs},
                        {"batch_size", t.batch_size},
                        {"learning_rate", t.learning_rate},
                        {"momentum", t.momentum}};
}

/// Overlays the keys present in `j` onto `base`. Unknown keys are rejected.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base) {
  static const char* kKeys[] = {"d", "filter_widths", "feature_maps", "fold_layers", "k_top",
                                "dropout", "classes", "input_transform", "seed"};
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) { return it.key() == k; }) ==
          std::end(kKeys)) {
        throw ConfigError("unknown model config key '" + it.key() + "'");
      }
    }
    if (j.contains("d")) base.d = j.at("d").get<std::size_t>();
    if (j.contains("filter_widths")) base.filter_widths = j.at("filter_widths").get<std::vector<std::size_t>>();
    if (j.contains("feature_maps")) base.feature_maps = j.at("feature_maps").get<std::vector<std::size_t>>();
    if (j.contains("fold_layers")) base.fold_layers = j.at("fold_layers").get<std::vector<std::size_t>>();
    if (j.contains("k_top")) base.k_top = j.at("k_top").get<std::size_t>();
    if (j.contains("dropout")) base.dropout = j.at("dropout").get<double>();
    if (j.contains("classes")) base.classes = j.at("classes").get<std::size_t>();
    if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("input_transform")) {
      const auto t = j.at("input_transform").get<std::string>();
      if (t == "log1p") base.input_transform = InputTransform::log1p;
      else if (t == "none") base.input_transform = InputTransform::none;
      else throw ConfigError("input_transform must be 'log1p' or 'none'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  return base;
}

inline TrainSettings train_settings_from_json(const nlohmann::json& j, TrainSettings base) {
  try {
    if (j.contains("epochs")) base.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("batch_size")) base.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("learning_rate")) base.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("momentum")) base.momentum = j.at("momentum").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed training settings: ") + e.what());
  }
  if (base.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(base.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(base.momentum >= 0.0 && base.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  return base;
}

}  // namespace cryptoknight::dcnn
