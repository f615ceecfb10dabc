#pragma once

// Random search over a finite hyperparameter grid. The grid's Cartesian
// product is never materialised: trial t takes the t-th element of a seeded
// permutation of product indices, decoded in mixed radix.

#include <algorithm>
#include <functional>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cryptoknight/common/error.hpp"
#include "cryptoknight/common/rng.hpp"
#include "cryptoknight/dcnn/config.hpp"
#include "cryptoknight/dcnn/train.hpp"

namespace cryptoknight::dcnn {

/// Hyperparameter name -> candidate values. Model keys follow ModelConfig's
/// JSON names; learning_rate, momentum and batch_size address TrainSettings.
struct SearchSpace {
  std::vector<std::pair<std::string, std::vector<nlohmann::json>>> dims;
};

inline SearchSpace search_space_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.empty()) throw ConfigError("search space must be a non-empty JSON object");
  SearchSpace space;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it->is_array() || it->empty()) throw ConfigError("search dimension '" + it.key() + "' needs a non-empty array");
    space.dims.emplace_back(it.key(), std::vector<nlohmann::json>(it->begin(), it->end()));
  }
  return space;
}

/// Number of grid points; throws if the space is empty or the count overflows.
inline std::uint64_t space_size(const SearchSpace& space) {
  if (space.dims.empty()) throw ConfigError("search space is empty");
  std::uint64_t total = 1;
  for (const auto& [name, values] : space.dims) {
    if (values.empty()) throw ConfigError("search dimension '" + name + "' is empty");
    if (total > std::numeric_limits<std::uint64_t>::max() / values.size()) throw ConfigError("search space too large");
    total *= values.size();
  }
  return total;
}

struct Candidate {
  ModelConfig model;
  TrainSettings train;
  nlohmann::json assignment;
};

inline constexpr const char* kTrainKeys[] = {"learning_rate", "momentum", "batch_size"};

/// Grid point `index`, the last dimension varying fastest.
inline Candidate candidate_at(const SearchSpace& space, std::uint64_t index, const ModelConfig& base_model,
                              const TrainSettings& base_train) {
  nlohmann::json model_part = nlohmann::json::object(), train_part = nlohmann::json::object();
  Candidate c;
  c.assignment = nlohmann::json::object();
  for (std::size_t k = space.dims.size(); k-- > 0;) {
    const auto& [name, values] = space.dims[k];
    const auto& v = values[index % values.size()];
    index /= values.size();
    c.assignment[name] = v;
    const bool is_train = std::find_if(std::begin(kTrainKeys), std::end(kTrainKeys),
                                       [&](const char* t) { return name == t; }) != std::end(kTrainKeys);
    (is_train ? train_part : model_part)[name] = v;
  }
  c.model = model_config_from_json(model_part, base_model);
  c.train = train_settings_from_json(train_part, base_train);
  return c;
}

/// The first `count` entries of a uniformly random permutation of [0, n).
inline std::vector<std::uint64_t> permutation_prefix(std::uint64_t n, std::uint64_t count, std::uint64_t seed) {
  if (count > n) throw ConfigError("more trials than grid points");
  Rng rng(seed);
  std::unordered_map<std::uint64_t, std::uint64_t> swapped;
  auto value_at = [&](std::uint64_t i) {
    auto it = swapped.find(i);
    return it == swapped.end() ? i : it->second;
  };
  std::vector<std::uint64_t> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t j = i + rng.below(n - i);
    const auto vi = value_at(i), vj = value_at(j);
    swapped[j] = vi;
    out.push_back(vj);
  }
  return out;
}

struct TrialResult {
  std::size_t trial = 0;
  std::uint64_t grid_index = 0;
  nlohmann::json assignment;
  double test_accuracy = -1.0;  // -1 when the candidate could not be trained
  std::string error;
};

struct SearchResult {
  Candidate best;
  std::size_t best_trial = 0;
  std::vector<TrialResult> trials;
};

/// Trains each sampled candidate for `probe_epochs` and keeps the best test
/// accuracy; the earliest trial wins ties.
inline SearchResult random_search(const SearchSpace& space, std::size_t trials, std::size_t probe_epochs,
                                  std::uint64_t seed, const ModelConfig& base_model, const TrainSettings& base_train,
                                  const LabelledSet& data, const Split& split,
                                  const std::function<void(const TrialResult&)>& on_trial = {}) {
  const auto n = space_size(space);
  if (trials == 0) throw ConfigError("at least one trial is required");
  const auto order = permutation_prefix(n, trials, derive_seed(seed, 0x534541524348ULL));
  SearchResult result;
  bool have_best = false;
  double best_acc = -1.0;
  for (std::size_t t = 0; t < order.size(); ++t) {
    TrialResult tr;
    tr.trial = t;
    tr.grid_index = order[t];
    try {
      auto cand = candidate_at(space, order[t], base_model, base_train);
      tr.assignment = cand.assignment;
      cand.train.epochs = probe_epochs;
      const auto res = train(cand.model, cand.train, data, split);
      tr.test_accuracy = res.report.test_accuracy;
      if (!have_best || tr.test_accuracy > best_acc) {
        have_best = true;
        best_acc = tr.test_accuracy;
        result.best = cand;
        result.best_trial = t;
      }
    } catch (const ConfigError& e) {
      tr.error = e.what();
    } catch (const NumericError& e) {
      tr.error = e.what();
    }
    if (on_trial) on_trial(tr);
    result.trials.push_back(std::move(tr));
  }
  if (!have_best) throw ConfigError("no trial produced a trainable configuration");
  result.best.train.epochs = base_train.epochs;
  return result;
}

}  // namespace cryptoknight::dcnn
