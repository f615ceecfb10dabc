#pragma once

// Mini-batch SGD with momentum, stratified train/test split, evaluation.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "cryptoknight/common/error.hpp"
#include "cryptoknight/common/rng.hpp"
#include "cryptoknight/dcnn/config.hpp"
#include "cryptoknight/dcnn/model.hpp"
#include "cryptoknight/features/sentence.hpp"

namespace cryptoknight::dcnn {

struct LabelledSet {
  std::vector<features::SentenceMatrix> inputs;
  std::vector<std::size_t> labels;  // indices into the class list
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline constexpr double kTrainFraction = 0.75;

/// Per class: shuffle its samples and send round(0.75 n_c) of them to training.
/// Both sides keep ascending sample order.
inline Split stratified_split(std::span<const std::size_t> labels, std::size_t classes, std::uint64_t seed,
                              double train_fraction = kTrainFraction) {
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw DataError("label index out of range");
    by_class[labels[i]].push_back(i);
  }
  Rng rng(derive_seed(seed, 0x53504c4954ULL));
  Split split;
  for (auto& members : by_class) {
    rng.shuffle(std::span(members));
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
    split.train.insert(split.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test.insert(split.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

using Confusion = std::vector<std::vector<std::size_t>>;  // [actual][predicted]

struct EvalResult {
  Confusion confusion;
  std::vector<std::size_t> predictions;  // parallel to the evaluated indices
  std::vector<std::vector<double>> probabilities;
  double accuracy = 0.0;
  double loss = 0.0;
};

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline EvalResult evaluate(const Model& model, const LabelledSet& data, std::span<const std::size_t> indices) {
  const std::size_t C = model.config().classes;
  EvalResult r;
  r.confusion.assign(C, std::vector<std::size_t>(C, 0));
  std::size_t correct = 0;
  for (auto i : indices) {
    auto probs = model.predict(data.inputs[i]);
    const auto pred = argmax(probs);
    r.loss += cross_entropy(probs, data.labels[i]);
    ++r.confusion.at(data.labels[i]).at(pred);
    correct += pred == data.labels[i];
    r.predictions.push_back(pred);
    r.probabilities.push_back(std::move(probs));
  }
  if (!indices.empty()) {
    r.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
    r.loss /= static_cast<double>(indices.size());
  }
  return r;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean training cross-entropy over the epoch
  double test_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  Confusion confusion;  // final test confusion
  double test_accuracy = 0.0;
  double train_accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  Model model;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

inline TrainResult train(const ModelConfig& config, const TrainSettings& settings, const LabelledSet& data,
                         const Split& split, const EpochCallback& on_epoch = {}) {
  const auto started = std::chrono::steady_clock::now();
  if (split.train.empty() || split.test.empty()) throw DataError("training needs non-empty train and test splits");
  if (settings.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  for (auto i : split.train) {
    if (data.labels.at(i) >= config.classes) throw DataError("label outside the model's class range");
  }
  for (const auto& x : data.inputs) shape_algebra(config, x.s);

  Model model(config);
  const std::size_t P = model.layout().total;
  std::vector<double> grad(P), velocity(P, 0.0);
  TrainReport report;
  Rng dropout_rng(derive_seed(config.seed, 0x44524f50ULL));
  std::vector<std::size_t> order = split.train;
  ForwardCache cache;

  for (std::size_t epoch = 1; epoch <= settings.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(derive_seed(config.seed, 0x45504f4348ULL), epoch));
    shuffle_rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += settings.batch_size) {
      const std::size_t stop = std::min(order.size(), start + settings.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const auto i = order[b];
        const auto& probs = model.forward(data.inputs[i], true, &dropout_rng, &cache);
        loss_sum += cross_entropy(probs, data.labels[i]);
        model.backward(cache, data.labels[i], grad);
      }
      const double scale = settings.learning_rate / static_cast<double>(stop - start);
      auto params = model.params();
      for (std::size_t k = 0; k < P; ++k) {
        velocity[k] = settings.momentum * velocity[k] - scale * grad[k];
        params[k] += velocity[k];
      }
    }
    const double loss = loss_sum / static_cast<double>(order.size());
    if (!std::isfinite(loss)) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch) + " (loss is not finite)");
    }
    for (auto v : model.params()) {
      if (!std::isfinite(v)) throw NumericError("non-finite parameter after epoch " + std::to_string(epoch));
    }
    EpochRecord rec{epoch, loss, evaluate(model, data, split.test).accuracy};
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  const auto final_eval = evaluate(model, data, split.test);
  report.confusion = final_eval.confusion;
  report.test_accuracy = final_eval.accuracy;
  report.train_accuracy = evaluate(model, data, split.train).accuracy;
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return TrainResult{std::move(model), std::move(report)};
}

/// `epoch,loss,test_accuracy` with one row per epoch.
inline std::string curves_csv(const TrainReport& report) {
  std::string out = "epoch,loss,test_accuracy\n";
  char buf[96];
  for (const auto& e : report.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.9f,%.6f\n", e.epoch, e.loss, e.test_accuracy);
    out += buf;
  }
  return out;
}

}  // namespace cryptoknight::dcnn
