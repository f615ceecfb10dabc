#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "cryptoknight/dcnn/config.hpp"
#include "cryptoknight/dcnn/layers.hpp"
#include "cryptoknight/dcnn/model.hpp"
#include "cryptoknight/dcnn/search.hpp"
#include "cryptoknight/dcnn/train.hpp"
#include "gradcheck.hpp"

using namespace cryptoknight;
using namespace cryptoknight::dcnn;

namespace {

Tensor3 tensor(std::size_t maps, std::size_t rows, std::size_t cols, std::vector<double> v) {
  Tensor3 t(maps, rows, cols);
  t.v = std::move(v);
  return t;
}

ModelConfig tiny_config(std::uint64_t seed = 1) {
  ModelConfig c;
  c.d = 6;
  c.filter_widths = {3, 3};
  c.feature_maps = {2, 2};
  c.fold_layers = {2};
  c.k_top = 3;
  c.dropout = 0.0;
  c.classes = 2;
  c.seed = seed;
  return c;
}

/// Two classes that differ only in which mnemonic row carries the counts.
LabelledSet toy_problem(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  LabelledSet set;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % 2;
    features::SentenceMatrix m;
    m.d = 6;
    m.s = 5 + rng.below(10);
    m.values.assign(m.d * m.s, 0.0);
    for (std::size_t j = 0; j < m.s; ++j) {
      m.values[(label == 0 ? 0 : 5) * m.s + j] = 1.0 + static_cast<double>(rng.below(5));
      m.values[2 * m.s + j] = static_cast<double>(rng.below(3));
    }
    set.inputs.push_back(std::move(m));
    set.labels.push_back(label);
  }
  return set;
}

}  // namespace

TEST(WideConv, HandComputedExample) {
  const auto x = tensor(1, 1, 3, {1, 2, 3});
  const std::vector<double> k{1, 1}, b{0};
  EXPECT_EQ(wide_conv(x, k, b, 1, 2).v, (std::vector<double>{1, 3, 5, 3}));
}

TEST(WideConv, OutputLengthAndIdentityKernel) {
  const auto x = tensor(1, 2, 4, {1, 2, 3, 4, -1, 0, 2, 5});
  EXPECT_EQ(wide_conv(x, std::vector<double>(4, 0.5), std::vector<double>(2, 0.0), 1, 2).cols, 5u);
  EXPECT_EQ(wide_conv(x, std::vector<double>{1, 1}, std::vector<double>{0, 0}, 1, 1).v, x.v);
}

TEST(WideConv, SumsInputMapsAndAddsBiasPerRow) {
  const auto x = tensor(2, 1, 2, {1, 2, 10, 20});
  const std::vector<double> k{1, 2};  // [out 0][in 0/1][row 0][t 0]
  const std::vector<double> b{0.5};
  EXPECT_EQ(wide_conv(x, k, b, 1, 1).v, (std::vector<double>{21.5, 42.5}));
}

TEST(Fold, Examples) {
  EXPECT_EQ(fold(Tensor3(1, 4, 3, 1.0)).v, Tensor3(1, 2, 3, 2.0).v);
  const auto x = tensor(1, 4, 1, {1, 2, 3, 4});
  EXPECT_EQ(fold(x).v, (std::vector<double>{3, 7}));
  EXPECT_THROW(fold(Tensor3(1, 3, 2)), ConfigError);
}

TEST(Fold, PreservesTotal) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor3 x(1 + rng.below(3), 2 * (1 + rng.below(6)), 1 + rng.below(9));
    for (auto& v : x.v) v = rng.uniform(-3, 3);
    const auto y = fold(x);
    EXPECT_NEAR(std::accumulate(y.v.begin(), y.v.end(), 0.0), std::accumulate(x.v.begin(), x.v.end(), 0.0), 1e-9);
  }
}

TEST(KMax, Examples) {
  EXPECT_EQ(kmax_pool(std::vector<double>{1, 5, 2, 9, 3}, 3), (std::vector<double>{5, 9, 3}));
  const std::vector<double> row{4, -1, 7, 0};
  EXPECT_EQ(kmax_pool(row, 4), row);
  EXPECT_EQ(kmax_pool(std::vector<double>{2, 7, 2, 2}, 2), (std::vector<double>{2, 7}));
}

TEST(KMax, ShortRowsArePaddedAndCounted) {
  const auto res = kmax_pool(tensor(1, 1, 2, {3, 1}), 4);
  EXPECT_EQ(res.y.v, (std::vector<double>{3, 1, 0, 0}));
  EXPECT_EQ(res.padded, 2u);
  EXPECT_EQ(res.indices[2], -1);
}

TEST(KMax, MatchesBruteForceAndIgnoresSmallerInsertions) {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> row(1 + rng.below(20));
    for (auto& v : row) v = static_cast<double>(rng.below(50));
    const std::size_t k = 1 + rng.below(row.size());
    // Brute force: a position is kept when fewer than k entries beat it,
    // counting equal values at earlier positions as better.
    std::vector<double> expected;
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::size_t better = 0;
      for (std::size_t j = 0; j < row.size(); ++j) better += row[j] > row[i] || (row[j] == row[i] && j < i);
      if (better < k) expected.push_back(row[i]);
    }
    const auto got = kmax_pool(row, k);
    EXPECT_EQ(got, expected);
    const double kth = *std::min_element(got.begin(), got.end());
    auto extended = row;
    extended.insert(extended.begin() + static_cast<std::ptrdiff_t>(rng.below(row.size() + 1)), kth - 1.0);
    extended.push_back(kth - 0.5);
    EXPECT_EQ(kmax_pool(extended, k), got);
  }
}

TEST(KMax, UnselectedPositionsGetNoGradient) {
  const auto x = tensor(1, 1, 5, {1, 5, 2, 9, 3});
  const auto res = kmax_pool(x, 3);
  const auto dx = kmax_backward(Tensor3(1, 1, 3, 1.0), res.indices, 5);
  EXPECT_EQ(dx.v, (std::vector<double>{0, 1, 0, 1, 1}));
}

TEST(DynamicK, Examples) {
  EXPECT_EQ(dynamic_k(4, 4, 100, 7), 7u);
  EXPECT_EQ(dynamic_k(2, 4, 40, 5), 20u);
  EXPECT_EQ(dynamic_k(3, 4, 12, 5), 5u);
  EXPECT_EQ(dynamic_k(1, 3, 10, 1), 7u);  // ceil(20/3)
  EXPECT_THROW(dynamic_k(0, 3, 10, 1), ConfigError);
  EXPECT_THROW(dynamic_k(4, 3, 10, 1), ConfigError);
}

TEST(DynamicK, ScheduleProperties) {
  Rng rng(21);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t L = 1 + rng.below(20), s = 1 + rng.below(5000), k_top = 1 + rng.below(100);
    std::size_t prev = SIZE_MAX;
    for (std::size_t l = 1; l <= L; ++l) {
      const auto k = dynamic_k(l, L, s, k_top);
      EXPECT_GE(k, k_top);
      EXPECT_LE(k, prev);
      const auto scaled = static_cast<std::size_t>(std::ceil(static_cast<double>((L - l) * s) / static_cast<double>(L)));
      EXPECT_EQ(k, std::max(k_top, scaled));
      prev = k;
    }
    EXPECT_EQ(dynamic_k(L, L, s, k_top), k_top);
  }
}

TEST(Softmax, NormalisedAndCrossEntropyIsNegLog) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> logits(2 + rng.below(8));
    for (auto& v : logits) v = rng.uniform(-30, 30);
    const auto p = softmax(logits);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    const std::size_t t = rng.below(p.size());
    EXPECT_GE(cross_entropy(p, t), 0.0);
    EXPECT_DOUBLE_EQ(cross_entropy(p, t), -std::log(p[t]));
  }
}

TEST(Gradients, MatchFiniteDifferences) {
  for (std::uint64_t seed : {1, 2, 3}) {
    for (const auto& r : gradcheck::all(seed)) {
      EXPECT_LT(r.max_rel, 1e-4) << r.name << " seed " << seed;
      EXPECT_GT(r.checked, 0u);
    }
  }
}

TEST(Gradients, ConfidentCorrectPredictionHasTinyBiasGradient) {
  auto c = tiny_config();
  Model model(c);
  // Force an overwhelming logit for class 1 through the dense bias.
  model.params()[model.layout().dense_bias.offset + 1] = 100.0;
  features::SentenceMatrix x{6, 4, std::vector<double>(24, 1.0), false, {}};
  ForwardCache cache;
  model.forward(x, false, nullptr, &cache);
  std::vector<double> grads(model.layout().total, 0.0);
  model.backward(cache, 1, grads);
  for (std::size_t i = 0; i < c.classes; ++i) EXPECT_NEAR(grads[model.layout().dense_bias.offset + i], 0.0, 1e-12);
}

TEST(Forward, HandComputedSingleLayer) {
  ModelConfig c;
  c.d = 2;
  c.filter_widths = {1};
  c.feature_maps = {1};
  c.k_top = 3;
  c.dropout = 0.0;
  c.classes = 2;
  c.input_transform = InputTransform::none;
  std::vector<double> params(Model(c).layout().total, 0.0);
  const auto lay = Model(c).layout();
  params[lay.kernels[0].offset] = 0.5;
  params[lay.kernels[0].offset + 1] = -1.0;
  params[lay.biases[0].offset] = 0.1;
  params[lay.biases[0].offset + 1] = -0.2;
  const double w[2][6] = {{1, 0, -1, 0.5, 0.5, 0.5}, {-1, 2, 0, 0, 0, 1}};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 6; ++j) params[lay.dense_weights.offset + static_cast<std::size_t>(i * 6 + j)] = w[i][j];
  }
  params[lay.dense_bias.offset] = 0.3;
  const Model model(c, params);
  const features::SentenceMatrix x{2, 3, {1, 2, 3, 0.5, 0, 1}, false, {}};

  // Width-1 convolution, k = s keeps every column, then tanh.
  const double h[6] = {std::tanh(0.6), std::tanh(1.1), std::tanh(1.6),
                       std::tanh(-0.7), std::tanh(-0.2), std::tanh(-1.2)};
  double z[2] = {0.3, 0.0};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 6; ++j) z[i] += w[i][j] * h[j];
  }
  const double p1 = 1.0 / (1.0 + std::exp(z[0] - z[1]));
  const auto probs = model.predict(x);
  EXPECT_NEAR(probs[0], 1.0 - p1, 1e-12);
  EXPECT_NEAR(probs[1], p1, 1e-12);
}

TEST(Forward, NormalisedAndRepeatableInInference) {
  const Model model(desk_preset());
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    features::SentenceMatrix x{12, 1 + rng.below(200), {}, false, {}};
    x.values.resize(x.d * x.s);
    for (auto& v : x.values) v = static_cast<double>(rng.below(30));
    const auto a = model.predict(x);
    EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), 1.0, 1e-9);
    EXPECT_EQ(model.predict(x), a);
  }
}

TEST(Forward, RejectsShapeMismatch) {
  const Model model(desk_preset());
  features::SentenceMatrix x{11, 3, std::vector<double>(33, 1.0), false, {}};
  EXPECT_THROW(model.predict(x), DataError);
  EXPECT_THROW(Model(desk_preset(), std::vector<double>(3, 0.0)), DataError);
}

TEST(Config, PaperPresetPassesShapeAlgebra) {
  const auto c = paper_preset(12);
  EXPECT_EQ(c.layers(), 14u);
  EXPECT_EQ(c.filter_widths.front(), 20u);
  EXPECT_EQ(c.filter_widths.back(), 12u);
  for (std::size_t l = 1; l + 1 < c.layers(); ++l) EXPECT_EQ(c.filter_widths[l], 10u);
  EXPECT_EQ(c.k_top, 56u);
  EXPECT_EQ(c.classes, 8u);
  EXPECT_DOUBLE_EQ(c.dropout, 0.6);
  EXPECT_EQ(c.folds_at(13), 2u);
  for (std::size_t s : {1u, 56u, 200u, 4096u}) {
    const auto shapes = shape_algebra(c, s);
    EXPECT_EQ(shapes.back().k, 56u);
    EXPECT_EQ(shapes[12].rows_out, 3u);
    EXPECT_EQ(shapes.back().rows_out, 3u);
  }
  EXPECT_EQ(flat_features(c), 2u * 3u * 56u);
  EXPECT_NO_THROW(Model{c});
}

TEST(Config, RejectsInconsistentShapes) {
  auto c = desk_preset();
  c.fold_layers = {1, 2, 3};  // 12 / 8 is not an integer
  EXPECT_THROW(validate_config(c), ConfigError);
  c = desk_preset();
  c.feature_maps = {2, 2};
  EXPECT_THROW(validate_config(c), ConfigError);
  c = desk_preset();
  c.dropout = 1.0;
  EXPECT_THROW(validate_config(c), ConfigError);
  c = desk_preset();
  c.k_top = 0;
  EXPECT_THROW(validate_config(c), ConfigError);
  c = desk_preset();
  c.fold_layers = {4};
  EXPECT_THROW(validate_config(c), ConfigError);
  EXPECT_THROW(model_config_from_json(nlohmann::json{{"bogus", 1}}, desk_preset()), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  auto c = paper_preset();
  c.seed = 99;
  c.input_transform = InputTransform::none;
  EXPECT_EQ(model_config_from_json(to_json(c), ModelConfig{}), c);
  TrainSettings t;
  t.learning_rate = 0.05;
  EXPECT_EQ(train_settings_from_json(to_json(t), TrainSettings{}), t);
}

TEST(Split, StratifiedAndDeterministic) {
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 750; ++i) labels.push_back(i % 6);
  const auto a = stratified_split(labels, 6, 5);
  EXPECT_EQ(a.train.size() + a.test.size(), 750u);
  std::vector<std::size_t> per_class(6, 0);
  for (auto i : a.train) ++per_class[labels[i]];
  for (auto n : per_class) EXPECT_EQ(n, 94u);  // round(0.75 * 125)
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  all.insert(a.test.begin(), a.test.end());
  EXPECT_EQ(all.size(), 750u);
  const auto b = stratified_split(labels, 6, 5);
  EXPECT_EQ(a.train, b.train);
  EXPECT_NE(stratified_split(labels, 6, 6).train, a.train);
}

TEST(Train, ToyProblemIsLearnedAndRunsAreReproducible) {
  const auto data = toy_problem(60, 8);
  const auto split = stratified_split(data.labels, 2, 1);
  TrainSettings settings;
  settings.epochs = 50;
  const auto a = train(tiny_config(3), settings, data, split);
  EXPECT_GE(a.report.train_accuracy, 0.99);
  const auto b = train(tiny_config(3), settings, data, split);
  EXPECT_TRUE(std::equal(a.model.params().begin(), a.model.params().end(), b.model.params().begin()));
  EXPECT_EQ(curves_csv(a.report), curves_csv(b.report));
  ASSERT_EQ(a.report.epochs.size(), 50u);
  std::size_t row_total = 0;
  for (const auto& row : a.report.confusion) row_total += std::accumulate(row.begin(), row.end(), std::size_t{0});
  EXPECT_EQ(row_total, split.test.size());
}

TEST(Train, ZeroEpochsKeepsInitialParameters) {
  const auto data = toy_problem(20, 9);
  const auto split = stratified_split(data.labels, 2, 1);
  TrainSettings settings;
  settings.epochs = 0;
  const auto r = train(tiny_config(4), settings, data, split);
  const Model fresh(tiny_config(4));
  EXPECT_TRUE(std::equal(fresh.params().begin(), fresh.params().end(), r.model.params().begin()));
  EXPECT_EQ(curves_csv(r.report), "epoch,loss,test_accuracy\n");
}

TEST(Train, DivergenceIsReported) {
  auto data = toy_problem(20, 10);
  for (auto& x : data.inputs) x.values[0] = std::numeric_limits<double>::quiet_NaN();
  const auto split = stratified_split(data.labels, 2, 1);
  TrainSettings settings;
  settings.epochs = 3;
  EXPECT_THROW(train(tiny_config(5), settings, data, split), NumericError);
}

TEST(Train, EmptySplitIsRejected) {
  const auto data = toy_problem(4, 1);
  EXPECT_THROW(train(tiny_config(), TrainSettings{}, data, Split{{0, 1}, {}}), DataError);
}

TEST(Search, PermutationPrefixIsAPermutation) {
  const auto all = permutation_prefix(50, 50, 7);
  EXPECT_EQ(std::set<std::uint64_t>(all.begin(), all.end()).size(), 50u);
  EXPECT_EQ(permutation_prefix(50, 10, 7), std::vector<std::uint64_t>(all.begin(), all.begin() + 10));
  EXPECT_NE(permutation_prefix(50, 10, 8), std::vector<std::uint64_t>(all.begin(), all.begin() + 10));
  EXPECT_THROW(permutation_prefix(5, 6, 1), ConfigError);
  const auto huge = permutation_prefix(std::uint64_t{1} << 60, 100, 3);
  EXPECT_EQ(std::set<std::uint64_t>(huge.begin(), huge.end()).size(), 100u);
}

TEST(Search, CandidateDecodingCoversTheGrid) {
  const auto space = search_space_from_json(nlohmann::json{{"k_top", {2, 3, 4}}, {"learning_rate", {0.01, 0.1}}});
  ASSERT_EQ(space_size(space), 6u);
  std::set<std::string> seen;
  for (std::uint64_t i = 0; i < 6; ++i) {
    const auto c = candidate_at(space, i, tiny_config(), TrainSettings{});
    seen.insert(c.assignment.dump());
    EXPECT_EQ(c.model.k_top, c.assignment["k_top"].get<std::size_t>());
    EXPECT_EQ(c.train.learning_rate, c.assignment["learning_rate"].get<double>());
  }
  EXPECT_EQ(seen.size(), 6u);
  EXPECT_THROW(search_space_from_json(nlohmann::json::object()), ConfigError);
  EXPECT_THROW(search_space_from_json(nlohmann::json{{"k_top", nlohmann::json::array()}}), ConfigError);
}

TEST(Search, ExhaustiveSearchReturnsTheBestTrialDeterministically) {
  const auto data = toy_problem(40, 12);
  const auto split = stratified_split(data.labels, 2, 2);
  const auto space =
      search_space_from_json(nlohmann::json{{"k_top", {1, 3}}, {"learning_rate", {0.001, 0.05}}});
  const auto a = random_search(space, 4, 3, 9, tiny_config(), TrainSettings{}, data, split);
  ASSERT_EQ(a.trials.size(), 4u);
  for (const auto& t : a.trials) EXPECT_GE(a.trials[a.best_trial].test_accuracy, t.test_accuracy);
  for (std::size_t t = 0; t < a.best_trial; ++t) EXPECT_LT(a.trials[t].test_accuracy, a.trials[a.best_trial].test_accuracy);
  const auto b = random_search(space, 4, 3, 9, tiny_config(), TrainSettings{}, data, split);
  EXPECT_EQ(b.best_trial, a.best_trial);
  EXPECT_EQ(b.best.assignment, a.best.assignment);
  for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(a.trials[t].grid_index, b.trials[t].grid_index);
}

TEST(Search, SingletonSpaceReturnsThatConfig) {
  const auto data = toy_problem(20, 13);
  const auto split = stratified_split(data.labels, 2, 2);
  const auto space = search_space_from_json(nlohmann::json{{"dropout", {0.2}}});
  const auto r = random_search(space, 1, 1, 1, tiny_config(), TrainSettings{}, data, split);
  EXPECT_DOUBLE_EQ(r.best.model.dropout, 0.2);
  EXPECT_THROW(random_search(space, 2, 1, 1, tiny_config(), TrainSettings{}, data, split), ConfigError);
}
