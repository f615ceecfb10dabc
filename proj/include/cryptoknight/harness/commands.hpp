#pragma once

// The pipeline stages behind the CLI. Each command is a plain function of
// its options; the CLI only parses flags, prints results and maps errors to
// exit codes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cryptoknight/common/bytes.hpp"
#include "cryptoknight/common/error.hpp"
#include "cryptoknight/dcnn/checkpoint.hpp"
#include "cryptoknight/dcnn/config.hpp"
#include "cryptoknight/dcnn/search.hpp"
#include "cryptoknight/dcnn/train.hpp"
#include "cryptoknight/features/sentence.hpp"
#include "cryptoknight/harness/container.hpp"
#include "cryptoknight/isa/assembler.hpp"
#include "cryptoknight/synth/dataset.hpp"
#include "cryptoknight/tracer/dump.hpp"
#include "cryptoknight/tracer/machine.hpp"

namespace cryptoknight::harness {

namespace fs = std::filesystem;

inline constexpr std::uint64_t kDefaultStepLimit = 50'000'000;
inline constexpr double kMaxSkipFraction = 0.05;

inline std::vector<synth::Label> parse_classes(std::span<const std::string> tags) {
  if (tags.empty()) throw ConfigError("no classes given");
  std::vector<synth::Label> out;
  for (const auto& t : tags) {
    const auto label = synth::label_from_tag(t);
    if (!label) throw ConfigError("unknown class '" + t + "'");
    if (std::find(out.begin(), out.end(), *label) != out.end()) throw ConfigError("duplicate class '" + t + "'");
    out.push_back(*label);
  }
  return out;
}

// ---- synth

struct SynthOptions {
  std::vector<std::string> classes;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  fs::path out_dir;
  double inject_mean = synth::kDefaultInjectMean;
};

inline synth::DatasetManifest cmd_synth(const SynthOptions& o) {
  if (o.n == 0) throw ConfigError("n must be positive");
  const auto classes = parse_classes(o.classes);
  if (o.n < classes.size()) throw ConfigError("n must be at least the number of classes");
  return synth::build_dataset(classes, o.n, o.seed, o.out_dir, o.inject_mean);
}

// ---- extract

struct ExtractOptions {
  fs::path dataset_dir;
  std::uint64_t step_limit = kDefaultStepLimit;
  bool no_entropy = false;
  std::size_t max_s = features::kDefaultMaxS;
  fs::path out_file;
};

struct SkippedSample {
  std::size_t index = 0;
  std::string reason;
};

struct ExtractResult {
  DatasetContainer container;
  std::vector<SkippedSample> skipped;
};

/// Runs a program to completion; hitting the step limit is a failure.
inline tracer::Trace trace_program(const isa::Program& p, std::uint64_t step_limit) {
  auto t = tracer::execute(p, step_limit);
  if (!t.halted) throw ExecutionError("step limit of " + std::to_string(step_limit) + " reached before halt");
  return t;
}

inline ExtractResult cmd_extract(const ExtractOptions& o) {
  if (o.step_limit == 0) throw ConfigError("step limit must be positive");
  if (o.max_s == 0) throw ConfigError("max_s must be positive");
  const auto manifest = synth::read_manifest(o.dataset_dir);
  if (manifest.entries.empty()) throw ConfigError("manifest lists no samples");
  features::FeatureConfig fc;
  fc.max_s = o.max_s;
  fc.use_entropy = !o.no_entropy;

  ExtractResult res;
  auto& c = res.container;
  c.d = fc.mnemonics.size();
  c.master_seed = manifest.master_seed;
  c.classes = manifest.classes;
  c.mnemonics = features::mnemonic_names(fc.mnemonics);
  c.use_entropy = fc.use_entropy;
  c.max_s = fc.max_s;
  for (const auto& e : manifest.entries) {
    try {
      c.class_index(e.label);
      const auto program = isa::parse_program(read_text_file((o.dataset_dir / e.path).string()));
      auto matrix = features::build_sentence_matrix(trace_program(program, o.step_limit), fc);
      matrix.label = e.label;
      c.records.push_back({e.label, e.index, std::move(matrix)});
    } catch (const Error& err) {
      res.skipped.push_back({e.index, err.what()});
    }
  }
  const double skipped = static_cast<double>(res.skipped.size());
  if (skipped > kMaxSkipFraction * static_cast<double>(manifest.entries.size())) {
    throw DataError(std::to_string(res.skipped.size()) + " of " + std::to_string(manifest.entries.size()) +
                    " samples failed extraction (first: " + res.skipped.front().reason + ")");
  }
  if (!o.out_file.empty()) save_container(o.out_file.string(), c);
  return res;
}

// ---- run configuration: {"preset": "desk"|"paper", "model": {...}, "train": {...}}

struct RunConfig {
  dcnn::ModelConfig model;
  dcnn::TrainSettings train;
};

inline dcnn::ModelConfig preset_config(const std::string& name, std::size_t d, std::size_t classes) {
  if (name == "desk") return dcnn::desk_preset(d, classes);
  if (name == "paper") return dcnn::paper_preset(d);
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

inline RunConfig run_config_from_json(const nlohmann::json& j, const std::string& default_preset, std::size_t d,
                                      std::size_t classes) {
  if (!j.is_object()) throw ConfigError("run configuration must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "preset" && it.key() != "model" && it.key() != "train") {
      throw ConfigError("unknown run configuration key '" + it.key() + "'");
    }
  }
  std::string preset = default_preset;
  if (j.contains("preset")) {
    if (!j.at("preset").is_string()) throw ConfigError("preset must be a string");
    preset = j.at("preset").get<std::string>();
  }
  RunConfig rc;
  rc.model = preset_config(preset, d, classes);
  if (j.contains("model")) rc.model = dcnn::model_config_from_json(j.at("model"), rc.model);
  if (j.contains("train")) rc.train = dcnn::train_settings_from_json(j.at("train"), rc.train);
  return rc;
}

inline RunConfig load_run_config(const std::optional<fs::path>& file, const std::string& preset, std::size_t d,
                                 std::size_t classes) {
  if (!file) return RunConfig{preset_config(preset, d, classes), {}};
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(file->string()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config file " + file->string() + ": " + e.what());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return run_config_from_json(j, preset, d, classes);
}

inline nlohmann::json to_json(const RunConfig& rc) {
  return nlohmann::json{{"model", dcnn::to_json(rc.model)}, {"train", dcnn::to_json(rc.train)}};
}

/// Output names of a model: the container's classes, then placeholders for
/// any extra outputs the configuration asks for.
inline std::vector<std::string> output_names(const DatasetContainer& c, std::size_t outputs) {
  auto names = c.classes;
  for (std::size_t i = names.size(); i < outputs; ++i) names.push_back("unused" + std::to_string(i));
  return names;
}

inline void check_model_fits(const dcnn::ModelConfig& m, const DatasetContainer& c) {
  if (m.d != c.d) throw ConfigError("model d=" + std::to_string(m.d) + " but the features have d=" + std::to_string(c.d));
  if (m.classes < c.classes.size()) {
    throw ConfigError("model has " + std::to_string(m.classes) + " outputs for " + std::to_string(c.classes.size()) +
                      " classes");
  }
}

inline features::FeatureConfig feature_config_of(const DatasetContainer& c) {
  features::FeatureConfig fc;
  fc.mnemonics = features::mnemonics_from_names(c.mnemonics);
  fc.use_entropy = c.use_entropy;
  fc.max_s = c.max_s;
  return fc;
}

inline DatasetContainer load_nonempty_container(const fs::path& path) {
  auto c = load_container(path.string());
  if (c.records.empty()) throw ConfigError("container " + path.string() + " holds no records");
  return c;
}

// ---- train

struct TrainOptions {
  fs::path container;
  std::string preset = "desk";
  std::optional<fs::path> config_file;
  std::optional<std::size_t> epochs;
  std::uint64_t seed = 0;
  fs::path out_dir;  // receives model.ckpt, curves.csv and report.json
};

struct TrainOutcome {
  RunConfig config;
  dcnn::TrainReport report;
  dcnn::Split split;
  dcnn::Checkpoint checkpoint;
};

inline nlohmann::json report_json(const TrainOutcome& t, const std::vector<std::string>& classes) {
  return nlohmann::json{{"config", to_json(t.config)},
                        {"classes", classes},
                        {"train_samples", t.split.train.size()},
                        {"test_samples", t.split.test.size()},
                        {"test_accuracy", t.report.test_accuracy},
                        {"train_accuracy", t.report.train_accuracy},
                        {"confusion", t.report.confusion}};
}

inline TrainOutcome cmd_train(const TrainOptions& o, const dcnn::EpochCallback& on_epoch = {}) {
  const auto container = load_nonempty_container(o.container);
  const auto data = labelled_set(container);
  TrainOutcome out;
  out.config = load_run_config(o.config_file, o.preset, container.d, container.classes.size());
  out.config.model.seed = o.seed;
  if (o.epochs) out.config.train.epochs = *o.epochs;
  check_model_fits(out.config.model, container);
  for (const auto& x : data.inputs) dcnn::shape_algebra(out.config.model, x.s);

  out.split = dcnn::stratified_split(data.labels, container.classes.size(), o.seed);
  auto result = dcnn::train(out.config.model, out.config.train, data, out.split, on_epoch);
  out.report = std::move(result.report);
  const auto names = output_names(container, out.config.model.classes);
  out.checkpoint = dcnn::make_checkpoint(result.model, names, feature_config_of(container));
  if (!o.out_dir.empty()) {
    fs::create_directories(o.out_dir);
    dcnn::save_checkpoint((o.out_dir / "model.ckpt").string(), out.checkpoint);
    write_text_file((o.out_dir / "curves.csv").string(), dcnn::curves_csv(out.report));
    write_text_file((o.out_dir / "report.json").string(), report_json(out, names).dump(2) + "\n");
  }
  return out;
}

// ---- eval

struct SamplePrediction {
  std::size_t index = 0;  // manifest index of the record
  std::string actual;
  std::string predicted;
  std::vector<double> probabilities;  // over the checkpoint's classes
};

struct EvalSummary {
  std::vector<std::string> classes;
  dcnn::Confusion confusion;  // [actual][predicted]
  double accuracy = 0.0;
  std::vector<std::optional<double>> precision;  // empty column -> nullopt
  std::vector<std::optional<double>> recall;     // empty row -> nullopt
  std::vector<SamplePrediction> predictions;
};

/// Confusion-derived statistics; accuracy is trace / total.
inline void summarize(EvalSummary& s) {
  const std::size_t C = s.confusion.size();
  std::size_t diag = 0, total = 0;
  s.precision.assign(C, std::nullopt);
  s.recall.assign(C, std::nullopt);
  for (std::size_t k = 0; k < C; ++k) {
    std::size_t row = 0, col = 0;
    for (std::size_t j = 0; j < C; ++j) {
      row += s.confusion[k][j];
      col += s.confusion[j][k];
      total += s.confusion[k][j];
    }
    diag += s.confusion[k][k];
    if (row) s.recall[k] = static_cast<double>(s.confusion[k][k]) / static_cast<double>(row);
    if (col) s.precision[k] = static_cast<double>(s.confusion[k][k]) / static_cast<double>(col);
  }
  s.accuracy = total ? static_cast<double>(diag) / static_cast<double>(total) : 0.0;
}

inline void check_compatible(const dcnn::Checkpoint& ck, const DatasetContainer& c) {
  if (ck.config.d != c.d) throw DataError("checkpoint d does not match the container");
  if (features::mnemonic_names(ck.features.mnemonics) != c.mnemonics) {
    throw DataError("checkpoint and container use different mnemonic lists");
  }
  if (ck.features.use_entropy != c.use_entropy) {
    throw DataError("checkpoint and container disagree on entropy weighting");
  }
  for (const auto& cls : c.classes) {
    if (std::find(ck.classes.begin(), ck.classes.end(), cls) == ck.classes.end()) {
      throw DataError("container class '" + cls + "' is unknown to the checkpoint");
    }
  }
}

inline EvalSummary evaluate_container(const dcnn::Checkpoint& ck, const DatasetContainer& c) {
  check_compatible(ck, c);
  const auto model = dcnn::model_of(ck);
  EvalSummary s;
  s.classes = ck.classes;
  const std::size_t C = ck.classes.size();
  s.confusion.assign(C, std::vector<std::size_t>(C, 0));
  for (const auto& r : c.records) {
    const auto actual = static_cast<std::size_t>(std::find(ck.classes.begin(), ck.classes.end(), r.label) -
                                                 ck.classes.begin());
    auto probs = model.predict(r.matrix);
    const auto pred = dcnn::argmax(probs);
    ++s.confusion[actual][pred];
    s.predictions.push_back({r.index, r.label, ck.classes[pred], std::move(probs)});
  }
  summarize(s);
  return s;
}

inline EvalSummary cmd_eval(const fs::path& checkpoint, const fs::path& container) {
  const auto c = load_nonempty_container(container);
  return evaluate_container(dcnn::load_checkpoint(checkpoint.string()), c);
}

inline std::string format_eval(const EvalSummary& s) {
  std::ostringstream out;
  char buf[64];
  std::size_t w = 9;
  for (const auto& c : s.classes) w = std::max(w, c.size() + 1);
  out << "confusion (rows = actual, columns = predicted)\n";
  out << std::string(w, ' ');
  for (const auto& c : s.classes) out << std::string(w - c.size(), ' ') << c;
  out << '\n';
  for (std::size_t k = 0; k < s.classes.size(); ++k) {
    out << s.classes[k] << std::string(w - s.classes[k].size(), ' ');
    for (auto v : s.confusion[k]) {
      const auto cell = std::to_string(v);
      out << std::string(w - cell.size(), ' ') << cell;
    }
    out << '\n';
  }
  std::snprintf(buf, sizeof buf, "accuracy %.4f\n", s.accuracy);
  out << buf << "class" << std::string(w - 5, ' ') << "precision    recall\n";
  auto fmt = [&](const std::optional<double>& v) {
    if (!v) return std::string("      n/a");
    std::snprintf(buf, sizeof buf, "%9.4f", *v);
    return std::string(buf);
  };
  for (std::size_t k = 0; k < s.classes.size(); ++k) {
    out << s.classes[k] << std::string(w - s.classes[k].size(), ' ') << fmt(s.precision[k]) << ' '
        << fmt(s.recall[k]) << '\n';
  }
  return out.str();
}

/// index,actual,predicted,p_<class>... with round-trippable probabilities.
inline std::string predictions_csv(const EvalSummary& s) {
  std::string out = "index,actual,predicted";
  for (const auto& c : s.classes) out += ",p_" + c;
  out += '\n';
  char buf[40];
  for (const auto& p : s.predictions) {
    out += std::to_string(p.index) + ',' + p.actual + ',' + p.predicted;
    for (double v : p.probabilities) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

// ---- classify

struct ClassifyOptions {
  fs::path checkpoint;
  fs::path program;
  std::uint64_t step_limit = kDefaultStepLimit;
  std::optional<fs::path> trace_dump;
};

struct ClassProbability {
  std::string label;
  double probability = 0.0;
};

/// Probabilities over the checkpoint's classes, in model output order.
inline std::vector<double> classify_program(const dcnn::Checkpoint& ck, const isa::Program& program,
                                            std::uint64_t step_limit, tracer::Trace* trace_out = nullptr) {
  auto trace = trace_program(program, step_limit);
  const auto matrix = features::build_sentence_matrix(trace, ck.features);
  if (matrix.d != ck.config.d) throw DataError("feature d does not match the checkpoint");
  auto probs = dcnn::model_of(ck).predict(matrix);
  if (trace_out) *trace_out = std::move(trace);
  return probs;
}

/// Classes sorted by descending probability; ties keep output order.
inline std::vector<ClassProbability> rank(const std::vector<std::string>& classes, std::span<const double> probs) {
  std::vector<ClassProbability> out;
  for (std::size_t i = 0; i < probs.size(); ++i) out.push_back({classes[i], probs[i]});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.probability > b.probability; });
  return out;
}

inline std::vector<ClassProbability> cmd_classify(const ClassifyOptions& o) {
  if (o.step_limit == 0) throw ConfigError("step limit must be positive");
  const auto ck = dcnn::load_checkpoint(o.checkpoint.string());
  const auto program = isa::parse_program(read_text_file(o.program.string()));
  tracer::Trace trace;
  const auto probs = classify_program(ck, program, o.step_limit, o.trace_dump ? &trace : nullptr);
  if (o.trace_dump) {
    std::ofstream dump(*o.trace_dump, std::ios::binary | std::ios::trunc);
    if (!dump) throw DataError("cannot write " + o.trace_dump->string());
    tracer::write_trace_dump(dump, trace);
  }
  return rank(ck.classes, probs);
}

// ---- hypersearch

struct HypersearchOptions {
  fs::path container;
  fs::path space_file;
  std::size_t trials = 0;
  std::size_t probe_epochs = 0;
  std::uint64_t seed = 0;
  std::string preset = "desk";
  std::optional<fs::path> config_file;
  fs::path out_file;  // winning run configuration
};

struct HypersearchOutcome {
  RunConfig best;
  std::size_t best_trial = 0;
  std::vector<dcnn::TrialResult> trials;
};

inline HypersearchOutcome cmd_hypersearch(const HypersearchOptions& o,
                                          const std::function<void(const dcnn::TrialResult&)>& on_trial = {}) {
  if (o.trials == 0) throw ConfigError("trials must be positive");
  if (o.probe_epochs == 0) throw ConfigError("probe epochs must be positive");
  nlohmann::json space_json;
  try {
    space_json = nlohmann::json::parse(read_text_file(o.space_file.string()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed search space " + o.space_file.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  const auto space = dcnn::search_space_from_json(space_json);
  for (const auto& [name, values] : space.dims) {
    if (name == "d" || name == "classes") throw ConfigError("'" + name + "' is fixed by the data and cannot be searched");
  }
  const auto container = load_nonempty_container(o.container);
  const auto data = labelled_set(container);
  auto base = load_run_config(o.config_file, o.preset, container.d, container.classes.size());
  base.model.seed = o.seed;
  const auto split = dcnn::stratified_split(data.labels, container.classes.size(), o.seed);
  const auto result =
      dcnn::random_search(space, o.trials, o.probe_epochs, o.seed, base.model, base.train, data, split, on_trial);
  HypersearchOutcome out{{result.best.model, result.best.train}, result.best_trial, result.trials};
  check_model_fits(out.best.model, container);
  if (!o.out_file.empty()) write_text_file(o.out_file.string(), to_json(out.best).dump(2) + "\n");
  return out;
}

}  // namespace cryptoknight::harness
