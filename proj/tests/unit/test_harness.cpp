#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>

#include "cryptoknight/common/bytes.hpp"
#include "cryptoknight/dcnn/checkpoint.hpp"
#include "cryptoknight/harness/commands.hpp"
#include "cryptoknight/harness/container.hpp"
#include "cryptoknight/synth/dataset.hpp"

using namespace cryptoknight;
using namespace cryptoknight::harness;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(fs::temp_directory_path() / ("cryptoknight_test_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  fs::path path_;
};

DatasetContainer sample_container() {
  DatasetContainer c;
  c.d = 12;
  c.master_seed = 42;
  c.classes = {"aes", "rc4"};
  c.mnemonics = features::mnemonic_names(features::default_mnemonics());
  Rng rng(1);
  for (std::size_t i = 0; i < 5; ++i) {
    ContainerRecord r;
    r.label = c.classes[i % 2];
    r.index = i;
    r.matrix.d = 12;
    r.matrix.s = 1 + rng.below(9);
    r.matrix.truncated = i == 3;
    r.matrix.label = r.label;
    r.matrix.values.resize(r.matrix.d * r.matrix.s);
    for (auto& v : r.matrix.values) v = rng.uniform(0, 40);
    c.records.push_back(std::move(r));
  }
  return c;
}

std::string file_text(const fs::path& p) { return read_text_file(p.string()); }

/// Builds a small corpus and its feature container once for the composition tests.
struct Pipeline {
  TempDir dir{"pipeline"};
  fs::path dataset = dir / "ds";
  fs::path features = dir / "f.ckds";
  fs::path run = dir / "run";

  Pipeline() {
    cmd_synth({{"aes", "rc4", "blowfish", "md5", "rsa", "rsa+aes"}, 36, 5, dataset});
    ExtractOptions eo;
    eo.dataset_dir = dataset;
    eo.out_file = features;
    cmd_extract(eo);
    TrainOptions to;
    to.container = features;
    to.epochs = 4;
    to.seed = 3;
    to.out_dir = run;
    cmd_train(to);
  }
};

Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

}  // namespace

TEST(Container, RoundTrip) {
  const auto c = sample_container();
  const auto bytes = encode_container(c);
  auto back = decode_container(bytes);
  EXPECT_EQ(back, c);
  EXPECT_EQ(encode_container(back), bytes);
}

TEST(Container, RejectsCorruptionVersionAndShape) {
  const auto c = sample_container();
  auto bytes = encode_container(c);
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  EXPECT_THROW(decode_container(flipped), DataError);

  ByteWriter w;
  w.raw(std::span(bytes).first(bytes.size() - 4));
  w.bytes()[4] = 2;  // version field
  w.seal();
  EXPECT_THROW(decode_container(w.bytes()), DataError);

  EXPECT_THROW(decode_container(std::span(bytes).first(10)), DataError);

  auto bad = c;
  bad.records[1].matrix.d = 11;
  bad.records[1].matrix.values.resize(11 * bad.records[1].matrix.s);
  EXPECT_THROW(encode_container(bad), DataError);
  bad = c;
  bad.records[0].label = "md5";
  EXPECT_THROW(encode_container(bad), DataError);
}

TEST(Checkpoint, RoundTripAndRejection) {
  const dcnn::Model model(dcnn::desk_preset());
  const auto ck = dcnn::make_checkpoint(model, {"aes", "rc4", "blowfish", "md5", "rsa", "rsa+aes"}, {});
  const auto bytes = dcnn::encode_checkpoint(ck);
  const auto back = dcnn::decode_checkpoint(bytes);
  EXPECT_EQ(back.config, ck.config);
  EXPECT_EQ(back.classes, ck.classes);
  EXPECT_EQ(back.params, ck.params);
  EXPECT_EQ(back.features.mnemonics, ck.features.mnemonics);
  EXPECT_EQ(dcnn::encode_checkpoint(back), bytes);

  auto flipped = bytes;
  flipped[bytes.size() - 20] ^= 1;
  EXPECT_THROW(dcnn::decode_checkpoint(flipped), DataError);

  ByteWriter w;
  w.raw(std::span(bytes).first(bytes.size() - 4));
  w.bytes()[4] = 9;
  w.seal();
  EXPECT_THROW(dcnn::decode_checkpoint(w.bytes()), DataError);

  auto shape = ck;
  shape.params.pop_back();
  EXPECT_THROW(dcnn::encode_checkpoint(shape), DataError);
  // A header whose model shape disagrees with the parameter block.
  ByteWriter forged;
  ByteReader r{std::span<const std::uint8_t>(bytes).first(bytes.size() - 4)};
  forged.u32(r.u32());
  forged.u32(r.u32());
  auto header = nlohmann::json::parse(r.str());
  header["model"]["k_top"] = 9;
  forged.str(header.dump());
  forged.raw(std::span(bytes).subspan(r.position(), bytes.size() - 4 - r.position()));
  forged.seal();
  EXPECT_THROW(dcnn::decode_checkpoint(forged.bytes()), DataError);
}

TEST(Dataset, BalancedPlans) {
  const std::vector<synth::Label> six{synth::Label::aes, synth::Label::rc4, synth::Label::blowfish,
                                      synth::Label::md5, synth::Label::rsa, synth::Label::rsa_aes};
  const auto m = synth::plan_dataset(six, 750, 7);
  EXPECT_EQ(m.samples.size(), 750u);
  for (const auto& [tag, n] : m.class_counts) EXPECT_EQ(n, 125u) << tag;
  const auto small = synth::plan_dataset(six, 6, 7);
  for (const auto& [tag, n] : small.class_counts) EXPECT_EQ(n, 1u);
  const auto odd = synth::plan_dataset(six, 20, 7);
  for (const auto& [tag, n] : odd.class_counts) EXPECT_TRUE(n == 3 || n == 4);
  EXPECT_THROW(synth::plan_dataset(six, 5, 7), SynthError);
}

TEST(Synth, SameSeedGivesIdenticalTrees) {
  TempDir dir("synth_det");
  cmd_synth({{"aes", "md5", "r/a"}, 9, 11, dir / "a"});
  cmd_synth({{"aes", "md5", "r/a"}, 9, 11, dir / "b"});
  for (const auto& entry : fs::recursive_directory_iterator(dir / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir / "a");
    EXPECT_EQ(file_text(entry.path()), file_text(dir / "b" / rel)) << rel;
  }
  EXPECT_THROW(cmd_synth({{"aes"}, 0, 1, dir / "c"}), ConfigError);
  EXPECT_THROW(cmd_synth({{"aes", "sha1"}, 4, 1, dir / "c"}), ConfigError);
}

TEST(Extract, SkipsCorruptProgramsBelowThresholdAndAbortsAbove) {
  TempDir dir("extract_skip");
  const auto ds = dir / "ds";
  cmd_synth({{"rc4", "md5"}, 40, 2, ds});
  write_text_file((ds / synth::sample_path(3)).string(), "this is not assembly\n");
  ExtractOptions eo;
  eo.dataset_dir = ds;
  const auto r = cmd_extract(eo);
  EXPECT_EQ(r.container.records.size(), 39u);
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0].index, 3u);
  write_text_file((ds / synth::sample_path(5)).string(), "halt\nbogus\n");
  write_text_file((ds / synth::sample_path(7)).string(), "");
  EXPECT_THROW(cmd_extract(eo), DataError);
}

TEST(Extract, NoEntropyRecordsRawCounts) {
  TempDir dir("extract_noent");
  cmd_synth({{"aes", "rc4"}, 4, 9, dir / "ds"});
  ExtractOptions eo;
  eo.dataset_dir = dir / "ds";
  eo.no_entropy = true;
  const auto off = cmd_extract(eo).container;
  eo.no_entropy = false;
  const auto on = cmd_extract(eo).container;
  EXPECT_FALSE(off.use_entropy);
  for (std::size_t i = 0; i < off.records.size(); ++i) {
    const auto program = isa::parse_program(file_text(dir / "ds" / synth::sample_path(off.records[i].index)));
    const auto trace = tracer::execute(program, kDefaultStepLimit);
    const auto& m = off.records[i].matrix;
    ASSERT_EQ(m.s, trace.blocks.size());
    for (std::size_t j = 0; j < m.s; ++j) {
      for (std::size_t k = 0; k < m.d; ++k) EXPECT_EQ(m.at(k, j), static_cast<double>(trace.blocks[j].mnemonic_counts[k]));
    }
    for (std::size_t v = 0; v < m.values.size(); ++v) EXPECT_GE(on.records[i].matrix.values[v], m.values[v]);
  }
}

TEST(Pipeline, TrainWritesArtifactsAndIsDeterministic) {
  auto& p = pipeline();
  for (const char* leaf : {"model.ckpt", "curves.csv", "report.json"}) EXPECT_TRUE(fs::exists(p.run / leaf)) << leaf;
  const auto csv = file_text(p.run / "curves.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,loss,test_accuracy");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);

  TempDir again("train_again");
  TrainOptions to;
  to.container = p.features;
  to.epochs = 4;
  to.seed = 3;
  to.out_dir = again.path();
  cmd_train(to);
  for (const char* leaf : {"model.ckpt", "curves.csv", "report.json"}) {
    EXPECT_EQ(file_text(p.run / leaf), file_text(again / leaf)) << leaf;
  }
}

TEST(Pipeline, EvalSummaryIsConsistent) {
  auto& p = pipeline();
  const auto s = cmd_eval(p.run / "model.ckpt", p.features);
  std::size_t diag = 0, total = 0;
  for (std::size_t k = 0; k < s.confusion.size(); ++k) {
    diag += s.confusion[k][k];
    total += std::accumulate(s.confusion[k].begin(), s.confusion[k].end(), std::size_t{0});
  }
  EXPECT_EQ(total, 36u);
  EXPECT_DOUBLE_EQ(s.accuracy, static_cast<double>(diag) / static_cast<double>(total));
  EXPECT_EQ(s.predictions.size(), 36u);
  const auto text = format_eval(s);
  EXPECT_NE(text.find("rows = actual, columns = predicted"), std::string::npos);
  const auto csv = predictions_csv(s);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 37);
}

TEST(Pipeline, ClassifyAgreesWithEvalRows) {
  auto& p = pipeline();
  const auto s = cmd_eval(p.run / "model.ckpt", p.features);
  const auto ck = dcnn::load_checkpoint((p.run / "model.ckpt").string());
  for (std::size_t i = 0; i < s.predictions.size(); i += 5) {
    const auto& row = s.predictions[i];
    ClassifyOptions co;
    co.checkpoint = p.run / "model.ckpt";
    co.program = p.dataset / synth::sample_path(row.index);
    const auto ranked = cmd_classify(co);
    EXPECT_EQ(ranked.front().label, row.predicted);
    double sum = 0.0;
    for (const auto& r : ranked) sum += r.probability;
    EXPECT_NEAR(sum, 1.0, 1e-9);
    for (std::size_t k = 1; k < ranked.size(); ++k) EXPECT_GE(ranked[k - 1].probability, ranked[k].probability);
    const auto program = isa::parse_program(file_text(co.program));
    EXPECT_EQ(classify_program(ck, program, kDefaultStepLimit), row.probabilities);
  }
}

TEST(Pipeline, ClassifyHandlesProgramsWithoutWrites) {
  auto& p = pipeline();
  TempDir dir("classify_nowrite");
  write_text_file((dir / "p.asm").string(), "xor r0, r0\nadd r0, 0x5\nhalt\n");
  ClassifyOptions co;
  co.checkpoint = p.run / "model.ckpt";
  co.program = dir / "p.asm";
  co.trace_dump = dir / "dump.jsonl";
  EXPECT_EQ(cmd_classify(co).size(), 6u);
  EXPECT_EQ(file_text(dir / "dump.jsonl").size() > 0, true);
}

TEST(Pipeline, EvalRejectsEmptyAndIncompatibleContainers) {
  auto& p = pipeline();
  TempDir dir("eval_reject");
  auto c = load_container(p.features.string());
  c.records.clear();
  save_container((dir / "empty.ckds").string(), c);
  EXPECT_THROW(cmd_eval(p.run / "model.ckpt", dir / "empty.ckds"), ConfigError);
  auto other = load_container(p.features.string());
  other.use_entropy = false;
  save_container((dir / "noent.ckds").string(), other);
  EXPECT_THROW(cmd_eval(p.run / "model.ckpt", dir / "noent.ckds"), DataError);
  EXPECT_THROW(cmd_eval(p.features, p.features), DataError);
}

TEST(Pipeline, HypersearchWritesAReusableConfig) {
  auto& p = pipeline();
  TempDir dir("hypersearch");
  write_text_file((dir / "space.json").string(), R"({"k_top": [4, 8], "learning_rate": [0.01, 0.02]})");
  HypersearchOptions ho;
  ho.container = p.features;
  ho.space_file = dir / "space.json";
  ho.trials = 2;
  ho.probe_epochs = 1;
  ho.seed = 4;
  ho.out_file = dir / "best.json";
  const auto a = cmd_hypersearch(ho);
  const auto first = file_text(ho.out_file);
  cmd_hypersearch(ho);
  EXPECT_EQ(file_text(ho.out_file), first);
  for (const auto& t : a.trials) EXPECT_GE(a.trials[a.best_trial].test_accuracy, t.test_accuracy);

  TrainOptions to;
  to.container = p.features;
  to.config_file = ho.out_file;
  to.epochs = 1;
  const auto t = cmd_train(to);
  EXPECT_EQ(t.config.model.k_top, a.best.model.k_top);
  EXPECT_EQ(t.config.train.learning_rate, a.best.train.learning_rate);

  write_text_file((dir / "bad.json").string(), R"({"d": [12]})");
  ho.space_file = dir / "bad.json";
  EXPECT_THROW(cmd_hypersearch(ho), ConfigError);
}

TEST(Pipeline, TrainRejectsMismatchedConfig) {
  auto& p = pipeline();
  TempDir dir("train_reject");
  write_text_file((dir / "cfg.json").string(), R"({"model": {"d": 8}})");
  TrainOptions to;
  to.container = p.features;
  to.config_file = dir / "cfg.json";
  EXPECT_THROW(cmd_train(to), ConfigError);
  write_text_file((dir / "cfg.json").string(), R"({"preset": "huge"})");
  EXPECT_THROW(cmd_train(to), ConfigError);
}
