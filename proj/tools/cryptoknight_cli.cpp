#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cryptoknight/cryptoknight.hpp"

namespace ck = cryptoknight;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Globals {
  std::uint64_t seed = 1;
  std::string out;
  std::string config;

  fs::path out_or(const char* fallback) const { return out.empty() ? fs::path(fallback) : fs::path(out); }
  std::optional<fs::path> config_file() const {
    return config.empty() ? std::nullopt : std::optional<fs::path>(config);
  }
};

void print_confusion(const std::vector<std::string>& classes, const ck::dcnn::Confusion& confusion) {
  ck::harness::EvalSummary s;
  s.classes = classes;
  s.confusion = confusion;
  s.confusion.resize(classes.size(), std::vector<std::size_t>(classes.size(), 0));
  ck::harness::summarize(s);
  std::cout << ck::harness::format_eval(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cryptographic primitive classifier: synthesize, trace, featurize, train, evaluate."};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Master seed for every random choice")->capture_default_str();
  app.add_option("--out", g.out, "Output path (directory or file, depending on the command)");
  app.add_option("--config", g.config, "Run configuration JSON for train and hypersearch");

  ck::harness::SynthOptions synth_opts;
  std::string classes_arg = "aes,rc4,blowfish,md5,rsa,rsa+aes";
  auto* synth = app.add_subcommand("synth", "Generate a labelled corpus of programs");
  synth->add_option("--classes", classes_arg, "Comma-separated class tags")->capture_default_str();
  synth->add_option("--n", synth_opts.n, "Number of programs")->required();
  synth->add_option("--inject-mean", synth_opts.inject_mean, "Mean junk snippets per program")->capture_default_str();

  ck::harness::ExtractOptions extract_opts;
  std::string dataset_dir;
  auto* extract = app.add_subcommand("extract", "Trace every program of a corpus into a feature container");
  extract->add_option("--dataset", dataset_dir, "Corpus directory written by synth")->required();
  extract->add_option("--step-limit", extract_opts.step_limit, "Instruction budget per program")->capture_default_str();
  extract->add_option("--max-s", extract_opts.max_s, "Maximum sentence length")->capture_default_str();
  extract->add_flag("--no-entropy", extract_opts.no_entropy, "Use raw mnemonic counts");

  ck::harness::TrainOptions train_opts;
  std::string train_data;
  std::optional<std::size_t> train_epochs;
  auto* train = app.add_subcommand("train", "Train a classifier on a feature container");
  train->add_option("--data", train_data, "Feature container")->required();
  train->add_option("--preset", train_opts.preset, "desk or paper")->capture_default_str();
  train->add_option("--epochs", train_epochs, "Override the number of epochs");

  std::string eval_ckpt, eval_data;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on every record of a container");
  eval->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required();
  eval->add_option("--data", eval_data, "Feature container")->required();

  ck::harness::ClassifyOptions classify_opts;
  std::string classify_ckpt, classify_program, trace_dump;
  auto* classify = app.add_subcommand("classify", "Classify a single program");
  classify->add_option("--checkpoint", classify_ckpt, "Model checkpoint")->required();
  classify->add_option("--program", classify_program, "Assembly file")->required();
  classify->add_option("--step-limit", classify_opts.step_limit, "Instruction budget")->capture_default_str();
  classify->add_option("--trace-dump", trace_dump, "Write the per-instruction trace as JSON lines");

  ck::harness::HypersearchOptions search_opts;
  std::string search_data, search_space;
  auto* search = app.add_subcommand("hypersearch", "Random search over a hyperparameter grid");
  search->add_option("--data", search_data, "Feature container")->required();
  search->add_option("--space", search_space, "JSON object of name -> candidate values")->required();
  search->add_option("--trials", search_opts.trials, "Number of sampled configurations")->required();
  search->add_option("--probe-epochs", search_opts.probe_epochs, "Epochs per trial")->required();
  search->add_option("--preset", search_opts.preset, "Base preset")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (const char* wd = std::getenv("CRYPTOKNIGHT_WORKDIR"); wd && *wd) {
      std::error_code ec;
      fs::current_path(wd, ec);
      if (ec) throw ck::ConfigError(std::string("cannot enter CRYPTOKNIGHT_WORKDIR ") + wd + ": " + ec.message());
    }

    if (*synth) {
      std::stringstream ss(classes_arg);
      for (std::string tag; std::getline(ss, tag, ',');) synth_opts.classes.push_back(tag);
      synth_opts.seed = g.seed;
      synth_opts.out_dir = g.out_or("dataset");
      const auto m = ck::harness::cmd_synth(synth_opts);
      std::cout << "wrote " << m.samples.size() << " programs to " << synth_opts.out_dir.string() << '\n';
      for (const auto& [tag, count] : m.class_counts) std::cout << "  " << tag << ' ' << count << '\n';
    } else if (*extract) {
      extract_opts.dataset_dir = dataset_dir;
      extract_opts.out_file = g.out_or("features.ckds");
      const auto r = ck::harness::cmd_extract(extract_opts);
      for (const auto& s : r.skipped) std::cerr << "skipped sample " << s.index << ": " << s.reason << '\n';
      std::cout << "wrote " << r.container.records.size() << " records (d=" << r.container.d << ", "
                << (r.container.use_entropy ? "entropy" : "no entropy") << ") to " << extract_opts.out_file.string()
                << "; skipped " << r.skipped.size() << '\n';
    } else if (*train) {
      train_opts.container = train_data;
      train_opts.config_file = g.config_file();
      train_opts.epochs = train_epochs;
      train_opts.seed = g.seed;
      train_opts.out_dir = g.out_or("run");
      const auto t = ck::harness::cmd_train(train_opts, [](const ck::dcnn::EpochRecord& e) {
        std::printf("epoch %zu loss %.6f test_accuracy %.4f\n", e.epoch, e.loss, e.test_accuracy);
        std::fflush(stdout);
      });
      std::printf("test accuracy %.4f, train accuracy %.4f (%.1f s)\n", t.report.test_accuracy,
                  t.report.train_accuracy, t.report.seconds);
      print_confusion(t.checkpoint.classes, t.report.confusion);
      std::cout << "wrote model.ckpt, curves.csv and report.json to " << train_opts.out_dir.string() << '\n';
    } else if (*eval) {
      const auto s = ck::harness::cmd_eval(eval_ckpt, eval_data);
      std::cout << ck::harness::format_eval(s);
      if (!g.out.empty()) ck::write_text_file(g.out, ck::harness::predictions_csv(s));
    } else if (*classify) {
      classify_opts.checkpoint = classify_ckpt;
      classify_opts.program = classify_program;
      if (!trace_dump.empty()) classify_opts.trace_dump = trace_dump;
      for (const auto& r : ck::harness::cmd_classify(classify_opts)) {
        std::printf("%-10s %.6f\n", r.label.c_str(), r.probability);
      }
    } else if (*search) {
      search_opts.container = search_data;
      search_opts.space_file = search_space;
      search_opts.seed = g.seed;
      search_opts.config_file = g.config_file();
      search_opts.out_file = g.out_or("best.json");
      const auto r = ck::harness::cmd_hypersearch(search_opts, [](const ck::dcnn::TrialResult& t) {
        if (t.error.empty()) {
          std::printf("trial %zu accuracy %.4f %s\n", t.trial, t.test_accuracy, t.assignment.dump().c_str());
        } else {
          std::printf("trial %zu failed: %s\n", t.trial, t.error.c_str());
        }
        std::fflush(stdout);
      });
      std::cout << "best trial " << r.best_trial << "; wrote " << search_opts.out_file.string() << '\n';
    }
  } catch (const ck::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ck::SynthError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ck::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const ck::Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
