// Acceptance run: criteria C1-C9, one PASS/FAIL line each.
//
//   acceptance [--workdir DIR] [C1 C2 ...]
//
// With no criteria named, all nine run. Artifacts of the end-to-end runs go
// to DIR (default ./acceptance_artifacts): pass_a holds the C7/C8 runs,
// pass_b the C9 rerun that must match pass_a byte for byte.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cryptoknight/cryptoknight.hpp"
#include "gradcheck.hpp"
#include "oracles/crypto_ref.hpp"

namespace ck = cryptoknight;
namespace fs = std::filesystem;
using ck::Bytes;

namespace {

constexpr std::uint64_t kStepLimit = 50'000'000;
constexpr std::size_t kSamples = 750;
constexpr std::size_t kEpochs = 200;
constexpr double kAccuracyTarget = 0.85;
constexpr double kC7BudgetSeconds = 20 * 60;
const std::uint64_t kAblationSeeds[] = {1, 2, 3};
const std::vector<std::string> kClasses = {"aes", "rc4", "blowfish", "md5", "rsa", "rsa+aes"};

struct Outcome {
  bool pass = false;
  std::string detail;
  std::string fingerprint;  // compared across reruns by C9
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Bytes hex(std::string_view s) { return *ck::from_hex(s); }

Bytes le8(std::uint64_t v) {
  Bytes b(8);
  ck::store_le(b, v);
  return b;
}

// ------------------------------------------------------------------ C1

struct Vector {
  std::string name;
  ck::synth::Label label;
  ck::synth::Payload payload;
  Bytes expected;
};

std::vector<Vector> published_vectors() {
  using ck::synth::Label;
  std::vector<Vector> v;
  v.push_back({"AES-128 FIPS-197 C.1", Label::aes,
               {hex("000102030405060708090a0b0c0d0e0f"), Bytes(16, 0), hex("00112233445566778899aabbccddeeff")},
               hex("69c4e0d86a7b0430d8cdb78070b4c55a")});
  v.push_back({"Blowfish zero key", Label::blowfish, {Bytes(8, 0), Bytes(8, 0), Bytes(8, 0)}, hex("4ef997456198dd78")});
  const std::pair<const char*, const char*> md5[] = {
      {"", "d41d8cd98f00b204e9800998ecf8427e"},
      {"a", "0cc175b9c0f1b6a831c399e269772661"},
      {"abc", "900150983cd24fb0d6963f7d28e17f72"},
      {"message digest", "f96b697d7cb7938d525a2f31aaf161d0"},
      {"abcdefghijklmnopqrstuvwxyz", "c3fcd3d76192e4007dfb496cca67e13b"},
      {"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789", "d174ab98d277d9f5a5611c2c9f419d9f"},
      {"12345678901234567890123456789012345678901234567890123456789012345678901234567890",
       "57edf4a22be3c955ac49da2e2107b67a"}};
  for (auto [msg, digest] : md5) {
    v.push_back({std::string("MD5 \"") + msg + "\"", Label::md5, {{}, {}, Bytes(msg, msg + std::strlen(msg))},
                 hex(digest)});
  }
  v.push_back({"RC4 40-bit key", Label::rc4, {hex("0102030405"), {}, Bytes(16, 0)},
               hex("b2396305f03dc027ccc3524a0a1118a8")});
  v.push_back({"RC4 64-bit key", Label::rc4, {hex("0102030405060708"), {}, Bytes(16, 0)},
               hex("97ab8a1bf0afb96132f2f67258da15a8")});
  v.push_back({"RC4 128-bit key", Label::rc4, {hex("0102030405060708090a0b0c0d0e0f10"), {}, Bytes(16, 0)},
               hex("9ac7cc9a609d1ef7b2932899cde41b97")});
  Bytes rsa_key = le8(497);
  const auto e = le8(13);
  rsa_key.insert(rsa_key.end(), e.begin(), e.end());
  v.push_back({"modexp 4^13 mod 497", Label::rsa, {rsa_key, {}, le8(4)}, le8(445)});
  return v;
}

/// Every vector through the plain template and through three randomly
/// obfuscated, injected and recompiled variants.
Outcome c1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t ok = 0, total = 0;
  std::string failures, fp;
  for (const auto& vec : published_vectors()) {
    for (std::uint64_t variant = 0; variant < 4; ++variant) {
      ck::synth::SynthSpec spec;
      if (variant == 0) {
        spec.label = vec.label;
        spec.seed = 1;
      } else {
        spec = ck::synth::random_spec(vec.label, ck::derive_seed(0xc1, variant * 131 + total));
      }
      spec.payload = vec.payload;
      ++total;
      try {
        const auto trace = ck::tracer::execute(ck::synth::synthesize(spec), kStepLimit);
        const auto& out = ck::tracer::object_bytes(trace, "out");
        fp += ck::to_hex(out) + ";";
        if (trace.halted && out == vec.expected) {
          ++ok;
        } else if (failures.empty()) {
          failures = " first mismatch: " + vec.name;
        }
      } catch (const ck::Error& e) {
        if (failures.empty()) failures = " first error: " + vec.name + ": " + e.what();
      }
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = ok == total && secs < 5.0;
  return {pass, fmt("%zu/%zu vector runs exact (%zu vectors x 4 variants) in %.2f s, limit 5 s%s", ok, total,
                    total / 4, secs, failures.c_str()),
          fp};
}

// ------------------------------------------------------------------ C2

Outcome c2() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = gradcheck::all(1);
  const double secs = seconds_since(t0);
  bool pass = secs < 30.0;
  std::string detail, fp;
  for (const auto& r : results) {
    pass = pass && r.max_rel < 1e-4;
    detail += fmt("%s %.1e, ", r.name.c_str(), r.max_rel);
    fp += fmt("%a;", r.max_rel);
  }
  return {pass, "max relative error: " + detail + fmt("limit 1e-4, %.2f s", secs), fp};
}

// ------------------------------------------------------------------ C3

Outcome c3() {
  const auto c = ck::dcnn::paper_preset(12);
  std::vector<std::size_t> widths(14, 10);
  widths.front() = 20;
  widths.back() = 12;
  const bool as_specified = c.layers() == 14 && c.filter_widths == widths && c.k_top == 56 && c.dropout == 0.6 &&
                            c.classes == 8 && c.d == 12 && c.feature_maps.front() == 2 &&
                            c.feature_maps.back() == 2 && c.folds_at(13) == 2 && c.fold_layers.size() == 2;
  try {
    ck::dcnn::validate_config(c);
    std::string fp;
    for (std::size_t s : {1u, 7u, 56u, 128u, 1536u, 4096u}) {
      const auto shapes = ck::dcnn::shape_algebra(c, s);
      for (const auto& sh : shapes) fp += fmt("%zu,%zu,%zu;", sh.conv_cols, sh.rows_out, sh.k);
    }
    const ck::dcnn::Model model(c);
    return {as_specified, fmt("14 convolutions, widths 20/10x12/12, k_top 56, dropout 0.6, 8 outputs, rows 12->3 "
                              "after the composed folds; %zu parameters instantiated",
                              model.layout().total),
            fp};
  } catch (const ck::Error& e) {
    return {false, std::string("validation failed: ") + e.what(), ""};
  }
}

// ------------------------------------------------------------------ C4

Outcome c4() {
  ck::Rng rng(0xc4);
  std::size_t violations = 0;
  std::uint64_t digest = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t L = 1 + rng.below(30);
    const std::size_t l = 1 + rng.below(L);
    const std::size_t s = 1 + rng.below(10000);
    const std::size_t k_top = 1 + rng.below(200);
    const auto k = ck::dcnn::dynamic_k(l, L, s, k_top);
    digest = ck::splitmix64(digest ^ k);
    if (k < k_top) ++violations;
    if (l < L && ck::dcnn::dynamic_k(l + 1, L, s, k_top) > k) ++violations;
    if (ck::dcnn::dynamic_k(L, L, s, k_top) != k_top) ++violations;
  }
  return {violations == 0, fmt("10^4 random (L, l, s, k_top) tuples, %zu violations of k >= k_top, "
                               "non-increasing in l, k(L) = k_top",
                               violations),
          fmt("%016llx", static_cast<unsigned long long>(digest))};
}

// ------------------------------------------------------------------ C5

Outcome c5() {
  Bytes uniform(256);
  for (int i = 0; i < 256; ++i) uniform[i] = static_cast<std::uint8_t>(i);
  const double h_uniform = ck::tracer::shannon_entropy(uniform);
  const double h_const = ck::tracer::shannon_entropy(Bytes(97, 0x5a));
  ck::Rng rng(0xc5);
  std::size_t out_of_range = 0;
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    Bytes buf(1 + rng.below(512));
    const auto alphabet = 1 + rng.below(256);
    for (auto& b : buf) b = static_cast<std::uint8_t>(rng.below(alphabet));
    const double h = ck::tracer::shannon_entropy(buf);
    out_of_range += !(h >= 0.0 && h <= 8.0);
    sum += h;
  }
  const bool pass = std::abs(h_uniform - 8.0) <= 1e-12 && h_const == 0.0 && out_of_range == 0;
  return {pass, fmt("H(uniform 256) = %.15f, H(constant) = %g, %zu of 10^4 random buffers outside [0, 8]", h_uniform,
                    h_const, out_of_range),
          fmt("%a;%a;%a", h_uniform, h_const, sum)};
}

// ------------------------------------------------------------------ C6

Outcome c6() {
  std::size_t mismatches = 0, not_halted = 0;
  std::uint64_t steps = 0, blocks = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const auto label = static_cast<ck::synth::Label>(i % ck::synth::kLabelTags.size());
    const auto p = ck::synth::synthesize(ck::synth::random_spec(label, ck::derive_seed(0xc6, i)));
    const auto t = ck::tracer::execute(p, kStepLimit);
    std::uint64_t covered = 0;
    for (const auto& b : t.blocks) covered += b.length * b.loop_iters;
    mismatches += covered != t.steps;
    not_halted += !t.halted;
    steps += t.steps;
    blocks += t.blocks.size();
  }
  return {mismatches == 0 && not_halted == 0,
          fmt("1000 synthesized programs, %llu steps in %llu blocks, %zu partition mismatches",
              static_cast<unsigned long long>(steps), static_cast<unsigned long long>(blocks), mismatches),
          fmt("%llu;%llu", static_cast<unsigned long long>(steps), static_cast<unsigned long long>(blocks))};
}

// ------------------------------------------------------------------ C7 / C8 pipeline

struct RunResult {
  double test_accuracy = 0.0;
  double seconds = 0.0;
  std::size_t skipped = 0;
};

fs::path seed_dir(const fs::path& root, std::uint64_t seed) { return root / ("seed" + std::to_string(seed)); }

/// synth -> extract -> train through the harness commands.
RunResult run_pipeline(const fs::path& root, std::uint64_t seed, bool entropy) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto dir = seed_dir(root, seed);
  const auto dataset = dir / "dataset";
  if (!fs::exists(dataset / "manifest.jsonl")) {
    ck::harness::cmd_synth({kClasses, kSamples, seed, dataset});
  }
  const std::string tag = entropy ? "entropy" : "no_entropy";
  ck::harness::ExtractOptions eo;
  eo.dataset_dir = dataset;
  eo.no_entropy = !entropy;
  eo.step_limit = kStepLimit;
  eo.out_file = dir / ("features_" + tag + ".ckds");
  const auto extracted = ck::harness::cmd_extract(eo);

  ck::harness::TrainOptions to;
  to.container = eo.out_file;
  to.preset = "desk";
  to.epochs = kEpochs;
  to.seed = seed;
  to.out_dir = dir / ("run_" + tag);
  const auto trained = ck::harness::cmd_train(to);
  return {trained.report.test_accuracy, seconds_since(t0), extracted.skipped.size()};
}

struct Ablation {
  std::map<std::pair<std::uint64_t, bool>, RunResult> runs;
  std::string report;
};

std::string ablation_report(const Ablation& a) {
  std::string out = "entropy ablation: desk preset, 750 samples, 6 classes, 75/25 stratified split, 200 epochs\n";
  out += "seed  entropy  no_entropy  gap\n";
  double sum_on = 0.0, sum_off = 0.0;
  for (auto seed : kAblationSeeds) {
    const double on = a.runs.at({seed, true}).test_accuracy;
    const double off = a.runs.at({seed, false}).test_accuracy;
    sum_on += on;
    sum_off += off;
    out += fmt("%4llu  %7.4f  %10.4f  %+.4f\n", static_cast<unsigned long long>(seed), on, off, on - off);
  }
  const double n = static_cast<double>(std::size(kAblationSeeds));
  out += fmt("mean  %7.4f  %10.4f  %+.4f\n", sum_on / n, sum_off / n, (sum_on - sum_off) / n);
  out += "reference (x86 substrate): 0.9130 with entropy, 0.8330 without\n";
  return out;
}

Outcome c7(const fs::path& root, Ablation& ab) {
  const auto r = run_pipeline(root, 1, true);
  ab.runs[{1, true}] = r;
  const bool pass = r.test_accuracy >= kAccuracyTarget && r.seconds <= kC7BudgetSeconds;
  return {pass, fmt("test accuracy %.4f (target >= %.2f; reference 0.913), synth+extract+train %.0f s "
                    "(budget %.0f s), %zu samples skipped",
                    r.test_accuracy, kAccuracyTarget, r.seconds, kC7BudgetSeconds, r.skipped),
          fmt("%a", r.test_accuracy)};
}

Outcome c8(const fs::path& root, Ablation& ab) {
  for (auto seed : kAblationSeeds) {
    for (bool entropy : {true, false}) {
      if (!ab.runs.count({seed, entropy})) ab.runs[{seed, entropy}] = run_pipeline(root, seed, entropy);
    }
  }
  ab.report = ablation_report(ab);
  ck::write_text_file((root / "entropy_ablation.txt").string(), ab.report);
  std::size_t entropy_ahead = 0;
  for (auto seed : kAblationSeeds) {
    entropy_ahead += ab.runs.at({seed, true}).test_accuracy > ab.runs.at({seed, false}).test_accuracy;
  }
  std::printf("%s", ab.report.c_str());
  return {true, fmt("paired report over %zu seeds written to %s; entropy ahead on %zu of %zu seeds (recorded, "
                    "not asserted)",
                    std::size(kAblationSeeds), (root / "entropy_ablation.txt").string().c_str(), entropy_ahead,
                    std::size(kAblationSeeds)),
          ab.report};
}

// ------------------------------------------------------------------ C9

std::map<std::string, Bytes> tree_contents(const fs::path& root) {
  std::map<std::string, Bytes> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) files[fs::relative(entry.path(), root).generic_string()] = ck::read_file(entry.path().string());
  }
  return files;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path workdir = "acceptance_artifacts";
  std::set<std::string> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--workdir" && i + 1 < argc) workdir = argv[++i];
    else selected.insert(arg);
  }
  auto wanted = [&](const std::string& c) { return selected.empty() || selected.count(c); };

  const std::vector<std::pair<std::string, std::string>> titles = {
      {"C1", "crypto-template fidelity"}, {"C2", "gradient correctness"}, {"C3", "paper preset shape algebra"},
      {"C4", "dynamic k schedule"},       {"C5", "entropy"},              {"C6", "trace partition"},
      {"C7", "end-to-end accuracy"},      {"C8", "entropy ablation"},     {"C9", "determinism"}};
  std::map<std::string, Outcome> results;
  const fs::path pass_a = workdir / "pass_a", pass_b = workdir / "pass_b";
  const bool needs_pipeline = wanted("C7") || wanted("C8") || wanted("C9");
  if (needs_pipeline) {
    fs::remove_all(workdir);
    fs::create_directories(pass_a);
  }

  auto report = [&](const std::string& id, Outcome o) {
    const auto& title = std::find_if(titles.begin(), titles.end(), [&](auto& t) { return t.first == id; })->second;
    std::printf("%s %s  %s: %s\n", id.c_str(), o.pass ? "PASS" : "FAIL", title.c_str(), o.detail.c_str());
    std::fflush(stdout);
    results[id] = std::move(o);
  };
  auto guarded = [&](const std::string& id, const std::function<Outcome()>& f) {
    if (!wanted(id)) return;
    try {
      report(id, f());
    } catch (const std::exception& e) {
      report(id, {false, std::string("exception: ") + e.what(), ""});
    }
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> fast = {
      {"C1", c1}, {"C2", c2}, {"C3", c3}, {"C4", c4}, {"C5", c5}, {"C6", c6}};
  for (const auto& [id, f] : fast) guarded(id, f);

  Ablation ab_a;
  guarded("C7", [&] { return c7(pass_a, ab_a); });
  guarded("C8", [&] { return c8(pass_a, ab_a); });

  guarded("C9", [&] {
    // Rerun everything with the same seeds and compare.
    std::vector<std::string> differing;
    for (const auto& [id, f] : fast) {
      const auto again = f();
      const auto it = results.find(id);
      const auto first = it != results.end() ? it->second.fingerprint : f().fingerprint;
      if (again.fingerprint != first) differing.push_back(id);
    }
    if (!wanted("C7") && !wanted("C8")) c8(pass_a, ab_a);
    fs::create_directories(pass_b);
    Ablation ab_b;
    c7(pass_b, ab_b);
    c8(pass_b, ab_b);
    if (ab_b.report != ab_a.report) differing.push_back("C8 report");
    const auto a = tree_contents(pass_a), b = tree_contents(pass_b);
    std::size_t compared = 0;
    for (const auto& [path, bytes] : a) {
      const auto it = b.find(path);
      if (it == b.end() || it->second != bytes) differing.push_back(path);
      ++compared;
    }
    for (const auto& [path, bytes] : b) {
      if (!a.count(path)) differing.push_back(path + " (only in rerun)");
    }
    std::string detail = fmt("C1-C6 results and %zu artifact files (manifests, programs, containers, checkpoints, "
                             "CSVs, reports) compared",
                             compared);
    if (!differing.empty()) detail += "; differing: " + differing.front() + fmt(" and %zu more", differing.size() - 1);
    else detail += ", all byte-identical";
    return Outcome{differing.empty(), detail, ""};
  });

  std::size_t failed = 0;
  for (const auto& [id, o] : results) failed += !o.pass;
  std::printf("%zu of %zu criteria passed\n", results.size() - failed, results.size());
  return failed == 0 ? 0 : 1;
}
