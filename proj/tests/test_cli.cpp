#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mrsgen/linearize.hpp"
#include "mrsgen/penman.hpp"
#include "mrsgen/preprocess.hpp"
#include "testutil.hpp"

namespace fs = std::filesystem;
using namespace mrsgen;

namespace {

std::string binary_path() {
  const char* env = std::getenv("MRSGEN_BIN");
  REQUIRE(env != nullptr);
  return env;
}

struct RunResult {
  int exit_code = -1;
  std::string out;  // stdout
  std::string err;  // stderr
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

RunResult run(const std::string& args, const fs::path& dir) {
  fs::path out_file = dir / "cmd.out";
  fs::path err_file = dir / "cmd.err";
  std::string cmd = binary_path() + " " + args + " > " + out_file.string() +
                    " 2> " + err_file.string();
  int status = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out_file);
  result.err = slurp(err_file);
  return result;
}

size_t line_count(const fs::path& path) {
  std::ifstream in(path);
  size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

// Raw JSON-lines corpus derived from the synthetic inflection examples plus
// the running example pair.
void write_raw_corpus(const fs::path& path, int count, bool with_example,
                      bool with_bad_record = false,
                      const char* provenance = nullptr) {
  std::vector<preprocess::ProcessedExample> base =
      testutil::inflection_corpus();
  std::ofstream out(path);
  if (with_example) {
    nlohmann::json j{{"penman", testutil::kExamplePenman},
                     {"text", testutil::kExampleSentence},
                     {"provenance", "gold"},
                     {"domain", "demo"}};
    out << j.dump() << '\n';
  }
  if (with_bad_record) {
    out << R"js({"penman": "(1 / _x_v_1", "text": "broken"})js" << '\n';
  }
  for (int i = 0; i < count; ++i) {
    const preprocess::ProcessedExample& ex = base[i % base.size()];
    penman::PenmanGraph graph = linearize::delinearize(ex.seq);
    nlohmann::json j{{"penman", penman::serialize_penman(graph)},
                     {"text", ex.reference_text},
                     {"provenance",
                      provenance ? provenance : (i % 3 == 2 ? "silver" : "gold")},
                     {"domain", i % 2 == 0 ? "news" : "wiki"}};
    out << j.dump() << '\n';
  }
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("mrsgen_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("preprocess emits the expected artifacts and is deterministic") {
  fs::path dir = fresh_dir("preprocess");
  write_raw_corpus(dir / "raw.jsonl", 24, true, true);

  std::string prefix = (dir / "train").string();
  RunResult r = run("preprocess --input " + (dir / "raw.jsonl").string() +
                        " --out-prefix " + prefix,
                    dir);
  CHECK(r.exit_code == 1);  // the malformed record is reported, not fatal
  // The malformed record is reported with its line number.
  CHECK(r.err.find(":2:") != std::string::npos);

  // The first linearized line reproduces the anonymized running example.
  std::ifstream linear(prefix + ".linear");
  std::string first_line;
  std::getline(linear, first_line);
  CHECK(first_line == testutil::kExampleLinearized);

  CHECK(line_count(prefix + ".jsonl") == 25);
  CHECK(line_count(prefix + ".refs.txt") == 25);
  CHECK(fs::exists(prefix + ".maps.tsv"));
  CHECK(fs::exists(prefix + ".vocab.symbols"));
  CHECK(fs::exists(prefix + ".vocab.bundles"));
  CHECK(fs::exists(prefix + ".vocab.target"));

  nlohmann::json stats = nlohmann::json::parse(slurp(prefix + ".stats.json"));
  CHECK(stats.at("failures").get<int>() == 1);
  CHECK(stats.at("examples").get<int>() == 25);

  // A rerun produces byte-identical outputs.
  std::string prefix2 = (dir / "again").string();
  RunResult r2 = run("preprocess --input " + (dir / "raw.jsonl").string() +
                         " --out-prefix " + prefix2,
                     dir);
  CHECK(r2.exit_code == 1);
  for (const char* suffix : {".jsonl", ".linear", ".maps.tsv", ".refs.txt",
                             ".stats.json", ".vocab.symbols", ".vocab.bundles",
                             ".vocab.target"}) {
    CHECK(slurp(prefix + suffix) == slurp(prefix2 + suffix));
  }
}

TEST_CASE("preprocess dedups against a test corpus") {
  fs::path dir = fresh_dir("dedup");
  write_raw_corpus(dir / "raw.jsonl", 20, false);
  write_raw_corpus(dir / "test.jsonl", 5, false);  // first 5 overlap

  std::string prefix = (dir / "train").string();
  RunResult r = run("preprocess --input " + (dir / "raw.jsonl").string() +
                        " --test " + (dir / "test.jsonl").string() +
                        " --out-prefix " + prefix,
                    dir);
  CHECK(r.exit_code == 0);
  nlohmann::json stats = nlohmann::json::parse(slurp(prefix + ".stats.json"));
  CHECK(stats.at("dedup_removed").get<int>() == 5);
  CHECK(line_count(prefix + ".jsonl") == 15);
}

TEST_CASE("full pipeline: preprocess, train, generate, evaluate") {
  fs::path dir = fresh_dir("pipeline");
  write_raw_corpus(dir / "raw.jsonl", 32, false);

  std::string prefix = (dir / "train").string();
  REQUIRE(run("preprocess --input " + (dir / "raw.jsonl").string() +
                  " --out-prefix " + prefix + " --min-count 1",
              dir)
              .exit_code == 0);

  std::string ckpt = (dir / "model.ckpt").string();
  RunResult tr = run("--seed 5 train --train " + prefix + ".jsonl --vocab " +
                         prefix + ".vocab --out " + ckpt + " --hidden 16" +
                         " --symbol-embed 12 --bundle-embed 4" +
                         " --target-embed 12 --epochs 2 --batch-size 8" +
                         " --log " + (dir / "log.jsonl").string(),
                     dir);
  CHECK(tr.exit_code == 0);
  CHECK(fs::exists(ckpt));
  // The training log is JSON-lines with the documented fields.
  std::ifstream log(dir / "log.jsonl");
  std::string row;
  int rows = 0;
  while (std::getline(log, row)) {
    nlohmann::json j = nlohmann::json::parse(row);
    CHECK(j.contains("epoch"));
    CHECK(j.contains("train_loss"));
    CHECK(j.contains("dev_perplexity"));
    CHECK(j.contains("wall_time"));
    ++rows;
  }
  CHECK(rows == 2);

  std::string hyp = (dir / "hyp.txt").string();
  RunResult gen = run("generate --checkpoint " + ckpt + " --vocab " + prefix +
                          ".vocab --input " + prefix + ".jsonl --maps " +
                          prefix + ".maps.tsv --out " + hyp + " --beam 2" +
                          " --max-len 12",
                      dir);
  CHECK(gen.exit_code == 0);
  CHECK(line_count(hyp) == 32);

  // Wrong vocabulary is refused.
  std::string prefix2 = (dir / "other").string();
  write_raw_corpus(dir / "other.jsonl", 6, true);
  REQUIRE(run("preprocess --input " + (dir / "other.jsonl").string() +
                  " --out-prefix " + prefix2 + " --min-count 1",
              dir)
              .exit_code == 0);
  RunResult mismatch =
      run("generate --checkpoint " + ckpt + " --vocab " + prefix2 +
              ".vocab --input " + prefix + ".jsonl --out " + hyp,
          dir);
  CHECK(mismatch.exit_code == 2);
  CHECK(mismatch.err.find("hash mismatch") != std::string::npos);

  // Self-evaluation of the references gives a perfect score.
  RunResult ev = run("evaluate --hyp " + prefix + ".refs.txt --ref " + prefix +
                         ".refs.txt",
                     dir);
  CHECK(ev.exit_code == 0);
  nlohmann::json report = nlohmann::json::parse(ev.out);
  CHECK(report.at("bleu").get<double>() == 100.0);
  CHECK(report.at("exact_match").get<double>() == 100.0);
}

TEST_CASE("evaluate scores the hand-counted pair and honors --domains") {
  fs::path dir = fresh_dir("evaluate");
  std::ofstream(dir / "hyp.txt") << "the cat sat on the mat\n";
  std::ofstream(dir / "ref.txt") << "the cat sat on a mat\n";
  RunResult r = run("evaluate --hyp " + (dir / "hyp.txt").string() +
                        " --ref " + (dir / "ref.txt").string(),
                    dir);
  CHECK(r.exit_code == 0);
  nlohmann::json report = nlohmann::json::parse(r.out);
  CHECK(report.at("bleu").get<double>() == doctest::Approx(53.73).epsilon(1e-4));
  CHECK(report.at("signature").get<std::string>().find("13a") !=
        std::string::npos);

  std::ofstream(dir / "hyp2.txt") << "a b c d\nthe cat sat on the mat\n";
  std::ofstream(dir / "ref2.txt") << "a b c d\nthe cat sat on a mat\n";
  std::ofstream(dir / "dom.txt") << "news\nwiki\n";
  RunResult r2 = run("evaluate --hyp " + (dir / "hyp2.txt").string() +
                         " --ref " + (dir / "ref2.txt").string() +
                         " --domains " + (dir / "dom.txt").string(),
                     dir);
  CHECK(r2.exit_code == 0);
  nlohmann::json report2 = nlohmann::json::parse(r2.out);
  REQUIRE(report2.contains("domains"));
  CHECK(report2.at("domains").size() == 2);
  CHECK(report2.at("domains").at("news").at("bleu").get<double>() == 100.0);

  // Length mismatch is fatal.
  RunResult bad = run("evaluate --hyp " + (dir / "hyp2.txt").string() +
                          " --ref " + (dir / "ref.txt").string(),
                      dir);
  CHECK(bad.exit_code == 2);
}

TEST_CASE("bucket sampling through evaluate and sample-errors") {
  fs::path dir = fresh_dir("buckets");
  std::ofstream hyp(dir / "hyp.txt");
  std::ofstream ref(dir / "ref.txt");
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    hyp << "the quick brown fox jumped over the fence " << i % 13 << "\n";
    ref << "the quick brown fox " << (i % 3 ? "jumped over" : "leapt across")
        << " the fence " << i % 7 << "\n";
  }
  hyp.close();
  ref.close();
  RunResult r = run("evaluate --hyp " + (dir / "hyp.txt").string() +
                        " --ref " + (dir / "ref.txt").string() +
                        " --buckets 80-89,60-69,40-49 --per-bucket 33",
                    dir);
  CHECK(r.exit_code == 0);
  nlohmann::json report = nlohmann::json::parse(r.out);
  REQUIRE(report.contains("bucket_samples"));
  CHECK(report.at("bucket_samples").size() <= 99);
  CHECK(report.at("bucket_samples").size() > 0);

  RunResult se = run("sample-errors --hyp " + (dir / "hyp.txt").string() +
                         " --ref " + (dir / "ref.txt").string() +
                         " --per-bucket 5 --out " + (dir / "s.json").string(),
                     dir);
  CHECK(se.exit_code == 0);
  nlohmann::json samples = nlohmann::json::parse(slurp(dir / "s.json"));
  CHECK(samples.is_array());
  CHECK(samples.size() <= 15);
  for (const auto& item : samples) {
    CHECK(item.contains("bucket"));
    CHECK(item.contains("score"));
  }
}

TEST_CASE("ablate rewrites a processed corpus") {
  fs::path dir = fresh_dir("ablate");
  write_raw_corpus(dir / "raw.jsonl", 8, true);
  std::string prefix = (dir / "train").string();
  REQUIRE(run("preprocess --input " + (dir / "raw.jsonl").string() +
                  " --out-prefix " + prefix,
              dir)
              .exit_code == 0);

  std::string out = (dir / "ablated.jsonl").string();
  RunResult r = run("ablate --input " + prefix + ".jsonl --spec noedgeflavor" +
                        " --out " + out + " --vocab-out " +
                        (dir / "ablated.vocab").string(),
                    dir);
  CHECK(r.exit_code == 0);

  std::ifstream in(out);
  std::string line;
  std::getline(in, line);
  nlohmann::json first = nlohmann::json::parse(line);
  std::string linear = first.at("linear").get<std::string>();
  CHECK(linear.find("ARG1-NEQ") == std::string::npos);
  CHECK(linear.find("ARG1") != std::string::npos);
  CHECK(linear.find("RSTR-of") != std::string::npos);
  CHECK(fs::exists(dir / "ablated.vocab.symbols"));

  // none: bundles disappear from the linearization.
  RunResult r2 = run("ablate --input " + prefix + ".jsonl --spec none --out " +
                         (dir / "noattr.jsonl").string(),
                     dir);
  CHECK(r2.exit_code == 0);
  std::ifstream in2(dir / "noattr.jsonl");
  std::getline(in2, line);
  CHECK(nlohmann::json::parse(line).at("linear").get<std::string>().find('=') ==
        std::string::npos);
}

TEST_CASE("config file defaults are overridden by flags") {
  fs::path dir = fresh_dir("config");
  std::ofstream(dir / "config.json")
      << R"({"hidden": 12, "max_epochs": 1, "min_count": 1,)"
      << R"( "symbol_embed": 8, "bundle_embed": 4, "target_embed": 8})";
  write_raw_corpus(dir / "raw.jsonl", 10, false);
  std::string prefix = (dir / "c").string();
  REQUIRE(run("--config " + (dir / "config.json").string() +
                  " preprocess --input " + (dir / "raw.jsonl").string() +
                  " --out-prefix " + prefix,
              dir)
              .exit_code == 0);
  // min_count 1 from the config: singleton tokens stay in the vocabulary.
  nlohmann::json stats = nlohmann::json::parse(slurp(prefix + ".stats.json"));
  CHECK(stats.at("vocab_sizes").at("target").get<int>() > 5);

  std::string ckpt = (dir / "m.ckpt").string();
  RunResult tr = run("--config " + (dir / "config.json").string() +
                         " train --train " + prefix + ".jsonl --vocab " +
                         prefix + ".vocab --out " + ckpt + " --epochs 2",
                     dir);
  CHECK(tr.exit_code == 0);
  // --epochs 2 overrides the config's max_epochs 1.
  int epochs_seen = 0;
  std::istringstream lines(tr.out);
  std::string row;
  while (std::getline(lines, row)) {
    if (!row.empty() && row[0] == '{') ++epochs_seen;
  }
  CHECK(epochs_seen == 2);
}

TEST_CASE("train mixes gold and silver at the documented ratio") {
  fs::path dir = fresh_dir("mix");
  write_raw_corpus(dir / "gold.jsonl", 10, false, false, "gold");
  write_raw_corpus(dir / "silver.jsonl", 30, false, false, "silver");
  std::string gp = (dir / "g").string();
  std::string sp = (dir / "s").string();
  REQUIRE(run("preprocess --input " + (dir / "gold.jsonl").string() +
                  " --out-prefix " + gp + " --min-count 1",
              dir).exit_code == 0);
  REQUIRE(run("preprocess --input " + (dir / "silver.jsonl").string() +
                  " --out-prefix " + sp + " --min-count 1 --no-vocab",
              dir).exit_code == 0);
  RunResult tr = run("train --gold " + gp + ".jsonl --silver " + sp +
                         ".jsonl --vocab " + gp + ".vocab --out " +
                         (dir / "m.ckpt").string() +
                         " --hidden 8 --symbol-embed 6 --bundle-embed 2" +
                         " --target-embed 6 --epochs 1 --batch-size 8",
                     dir);
  CHECK(tr.exit_code == 0);
  // ceil(30 / 2) = 15 gold-derived examples alongside all 30 silver.
  CHECK(tr.out.find("mixed corpus: 15 gold-derived + 30 silver") !=
        std::string::npos);
}

TEST_CASE("train rejects a vocabulary that does not match the corpus") {
  fs::path dir = fresh_dir("hashcheck");
  write_raw_corpus(dir / "a.jsonl", 10, false);
  write_raw_corpus(dir / "b.jsonl", 10, true);
  std::string ap = (dir / "a").string();
  std::string bp = (dir / "b").string();
  REQUIRE(run("preprocess --input " + (dir / "a.jsonl").string() +
                  " --out-prefix " + ap, dir).exit_code == 0);
  REQUIRE(run("preprocess --input " + (dir / "b.jsonl").string() +
                  " --out-prefix " + bp, dir).exit_code == 0);
  RunResult tr = run("train --train " + ap + ".jsonl --vocab " + bp +
                         ".vocab --out " + (dir / "m.ckpt").string() +
                         " --hidden 8 --epochs 1",
                     dir);
  CHECK(tr.exit_code == 2);
  CHECK(tr.err.find("hash mismatch") != std::string::npos);
}

TEST_CASE("greedy flag equals beam width one") {
  fs::path dir = fresh_dir("greedy");
  write_raw_corpus(dir / "raw.jsonl", 12, false);
  std::string prefix = (dir / "t").string();
  REQUIRE(run("preprocess --input " + (dir / "raw.jsonl").string() +
                  " --out-prefix " + prefix + " --min-count 1",
              dir).exit_code == 0);
  std::string ckpt = (dir / "m.ckpt").string();
  REQUIRE(run("train --train " + prefix + ".jsonl --vocab " + prefix +
                  ".vocab --out " + ckpt +
                  " --hidden 12 --symbol-embed 8 --bundle-embed 2" +
                  " --target-embed 8 --epochs 2 --batch-size 8",
              dir).exit_code == 0);
  std::string base = "generate --checkpoint " + ckpt + " --vocab " + prefix +
                     ".vocab --input " + prefix + ".jsonl --maps " + prefix +
                     ".maps.tsv --max-len 10 --out ";
  REQUIRE(run(base + (dir / "a.txt").string() + " --greedy", dir).exit_code == 0);
  REQUIRE(run(base + (dir / "b.txt").string() + " --beam 1", dir).exit_code == 0);
  CHECK(slurp(dir / "a.txt") == slurp(dir / "b.txt"));
}

TEST_CASE("evaluate --signature prints the scorer configuration") {
  fs::path dir = fresh_dir("signature");
  RunResult r = run("evaluate --signature", dir);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("tok:13a") != std::string::npos);
}
