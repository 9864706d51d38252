// mrsgen: graph-to-text generation pipeline in one binary.
//
// Subcommands: preprocess, train, generate, evaluate, ablate, sample-errors.
// File formats are documented in the README; all outputs are deterministic
// given identical inputs, flags, and seed.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "mrsgen/corpus.hpp"
#include "mrsgen/dmrs.hpp"
#include "mrsgen/eval.hpp"
#include "mrsgen/linearize.hpp"
#include "mrsgen/model.hpp"
#include "mrsgen/penman.hpp"
#include "mrsgen/preprocess.hpp"

namespace fs = std::filesystem;
using namespace mrsgen;

namespace {

bool g_quiet = false;

void warn(const std::string& message) {
  if (!g_quiet) std::cerr << "warning: " << message << '\n';
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::string hash_hex(uint64_t h) {
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

// Hyperparameters shared by train/generate, overridable from a JSON config
// file (documented key set) and then by explicit flags.
struct ModelFlags {
  model::Hyperparams hp;
  bool paper_scale = false;

  void add_options(CLI::App* cmd) {
    cmd->add_flag("--paper-scale", paper_scale,
                  "use the full-scale hyperparameter profile");
    cmd->add_option("--hidden", hp.hidden, "encoder hidden size per direction");
    cmd->add_option("--symbol-embed", hp.symbol_embed, "symbol embedding size");
    cmd->add_option("--bundle-embed", hp.bundle_embed, "bundle embedding size");
    cmd->add_option("--target-embed", hp.target_embed, "target embedding size");
    cmd->add_option("--encoder-layers", hp.encoder_layers, "encoder layers");
    cmd->add_option("--decoder-layers", hp.decoder_layers, "decoder layers");
    cmd->add_option("--dropout", hp.dropout, "dropout rate");
    cmd->add_option("--lr", hp.learning_rate, "Adam learning rate");
    cmd->add_option("--clip", hp.clip_norm, "gradient clipping norm");
    cmd->add_option("--batch-size", hp.batch_size, "batch size");
    cmd->add_option("--epochs", hp.max_epochs, "maximum training epochs");
    cmd->add_option("--beam", hp.beam_width, "beam width");
    cmd->add_option("--max-len", hp.max_decode_len, "decoding length bound");
    cmd->add_flag("--no-copy", [this](int64_t) { hp.use_copy = false; },
                  "disable the pointer-copy mechanism");
  }

  void finalize(uint64_t seed) {
    if (paper_scale) {
      // Flags still override: re-apply nothing; paper profile is a base.
      model::Hyperparams base = model::Hyperparams::paper_scale();
      base.dropout = hp.dropout;
      base.learning_rate = hp.learning_rate;
      base.clip_norm = hp.clip_norm;
      base.use_copy = hp.use_copy;
      hp = base;
    }
    hp.seed = seed;
    hp.validate();
  }
};

void apply_config_defaults(const std::string& path, model::Hyperparams& hp,
                           int& min_count) {
  nlohmann::json j = nlohmann::json::parse(open_input(path));
  auto get = [&](const char* key, auto& slot) {
    if (j.contains(key)) slot = j.at(key).template get<std::decay_t<decltype(slot)>>();
  };
  get("hidden", hp.hidden);
  get("symbol_embed", hp.symbol_embed);
  get("bundle_embed", hp.bundle_embed);
  get("target_embed", hp.target_embed);
  get("encoder_layers", hp.encoder_layers);
  get("decoder_layers", hp.decoder_layers);
  get("dropout", hp.dropout);
  get("learning_rate", hp.learning_rate);
  get("clip_norm", hp.clip_norm);
  get("batch_size", hp.batch_size);
  get("max_epochs", hp.max_epochs);
  get("beam_width", hp.beam_width);
  get("max_decode_len", hp.max_decode_len);
  get("use_copy", hp.use_copy);
  get("min_count", min_count);
}

// Sidecar written by preprocess next to each corpus; train refuses to run
// against a vocabulary whose hashes do not match.
void check_corpus_vocab_hashes(const std::string& corpus_path,
                               const corpus::Vocabulary& vocab) {
  fs::path sidecar = corpus_path;
  sidecar.replace_extension(".stats.json");
  if (!fs::exists(sidecar)) return;
  nlohmann::json j = nlohmann::json::parse(open_input(sidecar.string()));
  if (!j.contains("vocab_hash")) return;
  const nlohmann::json& h = j.at("vocab_hash");
  if (h.value("symbols", "") != hash_hex(vocab.symbols.content_hash()) ||
      h.value("bundles", "") != hash_hex(vocab.bundles.content_hash()) ||
      h.value("target", "") != hash_hex(vocab.target.content_hash())) {
    throw std::runtime_error(
        corpus_path +
        ": vocabulary hash mismatch (corpus was preprocessed with a "
        "different vocabulary)");
  }
}

std::vector<preprocess::ProcessedExample> load_processed(
    const std::string& path) {
  std::ifstream in = open_input(path);
  return preprocess::read_processed_corpus(in);
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

struct PreprocessArgs {
  std::string input;
  std::string out_prefix;
  std::string test_corpus;  // dedup target
  std::string ablate_flag = "all";
  int min_count = 2;
  bool no_unk_policy = false;
  bool no_vocab = false;
  uint64_t seed = 1;
  std::string config;
};

int cmd_preprocess(const PreprocessArgs& args) {
  std::ifstream in = open_input(args.input);
  preprocess::RawReadResult raw = preprocess::read_raw_corpus(in);
  for (const auto& [line, message] : raw.errors) {
    std::cerr << args.input << ":" << line << ": " << message << '\n';
  }

  dmrs::AblationSpec ablation = dmrs::AblationSpec::from_flag(args.ablate_flag);

  std::vector<preprocess::CorpusExample> examples;
  std::vector<std::pair<int, std::string>> failures(raw.errors);
  for (const preprocess::RawRecord& rec : raw.records) {
    try {
      preprocess::CorpusExample ex;
      ex.graph = penman::parse_penman(rec.penman);
      ex.text = preprocess::normalize_text(rec.text);
      if (ex.text.empty()) throw std::runtime_error("empty text field");
      ex.provenance = rec.provenance;
      ex.domain = rec.domain;
      ex.graph = dmrs::ablate(ex.graph, ablation);
      examples.push_back(std::move(ex));
    } catch (const std::exception& e) {
      std::cerr << args.input << ":" << rec.line << ": " << e.what() << '\n';
      failures.emplace_back(rec.line, e.what());
    }
  }
  if (examples.empty()) throw std::runtime_error("no usable records");

  // Anonymize graph and text together.
  std::vector<preprocess::AnonymizationMap> maps;
  std::vector<std::string> references;
  for (preprocess::CorpusExample& ex : examples) {
    auto [anon, map] = preprocess::anonymize(ex);
    references.push_back(ex.text);  // normalized, pre-anonymization
    ex = std::move(anon);
    maps.push_back(std::move(map));
  }

  // Dedup against the test corpus texts, when given.
  size_t dedup_removed = 0;
  if (!args.test_corpus.empty()) {
    std::ifstream tin = open_input(args.test_corpus);
    preprocess::RawReadResult test_raw = preprocess::read_raw_corpus(tin);
    std::vector<preprocess::CorpusExample> test_examples;
    for (const preprocess::RawRecord& rec : test_raw.records) {
      preprocess::CorpusExample ex;
      ex.text = rec.text;
      test_examples.push_back(std::move(ex));
    }
    // Filter examples, maps, and references in lockstep.
    std::vector<preprocess::CorpusExample> kept;
    std::vector<preprocess::AnonymizationMap> kept_maps;
    std::vector<std::string> kept_refs;
    std::set<std::string> test_texts;
    for (const auto& ex : test_examples) {
      test_texts.insert(preprocess::normalize_text(ex.text));
    }
    for (size_t i = 0; i < examples.size(); ++i) {
      if (test_texts.count(preprocess::normalize_text(references[i]))) {
        ++dedup_removed;
        continue;
      }
      kept.push_back(std::move(examples[i]));
      kept_maps.push_back(std::move(maps[i]));
      kept_refs.push_back(std::move(references[i]));
    }
    examples = std::move(kept);
    maps = std::move(kept_maps);
    references = std::move(kept_refs);
  }

  preprocess::UnknownReport unk_report;
  if (!args.no_unk_policy) {
    auto [rewritten, report] = preprocess::apply_unknown_policy(examples);
    examples = std::move(rewritten);
    unk_report = std::move(report);
  }

  // Linearize and tokenize.
  std::vector<preprocess::ProcessedExample> processed;
  for (size_t i = 0; i < examples.size(); ++i) {
    preprocess::ProcessedExample ex;
    ex.seq = linearize::linearize(examples[i].graph);
    ex.target = preprocess::tokenize(examples[i].text);
    ex.provenance = examples[i].provenance;
    ex.domain = examples[i].domain;
    ex.map = maps[i];
    ex.reference_text = references[i];
    processed.push_back(std::move(ex));
  }

  nlohmann::json stats{
      {"records", raw.records.size()},
      {"failures", failures.size()},
      {"examples", processed.size()},
      {"dedup_removed", dedup_removed},
      {"unknown_singletons_replaced", unk_report.replaced.size()},
      {"ablation", ablation.to_flag()},
  };

  if (!args.no_vocab) {
    corpus::Vocabulary vocab =
        corpus::build_vocabulary(processed, args.min_count);
    corpus::save_vocabulary(vocab, args.out_prefix + ".vocab");
    stats["vocab_hash"] = {
        {"symbols", hash_hex(vocab.symbols.content_hash())},
        {"bundles", hash_hex(vocab.bundles.content_hash())},
        {"target", hash_hex(vocab.target.content_hash())}};
    stats["vocab_sizes"] = {{"symbols", vocab.symbols.size()},
                            {"bundles", vocab.bundles.size()},
                            {"target", vocab.target.size()}};
  }

  {
    std::ofstream out = open_output(args.out_prefix + ".jsonl");
    preprocess::write_processed_corpus(out, processed);
  }
  {
    std::ofstream out = open_output(args.out_prefix + ".linear");
    for (const auto& ex : processed) out << ex.seq.to_flat_string() << '\n';
  }
  {
    std::ofstream out = open_output(args.out_prefix + ".maps.tsv");
    preprocess::write_maps_tsv(out, maps);
  }
  {
    std::ofstream out = open_output(args.out_prefix + ".refs.txt");
    for (const auto& ref : references) out << ref << '\n';
  }
  {
    std::ofstream out = open_output(args.out_prefix + ".stats.json");
    out << stats.dump(2) << '\n';
  }
  std::cout << stats.dump(2) << '\n';
  return failures.empty() ? 0 : 1;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string train_corpus;
  std::string gold_corpus;
  std::string silver_corpus;
  std::string dev_corpus;
  std::string vocab_prefix;
  std::string out_checkpoint;
  std::string log_path;
  ModelFlags flags;
  int min_count = 2;  // config compatibility only
  uint64_t seed = 1;
  std::string config;
};

int cmd_train(const TrainArgs& args) {
  corpus::Vocabulary vocab = corpus::load_vocabulary(args.vocab_prefix);

  std::vector<preprocess::ProcessedExample> training;
  if (!args.train_corpus.empty()) {
    check_corpus_vocab_hashes(args.train_corpus, vocab);
    training = load_processed(args.train_corpus);
  } else {
    check_corpus_vocab_hashes(args.gold_corpus, vocab);
    std::vector<preprocess::ProcessedExample> gold =
        load_processed(args.gold_corpus);
    std::vector<preprocess::ProcessedExample> silver =
        load_processed(args.silver_corpus);
    std::string warning;
    training = corpus::mix_gold_silver(gold, silver, args.seed, &warning);
    if (!warning.empty()) warn(warning);
    size_t gold_derived = training.size() - silver.size();
    std::cout << "mixed corpus: " << gold_derived << " gold-derived + "
              << silver.size() << " silver (target ratio 1:2)\n";
  }

  std::vector<preprocess::ProcessedExample> dev;
  if (!args.dev_corpus.empty()) dev = load_processed(args.dev_corpus);

  model::Seq2Seq model(args.flags.hp, vocab);

  std::ofstream log;
  if (!args.log_path.empty()) log = open_output(args.log_path);
  model::TrainOptions options;
  options.on_epoch = [&](const model::EpochStats& s, model::Seq2Seq&) {
    nlohmann::json row{{"epoch", s.epoch},
                       {"train_loss", s.train_loss},
                       {"dev_perplexity", s.dev_perplexity},
                       {"wall_time", s.wall_seconds}};
    if (log.is_open()) log << row.dump() << '\n';
    if (!g_quiet) std::cout << row.dump() << '\n';
    return true;
  };
  model::TrainResult result = model::train(model, training, dev, options);

  model::save_checkpoint(model, args.out_checkpoint);
  std::cout << "checkpoint written to " << args.out_checkpoint
            << " (best epoch " << result.best_epoch << ", dev perplexity "
            << result.best_dev_perplexity << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string checkpoint;
  std::string vocab_prefix;
  std::string input;
  std::string maps_path;
  std::string out_path;
  int beam = 5;
  bool greedy = false;
  int max_len = 120;
  uint64_t seed = 1;
  std::string config;
};

int cmd_generate(const GenerateArgs& args) {
  corpus::Vocabulary vocab = corpus::load_vocabulary(args.vocab_prefix);
  model::Seq2Seq model = model::load_checkpoint(args.checkpoint, vocab);

  std::vector<preprocess::ProcessedExample> inputs = load_processed(args.input);
  if (!args.maps_path.empty()) {
    std::ifstream in = open_input(args.maps_path);
    std::vector<preprocess::AnonymizationMap> maps =
        preprocess::read_maps_tsv(in);
    maps.resize(inputs.size());
    for (size_t i = 0; i < inputs.size(); ++i) inputs[i].map = maps[i];
  } else {
    warn("no anonymization maps given; placeholders pass through");
  }

  model::GenerateOptions options;
  options.beam_width = args.greedy ? 1 : args.beam;
  options.max_len = args.max_len;
  options.quiet = g_quiet;
  std::vector<std::string> outputs = model::generate(model, inputs, options);

  std::ofstream out = open_output(args.out_path);
  for (const std::string& line : outputs) out << line << '\n';
  std::cout << outputs.size() << " sentences written to " << args.out_path
            << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate / sample-errors
// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string hyp_path;
  std::string ref_path;
  std::string domains_path;
  std::string buckets;
  int per_bucket = 33;
  std::string out_path;
  bool signature = false;
  uint64_t seed = 1;
};

int cmd_evaluate(const EvaluateArgs& args) {
  if (args.signature) {
    std::cout << eval::scorer_signature() << '\n';
    if (args.hyp_path.empty()) return 0;
  }
  std::vector<std::string> hyp = read_lines(args.hyp_path);
  std::vector<std::string> ref = read_lines(args.ref_path);
  if (hyp.size() != ref.size()) {
    throw std::runtime_error("hypothesis and reference line counts differ (" +
                             std::to_string(hyp.size()) + " vs " +
                             std::to_string(ref.size()) + ")");
  }

  eval::EvalReport report;
  if (!args.domains_path.empty()) {
    std::vector<std::string> domains = read_lines(args.domains_path);
    if (domains.size() != hyp.size()) {
      throw std::runtime_error("domain tag count mismatch");
    }
    report = eval::corpus_bleu_by_domain(hyp, ref, domains);
  } else {
    report = eval::corpus_bleu(hyp, ref);
  }
  report.exact_match = eval::exact_match(hyp, ref);

  nlohmann::json j = report.to_json();
  j["signature"] = eval::scorer_signature();
  if (!args.buckets.empty()) {
    std::vector<std::string> warnings;
    std::vector<eval::BucketSample> samples =
        eval::bucket_sample(hyp, ref, eval::parse_bucket_ranges(args.buckets),
                            args.per_bucket, args.seed, &warnings);
    for (const std::string& w : warnings) warn(w);
    nlohmann::json items = nlohmann::json::array();
    for (const eval::BucketSample& s : samples) {
      items.push_back({{"index", s.index},
                       {"bucket", s.bucket},
                       {"score", eval::round2(s.score)},
                       {"hypothesis", s.hypothesis},
                       {"reference", s.reference}});
    }
    j["bucket_samples"] = items;
  }

  std::string text = j.dump(2) + "\n";
  if (!args.out_path.empty()) {
    open_output(args.out_path) << text;
  }
  std::cout << text;
  return 0;
}

struct SampleErrorsArgs {
  std::string hyp_path;
  std::string ref_path;
  std::string buckets = "80-89,60-69,40-49";
  int per_bucket = 33;
  std::string out_path;
  uint64_t seed = 1;
};

int cmd_sample_errors(const SampleErrorsArgs& args) {
  std::vector<std::string> hyp = read_lines(args.hyp_path);
  std::vector<std::string> ref = read_lines(args.ref_path);
  if (hyp.size() != ref.size()) {
    throw std::runtime_error("hypothesis and reference line counts differ");
  }
  std::vector<std::string> warnings;
  std::vector<eval::BucketSample> samples =
      eval::bucket_sample(hyp, ref, eval::parse_bucket_ranges(args.buckets),
                          args.per_bucket, args.seed, &warnings);
  for (const std::string& w : warnings) warn(w);
  nlohmann::json items = nlohmann::json::array();
  for (const eval::BucketSample& s : samples) {
    items.push_back({{"index", s.index},
                     {"bucket", s.bucket},
                     {"score", eval::round2(s.score)},
                     {"hypothesis", s.hypothesis},
                     {"reference", s.reference}});
  }
  std::string text = items.dump(2) + "\n";
  if (!args.out_path.empty()) open_output(args.out_path) << text;
  std::cout << text;
  return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string input;
  std::string spec = "all";
  std::string out_path;
  std::string vocab_out;
  int min_count = 2;
};

int cmd_ablate(const AblateArgs& args) {
  dmrs::AblationSpec spec = dmrs::AblationSpec::from_flag(args.spec);
  std::vector<preprocess::ProcessedExample> corpus = load_processed(args.input);
  for (preprocess::ProcessedExample& ex : corpus) {
    penman::PenmanGraph graph = linearize::delinearize(ex.seq);
    ex.seq = linearize::linearize(dmrs::ablate(graph, spec));
  }
  std::ofstream out = open_output(args.out_path);
  preprocess::write_processed_corpus(out, corpus);
  if (!args.vocab_out.empty()) {
    corpus::Vocabulary vocab = corpus::build_vocabulary(corpus, args.min_count);
    corpus::save_vocabulary(vocab, args.vocab_out);
  }
  std::cout << corpus.size() << " examples re-linearized with ablation '"
            << spec.to_flag() << "'\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph-to-text generation toolkit"};
  app.require_subcommand(1);

  uint64_t seed = 1;
  std::string config;
  app.add_option("--seed", seed, "random seed")->capture_default_str();
  app.add_option("--config", config, "JSON config file with defaults");
  app.add_flag("--quiet", g_quiet, "suppress warnings and progress output");

  PreprocessArgs pre;
  CLI::App* pre_cmd = app.add_subcommand(
      "preprocess", "normalize, anonymize, dedup, linearize, build vocabulary");
  pre_cmd->add_option("--input", pre.input, "raw JSON-lines corpus")
      ->required();
  pre_cmd->add_option("--out-prefix", pre.out_prefix, "output path prefix")
      ->required();
  pre_cmd->add_option("--test", pre.test_corpus,
                      "raw corpus whose texts are removed from the input");
  pre_cmd->add_option("--ablate", pre.ablate_flag,
                      "ablation: all|none|keep=k1,k2|noedgeflavor");
  pre_cmd->add_option("--min-count", pre.min_count,
                      "vocabulary frequency threshold");
  pre_cmd->add_flag("--no-unk-policy", pre.no_unk_policy,
                    "skip the singleton-to-UNK0 rewrite (test corpora)");
  pre_cmd->add_flag("--no-vocab", pre.no_vocab,
                    "skip vocabulary construction (test corpora)");

  TrainArgs train;
  CLI::App* train_cmd =
      app.add_subcommand("train", "train the generator on processed corpora");
  train_cmd->add_option("--train", train.train_corpus, "processed corpus");
  train_cmd->add_option("--gold", train.gold_corpus, "processed gold corpus");
  train_cmd->add_option("--silver", train.silver_corpus,
                        "processed silver corpus");
  train_cmd->add_option("--dev", train.dev_corpus, "processed dev corpus");
  train_cmd->add_option("--vocab", train.vocab_prefix, "vocabulary prefix")
      ->required();
  train_cmd->add_option("--out", train.out_checkpoint, "checkpoint path")
      ->required();
  train_cmd->add_option("--log", train.log_path, "JSON-lines training log");
  train.flags.add_options(train_cmd);

  GenerateArgs gen;
  CLI::App* gen_cmd =
      app.add_subcommand("generate", "decode text from processed graphs");
  gen_cmd->add_option("--checkpoint", gen.checkpoint, "trained checkpoint")
      ->required();
  gen_cmd->add_option("--vocab", gen.vocab_prefix, "vocabulary prefix")
      ->required();
  gen_cmd->add_option("--input", gen.input, "processed corpus to decode")
      ->required();
  gen_cmd->add_option("--maps", gen.maps_path, "anonymization maps TSV");
  gen_cmd->add_option("--out", gen.out_path, "output sentence file")
      ->required();
  gen_cmd->add_option("--beam", gen.beam, "beam width")->capture_default_str();
  gen_cmd->add_flag("--greedy", gen.greedy, "greedy decoding (beam width 1)");
  gen_cmd->add_option("--max-len", gen.max_len, "decoding length bound");

  EvaluateArgs ev;
  CLI::App* eval_cmd =
      app.add_subcommand("evaluate", "score hypotheses against references");
  eval_cmd->add_option("--hyp", ev.hyp_path, "hypothesis file, one per line");
  eval_cmd->add_option("--ref", ev.ref_path, "reference file, one per line");
  eval_cmd->add_option("--domains", ev.domains_path,
                       "per-line domain tags for sub-reports");
  eval_cmd->add_option("--buckets", ev.buckets,
                       "sentence-score ranges, e.g. 80-89,60-69,40-49");
  eval_cmd->add_option("--per-bucket", ev.per_bucket, "samples per bucket");
  eval_cmd->add_option("--out", ev.out_path, "write the JSON report here");
  eval_cmd->add_flag("--signature", ev.signature,
                     "print the scorer configuration");

  SampleErrorsArgs se;
  CLI::App* se_cmd = app.add_subcommand(
      "sample-errors", "sample sentence pairs by sentence-score bucket");
  se_cmd->add_option("--hyp", se.hyp_path, "hypothesis file")->required();
  se_cmd->add_option("--ref", se.ref_path, "reference file")->required();
  se_cmd->add_option("--buckets", se.buckets, "score ranges")
      ->capture_default_str();
  se_cmd->add_option("--per-bucket", se.per_bucket, "samples per bucket")
      ->capture_default_str();
  se_cmd->add_option("--out", se.out_path, "write the JSON samples here");

  AblateArgs ab;
  CLI::App* ab_cmd = app.add_subcommand(
      "ablate", "apply an ablation to a processed corpus and re-linearize");
  ab_cmd->add_option("--input", ab.input, "processed corpus")->required();
  ab_cmd->add_option("--spec", ab.spec, "all|none|keep=k1,k2|noedgeflavor")
      ->required();
  ab_cmd->add_option("--out", ab.out_path, "output processed corpus")
      ->required();
  ab_cmd->add_option("--vocab-out", ab.vocab_out,
                     "rebuild the vocabulary at this prefix");
  ab_cmd->add_option("--min-count", ab.min_count,
                     "vocabulary frequency threshold");

  // Config values act as defaults; explicit flags override them, so the
  // config file is located and applied before parsing.
  try {
    for (int i = 1; i < argc; ++i) {
      std::string arg = argv[i];
      if (arg == "--config" && i + 1 < argc) {
        config = argv[i + 1];
      } else if (arg.rfind("--config=", 0) == 0) {
        config = arg.substr(9);
      }
    }
    if (!config.empty()) {
      apply_config_defaults(config, train.flags.hp, pre.min_count);
      ab.min_count = pre.min_count;
      gen.beam = train.flags.hp.beam_width;
      gen.max_len = train.flags.hp.max_decode_len;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre_cmd->parsed()) {
      pre.seed = seed;
      return cmd_preprocess(pre);
    }
    if (train_cmd->parsed()) {
      train.seed = seed;
      train.flags.finalize(seed);
      if (train.train_corpus.empty() &&
          (train.gold_corpus.empty() || train.silver_corpus.empty())) {
        throw std::runtime_error(
            "give either --train or both --gold and --silver");
      }
      return cmd_train(train);
    }
    if (gen_cmd->parsed()) {
      gen.seed = seed;
      return cmd_generate(gen);
    }
    if (eval_cmd->parsed()) {
      ev.seed = seed;
      if (!ev.signature && (ev.hyp_path.empty() || ev.ref_path.empty())) {
        throw std::runtime_error("--hyp and --ref are required");
      }
      return cmd_evaluate(ev);
    }
    if (se_cmd->parsed()) {
      se.seed = seed;
      return cmd_sample_errors(se);
    }
    if (ab_cmd->parsed()) {
      return cmd_ablate(ab);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
