// Acceptance suite: runs every pinned criterion end to end and prints one
// PASS/FAIL line each. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "mrsgen/corpus.hpp"
#include "mrsgen/dmrs.hpp"
#include "mrsgen/eval.hpp"
#include "mrsgen/linearize.hpp"
#include "mrsgen/model.hpp"
#include "mrsgen/penman.hpp"
#include "mrsgen/preprocess.hpp"
#include "testutil.hpp"

using namespace mrsgen;
using corpus::Vocabulary;
using preprocess::ProcessedExample;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool condition, const std::string& message) {
    if (!condition && ok) {
      ok = false;
      detail = message;
    }
  }
  void note(const std::string& message) {
    if (ok) detail = message;
  }
};

double train_bleu(const model::Seq2Seq& model,
                  const std::vector<ProcessedExample>& corpus, int beam) {
  model::GenerateOptions opts;
  opts.beam_width = beam;
  opts.max_len = 16;
  opts.quiet = true;
  std::vector<std::string> hyp = model::generate(model, corpus, opts);
  return eval::corpus_bleu(hyp, testutil::reference_texts(corpus)).bleu;
}

std::vector<ProcessedExample> drop_node_attributes(
    const std::vector<ProcessedExample>& corpus) {
  dmrs::AblationSpec spec = dmrs::AblationSpec::from_flag("none");
  std::vector<ProcessedExample> out = corpus;
  for (ProcessedExample& ex : out) {
    penman::PenmanGraph graph = linearize::delinearize(ex.seq);
    ex.seq = linearize::linearize(dmrs::ablate(graph, spec));
  }
  return out;
}

model::Hyperparams desk_profile(uint64_t seed) {
  model::Hyperparams hp;
  hp.hidden = 64;
  hp.symbol_embed = 64;
  hp.bundle_embed = 8;
  hp.target_embed = 64;
  hp.batch_size = 16;
  hp.dropout = 0.1;
  hp.learning_rate = 3e-3;  // suits the toy corpora; full scale keeps 1e-3
  hp.seed = seed;
  return hp;
}

// ---------------------------------------------------------------------------

Check example_fidelity() {
  Check check;
  preprocess::CorpusExample ex;
  ex.graph = penman::parse_penman(testutil::kExamplePenman);
  ex.text = testutil::kExampleSentence;
  auto [anon, map] = preprocess::anonymize(ex);
  std::string flat = linearize::linearize(anon.graph).to_flat_string();
  check.require(flat == testutil::kExampleLinearized,
                "got: " + flat);
  check.note("byte-exact linearization of the worked example");
  return check;
}

Check penman_round_trip() {
  Check check;
  std::mt19937_64 rng(101);
  testutil::GraphGenOptions opts;
  opts.max_nodes = 9;
  opts.with_carg = true;
  int ok = 0;
  for (int i = 0; i < 1000; ++i) {
    opts.reentrancies = i % 3;
    penman::PenmanGraph g = testutil::random_graph(rng, opts);
    penman::PenmanGraph back =
        penman::parse_penman(penman::serialize_penman(g));
    if (testutil::isomorphic(g, back)) {
      ++ok;
    } else {
      check.require(false, "graph " + std::to_string(i) + " failed");
    }
  }
  check.note("1000/1000 graphs isomorphic after parse(serialize(g))");
  return check;
}

Check linearize_round_trip() {
  Check check;
  std::mt19937_64 rng(102);
  testutil::GraphGenOptions opts;
  opts.reentrancies = 0;
  for (int i = 0; i < 1000; ++i) {
    penman::PenmanGraph g = testutil::random_graph(rng, opts);
    penman::PenmanGraph back =
        linearize::delinearize(linearize::linearize(g));
    check.require(testutil::isomorphic(g, back),
                  "tree graph " + std::to_string(i) + " failed");
  }
  check.note("1000/1000 tree-shaped graphs recovered by delinearize");
  return check;
}

Check bleu_correctness() {
  Check check;
  std::vector<std::string> texts = {"the cat sat on the mat",
                                    "Kim sees a boy.", "it rains"};
  double self_score = eval::corpus_bleu(texts, texts).bleu;
  check.require(self_score == 100.0,
                "identical corpora scored " + std::to_string(self_score));
  double hand = eval::corpus_bleu({"the cat sat on the mat"},
                                  {"the cat sat on a mat"}).bleu;
  check.require(std::abs(hand - 53.73) <= 0.01,
                "hand-counted pair scored " + std::to_string(hand));
  std::ostringstream detail;
  detail.setf(std::ios::fixed);
  detail.precision(2);
  detail << "identity = 100.00, hand-counted pair = " << hand;
  check.note(detail.str());
  return check;
}

Check gradient_check() {
  Check check;
  std::vector<ProcessedExample> train = testutil::tiny_corpus();
  Vocabulary vocab = corpus::build_vocabulary(train, 1);
  check.require(vocab.target.size() == 12, "tiny vocabulary is not 12");

  ProcessedExample oov;
  oov.seq.symbols = {"(", "Zorp", ")"};
  oov.seq.attributes = {"", "", ""};
  oov.target = {"it", "Zorp", "."};
  std::vector<ProcessedExample> data = {train[0], oov};
  std::vector<corpus::Batch> batches = corpus::make_batches(data, vocab, 2, 0);

  model::Hyperparams hp;
  hp.symbol_embed = 6;
  hp.bundle_embed = 3;
  hp.target_embed = 6;
  hp.hidden = 8;
  hp.dropout = 0.0;
  hp.seed = 11;
  model::Seq2Seq model(hp, vocab);
  model.zero_grad();
  model.loss_and_grad(batches[0], false);

  const double step = 1e-4;
  double diff_sq = 0.0, ref_sq = 0.0;
  long long params = 0;
  for (model::Tensor& tensor : model.tensors()) {
    for (int j = 0; j < tensor.w.cols(); ++j) {
      for (int i = 0; i < tensor.w.rows(); ++i) {
        const double saved = tensor.w(i, j);
        tensor.w(i, j) = saved + step;
        const double up = model.loss(batches[0]);
        tensor.w(i, j) = saved - step;
        const double down = model.loss(batches[0]);
        tensor.w(i, j) = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double analytic = tensor.g(i, j);
        diff_sq += (numeric - analytic) * (numeric - analytic);
        ref_sq += std::max(numeric * numeric, analytic * analytic);
        ++params;
      }
    }
  }
  const double rel = std::sqrt(diff_sq) / std::sqrt(ref_sq);
  check.require(rel < 1e-4, "relative error " + std::to_string(rel));
  std::ostringstream detail;
  detail << params << " parameters, relative error " << rel;
  check.note(detail.str());
  return check;
}

Check toy_overfit() {
  Check check;
  std::vector<ProcessedExample> corpus = testutil::inflection_corpus();
  corpus.resize(200);

  model::Hyperparams hp = desk_profile(7);
  hp.max_epochs = 200;
  model::Seq2Seq model(hp, corpus::build_vocabulary(corpus, 2));
  double best = 0.0;
  int reached_at = -1;
  model::TrainOptions opts;
  opts.on_epoch = [&](const model::EpochStats& stats, model::Seq2Seq& m) {
    if (stats.epoch % 5 != 0 && stats.train_loss > 0.05) return true;
    double bleu = train_bleu(m, corpus, 1);
    best = std::max(best, bleu);
    if (bleu >= 95.0) {
      reached_at = stats.epoch;
      return false;
    }
    return true;
  };
  model::train(model, corpus, {}, opts);
  check.require(best >= 95.0,
                "train BLEU only reached " + std::to_string(best));
  std::ostringstream detail;
  detail.setf(std::ios::fixed);
  detail.precision(2);
  detail << "train BLEU " << best << " at epoch " << reached_at;
  check.note(detail.str());
  return check;
}

Check ablation_direction() {
  Check check;
  testutil::InflectionCorpusOptions copts;
  copts.transitive = false;
  std::vector<ProcessedExample> all = testutil::inflection_corpus(copts);

  // Deterministic split: held-out combinations, every word seen in training.
  std::mt19937_64 rng(2025);
  for (size_t i = all.size(); i > 1; --i) {
    std::swap(all[i - 1], all[corpus::uniform_below(rng, i)]);
  }
  std::vector<ProcessedExample> test(all.begin(), all.begin() + 84);
  std::vector<ProcessedExample> train(all.begin() + 84, all.end());

  auto run = [&](const std::vector<ProcessedExample>& train_set,
                 const std::vector<ProcessedExample>& test_set,
                 uint64_t seed) {
    model::Hyperparams hp = desk_profile(seed);
    hp.max_epochs = 120;
    model::Seq2Seq m(hp, corpus::build_vocabulary(train_set, 2));
    model::TrainOptions opts;
    opts.on_epoch = [](const model::EpochStats& stats, model::Seq2Seq&) {
      return stats.train_loss > 0.01;
    };
    model::train(m, train_set, {}, opts);
    model::GenerateOptions gopts;
    gopts.beam_width = 5;
    gopts.max_len = 16;
    gopts.quiet = true;
    std::vector<std::string> hyp = model::generate(m, test_set, gopts);
    return eval::corpus_bleu(hyp, testutil::reference_texts(test_set)).bleu;
  };

  double full = run(train, test, 11);
  double ablated =
      run(drop_node_attributes(train), drop_node_attributes(test), 12);
  check.require(full - ablated >= 5.0,
                "full " + std::to_string(full) + " vs ablated " +
                    std::to_string(ablated));
  std::ostringstream detail;
  detail.setf(std::ios::fixed);
  detail.precision(2);
  detail << "held-out BLEU " << full << " with attributes vs " << ablated
         << " without";
  check.note(detail.str());
  return check;
}

Check copy_mechanism() {
  Check check;
  std::vector<ProcessedExample> train = testutil::copy_corpus(150, 0);
  std::vector<ProcessedExample> test = testutil::copy_corpus(40, 300);

  auto entity_of = [](const ProcessedExample& ex) {
    return ex.target[4];  // "the NOUN is called X ."
  };
  // The held-out entity tokens are absent from the training vocabulary.
  Vocabulary vocab = corpus::build_vocabulary(train, 2);
  for (const ProcessedExample& ex : test) {
    check.require(vocab.target.lookup(entity_of(ex)) == Vocabulary::kUnk,
                  "test entity leaked into the target vocabulary");
  }

  auto emit_rate = [&](bool use_copy, uint64_t seed) {
    model::Hyperparams hp = desk_profile(seed);
    hp.use_copy = use_copy;
    hp.max_epochs = 120;
    model::Seq2Seq m(hp, vocab);
    model::TrainOptions opts;
    opts.on_epoch = [](const model::EpochStats& stats, model::Seq2Seq&) {
      return stats.train_loss > 0.01;
    };
    model::train(m, train, {}, opts);
    model::GenerateOptions gopts;
    gopts.beam_width = 5;
    gopts.max_len = 12;
    gopts.quiet = true;
    std::vector<std::string> hyp = model::generate(m, test, gopts);
    int hits = 0;
    for (size_t i = 0; i < test.size(); ++i) {
      if (hyp[i].find(entity_of(test[i])) != std::string::npos) ++hits;
    }
    return 100.0 * hits / static_cast<double>(test.size());
  };

  double with_copy = emit_rate(true, 21);
  double without_copy = emit_rate(false, 22);
  check.require(with_copy >= 90.0,
                "copy-enabled rate " + std::to_string(with_copy));
  check.require(without_copy == 0.0,
                "copy-disabled rate " + std::to_string(without_copy));
  std::ostringstream detail;
  detail.setf(std::ios::fixed);
  detail.precision(1);
  detail << "unseen tokens emitted: " << with_copy << "% with copy, "
         << without_copy << "% without";
  check.note(detail.str());
  return check;
}

Check mixing_ratio() {
  Check check;
  std::mt19937_64 rng(404);
  auto corpus_of = [](int n, const std::string& provenance) {
    std::vector<ProcessedExample> out;
    for (int i = 0; i < n; ++i) {
      ProcessedExample ex;
      ex.seq.symbols = {"(", "_x_v_1", ")"};
      ex.seq.attributes = {"", "", ""};
      ex.target = {"x"};
      ex.provenance = provenance;
      ex.domain = std::to_string(i);
      out.push_back(ex);
    }
    return out;
  };
  for (int i = 0; i < 100; ++i) {
    const int g = 1 + static_cast<int>(corpus::uniform_below(rng, 500));
    const int s = 1 + static_cast<int>(corpus::uniform_below(rng, 1000));
    std::vector<ProcessedExample> mixed = corpus::mix_gold_silver(
        corpus_of(g, "gold"), corpus_of(s, "silver"), i);
    long long gold = 0;
    std::map<std::string, int> silver_seen;
    for (const ProcessedExample& ex : mixed) {
      if (ex.provenance == "gold") {
        ++gold;
      } else {
        ++silver_seen[ex.domain];
      }
    }
    check.require(std::llabs(2 * gold - s) <= 1,
                  "pair (" + std::to_string(g) + "," + std::to_string(s) +
                      ") off ratio: " + std::to_string(gold) + " gold");
    check.require(static_cast<long long>(silver_seen.size()) == s,
                  "silver examples lost");
    for (const auto& [id, count] : silver_seen) {
      check.require(count == 1, "silver example repeated");
    }
  }
  check.note("100/100 random size pairs at 1:2 within one example");
  return check;
}

Check decoding_invariants() {
  Check check;
  std::vector<ProcessedExample> train = testutil::tiny_corpus();
  Vocabulary vocab = corpus::build_vocabulary(train, 1);

  model::Hyperparams hp;
  hp.symbol_embed = 6;
  hp.bundle_embed = 3;
  hp.target_embed = 6;
  hp.hidden = 8;
  hp.dropout = 0.0;

  // Beam width 1 equals stepwise greedy decoding on 100 inputs.
  std::mt19937_64 rng(505);
  int checked = 0;
  uint64_t seed = 900;
  while (checked < 100) {
    hp.seed = seed++;
    model::Seq2Seq model(hp, vocab);
    for (int k = 0; k < 10 && checked < 100; ++k, ++checked) {
      linearize::LinearSequence seq =
          linearize::linearize(testutil::random_graph(rng));
      std::vector<model::Hypothesis> beam = model.beam_search(seq, 1, 12);

      model::Seq2Seq::EncoderOutput enc = model.encode_sequence(seq);
      model::Seq2Seq::DecodeState state = model.initial_state(enc);
      std::vector<std::string> greedy;
      int prev = Vocabulary::kBos;
      for (int step = 0; step < 12; ++step) {
        model::Seq2Seq::DecoderStep d = model.decode_step(prev, state, enc);
        if (d.gate > 0.5) {
          int best = 0;
          d.pointer.head(enc.valid_length).maxCoeff(&best);
          greedy.push_back(seq.symbols[best]);
          prev = vocab.target.lookup(greedy.back());
        } else {
          int best = -1;
          double best_p = -1.0;
          for (int id = 0; id < d.generation.size(); ++id) {
            if (id == Vocabulary::kPad || id == Vocabulary::kBos ||
                id == Vocabulary::kNone) {
              continue;
            }
            if (d.generation(id) > best_p) {
              best_p = d.generation(id);
              best = id;
            }
          }
          if (best == Vocabulary::kEos) break;
          greedy.push_back(vocab.target.token(best));
          prev = best;
        }
      }
      check.require(!beam.empty() && beam[0].tokens == greedy,
                    "beam width 1 diverged from greedy on input " +
                        std::to_string(checked));
    }
  }

  // Attention and pointer distributions over 1000 random decode steps.
  hp.seed = 1234;
  model::Seq2Seq model(hp, vocab);
  int steps_checked = 0;
  while (steps_checked < 1000) {
    linearize::LinearSequence seq =
        linearize::linearize(testutil::random_graph(rng));
    const int pad_to = static_cast<int>(seq.size()) +
                       static_cast<int>(corpus::uniform_below(rng, 4));
    model::Seq2Seq::EncoderOutput enc = model.encode_sequence(seq, pad_to);
    model::Seq2Seq::DecodeState state = model.initial_state(enc);
    int prev = Vocabulary::kBos;
    for (int s = 0; s < 5 && steps_checked < 1000; ++s, ++steps_checked) {
      model::Seq2Seq::DecoderStep d = model.decode_step(prev, state, enc);
      check.require(std::abs(d.attention.sum() - 1.0) < 1e-6,
                    "attention sum off by " +
                        std::to_string(std::abs(d.attention.sum() - 1.0)));
      check.require(std::abs(d.pointer.sum() - 1.0) < 1e-6,
                    "pointer sum off");
      prev = static_cast<int>(
          corpus::uniform_below(rng, static_cast<uint64_t>(vocab.target.size())));
    }
  }
  check.note("beam-1 = greedy on 100 inputs; 1000 decode steps normalized");
  return check;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double time_limit;  // seconds; 0 = unbounded
    std::function<Check()> run;
  };
  const std::vector<Criterion> criteria = {
      {"example fidelity", 1.0, example_fidelity},
      {"graph notation round-trip", 10.0, penman_round_trip},
      {"linearization round-trip", 0.0, linearize_round_trip},
      {"corpus score correctness", 0.0, bleu_correctness},
      {"gradient check", 30.0, gradient_check},
      {"toy overfit", 600.0, toy_overfit},
      {"attribute ablation direction", 0.0, ablation_direction},
      {"copy mechanism", 0.0, copy_mechanism},
      {"gold/silver mixing ratio", 0.0, mixing_ratio},
      {"decoding invariants", 0.0, decoding_invariants},
  };

  int passed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Check check;
    try {
      check = criteria[i].run();
    } catch (const std::exception& e) {
      check.ok = false;
      check.detail = std::string("exception: ") + e.what();
    }
    double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (criteria[i].time_limit > 0 && seconds > criteria[i].time_limit) {
      check.ok = false;
      check.detail += " [exceeded " +
                      std::to_string(criteria[i].time_limit) + "s limit]";
    }
    passed += check.ok;
    std::printf("[%s] %zu. %s: %s (%.2fs)\n", check.ok ? "PASS" : "FAIL",
                i + 1, criteria[i].name, check.detail.c_str(), seconds);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", passed, criteria.size());
  return passed == static_cast<int>(criteria.size()) ? 0 : 1;
}
