#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

// BLEU-4 with mteval-13a style tokenization (case-sensitive), exact match
// after normalization, per-domain breakdowns, and sentence-BLEU bucket
// sampling for error analysis.

namespace mrsgen::eval {

// 13a tokenization: unescape a few entities, split punctuation except
// period/comma inside digits, split a dash after a digit.
std::vector<std::string> bleu_tokenize(const std::string& text);

struct EvalReport {
  double bleu = 0.0;  // 0..100
  std::array<double, 4> precisions{};
  std::array<long long, 4> match_counts{};
  std::array<long long, 4> total_counts{};
  double brevity_penalty = 1.0;
  long long hyp_len = 0;
  long long ref_len = 0;
  long long pairs = 0;
  double exact_match = -1.0;  // percent; negative when not computed
  std::map<std::string, EvalReport> by_domain;

  nlohmann::json to_json() const;
};

// Corpus BLEU-4: geometric mean of clipped n-gram precisions times the
// brevity penalty, unsmoothed, reported on the 0-100 scale.
EvalReport corpus_bleu(const std::vector<std::string>& hypotheses,
                       const std::vector<std::string>& references);

// Adds per-domain sub-reports (Table-style breakdown); `domains` gives one
// tag per pair.
EvalReport corpus_bleu_by_domain(const std::vector<std::string>& hypotheses,
                                 const std::vector<std::string>& references,
                                 const std::vector<std::string>& domains);

// Sentence BLEU-4 with add-one smoothing on the n>=2 precisions.
double sentence_bleu(const std::string& hypothesis,
                     const std::string& reference);

// Percent of pairs equal after normalize_text and trimming, two decimals.
double exact_match(const std::vector<std::string>& hypotheses,
                   const std::vector<std::string>& references);

struct BucketRange {
  double lo = 0.0;
  double hi = 0.0;  // inclusive

  std::string label() const;
};
std::vector<BucketRange> parse_bucket_ranges(const std::string& text);

struct BucketSample {
  int index = 0;
  double score = 0.0;
  std::string bucket;
  std::string hypothesis;
  std::string reference;
};

// Scores each pair with sentence_bleu, partitions into the inclusive ranges,
// and draws per_bucket items uniformly without replacement per bucket.
std::vector<BucketSample> bucket_sample(
    const std::vector<std::string>& hypotheses,
    const std::vector<std::string>& references,
    const std::vector<BucketRange>& buckets, int per_bucket, uint64_t seed,
    std::vector<std::string>* warnings = nullptr);

// Scorer configuration line for reproducibility.
std::string scorer_signature();

double round2(double value);

}  // namespace mrsgen::eval
