#include "mrsgen/eval.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "mrsgen/corpus.hpp"
#include "mrsgen/preprocess.hpp"

namespace mrsgen::eval {

namespace {

void replace_all(std::string& text, const std::string& from,
                 const std::string& to) {
  size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
}

// n-gram key: tokens joined by '\x1f'.
std::string ngram_key(const std::vector<std::string>& tokens, size_t start,
                      size_t n) {
  std::string key;
  for (size_t i = 0; i < n; ++i) {
    if (i > 0) key += '\x1f';
    key += tokens[start + i];
  }
  return key;
}

struct PairCounts {
  std::array<long long, 4> match{};
  std::array<long long, 4> total{};
  long long hyp_len = 0;
  long long ref_len = 0;
};

PairCounts count_ngrams(const std::vector<std::string>& hyp,
                        const std::vector<std::string>& ref) {
  PairCounts counts;
  counts.hyp_len = static_cast<long long>(hyp.size());
  counts.ref_len = static_cast<long long>(ref.size());
  for (size_t n = 1; n <= 4; ++n) {
    if (hyp.size() < n) break;
    std::unordered_map<std::string, long long> ref_grams;
    if (ref.size() >= n) {
      for (size_t i = 0; i + n <= ref.size(); ++i) {
        ++ref_grams[ngram_key(ref, i, n)];
      }
    }
    std::unordered_map<std::string, long long> hyp_grams;
    for (size_t i = 0; i + n <= hyp.size(); ++i) {
      ++hyp_grams[ngram_key(hyp, i, n)];
    }
    for (const auto& [gram, count] : hyp_grams) {
      counts.total[n - 1] += count;
      auto it = ref_grams.find(gram);
      if (it != ref_grams.end()) {
        counts.match[n - 1] += std::min(count, it->second);
      }
    }
  }
  return counts;
}

EvalReport report_from_counts(const PairCounts& counts, long long pairs) {
  EvalReport report;
  report.pairs = pairs;
  report.hyp_len = counts.hyp_len;
  report.ref_len = counts.ref_len;
  report.match_counts = counts.match;
  report.total_counts = counts.total;

  double log_sum = 0.0;
  bool zero = false;
  for (int n = 0; n < 4; ++n) {
    double p = counts.total[n] > 0
                   ? static_cast<double>(counts.match[n]) / counts.total[n]
                   : 0.0;
    report.precisions[n] = p;
    if (p <= 0.0) {
      zero = true;
    } else {
      log_sum += std::log(p) / 4.0;
    }
  }
  if (counts.hyp_len >= counts.ref_len || counts.hyp_len == 0) {
    report.brevity_penalty = counts.hyp_len == 0 ? 0.0 : 1.0;
  } else {
    report.brevity_penalty =
        std::exp(1.0 - static_cast<double>(counts.ref_len) / counts.hyp_len);
  }
  report.bleu = zero ? 0.0 : 100.0 * report.brevity_penalty * std::exp(log_sum);
  return report;
}

}  // namespace

std::vector<std::string> bleu_tokenize(const std::string& text) {
  std::string line = text;
  replace_all(line, "<skipped>", "");
  replace_all(line, "-\n", "");
  replace_all(line, "\n", " ");
  replace_all(line, "&quot;", "\"");
  replace_all(line, "&amp;", "&");
  replace_all(line, "&lt;", "<");
  replace_all(line, "&gt;", ">");

  // mteval-v13a tokenization regexes.
  static const std::regex kPunct(R"(([\{-\~\[-\` -\&\(-\+\:-\@\/]))");
  static const std::regex kPeriodCommaBefore(R"(([^0-9])([\.,]))");
  static const std::regex kPeriodCommaAfter(R"(([\.,])([^0-9]))");
  static const std::regex kDashAfterDigit(R"(([0-9])(-))");

  line = " " + line + " ";
  line = std::regex_replace(line, kPunct, " $1 ");
  line = std::regex_replace(line, kPeriodCommaBefore, "$1 $2 ");
  line = std::regex_replace(line, kPeriodCommaAfter, " $1 $2");
  line = std::regex_replace(line, kDashAfterDigit, "$1 $2 ");

  std::vector<std::string> tokens;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j{
      {"bleu", round2(bleu)},
      {"precisions",
       {round2(100 * precisions[0]), round2(100 * precisions[1]),
        round2(100 * precisions[2]), round2(100 * precisions[3])}},
      {"match_counts", match_counts},
      {"total_counts", total_counts},
      {"brevity_penalty", brevity_penalty},
      {"hyp_len", hyp_len},
      {"ref_len", ref_len},
      {"pairs", pairs},
  };
  if (exact_match >= 0) j["exact_match"] = round2(exact_match);
  if (!by_domain.empty()) {
    nlohmann::json domains = nlohmann::json::object();
    for (const auto& [tag, sub] : by_domain) {
      domains[tag] = sub.to_json();
    }
    j["domains"] = domains;
  }
  return j;
}

EvalReport corpus_bleu(const std::vector<std::string>& hypotheses,
                       const std::vector<std::string>& references) {
  if (hypotheses.size() != references.size()) {
    throw std::invalid_argument("hypothesis/reference count mismatch");
  }
  if (hypotheses.empty()) throw std::invalid_argument("empty corpus");
  PairCounts totals;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    PairCounts c = count_ngrams(bleu_tokenize(hypotheses[i]),
                                bleu_tokenize(references[i]));
    for (int n = 0; n < 4; ++n) {
      totals.match[n] += c.match[n];
      totals.total[n] += c.total[n];
    }
    totals.hyp_len += c.hyp_len;
    totals.ref_len += c.ref_len;
  }
  return report_from_counts(totals, static_cast<long long>(hypotheses.size()));
}

EvalReport corpus_bleu_by_domain(const std::vector<std::string>& hypotheses,
                                 const std::vector<std::string>& references,
                                 const std::vector<std::string>& domains) {
  if (domains.size() != hypotheses.size()) {
    throw std::invalid_argument("domain tag count mismatch");
  }
  EvalReport report = corpus_bleu(hypotheses, references);
  std::map<std::string, std::pair<std::vector<std::string>,
                                  std::vector<std::string>>> split;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    split[domains[i]].first.push_back(hypotheses[i]);
    split[domains[i]].second.push_back(references[i]);
  }
  for (const auto& [tag, pair] : split) {
    report.by_domain[tag] = corpus_bleu(pair.first, pair.second);
  }
  return report;
}

double sentence_bleu(const std::string& hypothesis,
                     const std::string& reference) {
  PairCounts c =
      count_ngrams(bleu_tokenize(hypothesis), bleu_tokenize(reference));
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    double match = static_cast<double>(c.match[n]);
    double total = static_cast<double>(c.total[n]);
    if (n > 0) {
      match += 1.0;
      total += 1.0;
    }
    double p = total > 0 ? match / total : 0.0;
    if (p <= 0.0) return 0.0;
    log_sum += std::log(p) / 4.0;
  }
  double bp = 1.0;
  if (c.hyp_len == 0) return 0.0;
  if (c.hyp_len < c.ref_len) {
    bp = std::exp(1.0 - static_cast<double>(c.ref_len) / c.hyp_len);
  }
  return 100.0 * bp * std::exp(log_sum);
}

double exact_match(const std::vector<std::string>& hypotheses,
                   const std::vector<std::string>& references) {
  if (hypotheses.size() != references.size()) {
    throw std::invalid_argument("hypothesis/reference count mismatch");
  }
  if (hypotheses.empty()) return 0.0;
  long long hits = 0;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    hits += preprocess::normalize_text(hypotheses[i]) ==
            preprocess::normalize_text(references[i]);
  }
  return 100.0 * static_cast<double>(hits) / hypotheses.size();
}

std::string BucketRange::label() const {
  auto fmt = [](double v) {
    std::ostringstream out;
    if (v == static_cast<long long>(v)) {
      out << static_cast<long long>(v);
    } else {
      out << v;
    }
    return out.str();
  };
  return fmt(lo) + "-" + fmt(hi);
}

std::vector<BucketRange> parse_bucket_ranges(const std::string& text) {
  std::vector<BucketRange> ranges;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    size_t dash = item.find('-');
    if (dash == std::string::npos) {
      throw std::invalid_argument("bucket range must be lo-hi: " + item);
    }
    BucketRange r;
    r.lo = std::stod(item.substr(0, dash));
    r.hi = std::stod(item.substr(dash + 1));
    if (r.hi < r.lo) throw std::invalid_argument("empty bucket range: " + item);
    ranges.push_back(r);
  }
  return ranges;
}

std::vector<BucketSample> bucket_sample(
    const std::vector<std::string>& hypotheses,
    const std::vector<std::string>& references,
    const std::vector<BucketRange>& buckets, int per_bucket, uint64_t seed,
    std::vector<std::string>* warnings) {
  if (hypotheses.size() != references.size()) {
    throw std::invalid_argument("hypothesis/reference count mismatch");
  }
  if (per_bucket < 1) throw std::invalid_argument("per_bucket must be >= 1");

  std::vector<double> scores(hypotheses.size());
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    scores[i] = sentence_bleu(hypotheses[i], references[i]);
  }

  std::mt19937_64 rng(seed);
  std::vector<BucketSample> samples;
  for (const BucketRange& bucket : buckets) {
    std::vector<int> members;
    for (size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= bucket.lo && scores[i] <= bucket.hi) {
        members.push_back(static_cast<int>(i));
      }
    }
    if (static_cast<int>(members.size()) < per_bucket && warnings) {
      warnings->push_back("bucket " + bucket.label() + " has only " +
                          std::to_string(members.size()) + " of " +
                          std::to_string(per_bucket) + " requested items");
    }
    int take = std::min<int>(per_bucket, static_cast<int>(members.size()));
    // Partial Fisher-Yates: the first `take` entries are a uniform sample.
    for (int i = 0; i < take; ++i) {
      size_t j = i + corpus::uniform_below(rng, members.size() - i);
      std::swap(members[i], members[j]);
    }
    std::vector<int> chosen(members.begin(), members.begin() + take);
    std::sort(chosen.begin(), chosen.end());
    for (int idx : chosen) {
      samples.push_back({idx, scores[idx], bucket.label(), hypotheses[idx],
                         references[idx]});
    }
  }
  return samples;
}

std::string scorer_signature() {
  return "bleu4|case:sensitive|tok:13a|corpus-smooth:none|"
         "sentence-smooth:add1(n>=2)|version:1";
}

double round2(double value) { return std::round(value * 100.0) / 100.0; }

}  // namespace mrsgen::eval
