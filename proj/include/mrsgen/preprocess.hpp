#pragma once

#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mrsgen/linearize.hpp"
#include "mrsgen/penman.hpp"

// Text-side pipeline: normalization, named-entity anonymization, Moses-style
// tokenization, train/test dedup, and the singleton->UNK0 policy over
// out-of-lexicon node tokens.

namespace mrsgen::preprocess {

// HTML tags removed, double-quotation variants folded to '"', wiki-style
// double brackets dropped, whitespace collapsed. Idempotent.
std::string normalize_text(const std::string& text);

struct AnonEntry {
  std::string placeholder;  // named0, month0, ...
  std::string surface;      // original surface form
  std::string category;     // named, month, day, year, number
  bool aligned = true;      // false when surface was absent from the text
};

struct AnonymizationMap {
  std::vector<AnonEntry> entries;

  const AnonEntry* find(const std::string& placeholder) const;
  bool empty() const { return entries.empty(); }
};

struct CorpusExample {
  penman::PenmanGraph graph;
  std::string text;
  std::string provenance = "gold";  // "gold" | "silver"
  std::string domain;
};

struct AnonymizationConfig {
  // Abstract predicate lemma -> placeholder category.
  std::map<std::string, std::string> predicate_category;

  static AnonymizationConfig defaults();
};

// Replaces every carg-bearing name node by a numbered placeholder, in both
// the graph and the text. Placeholders are numbered per category in
// first-mention order of the text; nodes whose surface never occurs in the
// text are still anonymized in the graph but flagged unaligned.
std::pair<CorpusExample, AnonymizationMap> anonymize(
    const CorpusExample& example,
    const AnonymizationConfig& config = AnonymizationConfig::defaults());

// Replaces map placeholders back by their surfaces; unknown placeholders
// pass through unchanged.
std::string deanonymize(const std::string& text, const AnonymizationMap& map);
std::vector<std::string> deanonymize_tokens(
    const std::vector<std::string>& tokens, const AnonymizationMap& map);

struct TokenizerConfig {
  std::set<std::string> nonbreaking_prefixes;  // "Mr", "Dr", ... (no dot)

  static TokenizerConfig defaults();
};

std::vector<std::string> tokenize(
    const std::string& text,
    const TokenizerConfig& config = TokenizerConfig::defaults());
std::string detokenize(const std::vector<std::string>& tokens);

// Drops training examples whose normalized text occurs in the test side.
std::vector<CorpusExample> dedup(const std::vector<CorpusExample>& train,
                                 const std::vector<CorpusExample>& test);

struct UnknownPolicyConfig {
  // Abstract predicates that are part of the grammar rather than raw
  // surface forms inserted for out-of-lexicon words.
  std::set<std::string> known_abstract;

  static UnknownPolicyConfig defaults();
};

// A node token is out-of-lexicon when it has neither the surface-predicate
// shape nor a known abstract form (placeholders count as known).
bool is_out_of_lexicon(const std::string& node_token,
                       const UnknownPolicyConfig& config =
                           UnknownPolicyConfig::defaults());

struct UnknownReport {
  std::map<std::string, int> frequencies;  // out-of-lexicon token counts
  std::vector<std::string> replaced;       // tokens rewritten to UNK0
  int replaced_nodes = 0;
};

inline constexpr const char* kUnknownToken = "UNK0";

// Two passes over the corpus: count out-of-lexicon node tokens, then rewrite
// singletons to UNK0. Tokens seen at least twice keep their surface form.
std::pair<std::vector<CorpusExample>, UnknownReport> apply_unknown_policy(
    const std::vector<CorpusExample>& train,
    const UnknownPolicyConfig& config = UnknownPolicyConfig::defaults());

// One pipeline record: the linearized graph plus its tokenized target side.
struct ProcessedExample {
  linearize::LinearSequence seq;
  std::vector<std::string> target;  // anonymized, tokenized text
  std::string provenance = "gold";
  std::string domain;
  AnonymizationMap map;
  std::string reference_text;  // normalized text before anonymization
};

// Raw corpus: JSON-lines with {penman, text, provenance, domain}.
struct RawRecord {
  std::string penman;
  std::string text;
  std::string provenance = "gold";
  std::string domain;
  int line = 0;
};

struct RawReadResult {
  std::vector<RawRecord> records;
  std::vector<std::pair<int, std::string>> errors;  // (line, message)
};

RawReadResult read_raw_corpus(std::istream& in);
void write_raw_corpus(std::ostream& out, const std::vector<RawRecord>& records);

// Processed corpus: JSON-lines with {linear, text, provenance, domain}.
void write_processed_corpus(std::ostream& out,
                            const std::vector<ProcessedExample>& corpus);
std::vector<ProcessedExample> read_processed_corpus(std::istream& in);

// Anonymization maps: TSV sidecar, one row per entry, grouped by a leading
// example index column.
void write_maps_tsv(std::ostream& out,
                    const std::vector<AnonymizationMap>& maps);
std::vector<AnonymizationMap> read_maps_tsv(std::istream& in);

}  // namespace mrsgen::preprocess
