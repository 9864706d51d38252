#include "mrsgen/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <istream>
#include <ostream>
#include <regex>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace mrsgen::preprocess {

namespace {

void replace_all(std::string& text, const std::string& from,
                 const std::string& to) {
  size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

// Occurrence bounded by non-word characters (or string edges).
size_t find_bounded(const std::string& text, const std::string& needle,
                    size_t from) {
  if (needle.empty()) return std::string::npos;
  size_t pos = from;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
    size_t end = pos + needle.size();
    bool right_ok = end >= text.size() || !is_word_char(text[end]);
    if (left_ok && right_ok) return pos;
    ++pos;
  }
  return std::string::npos;
}

int replace_bounded(std::string& text, const std::string& needle,
                    const std::string& replacement) {
  int count = 0;
  size_t pos = 0;
  while ((pos = find_bounded(text, needle, pos)) != std::string::npos) {
    text.replace(pos, needle.size(), replacement);
    pos += replacement.size();
    ++count;
  }
  return count;
}

const char* kLeadingPunct = "\"([{";
const char* kTrailingPunct = "\")]},.!?;:%";

}  // namespace

std::string normalize_text(const std::string& text) {
  static const std::regex kTag("</?[A-Za-z][^<>]*>");
  std::string out = std::regex_replace(text, kTag, "");
  replace_all(out, "''", "\"");
  replace_all(out, "``", "\"");
  replace_all(out, "\xE2\x80\x9C", "\"");  // left curly double quote
  replace_all(out, "\xE2\x80\x9D", "\"");  // right curly double quote
  replace_all(out, "[[", "");
  replace_all(out, "]]", "");

  std::string squeezed;
  squeezed.reserve(out.size());
  bool in_space = false;
  for (char c : out) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
      continue;
    }
    if (in_space && !squeezed.empty()) squeezed += ' ';
    in_space = false;
    squeezed += c;
  }
  return squeezed;
}

const AnonEntry* AnonymizationMap::find(const std::string& placeholder) const {
  for (const AnonEntry& e : entries) {
    if (e.placeholder == placeholder) return &e;
  }
  return nullptr;
}

AnonymizationConfig AnonymizationConfig::defaults() {
  AnonymizationConfig c;
  c.predicate_category = {{"named", "named"}, {"mofy", "month"},
                          {"dofw", "day"},    {"dofm", "day"},
                          {"yofc", "year"},   {"card", "number"},
                          {"ord", "number"}};
  return c;
}

std::pair<CorpusExample, AnonymizationMap> anonymize(
    const CorpusExample& example, const AnonymizationConfig& config) {
  CorpusExample out = example;
  AnonymizationMap map;

  struct Target {
    int node;
    std::string surface;
    std::string category;
    size_t first_pos;  // in the original text, npos when absent
  };
  std::vector<Target> targets;
  for (size_t i = 0; i < out.graph.nodes.size(); ++i) {
    const penman::PenmanNode& node = out.graph.nodes[i];
    if (!node.carg) continue;
    auto it = config.predicate_category.find(node.label);
    if (it == config.predicate_category.end()) continue;
    size_t pos = find_bounded(out.text, *node.carg, 0);
    targets.push_back({static_cast<int>(i), *node.carg, it->second, pos});
  }
  // Aligned mentions first, ordered by their position in the text; longer
  // surfaces first on ties so substrings of other names survive.
  std::stable_sort(targets.begin(), targets.end(),
                   [](const Target& a, const Target& b) {
                     if (a.first_pos != b.first_pos)
                       return a.first_pos < b.first_pos;
                     return a.surface.size() > b.surface.size();
                   });

  std::map<std::string, int> next_index;
  for (const Target& t : targets) {
    std::string placeholder =
        t.category + std::to_string(next_index[t.category]++);
    penman::PenmanNode& node = out.graph.nodes[t.node];
    node.label = placeholder;
    node.carg.reset();
    int replaced = replace_bounded(out.text, t.surface, placeholder);
    map.entries.push_back({placeholder, t.surface, t.category, replaced > 0});
  }
  return {out, map};
}

std::string deanonymize(const std::string& text, const AnonymizationMap& map) {
  std::string out = text;
  for (const AnonEntry& e : map.entries) {
    replace_bounded(out, e.placeholder, e.surface);
  }
  return out;
}

std::vector<std::string> deanonymize_tokens(
    const std::vector<std::string>& tokens, const AnonymizationMap& map) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const std::string& tok : tokens) {
    const AnonEntry* entry = map.find(tok);
    out.push_back(entry ? entry->surface : tok);
  }
  return out;
}

TokenizerConfig TokenizerConfig::defaults() {
  TokenizerConfig c;
  c.nonbreaking_prefixes = {"Mr",  "Mrs", "Ms",  "Dr",  "Prof", "St",
                            "Jr",  "Sr",  "vs",  "etc", "Inc",  "Ltd",
                            "Co",  "Corp", "No", "Gen", "Sen",  "Rep"};
  return c;
}

std::vector<std::string> tokenize(const std::string& text,
                                  const TokenizerConfig& config) {
  std::vector<std::string> tokens;

  auto split_core = [&](const std::string& core) {
    // Contractions: the apostrophe stays with the suffix (I'd -> I 'd).
    std::string rest = core;
    while (true) {
      size_t cut = std::string::npos;
      for (size_t i = 1; i + 1 < rest.size(); ++i) {
        if (rest[i] == '\'' &&
            std::isalpha(static_cast<unsigned char>(rest[i - 1])) &&
            std::isalpha(static_cast<unsigned char>(rest[i + 1]))) {
          cut = i;
          break;
        }
      }
      if (cut == std::string::npos) break;
      tokens.push_back(rest.substr(0, cut));
      rest = rest.substr(cut);
    }
    if (!rest.empty()) tokens.push_back(rest);
  };

  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    std::vector<std::string> lead;
    while (!word.empty() &&
           std::strchr(kLeadingPunct, word.front()) != nullptr) {
      lead.push_back(std::string(1, word.front()));
      word.erase(word.begin());
    }
    std::vector<std::string> trail;
    while (!word.empty() &&
           std::strchr(kTrailingPunct, word.back()) != nullptr) {
      char c = word.back();
      std::string core = word.substr(0, word.size() - 1);
      if (c == '.') {
        // Keep abbreviation periods attached (Mr., U.S.).
        if (config.nonbreaking_prefixes.count(core) ||
            core.find('.') != std::string::npos) {
          break;
        }
      }
      if (word.size() == 1) break;  // bare punctuation token
      trail.push_back(std::string(1, c));
      word.pop_back();
    }
    for (auto& t : lead) tokens.push_back(std::move(t));
    if (!word.empty()) split_core(word);
    for (auto it = trail.rbegin(); it != trail.rend(); ++it) {
      tokens.push_back(std::move(*it));
    }
  }
  return tokens;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  static const std::unordered_set<std::string> kAttachLeft = {
      ".", ",", "!", "?", ";", ":", ")", "]", "}", "%"};
  static const std::unordered_set<std::string> kAttachRight = {"(", "[", "{"};

  std::string out;
  bool suppress_space = true;  // no space before the first token
  bool quote_open = false;
  for (const std::string& tok : tokens) {
    bool attach_left =
        kAttachLeft.count(tok) > 0 ||
        (tok.size() >= 2 && tok[0] == '\'' &&
         std::isalpha(static_cast<unsigned char>(tok[1])));
    if (tok == "\"") attach_left = quote_open;
    if (!out.empty() && !attach_left && !suppress_space) out += ' ';
    out += tok;
    suppress_space = kAttachRight.count(tok) > 0;
    if (tok == "\"") {
      suppress_space = !quote_open;
      quote_open = !quote_open;
    }
  }
  return out;
}

std::vector<CorpusExample> dedup(const std::vector<CorpusExample>& train,
                                 const std::vector<CorpusExample>& test) {
  std::unordered_set<std::string> test_texts;
  for (const CorpusExample& e : test) {
    test_texts.insert(normalize_text(e.text));
  }
  std::vector<CorpusExample> kept;
  kept.reserve(train.size());
  for (const CorpusExample& e : train) {
    if (!test_texts.count(normalize_text(e.text))) kept.push_back(e);
  }
  return kept;
}

UnknownPolicyConfig UnknownPolicyConfig::defaults() {
  UnknownPolicyConfig c;
  c.known_abstract = {"named",  "pron",  "card", "ord",    "compound",
                      "neg",    "person", "thing", "time",  "place",
                      "reason", "season", "unknown"};
  return c;
}

bool is_out_of_lexicon(const std::string& node_token,
                       const UnknownPolicyConfig& config) {
  if (node_token.empty()) return false;
  if (node_token[0] == '_') return false;  // surface predicate shape
  if (node_token.find('_') != std::string::npos) return false;  // abstract
  if (node_token == kUnknownToken) return false;
  if (config.known_abstract.count(node_token)) return false;
  // Placeholder shape: lowercase letters followed by digits (named0).
  size_t i = 0;
  while (i < node_token.size() &&
         std::islower(static_cast<unsigned char>(node_token[i]))) {
    ++i;
  }
  if (i > 0 && i < node_token.size()) {
    size_t j = i;
    while (j < node_token.size() &&
           std::isdigit(static_cast<unsigned char>(node_token[j]))) {
      ++j;
    }
    if (j == node_token.size()) return false;
  }
  return true;
}

std::pair<std::vector<CorpusExample>, UnknownReport> apply_unknown_policy(
    const std::vector<CorpusExample>& train,
    const UnknownPolicyConfig& config) {
  UnknownReport report;
  for (const CorpusExample& e : train) {
    for (const penman::PenmanNode& node : e.graph.nodes) {
      if (is_out_of_lexicon(node.label, config)) {
        ++report.frequencies[node.label];
      }
    }
  }
  std::vector<CorpusExample> out = train;
  for (CorpusExample& e : out) {
    for (penman::PenmanNode& node : e.graph.nodes) {
      auto it = report.frequencies.find(node.label);
      if (it != report.frequencies.end() && it->second == 1) {
        node.label = kUnknownToken;
        ++report.replaced_nodes;
      }
    }
  }
  for (const auto& [token, count] : report.frequencies) {
    if (count == 1) report.replaced.push_back(token);
  }
  return {out, report};
}

RawReadResult read_raw_corpus(std::istream& in) {
  RawReadResult result;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      RawRecord rec;
      rec.penman = j.at("penman").get<std::string>();
      rec.text = j.at("text").get<std::string>();
      rec.provenance = j.value("provenance", std::string("gold"));
      rec.domain = j.value("domain", std::string());
      rec.line = lineno;
      result.records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      result.errors.emplace_back(lineno, e.what());
    }
  }
  return result;
}

void write_raw_corpus(std::ostream& out,
                      const std::vector<RawRecord>& records) {
  for (const RawRecord& rec : records) {
    nlohmann::json j{{"penman", rec.penman},
                     {"text", rec.text},
                     {"provenance", rec.provenance},
                     {"domain", rec.domain}};
    out << j.dump() << '\n';
  }
}

void write_processed_corpus(std::ostream& out,
                            const std::vector<ProcessedExample>& corpus) {
  for (const ProcessedExample& ex : corpus) {
    std::string text;
    for (size_t i = 0; i < ex.target.size(); ++i) {
      if (i > 0) text += ' ';
      text += ex.target[i];
    }
    nlohmann::json j{{"linear", ex.seq.to_flat_string()},
                     {"text", text},
                     {"provenance", ex.provenance},
                     {"domain", ex.domain}};
    out << j.dump() << '\n';
  }
}

std::vector<ProcessedExample> read_processed_corpus(std::istream& in) {
  std::vector<ProcessedExample> corpus;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("line " + std::to_string(lineno) + ": " +
                               e.what());
    }
    ProcessedExample ex;
    ex.seq = linearize::LinearSequence::from_flat_string(
        j.at("linear").get<std::string>());
    std::istringstream words(j.at("text").get<std::string>());
    std::string w;
    while (words >> w) ex.target.push_back(w);
    ex.provenance = j.value("provenance", std::string("gold"));
    ex.domain = j.value("domain", std::string());
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

void write_maps_tsv(std::ostream& out,
                    const std::vector<AnonymizationMap>& maps) {
  for (size_t i = 0; i < maps.size(); ++i) {
    for (const AnonEntry& e : maps[i].entries) {
      out << i << '\t' << e.placeholder << '\t' << e.surface << '\t'
          << e.category << '\n';
    }
  }
}

std::vector<AnonymizationMap> read_maps_tsv(std::istream& in) {
  std::vector<AnonymizationMap> maps;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
      size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) {
      throw std::runtime_error("malformed maps row: " + line);
    }
    size_t index = std::stoul(fields[0]);
    if (maps.size() <= index) maps.resize(index + 1);
    maps[index].entries.push_back({fields[1], fields[2], fields[3], true});
  }
  return maps;
}

}  // namespace mrsgen::preprocess
