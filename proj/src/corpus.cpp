#include "mrsgen/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace mrsgen::corpus {

uint64_t uniform_below(std::mt19937_64& rng, uint64_t n) {
  if (n <= 1) return 0;
  uint64_t limit = std::numeric_limits<uint64_t>::max() -
                   std::numeric_limits<uint64_t>::max() % n;
  uint64_t draw;
  do {
    draw = rng();
  } while (draw >= limit);
  return draw % n;
}

uint64_t fnv1a_hash(const std::string& data) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

const std::array<std::string, Vocabulary::kNumReserved>&
Vocabulary::reserved_tokens() {
  static const std::array<std::string, kNumReserved> kTokens = {
      "<pad>", "<s>", "</s>", "UNK0", "<none>"};
  return kTokens;
}

int Vocabulary::Table::lookup(const std::string& token) const {
  auto it = index.find(token);
  return it == index.end() ? kUnk : it->second;
}

uint64_t Vocabulary::Table::content_hash() const {
  std::string joined;
  for (const std::string& tok : tokens) {
    joined += tok;
    joined += '\n';
  }
  return fnv1a_hash(joined);
}

void Vocabulary::Table::add(const std::string& token) {
  if (index.emplace(token, static_cast<int>(tokens.size())).second) {
    tokens.push_back(token);
  }
}

namespace {

Vocabulary::Table make_table(const std::unordered_map<std::string, int>& freq,
                             int min_count) {
  Vocabulary::Table table;
  for (const std::string& tok : Vocabulary::reserved_tokens()) table.add(tok);
  std::vector<std::pair<std::string, int>> entries(freq.begin(), freq.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& [tok, count] : entries) {
    if (count >= min_count && !table.index.count(tok)) table.add(tok);
  }
  return table;
}

}  // namespace

Vocabulary build_vocabulary(
    const std::vector<preprocess::ProcessedExample>& train, int min_count) {
  if (train.empty()) throw std::invalid_argument("empty training corpus");
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");

  std::unordered_map<std::string, int> sym_freq, bnd_freq, tgt_freq;
  for (const preprocess::ProcessedExample& ex : train) {
    for (const std::string& sym : ex.seq.symbols) ++sym_freq[sym];
    for (const std::string& bnd : ex.seq.attributes) {
      if (!bnd.empty()) ++bnd_freq[bnd];
    }
    for (const std::string& word : ex.target) ++tgt_freq[word];
  }
  Vocabulary vocab;
  vocab.symbols = make_table(sym_freq, min_count);
  vocab.bundles = make_table(bnd_freq, 1);  // every observed bundle
  vocab.target = make_table(tgt_freq, min_count);
  return vocab;
}

namespace {

void save_table(const Vocabulary::Table& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const std::string& tok : table.tokens) out << tok << '\n';
}

Vocabulary::Table load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  Vocabulary::Table table;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    table.add(line);
  }
  const auto& reserved = Vocabulary::reserved_tokens();
  for (int i = 0; i < Vocabulary::kNumReserved; ++i) {
    if (table.size() <= i || table.tokens[i] != reserved[i]) {
      throw std::runtime_error(path + ": missing reserved token header");
    }
  }
  return table;
}

}  // namespace

void save_vocabulary(const Vocabulary& vocab, const std::string& prefix) {
  save_table(vocab.symbols, prefix + ".symbols");
  save_table(vocab.bundles, prefix + ".bundles");
  save_table(vocab.target, prefix + ".target");
}

Vocabulary load_vocabulary(const std::string& prefix) {
  Vocabulary vocab;
  vocab.symbols = load_table(prefix + ".symbols");
  vocab.bundles = load_table(prefix + ".bundles");
  vocab.target = load_table(prefix + ".target");
  return vocab;
}

std::vector<preprocess::ProcessedExample> mix_gold_silver(
    const std::vector<preprocess::ProcessedExample>& gold,
    const std::vector<preprocess::ProcessedExample>& silver, uint64_t seed,
    std::string* warning) {
  if (silver.empty()) {
    if (warning) *warning = "no silver examples; using gold unchanged";
    return gold;
  }
  if (gold.empty()) {
    if (warning) *warning = "no gold examples; training on silver alone";
    return silver;
  }
  size_t want_gold = (silver.size() + 1) / 2;  // ceil(|silver| / 2)
  size_t copies = (want_gold + gold.size() - 1) / gold.size();
  std::vector<preprocess::ProcessedExample> mixed;
  mixed.reserve(want_gold + silver.size());
  for (size_t c = 0; c < copies && mixed.size() < want_gold; ++c) {
    for (size_t i = 0; i < gold.size() && mixed.size() < want_gold; ++i) {
      mixed.push_back(gold[i]);
    }
  }
  mixed.insert(mixed.end(), silver.begin(), silver.end());

  std::mt19937_64 rng(seed);
  for (size_t i = mixed.size(); i > 1; --i) {
    size_t j = uniform_below(rng, i);
    std::swap(mixed[i - 1], mixed[j]);
  }
  return mixed;
}

std::vector<Batch> make_batches(
    const std::vector<preprocess::ProcessedExample>& corpus,
    const Vocabulary& vocab, int batch_size, uint64_t seed) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<int> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return corpus[a].seq.size() < corpus[b].seq.size();
  });

  std::vector<std::vector<int>> groups;
  for (size_t start = 0; start < order.size();
       start += static_cast<size_t>(batch_size)) {
    size_t end = std::min(order.size(), start + batch_size);
    groups.emplace_back(order.begin() + start, order.begin() + end);
  }
  std::mt19937_64 rng(seed);
  for (size_t i = groups.size(); i > 1; --i) {
    std::swap(groups[i - 1], groups[uniform_below(rng, i)]);
  }

  std::vector<Batch> batches;
  batches.reserve(groups.size());
  for (const std::vector<int>& group : groups) {
    Batch batch;
    int n = static_cast<int>(group.size());
    int max_src = 0, max_tgt = 0;
    for (int id : group) {
      max_src = std::max(max_src, static_cast<int>(corpus[id].seq.size()));
      max_tgt = std::max(max_tgt, static_cast<int>(corpus[id].target.size()) + 1);
    }
    batch.src_symbols = Eigen::MatrixXi::Constant(max_src, n, Vocabulary::kPad);
    batch.src_bundles = Eigen::MatrixXi::Constant(max_src, n, Vocabulary::kPad);
    batch.target = Eigen::MatrixXi::Constant(max_tgt, n, Vocabulary::kPad);
    batch.copy.resize(n);
    for (int lane = 0; lane < n; ++lane) {
      const preprocess::ProcessedExample& ex = corpus[group[lane]];
      batch.example_ids.push_back(group[lane]);
      batch.src_lengths.push_back(static_cast<int>(ex.seq.size()));
      batch.tgt_lengths.push_back(static_cast<int>(ex.target.size()) + 1);
      batch.src_tokens.push_back(ex.seq.symbols);
      for (size_t t = 0; t < ex.seq.size(); ++t) {
        batch.src_symbols(t, lane) = vocab.symbols.lookup(ex.seq.symbols[t]);
        batch.src_bundles(t, lane) = vocab.bundle_id(ex.seq.attributes[t]);
      }
      batch.copy[lane].resize(max_tgt);
      for (size_t t = 0; t < ex.target.size(); ++t) {
        const std::string& word = ex.target[t];
        int id = vocab.target.lookup(word);
        batch.target(t, lane) = id;
        bool oov = id == Vocabulary::kUnk && word != Vocabulary::reserved_tokens()[Vocabulary::kUnk];
        if (oov) {
          Batch::CopySup& sup = batch.copy[lane][t];
          for (size_t s = 0; s < ex.seq.symbols.size(); ++s) {
            if (ex.seq.symbols[s] == word) {
              sup.positions.push_back(static_cast<int>(s));
            }
          }
          sup.is_copy = !sup.positions.empty();
        }
      }
      batch.target(ex.target.size(), lane) = Vocabulary::kEos;
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace mrsgen::corpus
