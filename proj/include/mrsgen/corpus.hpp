#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "mrsgen/preprocess.hpp"

// Symbol tables, gold/silver mixing with 1:2 upsampling, and length-bucketed
// batching. A Vocabulary is immutable after construction and safe to share.

namespace mrsgen::corpus {

// Portable uniform draw in [0, n) from a seeded engine (rejection sampling,
// so results do not depend on the standard library's distributions).
uint64_t uniform_below(std::mt19937_64& rng, uint64_t n);

uint64_t fnv1a_hash(const std::string& data);

struct Vocabulary {
  // Reserved entries occupy the lowest indices of every table.
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;   // UNK0
  static constexpr int kNone = 4;  // empty-bundle sentinel
  static constexpr int kNumReserved = 5;
  static const std::array<std::string, kNumReserved>& reserved_tokens();

  struct Table {
    std::vector<std::string> tokens;  // index -> token
    std::unordered_map<std::string, int> index;

    // Total: unseen tokens map to the UNK0 index.
    int lookup(const std::string& token) const;
    const std::string& token(int id) const { return tokens[id]; }
    int size() const { return static_cast<int>(tokens.size()); }
    uint64_t content_hash() const;
    void add(const std::string& token);
  };

  Table symbols;  // source symbol stream
  Table bundles;  // attribute bundles ("" maps to the sentinel)
  Table target;   // output words

  int bundle_id(const std::string& bundle) const {
    return bundle.empty() ? kNone : bundles.lookup(bundle);
  }
};

// Source symbols and target words below min_count fall back to UNK0; every
// observed bundle is kept.
Vocabulary build_vocabulary(
    const std::vector<preprocess::ProcessedExample>& train, int min_count = 2);

// One token per line, reserved header block first; <prefix>.{symbols,
// bundles,target}.
void save_vocabulary(const Vocabulary& vocab, const std::string& prefix);
Vocabulary load_vocabulary(const std::string& prefix);

// Upsamples gold by whole copies, truncated so that gold-derived count is
// ceil(|silver| / 2), then shuffles the concatenation with the seed. Every
// silver example appears exactly once.
std::vector<preprocess::ProcessedExample> mix_gold_silver(
    const std::vector<preprocess::ProcessedExample>& gold,
    const std::vector<preprocess::ProcessedExample>& silver, uint64_t seed,
    std::string* warning = nullptr);

struct Batch {
  // rows = time steps, cols = batch lane; padded with kPad.
  Eigen::MatrixXi src_symbols;
  Eigen::MatrixXi src_bundles;
  std::vector<int> src_lengths;
  Eigen::MatrixXi target;  // includes the closing end token
  std::vector<int> tgt_lengths;
  std::vector<int> example_ids;
  std::vector<std::vector<std::string>> src_tokens;  // raw symbols per lane

  // Copy supervision per (lane, target step): source positions whose symbol
  // equals the reference token, when that token is out of the target table.
  struct CopySup {
    bool is_copy = false;
    std::vector<int> positions;
  };
  std::vector<std::vector<CopySup>> copy;

  int size() const { return static_cast<int>(src_lengths.size()); }
  int src_steps() const { return static_cast<int>(src_symbols.rows()); }
  int tgt_steps() const { return static_cast<int>(target.rows()); }
};

// Length-bucketed (stable sort by source length), then batch order shuffled
// with the seed. Every example appears in exactly one batch.
std::vector<Batch> make_batches(
    const std::vector<preprocess::ProcessedExample>& corpus,
    const Vocabulary& vocab, int batch_size, uint64_t seed);

}  // namespace mrsgen::corpus
