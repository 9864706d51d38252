#include <algorithm>
#include <cctype>
#include <cmath>
#include <iostream>

#include "mrsgen/model.hpp"

namespace mrsgen::model {

namespace {

double log_prob(double p) {
  return std::log(std::max(1e-30, std::min(1.0, p)));
}

double length_normalized(double logp, size_t emitted) {
  return logp / static_cast<double>(std::max<size_t>(1, emitted));
}

bool looks_like_placeholder(const std::string& tok) {
  size_t i = 0;
  while (i < tok.size() && std::islower(static_cast<unsigned char>(tok[i]))) {
    ++i;
  }
  if (i == 0 || i == tok.size()) return false;
  for (size_t j = i; j < tok.size(); ++j) {
    if (!std::isdigit(static_cast<unsigned char>(tok[j]))) return false;
  }
  return true;
}

}  // namespace

std::vector<Hypothesis> Seq2Seq::beam_search(
    const linearize::LinearSequence& seq, int width, int max_len) const {
  if (width < 1) throw std::invalid_argument("beam width must be >= 1");
  EncoderOutput enc = encode_sequence(seq);

  struct Item {
    DecodeState state;
    int prev_id = corpus::Vocabulary::kBos;
    double logp = 0.0;
    std::vector<std::string> tokens;
    std::vector<int> copy_positions;
  };
  struct Candidate {
    int item = 0;
    double logp = 0.0;
    std::string token;
    int target_id = 0;   // decoder input for the next step
    int copy_pos = -1;   // source position, -1 when generated
    bool ends = false;   // generated the end token
  };

  std::vector<Item> beam(1);
  beam[0].state = initial_state(enc);
  std::vector<Hypothesis> completed;

  for (int step = 0; step < max_len && !beam.empty(); ++step) {
    std::vector<Candidate> candidates;
    std::vector<DecodeState> next_states(beam.size());
    for (size_t b = 0; b < beam.size(); ++b) {
      DecodeState state = beam[b].state;
      DecoderStep out = decode_step(beam[b].prev_id, state, enc);
      next_states[b] = std::move(state);

      std::vector<Candidate> local;
      if (hp_.use_copy && out.gate > 0.5) {
        // Copy step: candidates are source positions.
        for (int pos = 0; pos < enc.valid_length; ++pos) {
          const std::string& tok = seq.symbols[pos];
          Candidate cand;
          cand.item = static_cast<int>(b);
          cand.logp = beam[b].logp + log_prob(out.gate * out.pointer(pos));
          cand.token = tok;
          cand.target_id = vocab_.target.lookup(tok);
          cand.copy_pos = pos;
          local.push_back(std::move(cand));
        }
      } else {
        double keep = hp_.use_copy ? 1.0 - out.gate : 1.0;
        for (int id = 0; id < out.generation.size(); ++id) {
          if (id == corpus::Vocabulary::kPad || id == corpus::Vocabulary::kBos ||
              id == corpus::Vocabulary::kNone) {
            continue;
          }
          Candidate cand;
          cand.item = static_cast<int>(b);
          cand.logp = beam[b].logp + log_prob(keep * out.generation(id));
          cand.token = vocab_.target.token(id);
          cand.target_id = id;
          cand.ends = id == corpus::Vocabulary::kEos;
          local.push_back(std::move(cand));
        }
      }
      size_t keep_n = std::min<size_t>(local.size(), static_cast<size_t>(width));
      std::partial_sort(local.begin(), local.begin() + keep_n, local.end(),
                        [](const Candidate& a, const Candidate& b) {
                          return a.logp > b.logp;
                        });
      local.resize(keep_n);
      for (Candidate& cand : local) candidates.push_back(std::move(cand));
    }

    size_t take = std::min<size_t>(candidates.size(), static_cast<size_t>(width));
    std::partial_sort(
        candidates.begin(), candidates.begin() + take, candidates.end(),
        [](const Candidate& a, const Candidate& b) { return a.logp > b.logp; });
    candidates.resize(take);

    std::vector<Item> next_beam;
    for (const Candidate& cand : candidates) {
      const Item& parent = beam[cand.item];
      if (cand.ends) {
        Hypothesis hyp;
        hyp.tokens = parent.tokens;
        hyp.copy_positions = parent.copy_positions;
        hyp.log_prob = cand.logp;
        hyp.score = length_normalized(cand.logp, parent.tokens.size() + 1);
        completed.push_back(std::move(hyp));
        continue;
      }
      Item item;
      item.state = next_states[cand.item];
      item.prev_id = cand.target_id;
      item.logp = cand.logp;
      item.tokens = parent.tokens;
      item.tokens.push_back(cand.token);
      item.copy_positions = parent.copy_positions;
      item.copy_positions.push_back(cand.copy_pos);
      next_beam.push_back(std::move(item));
    }
    beam = std::move(next_beam);
  }

  // Length bound reached: surface what is left so the caller always gets
  // `width`-many ranked hypotheses when possible.
  for (const Item& item : beam) {
    Hypothesis hyp;
    hyp.tokens = item.tokens;
    hyp.copy_positions = item.copy_positions;
    hyp.log_prob = item.logp;
    hyp.score = length_normalized(item.logp, item.tokens.size() + 1);
    completed.push_back(std::move(hyp));
  }
  std::stable_sort(completed.begin(), completed.end(),
                   [](const Hypothesis& a, const Hypothesis& b) {
                     return a.score > b.score;
                   });
  if (completed.size() > static_cast<size_t>(width)) {
    completed.resize(static_cast<size_t>(width));
  }
  return completed;
}

std::vector<std::string> generate(
    const Seq2Seq& model,
    const std::vector<preprocess::ProcessedExample>& inputs,
    const GenerateOptions& options) {
  std::vector<std::string> outputs;
  outputs.reserve(inputs.size());
  for (const preprocess::ProcessedExample& ex : inputs) {
    std::vector<Hypothesis> hyps =
        model.beam_search(ex.seq, options.beam_width, options.max_len);
    std::vector<std::string> tokens;
    if (!hyps.empty()) tokens = hyps.front().tokens;

    if (ex.map.empty() && !options.quiet) {
      for (const std::string& tok : tokens) {
        if (looks_like_placeholder(tok)) {
          std::cerr << "warning: no anonymization map; placeholder '" << tok
                    << "' passed through\n";
          break;
        }
      }
    }
    tokens = preprocess::deanonymize_tokens(tokens, ex.map);
    outputs.push_back(preprocess::detokenize(tokens));
  }
  return outputs;
}

}  // namespace mrsgen::model
