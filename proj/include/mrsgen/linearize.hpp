#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "mrsgen/penman.hpp"

// Flat token-sequence form of a graph: identifiers removed, attributes
// concatenated into bundle tokens, depth-first tree structure kept as
// parentheses. This is the representation the generator consumes.

namespace mrsgen::linearize {

struct LinearizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Two aligned streams: `symbols` holds predicates, role labels, and
// parentheses; `attributes` holds the rendered bundle for predicate
// positions ("" everywhere else and for attribute-free predicates).
struct LinearSequence {
  std::vector<std::string> symbols;
  std::vector<std::string> attributes;

  // Space-joined symbols with each non-empty bundle inserted directly after
  // its predicate.
  std::string to_flat_string() const;
  static LinearSequence from_flat_string(const std::string& line);

  size_t size() const { return symbols.size(); }
};

// `( predicate [bundle] role ( ... ) ... )` following the spanning tree;
// inverted edges emit `ROLE-of`; a reentrant edge re-emits the target's
// predicate token as `role ( predicate )` without descending again. cargs
// are not carried (anonymize replaces name nodes before this step).
LinearSequence linearize(const penman::PenmanGraph& graph);

// Inverse for tree-shaped sequences: fresh identifiers in definition order,
// `-of` roles reversed back into stored direction.
penman::PenmanGraph delinearize(const LinearSequence& seq);

// One example per line, flat format.
std::vector<LinearSequence> read_linear_corpus(std::istream& in);
void write_linear_corpus(std::ostream& out,
                         const std::vector<LinearSequence>& corpus);

}  // namespace mrsgen::linearize
