#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "mrsgen/penman.hpp"

// DMRS-specific reading of PENMAN graphs: surface/abstract predicates,
// morpho-semantic attribute bundles, role+flavor edge labels, and the
// attribute/edge ablation transforms.

namespace mrsgen::dmrs {

struct Predicate {
  enum class Kind { Surface, Abstract };
  Kind kind = Kind::Abstract;
  std::string lemma;
  std::string pos;    // single-letter category, empty when absent
  std::string sense;  // empty when absent

  std::string render() const;
};

// Total: `_see_v_1` -> surface(see, v, 1); anything that does not match the
// `_lemma_pos[_sense]` shape is an abstract predicate with the whole token
// as its lemma.
Predicate parse_predicate(const std::string& token);

// `k1=v1|k2=v2` in key order; "" for an empty bundle.
std::string render_bundle(const std::map<std::string, std::string>& attrs);
std::map<std::string, std::string> parse_bundle(const std::string& bundle);

struct EdgeLabel {
  std::string role;
  std::string flavor;  // H, EQ, NEQ, HEQ, or empty

  std::string render() const;  // ROLE[-FLAVOR]
};

// Total: an unrecognized suffix stays part of the role.
EdgeLabel parse_edge_label(const std::string& label);

struct ValidationIssue {
  enum class Severity { Warning, Error };
  Severity severity;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool valid() const { return issues.empty(); }
  int error_count() const;
  int warning_count() const;
};

struct ValidationConfig {
  std::set<std::string> attribute_keys;  // known keys; others warn
  std::set<std::string> roles;
  std::set<std::string> flavors;

  static ValidationConfig defaults();
};

// Diagnostics only, never throws: unknown attribute key -> warning,
// malformed edge label -> error, quantifier without an outgoing RSTR edge
// -> warning.
ValidationReport validate_dmrs(const penman::PenmanGraph& graph,
                               const ValidationConfig& config =
                                   ValidationConfig::defaults());

struct AblationSpec {
  enum class Mode { KeepAll, DropNodeAttributes, KeepOnlyKeys, DropEdgeFlavors };
  Mode mode = Mode::KeepAll;
  std::set<std::string> keys;  // used by KeepOnlyKeys

  // Flag syntax: all | none | keep=k1,k2 | noedgeflavor
  static AblationSpec from_flag(const std::string& flag);
  std::string to_flag() const;
};

// Structure-preserving: node and edge counts, connectivity, and carg values
// are unchanged; only attribute entries and edge flavors are affected.
penman::PenmanGraph ablate(const penman::PenmanGraph& graph,
                           const AblationSpec& spec);

}  // namespace mrsgen::dmrs
