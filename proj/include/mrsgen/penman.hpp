#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

// PENMAN notation for rooted labeled graphs: `(id / label :role value ...)`
// nodes, `-of` inverse-role marking, bare identifiers for reentrant edges.
// Graphs are immutable values; all functions here are pure.

namespace mrsgen::penman {

struct PenmanNode {
  std::string id;
  std::string label;
  // Keys are lowercase; kept sorted so rendering is deterministic.
  std::map<std::string, std::string> attributes;
  // Constant argument, stored without the surrounding quotes.
  std::optional<std::string> carg;
};

struct PenmanEdge {
  std::string source;
  std::string label;  // role text, never carries the "-of" suffix
  std::string target;
};

struct PenmanGraph {
  std::string top;
  std::vector<PenmanNode> nodes;
  std::vector<PenmanEdge> edges;

  const PenmanNode* find_node(const std::string& id) const;
  int node_index(const std::string& id) const;  // -1 if absent

  // Structural invariants: unique ids, resolvable endpoints, top present,
  // connected (undirected reachability from top), acyclic over stored edge
  // directions. Returns an error description, or "" when the graph is valid.
  std::string check() const;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One normalized depth-first traversal of a graph. Every node is defined
// (descended into) exactly once; edges outside the spanning tree appear as
// Reference events at the site where the traversal meets them.
enum class EventKind { Descend, EmitAttributes, Reference, Ascend };

struct TraversalEvent {
  EventKind kind;
  int node = -1;          // index into graph.nodes
  std::string role;       // incoming edge label, "" for the root descend
  bool inverted = false;  // true when the edge is walked against its direction
};

struct TraversalPlan {
  std::vector<TraversalEvent> events;

  int descend_count() const;
  int reference_count() const;
};

// Parses one PENMAN expression. `-of` roles are stored un-suffixed with the
// edge direction reversed. A role value that is a nested node or a defined
// identifier is an edge; a scalar or quoted value is an attribute.
PenmanGraph parse_penman(const std::string& text);

// Depth-first traversal from the top node. Edges are preferred in their
// stored direction; siblings are ordered by (role label, far node label).
TraversalPlan spanning_tree(const PenmanGraph& graph);

// Deterministic rendering: identifiers reassigned from 10000 in definition
// order, carg first, attributes in key order, two-space indentation, bare
// identifier references for reentrant edges.
std::string serialize_penman(const PenmanGraph& graph);

// Corpus files hold one PENMAN expression per record, separated by a single
// blank line, UTF-8.
std::vector<std::string> read_penman_records(std::istream& in);
void write_penman_records(std::ostream& out,
                          const std::vector<std::string>& records);

}  // namespace mrsgen::penman
