#include "mrsgen/penman.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace mrsgen::penman {

namespace {

bool is_atom_char(char c) {
  return !std::isspace(static_cast<unsigned char>(c)) && c != '(' &&
         c != ')' && c != '/' && c != '"';
}

bool all_lowercase_key(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (std::isupper(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

struct Lexer {
  const std::string& text;
  size_t pos = 0;

  explicit Lexer(const std::string& t) : text(t) {}

  void skip_ws() {
    while (pos < text.size() &&
           std::isspace(static_cast<unsigned char>(text[pos]))) {
      ++pos;
    }
  }

  bool eof() {
    skip_ws();
    return pos >= text.size();
  }

  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }

  void expect(char c, const char* what) {
    if (peek() != c) {
      throw ParseError(std::string("expected '") + c + "' (" + what +
                       ") at offset " + std::to_string(pos));
    }
    ++pos;
  }

  std::string atom(const char* what) {
    skip_ws();
    size_t start = pos;
    while (pos < text.size() && is_atom_char(text[pos])) ++pos;
    if (pos == start) {
      throw ParseError(std::string("expected ") + what + " at offset " +
                       std::to_string(pos));
    }
    return text.substr(start, pos - start);
  }

  // Consumes a double-quoted string, allowing \" and \\ escapes. Returns the
  // unescaped contents without the quotes.
  std::string quoted() {
    expect('"', "quoted value");
    std::string out;
    while (pos < text.size() && text[pos] != '"') {
      if (text[pos] == '\\' && pos + 1 < text.size()) ++pos;
      out += text[pos++];
    }
    if (pos >= text.size()) throw ParseError("unterminated quoted value");
    ++pos;  // closing quote
    return out;
  }
};

struct PendingRole {
  std::string holder;  // node id the role was written under
  std::string role;    // as written, possibly with -of
  std::string value;   // bare scalar token
};

struct Parser {
  Lexer lex;
  PenmanGraph graph;
  std::unordered_set<std::string> defined;
  std::vector<PendingRole> pending;  // scalar values resolved after the parse

  explicit Parser(const std::string& text) : lex(text) {}

  static bool strip_of(std::string& role) {
    if (role.size() > 3 && role.compare(role.size() - 3, 3, "-of") == 0) {
      role.resize(role.size() - 3);
      return true;
    }
    return false;
  }

  void add_edge(const std::string& holder, std::string role,
                const std::string& value) {
    bool inverted = strip_of(role);
    if (role.empty()) throw ParseError("empty role label");
    if (inverted) {
      graph.edges.push_back({value, role, holder});
    } else {
      graph.edges.push_back({holder, role, value});
    }
  }

  // Parses `(id / label :role value ...)` and returns the node id.
  std::string parse_node() {
    lex.expect('(', "node");
    std::string id = lex.atom("node identifier");
    lex.expect('/', "node label");
    std::string label = lex.atom("node label");
    if (defined.count(id)) {
      throw ParseError("duplicate node definition: " + id);
    }
    defined.insert(id);
    graph.nodes.push_back({id, label, {}, std::nullopt});

    while (lex.peek() == ':') {
      ++lex.pos;
      std::string role = lex.atom("role label");
      char next = lex.peek();
      if (next == '(') {
        std::string child = parse_node();
        add_edge(id, role, child);
      } else if (next == '"') {
        std::string value = lex.quoted();
        PenmanNode& node = graph.nodes[node_of(id)];
        if (role == "carg") {
          node.carg = value;
        } else {
          // Non-carg quoted values are kept verbatim, quotes included.
          insert_attribute(node, role, "\"" + value + "\"");
        }
      } else if (next == ')' || next == '\0') {
        throw ParseError("role :" + role + " has no value");
      } else {
        pending.push_back({id, role, lex.atom("role value")});
      }
    }
    lex.expect(')', "end of node");
    return id;
  }

  size_t node_of(const std::string& id) const {
    for (size_t i = 0; i < graph.nodes.size(); ++i) {
      if (graph.nodes[i].id == id) return i;
    }
    throw ParseError("unknown node " + id);
  }

  void insert_attribute(PenmanNode& node, const std::string& key,
                        const std::string& value) {
    if (!node.attributes.emplace(key, value).second) {
      throw ParseError("duplicate attribute :" + key + " on node " + node.id);
    }
  }

  PenmanGraph run() {
    if (lex.eof()) throw ParseError("empty input");
    graph.top = parse_node();
    if (!lex.eof()) {
      throw ParseError("trailing content after the PENMAN expression");
    }
    // A bare scalar is an edge to an already-defined node, an attribute when
    // the role key is lowercase, and an unresolved reference otherwise.
    for (const PendingRole& p : pending) {
      if (defined.count(p.value)) {
        add_edge(p.holder, p.role, p.value);
      } else if (all_lowercase_key(p.role)) {
        insert_attribute(graph.nodes[node_of(p.holder)], p.role, p.value);
      } else {
        throw ParseError("role :" + p.role + " refers to identifier '" +
                         p.value + "' which is never defined");
      }
    }
    std::string err = graph.check();
    if (!err.empty()) throw ParseError(err);
    return std::move(graph);
  }
};

}  // namespace

const PenmanNode* PenmanGraph::find_node(const std::string& id) const {
  int i = node_index(id);
  return i < 0 ? nullptr : &nodes[i];
}

int PenmanGraph::node_index(const std::string& id) const {
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

std::string PenmanGraph::check() const {
  if (nodes.empty()) return "graph has no nodes";
  std::unordered_map<std::string, int> index;
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (!index.emplace(nodes[i].id, static_cast<int>(i)).second) {
      return "duplicate node identifier: " + nodes[i].id;
    }
  }
  if (!index.count(top)) return "top node '" + top + "' does not exist";
  for (const PenmanEdge& e : edges) {
    if (e.label.empty()) return "edge with empty label";
    if (e.label.find_first_of(" \t\n") != std::string::npos) {
      return "edge label contains whitespace: '" + e.label + "'";
    }
    if (!index.count(e.source)) return "edge source '" + e.source + "' undefined";
    if (!index.count(e.target)) return "edge target '" + e.target + "' undefined";
  }

  // Connectivity: undirected reachability from top.
  std::vector<std::vector<int>> adj(nodes.size());
  for (const PenmanEdge& e : edges) {
    int s = index[e.source], t = index[e.target];
    adj[s].push_back(t);
    adj[t].push_back(s);
  }
  std::vector<bool> seen(nodes.size(), false);
  std::deque<int> queue{index[top]};
  seen[index[top]] = true;
  while (!queue.empty()) {
    int u = queue.front();
    queue.pop_front();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        queue.push_back(v);
      }
    }
  }
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (!seen[i]) return "node '" + nodes[i].id + "' unreachable from top";
  }

  // Acyclicity over stored (non-inverted) edge directions.
  std::vector<int> indeg(nodes.size(), 0);
  std::vector<std::vector<int>> out(nodes.size());
  for (const PenmanEdge& e : edges) {
    out[index[e.source]].push_back(index[e.target]);
    ++indeg[index[e.target]];
  }
  std::deque<int> ready;
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (indeg[i] == 0) ready.push_back(static_cast<int>(i));
  }
  size_t emitted = 0;
  while (!ready.empty()) {
    int u = ready.front();
    ready.pop_front();
    ++emitted;
    for (int v : out[u]) {
      if (--indeg[v] == 0) ready.push_back(v);
    }
  }
  if (emitted != nodes.size()) return "graph contains a directed cycle";
  return "";
}

int TraversalPlan::descend_count() const {
  int n = 0;
  for (const auto& e : events) n += e.kind == EventKind::Descend;
  return n;
}

int TraversalPlan::reference_count() const {
  int n = 0;
  for (const auto& e : events) n += e.kind == EventKind::Reference;
  return n;
}

PenmanGraph parse_penman(const std::string& text) {
  return Parser(text).run();
}

TraversalPlan spanning_tree(const PenmanGraph& graph) {
  std::string err = graph.check();
  if (!err.empty()) throw GraphError(err);

  std::unordered_map<std::string, int> index;
  for (size_t i = 0; i < graph.nodes.size(); ++i) {
    index[graph.nodes[i].id] = static_cast<int>(i);
  }

  struct Candidate {
    std::string role;
    int far;
    bool inverted;
    int edge;
  };
  // Incident edges per node: forward (stored direction) and inverted views.
  std::vector<std::vector<Candidate>> forward(graph.nodes.size());
  std::vector<std::vector<Candidate>> inverted(graph.nodes.size());
  for (size_t e = 0; e < graph.edges.size(); ++e) {
    const PenmanEdge& edge = graph.edges[e];
    int s = index[edge.source], t = index[edge.target];
    forward[s].push_back({edge.label, t, false, static_cast<int>(e)});
    inverted[t].push_back({edge.label, s, true, static_cast<int>(e)});
  }
  auto by_role_then_label = [&](const Candidate& a, const Candidate& b) {
    if (a.role != b.role) return a.role < b.role;
    const std::string& la = graph.nodes[a.far].label;
    const std::string& lb = graph.nodes[b.far].label;
    if (la != lb) return la < lb;
    return graph.nodes[a.far].id < graph.nodes[b.far].id;
  };
  for (auto& v : forward) std::sort(v.begin(), v.end(), by_role_then_label);
  for (auto& v : inverted) std::sort(v.begin(), v.end(), by_role_then_label);

  TraversalPlan plan;
  std::vector<bool> edge_done(graph.edges.size(), false);
  std::vector<bool> defined(graph.nodes.size(), false);

  std::function<void(int)> visit = [&](int u) {
    defined[u] = true;
    plan.events.push_back({EventKind::EmitAttributes, u, "", false});
    auto walk = [&](const Candidate& c) {
      if (edge_done[c.edge]) return;
      if (c.inverted && defined[c.far]) {
        // Reentrant edge met against its direction: leave it for the source
        // node, which is guaranteed to be visited later and emits it as a
        // forward reference.
        return;
      }
      edge_done[c.edge] = true;
      if (defined[c.far]) {
        plan.events.push_back({EventKind::Reference, c.far, c.role, c.inverted});
      } else {
        plan.events.push_back({EventKind::Descend, c.far, c.role, c.inverted});
        visit(c.far);
      }
    };
    for (const Candidate& c : forward[u]) walk(c);
    for (const Candidate& c : inverted[u]) walk(c);
    plan.events.push_back({EventKind::Ascend, u, "", false});
  };

  int top = index[graph.top];
  plan.events.push_back({EventKind::Descend, top, "", false});
  visit(top);
  return plan;
}

std::string serialize_penman(const PenmanGraph& graph) {
  std::string err = graph.check();
  if (!err.empty()) throw GraphError(err);
  TraversalPlan plan = spanning_tree(graph);

  // Reassign identifiers from 10000 in definition order.
  std::vector<std::string> display(graph.nodes.size());
  int next = 10000;
  for (const TraversalEvent& ev : plan.events) {
    if (ev.kind == EventKind::Descend) {
      display[ev.node] = std::to_string(next++);
    }
  }

  std::string out;
  int depth = 0;
  auto indent = [&]() {
    out += '\n';
    out.append(static_cast<size_t>(2 * depth), ' ');
  };
  for (const TraversalEvent& ev : plan.events) {
    const PenmanNode& node = graph.nodes[ev.node];
    switch (ev.kind) {
      case EventKind::Descend:
        if (depth > 0) {
          indent();
          out += ':' + ev.role + (ev.inverted ? "-of" : "") + " ";
        }
        out += '(' + display[ev.node] + " / " + node.label;
        ++depth;
        break;
      case EventKind::EmitAttributes:
        if (node.carg) {
          indent();
          out += ":carg \"" + *node.carg + "\"";
        }
        for (const auto& [key, value] : node.attributes) {
          indent();
          out += ':' + key + ' ' + value;
        }
        break;
      case EventKind::Reference:
        indent();
        out += ':' + ev.role + (ev.inverted ? "-of" : "") + " " +
               display[ev.node];
        break;
      case EventKind::Ascend:
        out += ')';
        --depth;
        break;
    }
  }
  return out;
}

std::vector<std::string> read_penman_records(std::istream& in) {
  std::vector<std::string> records;
  std::string record, line;
  auto flush = [&]() {
    if (!record.empty()) {
      records.push_back(record);
      record.clear();
    }
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool blank = line.find_first_not_of(" \t") == std::string::npos;
    if (blank) {
      flush();
    } else {
      if (!record.empty()) record += '\n';
      record += line;
    }
  }
  flush();
  return records;
}

void write_penman_records(std::ostream& out,
                          const std::vector<std::string>& records) {
  for (size_t i = 0; i < records.size(); ++i) {
    if (i > 0) out << '\n';
    out << records[i] << '\n';
  }
}

}  // namespace mrsgen::penman
