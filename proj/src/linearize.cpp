#include "mrsgen/linearize.hpp"

#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

#include "mrsgen/dmrs.hpp"

namespace mrsgen::linearize {

namespace {

bool is_bundle_token(const std::string& tok) {
  return tok.find('=') != std::string::npos;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream in(line);
  std::string token;
  while (in >> token) tokens.push_back(token);
  return tokens;
}

LinearSequence from_tokens(const std::vector<std::string>& tokens) {
  LinearSequence seq;
  size_t pos = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw LinearizeError(msg + " (token " + std::to_string(pos) + ")");
  };

  // node := "(" PRED [BUNDLE] (ROLE node)* ")"
  std::function<void()> parse_node = [&]() {
    if (pos >= tokens.size() || tokens[pos] != "(") fail("expected '('");
    seq.symbols.push_back("(");
    seq.attributes.push_back("");
    ++pos;
    if (pos >= tokens.size() || tokens[pos] == "(" || tokens[pos] == ")") {
      fail("expected a predicate token");
    }
    if (is_bundle_token(tokens[pos])) {
      fail("attribute bundle in illegal position");
    }
    seq.symbols.push_back(tokens[pos]);
    seq.attributes.push_back("");
    ++pos;
    if (pos < tokens.size() && is_bundle_token(tokens[pos])) {
      seq.attributes.back() = tokens[pos];
      ++pos;
    }
    while (pos < tokens.size() && tokens[pos] != ")") {
      if (tokens[pos] == "(") fail("node without a role");
      if (is_bundle_token(tokens[pos])) {
        fail("attribute bundle in illegal position");
      }
      seq.symbols.push_back(tokens[pos]);  // role label
      seq.attributes.push_back("");
      ++pos;
      if (pos >= tokens.size() || tokens[pos] != "(") {
        fail("role token with no following node");
      }
      parse_node();
    }
    if (pos >= tokens.size()) fail("unbalanced parentheses");
    seq.symbols.push_back(")");
    seq.attributes.push_back("");
    ++pos;
  };

  if (tokens.empty()) throw LinearizeError("empty sequence");
  parse_node();
  if (pos != tokens.size()) fail("trailing tokens after the sequence");
  return seq;
}

}  // namespace

std::string LinearSequence::to_flat_string() const {
  std::string out;
  for (size_t i = 0; i < symbols.size(); ++i) {
    if (!out.empty()) out += ' ';
    out += symbols[i];
    if (!attributes[i].empty()) {
      out += ' ';
      out += attributes[i];
    }
  }
  return out;
}

LinearSequence LinearSequence::from_flat_string(const std::string& line) {
  return from_tokens(split_ws(line));
}

LinearSequence linearize(const penman::PenmanGraph& graph) {
  penman::TraversalPlan plan = penman::spanning_tree(graph);
  LinearSequence seq;
  auto push = [&](const std::string& sym) {
    seq.symbols.push_back(sym);
    seq.attributes.push_back("");
  };
  for (const penman::TraversalEvent& ev : plan.events) {
    const penman::PenmanNode& node = graph.nodes[ev.node];
    switch (ev.kind) {
      case penman::EventKind::Descend:
        if (!ev.role.empty()) push(ev.role + (ev.inverted ? "-of" : ""));
        push("(");
        push(node.label);
        break;
      case penman::EventKind::EmitAttributes:
        seq.attributes.back() = dmrs::render_bundle(node.attributes);
        break;
      case penman::EventKind::Reference:
        // Identifier-free form: repeat the predicate, do not descend.
        push(ev.role + (ev.inverted ? "-of" : ""));
        push("(");
        push(node.label);
        push(")");
        break;
      case penman::EventKind::Ascend:
        push(")");
        break;
    }
  }
  return seq;
}

penman::PenmanGraph delinearize(const LinearSequence& seq) {
  if (seq.symbols.size() != seq.attributes.size()) {
    throw LinearizeError("symbol and attribute streams differ in length");
  }
  penman::PenmanGraph graph;
  size_t pos = 0;
  int next_id = 10000;
  auto fail = [&](const std::string& msg) -> void {
    throw LinearizeError(msg + " (position " + std::to_string(pos) + ")");
  };

  std::function<std::string()> parse_node = [&]() -> std::string {
    if (pos >= seq.symbols.size() || seq.symbols[pos] != "(") {
      fail("expected '('");
    }
    if (!seq.attributes[pos].empty()) {
      fail("attribute bundle in illegal position");
    }
    ++pos;
    if (pos >= seq.symbols.size() || seq.symbols[pos] == "(" ||
        seq.symbols[pos] == ")") {
      fail("expected a predicate token");
    }
    penman::PenmanNode node;
    node.id = std::to_string(next_id++);
    node.label = seq.symbols[pos];
    if (!seq.attributes[pos].empty()) {
      auto attrs = dmrs::parse_bundle(seq.attributes[pos]);
      auto carg = attrs.find("carg");
      if (carg != attrs.end()) {
        node.carg = carg->second;
        attrs.erase(carg);
      }
      node.attributes = std::move(attrs);
    }
    ++pos;
    graph.nodes.push_back(node);

    while (pos < seq.symbols.size() && seq.symbols[pos] != ")") {
      if (seq.symbols[pos] == "(") fail("node without a role");
      if (!seq.attributes[pos].empty()) {
        fail("attribute bundle in illegal position");
      }
      std::string role = seq.symbols[pos];
      ++pos;
      if (pos >= seq.symbols.size() || seq.symbols[pos] != "(") {
        fail("role token with no following node");
      }
      std::string child = parse_node();
      bool inverted =
          role.size() > 3 && role.compare(role.size() - 3, 3, "-of") == 0;
      if (inverted) {
        graph.edges.push_back({child, role.substr(0, role.size() - 3), node.id});
      } else {
        graph.edges.push_back({node.id, role, child});
      }
    }
    if (pos >= seq.symbols.size()) fail("unbalanced parentheses");
    ++pos;  // ")"
    return node.id;
  };

  if (seq.symbols.empty()) throw LinearizeError("empty sequence");
  graph.top = parse_node();
  if (pos != seq.symbols.size()) fail("trailing tokens after the sequence");
  std::string err = graph.check();
  if (!err.empty()) throw LinearizeError(err);
  return graph;
}

std::vector<LinearSequence> read_linear_corpus(std::istream& in) {
  std::vector<LinearSequence> corpus;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    corpus.push_back(LinearSequence::from_flat_string(line));
  }
  return corpus;
}

void write_linear_corpus(std::ostream& out,
                         const std::vector<LinearSequence>& corpus) {
  for (const LinearSequence& seq : corpus) out << seq.to_flat_string() << '\n';
}

}  // namespace mrsgen::linearize
