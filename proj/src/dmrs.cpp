#include "mrsgen/dmrs.hpp"

#include <cctype>
#include <sstream>
#include <stdexcept>

namespace mrsgen::dmrs {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

std::string join(const std::vector<std::string>& parts, size_t first,
                 size_t last, char sep) {
  std::string out;
  for (size_t i = first; i < last; ++i) {
    if (i > first) out += sep;
    out += parts[i];
  }
  return out;
}

bool single_letter(const std::string& s) {
  return s.size() == 1 && std::isalpha(static_cast<unsigned char>(s[0]));
}

}  // namespace

std::string Predicate::render() const {
  if (kind == Kind::Abstract) return lemma;
  std::string out = "_" + lemma + "_" + pos;
  if (!sense.empty()) out += "_" + sense;
  return out;
}

Predicate parse_predicate(const std::string& token) {
  if (token.size() > 1 && token[0] == '_') {
    std::vector<std::string> parts = split(token.substr(1), '_');
    // The part-of-speech is the first single-letter part; the lemma may
    // itself contain underscores.
    for (size_t i = 1; i < parts.size(); ++i) {
      if (single_letter(parts[i])) {
        Predicate p;
        p.kind = Predicate::Kind::Surface;
        p.lemma = join(parts, 0, i, '_');
        p.pos = parts[i];
        p.sense = join(parts, i + 1, parts.size(), '_');
        return p;
      }
    }
  }
  Predicate p;
  p.kind = Predicate::Kind::Abstract;
  p.lemma = token;
  return p;
}

std::string render_bundle(const std::map<std::string, std::string>& attrs) {
  std::string out;
  for (const auto& [key, value] : attrs) {
    if (!out.empty()) out += '|';
    out += key + "=" + value;
  }
  return out;
}

std::map<std::string, std::string> parse_bundle(const std::string& bundle) {
  std::map<std::string, std::string> attrs;
  if (bundle.empty()) return attrs;
  for (const std::string& item : split(bundle, '|')) {
    size_t eq = item.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("malformed bundle item: " + item);
    }
    attrs[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return attrs;
}

std::string EdgeLabel::render() const {
  return flavor.empty() ? role : role + "-" + flavor;
}

EdgeLabel parse_edge_label(const std::string& label) {
  static const std::set<std::string> kFlavors = {"H", "EQ", "NEQ", "HEQ"};
  size_t dash = label.rfind('-');
  if (dash != std::string::npos && kFlavors.count(label.substr(dash + 1))) {
    return {label.substr(0, dash), label.substr(dash + 1)};
  }
  return {label, ""};
}

int ValidationReport::error_count() const {
  int n = 0;
  for (const auto& i : issues) n += i.severity == ValidationIssue::Severity::Error;
  return n;
}

int ValidationReport::warning_count() const {
  int n = 0;
  for (const auto& i : issues)
    n += i.severity == ValidationIssue::Severity::Warning;
  return n;
}

ValidationConfig ValidationConfig::defaults() {
  ValidationConfig c;
  c.attribute_keys = {"tense", "sf", "perf", "mood", "pers", "num", "ind"};
  c.roles = {"ARG1",    "ARG2",    "ARG3",    "ARG4",   "RSTR",   "BODY",
             "MOD",     "L-INDEX", "R-INDEX", "L-HNDL", "R-HNDL"};
  c.flavors = {"H", "EQ", "NEQ", "HEQ"};
  return c;
}

ValidationReport validate_dmrs(const penman::PenmanGraph& graph,
                               const ValidationConfig& config) {
  ValidationReport report;
  auto warn = [&](std::string msg) {
    report.issues.push_back({ValidationIssue::Severity::Warning, std::move(msg)});
  };
  auto error = [&](std::string msg) {
    report.issues.push_back({ValidationIssue::Severity::Error, std::move(msg)});
  };

  for (const penman::PenmanNode& node : graph.nodes) {
    for (const auto& [key, value] : node.attributes) {
      if (!config.attribute_keys.count(key)) {
        warn("node " + node.id + ": unknown attribute key '" + key + "'");
      }
    }
  }

  for (const penman::PenmanEdge& edge : graph.edges) {
    if (config.roles.count(edge.label)) continue;  // bare role
    size_t dash = edge.label.rfind('-');
    std::string head =
        dash == std::string::npos ? edge.label : edge.label.substr(0, dash);
    std::string tail =
        dash == std::string::npos ? "" : edge.label.substr(dash + 1);
    if (config.roles.count(head)) {
      if (!config.flavors.count(tail)) {
        error("edge " + edge.source + "->" + edge.target +
              ": unknown flavor '" + tail + "' in label '" + edge.label + "'");
      }
    } else {
      error("edge " + edge.source + "->" + edge.target + ": unknown role '" +
            edge.label + "'");
    }
  }

  // A quantifier node should restrict something via RSTR.
  for (const penman::PenmanNode& node : graph.nodes) {
    Predicate pred = parse_predicate(node.label);
    bool quantifier = pred.pos == "q" ||
                      (node.label.size() > 2 &&
                       node.label.compare(node.label.size() - 2, 2, "_q") == 0);
    if (!quantifier) continue;
    bool has_rstr = false;
    for (const penman::PenmanEdge& edge : graph.edges) {
      if (edge.source == node.id &&
          parse_edge_label(edge.label).role == "RSTR") {
        has_rstr = true;
        break;
      }
    }
    if (!has_rstr) {
      warn("quantifier " + node.id + " (" + node.label +
           ") has no RSTR edge");
    }
  }
  return report;
}

AblationSpec AblationSpec::from_flag(const std::string& flag) {
  AblationSpec spec;
  if (flag == "all" || flag.empty()) {
    spec.mode = Mode::KeepAll;
  } else if (flag == "none") {
    spec.mode = Mode::DropNodeAttributes;
  } else if (flag == "noedgeflavor") {
    spec.mode = Mode::DropEdgeFlavors;
  } else if (flag.rfind("keep=", 0) == 0) {
    spec.mode = Mode::KeepOnlyKeys;
    for (const std::string& key : split(flag.substr(5), ',')) {
      if (!key.empty()) spec.keys.insert(key);
    }
  } else {
    throw std::invalid_argument("unknown ablation flag: " + flag);
  }
  return spec;
}

std::string AblationSpec::to_flag() const {
  switch (mode) {
    case Mode::KeepAll:
      return "all";
    case Mode::DropNodeAttributes:
      return "none";
    case Mode::DropEdgeFlavors:
      return "noedgeflavor";
    case Mode::KeepOnlyKeys: {
      std::string out = "keep=";
      bool first = true;
      for (const std::string& key : keys) {
        if (!first) out += ',';
        out += key;
        first = false;
      }
      return out;
    }
  }
  return "all";
}

penman::PenmanGraph ablate(const penman::PenmanGraph& graph,
                           const AblationSpec& spec) {
  penman::PenmanGraph out = graph;
  switch (spec.mode) {
    case AblationSpec::Mode::KeepAll:
      break;
    case AblationSpec::Mode::DropNodeAttributes:
      for (penman::PenmanNode& node : out.nodes) node.attributes.clear();
      break;
    case AblationSpec::Mode::KeepOnlyKeys:
      for (penman::PenmanNode& node : out.nodes) {
        for (auto it = node.attributes.begin(); it != node.attributes.end();) {
          it = spec.keys.count(it->first) ? std::next(it)
                                          : node.attributes.erase(it);
        }
      }
      break;
    case AblationSpec::Mode::DropEdgeFlavors:
      for (penman::PenmanEdge& edge : out.edges) {
        edge.label = parse_edge_label(edge.label).role;
      }
      break;
  }
  return out;
}

}  // namespace mrsgen::dmrs
