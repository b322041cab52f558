#pragma once

#include <unordered_set>

#include "provlog/datalog.hpp"

namespace provlog {

// ---------------------------------------------------------------- labels

struct NodeLabel {
  enum class Kind { Tuple, Rule, Goal, NegTuple, EdbFact };
  Kind kind = Kind::Tuple;
  std::string name;    // predicate, or rule id for Rule/Goal
  int goal_index = 0;  // 1-based body position, Goal only
  Tuple args;

  auto operator<=>(const NodeLabel&) const = default;

  static NodeLabel tuple(std::string pred, Tuple t) {
    return {Kind::Tuple, std::move(pred), 0, std::move(t)};
  }
  static NodeLabel neg_tuple(std::string pred, Tuple t) {
    return {Kind::NegTuple, std::move(pred), 0, std::move(t)};
  }
  static NodeLabel fact(std::string pred, Tuple t) {
    return {Kind::EdbFact, std::move(pred), 0, std::move(t)};
  }
  static NodeLabel rule(std::string id, Tuple args) {
    return {Kind::Rule, std::move(id), 0, std::move(args)};
  }
  static NodeLabel goal(std::string rule_id, int index, Tuple args) {
    return {Kind::Goal, std::move(rule_id), index, std::move(args)};
  }
};

inline std::string canonical(const NodeLabel& l) {
  std::string s;
  switch (l.kind) {
    case NodeLabel::Kind::Tuple: s = "REL:"; break;
    case NodeLabel::Kind::NegTuple: s = "NOT_REL:"; break;
    case NodeLabel::Kind::EdbFact: s = "FACT:"; break;
    case NodeLabel::Kind::Rule: s = "RULE:"; break;
    case NodeLabel::Kind::Goal: s = "GOAL:"; break;
  }
  s += l.name;
  if (l.kind == NodeLabel::Kind::Goal) {
    s += '.';
    s += std::to_string(l.goal_index);
  }
  s += '(';
  for (size_t i = 0; i < l.args.size(); ++i) {
    if (i) s += ',';
    s += l.args[i];
  }
  s += ')';
  return s;
}

inline std::string canonical(const NodeLabel& l, Status st) {
  return canonical(l) + ":" + status_char(st);
}

inline NodeLabel parse_node_label(const std::string& text, Status* status_out = nullptr) {
  NodeLabel l;
  size_t kind_end = text.find(':');
  if (kind_end == std::string::npos) throw SyntaxError("bad node label: " + text);
  std::string kind = text.substr(0, kind_end);
  if (kind == "REL")
    l.kind = NodeLabel::Kind::Tuple;
  else if (kind == "NOT_REL")
    l.kind = NodeLabel::Kind::NegTuple;
  else if (kind == "FACT")
    l.kind = NodeLabel::Kind::EdbFact;
  else if (kind == "RULE")
    l.kind = NodeLabel::Kind::Rule;
  else if (kind == "GOAL")
    l.kind = NodeLabel::Kind::Goal;
  else
    throw SyntaxError("bad node kind in label: " + text);
  size_t open = text.find('(', kind_end + 1);
  if (open == std::string::npos) throw SyntaxError("bad node label: " + text);
  std::string name = text.substr(kind_end + 1, open - kind_end - 1);
  if (l.kind == NodeLabel::Kind::Goal) {
    size_t dot = name.rfind('.');
    if (dot == std::string::npos) throw SyntaxError("goal label needs an index: " + text);
    l.goal_index = std::stoi(name.substr(dot + 1));
    name = name.substr(0, dot);
  }
  l.name = std::move(name);
  size_t close = text.rfind(')');
  if (close == std::string::npos || close < open) throw SyntaxError("bad node label: " + text);
  std::string args = text.substr(open + 1, close - open - 1);
  if (!args.empty()) {
    std::istringstream cells(args);
    std::string cell;
    while (std::getline(cells, cell, ',')) l.args.push_back(cell);
    if (args.back() == ',') l.args.push_back("");
  }
  if (close + 1 == text.size()) {
    if (status_out) throw SyntaxError("label is missing its status: " + text);
  } else {
    if (text[close + 1] != ':' || close + 3 != text.size())
      throw SyntaxError("bad status suffix in label: " + text);
    if (status_out) *status_out = status_from_char(text[close + 2]);
  }
  return l;
}

// ---------------------------------------------------------------- graph

struct ProvGraph {
  std::vector<NodeLabel> labels;
  std::vector<Status> statuses;
  std::map<NodeLabel, int> index;
  std::vector<std::pair<int, int>> edges;
  std::unordered_set<uint64_t> edge_keys;

  // how each goal connects to its tuple, and which predicates are stored
  std::map<std::pair<std::string, int>, bool> goal_negated;  // (rule id, body pos)
  std::set<std::string> edb_preds;
  std::vector<int> roots;  // matched nodes of an explanation

  int add_node(const NodeLabel& l, Status st) {
    auto [it, fresh] = index.emplace(l, static_cast<int>(labels.size()));
    if (fresh) {
      labels.push_back(l);
      statuses.push_back(st);
    } else if (statuses[it->second] != st) {
      throw Error("conflicting status for node " + canonical(l));
    }
    return it->second;
  }

  int find(const NodeLabel& l) const {
    auto it = index.find(l);
    return it == index.end() ? -1 : it->second;
  }

  bool add_edge(int src, int dst) {
    uint64_t key = (static_cast<uint64_t>(static_cast<uint32_t>(src)) << 32) |
                   static_cast<uint32_t>(dst);
    if (!edge_keys.insert(key).second) return false;
    edges.push_back({src, dst});
    return true;
  }

  size_t node_count() const { return labels.size(); }
  size_t edge_count() const { return edges.size(); }
};

inline std::vector<std::vector<int>> adjacency(const ProvGraph& g) {
  std::vector<std::vector<int>> out(g.labels.size());
  for (const auto& [a, b] : g.edges) out[a].push_back(b);
  return out;
}

inline std::vector<std::string> node_lines(const ProvGraph& g) {
  std::vector<std::string> lines;
  lines.reserve(g.labels.size());
  for (size_t i = 0; i < g.labels.size(); ++i)
    lines.push_back(canonical(g.labels[i], g.statuses[i]));
  std::sort(lines.begin(), lines.end());
  return lines;
}

inline std::vector<std::string> edge_lines(const ProvGraph& g) {
  std::vector<std::string> lines;
  lines.reserve(g.edges.size());
  for (const auto& [a, b] : g.edges)
    lines.push_back(canonical(g.labels[a], g.statuses[a]) + " -> " +
                    canonical(g.labels[b], g.statuses[b]));
  std::sort(lines.begin(), lines.end());
  return lines;
}

inline std::string edge_list(const ProvGraph& g) {
  std::string out;
  for (const auto& line : edge_lines(g)) {
    out += line;
    out += '\n';
  }
  return out;
}

inline bool same_graph(const ProvGraph& a, const ProvGraph& b) {
  return node_lines(a) == node_lines(b) && edge_lines(a) == edge_lines(b);
}

inline std::string to_dot(const ProvGraph& g) {
  auto color = [](Status s) {
    switch (s) {
      case Status::T:
      case Status::W: return "green";
      case Status::F:
      case Status::L: return "darkred";
      case Status::U: return "lightyellow";
    }
    return "white";
  };
  auto shape = [](NodeLabel::Kind k) {
    switch (k) {
      case NodeLabel::Kind::Rule: return "shape=box";
      case NodeLabel::Kind::Goal: return "shape=box, style=\"rounded,filled\"";
      default: return "shape=ellipse";
    }
  };
  std::vector<int> order(g.labels.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return canonical(g.labels[a]) < canonical(g.labels[b]);
  });
  std::string out = "digraph provenance {\n";
  for (int i : order) {
    const NodeLabel& l = g.labels[i];
    Status st = g.statuses[i];
    out += "  \"" + canonical(l, st) + "\" [" + shape(l.kind);
    if (l.kind != NodeLabel::Kind::Goal) out += ", style=filled";
    out += std::string(", fillcolor=") + color(st);
    out += ", fontcolor=" + std::string(st == Status::F || st == Status::L ? "white" : "black");
    out += "];\n";
  }
  for (const auto& line : edge_lines(g)) {
    size_t sep = line.find(" -> ");
    out += "  \"" + line.substr(0, sep) + "\" -> \"" + line.substr(sep + 4) + "\";\n";
  }
  out += "}\n";
  return out;
}

// Graph from "<label>:<status> -> <label>:<status>" lines. Goal polarity is
// taken from status agreement, predicate storage from FACT nodes; both are
// exact for game graphs.
inline ProvGraph parse_edge_list(const std::string& text) {
  ProvGraph g;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    size_t sep = line.find(" -> ");
    if (sep == std::string::npos) throw SyntaxError("bad edge line: " + line);
    Status sa = Status::T, sb = Status::T;
    NodeLabel a = parse_node_label(line.substr(0, sep), &sa);
    NodeLabel b = parse_node_label(line.substr(sep + 4), &sb);
    int ia = g.add_node(a, sa);
    int ib = g.add_node(b, sb);
    g.add_edge(ia, ib);
    if (a.kind == NodeLabel::Kind::Goal &&
        (b.kind == NodeLabel::Kind::Tuple || b.kind == NodeLabel::Kind::NegTuple)) {
      bool negated;
      if (b.kind == NodeLabel::Kind::NegTuple)
        negated = false;  // game move to the complement claim
      else if (sa == Status::W || sa == Status::L)
        negated = true;
      else
        negated = sa != sb;
      g.goal_negated[{a.name, a.goal_index}] = negated;
    }
    if (b.kind == NodeLabel::Kind::EdbFact) g.edb_preds.insert(b.name);
  }
  return g;
}

// ---------------------------------------------------------------- oracle

namespace detail {

inline size_t checked_mul(size_t a, size_t b) {
  if (a == 0 || b == 0) return 0;
  if (a > SIZE_MAX / b) return SIZE_MAX;
  return a * b;
}

struct GroundingSpace {
  std::vector<std::string> vars;
  std::vector<std::vector<std::string>> values;  // candidate constants per var
  size_t size = 1;
};

// Candidates per Def of derivations: each variable ranges over the
// intersection of the domains of the body attributes it appears in.
inline GroundingSpace grounding_space(const Rule& r, const DomainAssignment& doms) {
  GroundingSpace gs;
  std::set<std::string> seen;
  for (const Term& t : rule_full_args(r)) {
    if (!t.is_var || !seen.insert(t.text).second) continue;
    auto attrs = body_attrs(r, t.text);
    std::set<std::string> inter;
    bool first = true;
    for (const auto& a : attrs) {
      const auto* dom = doms.find(a.pred, a.pos);
      std::set<std::string> cur = dom ? *dom : std::set<std::string>{};
      if (first) {
        inter = cur;
        first = false;
      } else {
        std::set<std::string> next;
        std::set_intersection(inter.begin(), inter.end(), cur.begin(), cur.end(),
                              std::inserter(next, next.begin()));
        inter = next;
      }
    }
    gs.vars.push_back(t.text);
    gs.values.emplace_back(inter.begin(), inter.end());
    gs.size = checked_mul(gs.size, inter.size());
  }
  return gs;
}

}  // namespace detail

struct GraphOptions {
  size_t node_cap = 1000000;
};

// The direct construction: every tuple of every predicate's tuple universe,
// every rule grounding whose node exists, and the goals connecting them.
inline ProvGraph build_full_graph(const Program& p, const Instance& inst,
                                  const DomainAssignment& edb_doms,
                                  const GraphOptions& options = {}) {
  check_program(p);
  Eval3Result ev = evaluate3(p, inst);
  DomainAssignment doms = extend_domains(p, inst, edb_doms);

  std::map<std::string, size_t> arities;
  for (const auto& r : p.rules) {
    arities.emplace(r.head.pred, r.head.args.size());
    for (const auto& l : r.body)
      if (!l.compare()) arities.emplace(l.atom.pred, l.atom.args.size());
  }

  // Respect the node cap before materializing anything.
  size_t estimate = 0;
  for (const auto& [pred, arity] : arities) {
    size_t n = 1;
    for (size_t i = 0; i < arity; ++i) {
      const auto* dom = doms.find(pred, i);
      n = detail::checked_mul(n, dom ? dom->size() : 0);
    }
    estimate += n;
    if (estimate > options.node_cap)
      throw DomainTooLarge("tuple universe exceeds the node cap of " +
                           std::to_string(options.node_cap));
  }
  for (const auto& r : p.rules) {
    auto gs = detail::grounding_space(r, doms);
    estimate += detail::checked_mul(gs.size, 1 + r.body.size());
    if (estimate > options.node_cap)
      throw DomainTooLarge("rule groundings exceed the node cap of " +
                           std::to_string(options.node_cap));
  }

  ProvGraph g;
  g.edb_preds = edb_predicates(p);
  for (const auto& r : p.rules)
    for (size_t j = 0; j < r.body.size(); ++j)
      if (!r.body[j].compare())
        g.goal_negated[{r.id, static_cast<int>(j + 1)}] = r.body[j].negated();

  // Tuple nodes over the tuple universe.
  for (const auto& [pred, arity] : arities) {
    Tuple t(arity);
    auto fill = [&](auto&& self, size_t i) -> void {
      if (i == arity) {
        g.add_node(NodeLabel::tuple(pred, t), ev.status(pred, t));
        return;
      }
      const auto* dom = doms.find(pred, i);
      if (!dom) return;
      for (const auto& c : *dom) {
        t[i] = c;
        self(self, i + 1);
      }
    };
    fill(fill, 0);
  }

  // Rule and goal nodes.
  for (const auto& r : p.rules) {
    auto gs = detail::grounding_space(r, doms);
    std::vector<Term> full_args = rule_full_args(r);
    std::map<std::string, std::string> env;
    auto ground_term = [&](const Term& t) { return t.is_var ? env.at(t.text) : t.text; };
    auto walk = [&](auto&& self, size_t i) -> void {
      if (i < gs.vars.size()) {
        for (const auto& c : gs.values[i]) {
          env[gs.vars[i]] = c;
          self(self, i + 1);
        }
        env.erase(gs.vars[i]);
        return;
      }
      // status of each goal under this grounding
      std::vector<Status> goal_status(r.body.size());
      Status rule_status = Status::T;
      for (size_t j = 0; j < r.body.size(); ++j) {
        const Literal& l = r.body[j];
        Status s;
        if (l.compare()) {
          s = eval_cmp(l.op, ground_term(l.lhs), ground_term(l.rhs)) ? Status::T : Status::F;
        } else {
          Tuple t;
          for (const auto& a : l.atom.args) t.push_back(ground_term(a));
          s = ev.status(l.atom.pred, t);
          if (l.negated()) s = negate_status(s);
        }
        goal_status[j] = s;
        rule_status = and_status(rule_status, s);
      }
      Tuple head;
      for (const auto& a : r.head.args) head.push_back(ground_term(a));
      Status head_status = ev.status(r.head.pred, head);
      // failed derivations of true tuples stay out of the graph
      if (rule_status == Status::F && head_status == Status::T) return;

      Tuple rule_args;
      for (const auto& t : full_args) rule_args.push_back(ground_term(t));
      int rule_node = g.add_node(NodeLabel::rule(r.id, rule_args), rule_status);
      int head_node = g.add_node(NodeLabel::tuple(r.head.pred, head), head_status);
      g.add_edge(head_node, rule_node);
      for (size_t j = 0; j < r.body.size(); ++j) {
        // successful and undetermined derivations show all goals, failed
        // ones only the goals that are not satisfied
        if (rule_status == Status::F && goal_status[j] == Status::T) continue;
        const Literal& l = r.body[j];
        Tuple goal_args;
        if (l.compare()) {
          goal_args = {ground_term(l.lhs), ground_term(l.rhs)};
        } else {
          for (const auto& a : l.atom.args) goal_args.push_back(ground_term(a));
        }
        int goal_node =
            g.add_node(NodeLabel::goal(r.id, static_cast<int>(j + 1), goal_args), goal_status[j]);
        g.add_edge(rule_node, goal_node);
        if (!l.compare()) {
          Status ts = ev.status(l.atom.pred, goal_args);
          int tuple_node = g.add_node(NodeLabel::tuple(l.atom.pred, goal_args), ts);
          g.add_edge(goal_node, tuple_node);
        }
      }
      if (g.node_count() > options.node_cap)
        throw DomainTooLarge("graph exceeds the node cap of " +
                             std::to_string(options.node_cap));
    };
    walk(walk, 0);
  }
  return g;
}

// ---------------------------------------------------------------- match

// Tuples of the question's predicate that unify with the pattern and have
// the right status: T or U for Why, F or U for WhyNot.
inline std::vector<Tuple> match_question(const Program& p, const Instance& inst,
                                         const DomainAssignment& edb_doms,
                                         const ProvQuestion& q,
                                         const GraphOptions& options = {}) {
  check_program(p);
  if (!head_predicates(p).count(q.pattern.pred))
    throw MissingRelation("question predicate " + q.pattern.pred +
                          " is not derived by the program");
  size_t arity = 0;
  for (const auto& r : p.rules)
    if (r.head.pred == q.pattern.pred) arity = r.head.args.size();
  if (arity != q.pattern.args.size())
    throw ArityMismatch("question pattern for " + q.pattern.pred + " needs arity " +
                        std::to_string(arity));
  DomainAssignment doms = extend_domains(p, inst, edb_doms);
  for (size_t i = 0; i < q.pattern.args.size(); ++i) {
    const Term& t = q.pattern.args[i];
    if (t.is_var) continue;
    const auto* dom = doms.find(q.pattern.pred, i);
    if (!dom || !dom->count(t.text))
      throw ConstantOutsideDomain("constant " + t.text + " is outside the domain of " +
                                  q.pattern.pred + "." + std::to_string(i + 1));
  }

  auto unifies = [&](const Tuple& t) {
    std::map<std::string, std::string> bind;
    for (size_t i = 0; i < t.size(); ++i) {
      const Term& pat = q.pattern.args[i];
      if (!pat.is_var) {
        if (pat.text != t[i]) return false;
      } else {
        auto [it, fresh] = bind.emplace(pat.text, t[i]);
        if (!fresh && it->second != t[i]) return false;
      }
    }
    return true;
  };

  Eval3Result ev = evaluate3(p, inst);
  std::vector<Tuple> out;
  if (q.why()) {
    auto it = ev.entries.find(q.pattern.pred);
    if (it != ev.entries.end())
      for (const auto& [t, s] : it->second)
        if (unifies(t)) out.push_back(t);
  } else {
    size_t total = 1;
    for (size_t i = 0; i < arity; ++i) {
      const auto* dom = doms.find(q.pattern.pred, i);
      total = detail::checked_mul(total, dom ? dom->size() : 0);
    }
    if (total > options.node_cap)
      throw DomainTooLarge("tuple universe of " + q.pattern.pred + " exceeds the node cap");
    Tuple t(arity);
    auto fill = [&](auto&& self, size_t i) -> void {
      if (i == arity) {
        if (unifies(t) && ev.status(q.pattern.pred, t) != Status::T) out.push_back(t);
        return;
      }
      const auto* dom = doms.find(q.pattern.pred, i);
      if (!dom) return;
      for (const auto& c : *dom) {
        t[i] = c;
        self(self, i + 1);
      }
    };
    fill(fill, 0);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ------------------------------------------------------------- extraction

// Forward-reachable node-induced subgraph from the matched tuples.
inline ProvGraph extract_explanation(const ProvGraph& g, const std::string& pred,
                                     const std::vector<Tuple>& matched) {
  std::vector<int> seeds;
  for (const auto& t : matched) {
    int id = g.find(NodeLabel::tuple(pred, t));
    if (id >= 0) seeds.push_back(id);
  }
  auto adj = adjacency(g);
  std::vector<char> in(g.labels.size(), 0);
  std::vector<int> stack = seeds;
  for (int s : stack) in[s] = 1;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (int w : adj[v])
      if (!in[w]) {
        in[w] = 1;
        stack.push_back(w);
      }
  }
  ProvGraph out;
  out.goal_negated = g.goal_negated;
  out.edb_preds = g.edb_preds;
  std::vector<int> remap(g.labels.size(), -1);
  for (size_t i = 0; i < g.labels.size(); ++i)
    if (in[i]) remap[i] = out.add_node(g.labels[i], g.statuses[i]);
  for (const auto& [a, b] : g.edges)
    if (in[a] && in[b]) out.add_edge(remap[a], remap[b]);
  for (int s : seeds) out.roots.push_back(remap[s]);
  return out;
}

// --------------------------------------------------------------- resolve

// Chooses truth values for undetermined stored tuples and recomputes every
// status in the explanation. Only nodes that were undetermined can change,
// so working on the subgraph alone is sound.
inline ProvGraph resolve_undetermined(const ProvGraph& g,
                                      const std::map<NodeLabel, bool>& assignment) {
  ProvGraph out = g;
  for (const auto& [label, present] : assignment) {
    int id = out.find(label);
    if (id < 0)
      throw NotUndetermined("node " + canonical(label) + " is not part of the explanation");
    if (label.kind != NodeLabel::Kind::Tuple || !out.edb_preds.count(label.name))
      throw NotUndetermined("node " + canonical(label) + " is not a stored tuple");
    if (out.statuses[id] != Status::U)
      throw NotUndetermined("node " + canonical(label) + " is not undetermined");
    out.statuses[id] = present ? Status::T : Status::F;
  }

  auto adj = adjacency(out);
  // children before parents
  std::vector<int> order;
  std::vector<char> state(out.labels.size(), 0);
  auto dfs = [&](auto&& self, int v) -> void {
    state[v] = 1;
    for (int w : adj[v])
      if (!state[w]) self(self, w);
    order.push_back(v);
  };
  for (size_t i = 0; i < out.labels.size(); ++i)
    if (!state[i]) dfs(dfs, static_cast<int>(i));

  for (int v : order) {
    const NodeLabel& l = out.labels[v];
    switch (l.kind) {
      case NodeLabel::Kind::Goal: {
        if (adj[v].empty()) break;  // comparison goals keep their status
        int child = adj[v][0];
        auto it = out.goal_negated.find({l.name, l.goal_index});
        bool neg = it != out.goal_negated.end() && it->second;
        Status ts = out.statuses[child];
        out.statuses[v] = neg ? negate_status(ts) : ts;
        break;
      }
      case NodeLabel::Kind::Rule: {
        Status s = Status::T;
        for (int w : adj[v]) s = and_status(s, out.statuses[w]);
        out.statuses[v] = s;
        break;
      }
      case NodeLabel::Kind::Tuple: {
        if (out.edb_preds.count(l.name)) break;
        if (adj[v].empty()) break;  // no derivations in the subgraph
        Status s = Status::F;
        for (int w : adj[v]) s = or_status(s, out.statuses[w]);
        out.statuses[v] = s;
        break;
      }
      default: break;
    }
  }
  return out;
}

// ---------------------------------------------------------- full pipeline

struct Explanation {
  ProvGraph graph;
  std::vector<Tuple> matched;
};

inline Explanation explain_direct(const Program& p, const Instance& inst,
                                  const DomainAssignment& edb_doms, const ProvQuestion& q,
                                  const GraphOptions& options = {}) {
  Explanation out;
  out.matched = match_question(p, inst, edb_doms, q, options);
  ProvGraph full = build_full_graph(p, inst, edb_doms, options);
  out.graph = extract_explanation(full, q.pattern.pred, out.matched);
  return out;
}

}  // namespace provlog
