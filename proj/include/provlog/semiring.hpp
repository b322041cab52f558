#pragma once

#include "provlog/graph.hpp"

namespace provlog {

// ------------------------------------------------------------- polynomials

// variable name -> exponent (exponents are always >= 1)
using Monomial = std::map<std::string, unsigned>;

// Canonical sum of monomials: equal monomials are merged and coefficients
// are never zero, so equality of polynomials is structural equality.
struct Polynomial {
  std::map<Monomial, unsigned long long> terms;

  static Polynomial zero() { return {}; }
  static Polynomial constant(unsigned long long c) {
    Polynomial p;
    if (c) p.terms[{}] = c;
    return p;
  }
  static Polynomial one() { return constant(1); }
  static Polynomial var(const std::string& x) {
    Polynomial p;
    p.terms[{{x, 1}}] = 1;
    return p;
  }

  bool is_zero() const { return terms.empty(); }
  bool operator==(const Polynomial&) const = default;
};

inline Polynomial operator+(const Polynomial& a, const Polynomial& b) {
  Polynomial out = a;
  for (const auto& [m, c] : b.terms) {
    auto [it, fresh] = out.terms.emplace(m, c);
    if (!fresh) it->second += c;
  }
  return out;
}

inline Polynomial operator*(const Polynomial& a, const Polynomial& b) {
  Polynomial out;
  for (const auto& [ma, ca] : a.terms)
    for (const auto& [mb, cb] : b.terms) {
      Monomial m = ma;
      for (const auto& [v, e] : mb) m[v] += e;
      auto [it, fresh] = out.terms.emplace(std::move(m), ca * cb);
      if (!fresh) it->second += ca * cb;
    }
  return out;
}

inline unsigned degree(const Monomial& m) {
  unsigned d = 0;
  for (const auto& [_, e] : m) d += e;
  return d;
}

inline std::set<std::string> variables(const Polynomial& p) {
  std::set<std::string> out;
  for (const auto& [m, _] : p.terms)
    for (const auto& [v, e] : m) out.insert(v);
  return out;
}

// Substitute a constant for a variable.
inline Polynomial substitute(const Polynomial& p, const std::string& var,
                             unsigned long long value) {
  Polynomial out;
  for (const auto& [m, c] : p.terms) {
    auto it = m.find(var);
    if (it == m.end()) {
      out.terms[m] += c;
      continue;
    }
    if (value == 0) continue;
    unsigned long long scale = c;
    for (unsigned e = 0; e < it->second; ++e) scale *= value;
    Monomial rest = m;
    rest.erase(var);
    out.terms[rest] += scale;
  }
  return out;
}

// Monomials print in (degree desc, factor sequence asc) order: p^3 + 2*p*q*r.
inline std::string to_text(const Monomial& m, unsigned long long coeff) {
  std::string s;
  if (coeff != 1 || m.empty()) s = std::to_string(coeff);
  for (const auto& [v, e] : m) {
    if (!s.empty()) s += "*";
    s += v;
    if (e > 1) s += "^" + std::to_string(e);
  }
  return s;
}

inline std::string to_text(const Polynomial& p) {
  if (p.is_zero()) return "0";
  auto factor_seq = [](const Monomial& m) {
    std::vector<std::string> seq;
    for (const auto& [v, e] : m) seq.insert(seq.end(), e, v);
    return seq;
  };
  std::vector<std::pair<Monomial, unsigned long long>> terms(p.terms.begin(), p.terms.end());
  std::stable_sort(terms.begin(), terms.end(), [&](const auto& a, const auto& b) {
    unsigned da = degree(a.first), db = degree(b.first);
    if (da != db) return da > db;
    return factor_seq(a.first) < factor_seq(b.first);
  });
  std::string s;
  for (const auto& [m, c] : terms) {
    if (!s.empty()) s += " + ";
    s += to_text(m, c);
  }
  return s;
}

// ---------------------------------------------------------------- semirings

enum class SemiringKind { NX, BX, Trio, Why, PosBool, Which };

inline std::string semiring_name(SemiringKind k) {
  switch (k) {
    case SemiringKind::NX: return "nx";
    case SemiringKind::BX: return "bx";
    case SemiringKind::Trio: return "trio";
    case SemiringKind::Why: return "why";
    case SemiringKind::PosBool: return "posbool";
    case SemiringKind::Which: return "which";
  }
  return "";
}

inline SemiringKind semiring_from_name(const std::string& name) {
  for (SemiringKind k : {SemiringKind::NX, SemiringKind::BX, SemiringKind::Trio,
                         SemiringKind::Why, SemiringKind::PosBool, SemiringKind::Which})
    if (semiring_name(k) == name) return k;
  throw Error("unknown semiring: " + name);
}

namespace detail {

inline Monomial drop_exponents(const Monomial& m) {
  Monomial out;
  for (const auto& [v, _] : m) out[v] = 1;
  return out;
}

// Keep only monomials whose variable set is minimal (x + x*y = x).
inline Polynomial absorb(const Polynomial& p) {
  std::vector<Monomial> ms;
  for (const auto& [m, _] : p.terms) ms.push_back(m);
  std::stable_sort(ms.begin(), ms.end(),
                   [](const Monomial& a, const Monomial& b) { return a.size() < b.size(); });
  auto subset = [](const Monomial& a, const Monomial& b) {
    for (const auto& [v, _] : a)
      if (!b.count(v)) return false;
    return true;
  };
  Polynomial out;
  for (const auto& m : ms) {
    bool covered = false;
    for (const auto& [k, _] : out.terms)
      if (subset(k, m)) {
        covered = true;
        break;
      }
    if (!covered) out.terms[m] = 1;
  }
  return out;
}

}  // namespace detail

inline Polynomial normalize(const Polynomial& p, SemiringKind kind) {
  switch (kind) {
    case SemiringKind::NX:
      return p;
    case SemiringKind::BX: {
      Polynomial out;
      for (const auto& [m, _] : p.terms) out.terms[m] = 1;
      return out;
    }
    case SemiringKind::Trio: {
      Polynomial out;
      for (const auto& [m, c] : p.terms) out.terms[detail::drop_exponents(m)] += c;
      return out;
    }
    case SemiringKind::Why: {
      Polynomial out;
      for (const auto& [m, _] : p.terms) out.terms[detail::drop_exponents(m)] = 1;
      return out;
    }
    case SemiringKind::PosBool:
      return detail::absorb(normalize(p, SemiringKind::Why));
    case SemiringKind::Which: {
      if (p.is_zero()) return p;
      std::set<std::string> vars = variables(p);
      if (vars.empty()) return Polynomial::one();
      Polynomial out;
      for (const auto& v : vars) out = out + Polynomial::var(v);
      return out;
    }
  }
  return p;
}

// ------------------------------------------------------------- extraction

namespace detail {

// Polynomial extraction and the K-explanation transformations are defined for
// explanations of positive programs whose nodes are all successful.
inline void check_positive_graph(const ProvGraph& g) {
  for (const auto& [_, neg] : g.goal_negated)
    if (neg) throw NegationPresent("the explained program uses negation");
  for (size_t i = 0; i < g.labels.size(); ++i) {
    if (g.labels[i].kind == NodeLabel::Kind::NegTuple ||
        g.labels[i].kind == NodeLabel::Kind::EdbFact)
      throw NegationPresent("node " + canonical(g.labels[i]) + " has no polynomial reading");
    if (g.statuses[i] != Status::T)
      throw NegationPresent("node " + canonical(g.labels[i], g.statuses[i]) +
                            " is not a successful derivation");
  }
}

}  // namespace detail

// Reads the N[X] annotation of a derived tuple off its explanation graph:
// rule nodes multiply their goals, tuple and goal nodes sum their children,
// EDB leaves contribute their annotation variable, comparison goals are
// neutral. Shared subgraphs are evaluated once.
inline Polynomial extract_polynomial(const ProvGraph& g, const std::string& pred,
                                     const Tuple& args, const Instance& annots) {
  detail::check_positive_graph(g);
  int root = g.find(NodeLabel::tuple(pred, args));
  if (root < 0)
    throw Error("tuple " + canonical(NodeLabel::tuple(pred, args)) +
                " is not part of the explanation");
  auto adj = adjacency(g);
  std::map<int, Polynomial> memo;
  auto eval = [&](auto&& self, int n) -> const Polynomial& {
    auto it = memo.find(n);
    if (it != memo.end()) return it->second;
    const NodeLabel& l = g.labels[n];
    Polynomial out;
    if (l.kind == NodeLabel::Kind::Rule) {
      out = Polynomial::one();
      for (int c : adj[n]) out = out * self(self, c);
    } else if (l.kind == NodeLabel::Kind::Tuple && adj[n].empty()) {
      const std::string* a = annots.annotation(l.name, l.args);
      if (!a) throw MissingAnnotation("tuple " + canonical(l) + " has no annotation");
      out = Polynomial::var(*a);
    } else if (adj[n].empty()) {
      out = Polynomial::one();  // comparison goal
    } else {
      for (int c : adj[n]) out = out + self(self, c);
    }
    return memo.emplace(n, std::move(out)).first->second;
  };
  return eval(eval, root);
}

// ------------------------------------------------------- Which contraction

// Contracts rule and goal nodes away: each head tuple connects directly to
// the tuples its derivations used. This is the Which(X) explanation shape.
inline ProvGraph which_graph(const ProvGraph& g) {
  for (const auto& [_, neg] : g.goal_negated)
    if (neg) throw NegationPresent("the explained program uses negation");
  for (const auto& l : g.labels)
    if (l.kind == NodeLabel::Kind::NegTuple || l.kind == NodeLabel::Kind::EdbFact)
      throw NegationPresent("node " + canonical(l) + " has no Which(X) reading");
  ProvGraph out;
  out.edb_preds = g.edb_preds;
  auto adj = adjacency(g);
  for (int r : g.roots) out.roots.push_back(out.add_node(g.labels[r], g.statuses[r]));
  for (size_t n = 0; n < g.labels.size(); ++n) {
    if (g.labels[n].kind != NodeLabel::Kind::Tuple) continue;
    for (int rule : adj[n]) {
      if (g.labels[rule].kind != NodeLabel::Kind::Rule) continue;
      for (int goal : adj[rule]) {
        if (g.labels[goal].kind != NodeLabel::Kind::Goal) continue;
        for (int t : adj[goal]) {
          if (g.labels[t].kind != NodeLabel::Kind::Tuple) continue;
          int a = out.add_node(g.labels[n], g.statuses[n]);
          int b = out.add_node(g.labels[t], g.statuses[t]);
          out.add_edge(a, b);
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------- operator graphs

// K-explanations: tuple nodes read additively, rule nodes multiplicatively,
// EDB tuples become annotation leaves.
struct OpGraph {
  enum class Op { Sum, Product, Leaf };
  enum class Origin { TupleNode, RuleNode, GoalNode, LeafNode };
  struct Node {
    Op op = Op::Sum;
    Origin origin = Origin::TupleNode;
    std::string label;  // tuple text, "+", "*", or the leaf annotation
    std::string annot;  // leaf reading, empty otherwise
  };
  std::vector<Node> nodes;
  std::vector<std::vector<int>> children;
  std::vector<int> roots;

  int add(Op op, Origin origin, std::string label, std::string annot = "") {
    nodes.push_back({op, origin, std::move(label), std::move(annot)});
    children.emplace_back();
    return static_cast<int>(nodes.size()) - 1;
  }
};

inline std::string tuple_text(const NodeLabel& l) {
  std::string s = l.name + "(";
  for (size_t i = 0; i < l.args.size(); ++i) {
    if (i) s += ',';
    s += l.args[i];
  }
  return s + ")";
}

namespace detail {

// Builds the N[X] operator graph: the shape of the explanation with rules as
// products, goals as sums, and annotated leaves. Comparison goals multiply
// by one, so they vanish.
inline OpGraph nx_graph(const ProvGraph& g, const Instance& annots) {
  OpGraph out;
  auto adj = adjacency(g);
  std::vector<int> map(g.labels.size(), -1);
  auto build = [&](auto&& self, int n) -> int {
    if (map[n] >= 0) return map[n];
    const NodeLabel& l = g.labels[n];
    int id;
    if (l.kind == NodeLabel::Kind::Tuple && adj[n].empty()) {
      const std::string* a = annots.annotation(l.name, l.args);
      if (!a) throw MissingAnnotation("tuple " + canonical(l) + " has no annotation");
      id = out.add(OpGraph::Op::Leaf, OpGraph::Origin::LeafNode, *a, *a);
    } else if (l.kind == NodeLabel::Kind::Rule) {
      id = out.add(OpGraph::Op::Product, OpGraph::Origin::RuleNode, "*");
      map[n] = id;
      for (int c : adj[n]) {
        if (g.labels[c].kind == NodeLabel::Kind::Goal && adj[c].empty()) continue;
        int built = self(self, c);
        out.children[id].push_back(built);
      }
    } else {
      bool goal = l.kind == NodeLabel::Kind::Goal;
      id = out.add(OpGraph::Op::Sum, goal ? OpGraph::Origin::GoalNode : OpGraph::Origin::TupleNode,
                   goal ? "+" : tuple_text(l));
      map[n] = id;
      for (int c : adj[n]) {
        int built = self(self, c);
        out.children[id].push_back(built);
      }
    }
    map[n] = id;
    return id;
  };
  for (int r : g.roots) out.roots.push_back(build(build, r));
  return out;
}

// Rebuilds the graph keeping only nodes reachable from the roots, mapping
// every node through rep first and dropping duplicate children.
inline OpGraph rebuild(const OpGraph& g, const std::vector<int>& rep) {
  OpGraph out;
  std::map<int, int> map;
  auto build = [&](auto&& self, int n) -> int {
    n = rep[n];
    auto it = map.find(n);
    if (it != map.end()) return it->second;
    const OpGraph::Node& node = g.nodes[n];
    int id = out.add(node.op, node.origin, node.label, node.annot);
    map[n] = id;
    std::set<int> seen;
    for (int c : g.children[n]) {
      int built = self(self, c);
      if (seen.insert(built).second) out.children[id].push_back(built);
    }
    return id;
  };
  for (int r : g.roots) out.roots.push_back(build(build, r));
  return out;
}

// Collapses rule nodes whose subgraphs are isomorphic (x + x = x at the
// parent sum). Goal identity and child multiplicity stay significant, so
// multiplication keeps its exponents.
inline OpGraph merge_products(const OpGraph& g) {
  std::vector<std::string> canon(g.nodes.size());
  std::vector<bool> done(g.nodes.size(), false);
  auto key = [&](auto&& self, int n) -> const std::string& {
    if (done[n]) return canon[n];
    const OpGraph::Node& node = g.nodes[n];
    std::vector<std::string> kids;
    for (int c : g.children[n]) kids.push_back(self(self, c));
    std::sort(kids.begin(), kids.end());
    std::string s;
    switch (node.op) {
      case OpGraph::Op::Leaf: s = "v:" + node.annot; break;
      case OpGraph::Op::Product: s = "*"; break;
      case OpGraph::Op::Sum:
        s = node.origin == OpGraph::Origin::GoalNode ? "+" : "t:" + node.label;
        break;
    }
    s += "(";
    for (size_t i = 0; i < kids.size(); ++i) {
      if (i) s += ";";
      s += kids[i];
    }
    s += ")";
    done[n] = true;
    return canon[n] = s;
  };
  std::vector<int> rep(g.nodes.size());
  std::map<std::string, int> first;
  for (size_t n = 0; n < g.nodes.size(); ++n) {
    rep[n] = static_cast<int>(n);
    if (g.nodes[n].op != OpGraph::Op::Product) continue;
    auto [it, fresh] = first.emplace(key(key, static_cast<int>(n)), static_cast<int>(n));
    rep[n] = it->second;
  }
  return rebuild(g, rep);
}

// Drops goal nodes, wiring their children straight into the parent rule.
// Multiplicity is preserved; exponent collapse is the reader's job, since
// dropping duplicate children would also collapse products of shared
// subterms, which no kind here licenses.
inline OpGraph drop_goals(const OpGraph& g) {
  OpGraph out;
  std::map<int, int> map;
  auto build = [&](auto&& self, int n) -> int {
    auto it = map.find(n);
    if (it != map.end()) return it->second;
    const OpGraph::Node& node = g.nodes[n];
    int id = out.add(node.op, node.origin, node.label, node.annot);
    map[n] = id;
    auto attach = [&](auto&& attach_self, int c) -> void {
      if (g.nodes[c].origin == OpGraph::Origin::GoalNode) {
        for (int cc : g.children[c]) attach_self(attach_self, cc);
        return;
      }
      int built = self(self, c);
      out.children[id].push_back(built);
    };
    for (int c : g.children[n]) attach(attach, c);
    return id;
  };
  for (int r : g.roots) out.roots.push_back(build(build, r));
  return out;
}

}  // namespace detail

// Evaluates the operator graph in the given semiring; shared nodes once.
inline Polynomial read_polynomial(const OpGraph& g, int node, SemiringKind kind) {
  std::map<int, Polynomial> memo;
  auto eval = [&](auto&& self, int n) -> const Polynomial& {
    auto it = memo.find(n);
    if (it != memo.end()) return it->second;
    Polynomial out;
    switch (g.nodes[n].op) {
      case OpGraph::Op::Leaf: out = Polynomial::var(g.nodes[n].annot); break;
      case OpGraph::Op::Product:
        out = Polynomial::one();
        for (int c : g.children[n]) out = out * self(self, c);
        break;
      case OpGraph::Op::Sum:
        for (int c : g.children[n]) out = out + self(self, c);
        break;
    }
    out = normalize(out, kind);
    return memo.emplace(n, std::move(out)).first->second;
  };
  return eval(eval, node);
}

namespace detail {

// PosBool pruning: under each additive node, drop product children whose
// value is absorbed by a sibling (x + x*y = x on the read polynomials).
inline OpGraph absorb_products(const OpGraph& g) {
  auto absorbs = [](const Polynomial& a, const Polynomial& b) {
    auto subset = [](const Monomial& x, const Monomial& y) {
      for (const auto& [v, _] : x)
        if (!y.count(v)) return false;
      return true;
    };
    for (const auto& [mb, _] : b.terms) {
      bool covered = false;
      for (const auto& [ma, __] : a.terms)
        if (subset(ma, mb)) {
          covered = true;
          break;
        }
      if (!covered) return false;
    }
    return true;
  };
  OpGraph out = g;
  std::map<int, Polynomial> value;
  auto val = [&](int n) -> const Polynomial& {
    auto it = value.find(n);
    if (it != value.end()) return it->second;
    return value.emplace(n, read_polynomial(g, n, SemiringKind::PosBool)).first->second;
  };
  for (size_t n = 0; n < out.nodes.size(); ++n) {
    if (out.nodes[n].op != OpGraph::Op::Sum) continue;
    std::vector<int> kept;
    for (int c : out.children[n]) {
      bool covered = false;
      for (int k : kept)
        if (absorbs(val(k), val(c))) {
          covered = true;
          break;
        }
      if (covered) continue;
      std::erase_if(kept, [&](int k) { return absorbs(val(c), val(k)); });
      kept.push_back(c);
    }
    out.children[n] = std::move(kept);
  }
  std::vector<int> identity(out.nodes.size());
  for (size_t i = 0; i < identity.size(); ++i) identity[i] = static_cast<int>(i);
  return detail::rebuild(out, identity);
}

}  // namespace detail

// Transforms a full explanation of a positive program into the operator
// graph of the requested provenance semiring.
inline OpGraph transform_graph(const ProvGraph& g, SemiringKind kind, const Instance& annots) {
  detail::check_positive_graph(g);
  if (kind == SemiringKind::Which) {
    ProvGraph w = which_graph(g);
    OpGraph out;
    auto adj = adjacency(w);
    std::vector<int> map(w.labels.size(), -1);
    auto build = [&](auto&& self, int n) -> int {
      if (map[n] >= 0) return map[n];
      const NodeLabel& l = w.labels[n];
      int id;
      if (adj[n].empty()) {
        const std::string* a = annots.annotation(l.name, l.args);
        if (!a) throw MissingAnnotation("tuple " + canonical(l) + " has no annotation");
        id = out.add(OpGraph::Op::Leaf, OpGraph::Origin::LeafNode, tuple_text(l), *a);
      } else {
        id = out.add(OpGraph::Op::Sum, OpGraph::Origin::TupleNode, tuple_text(l));
        map[n] = id;
        for (int c : adj[n]) {
          int built = self(self, c);
          out.children[id].push_back(built);
        }
      }
      map[n] = id;
      return id;
    };
    for (int r : w.roots) out.roots.push_back(build(build, r));
    return out;
  }
  OpGraph out = detail::nx_graph(g, annots);
  switch (kind) {
    case SemiringKind::NX: break;
    case SemiringKind::BX: out = detail::merge_products(out); break;
    case SemiringKind::Trio: out = detail::drop_goals(out); break;
    case SemiringKind::Why: out = detail::drop_goals(detail::merge_products(out)); break;
    case SemiringKind::PosBool:
      out = detail::absorb_products(detail::drop_goals(detail::merge_products(out)));
      break;
    default: break;
  }
  return out;
}

// ------------------------------------------------------ rendering & metrics

namespace detail {

// Follows unary interior nodes down to the node actually drawn for them.
inline int drawn_rep(const OpGraph& g, int n) {
  while (g.nodes[n].op != OpGraph::Op::Leaf && g.children[n].size() == 1) n = g.children[n][0];
  return n;
}

struct Expr {
  char op;  // '+', '*', or 'v'
  std::string text;
};

inline Expr expr_of(const OpGraph& g, int n) {
  n = drawn_rep(g, n);
  const OpGraph::Node& node = g.nodes[n];
  if (node.op == OpGraph::Op::Leaf) return {'v', node.annot.empty() ? node.label : node.annot};
  char op = node.op == OpGraph::Op::Product ? '*' : '+';
  std::vector<Expr> kids;
  auto flatten = [&](auto&& self, int c) -> void {
    Expr e = expr_of(g, c);
    if (e.op == op) {
      for (int cc : g.children[drawn_rep(g, c)]) self(self, cc);
      return;
    }
    kids.push_back(std::move(e));
  };
  for (int c : g.children[n]) flatten(flatten, c);
  if (kids.empty()) return {'v', op == '*' ? "1" : "0"};
  std::stable_sort(kids.begin(), kids.end(),
                   [](const Expr& a, const Expr& b) { return a.text < b.text; });
  Expr out{op, ""};
  for (const Expr& k : kids) {
    if (!out.text.empty()) out.text += op;
    out.text += (op == '*' && k.op == '+') ? "(" + k.text + ")" : k.text;
  }
  return out;
}

}  // namespace detail

// Expression text of the graph below `node`, unary chains collapsed and
// operands sorted: (s1+s2+t1+t2)*(u1+u2).
inline std::string to_text(const OpGraph& g, int node) {
  return detail::expr_of(g, node).text;
}

// Node count as the graph is drawn: unary chains collapse, shared interior
// nodes count once, leaves count once per use.
inline size_t drawn_size(const OpGraph& g, int root) {
  std::set<int> seen;
  size_t count = 0;
  auto walk = [&](auto&& self, int n) -> void {
    n = detail::drawn_rep(g, n);
    if (g.nodes[n].op == OpGraph::Op::Leaf) {
      ++count;  // leaves are drawn once per use
      return;
    }
    if (!seen.insert(n).second) return;
    ++count;
    for (int c : g.children[n]) self(self, c);
  };
  walk(walk, root);
  return count;
}

inline std::string to_dot(const OpGraph& g) {
  std::ostringstream out;
  out << "digraph opgraph {\n  rankdir=TB;\n";
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const OpGraph::Node& n = g.nodes[i];
    std::string shape, label = n.label;
    switch (n.op) {
      case OpGraph::Op::Leaf: shape = "circle"; break;
      case OpGraph::Op::Product: shape = "box"; label = "*"; break;
      case OpGraph::Op::Sum:
        shape = n.origin == OpGraph::Origin::TupleNode ? "ellipse" : "circle";
        break;
    }
    out << "  n" << i << " [label=\"" << label << "\", shape=" << shape << "];\n";
  }
  for (size_t i = 0; i < g.nodes.size(); ++i)
    for (int c : g.children[i]) out << "  n" << i << " -> n" << c << ";\n";
  out << "}\n";
  return out.str();
}

}  // namespace provlog
