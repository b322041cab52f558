#pragma once

// Firing-rule rewriting: compile a program and a provenance question into a
// datalog program whose evaluation yields the explanation's edge relation,
// without materializing the full provenance graph.
//
// Pipeline: unify (push question constants into rule copies), annotate
// (decide which success/failure sides matter), firing rules (capture variable
// bindings of successful and failed derivations), connectivity (restrict to
// derivations reachable from the matched nodes), edge decoding.
//
// Generated predicate names are reserved: FIRE_<pred>_<T|F|FT>,
// FIRE_<rid>_<T|F>, FIRE_CMP_<rid>_<j>, DOM_<pred>_<pos>, REACH_<pred>_<T|F>,
// FC_<rid>_<T|F>, MATCHED_<T|F>, and the helper relation BOOLNEG.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "provlog/datalog.hpp"
#include "provlog/graph.hpp"

namespace provlog {

// bit 1: success side matters, bit 2: failure side matters
constexpr int kAnnotT = 1;
constexpr int kAnnotF = 2;
constexpr int kAnnotFT = kAnnotT | kAnnotF;

inline std::string annot_text(int annot) {
  switch (annot) {
    case kAnnotT: return "T";
    case kAnnotF: return "F";
    case kAnnotFT: return "F/T";
  }
  return "-";
}

// One partially unified copy of a program rule. The binding records the
// variables fixed by pushing question constants down; applying it to the
// original rule reproduces `rule`.
struct UnifiedRule {
  size_t rule_index = 0;
  std::map<std::string, std::string> binding;
  Rule rule;
  int annot = 0;
};

enum class ExplainKind { Full, Which };

struct RewriteStages {
  std::string unified;
  std::string annotated;
  std::string firing;
  std::string connected;
  std::string edges;
};

// A node pattern of an edge rule, instantiated per connected firing.
struct NodeSpec {
  NodeLabel::Kind kind = NodeLabel::Kind::Tuple;
  std::string name;
  int goal_index = 0;
  std::vector<Term> args;
  Status status = Status::T;
};

// One edge rule over a connected-firing relation. An edge with a slot
// variable only exists for firings where that goal failed.
struct EdgeTemplate {
  std::string relation;
  std::vector<Term> relation_args;
  std::string slot_var;  // empty: unconditional
  NodeSpec src, dst;
};

inline std::string to_text(const NodeSpec& spec) {
  NodeLabel l;
  l.kind = spec.kind;
  l.name = spec.name;
  l.goal_index = spec.goal_index;
  for (const auto& t : spec.args) l.args.push_back(t.text);
  return canonical(l, spec.status);
}

inline std::string to_text(const EdgeTemplate& e) {
  std::string out = "edge(" + to_text(e.src) + ", " + to_text(e.dst) + ") :- " + e.relation + "(";
  for (size_t i = 0; i < e.relation_args.size(); ++i) {
    if (i) out += ",";
    out += e.relation_args[i].text;
  }
  out += ")";
  if (!e.slot_var.empty()) out += ", " + e.slot_var + " = false";
  return out + ".";
}

namespace detail {

// Constants by position; a disengaged entry is an unconstrained position.
using Mask = std::vector<std::optional<std::string>>;

inline Mask mask_of(const std::vector<Term>& args) {
  Mask m;
  m.reserve(args.size());
  for (const auto& t : args) {
    if (t.is_var)
      m.push_back(std::nullopt);
    else
      m.push_back(t.text);
  }
  return m;
}

inline std::string mask_key(const std::string& pred, const Mask& m) {
  std::string key = pred;
  for (const auto& c : m) {
    key += '\x1f';
    key += c ? *c : "\x01var";
  }
  return key;
}

inline std::string binding_key(size_t rule_index, const std::map<std::string, std::string>& b) {
  std::string key = std::to_string(rule_index);
  for (const auto& [var, val] : b) {
    key += '\x1f';
    key += var;
    key += '=';
    key += val;
  }
  return key;
}

// Unify a rule head against a constant mask. Fails on conflicting constants.
inline bool unify_head(const Rule& r, const Mask& mask,
                       std::map<std::string, std::string>& binding) {
  binding.clear();
  for (size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const Term& h = r.head.args[i];
    if (!h.is_var) {
      if (h.text != *mask[i]) return false;
      continue;
    }
    auto [it, fresh] = binding.emplace(h.text, *mask[i]);
    if (!fresh && it->second != *mask[i]) return false;
  }
  return true;
}

inline Term substitute(const Term& t, const std::map<std::string, std::string>& b) {
  if (!t.is_var) return t;
  auto it = b.find(t.text);
  return it == b.end() ? t : Term::cst(it->second);
}

inline Rule apply_binding(const Rule& r, const std::map<std::string, std::string>& b) {
  Rule out = r;
  for (auto& t : out.head.args) t = substitute(t, b);
  for (auto& l : out.body) {
    if (l.compare()) {
      l.lhs = substitute(l.lhs, b);
      l.rhs = substitute(l.rhs, b);
    } else {
      for (auto& t : l.atom.args) t = substitute(t, b);
    }
  }
  return out;
}

struct AtomCopy {
  std::string pred;
  Mask mask;
  int annot = 0;
  bool edb = false;
};

// The unification structure: atom copies (predicate plus constant mask) and
// rule copies (rule plus binding), linked by which copy derives which atom
// and which atom each body goal refers to.
struct RewriteModel {
  const Program* program = nullptr;
  std::vector<AtomCopy> atoms;
  std::vector<UnifiedRule> copies;
  std::vector<std::vector<int>> atom_copies;     // per atom: deriving copies
  std::vector<std::vector<int>> copy_goal_atom;  // per copy, per literal: atom or -1
  std::map<std::string, int> atom_index;
  std::map<std::string, int> copy_index;
  int root = -1;
};

inline RewriteModel build_model(const Program& p, const ProvQuestion& q) {
  RewriteModel m;
  m.program = &p;
  std::set<std::string> edb = edb_predicates(p);

  auto intern_atom = [&](const std::string& pred, Mask mask) {
    std::string key = mask_key(pred, mask);
    auto it = m.atom_index.find(key);
    if (it != m.atom_index.end()) return it->second;
    int id = static_cast<int>(m.atoms.size());
    m.atoms.push_back({pred, std::move(mask), 0, edb.count(pred) > 0});
    m.atom_copies.emplace_back();
    m.atom_index.emplace(std::move(key), id);
    return id;
  };

  m.root = intern_atom(q.pattern.pred, mask_of(q.pattern.args));
  for (size_t a = 0; a < m.atoms.size(); ++a) {
    if (m.atoms[a].edb) continue;
    for (size_t i = 0; i < p.rules.size(); ++i) {
      const Rule& r = p.rules[i];
      if (r.head.pred != m.atoms[a].pred) continue;
      std::map<std::string, std::string> binding;
      if (!unify_head(r, m.atoms[a].mask, binding)) continue;
      std::string key = binding_key(i, binding);
      auto it = m.copy_index.find(key);
      int copy;
      if (it != m.copy_index.end()) {
        copy = it->second;
      } else {
        copy = static_cast<int>(m.copies.size());
        m.copies.push_back({i, binding, apply_binding(r, binding), 0});
        m.copy_index.emplace(std::move(key), copy);
        std::vector<int> goals;
        for (const auto& l : m.copies[copy].rule.body) {
          if (l.compare())
            goals.push_back(-1);
          else
            goals.push_back(intern_atom(l.atom.pred, mask_of(l.atom.args)));
        }
        m.copy_goal_atom.push_back(std::move(goals));
      }
      m.atom_copies[a].push_back(copy);
    }
  }
  return m;
}

// Which statuses of a goal's tuple matter, given the statuses that matter
// for the rule: the success side follows goal polarity, the failure side
// needs both (a failed derivation records every goal's status).
inline int goal_contribution(int rule_annot, bool negated) {
  int out = 0;
  if (rule_annot & kAnnotF) out |= kAnnotFT;
  if (rule_annot & kAnnotT) out |= negated ? kAnnotF : kAnnotT;
  return out;
}

inline void annotate_model(RewriteModel& m, const ProvQuestion& q) {
  m.atoms[m.root].annot = q.why() ? kAnnotT : kAnnotF;
  std::vector<int> todo = {m.root};
  while (!todo.empty()) {
    int a = todo.back();
    todo.pop_back();
    for (int c : m.atom_copies[a]) {
      int merged = m.copies[c].annot | m.atoms[a].annot;
      if (merged == m.copies[c].annot) continue;
      m.copies[c].annot = merged;
      const Rule& rule = m.copies[c].rule;
      for (size_t j = 0; j < rule.body.size(); ++j) {
        int child = m.copy_goal_atom[c][j];
        if (child < 0) continue;
        int bits = goal_contribution(merged, rule.body[j].negated());
        int next = m.atoms[child].annot | bits;
        if (next != m.atoms[child].annot) {
          m.atoms[child].annot = next;
          todo.push_back(child);
        }
      }
    }
  }
}

inline std::vector<Term> mask_terms(const Mask& mask) {
  std::vector<Term> out;
  out.reserve(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) {
    if (mask[i])
      out.push_back(Term::cst(*mask[i]));
    else
      out.push_back(Term::var("X" + std::to_string(i + 1)));
  }
  return out;
}

inline std::string fire_pred(const std::string& base, int annot) {
  return "FIRE_" + base + "_" + (annot == kAnnotFT ? "FT" : annot == kAnnotT ? "T" : "F");
}

inline std::string dom_pred(const std::string& pred, size_t pos) {
  return "DOM_" + pred + "_" + std::to_string(pos + 1);
}

// Fresh variable names that cannot clash with the rule's own variables.
inline std::string fresh_var(const std::string& base, const std::set<std::string>& used) {
  std::string name = base;
  while (used.count(name)) name += "0";
  return name;
}

inline std::set<std::string> rule_vars(const Rule& r) {
  std::set<std::string> vars;
  for (const auto& t : rule_full_args(r))
    if (t.is_var) vars.insert(t.text);
  return vars;
}

// Collects generated rules, deduplicating repeats from copies reachable
// through more than one atom.
struct RuleSink {
  Program program;
  std::set<std::string> seen;
  std::set<std::pair<std::string, int>> dom_atoms;
  bool boolneg = false;

  void add(Rule r) {
    r.id = "g" + std::to_string(program.rules.size() + 1);
    std::string text = to_text(r);
    if (!seen.insert(text).second) return;
    program.rules.push_back(std::move(r));
  }
  Literal dom_goal(const std::string& pred, size_t pos, Term t) {
    dom_atoms.insert({pred, static_cast<int>(pos)});
    return Literal::pos(Atom{dom_pred(pred, pos), {std::move(t)}});
  }
};

inline CmpOp inverted_op(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return CmpOp::Ne;
    case CmpOp::Ne: return CmpOp::Eq;
    case CmpOp::Lt: return CmpOp::Ge;
    case CmpOp::Le: return CmpOp::Gt;
    case CmpOp::Gt: return CmpOp::Le;
    case CmpOp::Ge: return CmpOp::Lt;
  }
  return CmpOp::Eq;
}

// Aux predicate evaluating one comparison goal to a boolean status column,
// with domain guards making both branches safe.
inline std::string emit_cmp_aux(RuleSink& sink, const Rule& original, size_t j,
                                std::set<std::string>& emitted) {
  std::string pred = "FIRE_CMP_" + original.id + "_" + std::to_string(j + 1);
  if (!emitted.insert(pred).second) return pred;
  const Literal& cmp = original.body[j];
  std::vector<Term> head;
  std::vector<Literal> guards;
  std::set<std::string> seen_vars;
  for (const Term* t : {&cmp.lhs, &cmp.rhs}) {
    if (!t->is_var || !seen_vars.insert(t->text).second) continue;
    head.push_back(*t);
    std::set<std::pair<std::string, size_t>> seen_attrs;
    for (const auto& attr : body_attrs(original, t->text))
      if (seen_attrs.insert({attr.pred, attr.pos}).second)
        guards.push_back(sink.dom_goal(attr.pred, attr.pos, *t));
  }
  for (bool truth : {true, false}) {
    Rule r;
    std::vector<Term> args = head;
    args.push_back(Term::cst(truth ? "true" : "false"));
    r.head = Atom{pred, std::move(args)};
    r.body = guards;
    r.body.push_back(Literal::cmp(cmp.lhs, truth ? cmp.op : inverted_op(cmp.op), cmp.rhs));
    sink.add(std::move(r));
  }
  return pred;
}

// A variable the question bound to a constant still has to satisfy the
// domains of every body position it occupies, exactly like the groundings
// of the unbound rule. Emitted as ground domain goals.
inline std::vector<Literal> binding_guards(RuleSink& sink, const Rule& original,
                                           const UnifiedRule& copy) {
  std::vector<Literal> out;
  std::set<std::tuple<std::string, size_t, std::string>> seen;
  for (const auto& [var, val] : copy.binding)
    for (const auto& attr : body_attrs(original, var))
      if (seen.insert({attr.pred, attr.pos, val}).second)
        out.push_back(sink.dom_goal(attr.pred, attr.pos, Term::cst(val)));
  return out;
}

inline void emit_firing(const RewriteModel& m, RuleSink& sink) {
  const Program& p = *m.program;
  std::set<int> success_done, failure_done;
  std::set<std::string> cmp_done;
  for (size_t a = 0; a < m.atoms.size(); ++a) {
    const AtomCopy& atom = m.atoms[a];
    if (atom.annot == 0) continue;
    std::vector<Term> terms = mask_terms(atom.mask);
    if (atom.edb && (atom.annot & kAnnotT))
      sink.add(Rule{"", Atom{fire_pred(atom.pred, kAnnotT), terms},
                    {Literal::pos(Atom{atom.pred, terms})}});
    if (atom.annot & kAnnotF) {
      Rule r{"", Atom{fire_pred(atom.pred, kAnnotF), terms}, {}};
      for (size_t i = 0; i < terms.size(); ++i)
        if (terms[i].is_var) r.body.push_back(sink.dom_goal(atom.pred, i, terms[i]));
      if (atom.edb)
        r.body.push_back(Literal::neg(Atom{atom.pred, terms}));
      else
        r.body.push_back(Literal::neg(Atom{fire_pred(atom.pred, kAnnotT), terms}));
      sink.add(std::move(r));
    }
    if (atom.annot == kAnnotFT) {
      for (bool truth : {true, false}) {
        std::vector<Term> args = terms;
        args.push_back(Term::cst(truth ? "true" : "false"));
        sink.add(Rule{"", Atom{fire_pred(atom.pred, kAnnotFT), std::move(args)},
                      {Literal::pos(
                          Atom{fire_pred(atom.pred, truth ? kAnnotT : kAnnotF), terms})}});
      }
    }
    if (atom.edb) continue;

    for (int c : m.atom_copies[a]) {
      const UnifiedRule& copy = m.copies[c];
      const Rule& rule = copy.rule;
      const Rule& original = p.rules[copy.rule_index];
      std::vector<Term> full = rule_full_args(rule);
      // derivations of the predicate through this copy
      sink.add(Rule{"", Atom{fire_pred(atom.pred, kAnnotT), rule.head.args},
                    {Literal::pos(Atom{fire_pred(original.id, kAnnotT), full})}});
      if (success_done.insert(c).second) {
        Rule r{"", Atom{fire_pred(original.id, kAnnotT), full},
               binding_guards(sink, original, copy)};
        for (const auto& l : rule.body) {
          if (l.compare())
            r.body.push_back(l);
          else
            r.body.push_back(Literal::pos(
                Atom{fire_pred(l.atom.pred, l.negated() ? kAnnotF : kAnnotT), l.atom.args}));
        }
        sink.add(std::move(r));
      }
      if ((copy.annot & kAnnotF) && failure_done.insert(c).second) {
        std::set<std::string> used = rule_vars(original);
        std::vector<Term> head = full;
        Rule r{"", Atom{},
               {Literal::pos(Atom{fire_pred(atom.pred, kAnnotF), rule.head.args})}};
        for (auto& g : binding_guards(sink, original, copy)) r.body.push_back(std::move(g));
        for (size_t j = 0; j < rule.body.size(); ++j) {
          const Literal& l = rule.body[j];
          Term slot = Term::var(fresh_var("V" + std::to_string(j + 1), used));
          used.insert(slot.text);
          if (l.compare()) {
            std::string aux = emit_cmp_aux(sink, original, j, cmp_done);
            std::vector<Term> args;
            std::set<std::string> seen_vars;
            for (const Term* t : {&original.body[j].lhs, &original.body[j].rhs}) {
              if (!t->is_var || !seen_vars.insert(t->text).second) continue;
              args.push_back(substitute(*t, copy.binding));
            }
            args.push_back(slot);
            r.body.push_back(Literal::pos(Atom{aux, std::move(args)}));
          } else if (l.negated()) {
            Term exists = Term::var(fresh_var("W" + std::to_string(j + 1), used));
            used.insert(exists.text);
            std::vector<Term> args = l.atom.args;
            args.push_back(exists);
            r.body.push_back(
                Literal::pos(Atom{fire_pred(l.atom.pred, kAnnotFT), std::move(args)}));
            r.body.push_back(Literal::pos(Atom{"BOOLNEG", {exists, slot}}));
            sink.boolneg = true;
          } else {
            std::vector<Term> args = l.atom.args;
            args.push_back(slot);
            r.body.push_back(
                Literal::pos(Atom{fire_pred(l.atom.pred, kAnnotFT), std::move(args)}));
          }
          head.push_back(slot);
        }
        r.head = Atom{fire_pred(original.id, kAnnotF), std::move(head)};
        sink.add(std::move(r));
      }
    }
  }
}

// Per-rule annotation flavors, merged over all copies of the rule.
inline std::map<size_t, int> rule_flavors(const RewriteModel& m) {
  std::map<size_t, int> out;
  for (const auto& c : m.copies) out[c.rule_index] |= c.annot;
  return out;
}

// Statuses under which each derived predicate's tuple nodes can be reached
// from the matched nodes. A failed rule only connects its failed goals, so
// reachability is narrower than the firing annotations.
inline std::map<std::string, int> reach_map(const RewriteModel& m, const ProvQuestion& q) {
  const Program& p = *m.program;
  std::set<std::string> edb = edb_predicates(p);
  std::map<size_t, int> flavors = rule_flavors(m);
  std::map<std::string, int> reach;
  int root_bit = q.why() ? kAnnotT : kAnnotF;
  reach[q.pattern.pred] = root_bit;
  std::vector<std::pair<std::string, int>> todo = {{q.pattern.pred, root_bit}};
  while (!todo.empty()) {
    auto [pred, bit] = todo.back();
    todo.pop_back();
    for (size_t i = 0; i < p.rules.size(); ++i) {
      const Rule& r = p.rules[i];
      if (r.head.pred != pred) continue;
      auto it = flavors.find(i);
      if (it == flavors.end() || !(it->second & bit)) continue;
      for (const auto& l : r.body) {
        if (l.compare() || edb.count(l.atom.pred)) continue;
        bool child_true = (bit == kAnnotT) != l.negated();
        int child = child_true ? kAnnotT : kAnnotF;
        int& bits = reach[l.atom.pred];
        if (bits & child) continue;
        bits |= child;
        todo.push_back({l.atom.pred, child});
      }
    }
  }
  return reach;
}

// Slot variables of a rule's failure firing head, in goal order.
inline std::vector<Term> slot_vars(const Rule& original) {
  std::set<std::string> used = rule_vars(original);
  std::vector<Term> slots;
  for (size_t j = 0; j < original.body.size(); ++j) {
    Term slot = Term::var(fresh_var("V" + std::to_string(j + 1), used));
    used.insert(slot.text);
    slots.push_back(slot);
  }
  return slots;
}

// Rules restricting firings to derivations reachable from the matched
// nodes: REACH_<pred> carries reached tuple nodes by status, FC_<rid> the
// reached rule derivations.
inline void emit_connectivity(const RewriteModel& m, const ProvQuestion& q, RuleSink& sink) {
  const Program& p = *m.program;
  int root_bit = q.why() ? kAnnotT : kAnnotF;
  std::string suffix = q.why() ? "_T" : "_F";
  sink.add(Rule{"", Atom{"REACH_" + q.pattern.pred + suffix, q.pattern.args},
                {Literal::pos(Atom{fire_pred(q.pattern.pred, root_bit), q.pattern.args})}});
  sink.add(Rule{"", Atom{"MATCHED" + suffix, q.pattern.args},
                {Literal::pos(Atom{fire_pred(q.pattern.pred, root_bit), q.pattern.args})}});

  std::map<size_t, int> flavors = rule_flavors(m);
  std::map<std::string, int> reach = reach_map(m, q);
  std::set<std::string> edb = edb_predicates(p);
  std::vector<std::string> todo = {q.pattern.pred};
  std::set<std::string> done = {q.pattern.pred};
  while (!todo.empty()) {
    std::string pred = todo.front();
    todo.erase(todo.begin());
    for (size_t i = 0; i < p.rules.size(); ++i) {
      const Rule& r = p.rules[i];
      if (r.head.pred != pred || !flavors.count(i)) continue;
      int annot = flavors[i] & reach[pred];
      if (!annot) continue;
      std::vector<Term> full = rule_full_args(r);
      std::vector<Term> slots = slot_vars(r);
      std::vector<Term> full_slots = full;
      full_slots.insert(full_slots.end(), slots.begin(), slots.end());
      if (annot & kAnnotT)
        sink.add(Rule{"", Atom{"FC_" + r.id + "_T", full},
                      {Literal::pos(Atom{"REACH_" + pred + "_T", r.head.args}),
                       Literal::pos(Atom{fire_pred(r.id, kAnnotT), full})}});
      if (annot & kAnnotF)
        sink.add(Rule{"", Atom{"FC_" + r.id + "_F", full_slots},
                      {Literal::pos(Atom{"REACH_" + pred + "_F", r.head.args}),
                       Literal::pos(Atom{fire_pred(r.id, kAnnotF), full_slots})}});
      for (size_t j = 0; j < r.body.size(); ++j) {
        const Literal& l = r.body[j];
        if (l.compare() || edb.count(l.atom.pred)) continue;
        if (annot & kAnnotT) {
          std::string status = l.negated() ? "_F" : "_T";
          sink.add(Rule{"", Atom{"REACH_" + l.atom.pred + status, l.atom.args},
                        {Literal::pos(Atom{"FC_" + r.id + "_T", full})}});
        }
        if (annot & kAnnotF) {
          std::string status = l.negated() ? "_T" : "_F";
          sink.add(Rule{"", Atom{"REACH_" + l.atom.pred + status, l.atom.args},
                        {Literal::pos(Atom{"FC_" + r.id + "_F", full_slots}),
                         Literal::cmp(slots[j], CmpOp::Eq, Term::cst("false"))}});
        }
        if (done.insert(l.atom.pred).second) todo.push_back(l.atom.pred);
      }
    }
  }
}

inline std::vector<EdgeTemplate> edge_templates(const RewriteModel& m, const ProvQuestion& q,
                                                ExplainKind kind) {
  const Program& p = *m.program;
  std::map<size_t, int> flavors = rule_flavors(m);
  std::map<std::string, int> reach = reach_map(m, q);
  std::vector<EdgeTemplate> out;
  for (size_t i = 0; i < p.rules.size(); ++i) {
    if (!flavors.count(i)) continue;
    const Rule& r = p.rules[i];
    int annot = flavors[i] & reach[r.head.pred];
    std::vector<Term> full = rule_full_args(r);
    std::vector<Term> slots = slot_vars(r);
    std::vector<Term> full_slots = full;
    full_slots.insert(full_slots.end(), slots.begin(), slots.end());
    for (int flavor : {kAnnotT, kAnnotF}) {
      if (!(annot & flavor)) continue;
      bool success = flavor == kAnnotT;
      std::string fc = "FC_" + r.id + (success ? "_T" : "_F");
      const std::vector<Term>& fc_args = success ? full : full_slots;
      Status rule_status = success ? Status::T : Status::F;
      NodeSpec head{NodeLabel::Kind::Tuple, r.head.pred, 0, r.head.args, rule_status};
      NodeSpec rule_node{NodeLabel::Kind::Rule, r.id, 0, full, rule_status};
      if (kind == ExplainKind::Full)
        out.push_back({fc, fc_args, "", head, rule_node});
      for (size_t j = 0; j < r.body.size(); ++j) {
        const Literal& l = r.body[j];
        std::string slot = success ? "" : slots[j].text;
        Status tuple_status = (success != l.negated()) ? Status::T : Status::F;
        if (kind == ExplainKind::Which) {
          if (l.compare()) continue;
          NodeSpec dst{NodeLabel::Kind::Tuple, l.atom.pred, 0, l.atom.args, tuple_status};
          out.push_back({fc, fc_args, slot, head, dst});
          continue;
        }
        std::vector<Term> goal_args;
        if (l.compare())
          goal_args = {l.lhs, l.rhs};
        else
          goal_args = l.atom.args;
        NodeSpec goal{NodeLabel::Kind::Goal, r.id, static_cast<int>(j + 1), goal_args,
                      rule_status};
        out.push_back({fc, fc_args, slot, rule_node, goal});
        if (!l.compare()) {
          NodeSpec dst{NodeLabel::Kind::Tuple, l.atom.pred, 0, l.atom.args, tuple_status};
          out.push_back({fc, fc_args, slot, goal, dst});
        }
      }
    }
  }
  return out;
}

inline const std::set<Tuple>& relation_tuples(const Instance& inst, const std::string& pred) {
  static const std::set<Tuple> empty;
  auto it = inst.relations.find(pred);
  return it == inst.relations.end() ? empty : it->second.tuples;
}

inline NodeLabel instantiate(const NodeSpec& spec,
                             const std::map<std::string, std::string>& env) {
  NodeLabel l;
  l.kind = spec.kind;
  l.name = spec.name;
  l.goal_index = spec.goal_index;
  for (const auto& t : spec.args) l.args.push_back(t.is_var ? env.at(t.text) : t.text);
  return l;
}

inline void reject_negation(const Program& p) {
  for (const auto& r : p.rules)
    for (const auto& l : r.body)
      if (l.negated())
        throw NegationNotSupported("which-provenance requires a program without negation");
}

}  // namespace detail

// ----------------------------------------------------------------- stages

// Push question constants top-down into rule copies, one copy per binding.
inline std::vector<UnifiedRule> unify_program(const Program& p, const ProvQuestion& q) {
  check_program(p);
  return detail::build_model(p, q).copies;
}

// Mark which side of each copy matters for the question: T if its successful
// derivations can appear in the explanation, F for its failed ones, F/T for
// both. The input must come from unify_program on the same arguments.
inline std::vector<UnifiedRule> annotate_program(const Program& p,
                                                 const std::vector<UnifiedRule>& unified,
                                                 const ProvQuestion& q) {
  (void)unified;
  detail::RewriteModel m = detail::build_model(p, q);
  detail::annotate_model(m, q);
  return m.copies;
}

struct FiringProgram {
  Program program;
  // domain relations the program expects, as (predicate, zero-based position)
  std::set<std::pair<std::string, int>> dom_atoms;
  bool uses_boolneg = false;
};

// Generate the firing rules capturing successful and failed derivations of
// every annotated rule copy.
inline FiringProgram create_firing_rules(const Program& p,
                                         const std::vector<UnifiedRule>& annotated,
                                         const ProvQuestion& q) {
  (void)annotated;
  detail::RewriteModel m = detail::build_model(p, q);
  detail::annotate_model(m, q);
  detail::RuleSink sink;
  detail::emit_firing(m, sink);
  FiringProgram out;
  out.program = std::move(sink.program);
  out.program.answer = out.program.rules.empty() ? "" : out.program.rules.front().head.pred;
  out.dom_atoms = std::move(sink.dom_atoms);
  out.uses_boolneg = sink.boolneg;
  return out;
}

// Append the reachability rules restricting firings to derivations connected
// to the matched nodes.
inline FiringProgram add_connectivity(const FiringProgram& firing, const Program& p,
                                      const std::vector<UnifiedRule>& annotated,
                                      const ProvQuestion& q) {
  (void)annotated;
  detail::RewriteModel m = detail::build_model(p, q);
  detail::annotate_model(m, q);
  FiringProgram out = firing;
  detail::RuleSink sink;
  sink.program = std::move(out.program);
  for (const auto& r : sink.program.rules) sink.seen.insert(to_text(r));
  sink.dom_atoms = std::move(out.dom_atoms);
  sink.boolneg = out.uses_boolneg;
  detail::emit_connectivity(m, q, sink);
  out.program = std::move(sink.program);
  out.dom_atoms = std::move(sink.dom_atoms);
  out.uses_boolneg = sink.boolneg;
  return out;
}

// Edge rules decoding the full explanation graph from the connected firings.
inline std::vector<EdgeTemplate> add_edge_rules(const Program& p,
                                                const std::vector<UnifiedRule>& annotated,
                                                const ProvQuestion& q) {
  (void)annotated;
  detail::RewriteModel m = detail::build_model(p, q);
  detail::annotate_model(m, q);
  return detail::edge_templates(m, q, ExplainKind::Full);
}

// Edge rules linking head tuples directly to the tuples of their body atoms.
inline std::vector<EdgeTemplate> add_which_edge_rules(const Program& p,
                                                      const std::vector<UnifiedRule>& annotated,
                                                      const ProvQuestion& q) {
  (void)annotated;
  detail::reject_negation(p);
  detail::RewriteModel m = detail::build_model(p, q);
  detail::annotate_model(m, q);
  return detail::edge_templates(m, q, ExplainKind::Which);
}

// --------------------------------------------------------------- pipeline

inline Explanation explain(const Program& p, const Instance& inst,
                           const DomainAssignment& edb_doms, const ProvQuestion& q,
                           ExplainKind kind = ExplainKind::Full,
                           RewriteStages* stages = nullptr) {
  check_program(p);
  if (kind == ExplainKind::Which) detail::reject_negation(p);
  Explanation out;
  out.matched = match_question(p, inst, edb_doms, q);

  detail::RewriteModel m = detail::build_model(p, q);
  detail::annotate_model(m, q);
  detail::RuleSink sink;
  detail::emit_firing(m, sink);
  std::string firing_text = to_text(sink.program);
  detail::emit_connectivity(m, q, sink);
  Program generated = std::move(sink.program);
  generated.answer = generated.rules.empty() ? "" : generated.rules.front().head.pred;
  std::vector<EdgeTemplate> templates = detail::edge_templates(m, q, kind);
  check_program(generated);

  // helper relations: domains, boolean negation, and empty stand-ins for
  // firing relations no rule happens to derive
  Instance aug = inst;
  DomainAssignment doms = extend_domains(p, inst, edb_doms);
  for (const auto& [pred, pos] : sink.dom_atoms) {
    Relation& rel = aug.touch(detail::dom_pred(pred, static_cast<size_t>(pos)), 1);
    const auto* values = doms.find(pred, static_cast<size_t>(pos));
    if (values)
      for (const auto& v : *values) rel.tuples.insert({v});
  }
  if (sink.boolneg) {
    Relation& rel = aug.touch("BOOLNEG", 2);
    rel.tuples.insert({"true", "false"});
    rel.tuples.insert({"false", "true"});
  }
  std::set<std::string> defined = head_predicates(generated);
  for (const auto& r : generated.rules)
    for (const auto& l : r.body)
      if (!l.compare() && !defined.count(l.atom.pred) && !aug.relations.count(l.atom.pred))
        aug.touch(l.atom.pred, l.atom.args.size());
  Instance result = evaluate(generated, aug);

  // decode matched nodes, then the edge relation
  ProvGraph g;
  g.edb_preds = edb_predicates(p);
  for (const auto& r : p.rules)
    for (size_t j = 0; j < r.body.size(); ++j)
      if (!r.body[j].compare())
        g.goal_negated[{r.id, static_cast<int>(j + 1)}] = r.body[j].negated();
  Status match_status = q.why() ? Status::T : Status::F;
  for (const auto& t : detail::relation_tuples(result, q.why() ? "MATCHED_T" : "MATCHED_F"))
    g.roots.push_back(g.add_node(NodeLabel::tuple(q.pattern.pred, t), match_status));
  for (const auto& e : templates) {
    for (const auto& t : detail::relation_tuples(result, e.relation)) {
      std::map<std::string, std::string> env;
      for (size_t i = 0; i < e.relation_args.size(); ++i)
        if (e.relation_args[i].is_var) env[e.relation_args[i].text] = t[i];
      if (!e.slot_var.empty() && env.at(e.slot_var) != "false") continue;
      int src = g.add_node(detail::instantiate(e.src, env), e.src.status);
      int dst = g.add_node(detail::instantiate(e.dst, env), e.dst.status);
      g.add_edge(src, dst);
    }
  }
  out.graph = std::move(g);

  if (stages) {
    std::string unified_text, annotated_text;
    for (const auto& c : m.copies) {
      std::string binding = "(";
      bool first = true;
      for (const auto& [var, val] : c.binding) {
        if (!first) binding += ",";
        binding += var + "=" + val;
        first = false;
      }
      binding += ")";
      unified_text += p.rules[c.rule_index].id + binding + ": " + to_text(c.rule) + "\n";
      annotated_text += p.rules[c.rule_index].id + binding + " [" + annot_text(c.annot) +
                        "]: " + to_text(c.rule) + "\n";
    }
    stages->unified = unified_text;
    stages->annotated = annotated_text;
    stages->firing = firing_text;
    stages->connected = to_text(generated);
    std::string edges_text;
    for (const auto& e : templates) edges_text += to_text(e) + "\n";
    stages->edges = edges_text;
  }
  return out;
}

}  // namespace provlog
