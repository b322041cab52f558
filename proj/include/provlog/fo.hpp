#pragma once

#include "provlog/io.hpp"
#include "provlog/semiring.hpp"

namespace provlog {

// ---------------------------------------------------------------- formulas

// First-order formulas over relational atoms, comparisons, the boolean
// connectives, and the two quantifiers. Literals carry their own negation
// flag so that negation normal form needs no Not nodes.
struct Formula {
  enum class Kind { Lit, Cmp, And, Or, Not, Exists, Forall };
  Kind kind = Kind::Lit;

  bool negated = false;    // Lit
  std::string pred;        // Lit
  std::vector<Term> args;  // Lit
  CmpOp op = CmpOp::Eq;    // Cmp
  Term lhs, rhs;           // Cmp
  std::string var;         // Exists / Forall

  std::vector<Formula> kids;  // And/Or: two, Not/Exists/Forall: one

  static Formula lit(std::string pred, std::vector<Term> args, bool negated = false) {
    Formula f;
    f.kind = Kind::Lit;
    f.pred = std::move(pred);
    f.args = std::move(args);
    f.negated = negated;
    return f;
  }
  static Formula cmp(Term lhs, CmpOp op, Term rhs) {
    Formula f;
    f.kind = Kind::Cmp;
    f.lhs = std::move(lhs);
    f.op = op;
    f.rhs = std::move(rhs);
    return f;
  }
  static Formula binary(Kind k, Formula a, Formula b) {
    Formula f;
    f.kind = k;
    f.kids.push_back(std::move(a));
    f.kids.push_back(std::move(b));
    return f;
  }
  static Formula conj(Formula a, Formula b) { return binary(Kind::And, std::move(a), std::move(b)); }
  static Formula disj(Formula a, Formula b) { return binary(Kind::Or, std::move(a), std::move(b)); }
  static Formula negation(Formula a) {
    Formula f;
    f.kind = Kind::Not;
    f.kids.push_back(std::move(a));
    return f;
  }
  static Formula quant(Kind k, std::string var, Formula body) {
    Formula f;
    f.kind = k;
    f.var = std::move(var);
    f.kids.push_back(std::move(body));
    return f;
  }
  static Formula exists(std::string var, Formula body) {
    return quant(Kind::Exists, std::move(var), std::move(body));
  }
  static Formula forall(std::string var, Formula body) {
    return quant(Kind::Forall, std::move(var), std::move(body));
  }
};

// --------------------------------------------------------------- printing

namespace detail {

// Precedence: quantifiers and ! bind a whole operand, & over |. A quantifier
// body extends maximally to the right, so a quantifier needs parentheses
// whenever any text follows it, i.e. whenever it is not in tail position.
inline std::string formula_text(const Formula& f, int parent_prec, bool tail) {
  switch (f.kind) {
    case Formula::Kind::Lit: {
      std::string s = f.negated ? "!" : "";
      s += f.pred + "(";
      for (size_t i = 0; i < f.args.size(); ++i) {
        if (i) s += ",";
        s += f.args[i].text;
      }
      return s + ")";
    }
    case Formula::Kind::Cmp:
      return f.lhs.text + " " + cmp_op_text(f.op) + " " + f.rhs.text;
    case Formula::Kind::Not: {
      const Formula& k = f.kids[0];
      if (k.kind == Formula::Kind::Lit && !k.negated) return "!" + formula_text(k, 3, true);
      return "!(" + formula_text(k, 0, true) + ")";
    }
    case Formula::Kind::And: {
      bool wrapped = 1 < parent_prec;
      std::string s = formula_text(f.kids[0], 1, false) + " & " +
                      formula_text(f.kids[1], 2, wrapped || tail);
      return wrapped ? "(" + s + ")" : s;
    }
    case Formula::Kind::Or: {
      bool wrapped = 0 < parent_prec;
      std::string s = formula_text(f.kids[0], 0, false) + " | " +
                      formula_text(f.kids[1], 1, wrapped || tail);
      return wrapped ? "(" + s + ")" : s;
    }
    case Formula::Kind::Exists:
    case Formula::Kind::Forall: {
      std::string s = (f.kind == Formula::Kind::Exists ? "exists " : "forall ") + f.var + ". " +
                      formula_text(f.kids[0], 0, true);
      return tail ? s : "(" + s + ")";
    }
  }
  return "";
}

}  // namespace detail

inline std::string to_text(const Formula& f) { return detail::formula_text(f, 0, true); }

// ---------------------------------------------------------------- parsing

namespace detail {

// Identifiers bound by an enclosing quantifier are variables, all other
// identifiers are constants; the distinction is resolved after parsing.
class FormulaParser {
 public:
  explicit FormulaParser(const std::string& src) : lex_(src) {}

  Formula parse() {
    Formula f = parse_or();
    const Token& t = lex_.peek();
    if (t.kind != Token::Kind::End)
      throw SyntaxError("line " + std::to_string(t.line) + ":" + std::to_string(t.col) +
                        ": unexpected '" + t.text + "' after the formula");
    std::set<std::string> bound;
    bind(f, bound);
    return f;
  }

 private:
  Formula parse_or() {
    Formula f = parse_and();
    while (punct("|")) {
      lex_.next();
      f = Formula::disj(std::move(f), parse_and());
    }
    return f;
  }

  Formula parse_and() {
    Formula f = parse_unary();
    while (punct("&")) {
      lex_.next();
      f = Formula::conj(std::move(f), parse_unary());
    }
    return f;
  }

  Formula parse_unary() {
    if (punct("!")) {
      lex_.next();
      return Formula::negation(parse_unary());
    }
    if (punct("(")) {
      lex_.next();
      Formula f = parse_or();
      expect_punct(")");
      return f;
    }
    Token t = lex_.next();
    if (t.kind != Token::Kind::Ident) fail(t, "expected a formula");
    if (!t.quoted && (t.text == "forall" || t.text == "exists")) {
      Token v = lex_.next();
      if (v.kind != Token::Kind::Ident) fail(v, "expected a quantified variable");
      expect_punct(".");
      Formula body = parse_or();  // maximal scope to the right
      return Formula::quant(
          t.text == "forall" ? Formula::Kind::Forall : Formula::Kind::Exists, v.text,
          std::move(body));
    }
    if (punct("(")) {
      lex_.next();
      std::vector<Term> args;
      if (!punct(")")) {
        args.push_back(Term::cst(expect_ident("term").text));
        while (punct(",")) {
          lex_.next();
          args.push_back(Term::cst(expect_ident("term").text));
        }
      }
      expect_punct(")");
      return Formula::lit(t.text, std::move(args));
    }
    CmpOp op = parse_cmp_op();
    Token rhs = expect_ident("comparison operand");
    return Formula::cmp(Term::cst(t.text), op, Term::cst(rhs.text));
  }

  CmpOp parse_cmp_op() {
    Token t = lex_.next();
    if (t.kind == Token::Kind::Punct) {
      if (t.text == "=") return CmpOp::Eq;
      if (t.text == "!=") return CmpOp::Ne;
      if (t.text == "<") return CmpOp::Lt;
      if (t.text == "<=") return CmpOp::Le;
      if (t.text == ">") return CmpOp::Gt;
      if (t.text == ">=") return CmpOp::Ge;
    }
    fail(t, "expected a comparison operator");
  }

  static void bind_term(Term& t, const std::set<std::string>& bound) {
    t.is_var = bound.count(t.text) > 0;
  }

  void bind(Formula& f, std::set<std::string>& bound) {
    switch (f.kind) {
      case Formula::Kind::Lit:
        for (auto& a : f.args) bind_term(a, bound);
        return;
      case Formula::Kind::Cmp:
        bind_term(f.lhs, bound);
        bind_term(f.rhs, bound);
        return;
      case Formula::Kind::Exists:
      case Formula::Kind::Forall: {
        bool fresh = bound.insert(f.var).second;
        bind(f.kids[0], bound);
        if (fresh) bound.erase(f.var);
        return;
      }
      default:
        for (auto& k : f.kids) bind(k, bound);
        return;
    }
  }

  bool punct(const std::string& text) {
    return lex_.peek().kind == Token::Kind::Punct && lex_.peek().text == text;
  }

  Token expect_ident(const std::string& what) {
    Token t = lex_.next();
    if (t.kind != Token::Kind::Ident) fail(t, "expected " + what);
    return t;
  }

  void expect_punct(const std::string& text) {
    Token t = lex_.next();
    if (t.kind != Token::Kind::Punct || t.text != text)
      fail(t, "expected '" + text + "'");
  }

  [[noreturn]] void fail(const Token& t, const std::string& msg) {
    throw SyntaxError("line " + std::to_string(t.line) + ":" + std::to_string(t.col) + ": " +
                      msg + ", got '" + t.text + "'");
  }

  Lexer lex_;
};

}  // namespace detail

inline Formula parse_formula(const std::string& text) {
  return detail::FormulaParser(text).parse();
}

// -------------------------------------------------------------- analysis

namespace detail {

inline void collect_free(const Formula& f, std::set<std::string>& bound,
                         std::set<std::string>& out) {
  auto term = [&](const Term& t) {
    if (t.is_var && !bound.count(t.text)) out.insert(t.text);
  };
  switch (f.kind) {
    case Formula::Kind::Lit:
      for (const auto& a : f.args) term(a);
      return;
    case Formula::Kind::Cmp:
      term(f.lhs);
      term(f.rhs);
      return;
    case Formula::Kind::Exists:
    case Formula::Kind::Forall: {
      bool fresh = bound.insert(f.var).second;
      collect_free(f.kids[0], bound, out);
      if (fresh) bound.erase(f.var);
      return;
    }
    default:
      for (const auto& k : f.kids) collect_free(k, bound, out);
      return;
  }
}

}  // namespace detail

// Free variables in lexicographic order.
inline std::vector<std::string> free_vars(const Formula& f) {
  std::set<std::string> bound, out;
  detail::collect_free(f, bound, out);
  return {out.begin(), out.end()};
}

// ------------------------------------------------------------ normal form

namespace detail {

inline CmpOp complement_cmp(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return CmpOp::Ne;
    case CmpOp::Ne: return CmpOp::Eq;
    case CmpOp::Lt: return CmpOp::Ge;
    case CmpOp::Le: return CmpOp::Gt;
    case CmpOp::Gt: return CmpOp::Le;
    case CmpOp::Ge: return CmpOp::Lt;
  }
  return op;
}

inline Formula nnf_rec(const Formula& f, bool neg) {
  switch (f.kind) {
    case Formula::Kind::Lit: {
      Formula out = f;
      out.negated = f.negated != neg;
      return out;
    }
    case Formula::Kind::Cmp: {
      Formula out = f;
      if (neg) out.op = complement_cmp(f.op);
      return out;
    }
    case Formula::Kind::Not:
      return nnf_rec(f.kids[0], !neg);
    case Formula::Kind::And:
    case Formula::Kind::Or: {
      bool conj = (f.kind == Formula::Kind::And) != neg;
      return Formula::binary(conj ? Formula::Kind::And : Formula::Kind::Or,
                             nnf_rec(f.kids[0], neg), nnf_rec(f.kids[1], neg));
    }
    case Formula::Kind::Exists:
    case Formula::Kind::Forall: {
      bool ex = (f.kind == Formula::Kind::Exists) != neg;
      return Formula::quant(ex ? Formula::Kind::Exists : Formula::Kind::Forall, f.var,
                            nnf_rec(f.kids[0], neg));
    }
  }
  return f;
}

}  // namespace detail

// Push negations to the literals: DeMorgan, quantifier duality, double
// negation elimination; negated comparisons flip their operator.
inline Formula nnf(const Formula& f) { return detail::nnf_rec(f, false); }

// ------------------------------------------------------------ rename apart

namespace detail {

// Successor letters first (y -> z), numbered fallback.
inline std::string fresh_var(const std::string& base, const std::set<std::string>& used) {
  char c = base.empty() ? 'x' : base[0];
  if (c >= 'a' && c <= 'z') {
    for (int off = 1; off < 26; ++off) {
      std::string cand(1, static_cast<char>('a' + (c - 'a' + off) % 26));
      if (!used.count(cand)) return cand;
    }
  }
  for (int i = 1;; ++i) {
    std::string cand = base + std::to_string(i);
    if (!used.count(cand)) return cand;
  }
}

inline Formula rename_rec(const Formula& f, std::map<std::string, std::string>& subst,
                          std::set<std::string>& used) {
  auto term = [&](const Term& t) {
    if (!t.is_var) return t;
    auto it = subst.find(t.text);
    return it == subst.end() ? t : Term::var(it->second);
  };
  switch (f.kind) {
    case Formula::Kind::Lit: {
      Formula out = f;
      for (auto& a : out.args) a = term(a);
      return out;
    }
    case Formula::Kind::Cmp: {
      Formula out = f;
      out.lhs = term(f.lhs);
      out.rhs = term(f.rhs);
      return out;
    }
    case Formula::Kind::Exists:
    case Formula::Kind::Forall: {
      std::string name = used.count(f.var) ? fresh_var(f.var, used) : f.var;
      used.insert(name);
      auto it = subst.find(f.var);
      std::string saved = it == subst.end() ? "" : it->second;
      bool had = it != subst.end();
      subst[f.var] = name;
      Formula body = rename_rec(f.kids[0], subst, used);
      if (had)
        subst[f.var] = saved;
      else
        subst.erase(f.var);
      return Formula::quant(f.kind, name, std::move(body));
    }
    default: {
      Formula out = f;
      for (auto& k : out.kids) k = rename_rec(k, subst, used);
      return out;
    }
  }
}

}  // namespace detail

// Makes every binder unique and disjoint from the free variables; free
// variables keep their names and the first binder of a clashing name wins.
// Initially only free variables and constants are claimed; each binder
// claims its name (renamed if already taken) as the walk reaches it.
inline Formula rename_apart(const Formula& f) {
  std::set<std::string> used;
  auto claim = [&](const Formula& g, auto&& self) -> void {
    switch (g.kind) {
      case Formula::Kind::Lit:
        for (const auto& a : g.args)
          if (!a.is_var) used.insert(a.text);
        return;
      case Formula::Kind::Cmp:
        if (!g.lhs.is_var) used.insert(g.lhs.text);
        if (!g.rhs.is_var) used.insert(g.rhs.text);
        return;
      default:
        for (const auto& k : g.kids) self(k, self);
        return;
    }
  };
  claim(f, claim);
  for (const auto& v : free_vars(f)) used.insert(v);
  std::map<std::string, std::string> subst;
  return detail::rename_rec(f, subst, used);
}

// ------------------------------------------------------------- translation

namespace detail {

// Predicate names mirror the sub-formula tree: the root is Q_phi, proper
// sub-formulas are Q_phi1, Q_phi2, ... in pre-order, and each universal
// quantifier adds a Q_..._prime auxiliary.
struct NamedFormula {
  std::string name;
  std::vector<NamedFormula> kids;
};

inline NamedFormula name_subformulas(const Formula& f, int& counter) {
  NamedFormula n;
  n.name = counter == 0 ? "phi" : "phi" + std::to_string(counter);
  ++counter;
  for (const auto& k : f.kids) n.kids.push_back(name_subformulas(k, counter));
  return n;
}

struct Translator {
  Program out;
  std::map<std::string, std::string> varmap;

  std::string datalog_var(const std::string& v) {
    auto it = varmap.find(v);
    if (it != varmap.end()) return it->second;
    std::string n = v;
    if (!n.empty() && n[0] >= 'a' && n[0] <= 'z')
      n[0] = static_cast<char>(n[0] - 'a' + 'A');
    if (!ident_is_var(n, false)) n = "V" + n;
    std::set<std::string> taken;
    for (const auto& [_, dv] : varmap) taken.insert(dv);
    std::string cand = n;
    for (int i = 2; taken.count(cand); ++i) cand = n + std::to_string(i);
    varmap.emplace(v, cand);
    return cand;
  }

  Term term(const Term& t) { return t.is_var ? Term::var(datalog_var(t.text)) : t; }

  std::vector<Term> head_args(const std::vector<std::string>& frees) {
    std::vector<Term> out_args;
    for (const auto& v : frees) out_args.push_back(Term::var(datalog_var(v)));
    return out_args;
  }

  Literal dom_goal(const std::string& v) {
    return Literal::pos(Atom{"Dom", {Term::var(datalog_var(v))}});
  }

  void emit(const Formula& f, const NamedFormula& names) {
    std::vector<std::string> frees = free_vars(f);
    Atom head{"Q_" + names.name, head_args(frees)};
    switch (f.kind) {
      case Formula::Kind::Lit: {
        if (f.pred == "Dom")
          throw Error("the predicate name Dom is reserved for the domain relation");
        Atom a{f.pred, {}};
        for (const auto& t : f.args) a.args.push_back(term(t));
        Rule r{"", head, {}};
        if (f.negated) {
          for (const auto& v : frees) r.body.push_back(dom_goal(v));
          r.body.push_back(Literal::neg(std::move(a)));
        } else {
          r.body.push_back(Literal::pos(std::move(a)));
        }
        out.rules.push_back(std::move(r));
        break;
      }
      case Formula::Kind::Cmp: {
        Rule r{"", head, {}};
        for (const auto& v : frees) r.body.push_back(dom_goal(v));
        r.body.push_back(Literal::cmp(term(f.lhs), f.op, term(f.rhs)));
        out.rules.push_back(std::move(r));
        break;
      }
      case Formula::Kind::And: {
        Rule r{"", head, {}};
        for (size_t i = 0; i < 2; ++i)
          r.body.push_back(Literal::pos(
              Atom{"Q_" + names.kids[i].name, head_args(free_vars(f.kids[i]))}));
        out.rules.push_back(std::move(r));
        break;
      }
      case Formula::Kind::Or: {
        for (size_t i = 0; i < 2; ++i) {
          std::set<std::string> have;
          for (const auto& v : free_vars(f.kids[i])) have.insert(v);
          Rule r{"", head, {}};
          for (const auto& v : frees)
            if (!have.count(v)) r.body.push_back(dom_goal(v));
          r.body.push_back(Literal::pos(
              Atom{"Q_" + names.kids[i].name, head_args(free_vars(f.kids[i]))}));
          out.rules.push_back(std::move(r));
        }
        break;
      }
      case Formula::Kind::Exists: {
        Rule r{"", head, {}};
        r.body.push_back(dom_goal(f.var));
        r.body.push_back(Literal::pos(
            Atom{"Q_" + names.kids[0].name, head_args(free_vars(f.kids[0]))}));
        out.rules.push_back(std::move(r));
        break;
      }
      case Formula::Kind::Forall: {
        Atom aux{"Q_" + names.name + "_prime", head_args(frees)};
        out.forall_aux.insert(aux.pred);
        Rule top{"", head, {}};
        for (const auto& v : frees) top.body.push_back(dom_goal(v));
        top.body.push_back(Literal::neg(aux));
        out.rules.push_back(std::move(top));
        Rule lower{"", aux, {}};
        lower.body.push_back(dom_goal(f.var));
        for (const auto& v : frees) lower.body.push_back(dom_goal(v));
        lower.body.push_back(Literal::neg(
            Atom{"Q_" + names.kids[0].name, head_args(free_vars(f.kids[0]))}));
        out.rules.push_back(std::move(lower));
        break;
      }
      case Formula::Kind::Not:
        throw Error("negation normal form left a Not node");
    }
    for (size_t i = 0; i < f.kids.size(); ++i) emit(f.kids[i], names.kids[i]);
  }
};

}  // namespace detail

// One rule set per sub-formula: existential quantifiers join against the
// domain, universal quantifiers go through a doubly negated auxiliary
// predicate, disjunction pads each branch with the domain goals it lacks.
// Dom is the distinguished unary relation holding the domain.
inline Program translate(const Formula& formula) {
  Formula f = rename_apart(nnf(formula));
  int counter = 0;
  detail::NamedFormula names = detail::name_subformulas(f, counter);
  detail::Translator tr;
  tr.out.translated = true;
  tr.emit(f, names);
  for (size_t i = 0; i < tr.out.rules.size(); ++i)
    tr.out.rules[i].id = "r" + std::to_string(i + 1);
  tr.out.answer = "Q_phi";
  check_program(tr.out);
  return tr.out;
}

// --------------------------------------------------------- interpretations

// Provenance-tracking interpretation: each literal maps to a pair of dual
// polynomial atoms (pos for R(a), neg for not R(a)), each 0, 1, or a
// variable. The five legal pairs: (1,0) true, (0,1) false, (x,0) true
// tracked, (0,x_bar) false tracked, (x,x_bar) undetermined. Unlisted
// tuples read as (0,1).
struct KEntry {
  std::string pos = "0";
  std::string neg = "1";
  bool operator==(const KEntry&) const = default;
};

inline bool dual_name(const std::string& s) {
  return s.size() > 4 && s.compare(s.size() - 4, 4, "_bar") == 0;
}

inline void check_entry(const std::string& pred, const Tuple& t, const KEntry& e) {
  auto row = [&]() {
    std::string s = pred + "(";
    for (size_t i = 0; i < t.size(); ++i) s += (i ? "," : "") + t[i];
    return s + ") = (" + e.pos + ", " + e.neg + ")";
  };
  bool pos_var = e.pos != "0" && e.pos != "1";
  bool neg_var = e.neg != "0" && e.neg != "1";
  if (pos_var && dual_name(e.pos))
    throw IllegalInterpretation(row() + ": positive annotations cannot end in _bar");
  if (neg_var && !dual_name(e.neg))
    throw IllegalInterpretation(row() + ": negative annotations must end in _bar");
  bool ok = (e.pos == "1" && e.neg == "0") || (e.pos == "0" && e.neg == "1") ||
            (pos_var && e.neg == "0") || (e.pos == "0" && neg_var) ||
            (pos_var && neg_var && e.neg == e.pos + "_bar");
  if (!ok)
    throw IllegalInterpretation(row() + ": not one of (1,0), (0,1), (x,0), (0,x_bar), (x,x_bar)");
}

struct KInterpretation {
  std::map<std::string, std::map<Tuple, KEntry>> entries;
  std::map<std::string, size_t> arities;

  void set(const std::string& pred, const Tuple& t, std::string pos, std::string neg) {
    KEntry e{std::move(pos), std::move(neg)};
    check_entry(pred, t, e);
    auto [it, fresh] = arities.emplace(pred, t.size());
    if (!fresh && it->second != t.size())
      throw ArityMismatch("literal " + pred + " used with arity " +
                          std::to_string(it->second) + " and " + std::to_string(t.size()));
    entries[pred][t] = std::move(e);
  }

  KEntry at(const std::string& pred, const Tuple& t) const {
    auto it = entries.find(pred);
    if (it == entries.end()) return {};
    auto jt = it->second.find(t);
    return jt == it->second.end() ? KEntry{} : jt->second;
  }
};

// CSV rows: pred, args..., pos, neg. Blank lines and # comments skipped.
inline KInterpretation parse_interpretation(const std::string& csv) {
  KInterpretation pi;
  std::istringstream in(csv);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    size_t b = line.find_first_not_of(" \t");
    if (b == std::string::npos || line[b] == '#') continue;
    std::string where = "interpretation line " + std::to_string(lineno);
    auto fields = detail::split_csv_line(line, where);
    if (fields.size() < 3) throw SyntaxError(where + ": expected pred, args..., pos, neg");
    Tuple t(fields.begin() + 1, fields.end() - 2);
    pi.set(fields[0], t, fields[fields.size() - 2], fields[fields.size() - 1]);
  }
  return pi;
}

inline KInterpretation load_interpretation(const std::filesystem::path& path) {
  return parse_interpretation(read_file(path));
}

inline std::string to_csv(const KInterpretation& pi) {
  std::string out;
  for (const auto& [pred, rows] : pi.entries)
    for (const auto& [t, e] : rows) {
      out += pred;
      for (const auto& c : t) out += "," + c;
      out += "," + e.pos + "," + e.neg + "\n";
    }
  return out;
}

// Constants mentioned in the interpretation; the default domain.
inline std::set<std::string> interpretation_constants(const KInterpretation& pi) {
  std::set<std::string> out;
  for (const auto& [_, rows] : pi.entries)
    for (const auto& [t, e] : rows) out.insert(t.begin(), t.end());
  return out;
}

// The instance I_pi: a tuple exists when pos is nonzero and neg is 0, is
// undetermined when both are tracked, and is absent otherwise. Annotations
// carry the tracking variables. Dom holds the domain.
inline Instance instance_of_interpretation(const KInterpretation& pi,
                                           const std::set<std::string>& domain) {
  Instance inst;
  for (const auto& [pred, rows] : pi.entries) {
    inst.touch(pred, pi.arities.at(pred));
    for (const auto& [t, e] : rows) {
      check_entry(pred, t, e);
      for (const auto& c : t)
        if (!domain.count(c))
          throw ConstantOutsideDomain("literal over " + pred + " uses constant " + c +
                                      " outside the domain");
      bool pos_var = e.pos != "0" && e.pos != "1";
      bool neg_var = e.neg != "0" && e.neg != "1";
      if (pos_var && neg_var) {
        inst.add_undetermined(pred, t);
        inst.annotate(pred, t, e.pos);
      } else if (e.pos != "0") {
        inst.add(pred, t);
        if (pos_var) inst.annotate(pred, t, e.pos);
      } else if (neg_var) {
        inst.annotate(pred, t, e.neg);
      }
    }
  }
  inst.touch("Dom", 1);
  for (const auto& c : domain) inst.add("Dom", {c});
  return inst;
}

// Every attribute of every stored relation ranges over the whole domain.
inline DomainAssignment interpretation_domains(const Instance& inst,
                                               const std::set<std::string>& domain) {
  DomainAssignment d;
  for (const auto& [pred, rel] : inst.relations) d.attrs[pred].assign(rel.arity, domain);
  return d;
}

// ------------------------------------------------------------- evaluation

// Monomials that contain a variable together with its dual are zero.
inline Polynomial drop_dual_conflicts(const Polynomial& p) {
  Polynomial out;
  for (const auto& [m, c] : p.terms) {
    bool dead = false;
    for (const auto& [v, _] : m)
      if (!dual_name(v) && m.count(v + "_bar")) {
        dead = true;
        break;
      }
    if (!dead) out.terms[m] += c;
  }
  return out;
}

inline Polynomial dual_mul(const Polynomial& a, const Polynomial& b) {
  return drop_dual_conflicts(a * b);
}

namespace detail {

inline Polynomial dual_atom(const std::string& s) {
  if (s == "0") return Polynomial::zero();
  if (s == "1") return Polynomial::one();
  return Polynomial::var(s);
}

inline std::string fo_value(const Term& t, const std::map<std::string, std::string>& nu) {
  if (!t.is_var) return t.text;
  auto it = nu.find(t.text);
  if (it == nu.end()) throw Error("free variable " + t.text + " has no value");
  return it->second;
}

inline Polynomial keval(const Formula& f, const KInterpretation& pi,
                        const std::set<std::string>& domain,
                        std::map<std::string, std::string>& nu) {
  switch (f.kind) {
    case Formula::Kind::Lit: {
      Tuple t;
      for (const auto& a : f.args) t.push_back(fo_value(a, nu));
      KEntry e = pi.at(f.pred, t);
      return dual_atom(f.negated ? e.neg : e.pos);
    }
    case Formula::Kind::Cmp:
      return eval_cmp(f.op, fo_value(f.lhs, nu), fo_value(f.rhs, nu)) ? Polynomial::one()
                                                                      : Polynomial::zero();
    case Formula::Kind::Not:
      return keval(nnf_rec(f.kids[0], true), pi, domain, nu);
    case Formula::Kind::And:
      return dual_mul(keval(f.kids[0], pi, domain, nu), keval(f.kids[1], pi, domain, nu));
    case Formula::Kind::Or:
      return keval(f.kids[0], pi, domain, nu) + keval(f.kids[1], pi, domain, nu);
    case Formula::Kind::Exists:
    case Formula::Kind::Forall: {
      bool ex = f.kind == Formula::Kind::Exists;
      Polynomial acc = ex ? Polynomial::zero() : Polynomial::one();
      auto saved = nu.find(f.var);
      std::string old = saved == nu.end() ? "" : saved->second;
      bool had = saved != nu.end();
      for (const auto& c : domain) {
        nu[f.var] = c;
        Polynomial v = keval(f.kids[0], pi, domain, nu);
        acc = ex ? acc + v : dual_mul(acc, v);
      }
      if (had)
        nu[f.var] = old;
      else
        nu.erase(f.var);
      return acc;
    }
  }
  return Polynomial::zero();
}

}  // namespace detail

// Direct recursive evaluation of the formula under the interpretation:
// or is +, and is *, exists sums over the domain, forall multiplies, a
// comparison is 1 or 0, and a literal reads its annotation pair.
inline Polynomial kinter_eval(const Formula& f, const KInterpretation& pi,
                              const std::set<std::string>& domain,
                              std::map<std::string, std::string> valuation = {}) {
  return detail::keval(nnf(f), pi, domain, valuation);
}

// -------------------------------------------------------------- extraction

// Reads the dual polynomial off a provenance graph built from a translated
// program over I_pi: Dom tuples are 1, goals over stored literals read the
// annotation matching their polarity, rules multiply, other goals and
// tuples sum, except the universal-quantifier auxiliaries which multiply.
inline Polynomial extract_dual(const ProvGraph& g, const std::string& pred, const Tuple& args,
                               const KInterpretation& pi, const Program& p) {
  if (!p.translated)
    throw NotTranslatedProgram(
        "the program carries no translation tags, so the universal-quantifier "
        "auxiliary predicates cannot be identified");
  std::set<std::string> heads = head_predicates(p);
  for (const auto& aux : p.forall_aux)
    if (!heads.count(aux))
      throw NotTranslatedProgram("auxiliary predicate " + aux + " has no rule");
  for (const auto& r : p.rules)
    for (const auto& l : r.body)
      if (l.negated() && heads.count(l.atom.pred) &&
          (p.forall_aux.count(r.head.pred) > 0) == (p.forall_aux.count(l.atom.pred) > 0))
        throw NotTranslatedProgram("negated goal on " + l.atom.pred + " in rule " + r.id +
                                   " does not alternate with an auxiliary predicate");

  int root = g.find(NodeLabel::tuple(pred, args));
  if (root < 0) {
    std::string a;
    for (size_t i = 0; i < args.size(); ++i) a += (i ? "," : "") + args[i];
    throw Error("tuple " + pred + "(" + a + ") is not in the graph");
  }
  auto adj = adjacency(g);
  std::vector<std::optional<Polynomial>> memo(g.labels.size());
  auto read = [&](auto&& self, int v) -> Polynomial {
    if (memo[v]) return *memo[v];
    const NodeLabel& l = g.labels[v];
    Polynomial out;
    switch (l.kind) {
      case NodeLabel::Kind::Tuple: {
        if (l.name == "Dom") {
          out = Polynomial::one();
        } else if (g.edb_preds.count(l.name)) {
          out = detail::dual_atom(pi.at(l.name, l.args).pos);
        } else if (p.forall_aux.count(l.name)) {
          out = Polynomial::one();
          for (int w : adj[v]) out = dual_mul(out, self(self, w));
        } else {
          for (int w : adj[v]) out = out + self(self, w);
        }
        break;
      }
      case NodeLabel::Kind::Rule: {
        out = Polynomial::one();
        for (int w : adj[v]) out = dual_mul(out, self(self, w));
        break;
      }
      case NodeLabel::Kind::Goal: {
        if (adj[v].empty()) {
          // comparison goals have no tuple below them
          out = g.statuses[v] == Status::T ? Polynomial::one() : Polynomial::zero();
          break;
        }
        int child = adj[v][0];
        const NodeLabel& cl = g.labels[child];
        auto it = g.goal_negated.find({l.name, l.goal_index});
        bool negated = it != g.goal_negated.end() && it->second;
        if (cl.kind == NodeLabel::Kind::Tuple && g.edb_preds.count(cl.name) &&
            cl.name != "Dom") {
          KEntry e = pi.at(cl.name, cl.args);
          out = detail::dual_atom(negated ? e.neg : e.pos);
        } else {
          out = self(self, child);
        }
        break;
      }
      default:
        throw Error("node " + canonical(l) + " does not belong to a provenance graph");
    }
    memo[v] = out;
    return out;
  };
  return read(read, root);
}

// ---------------------------------------------------------- full pipeline

struct DualResult {
  Program program;
  Instance instance;
  Tuple root;
  ProvGraph graph;  // explanation subgraph under Q_phi(root)
  Polynomial dual;
};

// translate, materialize I_pi, build the provenance graph, extract.
inline DualResult dual_polynomial(const Formula& f, const KInterpretation& pi,
                                  const std::set<std::string>& domain,
                                  const std::map<std::string, std::string>& valuation = {},
                                  const GraphOptions& options = {}) {
  if (domain.empty()) throw Error("the domain is empty");
  DualResult out;
  out.program = translate(f);
  out.instance = instance_of_interpretation(pi, domain);
  for (const auto& pred : edb_predicates(out.program)) {
    size_t arity = 0;
    for (const auto& r : out.program.rules)
      for (const auto& l : r.body)
        if (!l.compare() && l.atom.pred == pred) arity = l.atom.args.size();
    out.instance.touch(pred, arity);
  }
  for (const auto& v : free_vars(f)) {
    auto it = valuation.find(v);
    if (it == valuation.end()) throw Error("free variable " + v + " has no value");
    if (!domain.count(it->second))
      throw ConstantOutsideDomain("valuation sends " + v + " outside the domain");
    out.root.push_back(it->second);
  }
  DomainAssignment doms = interpretation_domains(out.instance, domain);
  ProvGraph full = build_full_graph(out.program, out.instance, doms, options);
  out.graph = extract_explanation(full, out.program.answer, {out.root});
  out.dual = extract_dual(out.graph, out.program.answer, out.root, pi, out.program);
  return out;
}

}  // namespace provlog
