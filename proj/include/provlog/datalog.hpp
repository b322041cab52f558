#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace provlog {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define PROVLOG_DEFINE_ERROR(Name) \
  struct Name : Error {            \
    using Error::Error;            \
  }

PROVLOG_DEFINE_ERROR(SyntaxError);
PROVLOG_DEFINE_ERROR(UnsafeRule);
PROVLOG_DEFINE_ERROR(RecursionDetected);
PROVLOG_DEFINE_ERROR(ArityMismatch);
PROVLOG_DEFINE_ERROR(MissingRelation);
PROVLOG_DEFINE_ERROR(DomainTooLarge);
PROVLOG_DEFINE_ERROR(ConstantOutsideDomain);
PROVLOG_DEFINE_ERROR(NotUndetermined);
PROVLOG_DEFINE_ERROR(NegationPresent);
PROVLOG_DEFINE_ERROR(MissingAnnotation);
PROVLOG_DEFINE_ERROR(UndeterminedStatusPresent);
PROVLOG_DEFINE_ERROR(MalformedGame);
PROVLOG_DEFINE_ERROR(IllegalInterpretation);
PROVLOG_DEFINE_ERROR(NotTranslatedProgram);
PROVLOG_DEFINE_ERROR(VariableCoverageMismatch);
PROVLOG_DEFINE_ERROR(PathConditionViolated);
PROVLOG_DEFINE_ERROR(NegationNotSupported);

#undef PROVLOG_DEFINE_ERROR

// ---------------------------------------------------------------- terms

struct Term {
  bool is_var = false;
  std::string text;

  static Term var(std::string name) { return Term{true, std::move(name)}; }
  static Term cst(std::string value) { return Term{false, std::move(value)}; }

  auto operator<=>(const Term&) const = default;
};

struct Atom {
  std::string pred;
  std::vector<Term> args;

  auto operator<=>(const Atom&) const = default;
};

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };

inline const char* cmp_op_text(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "=";
    case CmpOp::Ne: return "!=";
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
  }
  return "?";
}

// Constants compare numerically when both sides parse as integers,
// lexicographically otherwise.
inline std::optional<long long> parse_int(const std::string& s) {
  if (s.empty()) return std::nullopt;
  size_t i = s[0] == '-' ? 1 : 0;
  if (i == s.size()) return std::nullopt;
  for (size_t k = i; k < s.size(); ++k)
    if (!std::isdigit(static_cast<unsigned char>(s[k]))) return std::nullopt;
  try {
    return std::stoll(s);
  } catch (...) {
    return std::nullopt;
  }
}

inline int compare_constants(const std::string& a, const std::string& b) {
  auto x = parse_int(a), y = parse_int(b);
  if (x && y) return *x < *y ? -1 : (*x > *y ? 1 : 0);
  int c = a.compare(b);
  return c < 0 ? -1 : (c > 0 ? 1 : 0);
}

inline bool eval_cmp(CmpOp op, const std::string& a, const std::string& b) {
  int c = compare_constants(a, b);
  switch (op) {
    case CmpOp::Eq: return c == 0;
    case CmpOp::Ne: return c != 0;
    case CmpOp::Lt: return c < 0;
    case CmpOp::Le: return c <= 0;
    case CmpOp::Gt: return c > 0;
    case CmpOp::Ge: return c >= 0;
  }
  return false;
}

struct Literal {
  enum class Kind { Positive, Negated, Compare };
  Kind kind = Kind::Positive;
  Atom atom;        // Positive / Negated
  CmpOp op = CmpOp::Eq;  // Compare
  Term lhs, rhs;    // Compare

  bool positive() const { return kind == Kind::Positive; }
  bool negated() const { return kind == Kind::Negated; }
  bool compare() const { return kind == Kind::Compare; }

  static Literal pos(Atom a) { return Literal{Kind::Positive, std::move(a), CmpOp::Eq, {}, {}}; }
  static Literal neg(Atom a) { return Literal{Kind::Negated, std::move(a), CmpOp::Eq, {}, {}}; }
  static Literal cmp(Term l, CmpOp o, Term r) {
    return Literal{Kind::Compare, {}, o, std::move(l), std::move(r)};
  }

  auto operator<=>(const Literal&) const = default;
};

struct Rule {
  std::string id;
  Atom head;
  std::vector<Literal> body;

  auto operator<=>(const Rule&) const = default;
};

struct Program {
  std::vector<Rule> rules;
  std::string answer;  // head predicate of the first rule unless overridden
  // set for programs produced by the first-order translation
  bool translated = false;
  std::set<std::string> forall_aux;
};

// A provenance question: explain why a tuple matching the pattern is in the
// result, or why no such tuple is.
struct ProvQuestion {
  enum class Kind { Why, WhyNot };
  Kind kind = Kind::Why;
  Atom pattern;

  bool why() const { return kind == Kind::Why; }
};

// ---------------------------------------------------------------- printing

inline std::string to_text(const Term& t) { return t.text; }

inline std::string to_text(const Atom& a) {
  std::string s = a.pred;
  s += '(';
  for (size_t i = 0; i < a.args.size(); ++i) {
    if (i) s += ',';
    s += a.args[i].text;
  }
  s += ')';
  return s;
}

inline std::string to_text(const Literal& l) {
  switch (l.kind) {
    case Literal::Kind::Positive: return to_text(l.atom);
    case Literal::Kind::Negated: return "not " + to_text(l.atom);
    case Literal::Kind::Compare:
      return l.lhs.text + " " + cmp_op_text(l.op) + " " + l.rhs.text;
  }
  return {};
}

inline std::string to_text(const Rule& r, bool with_id = false) {
  std::string s;
  if (with_id && !r.id.empty()) s = r.id + ": ";
  s += to_text(r.head);
  s += " :- ";
  for (size_t i = 0; i < r.body.size(); ++i) {
    if (i) s += ", ";
    s += to_text(r.body[i]);
  }
  s += '.';
  return s;
}

inline std::string to_text(const Program& p, bool with_ids = false) {
  std::string s;
  for (const auto& r : p.rules) {
    s += to_text(r, with_ids);
    s += '\n';
  }
  return s;
}

inline std::string to_text(const ProvQuestion& q) {
  return std::string(q.why() ? "WHY " : "WHYNOT ") + to_text(q.pattern);
}

// ---------------------------------------------------------------- parser

namespace detail {

struct Token {
  enum class Kind { Ident, Punct, End };
  Kind kind = Kind::End;
  std::string text;
  bool quoted = false;
  int line = 0, col = 0;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }

  Token next() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    skip_space();
    tok_ = Token{};
    tok_.line = line_;
    tok_.col = col_;
    if (pos_ >= src_.size()) {
      tok_.kind = Token::Kind::End;
      return;
    }
    char c = src_[pos_];
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        take();
      tok_.kind = Token::Kind::Ident;
      tok_.text = src_.substr(start, pos_ - start);
      return;
    }
    if (c == '\'' || c == '"') {
      char quote = c;
      take();
      std::string text;
      while (pos_ < src_.size() && src_[pos_] != quote) text += src_[take_idx()];
      if (pos_ >= src_.size()) fail("unterminated quoted constant");
      take();
      tok_.kind = Token::Kind::Ident;
      tok_.text = std::move(text);
      tok_.quoted = true;
      return;
    }
    tok_.kind = Token::Kind::Punct;
    if (c == ':' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '-') {
      tok_.text = ":-";
      take();
      take();
      return;
    }
    if ((c == '!' || c == '<' || c == '>') && pos_ + 1 < src_.size() && src_[pos_ + 1] == '=') {
      tok_.text = std::string(1, c) + "=";
      take();
      take();
      return;
    }
    tok_.text = std::string(1, c);
    take();
  }

  void skip_space() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '%') {
        while (pos_ < src_.size() && src_[pos_] != '\n') take();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        take();
      } else {
        break;
      }
    }
  }

  size_t take_idx() {
    size_t i = pos_;
    take();
    return i;
  }

  void take() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  [[noreturn]] void fail(const std::string& msg) {
    throw SyntaxError("line " + std::to_string(line_) + ":" + std::to_string(col_) + ": " + msg);
  }

  const std::string& src_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token tok_;
};

inline bool ident_is_var(const std::string& s, bool quoted) {
  return !quoted && !s.empty() && (std::isupper(static_cast<unsigned char>(s[0])) || s[0] == '_');
}

class ProgramParser {
 public:
  explicit ProgramParser(const std::string& src) : lex_(src) {}

  Program parse() {
    Program p;
    std::set<std::string> ids;
    while (lex_.peek().kind != Token::Kind::End) p.rules.push_back(parse_rule());
    int next = 1;
    for (auto& r : p.rules) {
      if (r.id.empty()) r.id = "r" + std::to_string(next);
      ++next;
    }
    for (const auto& r : p.rules)
      if (!ids.insert(r.id).second)
        throw SyntaxError("duplicate rule id '" + r.id + "'");
    if (!p.rules.empty()) p.answer = p.rules.front().head.pred;
    return p;
  }

 private:
  Rule parse_rule() {
    Rule r;
    Token first = expect_ident("predicate or rule label");
    if (lex_.peek().kind == Token::Kind::Punct && lex_.peek().text == ":") {
      lex_.next();
      r.id = first.text;
      first = expect_ident("predicate");
    }
    r.head = parse_atom(first);
    expect_punct(":-");
    r.body.push_back(parse_literal());
    while (lex_.peek().kind == Token::Kind::Punct && lex_.peek().text == ",") {
      lex_.next();
      r.body.push_back(parse_literal());
    }
    expect_punct(".");
    return r;
  }

  Literal parse_literal() {
    const Token& t = lex_.peek();
    if (t.kind == Token::Kind::Ident && !t.quoted && t.text == "not") {
      Token kw = lex_.next();
      Token name = expect_ident("predicate after 'not'");
      if (lex_.peek().kind != Token::Kind::Punct || lex_.peek().text != "(")
        fail(kw, "'not' applies to relation goals only");
      return Literal::neg(parse_atom(name));
    }
    Token first = expect_ident("goal");
    if (lex_.peek().kind == Token::Kind::Punct && lex_.peek().text == "(")
      return Literal::pos(parse_atom(first));
    Term lhs = make_term(first);
    CmpOp op = parse_cmp_op();
    Token rhs = expect_ident("comparison operand");
    return Literal::cmp(lhs, op, make_term(rhs));
  }

  CmpOp parse_cmp_op() {
    Token t = lex_.next();
    if (t.kind != Token::Kind::Punct) fail(t, "expected comparison operator");
    if (t.text == "=") return CmpOp::Eq;
    if (t.text == "!=") return CmpOp::Ne;
    if (t.text == "<") return CmpOp::Lt;
    if (t.text == "<=") return CmpOp::Le;
    if (t.text == ">") return CmpOp::Gt;
    if (t.text == ">=") return CmpOp::Ge;
    fail(t, "expected comparison operator, got '" + t.text + "'");
  }

  Atom parse_atom(const Token& name) {
    if (name.quoted) fail(name, "predicate names cannot be quoted");
    Atom a;
    a.pred = name.text;
    expect_punct("(");
    if (lex_.peek().kind == Token::Kind::Punct && lex_.peek().text == ")") {
      lex_.next();
      return a;
    }
    a.args.push_back(parse_term());
    while (lex_.peek().kind == Token::Kind::Punct && lex_.peek().text == ",") {
      lex_.next();
      a.args.push_back(parse_term());
    }
    expect_punct(")");
    return a;
  }

  Term parse_term() { return make_term(expect_ident("term")); }

  static Term make_term(const Token& t) {
    return ident_is_var(t.text, t.quoted) ? Term::var(t.text) : Term::cst(t.text);
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
    throw SyntaxError("line " + std::to_string(t.line) + ":" + std::to_string(t.col) + ": " + msg);
  }

  Lexer lex_;
};

}  // namespace detail

// ---------------------------------------------------------------- analysis

inline std::set<std::string> head_predicates(const Program& p) {
  std::set<std::string> s;
  for (const auto& r : p.rules) s.insert(r.head.pred);
  return s;
}

inline std::set<std::string> body_predicates(const Program& p) {
  std::set<std::string> s;
  for (const auto& r : p.rules)
    for (const auto& l : r.body)
      if (!l.compare()) s.insert(l.atom.pred);
  return s;
}

inline std::set<std::string> edb_predicates(const Program& p) {
  std::set<std::string> s = body_predicates(p);
  for (const auto& h : head_predicates(p)) s.erase(h);
  return s;
}

inline void check_arities(const Program& p) {
  std::map<std::string, size_t> arity;
  auto note = [&](const Atom& a, const std::string& where) {
    auto [it, fresh] = arity.emplace(a.pred, a.args.size());
    if (!fresh && it->second != a.args.size())
      throw ArityMismatch("predicate " + a.pred + " used with arity " +
                          std::to_string(it->second) + " and " + std::to_string(a.args.size()) +
                          " (" + where + ")");
  };
  for (const auto& r : p.rules) {
    note(r.head, "rule " + r.id);
    for (const auto& l : r.body)
      if (!l.compare()) note(l.atom, "rule " + r.id);
  }
}

inline void check_safety(const Program& p) {
  for (const auto& r : p.rules) {
    std::set<std::string> bound;
    for (const auto& l : r.body)
      if (l.positive())
        for (const auto& t : l.atom.args)
          if (t.is_var) bound.insert(t.text);
    auto need = [&](const Term& t, const std::string& where) {
      if (t.is_var && !bound.count(t.text))
        throw UnsafeRule("rule " + r.id + ": variable " + t.text + " in " + where +
                         " is not bound by a positive goal");
    };
    for (const auto& t : r.head.args) need(t, "the head");
    for (const auto& l : r.body) {
      if (l.negated())
        for (const auto& t : l.atom.args) need(t, "a negated goal");
      if (l.compare()) {
        need(l.lhs, "a comparison");
        need(l.rhs, "a comparison");
      }
    }
  }
}

inline void check_nonrecursive(const Program& p) {
  std::map<std::string, std::set<std::string>> dep;
  for (const auto& r : p.rules)
    for (const auto& l : r.body)
      if (!l.compare()) dep[r.head.pred].insert(l.atom.pred);
  std::map<std::string, int> state;  // 0 fresh, 1 active, 2 done
  std::vector<std::string> stack;
  auto dfs = [&](auto&& self, const std::string& pred) -> void {
    state[pred] = 1;
    stack.push_back(pred);
    for (const auto& next : dep[pred]) {
      if (state[next] == 1) {
        std::string cycle = next;
        for (auto it = std::find(stack.begin(), stack.end(), next); it != stack.end(); ++it)
          if (*it != next) cycle += " -> " + *it;
        throw RecursionDetected("recursive predicate dependency: " + cycle + " -> " + next);
      }
      if (state[next] == 0) self(self, next);
    }
    stack.pop_back();
    state[pred] = 2;
  };
  for (const auto& [pred, _] : dep)
    if (state[pred] == 0) dfs(dfs, pred);
}

inline void check_program(const Program& p) {
  check_arities(p);
  check_safety(p);
  check_nonrecursive(p);
}

inline Program parse_program(const std::string& source) {
  Program p = detail::ProgramParser(source).parse();
  check_program(p);
  return p;
}

// Predicates ordered so every rule's body predicates precede its head.
inline std::vector<std::string> topo_predicates(const Program& p) {
  std::set<std::string> heads = head_predicates(p);
  std::map<std::string, std::set<std::string>> dep;
  for (const auto& r : p.rules)
    for (const auto& l : r.body)
      if (!l.compare() && heads.count(l.atom.pred)) dep[r.head.pred].insert(l.atom.pred);
  std::vector<std::string> order;
  std::set<std::string> done;
  auto visit = [&](auto&& self, const std::string& pred) -> void {
    if (done.count(pred)) return;
    done.insert(pred);
    for (const auto& d : dep[pred]) self(self, d);
    order.push_back(pred);
  };
  for (const auto& h : heads) visit(visit, h);
  return order;
}

// Head args followed by body-only variables in order of first appearance.
inline std::vector<Term> rule_full_args(const Rule& r) {
  std::vector<Term> out = r.head.args;
  std::set<std::string> seen;
  for (const auto& t : r.head.args)
    if (t.is_var) seen.insert(t.text);
  auto add = [&](const Term& t) {
    if (t.is_var && seen.insert(t.text).second) out.push_back(t);
  };
  for (const auto& l : r.body) {
    if (l.compare()) {
      add(l.lhs);
      add(l.rhs);
    } else {
      for (const auto& t : l.atom.args) add(t);
    }
  }
  return out;
}

// ---------------------------------------------------------------- instances

using Tuple = std::vector<std::string>;

struct Relation {
  size_t arity = 0;
  std::set<Tuple> tuples;
};

struct Instance {
  std::map<std::string, Relation> relations;
  std::map<std::string, std::set<Tuple>> undetermined;
  std::map<std::string, std::map<Tuple, std::string>> annotations;

  Relation& touch(const std::string& pred, size_t arity) {
    auto [it, fresh] = relations.emplace(pred, Relation{arity, {}});
    if (!fresh && it->second.arity != arity)
      throw ArityMismatch("relation " + pred + " used with arity " +
                          std::to_string(it->second.arity) + " and " + std::to_string(arity));
    return it->second;
  }

  void add(const std::string& pred, Tuple t) {
    touch(pred, t.size()).tuples.insert(std::move(t));
  }

  void add_undetermined(const std::string& pred, Tuple t) {
    touch(pred, t.size());
    undetermined[pred].insert(std::move(t));
  }

  void annotate(const std::string& pred, const Tuple& t, const std::string& var) {
    annotations[pred][t] = var;
  }

  bool has(const std::string& pred, const Tuple& t) const {
    auto it = relations.find(pred);
    return it != relations.end() && it->second.tuples.count(t);
  }

  bool is_undetermined(const std::string& pred, const Tuple& t) const {
    auto it = undetermined.find(pred);
    return it != undetermined.end() && it->second.count(t);
  }

  bool has_undetermined() const {
    for (const auto& [_, s] : undetermined)
      if (!s.empty()) return true;
    return false;
  }

  const std::string* annotation(const std::string& pred, const Tuple& t) const {
    auto it = annotations.find(pred);
    if (it == annotations.end()) return nullptr;
    auto jt = it->second.find(t);
    return jt == it->second.end() ? nullptr : &jt->second;
  }
};

// ---------------------------------------------------------------- domains

struct AttrRef {
  std::string pred;
  size_t pos = 0;  // zero-based

  std::string name() const { return pred + "." + std::to_string(pos + 1); }
  auto operator<=>(const AttrRef&) const = default;
};

inline AttrRef parse_attr_ref(const std::string& text) {
  auto dot = text.rfind('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == text.size())
    throw SyntaxError("attribute reference '" + text + "' is not of the form R.i");
  AttrRef a;
  a.pred = text.substr(0, dot);
  try {
    long v = std::stol(text.substr(dot + 1));
    if (v < 1) throw std::out_of_range("");
    a.pos = static_cast<size_t>(v - 1);
  } catch (...) {
    throw SyntaxError("attribute reference '" + text + "' has a bad position");
  }
  return a;
}

struct DomainAssignment {
  std::map<std::string, std::vector<std::set<std::string>>> attrs;

  std::set<std::string>& at(const std::string& pred, size_t pos, size_t arity) {
    auto& v = attrs[pred];
    if (v.size() < arity) v.resize(arity);
    return v.at(pos);
  }

  const std::set<std::string>* find(const std::string& pred, size_t pos) const {
    auto it = attrs.find(pred);
    if (it == attrs.end() || pos >= it->second.size()) return nullptr;
    return &it->second[pos];
  }
};

inline std::set<std::string> active_domain(const Instance& inst) {
  std::set<std::string> adom;
  for (const auto& [_, rel] : inst.relations)
    for (const auto& t : rel.tuples) adom.insert(t.begin(), t.end());
  for (const auto& [_, tuples] : inst.undetermined)
    for (const auto& t : tuples) adom.insert(t.begin(), t.end());
  return adom;
}

// Per-attribute active domains; undetermined tuples count as occurrences.
inline DomainAssignment attribute_domains(const Instance& inst) {
  DomainAssignment d;
  auto scan = [&](const std::string& pred, const std::set<Tuple>& tuples) {
    size_t arity = inst.relations.at(pred).arity;
    auto& v = d.attrs[pred];
    if (v.size() < arity) v.resize(arity);
    for (const auto& t : tuples)
      for (size_t i = 0; i < t.size(); ++i) v[i].insert(t[i]);
  };
  for (const auto& [pred, rel] : inst.relations) scan(pred, rel.tuples);
  for (const auto& [pred, tuples] : inst.undetermined) scan(pred, tuples);
  return d;
}

using DomainGroups = std::vector<std::vector<AttrRef>>;

inline DomainAssignment default_domains(const Instance& inst, const DomainGroups& groups = {}) {
  DomainAssignment d = attribute_domains(inst);
  for (const auto& group : groups) {
    std::set<std::string> merged;
    for (const auto& a : group) {
      auto it = inst.relations.find(a.pred);
      if (it == inst.relations.end())
        throw MissingRelation("domain group names unknown relation " + a.pred);
      if (a.pos >= it->second.arity)
        throw ArityMismatch("domain group attribute " + a.name() + " is out of range");
      const auto& s = d.attrs[a.pred][a.pos];
      merged.insert(s.begin(), s.end());
    }
    for (const auto& a : group) d.attrs[a.pred][a.pos] = merged;
  }
  return d;
}

// Domains for derived predicates: a head attribute collects the domains of
// every body position its variable occupies, across all rules for the
// predicate; constant head args contribute themselves.
inline DomainAssignment extend_domains(const Program& p, const Instance& inst,
                                       const DomainAssignment& edb) {
  DomainAssignment d = edb;
  DomainAssignment fallback = attribute_domains(inst);
  // stored relations without an assignment fall back to their active domain
  for (const auto& pred : edb_predicates(p)) {
    auto it = inst.relations.find(pred);
    if (it == inst.relations.end()) continue;
    auto& v = d.attrs[pred];
    if (v.size() < it->second.arity) v.resize(it->second.arity);
    for (size_t i = 0; i < it->second.arity; ++i)
      if (v[i].empty())
        if (const auto* s = fallback.find(pred, i)) v[i] = *s;
  }
  auto dom_of = [&](const std::string& pred, size_t pos) -> const std::set<std::string>* {
    if (const auto* s = d.find(pred, pos)) return s;
    return fallback.find(pred, pos);
  };
  std::set<std::string> heads = head_predicates(p);
  for (const auto& pred : topo_predicates(p)) {
    if (!heads.count(pred)) continue;
    for (const auto& r : p.rules) {
      if (r.head.pred != pred) continue;
      auto& v = d.attrs[pred];
      if (v.size() < r.head.args.size()) v.resize(r.head.args.size());
      for (size_t i = 0; i < r.head.args.size(); ++i) {
        const Term& t = r.head.args[i];
        if (!t.is_var) {
          v[i].insert(t.text);
          continue;
        }
        for (const auto& l : r.body) {
          if (l.compare()) continue;
          for (size_t j = 0; j < l.atom.args.size(); ++j) {
            if (!l.atom.args[j].is_var || l.atom.args[j].text != t.text) continue;
            if (const auto* s = dom_of(l.atom.pred, j)) v[i].insert(s->begin(), s->end());
          }
        }
      }
    }
  }
  return d;
}

// Positions in non-builtin body goals (positive and negated) binding a var.
inline std::vector<AttrRef> body_attrs(const Rule& r, const std::string& var) {
  std::vector<AttrRef> out;
  for (const auto& l : r.body) {
    if (l.compare()) continue;
    for (size_t j = 0; j < l.atom.args.size(); ++j)
      if (l.atom.args[j].is_var && l.atom.args[j].text == var)
        out.push_back({l.atom.pred, j});
  }
  return out;
}

// ---------------------------------------------------------------- statuses

enum class Status : uint8_t { T, F, U, W, L };

inline char status_char(Status s) {
  switch (s) {
    case Status::T: return 'T';
    case Status::F: return 'F';
    case Status::U: return 'U';
    case Status::W: return 'W';
    case Status::L: return 'L';
  }
  return '?';
}

inline Status status_from_char(char c) {
  switch (c) {
    case 'T': return Status::T;
    case 'F': return Status::F;
    case 'U': return Status::U;
    case 'W': return Status::W;
    case 'L': return Status::L;
  }
  throw SyntaxError(std::string("unknown status '") + c + "'");
}

// Three-valued conjunction/disjunction order: F < U < T.
inline Status and_status(Status a, Status b) {
  if (a == Status::F || b == Status::F) return Status::F;
  if (a == Status::U || b == Status::U) return Status::U;
  return Status::T;
}

inline Status or_status(Status a, Status b) {
  if (a == Status::T || b == Status::T) return Status::T;
  if (a == Status::U || b == Status::U) return Status::U;
  return Status::F;
}

inline Status negate_status(Status s) {
  if (s == Status::T) return Status::F;
  if (s == Status::F) return Status::T;
  return Status::U;
}

// ---------------------------------------------------------------- evaluation

namespace detail {

// Tuples of a relation including undetermined ones, each with a status.
struct StatusView {
  std::vector<std::pair<Tuple, Status>> rows;
  std::map<Tuple, Status> lookup;
};

class Joiner {
 public:
  Joiner(const Program& p, const Instance& inst, bool three_valued)
      : program_(p), inst_(inst), three_(three_valued) {
    for (const auto& [pred, rel] : inst.relations) {
      auto& view = views_[pred];
      for (const auto& t : rel.tuples) {
        view.rows.push_back({t, Status::T});
        view.lookup[t] = Status::T;
      }
    }
    if (three_valued) {
      for (const auto& [pred, tuples] : inst.undetermined) {
        auto& view = views_[pred];
        for (const auto& t : tuples) {
          view.rows.push_back({t, Status::U});
          view.lookup[t] = Status::U;
        }
      }
    }
    std::set<std::string> heads = head_predicates(p);
    for (const auto& r : p.rules)
      for (const auto& l : r.body) {
        if (l.compare()) continue;
        if (heads.count(l.atom.pred)) continue;
        auto it = inst.relations.find(l.atom.pred);
        if (it == inst.relations.end())
          throw MissingRelation("relation " + l.atom.pred + " is not part of the instance");
        if (it->second.arity != l.atom.args.size())
          throw ArityMismatch("relation " + l.atom.pred + " has arity " +
                              std::to_string(it->second.arity) + " but rule " + r.id +
                              " uses arity " + std::to_string(l.atom.args.size()));
      }
  }

  // Runs `emit(binding, status)` for every derivation of the rule whose
  // status is T (or T/U in three-valued mode).
  template <typename Emit>
  void derivations(const Rule& r, Emit&& emit) {
    std::vector<const Literal*> pos, rest;
    for (const auto& l : r.body)
      (l.positive() ? pos : rest).push_back(&l);
    std::map<std::string, std::string> env;
    ground(r, pos, rest, 0, env, Status::T, emit);
  }

  Status tuple_status(const std::string& pred, const Tuple& t) const {
    auto it = views_.find(pred);
    if (it == views_.end()) return Status::F;
    auto jt = it->second.lookup.find(t);
    return jt == it->second.lookup.end() ? Status::F : jt->second;
  }

  void set_status(const std::string& pred, const Tuple& t, Status s) {
    auto& view = views_[pred];
    auto [it, fresh] = view.lookup.emplace(t, s);
    if (fresh) {
      view.rows.push_back({t, s});
    } else if (it->second != s) {
      it->second = s;
      for (auto& row : view.rows)
        if (row.first == t) row.second = s;
    }
    indexes_.erase(pred);
  }

 private:
  template <typename Emit>
  void ground(const Rule& r, const std::vector<const Literal*>& pos,
              const std::vector<const Literal*>& rest, size_t i,
              std::map<std::string, std::string>& env, Status acc, Emit&& emit) {
    if (acc == Status::F) return;
    if (i == pos.size()) {
      Status s = acc;
      for (const Literal* l : rest) {
        if (l->compare()) {
          s = and_status(s, eval_cmp(l->op, value(l->lhs, env), value(l->rhs, env))
                                ? Status::T
                                : Status::F);
        } else {
          Tuple t = ground_args(l->atom, env);
          s = and_status(s, negate_status(tuple_status(l->atom.pred, t)));
        }
        if (s == Status::F) return;
      }
      emit(env, s);
      return;
    }
    const Atom& a = pos[i]->atom;
    // Probe with the positions already bound by env.
    std::vector<size_t> bound, free;
    std::string key;
    for (size_t j = 0; j < a.args.size(); ++j) {
      const Term& t = a.args[j];
      if (!t.is_var) {
        bound.push_back(j);
        key += t.text;
        key += '\x1f';
      } else if (auto it = env.find(t.text); it != env.end()) {
        bound.push_back(j);
        key += it->second;
        key += '\x1f';
      } else {
        free.push_back(j);
      }
    }
    for (const auto* row : candidates(a.pred, bound, key)) {
      const Tuple& t = row->first;
      if (t.size() != a.args.size()) continue;
      bool ok = true;
      std::vector<std::string> added;
      for (size_t j : free) {
        const std::string& name = a.args[j].text;
        auto it = env.find(name);
        if (it == env.end()) {
          env.emplace(name, t[j]);
          added.push_back(name);
        } else if (it->second != t[j]) {
          ok = false;
          break;
        }
      }
      if (ok) ground(r, pos, rest, i + 1, env, and_status(acc, row->second), emit);
      for (const auto& name : added) env.erase(name);
    }
  }

  // Rows matching the bound positions of an atom.
  const std::vector<const std::pair<Tuple, Status>*>& candidates(const std::string& pred,
                                                                 const std::vector<size_t>& mask,
                                                                 const std::string& key) {
    auto& per_mask = indexes_[pred];
    std::string mask_key;
    for (size_t j : mask) mask_key += std::to_string(j) + ",";
    auto& index = per_mask[mask_key];
    if (index.empty()) {
      auto it = views_.find(pred);
      if (it != views_.end()) {
        for (const auto& row : it->second.rows) {
          std::string k;
          for (size_t j : mask) {
            if (j >= row.first.size()) {
              k.clear();
              break;
            }
            k += row.first[j];
            k += '\x1f';
          }
          index[k].push_back(&row);
        }
      }
      index.emplace("\x01missing", std::vector<const std::pair<Tuple, Status>*>{});
    }
    auto hit = index.find(key);
    if (hit == index.end()) return empty_;
    return hit->second;
  }

  static std::string value(const Term& t, const std::map<std::string, std::string>& env) {
    if (!t.is_var) return t.text;
    return env.at(t.text);
  }

 public:
  static Tuple ground_args(const Atom& a, const std::map<std::string, std::string>& env) {
    Tuple t;
    t.reserve(a.args.size());
    for (const auto& arg : a.args) t.push_back(value(arg, env));
    return t;
  }

 private:
  const Program& program_;
  const Instance& inst_;
  bool three_;
  std::map<std::string, StatusView> views_;
  std::map<std::string,
           std::map<std::string,
                    std::unordered_map<std::string, std::vector<const std::pair<Tuple, Status>*>>>>
      indexes_;
  std::vector<const std::pair<Tuple, Status>*> empty_;
};

}  // namespace detail

inline Instance evaluate(const Program& p, const Instance& inst) {
  if (inst.has_undetermined())
    throw Error("evaluate: instance has undetermined tuples, use evaluate3");
  check_program(p);
  detail::Joiner joiner(p, inst, false);
  Instance out = inst;
  std::map<std::string, std::vector<const Rule*>> by_head;
  for (const auto& r : p.rules) by_head[r.head.pred].push_back(&r);
  for (const auto& pred : topo_predicates(p)) {
    auto it = by_head.find(pred);
    if (it == by_head.end()) continue;
    size_t arity = it->second.front()->head.args.size();
    out.touch(pred, arity);
    for (const Rule* r : it->second) {
      joiner.derivations(*r, [&](const std::map<std::string, std::string>& env, Status) {
        Tuple t = detail::Joiner::ground_args(r->head, env);
        if (out.touch(pred, arity).tuples.insert(t).second) joiner.set_status(pred, t, Status::T);
      });
    }
  }
  return out;
}

struct Eval3Result {
  // Only tuples with status T or U appear; everything else is F.
  std::map<std::string, std::map<Tuple, Status>> entries;

  Status status(const std::string& pred, const Tuple& t) const {
    auto it = entries.find(pred);
    if (it == entries.end()) return Status::F;
    auto jt = it->second.find(t);
    return jt == it->second.end() ? Status::F : jt->second;
  }
};

inline Eval3Result evaluate3(const Program& p, const Instance& inst) {
  check_program(p);
  detail::Joiner joiner(p, inst, true);
  Eval3Result out;
  for (const auto& [pred, rel] : inst.relations)
    for (const auto& t : rel.tuples) out.entries[pred][t] = Status::T;
  for (const auto& [pred, tuples] : inst.undetermined)
    for (const auto& t : tuples) {
      auto [it, fresh] = out.entries[pred].emplace(t, Status::U);
      if (!fresh && it->second == Status::T)
        throw Error("evaluate3: tuple of " + pred + " is both present and undetermined");
    }
  std::map<std::string, std::vector<const Rule*>> by_head;
  for (const auto& r : p.rules) by_head[r.head.pred].push_back(&r);
  for (const auto& pred : topo_predicates(p)) {
    auto it = by_head.find(pred);
    if (it == by_head.end()) continue;
    std::map<Tuple, Status> computed;
    for (const Rule* r : it->second) {
      joiner.derivations(*r, [&](const std::map<std::string, std::string>& env, Status s) {
        Tuple t = detail::Joiner::ground_args(r->head, env);
        auto [jt, fresh] = computed.emplace(t, s);
        if (!fresh) jt->second = or_status(jt->second, s);
      });
    }
    for (const auto& [t, s] : computed) {
      out.entries[pred][t] = s;
      joiner.set_status(pred, t, s);
    }
  }
  return out;
}

}  // namespace provlog
