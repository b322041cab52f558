#pragma once

#include <random>
#include <string>

#include "provlog/datalog.hpp"
#include "provlog/io.hpp"

namespace support {

using namespace provlog;

inline std::filesystem::path repo_path(const std::string& rel) {
  return std::filesystem::path(PROVLOG_REPO_DIR) / rel;
}

inline std::string golden(const std::string& name) {
  return read_file(repo_path("tests/golden/" + name));
}

// ------------------------------------------------------------ naive oracle
//
// Brute-force evaluation: ground every rule over the full active domain and
// apply rules in dependency-depth order. Deliberately avoids the engine's
// join machinery.

inline int pred_depth(const Program& p, const std::string& pred,
                      std::map<std::string, int>& memo) {
  auto it = memo.find(pred);
  if (it != memo.end()) return it->second;
  memo[pred] = 0;  // EDB unless a rule says otherwise
  int depth = 0;
  for (const auto& r : p.rules) {
    if (r.head.pred != pred) continue;
    for (const auto& l : r.body)
      if (!l.compare()) depth = std::max(depth, 1 + pred_depth(p, l.atom.pred, memo));
    if (r.body.empty()) depth = std::max(depth, 1);
  }
  memo[pred] = depth;
  return depth;
}

inline Instance naive_evaluate(const Program& p, const Instance& inst) {
  std::set<std::string> adom = active_domain(inst);
  std::vector<std::string> consts(adom.begin(), adom.end());
  Instance out = inst;
  std::map<std::string, int> depths;
  std::vector<const Rule*> rules;
  for (const auto& r : p.rules) rules.push_back(&r);
  std::stable_sort(rules.begin(), rules.end(), [&](const Rule* a, const Rule* b) {
    return pred_depth(p, a->head.pred, depths) < pred_depth(p, b->head.pred, depths);
  });
  for (const Rule* r : rules) out.touch(r->head.pred, r->head.args.size());
  for (const Rule* r : rules) {
    std::vector<std::string> vars;
    std::set<std::string> seen;
    auto note = [&](const Term& t) {
      if (t.is_var && seen.insert(t.text).second) vars.push_back(t.text);
    };
    for (const auto& t : r->head.args) note(t);
    for (const auto& l : r->body) {
      if (l.compare()) {
        note(l.lhs);
        note(l.rhs);
      } else {
        for (const auto& t : l.atom.args) note(t);
      }
    }
    std::map<std::string, std::string> env;
    auto fill = [&](auto&& self, size_t i) -> void {
      if (i == vars.size()) {
        auto val = [&](const Term& t) { return t.is_var ? env.at(t.text) : t.text; };
        for (const auto& l : r->body) {
          if (l.compare()) {
            if (!eval_cmp(l.op, val(l.lhs), val(l.rhs))) return;
          } else {
            Tuple t;
            for (const auto& a : l.atom.args) t.push_back(val(a));
            bool present = out.has(l.atom.pred, t);
            if (l.positive() != present) return;
          }
        }
        Tuple h;
        for (const auto& a : r->head.args) h.push_back(val(a));
        out.add(r->head.pred, h);
        return;
      }
      for (const auto& c : consts) {
        env[vars[i]] = c;
        self(self, i + 1);
      }
      env.erase(vars[i]);
    };
    fill(fill, 0);
  }
  return out;
}

// Naive three-valued evaluation: full grounding over the active domain with
// Kleene connectives, rules applied in dependency-depth order.
inline Eval3Result naive_evaluate3(const Program& p, const Instance& inst) {
  std::set<std::string> adom = active_domain(inst);
  std::vector<std::string> consts(adom.begin(), adom.end());
  Eval3Result out;
  for (const auto& [pred, rel] : inst.relations)
    for (const auto& t : rel.tuples) out.entries[pred][t] = Status::T;
  for (const auto& [pred, rows] : inst.undetermined)
    for (const auto& t : rows) out.entries[pred][t] = Status::U;
  std::map<std::string, int> depths;
  std::vector<const Rule*> rules;
  for (const auto& r : p.rules) rules.push_back(&r);
  std::stable_sort(rules.begin(), rules.end(), [&](const Rule* a, const Rule* b) {
    return pred_depth(p, a->head.pred, depths) < pred_depth(p, b->head.pred, depths);
  });
  for (const Rule* r : rules) {
    std::vector<std::string> vars;
    std::set<std::string> seen;
    auto note = [&](const Term& t) {
      if (t.is_var && seen.insert(t.text).second) vars.push_back(t.text);
    };
    for (const auto& t : r->head.args) note(t);
    for (const auto& l : r->body) {
      if (l.compare()) {
        note(l.lhs);
        note(l.rhs);
      } else {
        for (const auto& t : l.atom.args) note(t);
      }
    }
    std::map<std::string, std::string> env;
    auto fill = [&](auto&& self, size_t i) -> void {
      if (i == vars.size()) {
        auto val = [&](const Term& t) { return t.is_var ? env.at(t.text) : t.text; };
        Status s = Status::T;
        for (const auto& l : r->body) {
          if (l.compare()) {
            s = and_status(s, eval_cmp(l.op, val(l.lhs), val(l.rhs)) ? Status::T : Status::F);
          } else {
            Tuple t;
            for (const auto& a : l.atom.args) t.push_back(val(a));
            Status g = out.status(l.atom.pred, t);
            s = and_status(s, l.positive() ? g : negate_status(g));
          }
        }
        if (s == Status::F) return;
        Tuple h;
        for (const auto& a : r->head.args) h.push_back(val(a));
        auto [it, fresh] = out.entries[r->head.pred].emplace(h, s);
        if (!fresh) it->second = or_status(it->second, s);
        return;
      }
      for (const auto& c : consts) {
        env[vars[i]] = c;
        self(self, i + 1);
      }
      env.erase(vars[i]);
    };
    fill(fill, 0);
  }
  return out;
}

// ------------------------------------------------------- random programs

struct RandomCase {
  Program program;
  Instance instance;
  DomainAssignment doms;
  ProvQuestion question;
};

struct GenOptions {
  int max_rules = 3;
  int max_vars = 3;
  int num_constants = 5;
  bool negation = true;
  bool comparisons = false;
  bool undetermined = false;
};

// Random safe, non-recursive programs. IDB predicates are tiered (I1 may use
// only EDB, I2 may use I1, Q may use both) so recursion cannot arise.
inline RandomCase random_case(std::mt19937_64& rng, const GenOptions& opts = {}) {
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<uint64_t>(n)); };
  std::vector<std::string> consts;
  for (int i = 0; i < opts.num_constants; ++i) consts.push_back("c" + std::to_string(i + 1));

  struct PredInfo {
    std::string name;
    size_t arity;
    int tier;
  };
  std::vector<PredInfo> preds = {
      {"E1", 1, 0}, {"E2", 2, 0}, {"I1", static_cast<size_t>(1 + pick(2)), 1},
      {"I2", static_cast<size_t>(1 + pick(2)), 2}, {"Q", static_cast<size_t>(1 + pick(2)), 3}};

  RandomCase rc;
  int nrules = 1 + pick(opts.max_rules);
  std::vector<int> heads;  // indices into preds, tiers non-decreasing
  for (int i = 0; i < nrules; ++i) heads.push_back(2 + pick(3));
  std::sort(heads.begin(), heads.end());
  std::set<int> defined;  // IDB preds that already have a rule
  for (int i = 0; i < nrules; ++i) {
    const PredInfo& hp = preds[heads[i]];
    Rule r;
    r.id = "r" + std::to_string(i + 1);
    int nvars = 1 + pick(opts.max_vars);
    std::vector<std::string> vars;
    for (int v = 0; v < nvars; ++v) vars.push_back(std::string(1, static_cast<char>('X' + v)));

    auto rand_term = [&](const std::vector<std::string>& pool, int const_bias) -> Term {
      if (pick(10) < const_bias || pool.empty()) return Term::cst(consts[pick(opts.num_constants)]);
      return Term::var(pool[pick(static_cast<int>(pool.size()))]);
    };

    // Goals range over EDB predicates and IDB predicates that already have
    // rules, with strictly lower tier; recursion cannot arise.
    std::vector<int> lower;
    for (size_t pi = 0; pi < preds.size(); ++pi)
      if (preds[pi].tier == 0 || (defined.count(static_cast<int>(pi)) && preds[pi].tier < hp.tier))
        lower.push_back(static_cast<int>(pi));

    int npos = 1 + pick(2);
    std::set<std::string> bound;
    for (int g = 0; g < npos; ++g) {
      const PredInfo& bp = preds[lower[pick(static_cast<int>(lower.size()))]];
      Atom a{bp.name, {}};
      for (size_t k = 0; k < bp.arity; ++k) {
        Term t = rand_term(vars, 2);
        if (t.is_var) bound.insert(t.text);
        a.args.push_back(t);
      }
      r.body.push_back(Literal::pos(a));
    }
    std::vector<std::string> usable(bound.begin(), bound.end());

    if (opts.negation && pick(10) < 6) {
      const PredInfo& bp = preds[lower[pick(static_cast<int>(lower.size()))]];
      Atom a{bp.name, {}};
      for (size_t k = 0; k < bp.arity; ++k) a.args.push_back(rand_term(usable, 3));
      r.body.push_back(Literal::neg(a));
    }
    if (opts.comparisons && !usable.empty() && pick(10) < 5) {
      Term lhs = Term::var(usable[pick(static_cast<int>(usable.size()))]);
      Term rhs = rand_term(usable, 5);
      CmpOp ops[] = {CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge};
      r.body.push_back(Literal::cmp(lhs, ops[pick(6)], rhs));
    }

    r.head.pred = hp.name;
    for (size_t k = 0; k < hp.arity; ++k) r.head.args.push_back(rand_term(usable, 2));
    rc.program.rules.push_back(std::move(r));
    defined.insert(heads[i]);
  }
  rc.program.answer = rc.program.rules.back().head.pred;

  for (const auto& pi : preds) {
    if (pi.tier != 0) continue;
    size_t total = 1;
    for (size_t k = 0; k < pi.arity; ++k) total *= consts.size();
    int annot = 0;
    for (size_t row = 0; row < total; ++row) {
      if (pick(10) >= 4) continue;
      size_t x = row;
      Tuple t;
      for (size_t k = 0; k < pi.arity; ++k) {
        t.push_back(consts[x % consts.size()]);
        x /= consts.size();
      }
      if (opts.undetermined && pick(10) < 2)
        rc.instance.add_undetermined(pi.name, t);
      else
        rc.instance.add(pi.name, t);
      rc.instance.annotate(pi.name, t, "a" + std::to_string(++annot) + pi.name);
    }
    rc.instance.touch(pi.name, pi.arity);
    // make sure every EDB relation exists even when empty
  }

  rc.doms = default_domains(rc.instance);
  // Domains must cover rule constants; widen every EDB attribute with the
  // full constant pool so questions and groundings stay in range.
  for (auto& [pred, attrs] : rc.doms.attrs)
    for (auto& s : attrs) s.insert(consts.begin(), consts.end());

  const Rule& qr = rc.program.rules.back();
  rc.question.kind = pick(2) ? ProvQuestion::Kind::Why : ProvQuestion::Kind::WhyNot;
  rc.question.pattern.pred = qr.head.pred;
  DomainAssignment full = extend_domains(rc.program, rc.instance, rc.doms);
  for (size_t k = 0; k < qr.head.args.size(); ++k) {
    if (pick(10) < 4) {
      rc.question.pattern.args.push_back(Term::var("P" + std::to_string(k + 1)));
    } else {
      const auto* dom = full.find(qr.head.pred, k);
      if (dom && !dom->empty()) {
        auto it = dom->begin();
        std::advance(it, pick(static_cast<int>(dom->size())));
        rc.question.pattern.args.push_back(Term::cst(*it));
      } else {
        rc.question.pattern.args.push_back(Term::var("P" + std::to_string(k + 1)));
      }
    }
  }
  return rc;
}

}  // namespace support
