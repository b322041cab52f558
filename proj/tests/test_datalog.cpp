#include <gtest/gtest.h>

#include "provlog/datalog.hpp"
#include "provlog/io.hpp"
#include "support.hpp"

using namespace provlog;

namespace {

Instance train_instance() { return load_instance(support::repo_path("fixtures/train")); }

Program train_program() {
  return parse_program(read_file(support::repo_path("fixtures/train/program.dl")));
}

TEST(Parse, RoundTrip) {
  Program p = parse_program(
      "% comment\n"
      "r1: Q(X,Y) :- T(X,Z), T(Z,Y), not T(X,Y).\n"
      "Helper(X) :- T(X,X), X != c.\n");
  ASSERT_EQ(p.rules.size(), 2u);
  EXPECT_EQ(p.rules[0].id, "r1");
  EXPECT_EQ(p.rules[1].id, "r2");
  EXPECT_EQ(p.answer, "Q");
  EXPECT_EQ(to_text(p.rules[0]), "Q(X,Y) :- T(X,Z), T(Z,Y), not T(X,Y).");
  EXPECT_EQ(to_text(p.rules[1], true), "r2: Helper(X) :- T(X,X), X != c.");
  Program again = parse_program(to_text(p, true));
  EXPECT_EQ(to_text(again, true), to_text(p, true));
}

TEST(Parse, TermConventions) {
  Program p = parse_program("Q(X,n) :- R(X, 'New York', n), S(X).\n");
  const Atom& a = p.rules[0].body[0].atom;
  EXPECT_TRUE(a.args[0].is_var);
  EXPECT_FALSE(a.args[1].is_var);
  EXPECT_EQ(a.args[1].text, "New York");
  EXPECT_FALSE(a.args[2].is_var);
}

TEST(Parse, ZeroArity) {
  Program p = parse_program("P() :- R(X).");
  EXPECT_TRUE(p.rules[0].head.args.empty());
  EXPECT_EQ(to_text(p.rules[0]), "P() :- R(X).");
}

TEST(Parse, Errors) {
  EXPECT_THROW(parse_program("Q(X) :- R(X)"), SyntaxError);           // missing dot
  EXPECT_THROW(parse_program("Q(X) :- R(X,.\n"), SyntaxError);        // bad term
  EXPECT_THROW(parse_program("r: Q(X) :- R(X). r: P(X) :- R(X)."), SyntaxError);
  EXPECT_THROW(parse_program("Q(X) :- R(X), not X = X."), SyntaxError);
  try {
    parse_program("Q(X) :-\nR(X");
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Parse, SafetyChecks) {
  EXPECT_THROW(parse_program("Q(X,Y) :- R(X)."), UnsafeRule);
  EXPECT_THROW(parse_program("Q(X) :- R(X), not S(Y)."), UnsafeRule);
  EXPECT_THROW(parse_program("Q(X) :- R(X), X < Y."), UnsafeRule);
  // negated goals do not bind
  EXPECT_THROW(parse_program("Q(Y) :- S(X), not R(X,Y)."), UnsafeRule);
  EXPECT_NO_THROW(parse_program("Q(X) :- S(X), not R(X)."));
}

TEST(Parse, RecursionAndArity) {
  EXPECT_THROW(parse_program("Q(X) :- R(X), Q(X)."), RecursionDetected);
  EXPECT_THROW(parse_program("A(X) :- B(X). B(X) :- A(X)."), RecursionDetected);
  EXPECT_THROW(parse_program("Q(X) :- R(X), R(X,Y)."), ArityMismatch);
}

TEST(Instance, LoadCsv) {
  Instance inst = train_instance();
  ASSERT_TRUE(inst.relations.count("T"));
  EXPECT_EQ(inst.relations.at("T").arity, 2u);
  EXPECT_EQ(inst.relations.at("T").tuples.size(), 6u);
  EXPECT_TRUE(inst.has("T", {"n", "w"}));
  ASSERT_NE(inst.annotation("T", {"n", "w"}), nullptr);
  EXPECT_EQ(*inst.annotation("T", {"n", "w"}), "t");
  EXPECT_FALSE(inst.has_undetermined());
}

TEST(Instance, LoadUndetermined) {
  Instance inst = load_instance(support::repo_path("fixtures/undet"));
  EXPECT_TRUE(inst.is_undetermined("T", {"n", "s"}));
  EXPECT_FALSE(inst.has("T", {"n", "s"}));
  EXPECT_EQ(*inst.annotation("T", {"n", "s"}), "v");
  EXPECT_TRUE(active_domain(inst).count("n"));
}

TEST(Domains, DefaultsAndGroups) {
  Instance inst = train_instance();
  DomainGroups groups = load_domain_groups(support::repo_path("fixtures/train/domains.groups"));
  ASSERT_EQ(groups.size(), 1u);
  DomainAssignment dom = default_domains(inst, groups);
  std::set<std::string> want = {"c", "n", "s", "w"};
  EXPECT_EQ(*dom.find("T", 0), want);
  EXPECT_EQ(*dom.find("T", 1), want);
  DomainAssignment plain = default_domains(inst);
  std::set<std::string> first = {"c", "n", "s", "w"};   // all appear on the left
  std::set<std::string> second = {"c", "s", "w"};       // no edge ends in n
  EXPECT_EQ(*plain.find("T", 0), first);
  EXPECT_EQ(*plain.find("T", 1), second);
}

TEST(Domains, ExtendToDerived) {
  Instance inst = train_instance();
  Program p = train_program();
  DomainAssignment dom =
      default_domains(inst, load_domain_groups(support::repo_path("fixtures/train/domains.groups")));
  DomainAssignment full = extend_domains(p, inst, dom);
  std::set<std::string> want = {"c", "n", "s", "w"};
  EXPECT_EQ(*full.find("Q", 0), want);
  EXPECT_EQ(*full.find("Q", 1), want);

  Program constant_head = parse_program("P(ok,X) :- T(X,Y).");
  DomainAssignment ext = extend_domains(constant_head, inst, dom);
  EXPECT_TRUE(ext.find("P", 0)->count("ok"));
  EXPECT_EQ(*ext.find("P", 1), want);
}

TEST(Evaluate, TrainResult) {
  Instance result = evaluate(train_program(), train_instance());
  std::set<Tuple> want = {{"w", "c"}, {"n", "s"}, {"c", "c"}};
  EXPECT_EQ(result.relations.at("Q").tuples, want);
}

TEST(Evaluate, ComparisonsAreNumericWhenPossible) {
  Instance inst;
  inst.add("R", {"2"});
  inst.add("R", {"10"});
  inst.add("R", {"x"});
  Program p = parse_program("Q(X) :- R(X), X < 3.");
  Instance result = evaluate(p, inst);
  std::set<Tuple> want = {{"2"}};  // lexicographic order would also admit "10"
  EXPECT_EQ(result.relations.at("Q").tuples, want);

  Program lex = parse_program("Q(X) :- R(X), X > b.");
  std::set<Tuple> wantlex = {{"x"}};
  EXPECT_EQ(evaluate(lex, inst).relations.at("Q").tuples, wantlex);
}

TEST(Evaluate, MissingRelation) {
  Instance inst;
  inst.add("R", {"a"});
  EXPECT_THROW(evaluate(parse_program("Q(X) :- R(X), S(X)."), inst), MissingRelation);
  EXPECT_THROW(evaluate(parse_program("Q(X) :- R(X,Y)."), inst), ArityMismatch);
}

TEST(Evaluate, RejectsUndetermined) {
  Instance inst;
  inst.add_undetermined("R", {"a"});
  EXPECT_THROW(evaluate(parse_program("Q(X) :- R(X)."), inst), Error);
}

TEST(Evaluate3, UndeterminedPropagates) {
  Instance inst = load_instance(support::repo_path("fixtures/undet"));
  Eval3Result r = evaluate3(train_program(), inst);
  EXPECT_EQ(r.status("T", {"n", "s"}), Status::U);
  EXPECT_EQ(r.status("T", {"n", "w"}), Status::T);
  EXPECT_EQ(r.status("T", {"s", "n"}), Status::F);
  EXPECT_EQ(r.status("Q", {"n", "s"}), Status::U);
  EXPECT_EQ(r.status("Q", {"w", "c"}), Status::T);
  EXPECT_EQ(r.status("Q", {"c", "c"}), Status::T);
  EXPECT_EQ(r.status("Q", {"n", "c"}), Status::F);
  // only T and U tuples are listed
  for (const auto& [pred, rows] : r.entries)
    for (const auto& [t, s] : rows) EXPECT_NE(s, Status::F);
}

TEST(Evaluate3, MatchesEvaluateWithoutUndetermined) {
  Instance inst = train_instance();
  Program p = train_program();
  Eval3Result r = evaluate3(p, inst);
  Instance e = evaluate(p, inst);
  for (const auto& t : e.relations.at("Q").tuples) EXPECT_EQ(r.status("Q", t), Status::T);
  size_t qcount = 0;
  for (const auto& [t, s] : r.entries.at("Q")) {
    EXPECT_EQ(s, Status::T);
    ++qcount;
  }
  EXPECT_EQ(qcount, e.relations.at("Q").tuples.size());
}

TEST(Evaluate, AgreesWithNaiveOracle) {
  std::mt19937_64 rng(20240817);
  support::GenOptions opts;
  opts.comparisons = true;
  for (int round = 0; round < 300; ++round) {
    support::RandomCase rc = support::random_case(rng, opts);
    Instance fast = evaluate(rc.program, rc.instance);
    Instance slow = support::naive_evaluate(rc.program, rc.instance);
    for (const auto& [pred, rel] : slow.relations) {
      ASSERT_TRUE(fast.relations.count(pred)) << pred << "\n" << to_text(rc.program, true);
      EXPECT_EQ(fast.relations.at(pred).tuples, rel.tuples)
          << "case " << round << "\n"
          << to_text(rc.program, true);
    }
  }
}

TEST(Evaluate3, AgreesWithNaiveThreeValuedOracle) {
  std::mt19937_64 rng(899171);
  support::GenOptions opts;
  opts.undetermined = true;
  opts.num_constants = 3;
  opts.comparisons = true;
  for (int round = 0; round < 200; ++round) {
    support::RandomCase rc = support::random_case(rng, opts);
    Eval3Result fast = evaluate3(rc.program, rc.instance);
    Eval3Result slow = support::naive_evaluate3(rc.program, rc.instance);
    EXPECT_EQ(fast.entries, slow.entries) << "case " << round << "\n"
                                          << to_text(rc.program, true);
  }
}

TEST(Evaluate3, SoundForEveryCompletion) {
  // Three-valued results are conservative: T tuples appear in every
  // completion of the undetermined tuples, F tuples in none. (U makes no
  // claim; the evaluation is compositional, not world-exact.)
  std::mt19937_64 rng(424243);
  support::GenOptions opts;
  opts.undetermined = true;
  opts.num_constants = 3;
  for (int round = 0; round < 80; ++round) {
    support::RandomCase rc = support::random_case(rng, opts);
    std::vector<std::pair<std::string, Tuple>> undet;
    for (const auto& [pred, rows] : rc.instance.undetermined)
      for (const auto& t : rows) undet.push_back({pred, t});
    if (undet.size() > 6) continue;
    Eval3Result three = evaluate3(rc.program, rc.instance);
    std::vector<Instance> results;
    for (size_t w = 0; w < (size_t{1} << undet.size()); ++w) {
      Instance world = rc.instance;
      world.undetermined.clear();
      for (size_t i = 0; i < undet.size(); ++i)
        if (w & (size_t{1} << i)) world.add(undet[i].first, undet[i].second);
      results.push_back(support::naive_evaluate(rc.program, world));
    }
    std::set<std::string> heads = head_predicates(rc.program);
    std::set<std::pair<std::string, Tuple>> universe;
    for (const auto& r : results)
      for (const auto& pred : heads)
        for (const auto& t : r.relations.at(pred).tuples) universe.insert({pred, t});
    for (const auto& pred : heads) {
      auto it = three.entries.find(pred);
      if (it == three.entries.end()) continue;
      for (const auto& [t, s] : it->second)
        if (s == Status::T) universe.insert({pred, t});
    }
    for (const auto& [pred, t] : universe) {
      bool all = true, some = false;
      for (const auto& r : results) {
        bool in = r.relations.at(pred).tuples.count(t) > 0;
        all = all && in;
        some = some || in;
      }
      Status got = three.status(pred, t);
      if (got == Status::T)
        EXPECT_TRUE(all) << pred << " case " << round << "\n" << to_text(rc.program, true);
      if (got == Status::F)
        EXPECT_FALSE(some) << pred << " case " << round << "\n" << to_text(rc.program, true);
      if (some && !all)
        EXPECT_EQ(got, Status::U) << pred << " case " << round << "\n"
                                  << to_text(rc.program, true);
    }
  }
}

TEST(Helpers, RuleFullArgsAndAttrs) {
  Program p = train_program();
  std::vector<Term> args = rule_full_args(p.rules[0]);
  ASSERT_EQ(args.size(), 3u);
  EXPECT_EQ(args[0].text, "X");
  EXPECT_EQ(args[1].text, "Y");
  EXPECT_EQ(args[2].text, "Z");
  auto attrs = body_attrs(p.rules[0], "Z");
  ASSERT_EQ(attrs.size(), 2u);
  EXPECT_EQ(attrs[0].name(), "T.2");
  EXPECT_EQ(attrs[1].name(), "T.1");
}

TEST(Helpers, Questions) {
  ProvQuestion q = parse_question("WHYNOT Q(s,X)");
  EXPECT_EQ(q.kind, ProvQuestion::Kind::WhyNot);
  EXPECT_EQ(q.pattern.pred, "Q");
  EXPECT_FALSE(q.pattern.args[0].is_var);
  EXPECT_TRUE(q.pattern.args[1].is_var);
  EXPECT_EQ(to_text(q), "WHYNOT Q(s,X)");
  EXPECT_EQ(parse_question("why P()").pattern.args.size(), 0u);
  EXPECT_THROW(parse_question("HOW Q(a)"), SyntaxError);
  EXPECT_THROW(parse_question("WHY Q(a) extra"), SyntaxError);
}

}  // namespace
