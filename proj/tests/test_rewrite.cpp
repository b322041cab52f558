#include <gtest/gtest.h>

#include "provlog/io.hpp"
#include "provlog/rewrite.hpp"
#include "support.hpp"

using namespace provlog;

namespace {

struct Fixture {
  Program program;
  Instance instance;
  DomainAssignment doms;
};

Fixture load(const std::string& name) {
  Fixture f;
  auto dir = support::repo_path("fixtures/" + name);
  f.program = parse_program(read_file(dir / "program.dl"));
  f.instance = load_instance(dir);
  f.doms = default_domains(f.instance, load_domain_groups(dir / "domains.groups"));
  return f;
}

void expect_same_explanation(const Explanation& got, const Explanation& want) {
  EXPECT_EQ(got.matched, want.matched);
  EXPECT_TRUE(same_graph(got.graph, want.graph))
      << "rewrite:\n"
      << edge_list(got.graph) << "oracle:\n"
      << edge_list(want.graph);
  EXPECT_EQ(got.graph.goal_negated, want.graph.goal_negated);
  EXPECT_EQ(got.graph.edb_preds, want.graph.edb_preds);
  std::set<std::string> got_roots, want_roots;
  for (int r : got.graph.roots) got_roots.insert(canonical(got.graph.labels[r]));
  for (int r : want.graph.roots) want_roots.insert(canonical(want.graph.labels[r]));
  EXPECT_EQ(got_roots, want_roots);
}

TEST(Unify, CopiesCarryBindings) {
  Fixture f = load("train");
  ProvQuestion q = parse_question("WHYNOT Q(s,n)");
  auto unified = unify_program(f.program, q);
  ASSERT_EQ(unified.size(), 1u);
  EXPECT_EQ(unified[0].rule_index, 0u);
  std::map<std::string, std::string> want{{"X", "s"}, {"Y", "n"}};
  EXPECT_EQ(unified[0].binding, want);
  EXPECT_EQ(to_text(unified[0].rule), "Q(s,n) :- T(s,Z), T(Z,n), not T(s,n).");
  EXPECT_EQ(unified[0].annot, 0);

  auto annotated = annotate_program(f.program, unified, q);
  ASSERT_EQ(annotated.size(), 1u);
  EXPECT_EQ(annotated[0].annot, kAnnotF);

  ProvQuestion why = parse_question("WHY Q(n,s)");
  auto why_annot = annotate_program(f.program, unify_program(f.program, why), why);
  ASSERT_EQ(why_annot.size(), 1u);
  EXPECT_EQ(why_annot[0].annot, kAnnotT);
}

TEST(Unify, SharedCopyMergesAnnotations) {
  // P is reached once through a success path and once through a failure
  // path; the single copy collects both sides.
  Program p = parse_program(
      "Top(X) :- P(X), not Aux(X).\n"
      "Aux(X) :- P(X), E(X).\n"
      "P(X) :- E(X).\n");
  ProvQuestion q = parse_question("WHY Top(c1)");
  auto annotated = annotate_program(p, unify_program(p, q), q);
  std::map<std::string, int> by_head;
  for (const auto& c : annotated) by_head[c.rule.head.pred] |= c.annot;
  EXPECT_EQ(by_head["Top"], kAnnotT);
  EXPECT_EQ(by_head["Aux"], kAnnotF);
  EXPECT_EQ(by_head["P"], kAnnotFT);
}

TEST(Firing, TrainWhyGolden) {
  Fixture f = load("train");
  ProvQuestion q = parse_question("WHY Q(n,s)");
  auto fp = create_firing_rules(f.program, annotate_program(f.program, {}, q), q);
  EXPECT_EQ(to_text(fp.program), support::golden("train_why_firing.dl"));
  std::set<std::pair<std::string, int>> want{{"T", 0}, {"T", 1}};
  EXPECT_EQ(fp.dom_atoms, want);
  EXPECT_FALSE(fp.uses_boolneg);
}

TEST(Firing, TrainWhyNotGolden) {
  Fixture f = load("train");
  ProvQuestion q = parse_question("WHYNOT Q(s,n)");
  auto fp = create_firing_rules(f.program, annotate_program(f.program, {}, q), q);
  EXPECT_EQ(to_text(fp.program), support::golden("train_whynot_firing.dl"));
  std::set<std::pair<std::string, int>> want{{"T", 0}, {"T", 1}};
  EXPECT_EQ(fp.dom_atoms, want);
  EXPECT_TRUE(fp.uses_boolneg);
}

TEST(Firing, ConnectivityAppendsReachRules) {
  Fixture f = load("train");
  ProvQuestion q = parse_question("WHY Q(n,s)");
  auto annotated = annotate_program(f.program, {}, q);
  auto firing = create_firing_rules(f.program, annotated, q);
  auto connected = add_connectivity(firing, f.program, annotated, q);
  EXPECT_EQ(to_text(connected.program),
            support::golden("train_why_firing.dl") +
                "REACH_Q_T(n,s) :- FIRE_Q_T(n,s).\n"
                "MATCHED_T(n,s) :- FIRE_Q_T(n,s).\n"
                "FC_r1_T(X,Y,Z) :- REACH_Q_T(X,Y), FIRE_r1_T(X,Y,Z).\n");
  EXPECT_NO_THROW(check_program(connected.program));

  ProvQuestion qn = parse_question("WHYNOT Q(s,n)");
  auto annotated_n = annotate_program(f.program, {}, qn);
  auto connected_n =
      add_connectivity(create_firing_rules(f.program, annotated_n, qn), f.program, annotated_n, qn);
  EXPECT_EQ(to_text(connected_n.program),
            support::golden("train_whynot_firing.dl") +
                "REACH_Q_F(s,n) :- FIRE_Q_F(s,n).\n"
                "MATCHED_F(s,n) :- FIRE_Q_F(s,n).\n"
                "FC_r1_F(X,Y,Z,V1,V2,V3) :- REACH_Q_F(X,Y), FIRE_r1_F(X,Y,Z,V1,V2,V3).\n");
  EXPECT_NO_THROW(check_program(connected_n.program));
}

TEST(Firing, EdgeRuleTemplates) {
  Fixture f = load("train");
  ProvQuestion q = parse_question("WHY Q(n,s)");
  auto templates = add_edge_rules(f.program, annotate_program(f.program, {}, q), q);
  std::string text;
  for (const auto& e : templates) text += to_text(e) + "\n";
  EXPECT_EQ(text,
            "edge(REL:Q(X,Y):T, RULE:r1(X,Y,Z):T) :- FC_r1_T(X,Y,Z).\n"
            "edge(RULE:r1(X,Y,Z):T, GOAL:r1.1(X,Z):T) :- FC_r1_T(X,Y,Z).\n"
            "edge(GOAL:r1.1(X,Z):T, REL:T(X,Z):T) :- FC_r1_T(X,Y,Z).\n"
            "edge(RULE:r1(X,Y,Z):T, GOAL:r1.2(Z,Y):T) :- FC_r1_T(X,Y,Z).\n"
            "edge(GOAL:r1.2(Z,Y):T, REL:T(Z,Y):T) :- FC_r1_T(X,Y,Z).\n"
            "edge(RULE:r1(X,Y,Z):T, GOAL:r1.3(X,Y):T) :- FC_r1_T(X,Y,Z).\n"
            "edge(GOAL:r1.3(X,Y):T, REL:T(X,Y):F) :- FC_r1_T(X,Y,Z).\n");

  ProvQuestion qn = parse_question("WHYNOT Q(s,n)");
  auto tn = add_edge_rules(f.program, annotate_program(f.program, {}, qn), qn);
  ASSERT_EQ(tn.size(), 7u);
  EXPECT_EQ(to_text(tn[0]),
            "edge(REL:Q(X,Y):F, RULE:r1(X,Y,Z):F) :- FC_r1_F(X,Y,Z,V1,V2,V3).");
  EXPECT_EQ(to_text(tn[1]),
            "edge(RULE:r1(X,Y,Z):F, GOAL:r1.1(X,Z):F) :- FC_r1_F(X,Y,Z,V1,V2,V3), V1 = false.");
  // a failed negated goal points at the tuple that does exist
  EXPECT_EQ(to_text(tn[6]),
            "edge(GOAL:r1.3(X,Y):F, REL:T(X,Y):T) :- FC_r1_F(X,Y,Z,V1,V2,V3), V3 = false.");
}

TEST(Rewrite, TrainMatchesOracle) {
  Fixture f = load("train");
  for (const char* text : {"WHY Q(n,s)", "WHYNOT Q(s,n)", "WHY Q(X,Y)", "WHYNOT Q(s,X)"}) {
    ProvQuestion q = parse_question(text);
    Explanation got = explain(f.program, f.instance, f.doms, q);
    Explanation want = explain_direct(f.program, f.instance, f.doms, q);
    expect_same_explanation(got, want);
  }
}

TEST(Rewrite, TrainWhyGoldenEdges) {
  Fixture f = load("train");
  Explanation e = explain(f.program, f.instance, f.doms, parse_question("WHY Q(n,s)"));
  EXPECT_EQ(edge_list(e.graph), support::golden("train_why.edges"));
}

TEST(Rewrite, TrainWhyNotGoldenEdges) {
  Fixture f = load("train");
  Explanation e = explain(f.program, f.instance, f.doms, parse_question("WHYNOT Q(s,n)"));
  EXPECT_EQ(edge_list(e.graph), support::golden("train_whynot.edges"));
}

TEST(Rewrite, ThreehopMatchesOracle) {
  Fixture f = load("threehop");
  for (const char* text :
       {"WHY Q_3hop(s,X)", "WHY Q_3hop(X,Y)", "WHYNOT Q_3hop(c,c)", "WHYNOT Q_3hop(X,c)"}) {
    ProvQuestion q = parse_question(text);
    Explanation got = explain(f.program, f.instance, f.doms, q);
    Explanation want = explain_direct(f.program, f.instance, f.doms, q);
    expect_same_explanation(got, want);
  }
}

TEST(Rewrite, RepeatedPatternVariable) {
  Fixture f = load("train");
  ProvQuestion q = parse_question("WHY Q(X,X)");
  Explanation got = explain(f.program, f.instance, f.doms, q);
  Explanation want = explain_direct(f.program, f.instance, f.doms, q);
  ASSERT_EQ(got.matched, (std::vector<Tuple>{{"c", "c"}}));
  expect_same_explanation(got, want);
}

TEST(Rewrite, EmptyMatchYieldsEmptyGraph) {
  Fixture f = load("train");
  Explanation e = explain(f.program, f.instance, f.doms, parse_question("WHY Q(s,s)"));
  EXPECT_TRUE(e.matched.empty());
  EXPECT_EQ(e.graph.node_count(), 0u);
  EXPECT_TRUE(e.graph.roots.empty());
}

TEST(Rewrite, QuestionValidationErrors) {
  Fixture f = load("train");
  EXPECT_THROW(explain(f.program, f.instance, f.doms, parse_question("WHY Q(z,s)")),
               ConstantOutsideDomain);
  EXPECT_THROW(explain(f.program, f.instance, f.doms, parse_question("WHY R(X)")),
               MissingRelation);
  EXPECT_THROW(explain(f.program, f.instance, f.doms, parse_question("WHY Q(X)")),
               ArityMismatch);
}

TEST(Rewrite, StageDumpIsDeterministic) {
  Fixture f = load("train");
  ProvQuestion q = parse_question("WHYNOT Q(s,n)");
  RewriteStages a, b;
  explain(f.program, f.instance, f.doms, q, ExplainKind::Full, &a);
  explain(f.program, f.instance, f.doms, q, ExplainKind::Full, &b);
  EXPECT_EQ(a.unified, b.unified);
  EXPECT_EQ(a.annotated, b.annotated);
  EXPECT_EQ(a.firing, b.firing);
  EXPECT_EQ(a.connected, b.connected);
  EXPECT_EQ(a.edges, b.edges);
  EXPECT_EQ(a.unified, "r1(X=s,Y=n): Q(s,n) :- T(s,Z), T(Z,n), not T(s,n).\n");
  EXPECT_EQ(a.annotated, "r1(X=s,Y=n) [F]: Q(s,n) :- T(s,Z), T(Z,n), not T(s,n).\n");
  EXPECT_EQ(a.firing, support::golden("train_whynot_firing.dl"));
  EXPECT_FALSE(a.connected.empty());
  EXPECT_FALSE(a.edges.empty());
}

TEST(Which, RequiresPositiveProgram) {
  Fixture f = load("train");
  ProvQuestion q = parse_question("WHY Q(n,s)");
  EXPECT_THROW(explain(f.program, f.instance, f.doms, q, ExplainKind::Which),
               NegationNotSupported);
  EXPECT_THROW(add_which_edge_rules(f.program, {}, q), NegationNotSupported);
}

TEST(Which, ThreehopTupleGraph) {
  Fixture f = load("threehop");
  ProvQuestion q = parse_question("WHY Q_3hop(s,s)");
  Explanation e = explain(f.program, f.instance, f.doms, q, ExplainKind::Which);
  ASSERT_EQ(e.matched.size(), 1u);
  for (const auto& l : e.graph.labels) EXPECT_EQ(l.kind, NodeLabel::Kind::Tuple);
  int root = e.graph.find(NodeLabel::tuple("Q_3hop", {"s", "s"}));
  ASSERT_GE(root, 0);
  // every edge starts at the matched head tuple and ends at a leaf tuple
  for (const auto& [src, dst] : e.graph.edges) {
    EXPECT_EQ(src, root);
    EXPECT_EQ(e.graph.labels[dst].name, "T");
    EXPECT_EQ(e.graph.statuses[dst], Status::T);
  }
  EXPECT_GT(e.graph.edge_count(), 0u);
}

TEST(Rewrite, RandomCasesMatchOracle) {
  std::mt19937_64 rng(424242);
  support::GenOptions opts;
  for (int i = 0; i < 200; ++i) {
    support::RandomCase rc = support::random_case(rng, opts);
    Explanation got, want;
    try {
      got = explain(rc.program, rc.instance, rc.doms, rc.question);
      want = explain_direct(rc.program, rc.instance, rc.doms, rc.question);
    } catch (const DomainTooLarge&) {
      continue;
    }
    ASSERT_EQ(got.matched, want.matched)
        << "case " << i << "\n"
        << to_text(rc.program) << to_text(rc.question);
    ASSERT_TRUE(same_graph(got.graph, want.graph))
        << "case " << i << "\n"
        << to_text(rc.program) << to_text(rc.question) << "\nrewrite:\n"
        << edge_list(got.graph) << "oracle:\n"
        << edge_list(want.graph);
  }
}

TEST(Rewrite, RandomCasesWithComparisonsMatchOracle) {
  std::mt19937_64 rng(99991);
  support::GenOptions opts;
  opts.comparisons = true;
  for (int i = 0; i < 100; ++i) {
    support::RandomCase rc = support::random_case(rng, opts);
    Explanation got, want;
    try {
      got = explain(rc.program, rc.instance, rc.doms, rc.question);
      want = explain_direct(rc.program, rc.instance, rc.doms, rc.question);
    } catch (const DomainTooLarge&) {
      continue;
    }
    ASSERT_EQ(got.matched, want.matched)
        << "case " << i << "\n"
        << to_text(rc.program) << to_text(rc.question);
    ASSERT_TRUE(same_graph(got.graph, want.graph))
        << "case " << i << "\n"
        << to_text(rc.program) << to_text(rc.question) << "\nrewrite:\n"
        << edge_list(got.graph) << "oracle:\n"
        << edge_list(want.graph);
  }
}

}  // namespace
