#pragma once

#include "provlog/graph.hpp"

namespace provlog {

// Provenance games: the same graphs re-told as a two-player argument. A
// position is won (W) when the player to move can reach a lost position.
// Tuples keep their labels; each tuple a positive goal relies on gains a
// complement node NOT_REL, and stored EDB tuples gain a terminal FACT node.
using GameGraph = ProvGraph;

// Turns an explanation (statuses T/F) into the equivalent game explanation.
// Tuples map T->W / F->L, rules and complement nodes the reverse, goals like
// tuples. Positive goals route through the complement node; negated goals
// attach to the tuple itself.
inline GameGraph to_game(const ProvGraph& g) {
  for (size_t i = 0; i < g.labels.size(); ++i) {
    if (g.statuses[i] == Status::U)
      throw UndeterminedStatusPresent("node " + canonical(g.labels[i]) +
                                      " has no truth value to argue about");
    if (g.statuses[i] != Status::T && g.statuses[i] != Status::F)
      throw Error("not an explanation: node " + canonical(g.labels[i], g.statuses[i]));
    NodeLabel::Kind k = g.labels[i].kind;
    if (k == NodeLabel::Kind::NegTuple || k == NodeLabel::Kind::EdbFact)
      throw Error("not an explanation: node " + canonical(g.labels[i]));
  }
  GameGraph out;
  out.goal_negated = g.goal_negated;
  out.edb_preds = g.edb_preds;
  std::vector<int> pos(g.labels.size(), -1);
  for (size_t n = 0; n < g.labels.size(); ++n) {
    const NodeLabel& l = g.labels[n];
    bool holds = g.statuses[n] == Status::T;
    switch (l.kind) {
      case NodeLabel::Kind::Tuple:
        pos[n] = out.add_node(l, holds ? Status::W : Status::L);
        if (holds && g.edb_preds.count(l.name)) {
          int fact = out.add_node(NodeLabel::fact(l.name, l.args), Status::L);
          out.add_edge(pos[n], fact);
        }
        break;
      case NodeLabel::Kind::Rule:
        pos[n] = out.add_node(l, holds ? Status::L : Status::W);
        break;
      default:
        pos[n] = out.add_node(l, holds ? Status::W : Status::L);
        break;
    }
  }
  for (const auto& [a, b] : g.edges) {
    const NodeLabel& la = g.labels[a];
    const NodeLabel& lb = g.labels[b];
    if (la.kind == NodeLabel::Kind::Goal && lb.kind == NodeLabel::Kind::Tuple) {
      auto it = g.goal_negated.find({la.name, la.goal_index});
      if (it != g.goal_negated.end() && it->second) {
        out.add_edge(pos[a], pos[b]);
      } else {
        bool holds = g.statuses[b] == Status::T;
        int neg = out.add_node(NodeLabel::neg_tuple(lb.name, lb.args),
                               holds ? Status::L : Status::W);
        out.add_edge(pos[a], neg);
        out.add_edge(neg, pos[b]);
      }
    } else {
      out.add_edge(pos[a], pos[b]);
    }
  }
  for (int r : g.roots) out.roots.push_back(pos[r]);
  return out;
}

// Inverse of to_game: collapses complement chains back onto their tuples,
// drops FACT leaves, and restores T/F statuses. Goal polarity is read off
// the edge targets; EDB membership off the FACT nodes.
inline ProvGraph from_game(const GameGraph& game) {
  auto adj = adjacency(game);
  for (size_t n = 0; n < game.labels.size(); ++n) {
    const NodeLabel& l = game.labels[n];
    Status st = game.statuses[n];
    if (st != Status::W && st != Status::L)
      throw MalformedGame("node " + canonical(l, st) + " is not a game position");
    if (l.kind == NodeLabel::Kind::NegTuple) {
      if (adj[n].size() != 1)
        throw MalformedGame("complement node " + canonical(l) +
                            " must move to its tuple and nothing else");
      const NodeLabel& t = game.labels[adj[n][0]];
      if (t.kind != NodeLabel::Kind::Tuple || t.name != l.name || t.args != l.args)
        throw MalformedGame("complement node " + canonical(l) + " does not face its tuple");
      if (game.statuses[adj[n][0]] == st)
        throw MalformedGame("complement node " + canonical(l) + " agrees with its tuple");
    }
    if (l.kind == NodeLabel::Kind::EdbFact) {
      if (!adj[n].empty())
        throw MalformedGame("fact node " + canonical(l) + " must be terminal");
      if (st != Status::L)
        throw MalformedGame("fact node " + canonical(l) + " must be lost");
    }
  }
  ProvGraph out;
  std::vector<int> map(game.labels.size(), -1);
  for (size_t n = 0; n < game.labels.size(); ++n) {
    const NodeLabel& l = game.labels[n];
    bool won = game.statuses[n] == Status::W;
    switch (l.kind) {
      case NodeLabel::Kind::Tuple:
        map[n] = out.add_node(l, won ? Status::T : Status::F);
        break;
      case NodeLabel::Kind::Rule:
        map[n] = out.add_node(l, won ? Status::F : Status::T);
        break;
      case NodeLabel::Kind::Goal:
        map[n] = out.add_node(l, won ? Status::T : Status::F);
        break;
      default: break;  // complement and fact nodes disappear
    }
  }
  auto set_polarity = [&](const NodeLabel& goal, bool negated) {
    auto [it, fresh] = out.goal_negated.emplace(std::pair{goal.name, goal.goal_index}, negated);
    if (!fresh && it->second != negated)
      throw MalformedGame("goal " + goal.name + "." + std::to_string(goal.goal_index) +
                          " attacks both sides");
  };
  for (const auto& [a, b] : game.edges) {
    const NodeLabel& la = game.labels[a];
    const NodeLabel& lb = game.labels[b];
    switch (lb.kind) {
      case NodeLabel::Kind::EdbFact:
        if (la.kind != NodeLabel::Kind::Tuple || la.name != lb.name || la.args != lb.args ||
            game.statuses[a] != Status::W)
          throw MalformedGame("fact node " + canonical(lb) + " is not under its won tuple");
        out.edb_preds.insert(lb.name);
        break;
      case NodeLabel::Kind::NegTuple:
        if (la.kind != NodeLabel::Kind::Goal)
          throw MalformedGame("only goals may move to complement node " + canonical(lb));
        set_polarity(la, false);
        out.add_edge(map[a], map[adj[b][0]]);
        break;
      case NodeLabel::Kind::Tuple:
        if (la.kind == NodeLabel::Kind::NegTuple) break;  // chain edge, collapsed
        if (la.kind == NodeLabel::Kind::Goal) set_polarity(la, true);
        out.add_edge(map[a], map[b]);
        break;
      default:
        out.add_edge(map[a], map[b]);
        break;
    }
  }
  for (int r : game.roots) {
    int t = game.labels[r].kind == NodeLabel::Kind::NegTuple ? adj[r][0] : r;
    out.roots.push_back(map[t]);
  }
  return out;
}

}  // namespace provlog
