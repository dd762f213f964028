#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "geopo/defaults.hpp"
#include "geopo/errors.hpp"
#include "geopo/rollout.hpp"
#include "geopo/spatial.hpp"
#include "geopo/transcript.hpp"

namespace geopo {

struct RewardConfig {
  double c_fmt = 0.1;
  double c_ans = 1.0;
  double c_tool = 0.05;
  int tool_cap = kDefaultMaxDepth;
  double lambda = 0.9;
  // Literal Eq.-5-style reading for comparison runs: lambda multiplies r_s on
  // every node instead of only on penalized ones.
  bool uniform_lambda = false;
};

enum class GeomRelation { Redundant, Conflict, Neutral };

// Redundant: same kind twice (mergeable into one action). Conflict: opposite
// turns (mutually canceling). Forward paired with a turn is Neutral.
inline GeomRelation classify_pair(const PrimitiveAction& prev,
                                  const PrimitiveAction& next) {
  if (prev.kind == next.kind) return GeomRelation::Redundant;
  if ((prev.kind == ActionKind::Left && next.kind == ActionKind::Right) ||
      (prev.kind == ActionKind::Right && next.kind == ActionKind::Left))
    return GeomRelation::Conflict;
  return GeomRelation::Neutral;
}

// r_e = c_fmt * [valid format] + c_ans * [correct answer] + c_tool *
// min(imagine count, tool_cap). Correctness is judged against task.answer,
// which generation pins to the oracle's verdict.
inline double episode_reward(const RolloutTree& tree,
                             std::span<const int> path,
                             const RewardConfig& cfg) {
  if (path.empty() || !tree.node(path.back()).is_answer())
    throw ContractViolation("episode reward requires an answer leaf");
  const RolloutNode& leaf = tree.node(path.back());
  int tools = 0;
  for (int id : path)
    if (!tree.node(id).is_answer()) ++tools;

  Episode ep = path_episode(tree, path);
  std::string text = serialize(ep, tree.initial.max_depth);
  bool format_ok = parse(text, tree.initial.max_depth).diagnostics.valid;
  bool correct = leaf.decision.letter == tree.task->answer;

  return cfg.c_fmt * (format_ok ? 1.0 : 0.0) +
         cfg.c_ans * (correct ? 1.0 : 0.0) +
         cfg.c_tool * static_cast<double>(std::min(tools, cfg.tool_cap));
}

inline double leaf_step_reward(const RolloutNode& leaf, const Task& task) {
  if (!leaf.is_answer())
    throw ContractViolation("step reward leaves must be answer nodes");
  return leaf.decision.letter == task.answer ? 1.0 : 0.0;
}

// Bottom-up means: leaves keep their values, internal nodes average their
// direct children. Node ids increase from parent to child, so a reverse-id
// sweep is a valid post-order.
inline void propagate_step_rewards(RolloutTree& tree) {
  for (auto it = tree.nodes.rbegin(); it != tree.nodes.rend(); ++it) {
    if (it->children.empty()) {
      if (!it->is_answer())
        throw ContractViolation("malformed tree: childless imagine node");
      continue;  // leaf value supplied by leaf_step_reward
    }
    double sum = 0.0;
    for (int c : it->children) sum += tree.node(c).reward.step_reward;
    it->reward.step_reward = sum / static_cast<double>(it->children.size());
  }
}

inline void apply_geometric_penalty(RolloutTree& tree,
                                    const RewardConfig& cfg) {
  for (auto& n : tree.nodes) {
    if (cfg.uniform_lambda) {
      n.reward.penalty_factor = cfg.lambda;
      continue;
    }
    n.reward.penalty_factor = 1.0;
    if (n.is_answer() || n.parent == 0) continue;
    const RolloutNode& parent = tree.node(n.parent);
    if (parent.is_answer()) continue;  // cannot happen in valid trees
    GeomRelation rel =
        classify_pair(parent.decision.action, n.decision.action);
    if (rel != GeomRelation::Neutral) n.reward.penalty_factor = cfg.lambda;
  }
}

// r = r_e + lambda_node * r_s with the trajectory's episode reward as
// context: a node shared by several trajectories has one r_s and lambda_node
// but a per-trajectory r.
inline double combined_reward(const RolloutNode& n, double r_e_context) {
  return r_e_context + n.reward.penalty_factor * n.reward.step_reward;
}

// Full scoring pipeline. Stores the leaf-derived mean episode reward on
// internal nodes (their subtree context) and the per-node combined reward
// under that context; the optimizer recomputes per-trajectory combinations
// through combined_reward.
inline void score_tree(RolloutTree& tree, const RewardConfig& cfg) {
  validate_tree(tree);
  auto paths = enumerate_paths(tree);
  std::vector<double> episode_sum(tree.nodes.size(), 0.0);
  std::vector<int> leaf_count(tree.nodes.size(), 0);

  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& path = paths[i];
    RolloutNode& leaf = tree.node(path.back());
    double r_e = episode_reward(tree, path, cfg);

    int tools = 0;
    for (int id : path)
      if (!tree.node(id).is_answer()) ++tools;
    leaf.reward.tool_calls = tools;
    leaf.reward.answer_correct =
        leaf.decision.letter == tree.task->answer;
    Episode ep = path_episode(tree, path);
    leaf.reward.format_ok =
        parse(serialize(ep, tree.initial.max_depth), tree.initial.max_depth)
            .diagnostics.valid;
    leaf.reward.step_reward = leaf_step_reward(leaf, *tree.task);

    for (int id : path) {
      episode_sum[static_cast<std::size_t>(id - tree.first_id)] += r_e;
      leaf_count[static_cast<std::size_t>(id - tree.first_id)] += 1;
    }
  }

  propagate_step_rewards(tree);
  apply_geometric_penalty(tree, cfg);

  for (auto& n : tree.nodes) {
    std::size_t k = static_cast<std::size_t>(n.id - tree.first_id);
    n.reward.episode_reward = episode_sum[k] / leaf_count[k];
    n.reward.combined = combined_reward(n, n.reward.episode_reward);
    n.reward.scored = true;
  }
}

}  // namespace geopo
