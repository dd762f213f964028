#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "geopo/errors.hpp"
#include "geopo/policy.hpp"
#include "geopo/rng.hpp"
#include "geopo/task.hpp"
#include "geopo/transcript.hpp"

namespace geopo {

// The policy's think blocks are a fixed placeholder; its decision variable
// is the imagine/answer step only.
inline constexpr const char* kThinkPlaceholder = "...";

struct SampleStats {
  // One evaluation per sampled decision: siblings share their parent's
  // prefix computation, so this equals the node count (the quantity that
  // prefix sharing saves relative to per-trajectory sampling).
  std::int64_t policy_evaluations = 0;
  std::int64_t env_invocations = 0;  // render calls, one per Imagine node
  double policy_wall_ms = 0.0;
  double env_wall_ms = 0.0;
};

struct RewardBreakdown {
  double step_reward = 0.0;     // r_s, bottom-up mean of leaf correctness
  double penalty_factor = 1.0;  // lambda_node in {1, lambda}
  double episode_reward = 0.0;  // r_e; for internal nodes the leaf-derived mean
  double combined = 0.0;        // r = episode_reward + penalty_factor * step_reward
  bool format_ok = false;       // leaf only
  bool answer_correct = false;  // leaf only
  int tool_calls = 0;           // leaf only
  bool scored = false;
};

struct RolloutNode {
  int id = 0;
  int parent = 0;  // 0 means the virtual question root
  CandidateAction decision;
  int depth = 1;  // root-layer nodes have depth 1
  DecisionState state_after;
  double logprob_old = 0.0;
  std::vector<int> children;
  RewardBreakdown reward;

  bool is_answer() const {
    return decision.kind == CandidateAction::Kind::Answer;
  }
};

struct SamplerConfig {
  int branching = kDefaultBranching;  // N
  int max_depth = kDefaultMaxDepth;   // T_max
  int group_size = kDefaultGroupSize; // G, chains mode only
  std::uint64_t seed = 0;
};

struct RolloutTree {
  const Task* task = nullptr;
  std::uint64_t seed = 0;
  int first_id = 1;  // chains get disjoint id ranges
  DecisionState initial;
  std::vector<RolloutNode> nodes;
  std::vector<int> root_ids;
  SampleStats stats;

  const RolloutNode& node(int id) const {
    return nodes[static_cast<std::size_t>(id - first_id)];
  }
  RolloutNode& node(int id) {
    return nodes[static_cast<std::size_t>(id - first_id)];
  }
  const DecisionState& state_before(const RolloutNode& n) const {
    return n.parent == 0 ? initial : node(n.parent).state_after;
  }
  std::vector<int> leaf_ids() const {
    std::vector<int> out;
    for (const auto& n : nodes)
      if (n.children.empty()) out.push_back(n.id);
    return out;
  }
};

inline void validate_tree(const RolloutTree& tree) {
  if (tree.nodes.empty()) throw ContractViolation("malformed tree: empty");
  if (tree.root_ids.empty())
    throw ContractViolation("malformed tree: no root-layer nodes");
  for (const auto& n : tree.nodes) {
    if (n.parent != 0) {
      if (n.parent < tree.first_id || n.parent >= n.id)
        throw ContractViolation("malformed tree: parent must precede child");
      if (n.depth != tree.node(n.parent).depth + 1)
        throw ContractViolation("malformed tree: depth must increment");
    } else if (n.depth != 1) {
      throw ContractViolation("malformed tree: root-layer node depth != 1");
    }
    if (n.is_answer() && !n.children.empty())
      throw ContractViolation("malformed tree: answer node with children");
    for (int c : n.children)
      if (tree.node(c).parent != n.id)
        throw ContractViolation("malformed tree: child/parent mismatch");
  }
  for (int id : tree.leaf_ids())
    if (!tree.node(id).is_answer())
      throw ContractViolation("malformed tree: childless imagine node");
}

namespace detail {

inline std::size_t draw_index(const Distribution& d, Rng& rng) {
  double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < d.probs.size(); ++i) {
    acc += d.probs[i];
    if (u < acc) return i;
  }
  return d.probs.size() - 1;
}

inline double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

// Breadth-first expansion. Each expansion draws from an rng derived from
// (tree seed, local parent index), so subtree sampling is order-independent;
// node ids are assigned in breadth-first creation order.
inline RolloutTree sample_tree_impl(const PolicyParams& params,
                                    const Task& task,
                                    const SamplerConfig& cfg,
                                    std::uint64_t tree_seed, int first_id) {
  RolloutTree tree;
  tree.task = &task;
  tree.seed = tree_seed;
  tree.first_id = first_id;
  tree.initial = initial_state(task, cfg.max_depth);

  std::deque<int> frontier;
  frontier.push_back(0);  // virtual question root
  while (!frontier.empty()) {
    int pid = frontier.front();
    frontier.pop_front();
    // copy: the push_back below may reallocate nodes mid-expansion
    DecisionState st = pid == 0 ? tree.initial : tree.node(pid).state_after;

    auto t0 = std::chrono::steady_clock::now();
    Distribution dist = distribution(params, st);
    tree.stats.policy_wall_ms += elapsed_ms(t0);

    std::uint64_t local =
        pid == 0 ? 0 : static_cast<std::uint64_t>(pid - first_id + 1);
    Rng rng(derive_seed(tree_seed, local));

    int want = static_cast<int>(std::min<std::size_t>(
        static_cast<std::size_t>(cfg.branching), dist.candidates.size()));
    std::vector<std::size_t> chosen;
    for (int slot = 0; slot < want; ++slot) {
      for (int attempt = 0; attempt < 20; ++attempt) {
        std::size_t idx = draw_index(dist, rng);
        if (std::find(chosen.begin(), chosen.end(), idx) == chosen.end()) {
          chosen.push_back(idx);
          break;
        }
      }
      // 20 duplicates in a row: accept fewer than N children
    }

    for (std::size_t idx : chosen) {
      RolloutNode n;
      n.id = first_id + static_cast<int>(tree.nodes.size());
      n.parent = pid;
      n.decision = dist.candidates[idx];
      n.depth = pid == 0 ? 1 : tree.node(pid).depth + 1;
      n.logprob_old = dist.logprobs[idx];
      tree.stats.policy_evaluations += 1;
      if (n.decision.kind == CandidateAction::Kind::Imagine) {
        auto t1 = std::chrono::steady_clock::now();
        n.state_after = advance(st, n.decision.action);
        tree.stats.env_wall_ms += elapsed_ms(t1);
        tree.stats.env_invocations += 1;
        frontier.push_back(n.id);
      } else {
        n.state_after = st;  // answers do not move; kept for convenience
      }
      if (pid == 0)
        tree.root_ids.push_back(n.id);
      else
        tree.node(pid).children.push_back(n.id);
      tree.nodes.push_back(std::move(n));
    }
  }
  return tree;
}

}  // namespace detail

inline RolloutTree sample_tree(const PolicyParams& params, const Task& task,
                               const SamplerConfig& cfg) {
  if (cfg.branching < 1 || cfg.max_depth < 1)
    throw std::invalid_argument("sampler config requires N >= 1, T_max >= 1");
  return detail::sample_tree_impl(params, task, cfg, cfg.seed, 1);
}

// G independent single-path episodes wrapped as one-path trees with disjoint
// node-id ranges. Chain k samples from seed cfg.seed + k, so chain 0 equals
// the N = 1 tree for the same seed.
inline std::vector<RolloutTree> sample_chains(const PolicyParams& params,
                                              const Task& task,
                                              const SamplerConfig& cfg) {
  if (cfg.group_size < 1)
    throw std::invalid_argument("chains mode requires G >= 1");
  std::vector<RolloutTree> chains;
  chains.reserve(static_cast<std::size_t>(cfg.group_size));
  SamplerConfig chain_cfg = cfg;
  chain_cfg.branching = 1;
  int next_id = 1;
  for (int k = 0; k < cfg.group_size; ++k) {
    RolloutTree chain = detail::sample_tree_impl(
        params, task, chain_cfg, cfg.seed + static_cast<std::uint64_t>(k),
        next_id);
    next_id += static_cast<int>(chain.nodes.size());
    chains.push_back(std::move(chain));
  }
  return chains;
}

// One trajectory per leaf, in leaf-id order, each as the root-to-leaf node
// id list. Shared prefix nodes appear in every trajectory through them.
inline std::vector<std::vector<int>> enumerate_paths(const RolloutTree& tree) {
  std::vector<std::vector<int>> paths;
  for (int leaf : tree.leaf_ids()) {
    std::vector<int> path;
    for (int id = leaf; id != 0; id = tree.node(id).parent)
      path.push_back(id);
    std::reverse(path.begin(), path.end());
    paths.push_back(std::move(path));
  }
  return paths;
}

// The episode a root-to-leaf path spells out. Non-leaf prefixes are valid
// fragments but not full episodes; this requires a full path ending in an
// Answer node.
inline Episode path_episode(const RolloutTree& tree,
                            std::span<const int> path) {
  if (path.empty() || !tree.node(path.back()).is_answer())
    throw ContractViolation("path must end at an answer leaf");
  Episode ep;
  for (int id : path) {
    const RolloutNode& n = tree.node(id);
    if (n.is_answer()) {
      ep.final_think = kThinkPlaceholder;
      ep.answer = n.decision.letter;
    } else {
      ep.rounds.push_back({kThinkPlaceholder, n.decision.action});
    }
  }
  return ep;
}

// ---- tree dump (consumed by the inspect-tree command) ----

namespace detail {

inline std::string path_fragment(const RolloutTree& tree, int node_id) {
  std::vector<int> path;
  for (int id = node_id; id != 0; id = tree.node(id).parent)
    path.push_back(id);
  std::reverse(path.begin(), path.end());
  std::string out;
  for (int id : path) {
    const RolloutNode& n = tree.node(id);
    out += "<think>";
    out += kThinkPlaceholder;
    out += "</think>";
    if (n.is_answer()) {
      out += "<answer>";
      out += n.decision.letter;
      out += "</answer>";
    } else {
      out += "<imagine>" + format_action(n.decision.action) + "</imagine>";
    }
  }
  return out;
}

}  // namespace detail

inline nlohmann::json tree_to_json(
    const RolloutTree& tree,
    const std::map<int, double>* advantages = nullptr) {
  nlohmann::json nodes = nlohmann::json::object();
  for (const auto& n : tree.nodes) {
    nlohmann::json jn = {
        {"kind", n.is_answer() ? "answer" : "imagine"},
        {"depth", n.depth},
        {"parent", n.parent == 0 ? nlohmann::json(nullptr)
                                 : nlohmann::json(n.parent)},
        {"children", n.children},
        {"logprob_old", n.logprob_old},
        {"step_reward", n.reward.step_reward},
        {"penalty_factor", n.reward.penalty_factor},
        {"episode_reward", n.reward.episode_reward},
        {"combined", n.reward.combined},
        {"transcript", detail::path_fragment(tree, n.id)},
    };
    if (n.is_answer()) {
      jn["letter"] = std::string(1, n.decision.letter);
      jn["format_ok"] = n.reward.format_ok;
      jn["answer_correct"] = n.reward.answer_correct;
      jn["tool_calls"] = n.reward.tool_calls;
    } else {
      jn["action"] = format_action(n.decision.action);
    }
    if (advantages) {
      auto it = advantages->find(n.id);
      if (it != advantages->end()) jn["advantage"] = it->second;
    }
    nodes[std::to_string(n.id)] = std::move(jn);
  }
  return {{"task_id", tree.task ? tree.task->task_id : ""},
          {"seed", tree.seed},
          {"root_ids", tree.root_ids},
          {"stats",
           {{"policy_evaluations", tree.stats.policy_evaluations},
            {"env_invocations", tree.stats.env_invocations}}},
          {"nodes", nodes}};
}

inline void write_tree_dump(const std::string& path, const RolloutTree& tree,
                            const std::map<int, double>* advantages = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open tree dump for writing: " + path);
  out << tree_to_json(tree, advantages).dump(2) << '\n';
  if (!out) throw IoError("failed writing tree dump: " + path);
}

}  // namespace geopo
