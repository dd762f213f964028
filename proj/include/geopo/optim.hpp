#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "geopo/errors.hpp"
#include "geopo/policy.hpp"
#include "geopo/reward.hpp"
#include "geopo/rollout.hpp"
#include "geopo/task.hpp"

namespace geopo {

inline constexpr double kDegenerateStd = 1e-12;

struct UpdateConfig {
  double clip_eps = 0.2;
  double kl_beta = 0.01;
  double learning_rate = 0.05;
  int inner_epochs = 1;
  int batch_size = 32;
  // Ablation: score each tree node once (one pseudo-trajectory per tree)
  // instead of once per trajectory through it.
  bool dedup_nodes = false;
};

enum class Algorithm { GeoPo, Grpo };

inline const char* algorithm_name(Algorithm a) {
  return a == Algorithm::GeoPo ? "geopo" : "grpo";
}

inline Algorithm algorithm_from_name(const std::string& s) {
  if (s == "geopo") return Algorithm::GeoPo;
  if (s == "grpo") return Algorithm::Grpo;
  throw std::invalid_argument("unknown algorithm: " + s);
}

// The trees sampled for one task: a single tree for GeoPO, G independent
// chains for GRPO. The objective's group index i runs over the trajectories
// of one group.
struct SampledGroup {
  std::vector<RolloutTree> trees;
};

struct AdvantageSet {
  std::vector<std::vector<double>> values;  // per (trajectory i, step t)
  double mean = 0.0;
  double stddev = 0.0;  // population std over all (i, t)
  bool degenerate = false;
};

inline AdvantageSet compute_advantages(
    const std::vector<std::vector<double>>& rewards) {
  std::size_t n = 0;
  double sum = 0.0;
  for (const auto& row : rewards)
    for (double r : row) {
      sum += r;
      ++n;
    }
  if (n == 0) throw ContractViolation("advantages over an empty group");
  double mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (const auto& row : rewards)
    for (double r : row) var += (r - mean) * (r - mean);
  AdvantageSet out;
  out.mean = mean;
  out.stddev = std::sqrt(var / static_cast<double>(n));
  out.degenerate = out.stddev < kDegenerateStd;
  out.values.reserve(rewards.size());
  for (const auto& row : rewards) {
    std::vector<double> a(row.size(), 0.0);
    if (!out.degenerate)
      for (std::size_t t = 0; t < row.size(); ++t)
        a[t] = (row[t] - mean) / out.stddev;
    out.values.push_back(std::move(a));
  }
  return out;
}

// Trajectories the objective iterates over: (tree index in group, node-id
// path). Dedup mode replaces each tree's trajectories by one pseudo-path
// listing every node once.
inline std::vector<std::pair<std::size_t, std::vector<int>>>
group_trajectories(const SampledGroup& g, bool dedup) {
  std::vector<std::pair<std::size_t, std::vector<int>>> out;
  for (std::size_t ti = 0; ti < g.trees.size(); ++ti) {
    if (dedup) {
      std::vector<int> all;
      for (const auto& n : g.trees[ti].nodes) all.push_back(n.id);
      out.emplace_back(ti, std::move(all));
    } else {
      for (auto& p : enumerate_paths(g.trees[ti])) out.emplace_back(ti, p);
    }
  }
  return out;
}

// Combined rewards aligned with group_trajectories. broadcast replaces the
// per-step combination by the trajectory's episode reward (the GRPO
// baseline); dedup uses each node's stored leaf-derived combination.
inline std::vector<std::vector<double>> collect_group_rewards(
    const SampledGroup& g, bool broadcast, bool dedup) {
  std::vector<std::vector<double>> out;
  for (const auto& [ti, path] : group_trajectories(g, dedup)) {
    const RolloutTree& tree = g.trees[ti];
    std::vector<double> row;
    row.reserve(path.size());
    if (dedup) {
      for (int id : path) {
        const auto& r = tree.node(id).reward;
        if (!r.scored) throw ContractViolation("tree not scored");
        row.push_back(broadcast ? r.episode_reward : r.combined);
      }
    } else {
      const auto& leaf = tree.node(path.back());
      if (!leaf.reward.scored) throw ContractViolation("tree not scored");
      double r_e = leaf.reward.episode_reward;
      for (int id : path)
        row.push_back(broadcast ? r_e
                                : combined_reward(tree.node(id), r_e));
    }
    out.push_back(std::move(row));
  }
  return out;
}

struct ObjectiveTerms {
  double surrogate = 0.0;
  double kl_value = 0.0;
  double total = 0.0;  // surrogate - beta * kl_value
  std::vector<double> gradient;
};

// Clipped surrogate: mean over groups of (1/G) sum_i (1/|o_i|) sum_t
// min(rho*A, clip(rho)*A), minus beta times the mean KL(params || ref) over
// every expansion state. Gradient flows through rho on unclipped terms and
// through the KL; advantages are constants.
inline ObjectiveTerms policy_objective(const PolicyParams& params,
                                       std::span<const SampledGroup> groups,
                                       std::span<const AdvantageSet> advantages,
                                       const PolicyParams& ref,
                                       const UpdateConfig& cfg) {
  if (groups.size() != advantages.size())
    throw ContractViolation("group/advantage count mismatch");
  const std::size_t dim = params.weights.size();
  ObjectiveTerms out;
  out.gradient.assign(dim, 0.0);

  double surr_sum = 0.0;
  double kl_sum = 0.0;
  std::vector<double> kl_grad_sum(dim, 0.0);
  std::int64_t kl_states = 0;

  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const SampledGroup& group = groups[gi];
    auto trajs = group_trajectories(group, cfg.dedup_nodes);
    if (advantages[gi].values.size() != trajs.size())
      throw ContractViolation("advantage shape does not match trajectories");

    // One policy evaluation per node, shared across the trajectories
    // passing through it.
    struct NodeEval {
      double logprob_new = 0.0;
      std::vector<double> grad;
      double weight = 0.0;  // sum of A * rho / |o_i| over unclipped visits
    };
    std::vector<std::vector<NodeEval>> evals(group.trees.size());
    for (std::size_t ti = 0; ti < group.trees.size(); ++ti) {
      const RolloutTree& tree = group.trees[ti];
      evals[ti].resize(tree.nodes.size());
      for (const auto& n : tree.nodes) {
        const DecisionState& st = tree.state_before(n);
        Distribution d = distribution(params, st);
        std::size_t idx = detail::candidate_index(d, n.decision);
        NodeEval& e = evals[ti][static_cast<std::size_t>(n.id - tree.first_id)];
        e.logprob_new = d.logprobs[idx];
        e.grad = features(st, n.decision);
        for (std::size_t ci = 0; ci < d.candidates.size(); ++ci) {
          auto f = features(st, d.candidates[ci]);
          for (std::size_t k = 0; k < dim; ++k)
            e.grad[k] -= d.probs[ci] * f[k];
        }
      }
    }

    double group_surr = 0.0;
    for (std::size_t i = 0; i < trajs.size(); ++i) {
      const auto& [ti, path] = trajs[i];
      const RolloutTree& tree = group.trees[ti];
      const auto& adv = advantages[gi].values[i];
      if (adv.size() != path.size())
        throw ContractViolation("advantage row does not match path length");
      double inv_len = 1.0 / static_cast<double>(path.size());
      for (std::size_t t = 0; t < path.size(); ++t) {
        const RolloutNode& n = tree.node(path[t]);
        NodeEval& e =
            evals[ti][static_cast<std::size_t>(n.id - tree.first_id)];
        double rho = std::exp(e.logprob_new - n.logprob_old);
        double a = adv[t];
        double unclipped = rho * a;
        double clipped =
            std::clamp(rho, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * a;
        group_surr += inv_len * std::min(unclipped, clipped);
        if (unclipped <= clipped) e.weight += a * rho * inv_len;
      }
    }
    double inv_g = 1.0 / static_cast<double>(trajs.size());
    surr_sum += group_surr * inv_g;

    double scale = inv_g / static_cast<double>(groups.size());
    for (std::size_t ti = 0; ti < group.trees.size(); ++ti)
      for (auto& e : evals[ti]) {
        if (e.weight == 0.0) continue;
        for (std::size_t k = 0; k < dim; ++k)
          out.gradient[k] += scale * e.weight * e.grad[k];
      }

    for (const auto& tree : group.trees) {
      auto add_state = [&](const DecisionState& st) {
        kl_sum += kl(params, ref, st);
        auto g = grad_kl(params, ref, st);
        for (std::size_t k = 0; k < dim; ++k) kl_grad_sum[k] += g[k];
        ++kl_states;
      };
      add_state(tree.initial);
      for (const auto& n : tree.nodes)
        if (!n.is_answer()) add_state(n.state_after);
    }
  }

  out.surrogate = surr_sum / static_cast<double>(groups.size());
  out.kl_value =
      kl_states == 0 ? 0.0 : kl_sum / static_cast<double>(kl_states);
  out.total = out.surrogate - cfg.kl_beta * out.kl_value;
  if (kl_states > 0) {
    double kscale = cfg.kl_beta / static_cast<double>(kl_states);
    for (std::size_t k = 0; k < dim; ++k)
      out.gradient[k] -= kscale * kl_grad_sum[k];
  }
  return out;
}

inline ObjectiveTerms geopo_objective(const PolicyParams& params,
                                      std::span<const SampledGroup> groups,
                                      std::span<const AdvantageSet> advantages,
                                      const PolicyParams& ref,
                                      const UpdateConfig& cfg) {
  return policy_objective(params, groups, advantages, ref, cfg);
}

// Baseline: per-trajectory episode reward broadcast to every step before
// normalization; otherwise the identical engine.
inline ObjectiveTerms grpo_objective(const PolicyParams& params,
                                     std::span<const SampledGroup> groups,
                                     const PolicyParams& ref,
                                     const UpdateConfig& cfg) {
  std::vector<AdvantageSet> advs;
  advs.reserve(groups.size());
  for (const auto& g : groups)
    advs.push_back(compute_advantages(
        collect_group_rewards(g, /*broadcast=*/true, /*dedup=*/false)));
  UpdateConfig chain_cfg = cfg;
  chain_cfg.dedup_nodes = false;
  return policy_objective(params, groups, advs, ref, chain_cfg);
}

// New-to-old importance ratio for a single node.
inline double ratio(const PolicyParams& params_new, const RolloutTree& tree,
                    const RolloutNode& node) {
  return std::exp(logprob(params_new, tree.state_before(node), node.decision) -
                  node.logprob_old);
}

// ---- finite-difference verification ----

struct FiniteDiffReport {
  bool pass = true;
  double max_error = 0.0;  // relative, or absolute for tiny coordinates
  int worst_coordinate = -1;
  std::vector<int> failing;
  double tolerance = 1e-4;
  double step = 1e-5;
};

inline FiniteDiffReport finite_diff_check(
    const PolicyParams& params, std::span<const SampledGroup> groups,
    std::span<const AdvantageSet> advantages, const PolicyParams& ref,
    const UpdateConfig& cfg, double h = 1e-5, double tol = 1e-4,
    bool inject_fault = false) {
  FiniteDiffReport report;
  report.tolerance = tol;
  report.step = h;
  ObjectiveTerms terms = policy_objective(params, groups, advantages, ref, cfg);
  // additive so the fault is visible even on a zero coordinate
  if (inject_fault && !terms.gradient.empty()) terms.gradient[0] += 0.5;

  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    PolicyParams plus = params, minus = params;
    plus.weights[k] += h;
    minus.weights[k] -= h;
    double jp = policy_objective(plus, groups, advantages, ref, cfg).total;
    double jm = policy_objective(minus, groups, advantages, ref, cfg).total;
    double fd = (jp - jm) / (2.0 * h);
    double a = terms.gradient[k];
    double err = std::fabs(a) < 1e-8
                     ? std::fabs(a - fd)
                     : std::fabs(a - fd) / std::max(std::fabs(a),
                                                    std::fabs(fd));
    if (err > report.max_error) {
      report.max_error = err;
      report.worst_coordinate = static_cast<int>(k);
    }
    if (err > tol) report.failing.push_back(static_cast<int>(k));
  }
  report.pass = report.failing.empty();
  return report;
}

inline nlohmann::json finite_diff_report_to_json(const FiniteDiffReport& r) {
  return {{"pass", r.pass},
          {"max_relative_error", r.max_error},
          {"worst_coordinate", r.worst_coordinate},
          {"failing_coordinates", r.failing},
          {"tolerance", r.tolerance},
          {"step", r.step}};
}

// ---- training loop ----

struct MetricsRow {
  int step = 0;
  std::string algorithm;
  double mean_reward = 0.0;    // mean episode reward over trajectories
  double accuracy = 0.0;       // fraction of trajectories answering correctly
  double mean_path_len = 0.0;  // nodes per trajectory
  double penalized_frac = 0.0; // Redundant/Conflict fraction of adjacent pairs
  std::int64_t policy_evals = 0;  // this step's sampling evaluations
  double wall_ms = 0.0;           // not serialized unless timing is enabled
};

struct TrainResult {
  PolicyParams params;
  std::vector<MetricsRow> metrics;
  std::int64_t policy_evaluations = 0;  // run totals, sampling only
  std::int64_t trajectories = 0;        // trajectory count across the run
  std::int64_t trajectory_steps = 0;    // sum of |o_i| over all trajectories
};

namespace detail {

inline void ensure_finite_or_abort(const ObjectiveTerms& terms,
                                   std::span<const SampledGroup> groups) {
  bool finite = std::isfinite(terms.total);
  for (double g : terms.gradient)
    if (!std::isfinite(g)) finite = false;
  if (finite) return;
  std::string dump = "{}";
  if (!groups.empty() && !groups.front().trees.empty())
    dump = tree_to_json(groups.front().trees.front()).dump(2);
  throw NumericAbort("non-finite objective or gradient", std::move(dump));
}

}  // namespace detail

inline TrainResult train(
    const PolicyParams& params0, const std::vector<Task>& suite,
    const SamplerConfig& sampler_cfg, const RewardConfig& reward_cfg,
    const UpdateConfig& update_cfg, Algorithm algorithm, std::uint64_t seed,
    int steps,
    const std::function<void(const MetricsRow&)>& row_sink = nullptr) {
  if (suite.empty()) throw std::invalid_argument("task suite is empty");
  if (update_cfg.batch_size < 1)
    throw std::invalid_argument("batch size must be >= 1");

  TrainResult result;
  result.params = params0;
  const PolicyParams ref = params0;

  for (int s = 0; s < steps; ++s) {
    auto t0 = std::chrono::steady_clock::now();

    std::vector<SampledGroup> groups;
    groups.reserve(static_cast<std::size_t>(update_cfg.batch_size));
    for (int j = 0; j < update_cfg.batch_size; ++j) {
      const Task& task =
          suite[(static_cast<std::size_t>(s) * update_cfg.batch_size + j) %
                suite.size()];
      SamplerConfig sc = sampler_cfg;
      sc.seed = derive_seed(seed, static_cast<std::uint64_t>(s),
                            static_cast<std::uint64_t>(j));
      SampledGroup group;
      if (algorithm == Algorithm::GeoPo)
        group.trees.push_back(sample_tree(result.params, task, sc));
      else
        group.trees = sample_chains(result.params, task, sc);
      for (auto& tree : group.trees) score_tree(tree, reward_cfg);
      groups.push_back(std::move(group));
    }

    bool dedup =
        algorithm == Algorithm::GeoPo && update_cfg.dedup_nodes;
    std::vector<AdvantageSet> advs;
    advs.reserve(groups.size());
    for (const auto& g : groups)
      advs.push_back(compute_advantages(collect_group_rewards(
          g, algorithm == Algorithm::Grpo, dedup)));

    UpdateConfig step_cfg = update_cfg;
    step_cfg.dedup_nodes = dedup;
    for (int epoch = 0; epoch < update_cfg.inner_epochs; ++epoch) {
      ObjectiveTerms terms =
          policy_objective(result.params, groups, advs, ref, step_cfg);
      detail::ensure_finite_or_abort(terms, groups);
      for (std::size_t k = 0; k < result.params.weights.size(); ++k)
        result.params.weights[k] +=
            update_cfg.learning_rate * terms.gradient[k];
    }

    MetricsRow row;
    row.step = s;
    row.algorithm = algorithm_name(algorithm);
    std::int64_t trajs = 0, nodes_in_paths = 0, correct = 0;
    std::int64_t pairs = 0, penalized = 0;
    double reward_sum = 0.0;
    for (const auto& g : groups) {
      for (const auto& tree : g.trees) {
        row.policy_evals += tree.stats.policy_evaluations;
        for (const auto& path : enumerate_paths(tree)) {
          ++trajs;
          nodes_in_paths += static_cast<std::int64_t>(path.size());
          const auto& leaf = tree.node(path.back());
          reward_sum += leaf.reward.episode_reward;
          if (leaf.reward.answer_correct) ++correct;
          for (std::size_t t = 1; t < path.size(); ++t) {
            const auto& prev = tree.node(path[t - 1]);
            const auto& cur = tree.node(path[t]);
            if (prev.is_answer() || cur.is_answer()) continue;
            ++pairs;
            if (classify_pair(prev.decision.action, cur.decision.action) !=
                GeomRelation::Neutral)
              ++penalized;
          }
        }
      }
    }
    row.mean_reward = reward_sum / static_cast<double>(trajs);
    row.accuracy =
        static_cast<double>(correct) / static_cast<double>(trajs);
    row.mean_path_len =
        static_cast<double>(nodes_in_paths) / static_cast<double>(trajs);
    row.penalized_frac =
        pairs == 0 ? 0.0
                   : static_cast<double>(penalized) /
                         static_cast<double>(pairs);
    row.wall_ms = detail::elapsed_ms(t0);
    result.policy_evaluations += row.policy_evals;
    result.trajectories += trajs;
    result.trajectory_steps += nodes_in_paths;
    if (row_sink) row_sink(row);
    result.metrics.push_back(std::move(row));
  }
  return result;
}

// ---- metrics CSV ----

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

inline constexpr const char* kMetricsHeader =
    "step,algorithm,mean_reward,accuracy,mean_path_len,penalized_frac,"
    "policy_evals,wall_ms";

// Wall time is omitted unless explicitly requested: it is the one
// nondeterministic measure, and the CSV contract is byte-stable reruns.
inline std::string metrics_csv_row(const MetricsRow& r, bool include_wall) {
  std::string out;
  out += std::to_string(r.step);
  out += ',';
  out += r.algorithm;
  out += ',';
  out += format_double(r.mean_reward);
  out += ',';
  out += format_double(r.accuracy);
  out += ',';
  out += format_double(r.mean_path_len);
  out += ',';
  out += format_double(r.penalized_frac);
  out += ',';
  out += std::to_string(r.policy_evals);
  out += ',';
  if (include_wall) out += format_double(r.wall_ms);
  return out;
}

inline void write_metrics_csv(const std::string& path,
                              const std::vector<MetricsRow>& rows,
                              bool include_wall = false) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open metrics csv for writing: " + path);
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) out << metrics_csv_row(r, include_wall) << '\n';
  if (!out) throw IoError("failed writing metrics csv: " + path);
}

}  // namespace geopo
