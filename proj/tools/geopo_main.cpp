// Command-line front end: task-suite generation, training runs, held-out
// evaluation, tree inspection, and gradient checking.
//
// Exit codes (stable contract): 0 success, 1 check failure, 2 argument or
// format error, 3 I/O error, 4 numeric abort.
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "geopo/eval.hpp"
#include "geopo/optim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace geopo;

namespace {

// ---- option bundles ----

struct GenOptions {
  std::uint64_t seed = 0;
  int count = 200;
  std::string out;
  std::string kind_mix = "ego=1,perspective=1,occlusion=1";
  int objects = 6;
};

struct TrainOptions {
  std::string config;
  std::string suite;
  std::string algorithm = "geopo";
  std::string seeds = "0";
  int steps = 50;
  std::string out_dir = "runs/out";
  bool timing = false;
  std::string dump_first_tree;
  std::string preset;
  bool no_penalty = false;
  SamplerConfig sampler;
  RewardConfig reward;
  UpdateConfig update;
};

struct EvalOptions {
  std::string checkpoint;
  std::string suite;
  std::string out;
  int max_depth = kDefaultMaxDepth;
};

struct InspectOptions {
  std::string dump;
};

struct CheckGradOptions {
  std::uint64_t seed = 0;
  int tasks = 4;
  double step = 1e-5;
  double tol = 1e-4;
  bool inject_fault = false;
  std::string report_out;
};

// ---- small helpers ----

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::string norm = text;
  std::replace(norm.begin(), norm.end(), ',', ' ');
  std::istringstream ss(norm);
  std::vector<std::uint64_t> out;
  std::string tok;
  while (ss >> tok) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(tok, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad seed '" + tok + "' in seed list");
    }
    if (used != tok.size())
      throw std::invalid_argument("bad seed '" + tok + "' in seed list");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("seed list is empty");
  std::vector<std::uint64_t> sorted = out;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument(
        "duplicate seed in seed list (per-seed outputs would collide)");
  return out;
}

KindMix parse_kind_mix(const std::string& text) {
  KindMix mix{0.0, 0.0, 0.0};
  std::istringstream ss(text);
  std::string entry;
  while (std::getline(ss, entry, ',')) {
    std::erase_if(entry, [](unsigned char c) { return std::isspace(c); });
    if (entry.empty()) continue;
    std::size_t eq = entry.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("kind mix entry '" + entry +
                                  "' is not key=weight");
    std::string key = entry.substr(0, eq);
    std::string val = entry.substr(eq + 1);
    double w = 0.0;
    std::size_t used = 0;
    try {
      w = std::stod(val, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad weight in kind mix entry '" + entry +
                                  "'");
    }
    if (used != val.size() || !(w >= 0.0))
      throw std::invalid_argument("bad weight in kind mix entry '" + entry +
                                  "'");
    if (key == "ego")
      mix.ego = w;
    else if (key == "perspective")
      mix.perspective = w;
    else if (key == "occlusion")
      mix.occlusion = w;
    else
      throw std::invalid_argument("unknown question kind '" + key +
                                  "' in kind mix");
  }
  return mix;
}

double vec_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double vec_stddev(const std::vector<double>& v) {
  double m = vec_mean(v);
  double var = 0.0;
  for (double x : v) var += (x - m) * (x - m);
  return std::sqrt(var / static_cast<double>(v.size()));
}

json stat_block(const std::vector<double>& per_seed) {
  return {{"mean", vec_mean(per_seed)},
          {"stddev", vec_stddev(per_seed)},
          {"per_seed", per_seed}};
}

double tail_mean(const std::vector<MetricsRow>& rows, int window,
                 double MetricsRow::*field) {
  std::size_t w = std::min<std::size_t>(rows.size(),
                                        static_cast<std::size_t>(window));
  double s = 0.0;
  for (std::size_t i = rows.size() - w; i < rows.size(); ++i)
    s += rows[i].*field;
  return s / static_cast<double>(w);
}

void ensure_parent_dir(const std::string& path) {
  fs::path dir = fs::path(path).parent_path();
  if (!dir.empty()) fs::create_directories(dir);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw IoError("failed writing: " + path);
}

// Applies an INI config to the train subcommand. Sections map to option
// prefixes ([run] suite -> --run.suite); values given explicitly on the
// command line win; unknown keys are rejected. CLI11 only processes config
// files owned by the top-level app, so the subcommand applies its own.
void apply_train_config(CLI::App* cmd, const std::string& path) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI{}.from_file(path);
  } catch (const CLI::FileError& e) {
    throw IoError(std::string("config: ") + e.what());
  } catch (const CLI::Error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  for (const CLI::ConfigItem& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    std::string key = item.fullname();
    CLI::Option* op = cmd->get_option_no_throw("--" + key);
    if (op == nullptr || key == "config")
      throw std::invalid_argument("unknown config key: " + key);
    if (op->count() > 0) continue;
    try {
      if (op->get_expected_min() == 0) {  // flag
        if (item.inputs.size() > 1)
          throw std::invalid_argument("config key " + key +
                                      ": flags take at most one value");
        op->add_result(item.inputs.empty() ? "true" : item.inputs.front());
      } else if (item.inputs.size() > 1 && op->get_items_expected_max() == 1) {
        // the reader splits "seeds = 0,1,2" into separate inputs; list-valued
        // strings take them re-joined
        std::string joined = item.inputs.front();
        for (std::size_t i = 1; i < item.inputs.size(); ++i)
          joined += "," + item.inputs[i];
        op->add_result(joined);
      } else {
        op->add_result(item.inputs);
      }
      op->run_callback();
    } catch (const CLI::Error& e) {
      throw std::invalid_argument("config key " + key + ": " + e.what());
    }
  }
}

// ---- gen-tasks ----

int run_gen_tasks(const GenOptions& o) {
  GeneratorConfig gcfg;
  gcfg.object_count = o.objects;
  KindMix mix = parse_kind_mix(o.kind_mix);
  std::vector<Task> suite = generate_suite(o.seed, o.count, mix, gcfg);
  ensure_parent_dir(o.out);
  write_suite(o.out, suite);
  write_suite_manifest(o.out, o.seed, o.count, mix, gcfg);
  int solvable = static_cast<int>(
      std::count_if(suite.begin(), suite.end(),
                    [](const Task& t) { return t.solvable_from_start; }));
  std::cout << "wrote " << suite.size() << " tasks (" << solvable
            << " solvable from the start view) to " << o.out << "\n";
  return 0;
}

// ---- train ----

json sampler_config_json(const SamplerConfig& c) {
  return {{"branching", c.branching},
          {"max_depth", c.max_depth},
          {"group_size", c.group_size}};
}

json reward_config_json(const RewardConfig& c) {
  return {{"c_fmt", c.c_fmt},       {"c_ans", c.c_ans},
          {"c_tool", c.c_tool},     {"tool_cap", c.tool_cap},
          {"lambda", c.lambda},     {"uniform_lambda", c.uniform_lambda}};
}

json update_config_json(const UpdateConfig& c) {
  return {{"clip_eps", c.clip_eps},
          {"kl_beta", c.kl_beta},
          {"learning_rate", c.learning_rate},
          {"inner_epochs", c.inner_epochs},
          {"batch_size", c.batch_size},
          {"dedup_nodes", c.dedup_nodes}};
}

// Re-samples the very first tree (or chain group) the run will draw and dumps
// it with display advantages, one value per node (dedup), for inspect-tree.
void dump_first_tree(const TrainOptions& o, Algorithm alg,
                     const std::vector<Task>& suite,
                     const PolicyParams& params0, std::uint64_t first_seed) {
  SamplerConfig sc = o.sampler;
  sc.seed = derive_seed(first_seed, 0, 0);
  SampledGroup g;
  if (alg == Algorithm::GeoPo)
    g.trees.push_back(sample_tree(params0, suite.front(), sc));
  else
    g.trees = sample_chains(params0, suite.front(), sc);
  for (RolloutTree& tr : g.trees) score_tree(tr, o.reward);
  AdvantageSet adv = compute_advantages(
      collect_group_rewards(g, alg == Algorithm::Grpo, true));
  auto trajs = group_trajectories(g, true);
  std::map<int, double> by_node;
  for (std::size_t i = 0; i < trajs.size(); ++i)
    for (std::size_t t = 0; t < trajs[i].second.size(); ++t)
      by_node[trajs[i].second[t]] = adv.values[i][t];
  ensure_parent_dir(o.dump_first_tree);
  write_tree_dump(o.dump_first_tree, g.trees.front(), &by_node);
}

int run_train(const TrainOptions& o) {
  if (o.suite.empty())
    throw std::invalid_argument(
        "no task suite given (--run.suite or [run] suite in the config)");
  Algorithm alg = algorithm_from_name(o.algorithm);
  std::vector<std::uint64_t> seeds = parse_seed_list(o.seeds);
  std::vector<Task> suite = read_suite(o.suite);
  if (suite.empty()) throw IoError("task suite is empty: " + o.suite);

  fs::create_directories(o.out_dir);
  const PolicyParams params0 = zero_params(o.sampler.max_depth);

  if (!o.dump_first_tree.empty())
    dump_first_tree(o, alg, suite, params0, seeds.front());

  std::vector<double> final_acc, final_reward;
  std::vector<double> tail_acc, tail_reward, tail_pen;
  std::int64_t evals = 0, trajectories = 0, traj_steps = 0;
  const int window = std::min(o.steps, 50);

  for (std::uint64_t sd : seeds) {
    std::string csv_path =
        (fs::path(o.out_dir) / ("metrics_seed" + std::to_string(sd) + ".csv"))
            .string();
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw IoError("cannot open metrics csv for writing: " + csv_path);
    csv << kMetricsHeader << '\n';
    // Stream rows as they are produced so an abort still leaves a usable
    // partial series on disk.
    auto sink = [&](const MetricsRow& r) {
      csv << metrics_csv_row(r, o.timing) << '\n';
      csv.flush();
      if (!csv) throw IoError("failed writing metrics csv: " + csv_path);
    };

    TrainResult res;
    try {
      res = train(params0, suite, o.sampler, o.reward, o.update, alg, sd,
                  o.steps, sink);
    } catch (const NumericAbort& e) {
      std::string dump_path =
          (fs::path(o.out_dir) / "abort_tree.json").string();
      write_text_file(dump_path, e.dump() + "\n");
      std::cerr << "seed " << sd << ": offending tree written to " << dump_path
                << "\n";
      throw;
    }

    save_checkpoint((fs::path(o.out_dir) /
                     ("checkpoint_seed" + std::to_string(sd) + ".bin"))
                        .string(),
                    res.params);
    const MetricsRow& last = res.metrics.back();
    final_acc.push_back(last.accuracy);
    final_reward.push_back(last.mean_reward);
    tail_acc.push_back(tail_mean(res.metrics, window, &MetricsRow::accuracy));
    tail_reward.push_back(
        tail_mean(res.metrics, window, &MetricsRow::mean_reward));
    tail_pen.push_back(
        tail_mean(res.metrics, window, &MetricsRow::penalized_frac));
    evals += res.policy_evaluations;
    trajectories += res.trajectories;
    traj_steps += res.trajectory_steps;
  }

  double savings =
      traj_steps > 0
          ? 1.0 - static_cast<double>(evals) / static_cast<double>(traj_steps)
          : 0.0;
  json summary = {
      {"algorithm", algorithm_name(alg)},
      {"steps", o.steps},
      {"seeds", seeds},
      {"suite", o.suite},
      {"final", {{"accuracy", stat_block(final_acc)},
                 {"mean_reward", stat_block(final_reward)}}},
      {"tail", {{"window", window},
                {"accuracy", stat_block(tail_acc)},
                {"mean_reward", stat_block(tail_reward)},
                {"penalized_frac", stat_block(tail_pen)}}},
      // policy_evaluations counts one softmax per sampled decision (shared
      // prefixes evaluated once); trajectory_steps is what per-trajectory
      // sampling would have cost.
      {"sampling", {{"policy_evaluations", evals},
                    {"trajectories", trajectories},
                    {"trajectory_steps", traj_steps},
                    {"prefix_savings", savings}}},
      {"config", {{"sampler", sampler_config_json(o.sampler)},
                  {"reward", reward_config_json(o.reward)},
                  {"update", update_config_json(o.update)},
                  {"timing", o.timing}}}};
  std::string summary_path = (fs::path(o.out_dir) / "summary.json").string();
  write_text_file(summary_path, summary.dump(2) + "\n");
  std::cout << "trained " << seeds.size() << " seed(s) x " << o.steps
            << " update(s) [" << algorithm_name(alg)
            << "]; final accuracy mean "
            << format_double(vec_mean(final_acc)) << "; summary at "
            << summary_path << "\n";
  return 0;
}

// ---- eval ----

int run_eval(const EvalOptions& o) {
  PolicyParams params = load_checkpoint(o.checkpoint);
  if (params.weights.size() !=
      static_cast<std::size_t>(feature_dim(o.max_depth)))
    throw std::invalid_argument(
        "checkpoint holds " + std::to_string(params.weights.size()) +
        " weights but --max-depth " + std::to_string(o.max_depth) +
        " needs " + std::to_string(feature_dim(o.max_depth)));
  std::vector<Task> suite = read_suite(o.suite);
  EvalReport rep = evaluate_suite(greedy_decider(params), suite, o.max_depth);
  std::string text = eval_report_to_json(rep).dump(2);
  std::cout << text << "\n";
  if (!o.out.empty()) {
    ensure_parent_dir(o.out);
    write_text_file(o.out, text + "\n");
  }
  return 0;
}

// ---- inspect-tree ----

void render_node(const json& nodes, int id, int level, std::string& out,
                 int& count, int& answers) {
  if (level > 64)
    throw std::invalid_argument("tree dump nests deeper than 64 levels");
  const json& n = nodes.at(std::to_string(id));
  ++count;
  out.append(2 * static_cast<std::size_t>(level - 1), ' ');
  out += '[';
  out += std::to_string(id);
  out += "] ";
  if (n.at("kind").get<std::string>() == "answer") {
    ++answers;
    out += "answer " + n.at("letter").get<std::string>();
    if (n.contains("answer_correct"))
      out += n.at("answer_correct").get<bool>() ? " (correct)" : " (wrong)";
  } else {
    out += "imagine " + n.at("action").get<std::string>();
  }
  out += "  r_s=" + format_double(n.at("step_reward").get<double>());
  out += " lambda=" + format_double(n.at("penalty_factor").get<double>());
  out += " r_e=" + format_double(n.at("episode_reward").get<double>());
  out += " r=" + format_double(n.at("combined").get<double>());
  if (n.contains("advantage"))
    out += " adv=" + format_double(n.at("advantage").get<double>());
  out += '\n';
  std::vector<int> kids = n.at("children").get<std::vector<int>>();
  std::sort(kids.begin(), kids.end());
  for (int c : kids) render_node(nodes, c, level + 1, out, count, answers);
}

std::string render_tree_dump(const json& j) {
  std::string out = "task " + j.at("task_id").get<std::string>() + "  seed " +
                    std::to_string(j.at("seed").get<std::uint64_t>()) + "\n";
  const json& nodes = j.at("nodes");
  std::vector<int> roots = j.at("root_ids").get<std::vector<int>>();
  std::sort(roots.begin(), roots.end());
  int count = 0, answers = 0;
  for (int r : roots) render_node(nodes, r, 1, out, count, answers);
  out += "totals: nodes=" + std::to_string(count) +
         " answers=" + std::to_string(answers);
  if (j.contains("stats")) {
    const json& s = j.at("stats");
    out += " policy_evaluations=" +
           std::to_string(s.at("policy_evaluations").get<std::int64_t>()) +
           " env_invocations=" +
           std::to_string(s.at("env_invocations").get<std::int64_t>());
  }
  out += '\n';
  return out;
}

int run_inspect(const InspectOptions& o) {
  std::ifstream in(o.dump, std::ios::binary);
  if (!in) throw IoError("cannot open tree dump: " + o.dump);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::cerr << "malformed tree dump at byte " << e.byte << ": " << e.what()
              << "\n";
    return 2;
  }
  std::string rendered;
  try {
    rendered = render_tree_dump(j);
  } catch (const json::exception& e) {
    std::cerr << "malformed tree dump: " << e.what() << "\n";
    return 2;
  }
  std::cout << rendered;
  return 0;
}

// ---- check-grad ----

int run_check_grad(const CheckGradOptions& o) {
  GeneratorConfig gcfg;
  KindMix mix;
  std::vector<Task> suite =
      generate_suite(derive_seed(o.seed, 0), o.tasks, mix, gcfg);

  SamplerConfig scfg;
  RewardConfig rcfg;
  UpdateConfig ucfg;

  PolicyParams sampled_at = zero_params(scfg.max_depth);
  Rng prng(derive_seed(o.seed, 1));
  for (double& w : sampled_at.weights) w = prng.uniform(-0.5, 0.5);

  std::vector<SampledGroup> groups;
  std::vector<AdvantageSet> advs;
  for (int j = 0; j < o.tasks; ++j) {
    SamplerConfig sc = scfg;
    sc.seed = derive_seed(o.seed, 2, static_cast<std::uint64_t>(j));
    SampledGroup g;
    g.trees.push_back(sample_tree(sampled_at, suite[static_cast<std::size_t>(
                                                  j)], sc));
    score_tree(g.trees.back(), rcfg);
    advs.push_back(compute_advantages(
        collect_group_rewards(g, false, ucfg.dedup_nodes)));
    groups.push_back(std::move(g));
  }

  // Evaluate away from the sampling point so both clip branches and the KL
  // term are exercised, against a reference that differs from both.
  PolicyParams at = sampled_at;
  Rng erng(derive_seed(o.seed, 3));
  for (double& w : at.weights) w += erng.uniform(-0.3, 0.3);

  FiniteDiffReport rep =
      finite_diff_check(at, groups, advs, zero_params(scfg.max_depth), ucfg,
                        o.step, o.tol, o.inject_fault);
  std::string text = finite_diff_report_to_json(rep).dump(2);
  std::cout << text << "\n";
  if (!o.report_out.empty()) {
    ensure_parent_dir(o.report_out);
    write_text_file(o.report_out, text + "\n");
  }
  return rep.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "spatial-RL laboratory: tree rollouts, geometric step rewards, "
      "clipped policy updates"};
  app.require_subcommand(1);

  GenOptions gen;
  CLI::App* gen_cmd =
      app.add_subcommand("gen-tasks", "generate a task suite (JSONL + manifest)");
  gen_cmd->add_option("--seed", gen.seed, "generator seed")
      ->capture_default_str();
  gen_cmd->add_option("--count", gen.count, "number of tasks")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output JSONL path")->required();
  gen_cmd->add_option("--kind-mix", gen.kind_mix,
                      "question-kind weights, e.g. ego=1,perspective=2")
      ->capture_default_str();
  gen_cmd->add_option("--objects", gen.objects, "objects per scene")
      ->check(CLI::Range(3, 8))
      ->capture_default_str();

  TrainOptions tr;
  CLI::App* train_cmd = app.add_subcommand(
      "train", "train a policy; writes metrics CSVs, checkpoints, summary");
  train_cmd->add_option("--config", tr.config,
                        "INI config with [run] [sampler] [reward] [update] "
                        "sections; unknown keys are rejected");
  train_cmd->add_option("--run.suite", tr.suite, "task suite JSONL");
  CLI::Option* alg_opt =
      train_cmd->add_option("--run.algorithm", tr.algorithm, "geopo | grpo")
          ->check(CLI::IsMember({"geopo", "grpo"}))
          ->capture_default_str();
  train_cmd
      ->add_option("--run.seeds", tr.seeds,
                   "comma- or space-separated seed list")
      ->capture_default_str();
  train_cmd->add_option("--run.steps", tr.steps, "policy updates per seed")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--run.out_dir", tr.out_dir, "output directory")
      ->capture_default_str();
  train_cmd->add_flag("--run.timing", tr.timing,
                      "fill the wall_ms metrics column (breaks byte-level "
                      "rerun identity)");
  train_cmd->add_option("--run.dump_first_tree", tr.dump_first_tree,
                        "write the run's first sampled tree (with display "
                        "advantages) to this path");

  train_cmd
      ->add_option("--sampler.branching", tr.sampler.branching,
                   "children per expansion")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd
      ->add_option("--sampler.max_depth", tr.sampler.max_depth,
                   "imagination rounds cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd
      ->add_option("--sampler.group_size", tr.sampler.group_size,
                   "chains per task (grpo)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  train_cmd->add_option("--reward.c_fmt", tr.reward.c_fmt, "format bonus")
      ->capture_default_str();
  train_cmd->add_option("--reward.c_ans", tr.reward.c_ans, "answer bonus")
      ->capture_default_str();
  train_cmd
      ->add_option("--reward.c_tool", tr.reward.c_tool, "per-imagination bonus")
      ->capture_default_str();
  train_cmd
      ->add_option("--reward.tool_cap", tr.reward.tool_cap,
                   "imaginations counted toward the bonus")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  CLI::Option* lambda_opt =
      train_cmd
          ->add_option("--reward.lambda", tr.reward.lambda,
                       "geometric penalty factor")
          ->check(CLI::Range(0.0, 1.0))
          ->capture_default_str();
  train_cmd->add_flag("--reward.uniform_lambda", tr.reward.uniform_lambda,
                      "apply lambda to every node, not only penalized ones");

  train_cmd->add_option("--update.clip_eps", tr.update.clip_eps, "clip width")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd
      ->add_option("--update.kl_beta", tr.update.kl_beta, "KL coefficient")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train_cmd
      ->add_option("--update.learning_rate", tr.update.learning_rate,
                   "ascent step size")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train_cmd
      ->add_option("--update.inner_epochs", tr.update.inner_epochs,
                   "ascent steps per batch")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd
      ->add_option("--update.batch_size", tr.update.batch_size,
                   "tasks per update")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_flag("--update.dedup_nodes", tr.update.dedup_nodes,
                      "weight each tree node once instead of once per "
                      "trajectory through it");

  train_cmd
      ->add_option("--preset", tr.preset,
                   "experiment arm: table5-exp1 (geopo, penalty on), "
                   "table5-exp2 (grpo), table5-exp3 (geopo, no penalty)")
      ->check(CLI::IsMember({"table5-exp1", "table5-exp2", "table5-exp3"}));
  train_cmd->add_flag("--no-penalty", tr.no_penalty,
                      "disable the geometric penalty (lambda = 1)");

  EvalOptions ev;
  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "greedy-evaluate a checkpoint on a task suite");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "policy checkpoint")
      ->required();
  eval_cmd->add_option("--suite", ev.suite, "task suite JSONL")->required();
  eval_cmd->add_option("--out", ev.out, "also write the JSON report here");
  eval_cmd
      ->add_option("--max-depth", ev.max_depth,
                   "imagination cap at evaluation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  InspectOptions ins;
  CLI::App* inspect_cmd = app.add_subcommand(
      "inspect-tree", "render a tree dump as an indented text tree");
  inspect_cmd->add_option("--dump", ins.dump, "tree dump JSON path")
      ->required();

  CheckGradOptions cg;
  CLI::App* grad_cmd = app.add_subcommand(
      "check-grad",
      "finite-difference check of the policy objective gradient");
  grad_cmd->add_option("--seed", cg.seed, "check seed")->capture_default_str();
  grad_cmd->add_option("--tasks", cg.tasks, "trees in the check batch")
      ->check(CLI::Range(1, 64))
      ->capture_default_str();
  grad_cmd->add_option("--step", cg.step, "finite-difference step")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  grad_cmd->add_option("--tol", cg.tol, "max relative error to pass")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  grad_cmd->add_flag("--inject-fault", cg.inject_fault,
                     "corrupt one gradient coordinate; the check must fail");
  grad_cmd->add_option("--report-out", cg.report_out,
                       "also write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen_cmd->parsed()) return run_gen_tasks(gen);
    if (train_cmd->parsed()) {
      if (!tr.config.empty()) apply_train_config(train_cmd, tr.config);
      // Presets fill fields the user left unset; explicit flags and config
      // values win. --no-penalty is an explicit override on top.
      if (!tr.preset.empty()) {
        if (alg_opt->count() == 0)
          tr.algorithm = tr.preset == "table5-exp2" ? "grpo" : "geopo";
        if (lambda_opt->count() == 0)
          tr.reward.lambda = tr.preset == "table5-exp3" ? 1.0 : 0.9;
      }
      if (tr.no_penalty) tr.reward.lambda = 1.0;
      return run_train(tr);
    }
    if (eval_cmd->parsed()) return run_eval(ev);
    if (inspect_cmd->parsed()) return run_inspect(ins);
    if (grad_cmd->parsed()) return run_check_grad(cg);
  } catch (const NumericAbort& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return 4;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const GenerationError& e) {
    std::cerr << "generation failed: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
