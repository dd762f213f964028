#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "geopo/errors.hpp"
#include "geopo/rng.hpp"
#include "geopo/spatial.hpp"
#include "geopo/transcript.hpp"

namespace geopo {

enum class QuestionKind { EgoMovement, Perspective, Occlusion };

inline const char* kind_name(QuestionKind k) {
  switch (k) {
    case QuestionKind::EgoMovement: return "EgoMovement";
    case QuestionKind::Perspective: return "Perspective";
    case QuestionKind::Occlusion: return "Occlusion";
  }
  return "?";
}

inline QuestionKind kind_from_name(const std::string& s) {
  if (s == "EgoMovement") return QuestionKind::EgoMovement;
  if (s == "Perspective") return QuestionKind::Perspective;
  if (s == "Occlusion") return QuestionKind::Occlusion;
  throw IoError("unknown question kind: " + s);
}

struct Choice {
  char label = 'A';
  std::string text;

  bool operator==(const Choice&) const = default;
};

struct Task {
  std::string task_id;
  Scene scene;
  Pose start;
  QuestionKind kind = QuestionKind::EgoMovement;
  std::string question;
  std::vector<Choice> choices;
  char answer = 'A';
  bool solvable_from_start = false;

  bool operator==(const Task&) const = default;
};

// Labels are drawn from this fixed vocabulary so the policy's feature space
// stays bounded.
inline const std::array<std::string, 12>& label_vocabulary() {
  static const std::array<std::string, 12> v = {
      "lamp", "chair", "table", "plant", "vase",  "clock",
      "book", "mug",   "ball",  "box",   "stool", "shelf"};
  return v;
}

struct GeneratorConfig {
  int object_count = 6;
  Rect bounds{-4.0, -4.0, 4.0, 4.0};
  double radius_min = 0.25;
  double radius_max = 0.6;
  // Probability that a non-Occlusion task is required to be unsolvable from
  // the start view. Occlusion tasks are unsolvable by construction, so the
  // suite generator lowers this below the overall 0.6 target to compensate.
  double unsolvable_target = 0.6;
  // Occlusion tasks are kept only when a bearing-greedy probe of this many
  // grid actions uncovers the hidden object, so every emitted task is
  // answerable within the imagination cap.
  int reveal_budget = kDefaultMaxDepth;
  int scene_attempts = 1000;
  int task_attempts = 200;
};

// ---- scene generation ----

inline constexpr double kPlacementMargin = 0.05;  // keeps overlap strict
inline constexpr double kStartClearance = 0.3;    // start pose to object gap
inline constexpr double kTieTolerance = 1e-9;

inline Scene generate_scene(Rng& rng, const GeneratorConfig& cfg) {
  if (cfg.object_count < 3 || cfg.object_count > 8)
    throw std::invalid_argument("object count must be in [3, 8]");

  const auto& vocab = label_vocabulary();
  std::array<int, 12> order;
  for (int i = 0; i < 12; ++i) order[i] = i;
  for (int i = 0; i < cfg.object_count; ++i) {
    int j = i + static_cast<int>(rng.below(12 - i));
    std::swap(order[i], order[j]);
  }

  Scene scene;
  scene.bounds = cfg.bounds;
  int attempts = 0;
  for (int i = 0; i < cfg.object_count; ++i) {
    double radius = rng.uniform(cfg.radius_min, cfg.radius_max);
    while (true) {
      if (++attempts > cfg.scene_attempts)
        throw GenerationError("scene placement failed after rejection cap");
      double x = rng.uniform(cfg.bounds.min_x, cfg.bounds.max_x);
      double y = rng.uniform(cfg.bounds.min_y, cfg.bounds.max_y);
      bool clear = true;
      for (const auto& o : scene.objects) {
        if (std::hypot(o.x - x, o.y - y) <=
            o.radius + radius + kPlacementMargin) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      scene.objects.push_back({i, vocab[order[i]], x, y, radius});
      break;
    }
  }
  return scene;
}

// ---- question text (the oracle re-derives everything from this text, so
// the templates double as a tiny machine-readable format) ----

namespace detail {

inline std::string join_actions(const std::vector<PrimitiveAction>& as) {
  std::string out;
  for (std::size_t i = 0; i < as.size(); ++i) {
    if (i) out += ", ";
    out += format_action(as[i]);
  }
  return out;
}

struct EgoQuestion {
  std::vector<PrimitiveAction> actions;
  bool nearest = true;
};

struct PerspectiveQuestion {
  std::string face_label;
  std::string target_label;
};

inline std::string render_ego_question(const EgoQuestion& q) {
  return "After " + join_actions(q.actions) + ", which object is " +
         (q.nearest ? "nearest?" : "directly ahead?");
}

inline std::string render_perspective_question(const PerspectiveQuestion& q) {
  return "If you turn to face " + q.face_label + ", is " + q.target_label +
         " to your left or right?";
}

inline const std::string kOcclusionQuestion =
    "Which object is hidden from your current viewpoint?";

inline EgoQuestion parse_ego_question(const std::string& text) {
  const std::string prefix = "After ";
  const std::string marker = ", which object is ";
  if (text.rfind(prefix, 0) != 0)
    throw ContractViolation("unrecognized ego question: " + text);
  auto mpos = text.find(marker);
  if (mpos == std::string::npos)
    throw ContractViolation("unrecognized ego question: " + text);
  EgoQuestion q;
  std::string suffix = text.substr(mpos + marker.size());
  if (suffix == "nearest?")
    q.nearest = true;
  else if (suffix == "directly ahead?")
    q.nearest = false;
  else
    throw ContractViolation("unrecognized ego question: " + text);

  std::string list = text.substr(prefix.size(), mpos - prefix.size());
  std::size_t pos = 0;
  while (pos <= list.size()) {
    auto next = list.find(", ", pos);
    std::string tok = list.substr(
        pos, next == std::string::npos ? std::string::npos : next - pos);
    auto a = parse_action(tok);
    if (!a) throw ContractViolation("bad action in ego question: " + tok);
    q.actions.push_back(*a);
    if (next == std::string::npos) break;
    pos = next + 2;
  }
  return q;
}

inline PerspectiveQuestion parse_perspective_question(const std::string& text) {
  const std::string prefix = "If you turn to face ";
  const std::string mid = ", is ";
  const std::string suffix = " to your left or right?";
  if (text.rfind(prefix, 0) != 0)
    throw ContractViolation("unrecognized perspective question: " + text);
  auto mpos = text.find(mid, prefix.size());
  if (mpos == std::string::npos ||
      text.size() < suffix.size() ||
      text.compare(text.size() - suffix.size(), suffix.size(), suffix) != 0)
    throw ContractViolation("unrecognized perspective question: " + text);
  PerspectiveQuestion q;
  q.face_label = text.substr(prefix.size(), mpos - prefix.size());
  std::size_t ystart = mpos + mid.size();
  q.target_label =
      text.substr(ystart, text.size() - suffix.size() - ystart);
  return q;
}

}  // namespace detail

// ---- geometric solvers (shared by the generator and the oracle) ----

namespace detail {

// Strict argmin over all scene objects; ties within tolerance are refused.
inline int solve_ego(const Scene& scene, const Pose& start,
                     const EgoQuestion& q) {
  Pose final_pose = pose_after(start, q.actions);
  int best = -1;
  double best_v = 0.0, second_v = 0.0;
  bool have_second = false;
  for (const auto& o : scene.objects) {
    double v = q.nearest
                   ? std::hypot(o.x - final_pose.x, o.y - final_pose.y)
                   : std::fabs(relative_bearing(final_pose, o.x, o.y));
    if (best < 0 || v < best_v) {
      if (best >= 0) {
        second_v = best_v;
        have_second = true;
      }
      best = o.id;
      best_v = v;
    } else if (!have_second || v < second_v) {
      second_v = v;
      have_second = true;
    }
  }
  if (best < 0) throw AmbiguityError("empty scene");
  if (have_second && second_v - best_v <= kTieTolerance)
    throw AmbiguityError("tie between candidate objects");
  return best;
}

// "left" or "right" for the perspective question; refuses collinear setups.
inline std::string solve_perspective(const Scene& scene, const Pose& start,
                                     const PerspectiveQuestion& q) {
  const SceneObject* x = scene.find_label(q.face_label);
  const SceneObject* y = scene.find_label(q.target_label);
  if (!x || !y || x->id == y->id)
    throw AmbiguityError("perspective referents not distinct scene objects");
  double face_heading = absolute_bearing(start.x, start.y, x->x, x->y);
  double rel = normalize_relative(
      absolute_bearing(start.x, start.y, y->x, y->y) - face_heading);
  if (std::fabs(rel) <= kTieTolerance ||
      std::fabs(std::fabs(rel) - 180.0) <= kTieTolerance)
    throw AmbiguityError("target collinear with facing direction");
  return rel > 0 ? "left" : "right";
}

}  // namespace detail

// Pure geometric evaluation from the question text and scene; never consults
// task.answer.
inline char oracle(const Task& task) {
  auto letter_for_text = [&](const std::string& text) -> char {
    for (const auto& c : task.choices)
      if (c.text == text) return c.label;
    throw AmbiguityError("correct referent is not among the choices");
  };

  switch (task.kind) {
    case QuestionKind::EgoMovement: {
      auto q = detail::parse_ego_question(task.question);
      int id = detail::solve_ego(task.scene, task.start, q);
      return letter_for_text(task.scene.find(id)->label);
    }
    case QuestionKind::Perspective: {
      auto q = detail::parse_perspective_question(task.question);
      return letter_for_text(
          detail::solve_perspective(task.scene, task.start, q));
    }
    case QuestionKind::Occlusion: {
      Observation obs = render(task.scene, task.start);
      char found = 0;
      int hits = 0;
      for (const auto& c : task.choices) {
        const SceneObject* o = task.scene.find_label(c.text);
        if (!o) continue;  // decoy label: nothing in the scene to hide
        if (std::find(obs.occluded_ids.begin(), obs.occluded_ids.end(),
                      o->id) != obs.occluded_ids.end()) {
          found = c.label;
          ++hits;
        }
      }
      if (hits != 1)
        throw AmbiguityError("occluded choice count is not exactly one");
      return found;
    }
  }
  throw ContractViolation("unreachable question kind");
}

// Referent objects per choice: the labeled object for object choices, both
// question referents for left/right choices, nothing for decoy labels that
// name no scene object. Used for the solvable_from_start flag and for the
// policy's evidence tracking.
inline std::vector<std::vector<int>> choice_referents(const Task& task) {
  std::vector<std::vector<int>> out(task.choices.size());
  if (task.kind == QuestionKind::Perspective) {
    auto q = detail::parse_perspective_question(task.question);
    const SceneObject* x = task.scene.find_label(q.face_label);
    const SceneObject* y = task.scene.find_label(q.target_label);
    if (!x || !y) throw ContractViolation("perspective referents missing");
    for (auto& refs : out) refs = {x->id, y->id};
    return out;
  }
  for (std::size_t i = 0; i < task.choices.size(); ++i) {
    const SceneObject* o = task.scene.find_label(task.choices[i].text);
    if (o) out[i] = {o->id};
  }
  return out;
}

// ---- task generation ----

namespace detail {

inline bool sample_start(Rng& rng, const Scene& scene, Pose& out) {
  double x = rng.uniform(scene.bounds.min_x, scene.bounds.max_x);
  double y = rng.uniform(scene.bounds.min_y, scene.bounds.max_y);
  for (const auto& o : scene.objects)
    if (std::hypot(o.x - x, o.y - y) <= o.radius + kStartClearance)
      return false;
  out = {x, y, rng.uniform(0.0, 360.0)};
  return true;
}

inline PrimitiveAction sample_grid_action(Rng& rng) {
  static constexpr std::array<double, 4> fwd = {0.25, 0.5, 0.75, 1.0};
  static constexpr std::array<double, 4> turn = {15.0, 30.0, 45.0, 90.0};
  switch (rng.below(3)) {
    case 0: return {ActionKind::Forward, fwd[rng.below(4)]};
    case 1: return {ActionKind::Left, turn[rng.below(4)]};
    default: return {ActionKind::Right, turn[rng.below(4)]};
  }
}

// Align-greedy probe used to certify occlusion tasks: repeatedly take the
// grid action best aligned with the bearing to the hidden object (candidate
// order breaks ties) and report whether it becomes visible within budget.
inline bool reveal_reachable(const Scene& scene, Pose pose, int target_id,
                             int budget) {
  const SceneObject* target = scene.find(target_id);
  if (!target) throw ContractViolation("reveal target not in scene");
  for (int step = 0; step < budget; ++step) {
    double beta = relative_bearing(pose, target->x, target->y);
    PrimitiveAction best{};
    double best_align = 0.0;
    bool have = false;
    auto consider = [&](PrimitiveAction a) {
      double v = alignment(a, beta);
      if (!have || v > best_align) {
        best = a;
        best_align = v;
        have = true;
      }
    };
    for (double d : kForwardGrid) consider({ActionKind::Forward, d});
    for (double t : kTurnGrid) consider({ActionKind::Left, t});
    for (double t : kTurnGrid) consider({ActionKind::Right, t});
    pose = apply_action(pose, best);
    if (render(scene, pose).sees(target_id)) return true;
  }
  return false;
}

// winner first, then distractors, then a Fisher-Yates shuffle of letters.
inline void assign_choices(Rng& rng, Task& task, const std::string& winner,
                           std::vector<std::string> distractors) {
  std::vector<std::string> texts;
  texts.push_back(winner);
  for (auto& d : distractors) texts.push_back(std::move(d));
  for (std::size_t i = 0; i + 1 < texts.size(); ++i) {
    std::size_t j = i + rng.below(texts.size() - i);
    std::swap(texts[i], texts[j]);
  }
  task.choices.clear();
  for (std::size_t i = 0; i < texts.size(); ++i) {
    char label = static_cast<char>('A' + i);
    task.choices.push_back({label, texts[i]});
    if (texts[i] == winner) task.answer = label;
  }
}

}  // namespace detail

inline Task generate_task(Rng& rng, const Scene& scene, QuestionKind kind,
                          const GeneratorConfig& cfg,
                          const std::string& task_id = "task") {
  bool desired_unsolvable = kind == QuestionKind::Occlusion
                                ? true
                                : rng.uniform() < cfg.unsolvable_target;

  for (int attempt = 0; attempt < cfg.task_attempts; ++attempt) {
    Task task;
    task.task_id = task_id;
    task.scene = scene;
    task.kind = kind;
    if (!detail::sample_start(rng, scene, task.start)) continue;

    try {
      switch (kind) {
        case QuestionKind::EgoMovement: {
          detail::EgoQuestion q;
          q.nearest = rng.coin();
          int len = 1 + static_cast<int>(rng.below(2));
          for (int i = 0; i < len; ++i)
            q.actions.push_back(detail::sample_grid_action(rng));
          int winner = detail::solve_ego(scene, task.start, q);
          std::vector<std::string> others;
          for (const auto& o : scene.objects)
            if (o.id != winner) others.push_back(o.label);
          for (std::size_t i = 0; i + 1 < others.size(); ++i) {
            std::size_t j = i + rng.below(others.size() - i);
            std::swap(others[i], others[j]);
          }
          others.resize(std::min<std::size_t>(others.size(), 3));
          task.question = detail::render_ego_question(q);
          detail::assign_choices(rng, task, scene.find(winner)->label,
                                 std::move(others));
          break;
        }
        case QuestionKind::Perspective: {
          int n = static_cast<int>(scene.objects.size());
          int xi = static_cast<int>(rng.below(n));
          int yi = static_cast<int>(rng.below(n - 1));
          if (yi >= xi) ++yi;
          detail::PerspectiveQuestion q{scene.objects[xi].label,
                                        scene.objects[yi].label};
          std::string side = detail::solve_perspective(scene, task.start, q);
          task.question = detail::render_perspective_question(q);
          detail::assign_choices(rng, task, side,
                                 {side == "left" ? "right" : "left"});
          break;
        }
        case QuestionKind::Occlusion: {
          Observation obs = render(scene, task.start);
          if (obs.occluded_ids.size() != 1 || obs.visible.size() < 2)
            continue;
          int target = obs.occluded_ids[0];
          if (!detail::reveal_reachable(scene, task.start, target,
                                        cfg.reveal_budget))
            continue;
          // Decoy distractors name nothing in the scene, so the hidden
          // object is the only choice whose evidence is ever obtainable --
          // and only by imagining a viewpoint that uncovers it.
          std::vector<std::string> decoys;
          for (const auto& label : label_vocabulary())
            if (!scene.find_label(label)) decoys.push_back(label);
          for (std::size_t i = 0; i + 1 < decoys.size(); ++i) {
            std::size_t j = i + rng.below(decoys.size() - i);
            std::swap(decoys[i], decoys[j]);
          }
          decoys.resize(std::min<std::size_t>(decoys.size(), 3));
          task.question = detail::kOcclusionQuestion;
          detail::assign_choices(rng, task, scene.find(target)->label,
                                 std::move(decoys));
          break;
        }
      }

      if (oracle(task) != task.answer) continue;  // defensive; should not hit
    } catch (const AmbiguityError&) {
      continue;
    }

    // Solvable from the start view iff every referent of the correct choice
    // is already visible there.
    Observation start_obs = render(scene, task.start);
    auto refs = choice_referents(task);
    bool solvable = true;
    for (int id : refs[static_cast<std::size_t>(task.answer - 'A')])
      if (!start_obs.sees(id)) solvable = false;
    task.solvable_from_start = solvable;
    if (solvable == desired_unsolvable) continue;

    return task;
  }
  throw GenerationError("no valid task for this scene/kind after attempt cap");
}

// ---- suite generation and JSONL serialization ----

struct KindMix {
  double ego = 1.0;
  double perspective = 1.0;
  double occlusion = 1.0;
};

namespace detail {

inline QuestionKind pick_kind(Rng& rng, const KindMix& mix) {
  double total = mix.ego + mix.perspective + mix.occlusion;
  if (!(total > 0)) throw std::invalid_argument("kind mix weights sum to 0");
  double u = rng.uniform() * total;
  if (u < mix.ego) return QuestionKind::EgoMovement;
  if (u < mix.ego + mix.perspective) return QuestionKind::Perspective;
  return QuestionKind::Occlusion;
}

}  // namespace detail

inline constexpr double kSuiteUnsolvableTarget = 0.6;

inline std::vector<Task> generate_suite(std::uint64_t seed, int count,
                                        const KindMix& mix,
                                        const GeneratorConfig& cfg) {
  if (count < 0) throw std::invalid_argument("suite count must be >= 0");
  double total = mix.ego + mix.perspective + mix.occlusion;
  if (!(total > 0)) throw std::invalid_argument("kind mix weights sum to 0");
  // Occlusion tasks are always unsolvable from the start view; scale the
  // per-task target for the other kinds so the suite-wide expectation stays
  // at the configured 0.6.
  double f_occ = mix.occlusion / total;
  GeneratorConfig task_cfg = cfg;
  task_cfg.unsolvable_target =
      f_occ >= 1.0 ? 0.0
                   : std::clamp((kSuiteUnsolvableTarget - f_occ) /
                                    (1.0 - f_occ),
                                0.0, 1.0);

  std::vector<Task> suite;
  suite.reserve(static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j) {
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "t%05d", j);
    bool done = false;
    for (int attempt = 0; attempt < 100 && !done; ++attempt) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j),
                          static_cast<std::uint64_t>(attempt)));
      QuestionKind kind = detail::pick_kind(rng, mix);
      try {
        Scene scene = generate_scene(rng, cfg);
        suite.push_back(generate_task(rng, scene, kind, task_cfg, idbuf));
        done = true;
      } catch (const GenerationError&) {
        // next attempt with a fresh sub-seed
      }
    }
    if (!done)
      throw GenerationError(std::string("suite index unsatisfiable: ") +
                            idbuf);
  }
  return suite;
}

inline nlohmann::json task_to_json(const Task& t) {
  nlohmann::json choices = nlohmann::json::array();
  for (const auto& c : t.choices)
    choices.push_back(
        {{"label", std::string(1, c.label)}, {"text", c.text}});
  return {{"task_id", t.task_id},
          {"scene", scene_to_json(t.scene)},
          {"start", pose_to_json(t.start)},
          {"kind", kind_name(t.kind)},
          {"question", t.question},
          {"choices", choices},
          {"answer", std::string(1, t.answer)},
          {"solvable_from_start", t.solvable_from_start}};
}

inline Task task_from_json(const nlohmann::json& j) {
  Task t;
  try {
    t.task_id = j.at("task_id").get<std::string>();
    t.scene = scene_from_json(j.at("scene"));
    t.start = pose_from_json(j.at("start"));
    t.kind = kind_from_name(j.at("kind").get<std::string>());
    for (const auto& jc : j.at("choices")) {
      std::string label = jc.at("label").get<std::string>();
      if (label.size() != 1) throw IoError("choice label must be one letter");
      t.choices.push_back({label[0], jc.at("text").get<std::string>()});
    }
    t.question = j.at("question").get<std::string>();
    std::string ans = j.at("answer").get<std::string>();
    if (ans.size() != 1) throw IoError("answer must be one letter");
    t.answer = ans[0];
    t.solvable_from_start = j.at("solvable_from_start").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed task json: ") + e.what());
  }
  return t;
}

inline void write_suite(const std::string& path,
                        const std::vector<Task>& suite) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open suite file for writing: " + path);
  for (const auto& t : suite) out << task_to_json(t).dump() << '\n';
  if (!out) throw IoError("failed writing suite file: " + path);
}

inline std::vector<Task> read_suite(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open suite file: " + path);
  std::vector<Task> suite;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw IoError("suite line " + std::to_string(lineno) +
                    " is not valid json");
    suite.push_back(task_from_json(j));
  }
  return suite;
}

inline nlohmann::json generator_config_to_json(const GeneratorConfig& cfg) {
  return {{"object_count", cfg.object_count},
          {"bounds",
           {cfg.bounds.min_x, cfg.bounds.min_y, cfg.bounds.max_x,
            cfg.bounds.max_y}},
          {"radius_min", cfg.radius_min},
          {"radius_max", cfg.radius_max},
          {"unsolvable_target", cfg.unsolvable_target},
          {"reveal_budget", cfg.reveal_budget},
          {"scene_attempts", cfg.scene_attempts},
          {"task_attempts", cfg.task_attempts}};
}

inline void write_suite_manifest(const std::string& suite_path,
                                 std::uint64_t seed, int count,
                                 const KindMix& mix,
                                 const GeneratorConfig& cfg) {
  nlohmann::json m = {{"seed", seed},
                      {"count", count},
                      {"kind_mix",
                       {{"ego", mix.ego},
                        {"perspective", mix.perspective},
                        {"occlusion", mix.occlusion}}},
                      {"generator", generator_config_to_json(cfg)}};
  std::string path = suite_path + ".manifest.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open manifest for writing: " + path);
  out << m.dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest: " + path);
}

}  // namespace geopo
