#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "geopo/defaults.hpp"
#include "geopo/errors.hpp"
#include "geopo/rng.hpp"
#include "geopo/spatial.hpp"
#include "geopo/task.hpp"

namespace geopo {

struct PolicyParams {
  std::vector<double> weights;

  bool operator==(const PolicyParams&) const = default;
};

// Feature layout (F = 7 + 2*(max_depth+1); 15 at the default depth 3):
//   0                  bias, always 1
//   1 .. 1+max_depth   one-hot: Imagine candidate at state depth d
//   .. + max_depth+1   one-hot: Answer candidate at state depth d
//   base+0             Imagine: alignment of the action with the bearing to
//                      the nearest not-yet-seen referent, in [-1, 1]
//   base+1             Imagine: fraction of referent objects currently visible
//   base+2             Imagine: action kind equals last action's kind
//   base+3             Imagine: action opposes last action (Left vs Right)
//   base+4             Answer: evidence for that letter (all referents seen)
//   base+5             Answer: count of referent objects currently visible
inline int feature_dim(int max_depth) { return 7 + 2 * (max_depth + 1); }

inline PolicyParams zero_params(int max_depth = kDefaultMaxDepth) {
  return {std::vector<double>(static_cast<std::size_t>(feature_dim(max_depth)),
                              0.0)};
}

struct CandidateAction {
  enum class Kind { Imagine, Answer };
  Kind kind = Kind::Answer;
  PrimitiveAction action{};  // valid when kind == Imagine
  char letter = 0;           // valid when kind == Answer

  bool operator==(const CandidateAction&) const = default;
};

inline CandidateAction imagine_candidate(ActionKind k, double magnitude) {
  return {CandidateAction::Kind::Imagine, {k, magnitude}, 0};
}

inline CandidateAction answer_candidate(char letter) {
  return {CandidateAction::Kind::Answer, {}, letter};
}

struct DecisionState {
  const Task* task = nullptr;
  Pose pose;
  int depth = 0;
  int max_depth = kDefaultMaxDepth;
  std::optional<PrimitiveAction> last_action;
  Observation observation;
  std::vector<std::vector<int>> referents;  // per choice
  std::vector<int> all_referents;           // dedup union, sorted
  std::vector<int> seen_ids;                // sorted, monotone over advance
  std::vector<bool> evidence;               // per choice, monotone
};

namespace detail {

inline void refresh_evidence(DecisionState& s) {
  s.evidence.assign(s.referents.size(), false);
  for (std::size_t i = 0; i < s.referents.size(); ++i) {
    bool all = true;
    for (int id : s.referents[i])
      if (!std::binary_search(s.seen_ids.begin(), s.seen_ids.end(), id))
        all = false;
    // a choice with no observable referent can never be evidenced
    s.evidence[i] = all && !s.referents[i].empty();
  }
}

inline void absorb_observation(DecisionState& s) {
  for (const auto& v : s.observation.visible) {
    auto it = std::lower_bound(s.seen_ids.begin(), s.seen_ids.end(), v.id);
    if (it == s.seen_ids.end() || *it != v.id) s.seen_ids.insert(it, v.id);
  }
  refresh_evidence(s);
}

}  // namespace detail

inline DecisionState initial_state(const Task& task,
                                   int max_depth = kDefaultMaxDepth) {
  DecisionState s;
  s.task = &task;
  s.pose = task.start;
  s.max_depth = max_depth;
  s.observation = render(task.scene, task.start);
  s.referents = choice_referents(task);
  for (const auto& refs : s.referents)
    for (int id : refs) s.all_referents.push_back(id);
  std::sort(s.all_referents.begin(), s.all_referents.end());
  s.all_referents.erase(
      std::unique(s.all_referents.begin(), s.all_referents.end()),
      s.all_referents.end());
  detail::absorb_observation(s);
  return s;
}

inline DecisionState advance(const DecisionState& s,
                             const PrimitiveAction& action) {
  if (s.depth >= s.max_depth)
    throw ContractViolation("advance past the imagination cap");
  DecisionState out = s;
  out.pose = apply_action(s.pose, action);
  out.observation = render(s.task->scene, out.pose);
  out.depth = s.depth + 1;
  out.last_action = action;
  detail::absorb_observation(out);
  return out;
}

// Imagine grid in declaration order (Forward, Left, Right), then answers in
// label order. At the depth cap only answers remain.
inline std::vector<CandidateAction> candidates(const DecisionState& s) {
  std::vector<CandidateAction> out;
  if (s.depth < s.max_depth) {
    for (double d : kForwardGrid)
      out.push_back(imagine_candidate(ActionKind::Forward, d));
    for (double t : kTurnGrid)
      out.push_back(imagine_candidate(ActionKind::Left, t));
    for (double t : kTurnGrid)
      out.push_back(imagine_candidate(ActionKind::Right, t));
  }
  for (const auto& c : s.task->choices) out.push_back(answer_candidate(c.label));
  return out;
}

namespace detail {

inline bool in_grid(const PrimitiveAction& a) {
  const auto& grid = a.kind == ActionKind::Forward ? kForwardGrid : kTurnGrid;
  return std::find(grid.begin(), grid.end(), a.magnitude) != grid.end();
}

inline void check_candidate(const DecisionState& s, const CandidateAction& c) {
  if (c.kind == CandidateAction::Kind::Imagine) {
    if (s.depth >= s.max_depth)
      throw ContractViolation("imagine candidate at the depth cap");
    if (!in_grid(c.action))
      throw ContractViolation("imagine candidate outside the action grid");
  } else {
    std::size_t idx = static_cast<std::size_t>(c.letter - 'A');
    if (c.letter < 'A' || idx >= s.task->choices.size())
      throw ContractViolation("answer candidate letter outside the choices");
  }
}

}  // namespace detail

inline std::vector<double> features(const DecisionState& s,
                                    const CandidateAction& c) {
  detail::check_candidate(s, c);
  const int base = 1 + 2 * (s.max_depth + 1);
  std::vector<double> f(static_cast<std::size_t>(feature_dim(s.max_depth)),
                        0.0);
  f[0] = 1.0;

  int visible_refs = 0;
  for (int id : s.all_referents)
    if (s.observation.sees(id)) ++visible_refs;

  if (c.kind == CandidateAction::Kind::Imagine) {
    f[static_cast<std::size_t>(1 + s.depth)] = 1.0;

    double align = 0.0;
    const SceneObject* nearest = nullptr;
    double nearest_d = 0.0;
    for (int id : s.all_referents) {
      if (std::binary_search(s.seen_ids.begin(), s.seen_ids.end(), id))
        continue;
      const SceneObject* o = s.task->scene.find(id);
      double d = std::hypot(o->x - s.pose.x, o->y - s.pose.y);
      if (!nearest || d < nearest_d) {
        nearest = o;
        nearest_d = d;
      }
    }
    if (nearest) {
      double beta = relative_bearing(s.pose, nearest->x, nearest->y);
      align = alignment(c.action, beta);
    }
    f[static_cast<std::size_t>(base + 0)] = align;
    f[static_cast<std::size_t>(base + 1)] =
        s.all_referents.empty()
            ? 0.0
            : static_cast<double>(visible_refs) /
                  static_cast<double>(s.all_referents.size());
    if (s.last_action) {
      if (s.last_action->kind == c.action.kind)
        f[static_cast<std::size_t>(base + 2)] = 1.0;
      bool opposes =
          (s.last_action->kind == ActionKind::Left &&
           c.action.kind == ActionKind::Right) ||
          (s.last_action->kind == ActionKind::Right &&
           c.action.kind == ActionKind::Left);
      if (opposes) f[static_cast<std::size_t>(base + 3)] = 1.0;
    }
  } else {
    f[static_cast<std::size_t>(2 + s.max_depth + s.depth)] = 1.0;
    std::size_t idx = static_cast<std::size_t>(c.letter - 'A');
    if (s.evidence[idx]) f[static_cast<std::size_t>(base + 4)] = 1.0;
    f[static_cast<std::size_t>(base + 5)] = static_cast<double>(visible_refs);
  }
  return f;
}

struct Distribution {
  std::vector<CandidateAction> candidates;
  std::vector<double> probs;
  std::vector<double> logprobs;
};

inline Distribution distribution(const PolicyParams& params,
                                 const DecisionState& s) {
  if (params.weights.size() !=
      static_cast<std::size_t>(feature_dim(s.max_depth)))
    throw ContractViolation("parameter dimension mismatch");
  Distribution d;
  d.candidates = candidates(s);
  std::vector<double> scores;
  scores.reserve(d.candidates.size());
  for (const auto& c : d.candidates) {
    auto f = features(s, c);
    double score = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
      score += params.weights[i] * f[i];
    scores.push_back(score);
  }
  double m = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double sc : scores) sum += std::exp(sc - m);
  double log_sum = std::log(sum);
  d.probs.reserve(scores.size());
  d.logprobs.reserve(scores.size());
  for (double sc : scores) {
    d.logprobs.push_back(sc - m - log_sum);
    d.probs.push_back(std::exp(sc - m) / sum);
  }
  return d;
}

namespace detail {

inline std::size_t candidate_index(const Distribution& d,
                                   const CandidateAction& c) {
  for (std::size_t i = 0; i < d.candidates.size(); ++i)
    if (d.candidates[i] == c) return i;
  throw ContractViolation("candidate not in the candidate set");
}

}  // namespace detail

inline double logprob(const PolicyParams& params, const DecisionState& s,
                      const CandidateAction& c) {
  Distribution d = distribution(params, s);
  return d.logprobs[detail::candidate_index(d, c)];
}

inline std::pair<CandidateAction, double> sample(const PolicyParams& params,
                                                 const DecisionState& s,
                                                 Rng& rng) {
  Distribution d = distribution(params, s);
  double u = rng.uniform();
  double acc = 0.0;
  std::size_t pick = d.candidates.size() - 1;
  for (std::size_t i = 0; i < d.candidates.size(); ++i) {
    acc += d.probs[i];
    if (u < acc) {
      pick = i;
      break;
    }
  }
  return {d.candidates[pick], d.logprobs[pick]};
}

inline std::vector<double> grad_logprob(const PolicyParams& params,
                                        const DecisionState& s,
                                        const CandidateAction& c) {
  Distribution d = distribution(params, s);
  detail::candidate_index(d, c);  // membership contract
  std::vector<double> grad = features(s, c);
  for (std::size_t i = 0; i < d.candidates.size(); ++i) {
    auto f = features(s, d.candidates[i]);
    for (std::size_t k = 0; k < grad.size(); ++k)
      grad[k] -= d.probs[i] * f[k];
  }
  return grad;
}

// Exact categorical KL(p || q) over candidates(state).
inline double kl(const PolicyParams& params_p, const PolicyParams& params_q,
                 const DecisionState& s) {
  Distribution p = distribution(params_p, s);
  Distribution q = distribution(params_q, s);
  double out = 0.0;
  for (std::size_t i = 0; i < p.probs.size(); ++i)
    out += p.probs[i] * (p.logprobs[i] - q.logprobs[i]);
  return out;
}

// Gradient of kl(params_p || params_q) w.r.t. params_p. Using the score
// identity: d/dθ Σ p (logp - logq) = Σ p ∇logp (logp - logq + 1) and the
// Σ p ∇logp = 0 identity folds the +1 away.
inline std::vector<double> grad_kl(const PolicyParams& params_p,
                                   const PolicyParams& params_q,
                                   const DecisionState& s) {
  Distribution p = distribution(params_p, s);
  Distribution q = distribution(params_q, s);
  std::size_t dim = params_p.weights.size();
  std::vector<double> mean_f(dim, 0.0);
  std::vector<std::vector<double>> feats(p.candidates.size());
  for (std::size_t i = 0; i < p.candidates.size(); ++i) {
    feats[i] = features(s, p.candidates[i]);
    for (std::size_t k = 0; k < dim; ++k)
      mean_f[k] += p.probs[i] * feats[i][k];
  }
  std::vector<double> grad(dim, 0.0);
  for (std::size_t i = 0; i < p.candidates.size(); ++i) {
    double w = p.probs[i] * (p.logprobs[i] - q.logprobs[i]);
    for (std::size_t k = 0; k < dim; ++k)
      grad[k] += w * (feats[i][k] - mean_f[k]);
  }
  return grad;
}

// ---- checkpoint format: 8-byte magic, u32 version, u32 F, then F
// little-endian 64-bit floats ----

inline constexpr char kCheckpointMagic[8] = {'G', 'E', 'O', 'P',
                                             'O', 'P', 'R', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string checkpoint_bytes(const PolicyParams& params) {
  std::string out;
  out.append(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(params.weights.size()));
  for (double w : params.weights)
    detail::put_u64(out, std::bit_cast<std::uint64_t>(w));
  return out;
}

inline void save_checkpoint(const std::string& path,
                            const PolicyParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  std::string bytes = checkpoint_bytes(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

inline PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 16) throw IoError("checkpoint truncated: " + path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) !=
      0)
    throw IoError("checkpoint magic mismatch: " + path);
  std::uint32_t version = detail::get_u32(p + 8);
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version: " + path);
  std::uint32_t dim = detail::get_u32(p + 12);
  if (bytes.size() != 16 + 8ull * dim)
    throw IoError("checkpoint size does not match header: " + path);
  PolicyParams params;
  params.weights.reserve(dim);
  for (std::uint32_t i = 0; i < dim; ++i) {
    double w =
        std::bit_cast<double>(detail::get_u64(p + 16 + 8ull * i));
    if (!std::isfinite(w))
      throw IoError("checkpoint contains a non-finite weight: " + path);
    params.weights.push_back(w);
  }
  return params;
}

}  // namespace geopo
