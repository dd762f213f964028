#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "geopo/policy.hpp"
#include "geopo/task.hpp"

namespace geopo {

struct KindAccuracy {
  int count = 0;
  int correct = 0;
};

struct EvalReport {
  int task_count = 0;
  int correct = 0;
  double accuracy = 0.0;
  double mean_imaginations = 0.0;
  std::map<std::string, KindAccuracy> per_kind;
};

// Rolls each task greedily until the decider answers. The decider must
// return one of candidates(state); the depth cap forces an answer.
template <typename Decider>
EvalReport evaluate_suite(Decider&& decide, const std::vector<Task>& suite,
                          int max_depth = kDefaultMaxDepth) {
  EvalReport report;
  report.task_count = static_cast<int>(suite.size());
  std::int64_t imaginations = 0;
  for (const auto& task : suite) {
    DecisionState state = initial_state(task, max_depth);
    while (true) {
      CandidateAction c = decide(state);
      if (c.kind == CandidateAction::Kind::Answer) {
        auto& k = report.per_kind[kind_name(task.kind)];
        k.count += 1;
        if (c.letter == task.answer) {
          k.correct += 1;
          report.correct += 1;
        }
        imaginations += state.depth;
        break;
      }
      state = advance(state, c.action);
    }
  }
  if (report.task_count > 0) {
    report.accuracy = static_cast<double>(report.correct) /
                      static_cast<double>(report.task_count);
    report.mean_imaginations = static_cast<double>(imaginations) /
                               static_cast<double>(report.task_count);
  }
  return report;
}

// Argmax decider; ties break toward the earlier candidate.
inline auto greedy_decider(const PolicyParams& params) {
  return [params](const DecisionState& s) {
    Distribution d = distribution(params, s);
    std::size_t best = static_cast<std::size_t>(
        std::max_element(d.probs.begin(), d.probs.end()) - d.probs.begin());
    return d.candidates[best];
  };
}

inline nlohmann::json eval_report_to_json(const EvalReport& r) {
  nlohmann::json kinds = nlohmann::json::object();
  for (const auto& [name, k] : r.per_kind)
    kinds[name] = {{"count", k.count},
                   {"correct", k.correct},
                   {"accuracy", k.count ? static_cast<double>(k.correct) /
                                              static_cast<double>(k.count)
                                        : 0.0}};
  return {{"task_count", r.task_count},
          {"correct", r.correct},
          {"accuracy", r.accuracy},
          {"mean_imaginations", r.mean_imaginations},
          {"per_kind", kinds}};
}

}  // namespace geopo
