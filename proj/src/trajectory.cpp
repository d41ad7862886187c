#include "scmrl/trajectory.hpp"

namespace scmrl {

const char* source_tag_name(SourceTag tag) {
  switch (tag) {
    case SourceTag::Egocentric: return "Egocentric";
    case SourceTag::Social: return "Social";
    case SourceTag::Natural: return "Natural";
  }
  return "UnknownSource";
}

void validate_trajectory(const Trajectory& trajectory) {
  for (std::size_t i = 0; i < trajectory.transitions.size(); ++i) {
    const Transition& step = trajectory.transitions[i];
    if (i + 1 < trajectory.transitions.size() &&
        step.next != trajectory.transitions[i + 1].state)
      fail(ErrorCode::BrokenChain,
           "transition " + std::to_string(i) + " does not chain into its successor");
    if (trajectory.source == SourceTag::Natural) {
      if (step.action.has_value() || step.reward.has_value() || step.behavior_prob.has_value())
        fail(ErrorCode::BrokenChain,
             "Natural transition " + std::to_string(i) + " carries action-policy fields");
    } else {
      if (!step.action.has_value() || !step.reward.has_value())
        fail(ErrorCode::BrokenChain,
             "transition " + std::to_string(i) + " lacks an action or reward");
      if (step.behavior_prob.has_value() &&
          !(*step.behavior_prob > 0.0 && *step.behavior_prob <= 1.0))
        fail(ErrorCode::BrokenChain,
             "behavior probability outside (0, 1] at transition " + std::to_string(i));
    }
  }
}

}  // namespace scmrl
