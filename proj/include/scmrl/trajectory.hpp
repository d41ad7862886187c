#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scmrl/error.hpp"

namespace scmrl {

// Where a trajectory's experience came from. Natural experience is
// action-free observation of the environment; it can train dynamics models
// but never gradients.
enum class SourceTag { Egocentric, Social, Natural };

const char* source_tag_name(SourceTag tag);

// One logged step over representation indices. Non-Natural transitions carry
// an action and a reward; `behavior_prob` is the probability the generating
// policy assigned to the action (required before importance weighting).
// Natural transitions carry none of the three.
struct Transition {
  long long state = 0;
  std::optional<int> action;
  std::optional<double> reward;
  std::optional<double> behavior_prob;  // in (0, 1] when present
  long long next = 0;
};

struct Trajectory {
  std::vector<Transition> transitions;
  SourceTag source = SourceTag::Egocentric;
  std::string policy_id;
};

// Enforces the chain (each transition's `next` is the next transition's
// `state`), and per-source field presence: Natural steps must omit action,
// reward, and behavior probability; other steps must carry action and reward
// and any behavior probability must lie in (0, 1].
void validate_trajectory(const Trajectory& trajectory);

}  // namespace scmrl
