#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scmrl/agents.hpp"
#include "scmrl/trajectory.hpp"

namespace scmrl::replay {

// Source-tagged trajectory store with independent per-source FIFO eviction.
struct ReplayBuffer {
  long long capacity = 1000;  // per source
  std::deque<Trajectory> egocentric;
  std::deque<Trajectory> social;
  std::deque<Trajectory> natural;
};

ReplayBuffer make_buffer(long long capacity = 1000);
void store(ReplayBuffer& buffer, const Trajectory& trajectory);
long long source_count(const ReplayBuffer& buffer, SourceTag source);

// Nonnegative sampling weights, one per source.
struct SourceWeights {
  double egocentric = 0.0;
  double social = 0.0;
  double natural = 0.0;
};

// Draws n trajectories: source by the weights (restricted to non-empty
// sources and renormalized), uniform within a source. Deterministic in seed.
std::vector<Trajectory> sample_batch(const ReplayBuffer& buffer, const SourceWeights& weights,
                                     int n, std::uint64_t seed);

// Π_t π_ω(a_t|s_t) / behaviorProb_t for one trajectory.
double importance_weights(const Trajectory& trajectory, const agents::SoftmaxPolicy& policy);

// policy_gradient with every trajectory's contribution scaled by its
// importance weight (capped at `clip` when set; pass nullopt for the
// unbiased estimator). Natural-tagged trajectories are rejected outright.
agents::GradientVector off_policy_gradient(const std::vector<Trajectory>& batch,
                                           const agents::SoftmaxPolicy& policy,
                                           const agents::ValueTable& baseline, double discount,
                                           std::optional<double> clip = 10.0);

// One observed expert step.
struct DemoStep {
  long long state = 0;
  int action = 0;
  double reward = 0.0;
  long long next = 0;
};

// Wraps demonstrations as a Social trajectory. When the expert's action
// probabilities are not supplied, behaviorProb is estimated by the
// state-conditional action frequencies within the demonstration itself.
Trajectory ingest_social(const std::vector<DemoStep>& demonstrations,
                         const std::optional<std::vector<double>>& expert_probs = std::nullopt);

// Wraps action-free (state, next) observations as a Natural trajectory —
// usable for dynamics learning only, never for gradients.
Trajectory ingest_natural(const std::vector<std::pair<long long, long long>>& observed);

enum class IntegrationMode { EgoOnly, EgoSocial, EgoNatural, SocialNatural, Complete };

std::string integration_mode_name(IntegrationMode mode);

struct IntegrationConfig {
  double ego_weight = 1.0;
  double social_weight = 1.0;
};

// Sampling/weighting plan for one training stream. Natural data never
// receives gradient or value weight; it only feeds model learning.
struct IntegrationPlan {
  IntegrationMode mode = IntegrationMode::EgoOnly;
  SourceWeights gradient_weights;
  SourceWeights value_weights;
  bool policy_updates = true;   // false when no source may drive the actor
  bool use_natural_model = false;
};

// Checks that the buffer holds every source the mode requires and returns
// the stream descriptor for it.
IntegrationPlan integrate(const ReplayBuffer& buffer, IntegrationMode mode,
                          const agents::SoftmaxPolicy& policy, const IntegrationConfig& config);

// Line-oriented persistence: "capacity <n>", then per trajectory a
// "trajectory <source> <policyId>" header ('-' for an empty id) followed by
// one line per transition — "state action reward behaviorProb next", or
// "state next" for Natural.
std::string format_buffer(const ReplayBuffer& buffer);
ReplayBuffer parse_buffer(const std::string& text);
void write_buffer(const std::string& path, const ReplayBuffer& buffer);
ReplayBuffer read_buffer(const std::string& path);

}  // namespace scmrl::replay
