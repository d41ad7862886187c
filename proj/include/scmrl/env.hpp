#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scmrl/domain.hpp"
#include "scmrl/rng.hpp"

namespace scmrl::env {

// Finite MDP over a factored state space. Transition rows are probability
// vectors (sum 1 within 1e-12); `start` is the episode start distribution.
struct Mdp {
  ProductSpace states;
  int action_count = 0;
  std::vector<Eigen::MatrixXd> transition;  // [action](state, next state)
  Eigen::MatrixXd reward;                   // (state, action)
  double discount = 0.0;                    // in [0, 1)
  Eigen::VectorXd start;
};

// POMDP: a base MDP plus a row-stochastic measurement map and a fixed real
// embedding of each observation index (the input space for encoders).
struct Pomdp {
  Mdp base;
  int observation_count = 0;
  Eigen::MatrixXd measurement;           // (state, observation)
  Eigen::MatrixXd observation_features;  // (observation, feature dim)
};

struct BeliefState {
  Eigen::VectorXd probabilities;  // over states, normalized within 1e-9
};

// Mechanism of one next-step factor: parents are previous-step factor axes
// (ascending) plus optionally the action. Table rows enumerate parent
// configurations row-major with the action slowest-changing last input
// convention matched to ProductSpace::flatten (last axis fastest); columns
// are next-value probabilities.
struct FactorMechanism {
  std::vector<int> factor_parents;  // ascending previous-step axes
  bool action_parent = false;
  Eigen::MatrixXd table;  // (parent configuration, next value)
};

struct FactoredTransition {
  ProductSpace factors;
  int action_count = 0;  // 0 when learned from action-free data
  std::vector<FactorMechanism> mechanisms;  // one per factor axis
};

// State partition; block ids are canonical: blocks numbered by their
// smallest member state, ascending.
struct Partition {
  std::vector<int> block_of;
  int block_count = 0;
};

// One logged environment transition as factor tuples. `action` is absent in
// action-free observational data.
struct TransitionRecord {
  std::vector<int> state;
  std::optional<int> action;
  std::vector<int> next;
};

// --- invariant checks ---
void validate_mdp(const Mdp& mdp);
void validate_pomdp(const Pomdp& pomdp);

// --- task builders ---

namespace dispenser {
// Factor axes of the dispenser state space.
inline constexpr int kButton = 0;
inline constexpr int kMechanism = 1;
inline constexpr int kObstruction = 2;
inline constexpr int kFood = 3;
inline constexpr int kWeight = 4;  // only present when confounded
// Actions.
inline constexpr int kPress = 0;
inline constexpr int kClear = 1;
inline constexpr int kReach = 2;
inline constexpr int kNoop = 3;
// Observation embedding width (4 mixed factor channels + 1 noise channel).
inline constexpr int kFeatureDim = 5;
}  // namespace dispenser

// Food-dispenser POMDP. Binary factors (button, mechanism, obstruction,
// food) evolve strictly across time steps: pressing sets the button, the
// button drives the mechanism, the mechanism dispenses food unless
// obstructed, `clear` removes the obstruction (which otherwise flips with
// the given probability), and `reach` pays 1 exactly when food is present.
// With `confound_weight` a fifth static binary factor gates the mechanism
// and is hidden from the measurement map. Observations are the visible
// factor tuple crossed with a uniform distractor bit (32 observations);
// features embed the tuple through a fixed orthonormal mixing with the
// distractor on a low-amplitude fifth channel.
Pomdp build_dispenser_task(double obstruction_flip_prob, bool confound_weight);

namespace trap_tube {
// Factor axes.
inline constexpr int kRewardPos = 0;
inline constexpr int kTrapPos = 1;
inline constexpr int kTrapEffective = 2;
inline constexpr int kDone = 3;
// Actions.
inline constexpr int kPushLeft = 0;
inline constexpr int kPushRight = 1;
}  // namespace trap_tube

// Trap-tube MDP of the given length (≥ 3). Pushing moves the reward one
// cell; leaving either end pays 1 and ends the episode, landing on an
// effective trap ends it with 0, and an ineffective (rotated) trap is
// traversable. Termination is an absorbing zero-reward `done` factor. The
// start distribution is uniform over reward/trap placements with the two
// apart and the trap effectiveness fixed to the argument.
Mdp build_trap_tube_task(int length, bool trap_effective);

// --- simulation ---
long long sample_start(const Mdp& mdp, Rng& rng);
std::pair<long long, double> step(const Mdp& mdp, long long state, int action, Rng& rng);
std::pair<long long, double> step(const Mdp& mdp, long long state, int action, std::uint64_t seed);
int sample_observation(const Pomdp& pomdp, long long state, Rng& rng);

// Exact Bayes filter step: predict through the action's transition, weight
// by the observation likelihood, renormalize.
BeliefState belief_update(const Pomdp& pomdp, const BeliefState& belief, int action,
                          int observation);

// Coarsest partition in which same-block states have equal rewards for every
// action and equal transition mass into every block for every action
// (equality after 1e-9 quantization). Computed by signature refinement.
Partition bisimulation_partition(const Mdp& mdp);

// Greedy factored-dynamics learner. For each next-step factor, grows a
// parent set from {previous-step factors} ∪ {action} (the action only when
// `action_count` > 0), admitting the candidate with maximal conditional
// mutual information given the chosen set while that value exceeds
// `threshold` (plug-in estimate, nats). Conditional tables are add-1
// Laplace-smoothed counts.
FactoredTransition learn_factored_dynamics(const ProductSpace& factors, int action_count,
                                           const std::vector<TransitionRecord>& data,
                                           double threshold);

// Probability row over next joint states predicted by a factored model:
// the product of per-factor conditionals. `action` must be present exactly
// when the model was learned with actions.
Eigen::VectorXd predict_row(const FactoredTransition& model, const std::vector<int>& state,
                            std::optional<int> action);

// --- transition datasets (line-oriented text) ---
// Line format: "s0 s1 ... | a | n0 n1 ..." with "-" as the action column of
// action-free records.
std::string format_transitions(const std::vector<TransitionRecord>& records);
std::vector<TransitionRecord> parse_transitions(const std::string& text);
void write_transitions(const std::string& path, const std::vector<TransitionRecord>& records);
std::vector<TransitionRecord> read_transitions(const std::string& path);

// Roll uniform-random actions for `count` transitions, restarting from the
// start distribution every `episode_length` steps. Deterministic in seed.
std::vector<TransitionRecord> collect_random_transitions(const Mdp& mdp, int count,
                                                         int episode_length,
                                                         std::uint64_t seed);

// Action-free copy of a dataset (observational view of the same events).
std::vector<TransitionRecord> strip_actions(const std::vector<TransitionRecord>& records);

}  // namespace scmrl::env
