#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scmrl/agents.hpp"
#include "scmrl/env.hpp"
#include "scmrl/error.hpp"
#include "scmrl/replay.hpp"
#include "scmrl/rng.hpp"
#include "scmrl/trajectory.hpp"

namespace scmrl::agents {

namespace {

void check_rep(const SoftmaxPolicy& policy, long long rep) {
  if (policy.logits.size() == 0) {
    fail(ErrorCode::Empty, "policy has no logits");
  }
  if (rep < 0 || rep >= policy.logits.rows()) {
    fail(ErrorCode::OutOfRange, "representation index outside the policy table");
  }
}

double trajectory_return(const Trajectory& trajectory, double discount, std::size_t from) {
  double value = 0.0;
  double weight = 1.0;
  for (std::size_t t = from; t < trajectory.transitions.size(); ++t) {
    value += weight * *trajectory.transitions[t].reward;
    weight *= discount;
  }
  return value;
}

void check_batch(const std::vector<Trajectory>& trajectories) {
  if (trajectories.empty()) {
    fail(ErrorCode::Empty, "need at least one trajectory");
  }
  for (const Trajectory& trajectory : trajectories) {
    if (trajectory.source == SourceTag::Natural) {
      fail(ErrorCode::NaturalSourceRejected,
           "observational trajectories carry no rewards or actions");
    }
    validate_trajectory(trajectory);
  }
}

}  // namespace

Eigen::VectorXd action_probabilities(const SoftmaxPolicy& policy, long long rep) {
  check_rep(policy, rep);
  const Eigen::VectorXd row = policy.logits.row(rep).transpose();
  const Eigen::VectorXd shifted = (row.array() - row.maxCoeff()).exp();
  return shifted / shifted.sum();
}

int sample_action(const SoftmaxPolicy& policy, long long rep, Rng& rng) {
  return static_cast<int>(rng.next_discrete(action_probabilities(policy, rep)));
}

double discounted_return(const std::vector<double>& rewards, double discount, int from_step) {
  if (discount < 0.0 || discount >= 1.0) {
    fail(ErrorCode::OutOfRange, "discount must lie in [0, 1)");
  }
  if (from_step < 0 || static_cast<std::size_t>(from_step) >= rewards.size()) {
    fail(ErrorCode::OutOfRange, "start step outside the reward sequence");
  }
  double value = 0.0;
  double weight = 1.0;
  for (std::size_t t = static_cast<std::size_t>(from_step); t < rewards.size(); ++t) {
    value += weight * rewards[t];
    weight *= discount;
  }
  return value;
}

ValueEstimates estimate_values(const std::vector<Trajectory>& trajectories, double discount,
                               long long state_count, int action_count) {
  if (discount < 0.0 || discount >= 1.0) {
    fail(ErrorCode::OutOfRange, "discount must lie in [0, 1)");
  }
  if (state_count < 1 || action_count < 1) {
    fail(ErrorCode::OutOfRange, "table sizes must be positive");
  }
  check_batch(trajectories);

  Eigen::VectorXd v_sum = Eigen::VectorXd::Zero(state_count);
  Eigen::VectorXd v_count = Eigen::VectorXd::Zero(state_count);
  Eigen::MatrixXd q_sum = Eigen::MatrixXd::Zero(state_count, action_count);
  Eigen::MatrixXd q_count = Eigen::MatrixXd::Zero(state_count, action_count);

  for (const Trajectory& trajectory : trajectories) {
    std::vector<bool> state_seen(static_cast<std::size_t>(state_count), false);
    std::vector<bool> pair_seen(static_cast<std::size_t>(state_count * action_count), false);
    for (std::size_t t = 0; t < trajectory.transitions.size(); ++t) {
      const Transition& step = trajectory.transitions[t];
      if (step.state < 0 || step.state >= state_count || *step.action < 0 ||
          *step.action >= action_count) {
        fail(ErrorCode::OutOfRange, "transition outside the declared tables");
      }
      const double g = trajectory_return(trajectory, discount, t);
      const auto s = static_cast<std::size_t>(step.state);
      const auto sa = static_cast<std::size_t>(step.state * action_count + *step.action);
      if (!state_seen[s]) {
        state_seen[s] = true;
        v_sum[step.state] += g;
        v_count[step.state] += 1.0;
      }
      if (!pair_seen[sa]) {
        pair_seen[sa] = true;
        q_sum(step.state, *step.action) += g;
        q_count(step.state, *step.action) += 1.0;
      }
    }
  }

  ValueEstimates out;
  out.v.values = Eigen::VectorXd::Zero(state_count);
  out.v.visited.assign(static_cast<std::size_t>(state_count), false);
  out.q.values = Eigen::MatrixXd::Zero(state_count, action_count);
  out.q.visited.assign(static_cast<std::size_t>(state_count),
                       std::vector<bool>(static_cast<std::size_t>(action_count), false));
  for (long long s = 0; s < state_count; ++s) {
    if (v_count[s] > 0.0) {
      out.v.values[s] = v_sum[s] / v_count[s];
      out.v.visited[static_cast<std::size_t>(s)] = true;
    }
    for (int a = 0; a < action_count; ++a) {
      if (q_count(s, a) > 0.0) {
        out.q.values(s, a) = q_sum(s, a) / q_count(s, a);
        out.q.visited[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] = true;
      }
    }
  }
  return out;
}

GradientVector policy_gradient(const std::vector<Trajectory>& trajectories,
                               const SoftmaxPolicy& policy, const ValueTable& baseline,
                               double discount) {
  if (discount < 0.0 || discount >= 1.0) {
    fail(ErrorCode::OutOfRange, "discount must lie in [0, 1)");
  }
  if (policy.logits.size() == 0) {
    fail(ErrorCode::Empty, "policy has no logits");
  }
  if (baseline.values.size() != policy.logits.rows()) {
    fail(ErrorCode::ShapeMismatch, "baseline does not cover the policy's rows");
  }
  check_batch(trajectories);

  const long long reps = policy.logits.rows();
  const long long actions = policy.logits.cols();
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(reps, actions);
  for (const Trajectory& trajectory : trajectories) {
    double step_weight = 1.0;  // γ^t, which keeps E[estimate] = ∇J exactly
    for (std::size_t t = 0; t < trajectory.transitions.size(); ++t) {
      const Transition& step = trajectory.transitions[t];
      if (step.state < 0 || step.state >= reps || *step.action < 0 || *step.action >= actions) {
        fail(ErrorCode::OutOfRange, "transition outside the policy table");
      }
      const double advantage =
          trajectory_return(trajectory, discount, t) - baseline.values[step.state];
      const Eigen::VectorXd probs = action_probabilities(policy, step.state);
      // Softmax score: ∂ log π(a|s) / ∂ logit(s, b) = [b == a] − π(b|s)
      for (long long b = 0; b < actions; ++b) {
        const double indicator = (b == *step.action) ? 1.0 : 0.0;
        grad(step.state, b) += step_weight * (indicator - probs[b]) * advantage;
      }
      step_weight *= discount;
    }
  }
  grad /= static_cast<double>(trajectories.size());

  GradientVector out(reps * actions);
  for (long long s = 0; s < reps; ++s) {
    for (long long b = 0; b < actions; ++b) {
      out[s * actions + b] = grad(s, b);
    }
  }
  return out;
}

LearningCurve block_curve(const Eigen::VectorXd& returns, int block_size) {
  const long long blocks =
      (returns.size() + block_size - 1) / static_cast<long long>(block_size);
  LearningCurve curve;
  curve.block_size = block_size;
  curve.mean_return = Eigen::VectorXd::Zero(blocks);
  curve.stderr_return = Eigen::VectorXd::Zero(blocks);
  for (long long b = 0; b < blocks; ++b) {
    const long long lo = b * block_size;
    const long long hi = std::min<long long>(lo + block_size, returns.size());
    const long long n = hi - lo;
    const Eigen::VectorXd slice = returns.segment(lo, n);
    const double mean = slice.mean();
    curve.mean_return[b] = mean;
    if (n > 1) {
      const double var = (slice.array() - mean).square().sum() / static_cast<double>(n - 1);
      curve.stderr_return[b] = std::sqrt(var / static_cast<double>(n));
    }
  }
  return curve;
}

namespace {

void check_train_config(const TrainConfig& config) {
  if (config.episodes < 1 || config.max_steps < 1 || config.batch_size < 1 ||
      config.eval_block < 1 || config.policy_step <= 0.0 || config.buffer_capacity < 1) {
    fail(ErrorCode::ConfigError, "invalid training settings");
  }
}

void apply_gradient(SoftmaxPolicy& policy, const GradientVector& grad, double step) {
  const long long actions = policy.logits.cols();
  for (long long s = 0; s < policy.logits.rows(); ++s) {
    for (long long a = 0; a < actions; ++a) {
      policy.logits(s, a) += step * grad[s * actions + a];
    }
  }
}

// Shared skeleton for both task kinds: `first_rep` yields the initial
// representation index, `advance` applies an action and yields (next rep,
// reward). All randomness flows through the single Rng in call order.
template <typename FirstRep, typename Advance>
TrainResult train_loop(long long rep_count, int action_count, double discount,
                       const TrainConfig& config, std::uint64_t seed, FirstRep first_rep,
                       Advance advance) {
  check_train_config(config);
  Rng rng(derive_seed(seed, 0));
  SoftmaxPolicy policy{Eigen::MatrixXd::Zero(rep_count, action_count)};
  replay::ReplayBuffer buffer = replay::make_buffer(config.buffer_capacity);
  Eigen::VectorXd returns(config.episodes);
  std::vector<Trajectory> fresh;
  fresh.reserve(static_cast<std::size_t>(config.batch_size));

  for (int episode = 0; episode < config.episodes; ++episode) {
    Trajectory trajectory;
    trajectory.source = SourceTag::Egocentric;
    trajectory.policy_id = "actor";
    std::vector<double> rewards;
    rewards.reserve(static_cast<std::size_t>(config.max_steps));
    long long rep = first_rep(rng);
    for (int t = 0; t < config.max_steps; ++t) {
      const Eigen::VectorXd probs = action_probabilities(policy, rep);
      const int action = static_cast<int>(rng.next_discrete(probs));
      const auto [next_rep, reward] = advance(rep, action, rng);
      trajectory.transitions.push_back(Transition{rep, action, reward, probs[action], next_rep});
      rewards.push_back(reward);
      rep = next_rep;
    }
    returns[episode] = discounted_return(rewards, discount, 0);
    replay::store(buffer, trajectory);
    fresh.push_back(std::move(trajectory));
    if (static_cast<int>(fresh.size()) == config.batch_size ||
        episode == config.episodes - 1) {
      const ValueEstimates estimates =
          estimate_values(fresh, discount, rep_count, action_count);
      const GradientVector grad = policy_gradient(fresh, policy, estimates.v, discount);
      apply_gradient(policy, grad, config.policy_step);
      fresh.clear();
    }
  }

  TrainResult result;
  result.policy = std::move(policy);
  result.curve = block_curve(returns, config.eval_block);
  result.episode_returns = std::move(returns);
  return result;
}

}  // namespace

TrainResult train_actor_critic(const env::Mdp& mdp, Representation representation,
                               const TrainConfig& config, std::uint64_t seed) {
  env::validate_mdp(mdp);
  if (representation != Representation::Raw) {
    fail(ErrorCode::ConfigError, "fully observed tasks expose only the raw state");
  }
  long long state = 0;
  return train_loop(
      mdp.states.size(), mdp.action_count, mdp.discount, config, seed,
      [&](Rng& rng) {
        state = env::sample_start(mdp, rng);
        return state;
      },
      [&](long long, int action, Rng& rng) {
        const auto [next, reward] = env::step(mdp, state, action, rng);
        state = next;
        return std::pair<long long, double>{next, reward};
      });
}

TrainResult train_actor_critic(const env::Pomdp& pomdp, Representation representation,
                               const TrainConfig& config, std::uint64_t seed) {
  env::validate_pomdp(pomdp);
  long long rep_count = 0;
  std::vector<int> codes;
  switch (representation) {
    case Representation::Raw:
      rep_count = pomdp.base.states.size();
      break;
    case Representation::MixedObservation:
      rep_count = pomdp.observation_count;
      break;
    case Representation::LearnedCodes: {
      if (config.code_count < 1 ||
          static_cast<long long>(config.observation_codes.size()) != pomdp.observation_count) {
        fail(ErrorCode::ConfigError, "code table must cover every observation");
      }
      for (const int code : config.observation_codes) {
        if (code < 0 || code >= config.code_count) {
          fail(ErrorCode::ConfigError, "code bucket outside the declared range");
        }
      }
      rep_count = config.code_count;
      codes = config.observation_codes;
      break;
    }
  }

  long long state = 0;
  auto represent = [&](long long s, Rng& rng) -> long long {
    if (representation == Representation::Raw) {
      return s;
    }
    const long long obs = env::sample_observation(pomdp, s, rng);
    return representation == Representation::MixedObservation
               ? obs
               : static_cast<long long>(codes[static_cast<std::size_t>(obs)]);
  };
  return train_loop(
      rep_count, pomdp.base.action_count, pomdp.base.discount, config, seed,
      [&](Rng& rng) {
        state = env::sample_start(pomdp.base, rng);
        return represent(state, rng);
      },
      [&](long long, int action, Rng& rng) {
        const auto [next, reward] = env::step(pomdp.base, state, action, rng);
        state = next;
        return std::pair<long long, double>{represent(next, rng), reward};
      });
}

}  // namespace scmrl::agents
