#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scmrl/agents.hpp"
#include "scmrl/error.hpp"
#include "scmrl/json_out.hpp"
#include "scmrl/kv_format.hpp"
#include "scmrl/replay.hpp"
#include "scmrl/rng.hpp"
#include "scmrl/trajectory.hpp"

namespace scmrl::replay {

namespace {

std::deque<Trajectory>& source_deque(ReplayBuffer& buffer, SourceTag source) {
  switch (source) {
    case SourceTag::Egocentric: return buffer.egocentric;
    case SourceTag::Social: return buffer.social;
    case SourceTag::Natural: return buffer.natural;
  }
  fail(ErrorCode::OutOfRange, "unknown source tag");
}

const std::deque<Trajectory>& source_deque(const ReplayBuffer& buffer, SourceTag source) {
  return source_deque(const_cast<ReplayBuffer&>(buffer), source);
}

void check_weights_finite(const SourceWeights& weights) {
  const double values[] = {weights.egocentric, weights.social, weights.natural};
  for (const double w : values) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      fail(ErrorCode::OutOfRange, "source weights must be finite and nonnegative");
    }
  }
}

}  // namespace

ReplayBuffer make_buffer(long long capacity) {
  if (capacity < 1) {
    fail(ErrorCode::OutOfRange, "capacity must be positive");
  }
  ReplayBuffer buffer;
  buffer.capacity = capacity;
  return buffer;
}

void store(ReplayBuffer& buffer, const Trajectory& trajectory) {
  validate_trajectory(trajectory);
  std::deque<Trajectory>& queue = source_deque(buffer, trajectory.source);
  queue.push_back(trajectory);
  while (static_cast<long long>(queue.size()) > buffer.capacity) {
    queue.pop_front();
  }
}

long long source_count(const ReplayBuffer& buffer, SourceTag source) {
  return static_cast<long long>(source_deque(buffer, source).size());
}

std::vector<Trajectory> sample_batch(const ReplayBuffer& buffer, const SourceWeights& weights,
                                     int n, std::uint64_t seed) {
  check_weights_finite(weights);
  if (n < 0) {
    fail(ErrorCode::OutOfRange, "batch size must be nonnegative");
  }
  const std::deque<Trajectory>* queues[] = {&buffer.egocentric, &buffer.social, &buffer.natural};
  Eigen::VectorXd effective(3);
  effective << weights.egocentric, weights.social, weights.natural;
  for (int i = 0; i < 3; ++i) {
    if (queues[i]->empty()) {
      effective[i] = 0.0;
    }
  }
  if (effective.sum() <= 0.0) {
    fail(ErrorCode::EmptySources, "every weighted source is empty");
  }
  effective /= effective.sum();

  Rng rng(seed);
  std::vector<Trajectory> batch;
  batch.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto source = static_cast<std::size_t>(rng.next_discrete(effective));
    const auto index = static_cast<std::size_t>(
        rng.next_below(static_cast<int>(queues[source]->size())));
    batch.push_back((*queues[source])[index]);
  }
  return batch;
}

double importance_weights(const Trajectory& trajectory, const agents::SoftmaxPolicy& policy) {
  if (trajectory.source == SourceTag::Natural) {
    fail(ErrorCode::NaturalSourceRejected,
         "observational trajectories have no behavior policy");
  }
  validate_trajectory(trajectory);
  double weight = 1.0;
  for (const Transition& step : trajectory.transitions) {
    if (!step.behavior_prob) {
      fail(ErrorCode::MissingBehaviorProb, "a step lacks its behavior probability");
    }
    const Eigen::VectorXd probs = agents::action_probabilities(policy, step.state);
    if (*step.action < 0 || *step.action >= probs.size()) {
      fail(ErrorCode::OutOfRange, "action outside the policy table");
    }
    weight *= probs[*step.action] / *step.behavior_prob;
  }
  return weight;
}

agents::GradientVector off_policy_gradient(const std::vector<Trajectory>& batch,
                                           const agents::SoftmaxPolicy& policy,
                                           const agents::ValueTable& baseline, double discount,
                                           std::optional<double> clip) {
  if (batch.empty()) {
    fail(ErrorCode::Empty, "need at least one trajectory");
  }
  if (clip && *clip <= 0.0) {
    fail(ErrorCode::OutOfRange, "clip cap must be positive");
  }
  for (const Trajectory& trajectory : batch) {
    if (trajectory.source == SourceTag::Natural) {
      fail(ErrorCode::NaturalSourceRejected,
           "observational trajectories never contribute gradients");
    }
  }
  agents::GradientVector total =
      agents::GradientVector::Zero(policy.logits.rows() * policy.logits.cols());
  for (const Trajectory& trajectory : batch) {
    double weight = importance_weights(trajectory, policy);
    if (clip && weight > *clip) {
      weight = *clip;
    }
    total += weight * agents::policy_gradient({trajectory}, policy, baseline, discount);
  }
  return total / static_cast<double>(batch.size());
}

Trajectory ingest_social(const std::vector<DemoStep>& demonstrations,
                         const std::optional<std::vector<double>>& expert_probs) {
  if (expert_probs && expert_probs->size() != demonstrations.size()) {
    fail(ErrorCode::ShapeMismatch, "one expert probability per demonstrated step");
  }
  Trajectory trajectory;
  trajectory.source = SourceTag::Social;
  trajectory.policy_id = "expert";
  std::map<std::pair<long long, int>, double> pair_count;
  std::map<long long, double> state_count;
  if (!expert_probs) {
    for (const DemoStep& demo : demonstrations) {
      pair_count[{demo.state, demo.action}] += 1.0;
      state_count[demo.state] += 1.0;
    }
  }
  for (std::size_t i = 0; i < demonstrations.size(); ++i) {
    const DemoStep& demo = demonstrations[i];
    double prob;
    if (expert_probs) {
      prob = (*expert_probs)[i];
      if (!(prob > 0.0) || prob > 1.0) {
        fail(ErrorCode::OutOfRange, "expert probabilities must lie in (0, 1]");
      }
    } else {
      prob = pair_count[{demo.state, demo.action}] / state_count[demo.state];
    }
    trajectory.transitions.push_back(
        Transition{demo.state, demo.action, demo.reward, prob, demo.next});
  }
  validate_trajectory(trajectory);
  return trajectory;
}

Trajectory ingest_natural(const std::vector<std::pair<long long, long long>>& observed) {
  Trajectory trajectory;
  trajectory.source = SourceTag::Natural;
  for (const auto& [state, next] : observed) {
    trajectory.transitions.push_back(
        Transition{state, std::nullopt, std::nullopt, std::nullopt, next});
  }
  validate_trajectory(trajectory);
  return trajectory;
}

std::string integration_mode_name(IntegrationMode mode) {
  switch (mode) {
    case IntegrationMode::EgoOnly: return "EgoOnly";
    case IntegrationMode::EgoSocial: return "EgoSocial";
    case IntegrationMode::EgoNatural: return "EgoNatural";
    case IntegrationMode::SocialNatural: return "SocialNatural";
    case IntegrationMode::Complete: return "Complete";
  }
  fail(ErrorCode::OutOfRange, "unknown integration mode");
}

IntegrationPlan integrate(const ReplayBuffer& buffer, IntegrationMode mode,
                          const agents::SoftmaxPolicy& policy, const IntegrationConfig& config) {
  if (policy.logits.size() == 0) {
    fail(ErrorCode::Empty, "policy has no logits");
  }
  if (!(config.ego_weight >= 0.0) || !(config.social_weight >= 0.0) ||
      !std::isfinite(config.ego_weight) || !std::isfinite(config.social_weight)) {
    fail(ErrorCode::ConfigError, "integration weights must be finite and nonnegative");
  }
  const auto require = [&buffer](SourceTag source) {
    if (source_count(buffer, source) == 0) {
      fail(ErrorCode::MissingSource,
           std::string(source_tag_name(source)) + " data required for this mode");
    }
  };

  IntegrationPlan plan;
  plan.mode = mode;
  switch (mode) {
    case IntegrationMode::EgoOnly:
      require(SourceTag::Egocentric);
      plan.gradient_weights = {config.ego_weight, 0.0, 0.0};
      plan.value_weights = {config.ego_weight, 0.0, 0.0};
      break;
    case IntegrationMode::EgoSocial:
      require(SourceTag::Egocentric);
      require(SourceTag::Social);
      plan.gradient_weights = {config.ego_weight, config.social_weight, 0.0};
      plan.value_weights = {config.ego_weight, config.social_weight, 0.0};
      break;
    case IntegrationMode::EgoNatural:
      require(SourceTag::Egocentric);
      require(SourceTag::Natural);
      plan.gradient_weights = {config.ego_weight, 0.0, 0.0};
      plan.value_weights = {config.ego_weight, 0.0, 0.0};
      plan.use_natural_model = true;
      break;
    case IntegrationMode::SocialNatural:
      require(SourceTag::Social);
      require(SourceTag::Natural);
      plan.gradient_weights = {0.0, 0.0, 0.0};
      plan.value_weights = {0.0, config.social_weight, 0.0};
      plan.policy_updates = false;
      plan.use_natural_model = true;
      break;
    case IntegrationMode::Complete:
      require(SourceTag::Egocentric);
      require(SourceTag::Social);
      require(SourceTag::Natural);
      plan.gradient_weights = {config.ego_weight, config.social_weight, 0.0};
      plan.value_weights = {config.ego_weight, config.social_weight, 0.0};
      plan.use_natural_model = true;
      break;
  }
  return plan;
}

namespace {

void format_trajectory(const Trajectory& trajectory, std::string& out) {
  out += "trajectory ";
  out += source_tag_name(trajectory.source);
  out += ' ';
  out += trajectory.policy_id.empty() ? "-" : trajectory.policy_id;
  out += '\n';
  for (const Transition& step : trajectory.transitions) {
    if (trajectory.source == SourceTag::Natural) {
      out += std::to_string(step.state) + " " + std::to_string(step.next) + "\n";
    } else {
      out += std::to_string(step.state) + " " + std::to_string(*step.action) + " " +
             g17(*step.reward) + " " + g17(*step.behavior_prob) + " " +
             std::to_string(step.next) + "\n";
    }
  }
}

long long parse_int(const std::string& token, int line_number) {
  try {
    std::size_t used = 0;
    const long long value = std::stoll(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return value;
  } catch (const std::exception&) {
    fail(ErrorCode::ParseError,
         "line " + std::to_string(line_number) + ": expected an integer, got '" + token + "'");
  }
}

double parse_double(const std::string& token, int line_number) {
  try {
    std::size_t used = 0;
    const double value = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return value;
  } catch (const std::exception&) {
    fail(ErrorCode::ParseError,
         "line " + std::to_string(line_number) + ": expected a number, got '" + token + "'");
  }
}

}  // namespace

std::string format_buffer(const ReplayBuffer& buffer) {
  std::string out = "capacity " + std::to_string(buffer.capacity) + "\n";
  for (const auto* queue : {&buffer.egocentric, &buffer.social, &buffer.natural}) {
    for (const Trajectory& trajectory : *queue) {
      format_trajectory(trajectory, out);
    }
  }
  return out;
}

ReplayBuffer parse_buffer(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_number = 0;

  if (!std::getline(in, line)) {
    fail(ErrorCode::ParseError, "line 1: missing capacity header");
  }
  ++line_number;
  std::istringstream header(line);
  std::string keyword;
  long long capacity = 0;
  std::string capacity_token;
  header >> keyword >> capacity_token;
  if (keyword != "capacity" || capacity_token.empty()) {
    fail(ErrorCode::ParseError, "line 1: expected 'capacity <n>'");
  }
  capacity = parse_int(capacity_token, line_number);
  ReplayBuffer buffer = make_buffer(capacity);

  std::optional<Trajectory> current;
  const auto flush = [&buffer, &current]() {
    if (current) {
      store(buffer, *current);
      current.reset();
    }
  };

  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream tokens(line);
    std::string first;
    tokens >> first;
    if (first == "trajectory") {
      flush();
      std::string source_name;
      std::string policy_id;
      tokens >> source_name >> policy_id;
      Trajectory trajectory;
      if (source_name == "Egocentric") {
        trajectory.source = SourceTag::Egocentric;
      } else if (source_name == "Social") {
        trajectory.source = SourceTag::Social;
      } else if (source_name == "Natural") {
        trajectory.source = SourceTag::Natural;
      } else {
        fail(ErrorCode::ParseError,
             "line " + std::to_string(line_number) + ": unknown source '" + source_name + "'");
      }
      trajectory.policy_id = policy_id == "-" ? "" : policy_id;
      current = std::move(trajectory);
      continue;
    }
    if (!current) {
      fail(ErrorCode::ParseError,
           "line " + std::to_string(line_number) + ": transition before any trajectory header");
    }
    std::vector<std::string> fields{first};
    std::string token;
    while (tokens >> token) fields.push_back(token);
    Transition step;
    if (current->source == SourceTag::Natural) {
      if (fields.size() != 2) {
        fail(ErrorCode::ParseError,
             "line " + std::to_string(line_number) + ": expected 'state next'");
      }
      step.state = parse_int(fields[0], line_number);
      step.next = parse_int(fields[1], line_number);
    } else {
      if (fields.size() != 5) {
        fail(ErrorCode::ParseError, "line " + std::to_string(line_number) +
                                        ": expected 'state action reward behaviorProb next'");
      }
      step.state = parse_int(fields[0], line_number);
      step.action = static_cast<int>(parse_int(fields[1], line_number));
      step.reward = parse_double(fields[2], line_number);
      step.behavior_prob = parse_double(fields[3], line_number);
      step.next = parse_int(fields[4], line_number);
    }
    current->transitions.push_back(step);
  }
  flush();
  return buffer;
}

void write_buffer(const std::string& path, const ReplayBuffer& buffer) {
  write_text_file(path, format_buffer(buffer));
}

ReplayBuffer read_buffer(const std::string& path) {
  return parse_buffer(read_text_file(path));
}

}  // namespace scmrl::replay
