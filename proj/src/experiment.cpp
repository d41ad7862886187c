#include "scmrl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "scmrl/error.hpp"
#include "scmrl/json_out.hpp"
#include "scmrl/rng.hpp"

namespace scmrl::experiment {

namespace {

// Stream tags for the run's independent random streams.
constexpr std::uint64_t kDemoStream = 0xD3;
constexpr std::uint64_t kNaturalStream = 0x4A;
constexpr std::uint64_t kSocialDrawStream = 0x50C1A1;
// Comparison reports draw their bootstrap resamples from a fixed seed so a
// report is a pure function of its inputs.
constexpr std::uint64_t kBootstrapSeed = 0xB0075;

[[noreturn]] void fail_field(const std::string& section, const std::string& key,
                             const std::string& message) {
  fail(ErrorCode::ConfigError, "[" + section + "] " + key + ": " + message);
}

// --- strict key-value field access -----------------------------------------

const std::string* find_value(const KvDocument& document, const char* section, const char* key) {
  const KvSection* s = document.find(section);
  return s == nullptr ? nullptr : s->find(key);
}

template <typename T, typename Convert>
T read_or(const KvDocument& document, const char* section, const char* key, T fallback,
          Convert convert) {
  const std::string* value = find_value(document, section, key);
  if (value == nullptr) return fallback;
  try {
    return convert(*value);
  } catch (const Error& error) {
    fail_field(section, key, error.what());
  }
}

int read_int(const KvDocument& d, const char* s, const char* k, int fallback) {
  return read_or(d, s, k, fallback, kv_int);
}
long long read_long(const KvDocument& d, const char* s, const char* k, long long fallback) {
  const std::string* value = find_value(d, s, k);
  if (value == nullptr) return fallback;
  try {
    return kv_int(*value);
  } catch (const Error& error) {
    fail_field(s, k, error.what());
  }
}
double read_double(const KvDocument& d, const char* s, const char* k, double fallback) {
  return read_or(d, s, k, fallback, kv_double);
}
bool read_bool(const KvDocument& d, const char* s, const char* k, bool fallback) {
  return read_or(d, s, k, fallback, kv_bool);
}

void check_known_keys(const KvDocument& document, const char* section,
                      std::initializer_list<const char*> known) {
  const KvSection* s = document.find(section);
  if (s == nullptr) return;
  for (const KvEntry& entry : s->entries) {
    const bool ok = std::any_of(known.begin(), known.end(),
                                [&entry](const char* key) { return entry.key == key; });
    if (!ok) fail_field(section, entry.key, "unknown key");
  }
}

// --- enum token maps --------------------------------------------------------

agents::Representation parse_representation(const std::string& token) {
  if (token == "raw") return agents::Representation::Raw;
  if (token == "mixed_observation") return agents::Representation::MixedObservation;
  if (token == "learned_codes") return agents::Representation::LearnedCodes;
  fail(ErrorCode::ConfigError, "unknown representation '" + token + "'");
}

replay::IntegrationMode parse_mode(const std::string& token) {
  for (replay::IntegrationMode mode :
       {replay::IntegrationMode::EgoOnly, replay::IntegrationMode::EgoSocial,
        replay::IntegrationMode::EgoNatural, replay::IntegrationMode::SocialNatural,
        replay::IntegrationMode::Complete}) {
    if (token == replay::integration_mode_name(mode)) return mode;
  }
  fail(ErrorCode::ConfigError, "unknown integration mode '" + token + "'");
}

bool social_mode(replay::IntegrationMode mode) {
  return mode == replay::IntegrationMode::EgoSocial ||
         mode == replay::IntegrationMode::SocialNatural ||
         mode == replay::IntegrationMode::Complete;
}

bool natural_mode(replay::IntegrationMode mode) {
  return mode == replay::IntegrationMode::EgoNatural ||
         mode == replay::IntegrationMode::SocialNatural ||
         mode == replay::IntegrationMode::Complete;
}

// --- tasks -------------------------------------------------------------------

struct TaskBundle {
  env::Mdp mdp;                     // the planning MDP (base MDP for the dispenser)
  std::optional<env::Pomdp> pomdp;  // engaged for partially observed tasks
};

TaskBundle build_task(const TaskSpec& task) {
  TaskBundle bundle;
  if (task.name == "trap_tube") {
    bundle.mdp = env::build_trap_tube_task(task.length, task.trap_effective);
  } else if (task.name == "dispenser") {
    bundle.pomdp = env::build_dispenser_task(task.flip_prob, task.confound);
    bundle.mdp = bundle.pomdp->base;
  } else {
    fail_field("task", "name", "unknown task '" + task.name + "'");
  }
  return bundle;
}

// --- demonstration and observational data -----------------------------------

std::vector<Trajectory> make_demos(const env::Mdp& mdp, const PlanningOracle& oracle,
                                   const ExperimentConfig& config) {
  Rng rng(derive_seed(static_cast<std::uint64_t>(config.data_seed), kDemoStream));
  const int actions = mdp.action_count;
  const double eps = config.demo_epsilon;
  Eigen::Vector2d soften(1.0 - eps, eps);
  std::vector<Trajectory> demos;
  demos.reserve(static_cast<std::size_t>(config.demo_episodes));
  for (int episode = 0; episode < config.demo_episodes; ++episode) {
    std::vector<replay::DemoStep> steps;
    std::vector<double> probs;
    long long state = env::sample_start(mdp, rng);
    for (int t = 0; t < config.demo_horizon; ++t) {
      const int greedy = oracle.greedy[static_cast<std::size_t>(state)];
      const int action = rng.next_discrete(soften) == 1 ? rng.next_below(actions) : greedy;
      const double behavior = action == greedy ? (1.0 - eps) + eps / actions : eps / actions;
      const auto [next, reward] = env::step(mdp, state, action, rng);
      steps.push_back(replay::DemoStep{state, action, reward, next});
      probs.push_back(behavior);
      state = next;
    }
    demos.push_back(replay::ingest_social(steps, probs));
  }
  return demos;
}

struct NaturalData {
  std::vector<env::TransitionRecord> records;  // action-free, for model learning
  std::vector<Trajectory> trajectories;        // chained per collection episode
};

NaturalData make_natural(const env::Mdp& mdp, const ExperimentConfig& config) {
  NaturalData data;
  const auto raw = env::collect_random_transitions(
      mdp, config.natural_transitions, config.natural_episode_length,
      derive_seed(static_cast<std::uint64_t>(config.data_seed), kNaturalStream));
  data.records = env::strip_actions(raw);
  for (std::size_t lo = 0; lo < data.records.size();
       lo += static_cast<std::size_t>(config.natural_episode_length)) {
    const std::size_t hi = std::min(
        lo + static_cast<std::size_t>(config.natural_episode_length), data.records.size());
    std::vector<std::pair<long long, long long>> observed;
    observed.reserve(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) {
      observed.emplace_back(mdp.states.flatten(data.records[i].state),
                            mdp.states.flatten(data.records[i].next));
    }
    data.trajectories.push_back(replay::ingest_natural(observed));
  }
  return data;
}

// --- learned-code representation ---------------------------------------------

struct CodeTable {
  std::vector<int> codes;  // observation -> flat code index
  ProductSpace space;      // one binary axis per latent dimension
};

CodeTable derive_learned_codes(const env::Pomdp& pomdp, const agents::VaeTrainConfig& config) {
  std::vector<Eigen::VectorXd> dataset;
  dataset.reserve(static_cast<std::size_t>(pomdp.observation_count));
  for (int obs = 0; obs < pomdp.observation_count; ++obs) {
    dataset.push_back(pomdp.observation_features.row(obs).transpose());
  }
  const agents::EncoderResult trained = agents::train_encoder(dataset, config);

  Eigen::MatrixXd means(pomdp.observation_count, config.latent_dim);
  for (int obs = 0; obs < pomdp.observation_count; ++obs) {
    means.row(obs) = agents::encode_mean(trained.vae, dataset[static_cast<std::size_t>(obs)])
                         .transpose();
  }

  CodeTable table;
  table.space = ProductSpace::of_cardinalities(std::vector<int>(config.latent_dim, 2));
  table.codes.resize(static_cast<std::size_t>(pomdp.observation_count));
  Eigen::VectorXd medians(config.latent_dim);
  for (int k = 0; k < config.latent_dim; ++k) {
    std::vector<double> column(means.col(k).data(), means.col(k).data() + means.rows());
    std::sort(column.begin(), column.end());
    const std::size_t n = column.size();
    medians[k] = n % 2 == 1 ? column[n / 2] : 0.5 * (column[n / 2 - 1] + column[n / 2]);
  }
  for (int obs = 0; obs < pomdp.observation_count; ++obs) {
    std::vector<int> bits(static_cast<std::size_t>(config.latent_dim));
    for (int k = 0; k < config.latent_dim; ++k) {
      bits[static_cast<std::size_t>(k)] = means(obs, k) > medians[k] ? 1 : 0;
    }
    table.codes[static_cast<std::size_t>(obs)] = static_cast<int>(table.space.flatten(bits));
  }
  return table;
}

// Exact joint of (state factors, representation codes) under the uniform
// state measure — the seed-free object the disentanglement scores apply to.
disent::FactorCodeJoint representation_joint(const TaskBundle& task,
                                             agents::Representation representation,
                                             const std::optional<CodeTable>& codes) {
  const env::Mdp& base = task.mdp;
  const long long states = base.states.size();
  const double mass = 1.0 / static_cast<double>(states);
  disent::FactorCodeJoint joint;
  joint.factors = base.states;
  if (representation == agents::Representation::Raw) {
    joint.codes = ProductSpace::of_cardinalities({static_cast<int>(states)});
    joint.probabilities = Eigen::VectorXd::Zero(states * states);
    for (long long s = 0; s < states; ++s) joint.probabilities[s * states + s] = mass;
    return joint;
  }
  const env::Pomdp& pomdp = *task.pomdp;
  if (representation == agents::Representation::MixedObservation) {
    const long long obs_count = pomdp.observation_count;
    joint.codes = ProductSpace::of_cardinalities({static_cast<int>(obs_count)});
    joint.probabilities = Eigen::VectorXd::Zero(states * obs_count);
    for (long long s = 0; s < states; ++s) {
      for (long long o = 0; o < obs_count; ++o) {
        joint.probabilities[s * obs_count + o] = mass * pomdp.measurement(s, o);
      }
    }
    return joint;
  }
  const long long code_count = codes->space.size();
  joint.codes = codes->space;
  joint.probabilities = Eigen::VectorXd::Zero(states * code_count);
  for (long long s = 0; s < states; ++s) {
    for (int o = 0; o < pomdp.observation_count; ++o) {
      joint.probabilities[s * code_count + codes->codes[static_cast<std::size_t>(o)]] +=
          mass * pomdp.measurement(s, o);
    }
  }
  return joint;
}

// --- per-seed training -------------------------------------------------------

struct Draws {
  long long egocentric = 0;
  long long social = 0;
  long long natural = 0;
};

agents::TrainConfig train_config_of(const ExperimentConfig& config,
                                    const std::optional<CodeTable>& codes) {
  agents::TrainConfig tc;
  tc.episodes = config.episodes;
  tc.max_steps = config.max_steps;
  tc.batch_size = config.batch_size;
  tc.eval_block = config.eval_block;
  tc.policy_step = config.policy_step;
  tc.buffer_capacity = config.buffer_capacity;
  if (codes.has_value()) {
    tc.observation_codes = codes->codes;
    tc.code_count = static_cast<int>(codes->space.size());
  }
  return tc;
}

agents::TrainResult delegated_run(const TaskBundle& task, const ExperimentConfig& config,
                                  const std::optional<CodeTable>& codes, std::uint64_t seed) {
  const agents::TrainConfig tc = train_config_of(config, codes);
  if (task.pomdp.has_value()) {
    return agents::train_actor_critic(*task.pomdp, config.representation, tc, seed);
  }
  return agents::train_actor_critic(task.mdp, config.representation, tc, seed);
}

// Ego episodes mixed with importance-corrected demonstration gradients
// (EgoSocial and Complete; raw representation over the planning MDP).
agents::TrainResult integration_run(const env::Mdp& mdp, const ExperimentConfig& config,
                                    const std::vector<Trajectory>& demos,
                                    const std::vector<Trajectory>& natural, std::uint64_t seed,
                                    Draws& draws) {
  const long long states = mdp.states.size();
  const int actions = mdp.action_count;
  agents::SoftmaxPolicy policy{Eigen::MatrixXd::Zero(states, actions)};
  replay::ReplayBuffer buffer = replay::make_buffer(config.buffer_capacity);
  for (const Trajectory& demo : demos) replay::store(buffer, demo);
  for (const Trajectory& walk : natural) replay::store(buffer, walk);

  Rng rng(derive_seed(seed, 0));
  Eigen::VectorXd returns(config.episodes);
  std::vector<Trajectory> fresh;
  std::optional<replay::IntegrationPlan> plan;
  long long update = 0;
  for (int episode = 0; episode < config.episodes; ++episode) {
    Trajectory trajectory;
    trajectory.source = SourceTag::Egocentric;
    trajectory.policy_id = "actor";
    std::vector<double> rewards;
    long long state = env::sample_start(mdp, rng);
    for (int t = 0; t < config.max_steps; ++t) {
      const Eigen::VectorXd probs = agents::action_probabilities(policy, state);
      const int action = rng.next_discrete(probs);
      const auto [next, reward] = env::step(mdp, state, action, rng);
      trajectory.transitions.push_back(Transition{state, action, reward, probs[action], next});
      rewards.push_back(reward);
      state = next;
    }
    returns[episode] = agents::discounted_return(rewards, mdp.discount, 0);
    replay::store(buffer, trajectory);
    fresh.push_back(trajectory);

    if (static_cast<int>(fresh.size()) == config.batch_size || episode + 1 == config.episodes) {
      if (!plan.has_value()) {
        plan = replay::integrate(buffer, config.mode, policy,
                                 replay::IntegrationConfig{config.ego_weight,
                                                           config.social_weight});
      }
      std::vector<Trajectory> social;
      if (plan->gradient_weights.social > 0.0) {
        social = replay::sample_batch(buffer, replay::SourceWeights{0.0, 1.0, 0.0},
                                      config.batch_size,
                                      derive_seed(seed, kSocialDrawStream + static_cast<
                                                            std::uint64_t>(update)));
      }
      std::vector<Trajectory> value_batch;
      if (plan->value_weights.egocentric > 0.0) {
        value_batch.insert(value_batch.end(), fresh.begin(), fresh.end());
      }
      if (plan->value_weights.social > 0.0) {
        value_batch.insert(value_batch.end(), social.begin(), social.end());
      }
      const agents::ValueEstimates estimates =
          agents::estimate_values(value_batch, mdp.discount, states, actions);

      agents::GradientVector gradient = Eigen::VectorXd::Zero(states * actions);
      if (plan->gradient_weights.egocentric > 0.0) {
        gradient += plan->gradient_weights.egocentric *
                    agents::policy_gradient(fresh, policy, estimates.v, mdp.discount);
      }
      if (!social.empty()) {
        gradient += plan->gradient_weights.social *
                    replay::off_policy_gradient(social, policy, estimates.v, mdp.discount,
                                                config.is_clip);
      }
      for (long long s = 0; s < states; ++s) {
        for (int a = 0; a < actions; ++a) {
          policy.logits(s, a) += config.policy_step * gradient[s * actions + a];
        }
      }
      draws.egocentric += static_cast<long long>(fresh.size());
      draws.social += static_cast<long long>(social.size());
      fresh.clear();
      ++update;
    }
  }

  agents::TrainResult result;
  result.policy = std::move(policy);
  result.episode_returns = std::move(returns);
  result.curve = agents::block_curve(result.episode_returns, config.eval_block);
  return result;
}

// SocialNatural never updates the policy: the uniform policy is rolled for
// the budget so the curve records the behaviorally silent baseline.
agents::TrainResult silent_run(const env::Mdp& mdp, const ExperimentConfig& config,
                               std::uint64_t seed) {
  const long long states = mdp.states.size();
  agents::SoftmaxPolicy policy{Eigen::MatrixXd::Zero(states, mdp.action_count)};
  Rng rng(derive_seed(seed, 0));
  Eigen::VectorXd returns(config.episodes);
  for (int episode = 0; episode < config.episodes; ++episode) {
    std::vector<double> rewards;
    long long state = env::sample_start(mdp, rng);
    for (int t = 0; t < config.max_steps; ++t) {
      const int action = agents::sample_action(policy, state, rng);
      const auto [next, reward] = env::step(mdp, state, action, rng);
      rewards.push_back(reward);
      state = next;
    }
    returns[episode] = agents::discounted_return(rewards, mdp.discount, 0);
  }
  agents::TrainResult result;
  result.policy = std::move(policy);
  result.episode_returns = std::move(returns);
  result.curve = agents::block_curve(result.episode_returns, config.eval_block);
  return result;
}

}  // namespace

// --- config ------------------------------------------------------------------

const char* representation_name(agents::Representation representation) {
  switch (representation) {
    case agents::Representation::Raw:
      return "raw";
    case agents::Representation::MixedObservation:
      return "mixed_observation";
    case agents::Representation::LearnedCodes:
      return "learned_codes";
  }
  fail(ErrorCode::ConfigError, "unknown representation value");
}

const char* comparison_metric_name(ComparisonMetric metric) {
  switch (metric) {
    case ComparisonMetric::FinalReturn:
      return "finalReturn";
    case ComparisonMetric::EpisodesToThreshold:
      return "episodesToThreshold";
  }
  fail(ErrorCode::ConfigError, "unknown comparison metric value");
}

TaskSpec parse_task_spec(const KvDocument& document) {
  check_known_keys(document, "task", {"name", "length", "trap_effective", "flip_prob",
                                      "confound"});
  const KvSection& section = document.require("task");
  TaskSpec task;
  task.name = section.require("name");
  task.length = read_int(document, "task", "length", task.length);
  task.trap_effective = read_bool(document, "task", "trap_effective", task.trap_effective);
  task.flip_prob = read_double(document, "task", "flip_prob", task.flip_prob);
  task.confound = read_bool(document, "task", "confound", task.confound);
  if (task.name != "trap_tube" && task.name != "dispenser") {
    fail_field("task", "name", "unknown task '" + task.name + "'");
  }
  if (task.name == "trap_tube" && task.length < 3) {
    fail_field("task", "length", "tube length must be at least 3");
  }
  if (task.name == "dispenser" && !(task.flip_prob >= 0.0 && task.flip_prob <= 1.0)) {
    fail_field("task", "flip_prob", "must lie in [0, 1]");
  }
  return task;
}

ExperimentConfig parse_experiment_config(const KvDocument& document) {
  for (const KvSection& section : document.sections) {
    if (section.name != "task" && section.name != "run" && section.name != "sources" &&
        section.name != "vae" && section.name != "thresholds") {
      fail(ErrorCode::ConfigError, "[" + section.name + "]: unknown section");
    }
  }
  check_known_keys(document, "run",
                   {"representation", "mode", "seeds", "episodes", "max_steps", "batch_size",
                    "eval_block", "policy_step", "buffer_capacity"});
  check_known_keys(document, "sources",
                   {"ego_weight", "social_weight", "demo_episodes", "demo_horizon",
                    "demo_epsilon", "natural_transitions", "natural_episode_length",
                    "data_seed"});
  check_known_keys(document, "vae", {"latent_dim", "beta", "steps", "step_size", "seed"});
  check_known_keys(document, "thresholds", {"cmi", "is_clip"});

  ExperimentConfig config;
  config.task = parse_task_spec(document);

  const KvSection& run = document.require("run");
  config.representation = read_or(document, "run", "representation", config.representation,
                                  parse_representation);
  config.mode = read_or(document, "run", "mode", config.mode, parse_mode);
  const std::string& seed_text = run.require("seeds");
  try {
    for (int seed : kv_int_list(seed_text)) config.seeds.push_back(seed);
  } catch (const Error& error) {
    fail_field("run", "seeds", error.what());
  }
  if (find_value(document, "run", "episodes") == nullptr) {
    fail_field("run", "episodes", "missing value");
  }
  config.episodes = read_int(document, "run", "episodes", 0);
  config.max_steps = read_int(document, "run", "max_steps", config.max_steps);
  config.batch_size = read_int(document, "run", "batch_size", config.batch_size);
  config.eval_block = read_int(document, "run", "eval_block", config.eval_block);
  config.policy_step = read_double(document, "run", "policy_step", config.policy_step);
  config.buffer_capacity =
      read_long(document, "run", "buffer_capacity", config.buffer_capacity);

  config.ego_weight = read_double(document, "sources", "ego_weight", config.ego_weight);
  config.social_weight = read_double(document, "sources", "social_weight", config.social_weight);
  config.demo_episodes = read_int(document, "sources", "demo_episodes", config.demo_episodes);
  config.demo_horizon = read_int(document, "sources", "demo_horizon", config.demo_horizon);
  config.demo_epsilon = read_double(document, "sources", "demo_epsilon", config.demo_epsilon);
  config.natural_transitions =
      read_int(document, "sources", "natural_transitions", config.natural_transitions);
  config.natural_episode_length = read_int(document, "sources", "natural_episode_length",
                                           config.natural_episode_length);
  config.data_seed = read_long(document, "sources", "data_seed", config.data_seed);

  config.vae.latent_dim = read_int(document, "vae", "latent_dim", config.vae.latent_dim);
  config.vae.beta = read_double(document, "vae", "beta", config.vae.beta);
  config.vae.steps = read_int(document, "vae", "steps", config.vae.steps);
  config.vae.step_size = read_double(document, "vae", "step_size", config.vae.step_size);
  config.vae.seed = static_cast<std::uint64_t>(
      read_long(document, "vae", "seed", static_cast<long long>(config.vae.seed)));

  config.cmi_threshold = read_double(document, "thresholds", "cmi", config.cmi_threshold);
  if (const std::string* clip = find_value(document, "thresholds", "is_clip")) {
    if (*clip == "none") {
      config.is_clip = std::nullopt;
    } else {
      config.is_clip = read_double(document, "thresholds", "is_clip", 10.0);
    }
  }

  validate_experiment_config(config);
  return config;
}

ExperimentConfig read_experiment_config(const std::string& path) {
  return parse_experiment_config(read_kv_file(path));
}

KvDocument experiment_config_kv(const ExperimentConfig& config) {
  KvDocument document;
  KvSection& task = document.add("task");
  task.entries.push_back({"name", config.task.name});
  task.entries.push_back({"length", std::to_string(config.task.length)});
  task.entries.push_back({"trap_effective", config.task.trap_effective ? "true" : "false"});
  task.entries.push_back({"flip_prob", g17(config.task.flip_prob)});
  task.entries.push_back({"confound", config.task.confound ? "true" : "false"});

  KvSection& run = document.add("run");
  run.entries.push_back({"representation", representation_name(config.representation)});
  run.entries.push_back({"mode", replay::integration_mode_name(config.mode)});
  std::string seeds;
  for (long long seed : config.seeds) {
    if (!seeds.empty()) seeds += ' ';
    seeds += std::to_string(seed);
  }
  run.entries.push_back({"seeds", seeds});
  run.entries.push_back({"episodes", std::to_string(config.episodes)});
  run.entries.push_back({"max_steps", std::to_string(config.max_steps)});
  run.entries.push_back({"batch_size", std::to_string(config.batch_size)});
  run.entries.push_back({"eval_block", std::to_string(config.eval_block)});
  run.entries.push_back({"policy_step", g17(config.policy_step)});
  run.entries.push_back({"buffer_capacity", std::to_string(config.buffer_capacity)});

  KvSection& sources = document.add("sources");
  sources.entries.push_back({"ego_weight", g17(config.ego_weight)});
  sources.entries.push_back({"social_weight", g17(config.social_weight)});
  sources.entries.push_back({"demo_episodes", std::to_string(config.demo_episodes)});
  sources.entries.push_back({"demo_horizon", std::to_string(config.demo_horizon)});
  sources.entries.push_back({"demo_epsilon", g17(config.demo_epsilon)});
  sources.entries.push_back({"natural_transitions", std::to_string(config.natural_transitions)});
  sources.entries.push_back(
      {"natural_episode_length", std::to_string(config.natural_episode_length)});
  sources.entries.push_back({"data_seed", std::to_string(config.data_seed)});

  KvSection& vae = document.add("vae");
  vae.entries.push_back({"latent_dim", std::to_string(config.vae.latent_dim)});
  vae.entries.push_back({"beta", g17(config.vae.beta)});
  vae.entries.push_back({"steps", std::to_string(config.vae.steps)});
  vae.entries.push_back({"step_size", g17(config.vae.step_size)});
  vae.entries.push_back({"seed", std::to_string(config.vae.seed)});

  KvSection& thresholds = document.add("thresholds");
  thresholds.entries.push_back({"cmi", g17(config.cmi_threshold)});
  thresholds.entries.push_back(
      {"is_clip", config.is_clip.has_value() ? g17(*config.is_clip) : "none"});
  return document;
}

void validate_experiment_config(const ExperimentConfig& config) {
  if (config.task.name != "trap_tube" && config.task.name != "dispenser") {
    fail_field("task", "name", "unknown task '" + config.task.name + "'");
  }
  if (config.task.name == "trap_tube" && config.task.length < 3) {
    fail_field("task", "length", "tube length must be at least 3");
  }
  if (config.task.name == "dispenser" &&
      !(config.task.flip_prob >= 0.0 && config.task.flip_prob <= 1.0)) {
    fail_field("task", "flip_prob", "must lie in [0, 1]");
  }
  if (config.seeds.empty()) fail_field("run", "seeds", "at least one seed required");
  for (long long seed : config.seeds) {
    if (seed < 0) fail_field("run", "seeds", "seeds must be nonnegative");
  }
  for (std::size_t i = 0; i < config.seeds.size(); ++i) {
    for (std::size_t j = i + 1; j < config.seeds.size(); ++j) {
      if (config.seeds[i] == config.seeds[j]) {
        fail_field("run", "seeds", "duplicate seed " + std::to_string(config.seeds[i]));
      }
    }
  }
  if (config.episodes < 1) fail_field("run", "episodes", "must be positive");
  if (config.max_steps < 1) fail_field("run", "max_steps", "must be positive");
  if (config.batch_size < 1) fail_field("run", "batch_size", "must be positive");
  if (config.eval_block < 1) fail_field("run", "eval_block", "must be positive");
  if (config.episodes % config.eval_block != 0) {
    fail_field("run", "episodes", "must be a multiple of eval_block");
  }
  if (!(config.policy_step > 0.0)) fail_field("run", "policy_step", "must be positive");
  if (config.buffer_capacity < 1) fail_field("run", "buffer_capacity", "must be positive");
  if (!(config.ego_weight >= 0.0) || !std::isfinite(config.ego_weight)) {
    fail_field("sources", "ego_weight", "must be finite and nonnegative");
  }
  if (!(config.social_weight >= 0.0) || !std::isfinite(config.social_weight)) {
    fail_field("sources", "social_weight", "must be finite and nonnegative");
  }
  if (config.demo_episodes < 1) fail_field("sources", "demo_episodes", "must be positive");
  if (config.demo_horizon < 1) fail_field("sources", "demo_horizon", "must be positive");
  if (!(config.demo_epsilon >= 0.0 && config.demo_epsilon <= 1.0)) {
    fail_field("sources", "demo_epsilon", "must lie in [0, 1]");
  }
  if (config.natural_transitions < 1) {
    fail_field("sources", "natural_transitions", "must be positive");
  }
  if (config.natural_episode_length < 1) {
    fail_field("sources", "natural_episode_length", "must be positive");
  }
  if (config.data_seed < 0) fail_field("sources", "data_seed", "must be nonnegative");
  if (config.vae.latent_dim < 1) fail_field("vae", "latent_dim", "must be positive");
  if (!(config.vae.beta >= 1.0)) fail_field("vae", "beta", "must be at least 1");
  if (config.vae.steps < 1) fail_field("vae", "steps", "must be positive");
  if (!(config.vae.step_size > 0.0)) fail_field("vae", "step_size", "must be positive");
  if (!(config.cmi_threshold >= 0.0)) fail_field("thresholds", "cmi", "must be nonnegative");
  if (config.is_clip.has_value() &&
      (!(*config.is_clip > 0.0) || !std::isfinite(*config.is_clip))) {
    fail_field("thresholds", "is_clip", "must be positive (or 'none')");
  }
  if (config.task.name == "trap_tube" &&
      config.representation != agents::Representation::Raw) {
    fail_field("run", "representation", "trap_tube is fully observed; only raw applies");
  }
  if (social_mode(config.mode) && config.representation != agents::Representation::Raw) {
    fail_field("run", "representation",
               "demonstrations are recorded over raw states; social modes need raw");
  }
  if ((config.mode == replay::IntegrationMode::EgoSocial ||
       config.mode == replay::IntegrationMode::Complete) &&
      config.ego_weight == 0.0 && config.social_weight == 0.0) {
    fail_field("sources", "ego_weight", "at least one gradient source weight must be positive");
  }
}

std::string task_summary(const TaskSpec& task) {
  if (task.name == "trap_tube") {
    return "trap_tube(length=" + std::to_string(task.length) +
           ",trap_effective=" + (task.trap_effective ? "true" : "false") + ")";
  }
  return "dispenser(flip_prob=" + g17(task.flip_prob) +
         ",confound=" + (task.confound ? "true" : "false") + ")";
}

// --- planning oracle -----------------------------------------------------------

PlanningOracle value_iteration_oracle(const env::Mdp& mdp, double tolerance) {
  env::validate_mdp(mdp);
  if (!(tolerance > 0.0)) fail(ErrorCode::OutOfRange, "tolerance must be positive");
  const long long states = mdp.states.size();
  Eigen::VectorXd values = Eigen::VectorXd::Zero(states);
  PlanningOracle oracle;
  double change = tolerance;
  while (change >= tolerance) {
    Eigen::VectorXd updated(states);
    for (long long s = 0; s < states; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < mdp.action_count; ++a) {
        best = std::max(best,
                        mdp.reward(s, a) + mdp.discount * mdp.transition[a].row(s).dot(values));
      }
      updated[s] = best;
    }
    change = (updated - values).cwiseAbs().maxCoeff();
    values = updated;
    ++oracle.sweeps;
  }
  oracle.values.values = values;
  oracle.values.visited.assign(static_cast<std::size_t>(states), true);
  oracle.greedy.resize(static_cast<std::size_t>(states), 0);
  for (long long s = 0; s < states; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < mdp.action_count; ++a) {
      const double q = mdp.reward(s, a) + mdp.discount * mdp.transition[a].row(s).dot(values);
      if (q > best) {
        best = q;
        oracle.greedy[static_cast<std::size_t>(s)] = a;
      }
    }
  }
  return oracle;
}

env::Mdp build_task_mdp(const TaskSpec& task) { return build_task(task).mdp; }

// --- run ------------------------------------------------------------------------

Scorecard run_experiment(const ExperimentConfig& config) {
  validate_experiment_config(config);
  const TaskBundle task = build_task(config.task);
  const long long states = task.mdp.states.size();

  std::optional<CodeTable> codes;
  if (config.representation == agents::Representation::LearnedCodes) {
    codes = derive_learned_codes(*task.pomdp, config.vae);
  }

  Scorecard card;
  card.task = task_summary(config.task);
  card.mode = replay::integration_mode_name(config.mode);
  card.representation = representation_name(config.representation);
  card.seeds = config.seeds;
  card.episodes = config.episodes;
  card.eval_block = config.eval_block;
  card.state_count = states;

  std::vector<Trajectory> demos;
  if (social_mode(config.mode)) {
    const PlanningOracle oracle = value_iteration_oracle(task.mdp, 1e-10);
    demos = make_demos(task.mdp, oracle, config);
  }
  NaturalData natural;
  if (natural_mode(config.mode)) {
    natural = make_natural(task.mdp, config);
    const env::FactoredTransition model = env::learn_factored_dynamics(
        task.mdp.states, 0, natural.records, config.cmi_threshold);
    card.model_learned = true;
    for (const env::FactorMechanism& mechanism : model.mechanisms) {
      card.parent_sets.push_back(mechanism.factor_parents);
    }
    card.natural_draws = static_cast<long long>(natural.records.size());
  }

  Draws draws;
  card.final_returns = Eigen::VectorXd::Zero(static_cast<long long>(config.seeds.size()));
  for (std::size_t i = 0; i < config.seeds.size(); ++i) {
    const std::uint64_t seed = static_cast<std::uint64_t>(config.seeds[i]);
    agents::TrainResult result;
    switch (config.mode) {
      case replay::IntegrationMode::EgoOnly:
      case replay::IntegrationMode::EgoNatural:
        result = delegated_run(task, config, codes, seed);
        draws.egocentric += config.episodes;
        break;
      case replay::IntegrationMode::EgoSocial:
      case replay::IntegrationMode::Complete:
        result = integration_run(task.mdp, config, demos, natural.trajectories, seed, draws);
        break;
      case replay::IntegrationMode::SocialNatural:
        result = silent_run(task.mdp, config, seed);
        break;
    }
    card.curves.push_back(result.curve);
    card.final_returns[static_cast<long long>(i)] =
        result.curve.mean_return[result.curve.mean_return.size() - 1];
  }
  if (config.mode == replay::IntegrationMode::SocialNatural) {
    // The mode's one use of experience: value estimation from demonstrations.
    agents::estimate_values(demos, task.mdp.discount, states, task.mdp.action_count);
    draws.social += static_cast<long long>(demos.size());
  }
  card.egocentric_draws = draws.egocentric;
  card.social_draws += draws.social;
  card.natural_draws += draws.natural;

  card.final_mean = card.final_returns.mean();
  if (card.final_returns.size() > 1) {
    const double n = static_cast<double>(card.final_returns.size());
    const double var =
        (card.final_returns.array() - card.final_mean).square().sum() / (n - 1.0);
    card.final_stderr = std::sqrt(var / n);
  }

  card.score = disent::score_disentanglement(
      representation_joint(task, config.representation, codes));
  card.partition = env::bisimulation_partition(task.mdp);
  return card;
}

// --- comparison ------------------------------------------------------------------

namespace {

std::vector<double> metric_values(const Scorecard& card, ComparisonMetric metric,
                                  double threshold) {
  std::vector<double> values;
  values.reserve(card.curves.size());
  for (std::size_t i = 0; i < card.curves.size(); ++i) {
    if (metric == ComparisonMetric::FinalReturn) {
      values.push_back(card.final_returns[static_cast<long long>(i)]);
      continue;
    }
    const agents::LearningCurve& curve = card.curves[i];
    double episodes = card.episodes;
    for (long long b = 0; b < curve.mean_return.size(); ++b) {
      if (curve.mean_return[b] >= threshold) {
        episodes = static_cast<double>((b + 1) * curve.block_size);
        break;
      }
    }
    values.push_back(episodes);
  }
  return values;
}

}  // namespace

ComparisonReport compare_agents(const std::vector<Scorecard>& scorecards,
                                ComparisonMetric metric, double threshold) {
  if (scorecards.size() < 2) {
    fail(ErrorCode::TaskMismatch, "need at least two scorecards to compare");
  }
  for (std::size_t i = 1; i < scorecards.size(); ++i) {
    if (scorecards[i].task != scorecards[0].task) {
      fail(ErrorCode::TaskMismatch, "scorecards describe different tasks: '" +
                                        scorecards[0].task + "' vs '" + scorecards[i].task +
                                        "'");
    }
    if (scorecards[i].seeds != scorecards[0].seeds) {
      fail(ErrorCode::TaskMismatch, "paired comparison needs identical seed lists");
    }
  }

  ComparisonReport report;
  report.metric = metric;
  report.threshold = threshold;
  Rng rng(kBootstrapSeed);
  constexpr int kResamples = 10000;
  for (std::size_t i = 0; i < scorecards.size(); ++i) {
    const std::vector<double> first = metric_values(scorecards[i], metric, threshold);
    for (std::size_t j = i + 1; j < scorecards.size(); ++j) {
      const std::vector<double> second = metric_values(scorecards[j], metric, threshold);
      const int n = static_cast<int>(first.size());
      std::vector<double> diffs(static_cast<std::size_t>(n));
      double mean = 0.0;
      for (int k = 0; k < n; ++k) {
        diffs[static_cast<std::size_t>(k)] = first[static_cast<std::size_t>(k)] -
                                             second[static_cast<std::size_t>(k)];
        mean += diffs[static_cast<std::size_t>(k)];
      }
      mean /= n;

      std::vector<double> resampled(kResamples);
      for (int r = 0; r < kResamples; ++r) {
        double total = 0.0;
        for (int k = 0; k < n; ++k) total += diffs[static_cast<std::size_t>(rng.next_below(n))];
        resampled[static_cast<std::size_t>(r)] = total / n;
      }
      std::sort(resampled.begin(), resampled.end());
      PairComparison pair;
      pair.first = static_cast<int>(i);
      pair.second = static_cast<int>(j);
      pair.mean_difference = mean;
      pair.ci_low = resampled[static_cast<std::size_t>(
          std::floor(0.025 * (kResamples - 1)))];
      pair.ci_high = resampled[static_cast<std::size_t>(
          std::ceil(0.975 * (kResamples - 1)))];
      pair.significant = pair.ci_low > 0.0 || pair.ci_high < 0.0;
      report.pairs.push_back(pair);
    }
  }
  return report;
}

// --- reports ----------------------------------------------------------------------

void emit_report(const Scorecard& scorecard, const std::string& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create directory " + directory);
  const std::filesystem::path root(directory);

  nlohmann::ordered_json j;
  j["task"] = scorecard.task;
  j["mode"] = scorecard.mode;
  j["representation"] = scorecard.representation;
  j["seeds"] = scorecard.seeds;
  j["episodes"] = scorecard.episodes;
  j["evalBlock"] = scorecard.eval_block;
  nlohmann::ordered_json finals = nlohmann::ordered_json::array();
  for (long long i = 0; i < scorecard.final_returns.size(); ++i) {
    finals.push_back(scorecard.final_returns[i]);
  }
  j["finalReturns"] = finals;
  j["finalMean"] = scorecard.final_mean;
  j["finalStderr"] = scorecard.final_stderr;
  nlohmann::ordered_json curves = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < scorecard.curves.size(); ++i) {
    const agents::LearningCurve& curve = scorecard.curves[i];
    nlohmann::ordered_json entry;
    entry["seed"] = scorecard.seeds[i];
    entry["blockSize"] = curve.block_size;
    nlohmann::ordered_json means = nlohmann::ordered_json::array();
    nlohmann::ordered_json errors = nlohmann::ordered_json::array();
    for (long long b = 0; b < curve.mean_return.size(); ++b) {
      means.push_back(curve.mean_return[b]);
      errors.push_back(curve.stderr_return[b]);
    }
    entry["meanReturn"] = means;
    entry["stderrReturn"] = errors;
    curves.push_back(entry);
  }
  j["curves"] = curves;
  j["score"] = disent::score_report_json(scorecard.score);
  j["bisimulation"] = {{"stateCount", scorecard.state_count},
                       {"blockCount", scorecard.partition.block_count}};
  j["model"] = {{"learned", scorecard.model_learned},
                {"parentSets", scorecard.parent_sets}};
  j["draws"] = {{"egocentric", scorecard.egocentric_draws},
                {"social", scorecard.social_draws},
                {"natural", scorecard.natural_draws}};
  write_text_file((root / "scorecard.json").string(), dump_json17(j));

  std::string csv = "block";
  for (long long seed : scorecard.seeds) csv += ",seed" + std::to_string(seed);
  csv += '\n';
  const long long blocks =
      scorecard.curves.empty() ? 0 : scorecard.curves.front().mean_return.size();
  for (long long b = 0; b < blocks; ++b) {
    csv += std::to_string(b + 1);
    for (const agents::LearningCurve& curve : scorecard.curves) {
      csv += ',' + g17(curve.mean_return[b]);
    }
    csv += '\n';
  }
  write_text_file((root / "curves.csv").string(), csv);

  std::string mi;
  for (long long row = 0; row < scorecard.score.mi_matrix.rows(); ++row) {
    for (long long col = 0; col < scorecard.score.mi_matrix.cols(); ++col) {
      if (col > 0) mi += ',';
      mi += g17(scorecard.score.mi_matrix(row, col));
    }
    mi += '\n';
  }
  write_text_file((root / "mi_matrix.csv").string(), mi);

  nlohmann::ordered_json partition;
  partition["stateCount"] = scorecard.state_count;
  partition["blockCount"] = scorecard.partition.block_count;
  partition["blockOf"] = scorecard.partition.block_of;
  write_text_file((root / "partition.json").string(), dump_json17(partition));
}

namespace {

nlohmann::ordered_json parse_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& error) {
    fail(ErrorCode::ParseError, path + ": " + error.what());
  }
}

}  // namespace

Scorecard read_report(const std::string& directory) {
  const std::filesystem::path root(directory);
  const nlohmann::ordered_json j = parse_json_file((root / "scorecard.json").string());
  const nlohmann::ordered_json partition = parse_json_file((root / "partition.json").string());
  try {
    Scorecard card;
    card.task = j.at("task").get<std::string>();
    card.mode = j.at("mode").get<std::string>();
    card.representation = j.at("representation").get<std::string>();
    card.seeds = j.at("seeds").get<std::vector<long long>>();
    card.episodes = j.at("episodes").get<int>();
    card.eval_block = j.at("evalBlock").get<int>();
    const auto finals = j.at("finalReturns").get<std::vector<double>>();
    card.final_returns = Eigen::Map<const Eigen::VectorXd>(
        finals.data(), static_cast<long long>(finals.size()));
    card.final_mean = j.at("finalMean").get<double>();
    card.final_stderr = j.at("finalStderr").get<double>();
    for (const auto& entry : j.at("curves")) {
      agents::LearningCurve curve;
      curve.block_size = entry.at("blockSize").get<int>();
      const auto means = entry.at("meanReturn").get<std::vector<double>>();
      const auto errors = entry.at("stderrReturn").get<std::vector<double>>();
      curve.mean_return =
          Eigen::Map<const Eigen::VectorXd>(means.data(), static_cast<long long>(means.size()));
      curve.stderr_return = Eigen::Map<const Eigen::VectorXd>(
          errors.data(), static_cast<long long>(errors.size()));
      card.curves.push_back(std::move(curve));
    }
    const auto& score = j.at("score");
    const auto& matrix = score.at("miMatrix");
    const long long rows = static_cast<long long>(matrix.size());
    const long long cols = rows == 0 ? 0 : static_cast<long long>(matrix.at(0).size());
    card.score.mi_matrix.resize(rows, cols);
    for (long long r = 0; r < rows; ++r) {
      for (long long c = 0; c < cols; ++c) {
        card.score.mi_matrix(r, c) = matrix.at(static_cast<std::size_t>(r))
                                         .at(static_cast<std::size_t>(c))
                                         .get<double>();
      }
    }
    card.score.modularity_score = score.at("modularityScore").get<double>();
    card.score.informativeness_score = score.at("informativenessScore").get<double>();
    card.state_count = j.at("bisimulation").at("stateCount").get<long long>();
    card.model_learned = j.at("model").at("learned").get<bool>();
    card.parent_sets = j.at("model").at("parentSets").get<std::vector<std::vector<int>>>();
    card.egocentric_draws = j.at("draws").at("egocentric").get<long long>();
    card.social_draws = j.at("draws").at("social").get<long long>();
    card.natural_draws = j.at("draws").at("natural").get<long long>();
    card.partition.block_of = partition.at("blockOf").get<std::vector<int>>();
    card.partition.block_count = partition.at("blockCount").get<int>();
    return card;
  } catch (const nlohmann::json::exception& error) {
    fail(ErrorCode::ParseError, directory + ": " + error.what());
  }
}

disent::FactorCodeJoint joint_from_kv(const KvDocument& document) {
  const KvSection& section = document.require("joint");
  const auto read_axes = [&section](const char* key) {
    const std::string& text = section.require(key);
    std::vector<int> axes;
    try {
      axes = kv_int_list(text);
    } catch (const Error& error) {
      fail_field("joint", key, error.what());
    }
    if (axes.empty()) fail_field("joint", key, "at least one axis required");
    for (int card : axes) {
      if (card < 1) fail_field("joint", key, "axis cardinalities must be positive");
    }
    return axes;
  };
  disent::FactorCodeJoint joint;
  joint.factors = ProductSpace::of_cardinalities(read_axes("factors"));
  joint.codes = ProductSpace::of_cardinalities(read_axes("codes"));
  const std::string& probability_text = section.require("probabilities");
  std::vector<double> probabilities;
  try {
    probabilities = kv_double_list(probability_text);
  } catch (const Error& error) {
    fail_field("joint", "probabilities", error.what());
  }
  const long long expected = joint.factors.size() * joint.codes.size();
  if (static_cast<long long>(probabilities.size()) != expected) {
    fail_field("joint", "probabilities",
               "expected " + std::to_string(expected) + " values, got " +
                   std::to_string(probabilities.size()));
  }
  joint.probabilities = Eigen::Map<const Eigen::VectorXd>(probabilities.data(), expected);
  return joint;
}

}  // namespace scmrl::experiment
