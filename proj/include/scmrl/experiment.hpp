#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scmrl/agents.hpp"
#include "scmrl/disentangle.hpp"
#include "scmrl/env.hpp"
#include "scmrl/kv_format.hpp"
#include "scmrl/replay.hpp"

namespace scmrl::experiment {

// Which task a config refers to, plus its parameters. Exactly one family's
// parameters apply.
struct TaskSpec {
  std::string name;  // "trap_tube" or "dispenser"
  // trap_tube
  int length = 5;
  bool trap_effective = true;
  // dispenser
  double flip_prob = 0.1;
  bool confound = false;
};

// Full experiment description, parsed from a flat sectioned key-value file
// ([task], [run], [sources], [vae], [thresholds]; all keys optional except
// task.name, run.seeds, run.episodes). Unknown sections or keys are
// ConfigError — configs are the reproducibility record, typos must not pass.
struct ExperimentConfig {
  TaskSpec task;
  agents::Representation representation = agents::Representation::Raw;
  replay::IntegrationMode mode = replay::IntegrationMode::EgoOnly;
  double ego_weight = 1.0;
  double social_weight = 1.0;
  std::vector<long long> seeds;
  int episodes = 0;
  int max_steps = 20;
  int batch_size = 10;
  int eval_block = 100;
  double policy_step = 0.05;
  long long buffer_capacity = 1000;
  // Social/natural data generation (shared across seeds; data_seed keeps the
  // datasets reproducible and independent of the run seeds).
  int demo_episodes = 20;
  int demo_horizon = 6;
  double demo_epsilon = 0.25;  // expert softening: uniform action w.p. eps
  int natural_transitions = 5000;
  int natural_episode_length = 25;
  long long data_seed = 1;
  agents::VaeTrainConfig vae;  // used only for the learned_codes representation
  double cmi_threshold = 0.01;
  std::optional<double> is_clip = 10.0;  // "none" disables clipping
};

const char* representation_name(agents::Representation representation);

ExperimentConfig parse_experiment_config(const KvDocument& document);
ExperimentConfig read_experiment_config(const std::string& path);
// The [task] section alone (strict keys, fields validated) — for documents
// that only name a task, e.g. planning-oracle inputs.
TaskSpec parse_task_spec(const KvDocument& document);
// Canonical document for the config (defaults materialized).
KvDocument experiment_config_kv(const ExperimentConfig& config);

// Raises ConfigError naming "[section] key" for the offending field.
void validate_experiment_config(const ExperimentConfig& config);

// Canonical one-line task identity, used for comparison compatibility.
std::string task_summary(const TaskSpec& task);

// Everything one experiment produced. `curves` has one entry per seed and
// exactly episodes / eval_block blocks each.
struct Scorecard {
  std::string task;            // task_summary of the config
  std::string mode;            // integration_mode_name
  std::string representation;  // representation_name
  std::vector<long long> seeds;
  int episodes = 0;
  int eval_block = 0;
  std::vector<agents::LearningCurve> curves;
  Eigen::VectorXd final_returns;  // last-block mean per seed
  double final_mean = 0.0;
  double final_stderr = 0.0;  // across seeds (0 for a single seed)
  disent::ScoreReport score;  // representation scored under the uniform state measure
  long long state_count = 0;
  env::Partition partition;  // bisimulation of the task MDP
  bool model_learned = false;
  std::vector<std::vector<int>> parent_sets;  // per factor axis, when learned
  long long egocentric_draws = 0;  // trajectories consumed by gradient/value batches
  long long social_draws = 0;
  long long natural_draws = 0;  // observational records consumed by model learning
};

// Executes the per-seed runs for the config and aggregates the scorecard.
// EgoOnly delegates to agents::train_actor_critic unchanged (identity);
// social modes mix importance-corrected demonstration gradients into each
// update; natural modes first learn a factored model from action-free data.
// Deterministic in the config (including seeds).
Scorecard run_experiment(const ExperimentConfig& config);

struct PlanningOracle {
  agents::ValueTable values;
  std::vector<int> greedy;  // per state; ties broken by smallest action
  int sweeps = 0;
};

// Exact value iteration to sup-norm change < tolerance.
PlanningOracle value_iteration_oracle(const env::Mdp& mdp, double tolerance);

// The MDP a task spec plans over (the base MDP for partially observed tasks).
env::Mdp build_task_mdp(const TaskSpec& task);

enum class ComparisonMetric { FinalReturn, EpisodesToThreshold };

const char* comparison_metric_name(ComparisonMetric metric);

struct PairComparison {
  int first = 0;  // scorecard indices
  int second = 0;
  double mean_difference = 0.0;  // mean over seeds of metric[first] − metric[second]
  double ci_low = 0.0;           // paired bootstrap 95% interval
  double ci_high = 0.0;
  bool significant = false;  // interval excludes 0
};

struct ComparisonReport {
  ComparisonMetric metric = ComparisonMetric::FinalReturn;
  double threshold = 0.0;
  std::vector<PairComparison> pairs;  // all index pairs, first < second
};

// Paired per-seed comparison with a 10^4-resample bootstrap. The scorecards
// must describe the same task and the same seed list (TaskMismatch).
// `threshold` applies to EpisodesToThreshold only: the per-seed metric is
// the episode count after the first curve block whose mean reaches it
// (the full budget when never reached).
ComparisonReport compare_agents(const std::vector<Scorecard>& scorecards, ComparisonMetric metric,
                                double threshold = 0.0);

// Writes curves.csv, scorecard.json, mi_matrix.csv, partition.json into the
// directory (created on demand); bytes are a pure function of the scorecard.
void emit_report(const Scorecard& scorecard, const std::string& directory);

// Rebuilds the scorecard from an emitted directory, field-for-field equal.
Scorecard read_report(const std::string& directory);

// Factor/code joint table from a key-value document ([joint] with factors,
// codes, probabilities — row-major, code axes fastest).
disent::FactorCodeJoint joint_from_kv(const KvDocument& document);

}  // namespace scmrl::experiment
