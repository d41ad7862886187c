// Command-line front end for the experiment pipeline.
//
//   scmrl run <config> --out <dir>      execute an experiment, write reports
//   scmrl compare <dir>... --metric <m> paired bootstrap over emitted reports
//   scmrl oracle <taskconfig>           exact planning values for a task
//   scmrl score --joint <file>          disentanglement scores of a joint table
//
// Exit codes: 0 success, 2 configuration/usage error, 3 I/O error.
// All floats are serialized with 17 significant digits.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "scmrl/disentangle.hpp"
#include "scmrl/error.hpp"
#include "scmrl/experiment.hpp"
#include "scmrl/json_out.hpp"
#include "scmrl/kv_format.hpp"

namespace {

namespace experiment = scmrl::experiment;

int run_verb(const std::string& config_path, const std::string& out_dir) {
  const experiment::ExperimentConfig config = experiment::read_experiment_config(config_path);
  const experiment::Scorecard card = experiment::run_experiment(config);
  experiment::emit_report(card, out_dir);
  std::cout << "task " << card.task << '\n'
            << "mode " << card.mode << " representation " << card.representation << '\n'
            << "final_mean " << scmrl::g17(card.final_mean) << " final_stderr "
            << scmrl::g17(card.final_stderr) << '\n'
            << "wrote " << out_dir << '\n';
  return 0;
}

experiment::ComparisonMetric parse_metric(const std::string& token) {
  if (token == "finalReturn") return experiment::ComparisonMetric::FinalReturn;
  if (token == "episodesToThreshold") return experiment::ComparisonMetric::EpisodesToThreshold;
  scmrl::fail(scmrl::ErrorCode::ConfigError,
              "unknown metric '" + token + "' (finalReturn or episodesToThreshold)");
}

int compare_verb(const std::vector<std::string>& directories, const std::string& metric_token,
                 double threshold) {
  const experiment::ComparisonMetric metric = parse_metric(metric_token);
  std::vector<experiment::Scorecard> cards;
  cards.reserve(directories.size());
  for (const std::string& directory : directories) {
    cards.push_back(experiment::read_report(directory));
  }
  const experiment::ComparisonReport report =
      experiment::compare_agents(cards, metric, threshold);

  nlohmann::ordered_json j;
  j["metric"] = experiment::comparison_metric_name(report.metric);
  j["threshold"] = report.threshold;
  j["inputs"] = directories;
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (const experiment::PairComparison& pair : report.pairs) {
    nlohmann::ordered_json entry;
    entry["first"] = pair.first;
    entry["second"] = pair.second;
    entry["meanDifference"] = pair.mean_difference;
    entry["ciLow"] = pair.ci_low;
    entry["ciHigh"] = pair.ci_high;
    entry["significant"] = pair.significant;
    pairs.push_back(entry);
  }
  j["pairs"] = pairs;
  std::cout << scmrl::dump_json17(j) << '\n';
  return 0;
}

int oracle_verb(const std::string& task_path, double tolerance) {
  const experiment::TaskSpec task =
      experiment::parse_task_spec(scmrl::read_kv_file(task_path));
  const scmrl::env::Mdp mdp = experiment::build_task_mdp(task);
  const experiment::PlanningOracle oracle =
      experiment::value_iteration_oracle(mdp, tolerance);

  nlohmann::ordered_json j;
  j["task"] = experiment::task_summary(task);
  j["tolerance"] = tolerance;
  j["sweeps"] = oracle.sweeps;
  nlohmann::ordered_json values = nlohmann::ordered_json::array();
  for (long long s = 0; s < oracle.values.values.size(); ++s) {
    values.push_back(oracle.values.values[s]);
  }
  j["values"] = values;
  j["greedy"] = oracle.greedy;
  std::cout << scmrl::dump_json17(j) << '\n';
  return 0;
}

int score_verb(const std::string& joint_path) {
  const scmrl::disent::FactorCodeJoint joint =
      experiment::joint_from_kv(scmrl::read_kv_file(joint_path));
  const scmrl::disent::ScoreReport report = scmrl::disent::score_disentanglement(joint);
  std::cout << scmrl::dump_json17(scmrl::disent::score_report_json(report)) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite causal-task experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  CLI::App* run = app.add_subcommand("run", "Execute an experiment config and write reports");
  run->add_option("config", config_path, "experiment config (sectioned key-value file)")
      ->required();
  run->add_option("--out", out_dir, "report directory (created on demand)")->required();

  std::vector<std::string> directories;
  std::string metric_token = "finalReturn";
  double threshold = 0.0;
  CLI::App* compare =
      app.add_subcommand("compare", "Paired bootstrap comparison of emitted reports");
  compare->add_option("dirs", directories, "two or more report directories")
      ->required()
      ->expected(-2);
  compare->add_option("--metric", metric_token, "finalReturn or episodesToThreshold");
  compare->add_option("--threshold", threshold,
                      "return level for episodesToThreshold (default 0)");

  std::string task_path;
  double tolerance = 1e-10;
  CLI::App* oracle =
      app.add_subcommand("oracle", "Exact planning values for a task ([task] section)");
  oracle->add_option("taskconfig", task_path, "key-value file naming the task")->required();
  oracle->add_option("--tolerance", tolerance, "sup-norm stopping change (default 1e-10)");

  std::string joint_path;
  CLI::App* score =
      app.add_subcommand("score", "Disentanglement scores of a factor/code joint table");
  score->add_option("--joint", joint_path, "key-value file with a [joint] section")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& error) {
    const int code = app.exit(error);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) return run_verb(config_path, out_dir);
    if (compare->parsed()) return compare_verb(directories, metric_token, threshold);
    if (oracle->parsed()) return oracle_verb(task_path, tolerance);
    return score_verb(joint_path);
  } catch (const scmrl::Error& error) {
    std::cerr << "error: " << error.what() << '\n';
    return error.code() == scmrl::ErrorCode::IoError ? 3 : 2;
  }
}
