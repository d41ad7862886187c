#include "scmrl/env.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "scmrl/kv_format.hpp"

namespace scmrl::env {

namespace {

constexpr double kRowTolerance = 1e-12;
constexpr double kBeliefTolerance = 1e-9;

void check_state_action(const Mdp& mdp, long long state, int action) {
  if (state < 0 || state >= mdp.states.size())
    fail(ErrorCode::OutOfRange, "state index " + std::to_string(state) + " out of range");
  if (action < 0 || action >= mdp.action_count)
    fail(ErrorCode::OutOfRange, "action index " + std::to_string(action) + " out of range");
}

void check_stochastic(const Eigen::MatrixXd& rows, const std::string& what) {
  for (long long r = 0; r < rows.rows(); ++r) {
    if (rows.row(r).minCoeff() < 0.0)
      fail(ErrorCode::Unnormalized, what + " row " + std::to_string(r) + " has a negative entry");
    if (std::abs(rows.row(r).sum() - 1.0) > kRowTolerance)
      fail(ErrorCode::Unnormalized, what + " row " + std::to_string(r) + " does not sum to 1");
  }
}

}  // namespace

void validate_mdp(const Mdp& mdp) {
  if (mdp.states.rank() == 0 || mdp.states.size() < 1)
    fail(ErrorCode::DomainMismatch, "state space is empty");
  if (mdp.action_count < 1) fail(ErrorCode::DomainMismatch, "need at least one action");
  const long long size = mdp.states.size();
  if (static_cast<long long>(mdp.transition.size()) != mdp.action_count)
    fail(ErrorCode::DomainMismatch, "one transition matrix per action required");
  for (int a = 0; a < mdp.action_count; ++a) {
    if (mdp.transition[a].rows() != size || mdp.transition[a].cols() != size)
      fail(ErrorCode::DomainMismatch, "transition matrix shape mismatch for action " + std::to_string(a));
    check_stochastic(mdp.transition[a], "transition (action " + std::to_string(a) + ")");
  }
  if (mdp.reward.rows() != size || mdp.reward.cols() != mdp.action_count)
    fail(ErrorCode::DomainMismatch, "reward table shape mismatch");
  if (!(mdp.discount >= 0.0 && mdp.discount < 1.0))
    fail(ErrorCode::OutOfRange, "discount must lie in [0, 1)");
  if (mdp.start.size() != size) fail(ErrorCode::DomainMismatch, "start distribution size mismatch");
  if (mdp.start.minCoeff() < 0.0) fail(ErrorCode::Unnormalized, "start distribution has a negative entry");
  if (std::abs(mdp.start.sum() - 1.0) > kBeliefTolerance)
    fail(ErrorCode::Unnormalized, "start distribution does not sum to 1");
}

void validate_pomdp(const Pomdp& pomdp) {
  validate_mdp(pomdp.base);
  if (pomdp.observation_count < 1) fail(ErrorCode::DomainMismatch, "need at least one observation");
  if (pomdp.measurement.rows() != pomdp.base.states.size() ||
      pomdp.measurement.cols() != pomdp.observation_count)
    fail(ErrorCode::DomainMismatch, "measurement shape mismatch");
  check_stochastic(pomdp.measurement, "measurement");
  if (pomdp.observation_features.rows() != pomdp.observation_count)
    fail(ErrorCode::DomainMismatch, "one feature row per observation required");
}

Pomdp build_dispenser_task(double obstruction_flip_prob, bool confound_weight) {
  if (!(obstruction_flip_prob >= 0.0 && obstruction_flip_prob <= 1.0))
    fail(ErrorCode::OutOfRange, "obstruction flip probability must lie in [0, 1]");

  const int rank = confound_weight ? 5 : 4;
  Mdp mdp;
  mdp.states = ProductSpace::of_cardinalities(std::vector<int>(rank, 2));
  mdp.action_count = 4;
  mdp.discount = 0.95;
  const long long size = mdp.states.size();
  mdp.transition.assign(4, Eigen::MatrixXd::Zero(size, size));
  mdp.reward = Eigen::MatrixXd::Zero(size, 4);

  for (long long s = 0; s < size; ++s) {
    const std::vector<int> now = mdp.states.unflatten(s);
    const int button = now[dispenser::kButton];
    const int mechanism = now[dispenser::kMechanism];
    const int obstruction = now[dispenser::kObstruction];
    const int food = now[dispenser::kFood];
    const int weight = confound_weight ? now[dispenser::kWeight] : 1;
    for (int a = 0; a < 4; ++a) {
      std::vector<int> next = now;
      next[dispenser::kButton] = a == dispenser::kPress ? 1 : 0;
      next[dispenser::kMechanism] = (button == 1 && weight == 1) ? 1 : 0;
      next[dispenser::kFood] = (mechanism == 1 && obstruction == 0) ? 1 : 0;
      // Obstruction: removed by `clear`, otherwise flips with the given
      // probability.
      if (a == dispenser::kClear) {
        next[dispenser::kObstruction] = 0;
        mdp.transition[a](s, mdp.states.flatten(next)) += 1.0;
      } else {
        next[dispenser::kObstruction] = obstruction;
        mdp.transition[a](s, mdp.states.flatten(next)) += 1.0 - obstruction_flip_prob;
        next[dispenser::kObstruction] = 1 - obstruction;
        mdp.transition[a](s, mdp.states.flatten(next)) += obstruction_flip_prob;
      }
      mdp.reward(s, a) = (a == dispenser::kReach && food == 1) ? 1.0 : 0.0;
    }
  }

  mdp.start = Eigen::VectorXd::Zero(size);
  if (confound_weight) {
    // Hidden weight drawn uniformly at episode start, visible factors zero.
    mdp.start[mdp.states.flatten({0, 0, 0, 0, 0})] = 0.5;
    mdp.start[mdp.states.flatten({0, 0, 0, 0, 1})] = 0.5;
  } else {
    mdp.start[mdp.states.flatten({0, 0, 0, 0})] = 1.0;
  }

  Pomdp pomdp;
  pomdp.base = std::move(mdp);
  // Observation = visible factor tuple crossed with a uniform distractor
  // bit; the hidden weight never reaches the measurement map.
  pomdp.observation_count = 32;
  pomdp.measurement = Eigen::MatrixXd::Zero(size, 32);
  for (long long s = 0; s < size; ++s) {
    const std::vector<int> now = pomdp.base.states.unflatten(s);
    const int visible = ((now[0] * 2 + now[1]) * 2 + now[2]) * 2 + now[3];
    pomdp.measurement(s, visible * 2) = 0.5;
    pomdp.measurement(s, visible * 2 + 1) = 0.5;
  }
  // Features: visible bits through an orthonormal mixing (so no channel is a
  // single factor) plus a 0.3-amplitude distractor channel.
  Eigen::Matrix4d mix;
  mix << 1, 1, 1, 1, 1, 1, -1, -1, 1, -1, 1, -1, 1, -1, -1, 1;
  mix *= 0.5;
  pomdp.observation_features = Eigen::MatrixXd::Zero(32, dispenser::kFeatureDim);
  for (int obs = 0; obs < 32; ++obs) {
    const int visible = obs / 2;
    const int noise = obs % 2;
    Eigen::Vector4d bits(double((visible >> 3) & 1), double((visible >> 2) & 1),
                         double((visible >> 1) & 1), double(visible & 1));
    pomdp.observation_features.block<1, 4>(obs, 0) = (mix * bits).transpose();
    pomdp.observation_features(obs, 4) = 0.3 * noise;
  }
  return pomdp;
}

Mdp build_trap_tube_task(int length, bool trap_effective) {
  if (length < 3) fail(ErrorCode::OutOfRange, "tube length must be at least 3");

  Mdp mdp;
  mdp.states = ProductSpace::of_cardinalities({length, length, 2, 2});
  mdp.action_count = 2;
  mdp.discount = 0.95;
  const long long size = mdp.states.size();
  mdp.transition.assign(2, Eigen::MatrixXd::Zero(size, size));
  mdp.reward = Eigen::MatrixXd::Zero(size, 2);

  for (long long s = 0; s < size; ++s) {
    const std::vector<int> now = mdp.states.unflatten(s);
    const int reward_pos = now[trap_tube::kRewardPos];
    const int trap_pos = now[trap_tube::kTrapPos];
    const int effective = now[trap_tube::kTrapEffective];
    const int done = now[trap_tube::kDone];
    for (int a = 0; a < 2; ++a) {
      std::vector<int> next = now;
      double reward = 0.0;
      if (done == 0) {
        const int moved = reward_pos + (a == trap_tube::kPushLeft ? -1 : 1);
        if (moved < 0 || moved >= length) {
          reward = 1.0;  // pushed out of the tube
          next[trap_tube::kDone] = 1;
        } else if (moved == trap_pos && effective == 1) {
          next[trap_tube::kRewardPos] = moved;  // falls into the trap
          next[trap_tube::kDone] = 1;
        } else {
          next[trap_tube::kRewardPos] = moved;
        }
      }
      mdp.transition[a](s, mdp.states.flatten(next)) = 1.0;
      mdp.reward(s, a) = reward;
    }
  }

  mdp.start = Eigen::VectorXd::Zero(size);
  const int placements = length * (length - 1);
  for (int reward_pos = 0; reward_pos < length; ++reward_pos)
    for (int trap_pos = 0; trap_pos < length; ++trap_pos)
      if (reward_pos != trap_pos)
        mdp.start[mdp.states.flatten({reward_pos, trap_pos, trap_effective ? 1 : 0, 0})] =
            1.0 / double(placements);
  return mdp;
}

long long sample_start(const Mdp& mdp, Rng& rng) { return rng.next_discrete(mdp.start); }

std::pair<long long, double> step(const Mdp& mdp, long long state, int action, Rng& rng) {
  check_state_action(mdp, state, action);
  const double reward = mdp.reward(state, action);
  const long long next = rng.next_discrete(mdp.transition[action].row(state).transpose());
  return {next, reward};
}

std::pair<long long, double> step(const Mdp& mdp, long long state, int action,
                                  std::uint64_t seed) {
  Rng rng(seed);
  return step(mdp, state, action, rng);
}

int sample_observation(const Pomdp& pomdp, long long state, Rng& rng) {
  if (state < 0 || state >= pomdp.base.states.size())
    fail(ErrorCode::OutOfRange, "state index out of range");
  return rng.next_discrete(pomdp.measurement.row(state).transpose());
}

BeliefState belief_update(const Pomdp& pomdp, const BeliefState& belief, int action,
                          int observation) {
  check_state_action(pomdp.base, 0, action);
  if (observation < 0 || observation >= pomdp.observation_count)
    fail(ErrorCode::OutOfRange, "observation index out of range");
  if (belief.probabilities.size() != pomdp.base.states.size())
    fail(ErrorCode::DomainMismatch, "belief size mismatch");
  if (belief.probabilities.minCoeff() < 0.0 ||
      std::abs(belief.probabilities.sum() - 1.0) > kBeliefTolerance)
    fail(ErrorCode::Unnormalized, "belief is not a distribution");

  // b'(s') ∝ M(s', o) Σ_s T_a(s, s') b(s)
  const Eigen::VectorXd predicted =
      pomdp.base.transition[action].transpose() * belief.probabilities;
  const Eigen::VectorXd weighted = predicted.cwiseProduct(pomdp.measurement.col(observation));
  const double likelihood = weighted.sum();
  if (!(likelihood > 0.0))
    fail(ErrorCode::ZeroLikelihood, "observation has zero probability under the predicted belief");
  return BeliefState{weighted / likelihood};
}

Partition bisimulation_partition(const Mdp& mdp) {
  validate_mdp(mdp);
  const long long size = mdp.states.size();
  const auto quantize = [](double x) { return std::llround(x * 1e9); };

  // Initial blocks: quantized reward signature across actions.
  std::vector<int> block(size);
  int block_count = 0;
  {
    std::map<std::vector<long long>, int> ids;
    for (long long s = 0; s < size; ++s) {
      std::vector<long long> signature;
      for (int a = 0; a < mdp.action_count; ++a) signature.push_back(quantize(mdp.reward(s, a)));
      block[s] = ids.emplace(signature, int(ids.size())).first->second;
    }
    block_count = int(ids.size());
  }

  // Refine by (own block, per-action mass into every block) until stable.
  // Refinement only splits, so a pass keeping the count fixed is a fixpoint.
  while (true) {
    std::map<std::vector<long long>, int> ids;
    std::vector<int> refined(size);
    for (long long s = 0; s < size; ++s) {
      std::vector<long long> signature{block[s]};
      for (int a = 0; a < mdp.action_count; ++a) {
        std::vector<double> mass(block_count, 0.0);
        for (long long t = 0; t < size; ++t) mass[block[t]] += mdp.transition[a](s, t);
        for (double m : mass) signature.push_back(quantize(m));
      }
      refined[s] = ids.emplace(signature, int(ids.size())).first->second;
    }
    const int refined_count = int(ids.size());
    block = std::move(refined);
    if (refined_count == block_count) break;
    block_count = refined_count;
  }

  // Canonical ids: number blocks by smallest member.
  Partition partition;
  partition.block_of.assign(size, -1);
  std::vector<int> rename(block_count, -1);
  int next_id = 0;
  for (long long s = 0; s < size; ++s) {
    if (rename[block[s]] < 0) rename[block[s]] = next_id++;
    partition.block_of[s] = rename[block[s]];
  }
  partition.block_count = next_id;
  return partition;
}

namespace {

// A parent candidate: either a previous-step factor axis or the action.
struct Candidate {
  bool is_action = false;
  int axis = 0;
};

int candidate_value(const Candidate& candidate, const TransitionRecord& record) {
  return candidate.is_action ? *record.action : record.state[candidate.axis];
}

int candidate_cardinality(const Candidate& candidate, const ProductSpace& factors,
                          int action_count) {
  return candidate.is_action ? action_count : factors.axes[candidate.axis].cardinality;
}

// Plug-in conditional mutual information I(Y; C | chosen) in nats from the
// dataset, with Y the next value of factor `target`.
double conditional_mi(const std::vector<TransitionRecord>& data, const ProductSpace& factors,
                      int action_count, int target, const std::vector<Candidate>& chosen,
                      const Candidate& candidate) {
  long long context_size = 1;
  for (const Candidate& c : chosen) context_size *= candidate_cardinality(c, factors, action_count);
  const int c_card = candidate_cardinality(candidate, factors, action_count);
  const int y_card = factors.axes[target].cardinality;

  std::vector<double> counts(size_t(context_size) * c_card * y_card, 0.0);
  for (const TransitionRecord& record : data) {
    long long context = 0;
    for (const Candidate& c : chosen)
      context = context * candidate_cardinality(c, factors, action_count) + candidate_value(c, record);
    const long long cell = (context * c_card + candidate_value(candidate, record)) * y_card +
                           record.next[target];
    counts[size_t(cell)] += 1.0;
  }

  const double total = double(data.size());
  double mi = 0.0;
  for (long long context = 0; context < context_size; ++context) {
    double n_context = 0.0;
    std::vector<double> n_c(c_card, 0.0), n_y(y_card, 0.0);
    for (int c = 0; c < c_card; ++c)
      for (int y = 0; y < y_card; ++y) {
        const double n = counts[size_t((context * c_card + c) * y_card + y)];
        n_context += n;
        n_c[c] += n;
        n_y[y] += n;
      }
    if (n_context == 0.0) continue;
    for (int c = 0; c < c_card; ++c)
      for (int y = 0; y < y_card; ++y) {
        const double n = counts[size_t((context * c_card + c) * y_card + y)];
        if (n > 0.0) mi += (n / total) * std::log(n * n_context / (n_c[c] * n_y[y]));
      }
  }
  return std::max(mi, 0.0);
}

}  // namespace

FactoredTransition learn_factored_dynamics(const ProductSpace& factors, int action_count,
                                           const std::vector<TransitionRecord>& data,
                                           double threshold) {
  if (data.empty()) fail(ErrorCode::Empty, "no transitions to learn from");
  const int rank = factors.rank();
  for (const TransitionRecord& record : data) {
    // flatten() range-checks every axis value.
    if (int(record.state.size()) != rank || int(record.next.size()) != rank)
      fail(ErrorCode::DomainMismatch, "record arity does not match the factor space");
    factors.flatten(record.state);
    factors.flatten(record.next);
    if (action_count > 0) {
      if (!record.action.has_value())
        fail(ErrorCode::DomainMismatch, "record lacks an action but actions were declared");
      if (*record.action < 0 || *record.action >= action_count)
        fail(ErrorCode::OutOfRange, "action index out of range in record");
    } else if (record.action.has_value()) {
      fail(ErrorCode::DomainMismatch, "action present in action-free data");
    }
  }

  FactoredTransition model;
  model.factors = factors;
  model.action_count = action_count;
  model.mechanisms.resize(rank);

  std::vector<Candidate> all_candidates;
  for (int axis = 0; axis < rank; ++axis) all_candidates.push_back({false, axis});
  if (action_count > 0) all_candidates.push_back({true, 0});

  for (int target = 0; target < rank; ++target) {
    std::vector<Candidate> chosen;
    std::vector<bool> taken(all_candidates.size(), false);
    while (true) {
      int best = -1;
      double best_gain = threshold;
      for (size_t i = 0; i < all_candidates.size(); ++i) {
        if (taken[i]) continue;
        const double gain =
            conditional_mi(data, factors, action_count, target, chosen, all_candidates[i]);
        if (gain > best_gain) {
          best_gain = gain;
          best = int(i);
        }
      }
      if (best < 0) break;
      taken[size_t(best)] = true;
      chosen.push_back(all_candidates[size_t(best)]);
      // Canonical input order: factor axes ascending, action last.
      std::sort(chosen.begin(), chosen.end(), [](const Candidate& a, const Candidate& b) {
        if (a.is_action != b.is_action) return b.is_action;
        return a.axis < b.axis;
      });
    }

    FactorMechanism& mechanism = model.mechanisms[size_t(target)];
    long long row_count = 1;
    for (const Candidate& c : chosen) {
      row_count *= candidate_cardinality(c, factors, action_count);
      if (c.is_action)
        mechanism.action_parent = true;
      else
        mechanism.factor_parents.push_back(c.axis);
    }
    const int y_card = factors.axes[target].cardinality;
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(row_count, y_card);
    for (const TransitionRecord& record : data) {
      long long row = 0;
      for (const Candidate& c : chosen)
        row = row * candidate_cardinality(c, factors, action_count) + candidate_value(c, record);
      counts(row, record.next[target]) += 1.0;
    }
    // Add-1 Laplace smoothing keeps every row a proper distribution.
    mechanism.table = Eigen::MatrixXd(row_count, y_card);
    for (long long r = 0; r < row_count; ++r) {
      const double row_total = counts.row(r).sum();
      for (int y = 0; y < y_card; ++y)
        mechanism.table(r, y) = (counts(r, y) + 1.0) / (row_total + double(y_card));
    }
  }
  return model;
}

Eigen::VectorXd predict_row(const FactoredTransition& model, const std::vector<int>& state,
                            std::optional<int> action) {
  const int rank = model.factors.rank();
  if (int(state.size()) != rank) fail(ErrorCode::DomainMismatch, "state arity mismatch");
  model.factors.flatten(state);
  if (model.action_count > 0) {
    if (!action.has_value()) fail(ErrorCode::DomainMismatch, "model expects an action");
    if (*action < 0 || *action >= model.action_count)
      fail(ErrorCode::OutOfRange, "action index out of range");
  } else if (action.has_value()) {
    fail(ErrorCode::DomainMismatch, "model was learned without actions");
  }

  Eigen::VectorXd row(model.factors.size());
  for (long long next = 0; next < model.factors.size(); ++next) {
    const std::vector<int> tuple = model.factors.unflatten(next);
    double probability = 1.0;
    for (int j = 0; j < rank; ++j) {
      const FactorMechanism& mechanism = model.mechanisms[size_t(j)];
      long long index = 0;
      for (int parent : mechanism.factor_parents)
        index = index * model.factors.axes[parent].cardinality + state[size_t(parent)];
      if (mechanism.action_parent) index = index * model.action_count + *action;
      probability *= mechanism.table(index, tuple[size_t(j)]);
    }
    row[next] = probability;
  }
  return row;
}

std::string format_transitions(const std::vector<TransitionRecord>& records) {
  std::ostringstream out;
  for (const TransitionRecord& record : records) {
    for (size_t i = 0; i < record.state.size(); ++i) out << (i ? " " : "") << record.state[i];
    out << " | ";
    if (record.action.has_value())
      out << *record.action;
    else
      out << "-";
    out << " | ";
    for (size_t i = 0; i < record.next.size(); ++i) out << (i ? " " : "") << record.next[i];
    out << "\n";
  }
  return out.str();
}

namespace {

std::vector<int> parse_int_tuple(const std::string& text, int line_number) {
  std::istringstream in(text);
  std::vector<int> values;
  std::string token;
  while (in >> token) {
    try {
      size_t used = 0;
      const int value = std::stoi(token, &used);
      if (used != token.size()) throw std::invalid_argument(token);
      values.push_back(value);
    } catch (const std::exception&) {
      fail(ErrorCode::ParseError,
           "line " + std::to_string(line_number) + ": bad integer '" + token + "'");
    }
  }
  return values;
}

}  // namespace

std::vector<TransitionRecord> parse_transitions(const std::string& text) {
  std::vector<TransitionRecord> records;
  std::istringstream in(text);
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const size_t first = line.find('|');
    const size_t second = first == std::string::npos ? std::string::npos : line.find('|', first + 1);
    if (second == std::string::npos)
      fail(ErrorCode::ParseError,
           "line " + std::to_string(line_number) + ": expected 'state | action | next'");
    TransitionRecord record;
    record.state = parse_int_tuple(line.substr(0, first), line_number);
    record.next = parse_int_tuple(line.substr(second + 1), line_number);
    std::istringstream middle(line.substr(first + 1, second - first - 1));
    std::string token;
    middle >> token;
    if (token.empty())
      fail(ErrorCode::ParseError, "line " + std::to_string(line_number) + ": missing action column");
    if (token != "-") record.action = parse_int_tuple(token, line_number).at(0);
    records.push_back(std::move(record));
  }
  return records;
}

void write_transitions(const std::string& path, const std::vector<TransitionRecord>& records) {
  write_text_file(path, format_transitions(records));
}

std::vector<TransitionRecord> read_transitions(const std::string& path) {
  return parse_transitions(read_text_file(path));
}

std::vector<TransitionRecord> collect_random_transitions(const Mdp& mdp, int count,
                                                         int episode_length,
                                                         std::uint64_t seed) {
  if (count < 0) fail(ErrorCode::OutOfRange, "negative transition count");
  if (episode_length < 1) fail(ErrorCode::OutOfRange, "episode length must be positive");
  Rng rng(seed);
  std::vector<TransitionRecord> records;
  records.reserve(size_t(count));
  long long state = sample_start(mdp, rng);
  int steps = 0;
  for (int i = 0; i < count; ++i) {
    const int action = rng.next_below(mdp.action_count);
    const auto [next, reward] = step(mdp, state, action, rng);
    (void)reward;
    records.push_back({mdp.states.unflatten(state), action, mdp.states.unflatten(next)});
    state = next;
    if (++steps == episode_length) {
      state = sample_start(mdp, rng);
      steps = 0;
    }
  }
  return records;
}

std::vector<TransitionRecord> strip_actions(const std::vector<TransitionRecord>& records) {
  std::vector<TransitionRecord> stripped = records;
  for (TransitionRecord& record : stripped) record.action.reset();
  return stripped;
}

}  // namespace scmrl::env
