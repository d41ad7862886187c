#include "scmrl/scm.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>
#include <string>

#include "scmrl/json_out.hpp"
#include "scmrl/kv_format.hpp"

namespace scmrl::scm {

namespace {

constexpr long long kMaxAtoms = 10'000'000;

void check_noise(const NoiseSpec& noise, const std::string& label) {
  if (noise.domain.cardinality < 1) fail(ErrorCode::IncompleteTable, label + ": empty noise domain");
  if (noise.probabilities.size() != noise.domain.cardinality)
    fail(ErrorCode::UnnormalizedNoise,
         label + ": " + std::to_string(noise.probabilities.size()) + " probabilities for " +
             std::to_string(noise.domain.cardinality) + " values");
  for (int i = 0; i < noise.probabilities.size(); ++i)
    if (!(noise.probabilities[i] >= 0.0))
      fail(ErrorCode::UnnormalizedNoise, label + ": negative probability at " + std::to_string(i));
  if (std::abs(noise.probabilities.sum() - 1.0) > 1e-12)
    fail(ErrorCode::UnnormalizedNoise, label + ": probabilities sum to " + g17(noise.probabilities.sum()));
}

// Assignments may arrive in any order; index them by target factor.
std::vector<const Assignment*> assignments_by_target(const Scm& model) {
  const int n = model.factor_count();
  if (static_cast<int>(model.assignments.size()) != n)
    fail(ErrorCode::IncompleteTable, std::to_string(model.assignments.size()) + " assignments for " +
                                         std::to_string(n) + " factors");
  std::vector<const Assignment*> by_target(n, nullptr);
  for (const auto& assignment : model.assignments) {
    if (assignment.target < 0 || assignment.target >= n)
      fail(ErrorCode::IncompleteTable, "assignment target S" + std::to_string(assignment.target) +
                                           " is not a factor index");
    if (by_target[assignment.target])
      fail(ErrorCode::IncompleteTable, "duplicate assignment for S" + std::to_string(assignment.target));
    by_target[assignment.target] = &assignment;
  }
  return by_target;
}

FiniteDomain parent_domain(const Scm& model, const VariableId& parent) {
  return parent.kind == VariableId::Kind::Factor ? model.factor_domains[parent.index]
                                                 : model.confounder_domains[parent.index];
}

// (parent values..., noise value), last axis fastest.
ProductSpace assignment_input_space(const Scm& model, const Assignment& assignment) {
  ProductSpace space;
  for (const auto& parent : assignment.parents) space.axes.push_back(parent_domain(model, parent));
  space.axes.push_back(model.factor_noises[assignment.target].domain);
  return space;
}

ProductSpace emission_input_space(const Scm& model) {
  ProductSpace space;
  space.axes = model.factor_domains;
  space.axes.push_back(model.obs_noise.domain);
  return space;
}

// Kahn's algorithm over factor-to-factor edges, ready set ordered by
// ascending factor index so the evaluation order is unique.
std::vector<int> factor_topo_order(const Scm& model, const std::vector<const Assignment*>& by_target) {
  const int n = model.factor_count();
  std::vector<std::vector<int>> children(n);
  std::vector<int> in_degree(n, 0);
  for (int j = 0; j < n; ++j) {
    for (const auto& parent : by_target[j]->parents) {
      if (parent.kind != VariableId::Kind::Factor) continue;
      children[parent.index].push_back(j);
      ++in_degree[j];
    }
  }
  std::priority_queue<int, std::vector<int>, std::greater<int>> ready;
  for (int j = 0; j < n; ++j)
    if (in_degree[j] == 0) ready.push(j);
  std::vector<int> order;
  order.reserve(n);
  while (!ready.empty()) {
    const int j = ready.top();
    ready.pop();
    order.push_back(j);
    for (int child : children[j])
      if (--in_degree[child] == 0) ready.push(child);
  }
  if (static_cast<int>(order.size()) != n)
    fail(ErrorCode::CyclicGraph, "factor assignments contain a cycle");
  return order;
}

std::vector<int> eval_factors(const Scm& model, const std::vector<const Assignment*>& by_target,
                              const std::vector<int>& order, const std::vector<int>& confounders,
                              const std::vector<int>& noises) {
  std::vector<int> factors(model.factor_count(), 0);
  std::vector<int> input;
  for (int j : order) {
    const Assignment& assignment = *by_target[j];
    input.clear();
    for (const auto& parent : assignment.parents)
      input.push_back(parent.kind == VariableId::Kind::Factor ? factors[parent.index]
                                                              : confounders[parent.index]);
    input.push_back(noises[j]);
    factors[j] = assignment.table[assignment_input_space(model, assignment).flatten(input)];
  }
  return factors;
}

// Odometer over a list of cardinalities; calls fn(tuple, probability) for
// every cell of the product of the given distributions.
template <typename Fn>
void for_each_atom(const std::vector<const NoiseSpec*>& dists, Fn&& fn) {
  std::vector<int> tuple(dists.size(), 0);
  while (true) {
    double probability = 1.0;
    for (std::size_t i = 0; i < dists.size(); ++i) probability *= dists[i]->probabilities[tuple[i]];
    fn(tuple, probability);
    int axis = static_cast<int>(dists.size()) - 1;
    while (axis >= 0) {
      if (++tuple[axis] < dists[axis]->domain.cardinality) break;
      tuple[axis] = 0;
      --axis;
    }
    if (axis < 0) break;
  }
}

}  // namespace

Dag validate_scm(const Scm& model) {
  const int n = model.factor_count();
  const int m = model.confounder_count();
  for (int j = 0; j < n; ++j)
    if (model.factor_domains[j].cardinality < 1)
      fail(ErrorCode::IncompleteTable, "S" + std::to_string(j) + " has empty domain");
  for (int k = 0; k < m; ++k)
    if (model.confounder_domains[k].cardinality < 1)
      fail(ErrorCode::IncompleteTable, "C" + std::to_string(k) + " has empty domain");
  if (model.obs_domain.cardinality < 1) fail(ErrorCode::IncompleteTable, "observable has empty domain");

  if (static_cast<int>(model.factor_noises.size()) != n)
    fail(ErrorCode::IncompleteTable, "need one noise spec per factor");
  if (static_cast<int>(model.confounder_dists.size()) != m)
    fail(ErrorCode::IncompleteTable, "need one distribution per confounder");
  for (int j = 0; j < n; ++j) check_noise(model.factor_noises[j], "noise of S" + std::to_string(j));
  for (int k = 0; k < m; ++k) {
    check_noise(model.confounder_dists[k], "distribution of C" + std::to_string(k));
    if (model.confounder_dists[k].domain != model.confounder_domains[k])
      fail(ErrorCode::IncompleteTable, "C" + std::to_string(k) + " distribution domain mismatch");
  }
  check_noise(model.obs_noise, "observation noise");

  const auto by_target = assignments_by_target(model);
  for (int j = 0; j < n; ++j) {
    const Assignment& assignment = *by_target[j];
    const std::string child = "S" + std::to_string(j);
    std::set<VariableId> seen;
    for (const auto& parent : assignment.parents) {
      if (parent.kind == VariableId::Kind::Observable)
        fail(ErrorCode::IllegalParent, child + ": observable cannot be a parent");
      if (parent.kind == VariableId::Kind::Factor) {
        if (parent.index < 0 || parent.index >= n)
          fail(ErrorCode::IllegalParent, child + ": unknown parent " + to_string(parent));
        if (parent.index == j) fail(ErrorCode::IllegalParent, child + ": self-parent");
      } else if (parent.index < 0 || parent.index >= m) {
        fail(ErrorCode::IllegalParent, child + ": unknown parent " + to_string(parent));
      }
      if (!seen.insert(parent).second)
        fail(ErrorCode::IllegalParent, child + ": duplicate parent " + to_string(parent));
    }
    const long long expected = assignment_input_space(model, assignment).size();
    if (static_cast<long long>(assignment.table.size()) != expected)
      fail(ErrorCode::IncompleteTable, child + ": table has " + std::to_string(assignment.table.size()) +
                                           " entries, expected " + std::to_string(expected));
    for (int value : assignment.table)
      if (value < 0 || value >= model.factor_domains[j].cardinality)
        fail(ErrorCode::IncompleteTable, child + ": table value " + std::to_string(value) + " out of domain");
  }

  const long long emission_size = emission_input_space(model).size();
  if (static_cast<long long>(model.emission.size()) != emission_size)
    fail(ErrorCode::IncompleteTable, "emission table has " + std::to_string(model.emission.size()) +
                                         " entries, expected " + std::to_string(emission_size));
  for (int value : model.emission)
    if (value < 0 || value >= model.obs_domain.cardinality)
      fail(ErrorCode::IncompleteTable, "emission value " + std::to_string(value) + " out of domain");

  Dag dag;
  dag.factor_order = factor_topo_order(model, by_target);
  for (int j = 0; j < n; ++j) dag.nodes.push_back({VariableId::Kind::Factor, j});
  for (int k = 0; k < m; ++k) dag.nodes.push_back({VariableId::Kind::Confounder, k});
  for (int j = 0; j < n; ++j)
    for (const auto& parent : by_target[j]->parents)
      dag.edges.insert({parent, VariableId{VariableId::Kind::Factor, j}});
  return dag;
}

SampleResult sample_scm(const Scm& model, Rng& rng) {
  const auto by_target = assignments_by_target(model);
  const auto order = factor_topo_order(model, by_target);
  SampleResult result;
  result.confounders.reserve(model.confounder_count());
  for (const auto& dist : model.confounder_dists)
    result.confounders.push_back(rng.next_discrete(dist.probabilities));
  std::vector<int> noises;
  noises.reserve(model.factor_count());
  for (const auto& noise : model.factor_noises) noises.push_back(rng.next_discrete(noise.probabilities));
  const int obs_noise = rng.next_discrete(model.obs_noise.probabilities);
  result.factors = eval_factors(model, by_target, order, result.confounders, noises);
  std::vector<int> emission_input = result.factors;
  emission_input.push_back(obs_noise);
  result.observation = model.emission[emission_input_space(model).flatten(emission_input)];
  return result;
}

SampleResult sample_scm(const Scm& model, std::uint64_t seed) {
  Rng rng(seed);
  return sample_scm(model, rng);
}

JointTable exact_joint(const Scm& model, const std::vector<VariableId>& include) {
  const int n = model.factor_count();
  const int m = model.confounder_count();
  std::vector<VariableId> variables = include;
  std::sort(variables.begin(), variables.end());
  variables.erase(std::unique(variables.begin(), variables.end()), variables.end());
  if (variables.empty()) fail(ErrorCode::OutOfDomain, "empty include set");
  for (const auto& id : variables) {
    const bool known = (id.kind == VariableId::Kind::Factor && id.index >= 0 && id.index < n) ||
                       (id.kind == VariableId::Kind::Confounder && id.index >= 0 && id.index < m) ||
                       (id.kind == VariableId::Kind::Observable && id.index == 0);
    if (!known) fail(ErrorCode::OutOfDomain, "unknown variable " + to_string(id));
  }

  long long atoms = 1;
  auto grow = [&atoms](int cardinality) {
    atoms *= cardinality;
    if (atoms > kMaxAtoms) fail(ErrorCode::TooLarge, "atom space exceeds 10^7");
  };
  for (const auto& domain : model.factor_domains) grow(domain.cardinality);
  for (const auto& domain : model.confounder_domains) grow(domain.cardinality);
  for (const auto& noise : model.factor_noises) grow(noise.domain.cardinality);
  grow(model.obs_noise.domain.cardinality);

  JointTable joint;
  joint.variables = variables;
  for (const auto& id : variables) {
    switch (id.kind) {
      case VariableId::Kind::Factor: joint.space.axes.push_back(model.factor_domains[id.index]); break;
      case VariableId::Kind::Confounder: joint.space.axes.push_back(model.confounder_domains[id.index]); break;
      case VariableId::Kind::Observable: joint.space.axes.push_back(model.obs_domain); break;
    }
  }
  joint.probabilities = Eigen::VectorXd::Zero(joint.space.size());

  const bool wants_observable =
      std::any_of(variables.begin(), variables.end(),
                  [](const VariableId& id) { return id.kind == VariableId::Kind::Observable; });

  const auto by_target = assignments_by_target(model);
  const auto order = factor_topo_order(model, by_target);
  const ProductSpace emission_space = emission_input_space(model);

  std::vector<const NoiseSpec*> confounder_dists;
  for (const auto& dist : model.confounder_dists) confounder_dists.push_back(&dist);
  std::vector<const NoiseSpec*> factor_noises;
  for (const auto& noise : model.factor_noises) factor_noises.push_back(&noise);

  std::vector<int> cell(variables.size(), 0);
  auto scatter = [&](const std::vector<int>& factors, const std::vector<int>& confounders,
                     int observation, double probability) {
    for (std::size_t i = 0; i < variables.size(); ++i) {
      switch (variables[i].kind) {
        case VariableId::Kind::Factor: cell[i] = factors[variables[i].index]; break;
        case VariableId::Kind::Confounder: cell[i] = confounders[variables[i].index]; break;
        case VariableId::Kind::Observable: cell[i] = observation; break;
      }
    }
    joint.probabilities[joint.space.flatten(cell)] += probability;
  };

  for_each_atom(confounder_dists, [&](const std::vector<int>& confounders, double pc) {
    if (pc == 0.0) return;
    for_each_atom(factor_noises, [&](const std::vector<int>& noises, double pu) {
      if (pu == 0.0) return;
      const auto factors = eval_factors(model, by_target, order, confounders, noises);
      if (!wants_observable) {
        scatter(factors, confounders, 0, pc * pu);
        return;
      }
      std::vector<int> emission_input = factors;
      emission_input.push_back(0);
      for (int v = 0; v < model.obs_noise.domain.cardinality; ++v) {
        const double po = model.obs_noise.probabilities[v];
        if (po == 0.0) continue;
        emission_input.back() = v;
        scatter(factors, confounders, model.emission[emission_space.flatten(emission_input)], pc * pu * po);
      }
    });
  });
  return joint;
}

Scm intervene(const Scm& model, const std::map<VariableId, int>& settings) {
  Scm result = model;
  for (const auto& [id, value] : settings) {
    if (id.kind != VariableId::Kind::Factor || id.index < 0 || id.index >= model.factor_count())
      fail(ErrorCode::NotAFactor, to_string(id) + " is not a factor of this model");
    if (value < 0 || value >= model.factor_domains[id.index].cardinality)
      fail(ErrorCode::OutOfDomain, "do(" + to_string(id) + " = " + std::to_string(value) + ") out of domain");
    for (auto& assignment : result.assignments) {
      if (assignment.target != id.index) continue;
      assignment.parents.clear();
      assignment.table.assign(model.factor_noises[id.index].domain.cardinality, value);
    }
  }
  return result;
}

bool emission_injective_at_zero_noise(const Scm& model) {
  const ProductSpace emission_space = emission_input_space(model);
  ProductSpace factor_space;
  factor_space.axes = model.factor_domains;
  std::vector<char> seen(model.obs_domain.cardinality, 0);
  for (long long s = 0; s < factor_space.size(); ++s) {
    std::vector<int> input = factor_space.unflatten(s);
    input.push_back(0);
    const int observation = model.emission[emission_space.flatten(input)];
    if (seen[observation]) return false;
    seen[observation] = 1;
  }
  return true;
}

// ===== textual format =====

namespace {

Eigen::VectorXd parse_probabilities(const std::string& value) {
  const auto list = kv_double_list(value);
  Eigen::VectorXd probabilities(list.size());
  for (std::size_t i = 0; i < list.size(); ++i) probabilities[i] = list[i];
  return probabilities;
}

NoiseSpec parse_noise(const std::string& value) {
  NoiseSpec noise;
  noise.probabilities = parse_probabilities(value);
  noise.domain.cardinality = static_cast<int>(noise.probabilities.size());
  return noise;
}

VariableId parse_parent_token(const std::string& token) {
  if (token.size() < 2 || (token[0] != 'S' && token[0] != 'C'))
    fail(ErrorCode::ConfigError, "bad parent token '" + token + "' (want S<k> or C<k>)");
  VariableId id;
  id.kind = token[0] == 'S' ? VariableId::Kind::Factor : VariableId::Kind::Confounder;
  id.index = kv_int(token.substr(1));
  return id;
}

std::string probabilities_text(const Eigen::VectorXd& probabilities) {
  std::string out;
  for (int i = 0; i < probabilities.size(); ++i) {
    if (i) out += ' ';
    out += g17(probabilities[i]);
  }
  return out;
}

std::string int_list_text(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(values[i]);
  }
  return out;
}

}  // namespace

Scm parse_scm(const std::string& text) {
  const KvDocument document = parse_kv(text);
  Scm model;

  const KvSection& factors = document.require("factors");
  for (int cardinality : kv_int_list(factors.require("domains")))
    model.factor_domains.push_back(FiniteDomain{cardinality});
  for (int j = 0; j < model.factor_count(); ++j)
    model.factor_noises.push_back(parse_noise(factors.require("noise." + std::to_string(j))));

  const KvSection& confounders = document.require("confounders");
  if (const std::string* domains = confounders.find("domains"))
    for (int cardinality : kv_int_list(*domains))
      model.confounder_domains.push_back(FiniteDomain{cardinality});
  for (int k = 0; k < model.confounder_count(); ++k)
    model.confounder_dists.push_back(parse_noise(confounders.require("dist." + std::to_string(k))));

  const KvSection& assignments = document.require("assignments");
  for (int j = 0; j < model.factor_count(); ++j) {
    Assignment assignment;
    assignment.target = j;
    for (const auto& token : kv_tokens(assignments.require("parents." + std::to_string(j))))
      assignment.parents.push_back(parse_parent_token(token));
    assignment.table = kv_int_list(assignments.require("table." + std::to_string(j)));
    model.assignments.push_back(std::move(assignment));
  }

  const KvSection& emission = document.require("emission");
  model.obs_domain.cardinality = kv_int(emission.require("domain"));
  model.obs_noise = parse_noise(emission.require("noise"));
  model.emission = kv_int_list(emission.require("table"));
  return model;
}

std::string write_scm(const Scm& model) {
  KvDocument document;

  KvSection& factors = document.add("factors");
  std::vector<int> factor_cards;
  for (const auto& domain : model.factor_domains) factor_cards.push_back(domain.cardinality);
  factors.entries.push_back({"domains", int_list_text(factor_cards)});
  for (int j = 0; j < model.factor_count(); ++j)
    factors.entries.push_back(
        {"noise." + std::to_string(j), probabilities_text(model.factor_noises[j].probabilities)});

  KvSection& confounders = document.add("confounders");
  std::vector<int> confounder_cards;
  for (const auto& domain : model.confounder_domains) confounder_cards.push_back(domain.cardinality);
  confounders.entries.push_back({"domains", int_list_text(confounder_cards)});
  for (int k = 0; k < model.confounder_count(); ++k)
    confounders.entries.push_back(
        {"dist." + std::to_string(k), probabilities_text(model.confounder_dists[k].probabilities)});

  KvSection& assignments = document.add("assignments");
  const auto by_target = assignments_by_target(model);
  for (int j = 0; j < model.factor_count(); ++j) {
    std::string parents;
    for (std::size_t i = 0; i < by_target[j]->parents.size(); ++i) {
      if (i) parents += ' ';
      parents += to_string(by_target[j]->parents[i]);
    }
    assignments.entries.push_back({"parents." + std::to_string(j), parents});
    assignments.entries.push_back({"table." + std::to_string(j), int_list_text(by_target[j]->table)});
  }

  KvSection& emission = document.add("emission");
  emission.entries.push_back({"domain", std::to_string(model.obs_domain.cardinality)});
  emission.entries.push_back({"noise", probabilities_text(model.obs_noise.probabilities)});
  emission.entries.push_back({"table", int_list_text(model.emission)});

  return write_kv(document);
}

}  // namespace scmrl::scm
