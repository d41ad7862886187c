#include "scmrl/disentangle.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "scmrl/info.hpp"
#include "scmrl/json_out.hpp"

namespace scmrl::disent {

namespace {

void check_total(const FiniteMap& map, const char* label) {
  if (static_cast<long long>(map.table.size()) != map.domain.size())
    fail(ErrorCode::DomainMismatch, std::string(label) + ": table size != domain size");
  for (long long value : map.table)
    if (value < 0 || value >= map.codomain.size())
      fail(ErrorCode::DomainMismatch, std::string(label) + ": value outside codomain");
}

bool injective_on(const FiniteMap& map, const std::vector<long long>& inputs) {
  std::vector<char> seen(map.codomain.size(), 0);
  for (long long x : inputs) {
    const long long y = map.table[x];
    if (seen[y]) return false;
    seen[y] = 1;
  }
  return true;
}

std::vector<long long> all_inputs(const FiniteMap& map) {
  std::vector<long long> inputs(map.domain.size());
  for (long long x = 0; x < map.domain.size(); ++x) inputs[x] = x;
  return inputs;
}

}  // namespace

FiniteMap FiniteMap::identity(const ProductSpace& space) {
  FiniteMap map;
  map.domain = space;
  map.codomain = space;
  map.table.resize(space.size());
  for (long long x = 0; x < space.size(); ++x) map.table[x] = x;
  return map;
}

FiniteMap compose(const FiniteMap& first, const FiniteMap& second) {
  check_total(first, "first map");
  check_total(second, "second map");
  if (first.codomain != second.domain)
    fail(ErrorCode::DomainMismatch, "composition: codomain of the first map != domain of the second");
  FiniteMap composite;
  composite.domain = first.domain;
  composite.codomain = second.codomain;
  composite.table.resize(first.table.size());
  for (std::size_t x = 0; x < first.table.size(); ++x)
    composite.table[x] = second.table[first.table[x]];
  return composite;
}

StructureReport check_structure(const FiniteMap& g, const FiniteMap& f) {
  check_total(g, "g");
  check_total(f, "f");
  if (g.codomain != f.domain)
    fail(ErrorCode::DomainMismatch, "g maps into a different space than f reads");
  StructureReport report;
  report.g_injective = injective_on(g, all_inputs(g));
  std::vector<long long> image;
  image.reserve(g.table.size());
  std::set<long long> unique(g.table.begin(), g.table.end());
  image.assign(unique.begin(), unique.end());
  report.f_injective_on_image = injective_on(f, image);
  return report;
}

ModularityResult check_modularity(const FiniteMap& m) {
  check_total(m, "m");
  const int n = m.domain.rank();
  const int l = m.codomain.rank();
  if (l < n)
    fail(ErrorCode::TooFewCodes,
         std::to_string(l) + " code axes cannot cover " + std::to_string(n) + " factor axes");

  // influence[k] = factor axes that can change code axis k while everything
  // else stays fixed.
  std::vector<std::set<int>> influence(l);
  for (long long flat = 0; flat < m.domain.size(); ++flat) {
    const std::vector<int> s = m.domain.unflatten(flat);
    const std::vector<int> z = m.codomain.unflatten(m.table[flat]);
    std::vector<int> s_alt = s;
    for (int j = 0; j < n; ++j) {
      for (int v = s[j] + 1; v < m.domain.axes[j].cardinality; ++v) {
        s_alt[j] = v;
        const std::vector<int> z_alt = m.codomain.unflatten(m.table[m.domain.flatten(s_alt)]);
        for (int k = 0; k < l; ++k)
          if (z[k] != z_alt[k]) influence[k].insert(j);
      }
      s_alt[j] = s[j];
    }
  }

  ModularityResult result;
  for (int k = 0; k < l; ++k)
    if (influence[k].size() > 1) return result;  // a code axis mixes factors

  std::vector<int> assignment(n, -1);
  std::vector<char> used(l, 0);
  for (int k = 0; k < l; ++k) {
    if (influence[k].empty()) continue;
    const int j = *influence[k].begin();
    if (assignment[j] < 0) {
      assignment[j] = k;
      used[k] = 1;
    }
  }
  for (int j = 0; j < n; ++j) {
    if (assignment[j] >= 0) continue;
    if (m.domain.axes[j].cardinality > 1) return result;  // factor drives no code axis
    // Constant axis: recoverable from anywhere, park it on a free code axis.
    for (int k = 0; k < l; ++k) {
      if (!used[k]) {
        assignment[j] = k;
        used[k] = 1;
        break;
      }
    }
    if (assignment[j] < 0) return result;
  }
  result.holds = true;
  result.code_assignment = std::move(assignment);
  return result;
}

std::optional<FiniteMap> construct_left_inverse(const FiniteMap& m) {
  check_total(m, "m");
  if (!injective_on(m, all_inputs(m))) return std::nullopt;
  FiniteMap inverse;
  inverse.domain = m.codomain;
  inverse.codomain = m.domain;
  // Off-image codes decode to flat 0, the lexicographically smallest tuple.
  inverse.table.assign(m.codomain.size(), 0);
  for (long long s = 0; s < m.domain.size(); ++s) inverse.table[m.table[s]] = s;
  return inverse;
}

bool check_disentanglement(const FiniteMap& m, const std::vector<int>& code_assignment) {
  check_total(m, "m");
  const int n = m.domain.rank();
  const int l = m.codomain.rank();
  if (static_cast<int>(code_assignment.size()) != n)
    fail(ErrorCode::AssignmentInvalid, "assignment must name a code axis per factor axis");
  std::vector<char> used(l, 0);
  for (int k : code_assignment) {
    if (k < 0 || k >= l) fail(ErrorCode::AssignmentInvalid, "code axis out of range");
    if (used[k]) fail(ErrorCode::AssignmentInvalid, "code axis assigned twice");
    used[k] = 1;
  }
  // Factor j must be a function of code axis a(j) across every reachable code.
  for (int j = 0; j < n; ++j) {
    const int k = code_assignment[j];
    std::vector<int> decoded(m.codomain.axes[k].cardinality, -1);
    for (long long flat = 0; flat < m.domain.size(); ++flat) {
      const int s_j = m.domain.unflatten(flat)[j];
      const int z_k = m.codomain.unflatten(m.table[flat])[k];
      if (decoded[z_k] < 0)
        decoded[z_k] = s_j;
      else if (decoded[z_k] != s_j)
        return false;
    }
  }
  return true;
}

PipelineReport verify_pipeline(const FiniteMap& g, const FiniteMap& f) {
  PipelineReport report;
  const StructureReport structure = check_structure(g, f);
  report.g_injective = structure.g_injective;
  report.f_injective_on_image = structure.f_injective_on_image;
  const FiniteMap m = compose(g, f);
  const ModularityResult modularity = check_modularity(m);
  report.modularity_holds = modularity.holds;
  report.code_assignment = modularity.code_assignment;
  report.informativeness_holds = construct_left_inverse(m).has_value();
  report.disentanglement_holds =
      modularity.holds && check_disentanglement(m, modularity.code_assignment);
  return report;
}

ScoreReport score_disentanglement(const FactorCodeJoint& joint) {
  const int n = joint.factors.rank();
  const int l = joint.codes.rank();
  ProductSpace full;
  full.axes = joint.factors.axes;
  full.axes.insert(full.axes.end(), joint.codes.axes.begin(), joint.codes.axes.end());
  if (joint.probabilities.size() != full.size())
    fail(ErrorCode::Unnormalized, "joint table size does not match the factor/code axes");
  for (int i = 0; i < joint.probabilities.size(); ++i)
    if (!(joint.probabilities[i] >= 0.0))
      fail(ErrorCode::Unnormalized, "negative probability in joint table");
  if (std::abs(joint.probabilities.sum() - 1.0) > 1e-9)
    fail(ErrorCode::Unnormalized, "joint table sums to " + g17(joint.probabilities.sum()));

  // One sweep accumulates every pairwise (S_j, Z_k) marginal.
  std::vector<std::vector<Eigen::MatrixXd>> pair(n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < l; ++k)
      pair[j].push_back(Eigen::MatrixXd::Zero(joint.factors.axes[j].cardinality,
                                              joint.codes.axes[k].cardinality));
  for (long long cell = 0; cell < full.size(); ++cell) {
    const double p = joint.probabilities[cell];
    if (p == 0.0) continue;
    const std::vector<int> tuple = full.unflatten(cell);
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < l; ++k) pair[j][k](tuple[j], tuple[n + k]) += p;
  }

  ScoreReport report;
  report.mi_matrix = Eigen::MatrixXd::Zero(n, l);
  for (int j = 0; j < n; ++j) {
    const double h_j = shannon_entropy(pair[j][0].rowwise().sum());
    for (int k = 0; k < l; ++k) {
      if (h_j <= 0.0) continue;  // 0/0 := 0 for constant factors
      report.mi_matrix(j, k) = std::clamp(mutual_information(pair[j][k]) / h_j, 0.0, 1.0);
    }
  }

  double informativeness = 0.0;
  for (int j = 0; j < n; ++j) informativeness += report.mi_matrix.row(j).maxCoeff();
  report.informativeness_score = n > 0 ? informativeness / n : 0.0;

  double modularity = 0.0;
  int counted = 0;
  for (int k = 0; k < l; ++k) {
    const double mass = report.mi_matrix.col(k).sum();
    if (mass <= 0.0) continue;  // code carries no factor information
    modularity += report.mi_matrix.col(k).maxCoeff() / mass;
    ++counted;
  }
  report.modularity_score = counted > 0 ? modularity / counted : 0.0;
  return report;
}

FactorCodeJoint binarize_continuous_codes(
    const ProductSpace& factors,
    const std::vector<std::pair<std::vector<int>, Eigen::VectorXd>>& samples, int bins) {
  if (bins < 2) fail(ErrorCode::OutOfRange, "need at least 2 bins");
  if (static_cast<int>(samples.size()) < bins)
    fail(ErrorCode::TooFewSamples, std::to_string(samples.size()) + " samples for " +
                                       std::to_string(bins) + " bins");
  const int l = static_cast<int>(samples.front().second.size());
  if (l < 1) fail(ErrorCode::TooFewSamples, "samples carry no code dimensions");
  for (const auto& [tuple, code] : samples) {
    if (static_cast<int>(tuple.size()) != factors.rank())
      fail(ErrorCode::DomainMismatch, "factor tuple arity mismatch");
    if (code.size() != l) fail(ErrorCode::DomainMismatch, "code dimension mismatch");
  }

  // Per dimension: split at the t/bins empirical quantiles, t = 1..bins-1.
  const long long count = static_cast<long long>(samples.size());
  std::vector<std::vector<double>> edges(l);
  std::vector<double> sorted(count);
  for (int k = 0; k < l; ++k) {
    for (long long i = 0; i < count; ++i) sorted[i] = samples[i].second[k];
    std::sort(sorted.begin(), sorted.end());
    for (int t = 1; t < bins; ++t) edges[k].push_back(sorted[(t * count) / bins]);
  }

  FactorCodeJoint joint;
  joint.factors = factors;
  joint.codes.axes.assign(l, FiniteDomain{bins});
  ProductSpace full;
  full.axes = factors.axes;
  full.axes.insert(full.axes.end(), joint.codes.axes.begin(), joint.codes.axes.end());
  joint.probabilities = Eigen::VectorXd::Zero(full.size());

  std::vector<int> cell(full.rank());
  for (const auto& [tuple, code] : samples) {
    for (int j = 0; j < factors.rank(); ++j) cell[j] = tuple[j];
    for (int k = 0; k < l; ++k) {
      int bin = 0;
      for (double edge : edges[k])
        if (code[k] >= edge) ++bin;
      cell[factors.rank() + k] = std::min(bin, bins - 1);
    }
    joint.probabilities[full.flatten(cell)] += 1.0;
  }
  joint.probabilities /= double(count);
  return joint;
}

nlohmann::ordered_json pipeline_report_json(const PipelineReport& report) {
  nlohmann::ordered_json out;
  out["gInjective"] = report.g_injective;
  out["fInjectiveOnImage"] = report.f_injective_on_image;
  out["modularityHolds"] = report.modularity_holds;
  if (report.modularity_holds)
    out["codeAssignment"] = report.code_assignment;
  else
    out["codeAssignment"] = nullptr;
  out["informativenessHolds"] = report.informativeness_holds;
  out["disentanglementHolds"] = report.disentanglement_holds;
  return out;
}

nlohmann::ordered_json score_report_json(const ScoreReport& report) {
  nlohmann::ordered_json out;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (int j = 0; j < report.mi_matrix.rows(); ++j) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int k = 0; k < report.mi_matrix.cols(); ++k) row.push_back(report.mi_matrix(j, k));
    rows.push_back(row);
  }
  out["miMatrix"] = rows;
  out["modularityScore"] = report.modularity_score;
  out["informativenessScore"] = report.informativeness_score;
  return out;
}

}  // namespace scmrl::disent
