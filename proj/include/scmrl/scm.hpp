#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "scmrl/domain.hpp"
#include "scmrl/rng.hpp"

namespace scmrl::scm {

// Finite structural model over factor variables S_0..S_{n-1} and confounder
// variables C_0..C_{m-1}. Confounders and per-variable noises are jointly
// independent roots; each factor is a deterministic table of its parents and
// its own noise; a single observable mixes the factor tuple with observation
// noise. Tables are row-major over (parent tuple, noise value), last index
// fastest, matching ProductSpace::flatten.

struct NoiseSpec {
  FiniteDomain domain;
  Eigen::VectorXd probabilities;  // sums to 1 within 1e-12, nonnegative
};

struct Assignment {
  int target = 0;                   // factor index
  std::vector<VariableId> parents;  // factors/confounders only, no self, no duplicates
  std::vector<int> table;           // (parent tuple, noise value) -> factor value
};

struct Scm {
  std::vector<FiniteDomain> factor_domains;
  std::vector<FiniteDomain> confounder_domains;
  std::vector<NoiseSpec> confounder_dists;  // one per confounder
  std::vector<NoiseSpec> factor_noises;     // one per factor
  std::vector<Assignment> assignments;      // exactly one per factor
  std::vector<int> emission;                // (factor tuple, obs noise value) -> observation
  NoiseSpec obs_noise;
  FiniteDomain obs_domain;

  int factor_count() const { return static_cast<int>(factor_domains.size()); }
  int confounder_count() const { return static_cast<int>(confounder_domains.size()); }
};

struct Dag {
  std::vector<VariableId> nodes;  // factors ascending, then confounders ascending
  std::set<std::pair<VariableId, VariableId>> edges;  // (parent, child)
  std::vector<int> factor_order;  // factor evaluation order, ties broken by ascending index
};

struct JointTable {
  std::vector<VariableId> variables;  // canonical order: factors, confounders, observable
  ProductSpace space;                 // one axis per variable
  Eigen::VectorXd probabilities;      // dense row-major, sums to 1 within 1e-9
};

struct SampleResult {
  std::vector<int> factors;
  std::vector<int> confounders;
  int observation = 0;
};

// Structural validation: exactly one assignment per factor, legal parent ids,
// total tables with in-domain values, normalized noise vectors, acyclicity.
// Returns the induced graph together with the tie-broken topological order of
// the factors. Errors: IncompleteTable, IllegalParent, UnnormalizedNoise,
// CyclicGraph.
Dag validate_scm(const Scm& model);

// Ancestral sampling. Draw order is fixed: confounders by ascending index,
// factor noises by ascending factor index, observation noise, then factors
// evaluated topologically. Same seed, same result.
SampleResult sample_scm(const Scm& model, Rng& rng);
SampleResult sample_scm(const Scm& model, std::uint64_t seed);

// Exact joint over `include` by enumerating all noise/confounder atoms and
// marginalizing. The atom space (product of every factor, confounder and
// noise cardinality) must not exceed 10^7, else TooLarge. Unknown or
// duplicate ids raise OutOfDomain.
JointTable exact_joint(const Scm& model, const std::vector<VariableId>& include);

// do(): replace each targeted factor's assignment with a parentless constant
// table. Targets must be factors (NotAFactor) with in-domain values
// (OutOfDomain). The original model is left untouched.
Scm intervene(const Scm& model, const std::map<VariableId, int>& settings);

// Exhaustive check that s -> emission(s, noise=0) is injective.
bool emission_injective_at_zero_noise(const Scm& model);

// Textual wire format (sections [factors], [confounders], [assignments],
// [emission]; flat row-major tables). parse accepts any section order;
// write is canonical and byte-stable.
Scm parse_scm(const std::string& text);
std::string write_scm(const Scm& model);

}  // namespace scmrl::scm
