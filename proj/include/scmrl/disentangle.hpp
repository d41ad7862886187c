#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "json.hpp"
#include "scmrl/domain.hpp"

namespace scmrl::disent {

// Machinery for the generating-process / encoder pipeline
//
//   factors S --g--> observations X --f--> codes Z,   m = f after g
//
// over finite product spaces, with the exact structural checks (injectivity,
// per-axis factorization, left inverses) and their graded mutual-information
// counterparts.

// Total tabulated map between product spaces, by flat row-major index.
struct FiniteMap {
  ProductSpace domain;
  ProductSpace codomain;
  std::vector<long long> table;  // size == domain.size(), entries in [0, codomain.size())

  long long operator()(long long x) const { return table[x]; }

  static FiniteMap identity(const ProductSpace& space);
};

// second(first(x)); DomainMismatch unless first.codomain == second.domain.
FiniteMap compose(const FiniteMap& first, const FiniteMap& second);

struct StructureReport {
  bool g_injective = false;
  bool f_injective_on_image = false;
};

struct ModularityResult {
  bool holds = false;
  // factor axis -> code axis, injective; filled only when holds. A factor
  // influencing several (single-factor) code axes is assigned the smallest;
  // constant factor axes get the smallest code axis still unused.
  std::vector<int> code_assignment;
};

struct PipelineReport {
  bool g_injective = false;
  bool f_injective_on_image = false;
  bool modularity_holds = false;
  std::vector<int> code_assignment;
  bool informativeness_holds = false;   // left inverse of m exists
  bool disentanglement_holds = false;   // factorized left inverse exists
};

struct ScoreReport {
  Eigen::MatrixXd mi_matrix;  // factors x codes, I(S_j; Z_k) / H(S_j), in [0,1]
  double modularity_score = 0.0;
  double informativeness_score = 0.0;
};

// Dense joint distribution over (factor axes, code axes), row-major with the
// code axes fastest; the scored object.
struct FactorCodeJoint {
  ProductSpace factors;
  ProductSpace codes;
  Eigen::VectorXd probabilities;
};

// Injectivity of g everywhere and of f on the image g(S).
// DomainMismatch unless g.codomain == f.domain.
StructureReport check_structure(const FiniteMap& g, const FiniteMap& f);

// Does m factor per axis? Every code axis may respond to at most one factor
// axis, and every factor axis must drive its own dedicated code axis.
// TooFewCodes when m has fewer code axes than factor axes.
ModularityResult check_modularity(const FiniteMap& m);

// Left inverse of m if m is injective: i(m(s)) = s, with codes outside the
// image sent to the lexicographically smallest factor tuple.
std::optional<FiniteMap> construct_left_inverse(const FiniteMap& m);

// Given a modular factor->code assignment, is every factor value recoverable
// from its assigned code axis alone? AssignmentInvalid on malformed input.
bool check_disentanglement(const FiniteMap& m, const std::vector<int>& code_assignment);

// All five checks in order; later verdicts are computed regardless of
// earlier failures except disentanglement, which needs a modular assignment.
PipelineReport verify_pipeline(const FiniteMap& g, const FiniteMap& f);

// Normalized mutual-information matrix and its two summary scores.
//   informativeness = mean_j max_k nmi[j,k]
//   modularity      = mean over code columns with positive mass of
//                     max_j nmi[j,k] / sum_j nmi[j,k]   (0 if no such column)
// Unnormalized if the joint is not a probability table within 1e-9.
ScoreReport score_disentanglement(const FactorCodeJoint& joint);

// Quantile binning of real-valued codes against known factor tuples; the
// bridge from continuous encoders to the exact scorer. Each code dimension
// is split at its empirical t/bins quantiles (ties share a bin).
// TooFewSamples if fewer than `bins` samples; OutOfRange if bins < 2.
FactorCodeJoint binarize_continuous_codes(
    const ProductSpace& factors,
    const std::vector<std::pair<std::vector<int>, Eigen::VectorXd>>& samples, int bins = 4);

// JSON report schemas (documented in the README).
nlohmann::ordered_json pipeline_report_json(const PipelineReport& report);
nlohmann::ordered_json score_report_json(const ScoreReport& report);

}  // namespace scmrl::disent
