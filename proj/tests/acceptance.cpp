// Acceptance gate: prints one PASS/FAIL line per criterion and exits nonzero
// on any failure. All tolerances and budgets are pinned here, in code.
//
// Every check is oracle-based: exact enumeration, brute-force refinement,
// finite differences, or an independently derived closed form — never the
// module under test evaluated twice.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "scmrl/agents.hpp"
#include "scmrl/disentangle.hpp"
#include "scmrl/env.hpp"
#include "scmrl/error.hpp"
#include "scmrl/experiment.hpp"
#include "scmrl/kv_format.hpp"
#include "scmrl/replay.hpp"
#include "scmrl/rng.hpp"
#include "scmrl/scm.hpp"

using namespace scmrl;

namespace {

// ---------------------------------------------------------------------------
// Criterion 1: SCM exactness against the Markov factorization, sampling
// histograms, and truncated-factorization interventions.
// ---------------------------------------------------------------------------

scm::Scm random_scm(Rng& rng) {
  scm::Scm model;
  const int factors = 1 + rng.next_below(5);
  const int confounders = rng.next_below(3);
  model.factor_domains.assign(static_cast<std::size_t>(factors), FiniteDomain{2});
  model.confounder_domains.assign(static_cast<std::size_t>(confounders), FiniteDomain{2});

  const auto bernoulli = [&rng]() {
    const double p = 0.2 + 0.15 * rng.next_below(5);  // 0.2 .. 0.8
    scm::NoiseSpec spec;
    spec.domain = FiniteDomain{2};
    spec.probabilities = Eigen::Vector2d(1.0 - p, p);
    return spec;
  };
  for (int c = 0; c < confounders; ++c) model.confounder_dists.push_back(bernoulli());

  for (int j = 0; j < factors; ++j) {
    model.factor_noises.push_back(bernoulli());
    scm::Assignment assignment;
    assignment.target = j;
    for (int i = 0; i < j && assignment.parents.size() < 3; ++i) {
      if (rng.next_below(5) < 2) {
        assignment.parents.push_back({VariableId::Kind::Factor, i});
      }
    }
    for (int c = 0; c < confounders && assignment.parents.size() < 3; ++c) {
      if (rng.next_below(10) < 3) {
        assignment.parents.push_back({VariableId::Kind::Confounder, c});
      }
    }
    long long rows = 2;  // noise cardinality
    for (std::size_t p = 0; p < assignment.parents.size(); ++p) rows *= 2;
    assignment.table.resize(static_cast<std::size_t>(rows));
    for (long long r = 0; r < rows; ++r) {
      assignment.table[static_cast<std::size_t>(r)] = rng.next_below(2);
    }
    model.assignments.push_back(assignment);
  }

  // Noise-free injective emission: observation = flat factor tuple.
  long long obs = 1;
  for (int j = 0; j < factors; ++j) obs *= 2;
  model.obs_domain = FiniteDomain{static_cast<int>(obs)};
  model.obs_noise.domain = FiniteDomain{1};
  model.obs_noise.probabilities = Eigen::VectorXd::Ones(1);
  model.emission.resize(static_cast<std::size_t>(obs));
  for (long long s = 0; s < obs; ++s) model.emission[static_cast<std::size_t>(s)] = int(s);
  return model;
}

// P(factor j takes value v | parent values), straight from table and noise.
double conditional_of(const scm::Scm& model, int j, const std::vector<int>& factor_values,
                      const std::vector<int>& confounder_values, int v) {
  const scm::Assignment& assignment = model.assignments[static_cast<std::size_t>(j)];
  long long parent_flat = 0;
  for (const VariableId& parent : assignment.parents) {
    const int value = parent.kind == VariableId::Kind::Factor
                          ? factor_values[static_cast<std::size_t>(parent.index)]
                          : confounder_values[static_cast<std::size_t>(parent.index)];
    parent_flat = parent_flat * 2 + value;
  }
  const scm::NoiseSpec& noise = model.factor_noises[static_cast<std::size_t>(j)];
  double total = 0.0;
  for (int u = 0; u < noise.domain.cardinality; ++u) {
    if (assignment.table[static_cast<std::size_t>(parent_flat * noise.domain.cardinality +
                                                  u)] == v) {
      total += noise.probabilities[u];
    }
  }
  return total;
}

// Joint over factors via the chain-product Markov factorization, confounders
// summed out. `forced` replaces a factor's conditional with an indicator
// (the truncated factorization of an intervention).
Eigen::VectorXd markov_factor_joint(const scm::Scm& model,
                                    const std::map<int, int>& forced) {
  const int factors = model.factor_count();
  const int confounders = model.confounder_count();
  const ProductSpace factor_space =
      ProductSpace::of_cardinalities(std::vector<int>(static_cast<std::size_t>(factors), 2));
  Eigen::VectorXd joint = Eigen::VectorXd::Zero(factor_space.size());
  const long long conf_count = 1LL << confounders;
  for (long long s = 0; s < factor_space.size(); ++s) {
    const std::vector<int> values = factor_space.unflatten(s);
    double mass = 0.0;
    for (long long c = 0; c < conf_count; ++c) {
      std::vector<int> conf(static_cast<std::size_t>(confounders));
      double prob = 1.0;
      for (int k = 0; k < confounders; ++k) {
        conf[static_cast<std::size_t>(k)] = int((c >> k) & 1);
        prob *= model.confounder_dists[static_cast<std::size_t>(k)]
                    .probabilities[conf[static_cast<std::size_t>(k)]];
      }
      for (int j = 0; j < factors && prob > 0.0; ++j) {
        const auto it = forced.find(j);
        if (it != forced.end()) {
          prob *= values[static_cast<std::size_t>(j)] == it->second ? 1.0 : 0.0;
        } else {
          prob *= conditional_of(model, j, values, conf, values[static_cast<std::size_t>(j)]);
        }
      }
      mass += prob;
    }
    joint[s] = mass;
  }
  return joint;
}

std::vector<VariableId> factor_ids(const scm::Scm& model) {
  std::vector<VariableId> ids;
  for (int j = 0; j < model.factor_count(); ++j) {
    ids.push_back({VariableId::Kind::Factor, j});
  }
  return ids;
}

bool criterion_scm_exactness(std::string& detail) {
  Rng rng(20260501);
  double worst_joint = 0.0, worst_tv = 0.0, worst_do = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const scm::Scm model = random_scm(rng);
    scm::validate_scm(model);

    const scm::JointTable exact = scm::exact_joint(model, factor_ids(model));
    const Eigen::VectorXd markov = markov_factor_joint(model, {});
    worst_joint =
        std::max(worst_joint, (exact.probabilities - markov).cwiseAbs().maxCoeff());

    // 10^5-sample histogram over factor tuples
    Eigen::VectorXd histogram = Eigen::VectorXd::Zero(markov.size());
    const int samples = 100000;
    Rng sampler(derive_seed(777, static_cast<std::uint64_t>(trial)));
    const ProductSpace factor_space = ProductSpace::of_cardinalities(
        std::vector<int>(static_cast<std::size_t>(model.factor_count()), 2));
    for (int n = 0; n < samples; ++n) {
      const scm::SampleResult draw = scm::sample_scm(model, sampler);
      histogram[factor_space.flatten(draw.factors)] += 1.0;
    }
    histogram /= double(samples);
    worst_tv = std::max(worst_tv, 0.5 * (histogram - markov).cwiseAbs().sum());

    // one-factor intervention vs truncated factorization
    const int target = rng.next_below(model.factor_count());
    const int value = rng.next_below(2);
    const scm::Scm cut =
        scm::intervene(model, {{{VariableId::Kind::Factor, target}, value}});
    const scm::JointTable cut_joint = scm::exact_joint(cut, factor_ids(model));
    const Eigen::VectorXd truncated = markov_factor_joint(model, {{target, value}});
    worst_do =
        std::max(worst_do, (cut_joint.probabilities - truncated).cwiseAbs().maxCoeff());
  }
  char buffer[160];
  std::snprintf(buffer, sizeof buffer,
                "joint err %.2e (tol 1e-9), sample TV %.3f (tol 0.02), do err %.2e (tol 1e-9)",
                worst_joint, worst_tv, worst_do);
  detail = buffer;
  return worst_joint < 1e-9 && worst_tv < 0.02 && worst_do < 1e-9;
}

// ---------------------------------------------------------------------------
// Criterion 2: the three reference pipelines give exact boolean verdicts.
// ---------------------------------------------------------------------------

bool criterion_pipelines(std::string& detail) {
  const ProductSpace two_bits = ProductSpace::of_cardinalities({2, 2});

  const disent::FiniteMap identity = disent::FiniteMap::identity(two_bits);
  const disent::PipelineReport id_report = disent::verify_pipeline(identity, identity);
  const bool id_ok = id_report.g_injective && id_report.f_injective_on_image &&
                     id_report.modularity_holds && id_report.informativeness_holds &&
                     id_report.disentanglement_holds;

  disent::FiniteMap xor_mix;
  xor_mix.domain = two_bits;
  xor_mix.codomain = two_bits;
  xor_mix.table.resize(4);
  for (long long x = 0; x < 4; ++x) {
    const std::vector<int> bits = two_bits.unflatten(x);
    xor_mix.table[static_cast<std::size_t>(x)] =
        two_bits.flatten({bits[0], bits[0] ^ bits[1]});
  }
  const disent::PipelineReport xor_report = disent::verify_pipeline(identity, xor_mix);
  const bool xor_ok = !xor_report.modularity_holds && xor_report.informativeness_holds &&
                      !xor_report.disentanglement_holds;

  const ProductSpace three = ProductSpace::of_cardinalities({3});
  disent::FiniteMap lossy;
  lossy.domain = three;
  lossy.codomain = ProductSpace::of_cardinalities({2});
  lossy.table = {0, 1, 1};
  const disent::PipelineReport lossy_report =
      disent::verify_pipeline(disent::FiniteMap::identity(three), lossy);
  const bool lossy_ok = lossy_report.modularity_holds &&
                        !lossy_report.informativeness_holds &&
                        !lossy_report.disentanglement_holds;

  detail = std::string("identity ") + (id_ok ? "ok" : "BAD") + ", xor " +
           (xor_ok ? "ok" : "BAD") + ", lossy " + (lossy_ok ? "ok" : "BAD");
  return id_ok && xor_ok && lossy_ok;
}

// ---------------------------------------------------------------------------
// Criterion 3: score calibration on aligned, independent, and mixed codes.
// ---------------------------------------------------------------------------

bool criterion_score_calibration(std::string& detail) {
  const ProductSpace two_bits = ProductSpace::of_cardinalities({2, 2});

  disent::FactorCodeJoint aligned;
  aligned.factors = two_bits;
  aligned.codes = two_bits;
  aligned.probabilities = Eigen::VectorXd::Zero(16);
  for (long long s = 0; s < 4; ++s) aligned.probabilities[s * 4 + s] = 0.25;
  const disent::ScoreReport aligned_score = disent::score_disentanglement(aligned);

  disent::FactorCodeJoint independent;
  independent.factors = two_bits;
  independent.codes = two_bits;
  independent.probabilities = Eigen::VectorXd::Constant(16, 1.0 / 16.0);
  const disent::ScoreReport independent_score = disent::score_disentanglement(independent);

  // identical continuous data through the aligned encoder and through a fixed
  // invertible mixer M = [[1, 1], [1, -1]]
  std::vector<std::pair<std::vector<int>, Eigen::VectorXd>> aligned_samples;
  std::vector<std::pair<std::vector<int>, Eigen::VectorXd>> mixed_samples;
  for (int s0 = 0; s0 < 2; ++s0) {
    for (int s1 = 0; s1 < 2; ++s1) {
      for (int repeat = 0; repeat < 25; ++repeat) {
        const std::vector<int> factors{s0, s1};
        aligned_samples.push_back({factors, Eigen::Vector2d(s0, s1)});
        mixed_samples.push_back({factors, Eigen::Vector2d(s0 + s1, s0 - s1)});
      }
    }
  }
  const disent::ScoreReport aligned_binned =
      disent::score_disentanglement(disent::binarize_continuous_codes(two_bits,
                                                                      aligned_samples, 2));
  const disent::ScoreReport mixed_binned = disent::score_disentanglement(
      disent::binarize_continuous_codes(two_bits, mixed_samples, 2));

  char buffer[200];
  std::snprintf(buffer, sizeof buffer,
                "aligned mod %.9f inf %.9f; independent inf %.2e; mixer mod %.3f vs aligned "
                "%.3f",
                aligned_score.modularity_score, aligned_score.informativeness_score,
                independent_score.informativeness_score, mixed_binned.modularity_score,
                aligned_binned.modularity_score);
  detail = buffer;
  return std::abs(aligned_score.modularity_score - 1.0) < 1e-9 &&
         std::abs(aligned_score.informativeness_score - 1.0) < 1e-9 &&
         std::abs(independent_score.informativeness_score) < 1e-9 &&
         mixed_binned.modularity_score < aligned_binned.modularity_score - 1e-9;
}

// ---------------------------------------------------------------------------
// Criterion 4: analytic gradients match central finite differences.
// ---------------------------------------------------------------------------

bool criterion_gradient_fidelity(std::string& detail) {
  double worst_vae = 0.0, worst_policy = 0.0;
  Rng rng(424242);

  for (int trial = 0; trial < 20; ++trial) {
    const int obs_dim = 2 + trial % 3;
    const int latent_dim = 1 + trial % 3;
    const double beta = 1.0 + trial % 2;
    const agents::GaussianVae vae =
        agents::make_vae(obs_dim, latent_dim, beta, 9000 + static_cast<std::uint64_t>(trial));
    std::vector<Eigen::VectorXd> batch;
    for (int b = 0; b < 3; ++b) {
      Eigen::VectorXd x(obs_dim);
      for (int d = 0; d < obs_dim; ++d) x[d] = rng.next_normal();
      batch.push_back(x);
    }
    const std::uint64_t seed = 5150 + static_cast<std::uint64_t>(trial);
    const auto objective = [&](const agents::GradientVector& parameters) {
      const agents::GaussianVae shifted = agents::with_vae_parameters(vae, parameters);
      double total = 0.0;
      for (std::size_t b = 0; b < batch.size(); ++b) {
        total += agents::elbo(shifted, batch[b], 1,
                              derive_seed(seed, static_cast<std::uint64_t>(b)));
      }
      return total / double(batch.size());
    };
    const agents::GradientVector analytic = agents::vae_gradient(vae, batch, seed);
    agents::GradientVector numeric(analytic.size());
    const agents::GradientVector base = agents::vae_parameters(vae);
    const double h = 1e-5;
    for (long long i = 0; i < base.size(); ++i) {
      agents::GradientVector plus = base, minus = base;
      plus[i] += h;
      minus[i] -= h;
      numeric[i] = (objective(plus) - objective(minus)) / (2.0 * h);
    }
    worst_vae = std::max(worst_vae, (numeric - analytic).norm() / analytic.norm());
  }

  for (int trial = 0; trial < 20; ++trial) {
    const int states = 2 + trial % 3;
    const int actions = 2 + (trial + 1) % 3;
    Eigen::MatrixXd logits(states, actions);
    for (int s = 0; s < states; ++s) {
      for (int a = 0; a < actions; ++a) logits(s, a) = rng.next_normal();
    }
    const long long s0 = rng.next_below(states);
    const int a0 = rng.next_below(actions);

    // single unit-reward step: policy_gradient reduces to the score term
    Trajectory step;
    step.source = SourceTag::Egocentric;
    step.transitions.push_back(Transition{s0, a0, 1.0, 1.0, s0});
    agents::ValueTable zero;
    zero.values = Eigen::VectorXd::Zero(states);
    zero.visited.assign(static_cast<std::size_t>(states), true);
    const agents::GradientVector analytic =
        agents::policy_gradient({step}, agents::SoftmaxPolicy{logits}, zero, 0.9);

    const auto log_prob = [&](const Eigen::MatrixXd& w) {
      const Eigen::VectorXd row = w.row(s0);
      const double max = row.maxCoeff();
      return row[a0] - max - std::log((row.array() - max).exp().sum());
    };
    agents::GradientVector numeric(states * actions);
    const double h = 1e-6;
    for (int s = 0; s < states; ++s) {
      for (int a = 0; a < actions; ++a) {
        Eigen::MatrixXd plus = logits, minus = logits;
        plus(s, a) += h;
        minus(s, a) -= h;
        numeric[s * actions + a] = (log_prob(plus) - log_prob(minus)) / (2.0 * h);
      }
    }
    worst_policy = std::max(worst_policy, (numeric - analytic).norm() / numeric.norm());
  }

  char buffer[120];
  std::snprintf(buffer, sizeof buffer, "vae rel %.2e, score-term rel %.2e (tol 1e-4)",
                worst_vae, worst_policy);
  detail = buffer;
  return worst_vae < 1e-4 && worst_policy < 1e-4;
}

// ---------------------------------------------------------------------------
// Criterion 5: Monte-Carlo and importance-weighted gradients are unbiased on
// the enumerable two-state, horizon-3 MDP.
// ---------------------------------------------------------------------------

struct TinyMdp {
  Eigen::MatrixXd t0{2, 2}, t1{2, 2};  // per-action transition
  Eigen::MatrixXd reward{2, 2};        // (state, action)
  Eigen::Vector2d start;
  double discount = 0.9;

  const Eigen::MatrixXd& transition(int a) const { return a == 0 ? t0 : t1; }
};

TinyMdp tiny_mdp() {
  TinyMdp m;
  m.t0 << 0.7, 0.3, 0.4, 0.6;
  m.t1 << 0.1, 0.9, 0.8, 0.2;
  m.reward << 1.0, 0.0, 0.0, 2.0;
  m.start << 0.6, 0.4;
  return m;
}

Eigen::MatrixXd tiny_policy_logits() {
  Eigen::MatrixXd logits(2, 2);
  logits << 0.2, -0.1, -0.3, 0.4;
  return logits;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd probs = logits;
  for (long long s = 0; s < logits.rows(); ++s) {
    const double max = logits.row(s).maxCoeff();
    Eigen::VectorXd row = (logits.row(s).array() - max).exp();
    probs.row(s) = row / row.sum();
  }
  return probs;
}

// Exact J(policy) by enumerating every (start, action, next)^3 path.
double tiny_exact_objective(const TinyMdp& m, const Eigen::MatrixXd& logits) {
  const Eigen::MatrixXd probs = softmax_rows(logits);
  double j = 0.0;
  for (int s1 = 0; s1 < 2; ++s1) {
    for (int a1 = 0; a1 < 2; ++a1) {
      for (int s2 = 0; s2 < 2; ++s2) {
        for (int a2 = 0; a2 < 2; ++a2) {
          for (int s3 = 0; s3 < 2; ++s3) {
            for (int a3 = 0; a3 < 2; ++a3) {
              const double path = m.start[s1] * probs(s1, a1) * m.transition(a1)(s1, s2) *
                                  probs(s2, a2) * m.transition(a2)(s2, s3) * probs(s3, a3);
              const double ret = m.reward(s1, a1) + m.discount * m.reward(s2, a2) +
                                 m.discount * m.discount * m.reward(s3, a3);
              j += path * ret;
            }
          }
        }
      }
    }
  }
  return j;
}

Eigen::VectorXd tiny_exact_gradient(const TinyMdp& m, const Eigen::MatrixXd& logits) {
  Eigen::VectorXd gradient(4);
  const double h = 1e-6;
  for (int s = 0; s < 2; ++s) {
    for (int a = 0; a < 2; ++a) {
      Eigen::MatrixXd plus = logits, minus = logits;
      plus(s, a) += h;
      minus(s, a) -= h;
      gradient[s * 2 + a] =
          (tiny_exact_objective(m, plus) - tiny_exact_objective(m, minus)) / (2.0 * h);
    }
  }
  return gradient;
}

// Fixed baseline (any fixed state-only baseline preserves unbiasedness; this
// one shrinks variance): the exact tail values E[G_t | s_t = s] of the target
// policy, averaged over steps with the estimator's own gamma^t * occupancy
// weights.
agents::ValueTable tiny_baseline(const TinyMdp& m, const Eigen::MatrixXd& logits) {
  const Eigen::MatrixXd probs = softmax_rows(logits);
  Eigen::Matrix2d p_pi = Eigen::Matrix2d::Zero();
  Eigen::Vector2d r_pi = Eigen::Vector2d::Zero();
  for (int s = 0; s < 2; ++s) {
    for (int a = 0; a < 2; ++a) {
      p_pi.row(s) += probs(s, a) * m.transition(a).row(s);
      r_pi[s] += probs(s, a) * m.reward(s, a);
    }
  }
  // k-step tail values W_k and step-t occupancies d_t for horizon 3
  std::vector<Eigen::Vector2d> tail(4, Eigen::Vector2d::Zero());
  for (int k = 1; k <= 3; ++k) tail[k] = r_pi + m.discount * p_pi * tail[k - 1];
  std::vector<Eigen::Vector2d> occupancy{m.start, p_pi.transpose() * m.start,
                                         p_pi.transpose() * (p_pi.transpose() * m.start)};
  Eigen::Vector2d numerator = Eigen::Vector2d::Zero(), mass = Eigen::Vector2d::Zero();
  double gamma_t = 1.0;
  for (int t = 0; t < 3; ++t) {
    numerator += gamma_t * occupancy[static_cast<std::size_t>(t)].cwiseProduct(
                               tail[static_cast<std::size_t>(3 - t)]);
    mass += gamma_t * occupancy[static_cast<std::size_t>(t)];
    gamma_t *= m.discount;
  }
  agents::ValueTable table;
  table.values = numerator.cwiseQuotient(mass);
  table.visited.assign(2, true);
  return table;
}

Trajectory tiny_rollout(const TinyMdp& m, const Eigen::MatrixXd& behavior_probs,
                        SourceTag tag, Rng& rng) {
  Trajectory trajectory;
  trajectory.source = tag;
  trajectory.policy_id = tag == SourceTag::Social ? "behavior" : "actor";
  int state = rng.next_discrete(m.start);
  for (int t = 0; t < 3; ++t) {
    const Eigen::VectorXd row = behavior_probs.row(state).transpose();
    const int action = rng.next_discrete(row);
    const int next = rng.next_discrete(m.transition(action).row(state).transpose());
    trajectory.transitions.push_back(
        Transition{state, action, m.reward(state, action), row[action], next});
    state = next;
  }
  return trajectory;
}

bool criterion_estimator_unbiasedness(std::string& detail) {
  const TinyMdp m = tiny_mdp();
  const Eigen::MatrixXd logits = tiny_policy_logits();
  const agents::SoftmaxPolicy policy{logits};
  const Eigen::MatrixXd target_probs = softmax_rows(logits);
  const Eigen::VectorXd exact = tiny_exact_gradient(m, logits);
  const agents::ValueTable baseline = tiny_baseline(m, logits);

  // (a) on-policy Monte Carlo, 10^5 trajectories, batched mean of equal chunks
  Eigen::VectorXd on_policy = Eigen::VectorXd::Zero(4);
  {
    Rng rng(31337);
    const int chunks = 10, per_chunk = 10000;
    for (int chunk = 0; chunk < chunks; ++chunk) {
      std::vector<Trajectory> batch;
      batch.reserve(per_chunk);
      for (int n = 0; n < per_chunk; ++n) {
        batch.push_back(tiny_rollout(m, target_probs, SourceTag::Egocentric, rng));
      }
      on_policy += agents::policy_gradient(batch, policy, baseline, m.discount);
    }
    on_policy /= double(chunks);
  }

  // (b) uniform behavior policy, 2x10^5 trajectories, clipping disabled
  Eigen::VectorXd off_policy = Eigen::VectorXd::Zero(4);
  {
    Rng rng(271828);
    const Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(2, 2, 0.5);
    const int chunks = 20, per_chunk = 10000;
    for (int chunk = 0; chunk < chunks; ++chunk) {
      std::vector<Trajectory> batch;
      batch.reserve(per_chunk);
      for (int n = 0; n < per_chunk; ++n) {
        batch.push_back(tiny_rollout(m, uniform, SourceTag::Social, rng));
      }
      off_policy +=
          replay::off_policy_gradient(batch, policy, baseline, m.discount, std::nullopt);
    }
    off_policy /= double(chunks);
  }

  double worst_on = 0.0, worst_off = 0.0;
  for (int i = 0; i < 4; ++i) {
    worst_on = std::max(worst_on, std::abs(on_policy[i] - exact[i]) / std::abs(exact[i]));
    worst_off = std::max(worst_off, std::abs(off_policy[i] - exact[i]) / std::abs(exact[i]));
  }
  char buffer[160];
  std::snprintf(buffer, sizeof buffer,
                "on-policy err %.3f%%, off-policy err %.3f%% (tol 2%%); |grad| min %.3f",
                100.0 * worst_on, 100.0 * worst_off, exact.cwiseAbs().minCoeff());
  detail = buffer;
  return worst_on < 0.02 && worst_off < 0.02;
}

// ---------------------------------------------------------------------------
// Criterion 6: actor-critic reaches 95% of the planning optimum on the
// length-5 trap tube within 5000 episodes on at least 4 of 5 fixed seeds.
// ---------------------------------------------------------------------------

bool criterion_control(std::string& detail) {
  const env::Mdp mdp = env::build_trap_tube_task(5, true);
  const experiment::PlanningOracle oracle = experiment::value_iteration_oracle(mdp, 1e-10);
  const double optimal = mdp.start.dot(oracle.values.values);

  agents::TrainConfig config;
  config.episodes = 5000;
  config.max_steps = 12;
  config.batch_size = 10;
  config.eval_block = 100;
  config.policy_step = 3.2;
  config.buffer_capacity = 1000;

  int passed = 0;
  std::string ratios;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const agents::TrainResult result =
        agents::train_actor_critic(mdp, agents::Representation::Raw, config, seed);
    const double final_block =
        result.curve.mean_return[result.curve.mean_return.size() - 1];
    const double ratio = final_block / optimal;
    if (ratio >= 0.95) ++passed;
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%s%.3f", ratios.empty() ? "" : " ", ratio);
    ratios += buffer;
  }
  detail = "ratios [" + ratios + "] vs optimal " + std::to_string(optimal) + ", " +
           std::to_string(passed) + "/5 seeds >= 0.95 (need 4)";
  return passed >= 4;
}

// ---------------------------------------------------------------------------
// Criterion 7: bisimulation equals the pairwise-stability brute force on 100
// random MDPs.
// ---------------------------------------------------------------------------

env::Mdp random_small_mdp(Rng& rng) {
  const int states = 2 + rng.next_below(7);  // 2..8
  env::Mdp mdp;
  mdp.states = ProductSpace::of_cardinalities({states});
  mdp.action_count = 2;
  mdp.discount = 0.9;
  mdp.transition.assign(2, Eigen::MatrixXd::Zero(states, states));
  mdp.reward = Eigen::MatrixXd::Zero(states, 2);
  for (int s = 0; s < states; ++s) {
    for (int a = 0; a < 2; ++a) {
      if (rng.next_below(2) == 0) {
        mdp.transition[a](s, rng.next_below(states)) = 1.0;
      } else {
        // two half-mass targets (possibly equal, then mass 1)
        mdp.transition[a](s, rng.next_below(states)) += 0.5;
        mdp.transition[a](s, rng.next_below(states)) += 0.5;
      }
      mdp.reward(s, a) = rng.next_below(2);
    }
  }
  mdp.start = Eigen::VectorXd::Constant(states, 1.0 / states);
  return mdp;
}

env::Partition pairwise_stability_oracle(const env::Mdp& mdp) {
  const int n = static_cast<int>(mdp.states.size());
  std::vector<std::vector<bool>> equivalent(static_cast<std::size_t>(n),
                                            std::vector<bool>(static_cast<std::size_t>(n)));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      bool same = true;
      for (int a = 0; a < mdp.action_count; ++a) {
        if (std::abs(mdp.reward(i, a) - mdp.reward(j, a)) > 1e-9) same = false;
      }
      equivalent[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = same;
    }
  }
  bool changed = true;
  while (changed) {
    changed = false;
    // current classes from the relation
    std::vector<int> representative(static_cast<std::size_t>(n), -1);
    std::vector<std::vector<int>> classes;
    for (int i = 0; i < n; ++i) {
      if (representative[static_cast<std::size_t>(i)] != -1) continue;
      classes.emplace_back();
      for (int j = 0; j < n; ++j) {
        if (equivalent[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) {
          representative[static_cast<std::size_t>(j)] = static_cast<int>(classes.size()) - 1;
          classes.back().push_back(j);
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (!equivalent[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) continue;
        bool stable = true;
        for (int a = 0; a < mdp.action_count && stable; ++a) {
          for (const std::vector<int>& block : classes) {
            double mass_i = 0.0, mass_j = 0.0;
            for (int k : block) {
              mass_i += mdp.transition[a](i, k);
              mass_j += mdp.transition[a](j, k);
            }
            if (std::abs(mass_i - mass_j) > 1e-9) {
              stable = false;
              break;
            }
          }
        }
        if (!stable) {
          equivalent[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = false;
          equivalent[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = false;
          changed = true;
        }
      }
    }
  }
  // canonical ids: blocks numbered by smallest member
  env::Partition partition;
  partition.block_of.assign(static_cast<std::size_t>(n), -1);
  int next_id = 0;
  for (int i = 0; i < n; ++i) {
    if (partition.block_of[static_cast<std::size_t>(i)] != -1) continue;
    for (int j = i; j < n; ++j) {
      if (equivalent[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) {
        partition.block_of[static_cast<std::size_t>(j)] = next_id;
      }
    }
    ++next_id;
  }
  partition.block_count = next_id;
  return partition;
}

bool criterion_bisimulation(std::string& detail) {
  Rng rng(160231);
  int nontrivial = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const env::Mdp mdp = random_small_mdp(rng);
    const env::Partition mine = pairwise_stability_oracle(mdp);
    const env::Partition theirs = env::bisimulation_partition(mdp);
    if (mine.block_of != theirs.block_of || mine.block_count != theirs.block_count) {
      detail = "mismatch on trial " + std::to_string(trial);
      return false;
    }
    if (mine.block_count < static_cast<int>(mdp.states.size())) ++nontrivial;
  }
  detail = "100/100 exact, " + std::to_string(nontrivial) + " with merged states";
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 8: parent-set recovery of the dispenser dynamics.
// ---------------------------------------------------------------------------

bool criterion_structure_recovery(std::string& detail) {
  const env::Pomdp pomdp = env::build_dispenser_task(0.1, false);
  const std::vector<env::TransitionRecord> records =
      env::collect_random_transitions(pomdp.base, 50000, 25, 90210);

  const env::FactoredTransition with_actions =
      env::learn_factored_dynamics(pomdp.base.states, 4, records, 0.01);
  // button <- action; mechanism <- button; obstruction <- itself + action;
  // food <- mechanism + obstruction
  const std::vector<std::vector<int>> truth{{}, {0}, {2}, {1, 2}};
  const std::vector<bool> action_truth{true, false, true, false};
  bool ok = true;
  for (int j = 0; j < 4; ++j) {
    ok = ok && with_actions.mechanisms[static_cast<std::size_t>(j)].factor_parents ==
                   truth[static_cast<std::size_t>(j)] &&
         with_actions.mechanisms[static_cast<std::size_t>(j)].action_parent ==
             action_truth[static_cast<std::size_t>(j)];
  }

  const env::FactoredTransition action_free = env::learn_factored_dynamics(
      pomdp.base.states, 0, env::strip_actions(records), 0.01);
  // the action-independent mechanisms keep their exact parent sets
  const bool free_ok =
      action_free.mechanisms[1].factor_parents == std::vector<int>{0} &&
      action_free.mechanisms[3].factor_parents == std::vector<int>{1, 2} &&
      !action_free.mechanisms[1].action_parent && !action_free.mechanisms[3].action_parent;

  const auto set_text = [](const env::FactoredTransition& model) {
    std::string text;
    for (const env::FactorMechanism& mechanism : model.mechanisms) {
      text += "{";
      for (std::size_t i = 0; i < mechanism.factor_parents.size(); ++i) {
        text += (i ? "," : "") + std::to_string(mechanism.factor_parents[i]);
      }
      if (mechanism.action_parent) text += mechanism.factor_parents.empty() ? "A" : ",A";
      text += "}";
    }
    return text;
  };
  detail = "with actions " + set_text(with_actions) + (ok ? " ok" : " BAD") +
           "; action-free " + set_text(action_free) + (free_ok ? " ok" : " BAD");
  return ok && free_ok;
}

// ---------------------------------------------------------------------------
// Criterion 9: EgoSocial beats EgoOnly on the sparse dispenser.
// ---------------------------------------------------------------------------

bool criterion_integration_benefit(std::string& detail) {
  experiment::ExperimentConfig config;
  config.task.name = "dispenser";
  config.task.flip_prob = 0.1;
  config.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  config.episodes = 2000;
  config.max_steps = 12;
  config.batch_size = 10;
  config.eval_block = 100;
  config.policy_step = 0.1;
  config.ego_weight = 1.0;
  config.social_weight = 5.0;
  config.is_clip = 2.0;
  config.demo_episodes = 20;
  config.demo_horizon = 6;
  config.demo_epsilon = 0.5;

  config.mode = replay::IntegrationMode::EgoOnly;
  const experiment::Scorecard ego = experiment::run_experiment(config);
  config.mode = replay::IntegrationMode::EgoSocial;
  const experiment::Scorecard social = experiment::run_experiment(config);

  const experiment::ComparisonReport report = experiment::compare_agents(
      {social, ego}, experiment::ComparisonMetric::FinalReturn, 0.0);
  const experiment::PairComparison& pair = report.pairs[0];
  char buffer[160];
  std::snprintf(buffer, sizeof buffer,
                "final ego %.3f social %.3f, diff %+.3f, bootstrap CI [%+.3f, %+.3f]",
                ego.final_mean, social.final_mean, pair.mean_difference, pair.ci_low,
                pair.ci_high);
  detail = buffer;
  return pair.significant && pair.mean_difference > 0.0;
}

// ---------------------------------------------------------------------------
// Criterion 10: gradients from Natural-tagged data fail with the dedicated
// error code.
// ---------------------------------------------------------------------------

bool criterion_source_firewall(std::string& detail) {
  const Trajectory natural = replay::ingest_natural({{0, 1}, {1, 0}});
  const agents::SoftmaxPolicy policy{Eigen::MatrixXd::Zero(2, 2)};
  agents::ValueTable zero;
  zero.values = Eigen::VectorXd::Zero(2);
  zero.visited.assign(2, true);

  int rejected = 0;
  const auto expect_rejection = [&rejected](const std::function<void()>& attempt) {
    try {
      attempt();
    } catch (const Error& error) {
      if (error.code() == ErrorCode::NaturalSourceRejected) ++rejected;
    }
  };
  expect_rejection([&] { agents::policy_gradient({natural}, policy, zero, 0.9); });
  expect_rejection(
      [&] { replay::off_policy_gradient({natural}, policy, zero, 0.9, std::nullopt); });
  expect_rejection([&] { agents::estimate_values({natural}, 0.9, 2, 2); });

  detail = std::to_string(rejected) + "/3 gradient/value paths rejected NaturalSourceRejected";
  return rejected == 3;
}

// ---------------------------------------------------------------------------
// Criterion 11: the CLI is byte-reproducible.
// ---------------------------------------------------------------------------

int run_command(const std::string& command) { return std::system(command.c_str()); }

bool same_file_bytes(const std::filesystem::path& a, const std::filesystem::path& b) {
  return read_text_file(a.string()) == read_text_file(b.string());
}

bool criterion_cli_determinism(std::string& detail) {
  const std::string cli = SCMRL_CLI_PATH;
  const std::filesystem::path root =
      std::filesystem::temp_directory_path() / "scmrl_acceptance_cli";
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(root);

  write_text_file((root / "trap.kv").string(),
                  "[task]\n"
                  "name = trap_tube\n"
                  "length = 4\n"
                  "\n"
                  "[run]\n"
                  "seeds = 3 4\n"
                  "episodes = 200\n"
                  "max_steps = 10\n"
                  "batch_size = 5\n"
                  "eval_block = 50\n"
                  "policy_step = 1.2\n");
  write_text_file((root / "social.kv").string(),
                  "[task]\n"
                  "name = dispenser\n"
                  "\n"
                  "[run]\n"
                  "mode = EgoSocial\n"
                  "seeds = 7\n"
                  "episodes = 200\n"
                  "max_steps = 8\n"
                  "eval_block = 50\n"
                  "policy_step = 0.1\n"
                  "\n"
                  "[sources]\n"
                  "social_weight = 5\n"
                  "demo_epsilon = 0.5\n"
                  "\n"
                  "[thresholds]\n"
                  "is_clip = 2\n");
  write_text_file((root / "joint.kv").string(),
                  "[joint]\n"
                  "factors = 2 2\n"
                  "codes = 2 2\n"
                  "probabilities = 0.25 0 0 0 0 0.25 0 0 0 0 0.25 0 0 0 0 0.25\n");

  const auto quoted = [](const std::filesystem::path& path) {
    return "'" + path.string() + "'";
  };
  int failures = 0;
  const auto expect_zero = [&failures, &run = run_command](const std::string& command) {
    if (run(command) != 0) ++failures;
  };
  // identical invocations (same argv, same relative --out) from per-round
  // working directories, so outputs can be byte-compared across rounds
  for (int round = 1; round <= 2; ++round) {
    const std::filesystem::path round_dir = root / ("r" + std::to_string(round));
    std::filesystem::create_directories(round_dir);
    for (const char* config : {"trap", "social"}) {
      expect_zero("cd " + quoted(round_dir) + " && " + quoted(cli) + " run " +
                  quoted(root / (std::string(config) + ".kv")) + " --out " + config +
                  " > " + std::string(config) + ".stdout");
    }
  }
  expect_zero(quoted(cli) + " oracle " + quoted(root / "trap.kv") + " > " +
              quoted(root / "oracle1.stdout"));
  expect_zero(quoted(cli) + " oracle " + quoted(root / "trap.kv") + " > " +
              quoted(root / "oracle2.stdout"));
  expect_zero(quoted(cli) + " score --joint " + quoted(root / "joint.kv") + " > " +
              quoted(root / "score1.stdout"));
  expect_zero(quoted(cli) + " score --joint " + quoted(root / "joint.kv") + " > " +
              quoted(root / "score2.stdout"));
  expect_zero(quoted(cli) + " compare " + quoted(root / "r1" / "trap") + " " +
              quoted(root / "r2" / "trap") + " --metric finalReturn > " +
              quoted(root / "compare1.stdout"));
  expect_zero(quoted(cli) + " compare " + quoted(root / "r1" / "trap") + " " +
              quoted(root / "r2" / "trap") + " --metric finalReturn > " +
              quoted(root / "compare2.stdout"));
  if (failures != 0) {
    detail = std::to_string(failures) + " CLI invocations exited nonzero";
    return false;
  }

  int mismatches = 0;
  for (const char* config : {"trap", "social"}) {
    for (const char* file :
         {"scorecard.json", "curves.csv", "mi_matrix.csv", "partition.json"}) {
      if (!same_file_bytes(root / "r1" / config / file, root / "r2" / config / file)) {
        ++mismatches;
      }
    }
    if (!same_file_bytes(root / "r1" / (std::string(config) + ".stdout"),
                         root / "r2" / (std::string(config) + ".stdout"))) {
      ++mismatches;
    }
  }
  for (const char* verb : {"oracle", "score", "compare"}) {
    if (!same_file_bytes(root / (std::string(verb) + "1.stdout"),
                         root / (std::string(verb) + "2.stdout"))) {
      ++mismatches;
    }
  }
  std::filesystem::remove_all(root);
  detail = mismatches == 0
               ? "2 runs x (4 report files + stdout) + oracle/score/compare stdout identical"
               : std::to_string(mismatches) + " byte mismatches";
  return mismatches == 0;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<bool(std::string&)> check;
  };
  const std::vector<Criterion> criteria{
      {"SCM exactness (50 random models)", criterion_scm_exactness},
      {"pipeline verdicts (identity/xor/lossy)", criterion_pipelines},
      {"score calibration (aligned/independent/mixer)", criterion_score_calibration},
      {"gradient fidelity vs finite differences (20+20)", criterion_gradient_fidelity},
      {"estimator unbiasedness (2-state horizon-3)", criterion_estimator_unbiasedness},
      {"control: 95% of oracle on trap-tube-5", criterion_control},
      {"bisimulation vs brute force (100 MDPs)", criterion_bisimulation},
      {"dispenser structure recovery (5e4 transitions)", criterion_structure_recovery},
      {"integration benefit: EgoSocial > EgoOnly", criterion_integration_benefit},
      {"source firewall on Natural data", criterion_source_firewall},
      {"CLI byte-reproducibility", criterion_cli_determinism},
  };

  bool all_passed = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    std::string detail;
    bool passed = false;
    try {
      passed = criteria[i].check(detail);
    } catch (const std::exception& error) {
      detail = std::string("exception: ") + error.what();
    }
    all_passed = all_passed && passed;
    std::printf("C%02zu %-52s %s%s%s\n", i + 1, criteria[i].name,
                passed ? "PASS" : "FAIL", detail.empty() ? "" : " — ", detail.c_str());
    std::fflush(stdout);
  }
  return all_passed ? 0 : 1;
}
