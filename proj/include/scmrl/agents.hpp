#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "scmrl/env.hpp"
#include "scmrl/rng.hpp"
#include "scmrl/trajectory.hpp"

namespace scmrl::agents {

// Tabular policy: one row of action logits per representation index.
// Action probabilities are the softmax of a row — always strictly positive.
struct SoftmaxPolicy {
  Eigen::MatrixXd logits;  // (representation index, action)
};

Eigen::VectorXd action_probabilities(const SoftmaxPolicy& policy, long long rep);
int sample_action(const SoftmaxPolicy& policy, long long rep, Rng& rng);

// First-visit Monte-Carlo tables; `visited` flags entries that received at
// least one sample (unvisited entries stay 0).
struct ValueTable {
  Eigen::VectorXd values;
  std::vector<bool> visited;
};

struct QTable {
  Eigen::MatrixXd values;  // (representation index, action)
  std::vector<std::vector<bool>> visited;
};

// Flat parameter/gradient vector; the component ordering is declared by
// whichever operation produced it (see vae_parameters and policy_gradient).
using GradientVector = Eigen::VectorXd;

// Linear-Gaussian VAE with diagonal-Gaussian encoder, unit-variance decoder,
// and standard-normal prior. beta ≥ 1 scales the KL term.
struct GaussianVae {
  Eigen::MatrixXd enc_mean_w;    // (latent, obs)
  Eigen::VectorXd enc_mean_b;    // latent
  Eigen::MatrixXd enc_logvar_w;  // (latent, obs)
  Eigen::VectorXd enc_logvar_b;  // latent
  Eigen::MatrixXd dec_w;         // (obs, latent)
  Eigen::VectorXd dec_b;         // obs
  double beta = 1.0;
  int latent_dim = 0;
  int obs_dim = 0;
};

// Fresh model: weight entries 0.1·N(0,1) drawn in parameter order from the
// seed, biases zero (so the encoder starts at unit variance).
GaussianVae make_vae(int obs_dim, int latent_dim, double beta, std::uint64_t seed);

// Parameter packing order: enc_mean_w (row-major), enc_mean_b, enc_logvar_w
// (row-major), enc_logvar_b, dec_w (row-major), dec_b.
long long vae_parameter_count(const GaussianVae& vae);
GradientVector vae_parameters(const GaussianVae& vae);
GaussianVae with_vae_parameters(const GaussianVae& vae, const GradientVector& parameters);

Eigen::VectorXd encode_mean(const GaussianVae& vae, const Eigen::VectorXd& x);

// Closed-form KL(q(z|x) ‖ N(0, I)) = 0.5 Σ_k (μ_k² + σ_k² − log σ_k² − 1).
double vae_kl(const GaussianVae& vae, const Eigen::VectorXd& x);

// Monte-Carlo ELBO estimate: mean over n_samples reparameterized draws of
// log p(x|z) minus beta times the closed-form KL. Deterministic in seed
// (draw order: per sample, latent dims ascending).
double elbo(const GaussianVae& vae, const Eigen::VectorXd& x, int n_samples, std::uint64_t seed);

// Gradient of the one-draw batch objective
//   F(θ, φ) = (1/B) Σ_b elbo(vae, batch[b], 1, derive_seed(seed, b))
// with respect to the packed parameters, via the reparameterization path.
// Finite differences of that same expression reproduce it component-wise.
GradientVector vae_gradient(const GaussianVae& vae, const std::vector<Eigen::VectorXd>& batch,
                            std::uint64_t seed);

struct VaeTrainConfig {
  int latent_dim = 4;
  double beta = 1.0;
  int steps = 500;
  double step_size = 0.001;
  std::uint64_t seed = 1;
};

struct EncoderResult {
  GaussianVae vae;
  double final_elbo;  // 16-draw estimate averaged over the dataset
};

// Full-batch gradient ascent on the ELBO for a fixed number of steps.
EncoderResult train_encoder(const std::vector<Eigen::VectorXd>& dataset,
                            const VaeTrainConfig& config);

// Σ_{i ≥ from_step} discount^(i − from_step) · rewards[i]
double discounted_return(const std::vector<double>& rewards, double discount, int from_step);

struct ValueEstimates {
  ValueTable v;
  QTable q;
};

// First-visit Monte-Carlo estimates of V and Q over representation indices.
// Natural trajectories carry no rewards and are rejected.
ValueEstimates estimate_values(const std::vector<Trajectory>& trajectories, double discount,
                               long long state_count, int action_count);

// REINFORCE-with-baseline estimator of ∇J for the discounted objective:
//   (1/N) Σ_n Σ_t γ^t ∇_ω log π_ω(a_t|s_t) · (G_t − V(s_t))
// with G_t the tail discounted return; the γ^t weight makes the estimator's
// expectation exactly ∇J. Packed row-major (representation × action).
// Natural trajectories are rejected — gradients never see action-free data.
GradientVector policy_gradient(const std::vector<Trajectory>& trajectories,
                               const SoftmaxPolicy& policy, const ValueTable& baseline,
                               double discount);

// What the policy conditions on. Raw uses the environment state index even
// under partial observability; MixedObservation uses the observation index;
// LearnedCodes maps each observation through a caller-supplied code table.
enum class Representation { Raw, MixedObservation, LearnedCodes };

struct TrainConfig {
  int episodes = 1000;
  int max_steps = 20;
  int batch_size = 10;   // episodes per gradient update
  int eval_block = 100;  // episodes per learning-curve entry
  double policy_step = 0.05;
  long long buffer_capacity = 1000;
  std::vector<int> observation_codes;  // observation → code bucket (LearnedCodes)
  int code_count = 0;
};

struct LearningCurve {
  int block_size = 0;
  Eigen::VectorXd mean_return;    // mean discounted episode return per block
  Eigen::VectorXd stderr_return;  // sample stderr per block
};

// Summarizes per-episode returns into evaluation blocks (the last block may
// be partial); stderr of a single-episode block is 0.
LearningCurve block_curve(const Eigen::VectorXd& returns, int block_size);

struct TrainResult {
  SoftmaxPolicy policy;
  Eigen::VectorXd episode_returns;
  LearningCurve curve;
};

// Tabular actor-critic: collects episodes with the current policy into a
// FIFO replay buffer, and after every batch updates the logits with the
// Monte-Carlo-baselined policy gradient of that fresh batch. Deterministic
// in seed.
TrainResult train_actor_critic(const env::Mdp& mdp, Representation representation,
                               const TrainConfig& config, std::uint64_t seed);
TrainResult train_actor_critic(const env::Pomdp& pomdp, Representation representation,
                               const TrainConfig& config, std::uint64_t seed);

}  // namespace scmrl::agents
