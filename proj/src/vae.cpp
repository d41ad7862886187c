#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "scmrl/agents.hpp"
#include "scmrl/error.hpp"
#include "scmrl/rng.hpp"

namespace scmrl::agents {

namespace {

void check_vae(const GaussianVae& vae) {
  if (vae.obs_dim < 1 || vae.latent_dim < 1) {
    fail(ErrorCode::OutOfRange, "model dimensions must be positive");
  }
  if (vae.beta < 1.0) {
    fail(ErrorCode::OutOfRange, "beta must be at least 1");
  }
  const bool shapes_ok = vae.enc_mean_w.rows() == vae.latent_dim &&
                         vae.enc_mean_w.cols() == vae.obs_dim &&
                         vae.enc_mean_b.size() == vae.latent_dim &&
                         vae.enc_logvar_w.rows() == vae.latent_dim &&
                         vae.enc_logvar_w.cols() == vae.obs_dim &&
                         vae.enc_logvar_b.size() == vae.latent_dim &&
                         vae.dec_w.rows() == vae.obs_dim && vae.dec_w.cols() == vae.latent_dim &&
                         vae.dec_b.size() == vae.obs_dim;
  if (!shapes_ok) {
    fail(ErrorCode::ShapeMismatch, "parameter shapes do not match the declared dimensions");
  }
}

void check_input(const GaussianVae& vae, const Eigen::VectorXd& x) {
  if (x.size() != vae.obs_dim) {
    fail(ErrorCode::ShapeMismatch, "input dimension does not match the model");
  }
}

// log p(x|z) for the unit-variance Gaussian decoder.
double log_recon(const GaussianVae& vae, const Eigen::VectorXd& x, const Eigen::VectorXd& z) {
  const Eigen::VectorXd mean = vae.dec_w * z + vae.dec_b;
  const double d = static_cast<double>(vae.obs_dim);
  return -0.5 * (x - mean).squaredNorm() - 0.5 * d * std::log(2.0 * std::numbers::pi);
}

void pack_matrix(const Eigen::MatrixXd& m, GradientVector& out, long long& at) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out[at++] = m(r, c);
    }
  }
}

void pack_vector(const Eigen::VectorXd& v, GradientVector& out, long long& at) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out[at++] = v[i];
  }
}

void unpack_matrix(const GradientVector& in, long long& at, Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = in[at++];
    }
  }
}

void unpack_vector(const GradientVector& in, long long& at, Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v[i] = in[at++];
  }
}

}  // namespace

GaussianVae make_vae(int obs_dim, int latent_dim, double beta, std::uint64_t seed) {
  if (obs_dim < 1 || latent_dim < 1) {
    fail(ErrorCode::OutOfRange, "model dimensions must be positive");
  }
  if (beta < 1.0) {
    fail(ErrorCode::OutOfRange, "beta must be at least 1");
  }
  GaussianVae vae;
  vae.obs_dim = obs_dim;
  vae.latent_dim = latent_dim;
  vae.beta = beta;
  Rng rng(seed);
  auto init = [&rng](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        m(r, c) = 0.1 * rng.next_normal();
      }
    }
    return m;
  };
  vae.enc_mean_w = init(latent_dim, obs_dim);
  vae.enc_mean_b = Eigen::VectorXd::Zero(latent_dim);
  vae.enc_logvar_w = init(latent_dim, obs_dim);
  vae.enc_logvar_b = Eigen::VectorXd::Zero(latent_dim);
  vae.dec_w = init(obs_dim, latent_dim);
  vae.dec_b = Eigen::VectorXd::Zero(obs_dim);
  return vae;
}

long long vae_parameter_count(const GaussianVae& vae) {
  const long long k = vae.latent_dim;
  const long long d = vae.obs_dim;
  return 2 * (k * d + k) + d * k + d;
}

GradientVector vae_parameters(const GaussianVae& vae) {
  check_vae(vae);
  GradientVector out(vae_parameter_count(vae));
  long long at = 0;
  pack_matrix(vae.enc_mean_w, out, at);
  pack_vector(vae.enc_mean_b, out, at);
  pack_matrix(vae.enc_logvar_w, out, at);
  pack_vector(vae.enc_logvar_b, out, at);
  pack_matrix(vae.dec_w, out, at);
  pack_vector(vae.dec_b, out, at);
  return out;
}

GaussianVae with_vae_parameters(const GaussianVae& vae, const GradientVector& parameters) {
  check_vae(vae);
  if (parameters.size() != vae_parameter_count(vae)) {
    fail(ErrorCode::ShapeMismatch, "parameter vector has the wrong length");
  }
  GaussianVae out = vae;
  long long at = 0;
  unpack_matrix(parameters, at, out.enc_mean_w);
  unpack_vector(parameters, at, out.enc_mean_b);
  unpack_matrix(parameters, at, out.enc_logvar_w);
  unpack_vector(parameters, at, out.enc_logvar_b);
  unpack_matrix(parameters, at, out.dec_w);
  unpack_vector(parameters, at, out.dec_b);
  return out;
}

Eigen::VectorXd encode_mean(const GaussianVae& vae, const Eigen::VectorXd& x) {
  check_vae(vae);
  check_input(vae, x);
  return vae.enc_mean_w * x + vae.enc_mean_b;
}

double vae_kl(const GaussianVae& vae, const Eigen::VectorXd& x) {
  check_vae(vae);
  check_input(vae, x);
  const Eigen::VectorXd mu = vae.enc_mean_w * x + vae.enc_mean_b;
  const Eigen::VectorXd logvar = vae.enc_logvar_w * x + vae.enc_logvar_b;
  // KL(q(z|x) ‖ N(0, I)) = 0.5 Σ_k (μ_k² + σ_k² − log σ_k² − 1)
  double kl = 0.0;
  for (Eigen::Index k = 0; k < vae.latent_dim; ++k) {
    kl += 0.5 * (mu[k] * mu[k] + std::exp(logvar[k]) - logvar[k] - 1.0);
  }
  return kl;
}

double elbo(const GaussianVae& vae, const Eigen::VectorXd& x, int n_samples,
            std::uint64_t seed) {
  check_vae(vae);
  check_input(vae, x);
  if (n_samples < 1) {
    fail(ErrorCode::OutOfRange, "need at least one sample");
  }
  const Eigen::VectorXd mu = vae.enc_mean_w * x + vae.enc_mean_b;
  const Eigen::VectorXd logvar = vae.enc_logvar_w * x + vae.enc_logvar_b;
  const Eigen::VectorXd sigma = (0.5 * logvar).array().exp();
  Rng rng(seed);
  double recon = 0.0;
  for (int n = 0; n < n_samples; ++n) {
    Eigen::VectorXd z(vae.latent_dim);
    for (Eigen::Index k = 0; k < vae.latent_dim; ++k) {
      z[k] = mu[k] + sigma[k] * rng.next_normal();
    }
    recon += log_recon(vae, x, z);
  }
  recon /= static_cast<double>(n_samples);
  return recon - vae.beta * vae_kl(vae, x);
}

GradientVector vae_gradient(const GaussianVae& vae, const std::vector<Eigen::VectorXd>& batch,
                            std::uint64_t seed) {
  check_vae(vae);
  if (batch.empty()) {
    fail(ErrorCode::Empty, "gradient needs at least one input");
  }
  Eigen::MatrixXd d_enc_mean_w = Eigen::MatrixXd::Zero(vae.latent_dim, vae.obs_dim);
  Eigen::VectorXd d_enc_mean_b = Eigen::VectorXd::Zero(vae.latent_dim);
  Eigen::MatrixXd d_enc_logvar_w = Eigen::MatrixXd::Zero(vae.latent_dim, vae.obs_dim);
  Eigen::VectorXd d_enc_logvar_b = Eigen::VectorXd::Zero(vae.latent_dim);
  Eigen::MatrixXd d_dec_w = Eigen::MatrixXd::Zero(vae.obs_dim, vae.latent_dim);
  Eigen::VectorXd d_dec_b = Eigen::VectorXd::Zero(vae.obs_dim);

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Eigen::VectorXd& x = batch[b];
    check_input(vae, x);
    const Eigen::VectorXd mu = vae.enc_mean_w * x + vae.enc_mean_b;
    const Eigen::VectorXd logvar = vae.enc_logvar_w * x + vae.enc_logvar_b;
    const Eigen::VectorXd sigma = (0.5 * logvar).array().exp();
    Rng rng(derive_seed(seed, b));
    Eigen::VectorXd eps(vae.latent_dim);
    for (Eigen::Index k = 0; k < vae.latent_dim; ++k) {
      eps[k] = rng.next_normal();
    }
    const Eigen::VectorXd z = mu + sigma.cwiseProduct(eps);
    const Eigen::VectorXd residual = x - (vae.dec_w * z + vae.dec_b);
    const Eigen::VectorXd d_z = vae.dec_w.transpose() * residual;
    // Reparameterized path through z plus the closed-form KL terms.
    const Eigen::VectorXd d_mu = d_z - vae.beta * mu;
    Eigen::VectorXd d_logvar(vae.latent_dim);
    for (Eigen::Index k = 0; k < vae.latent_dim; ++k) {
      d_logvar[k] = d_z[k] * 0.5 * sigma[k] * eps[k] -
                    vae.beta * 0.5 * (sigma[k] * sigma[k] - 1.0);
    }
    d_enc_mean_w += d_mu * x.transpose();
    d_enc_mean_b += d_mu;
    d_enc_logvar_w += d_logvar * x.transpose();
    d_enc_logvar_b += d_logvar;
    d_dec_w += residual * z.transpose();
    d_dec_b += residual;
  }

  const double scale = 1.0 / static_cast<double>(batch.size());
  GradientVector out(vae_parameter_count(vae));
  long long at = 0;
  pack_matrix(d_enc_mean_w * scale, out, at);
  pack_vector(d_enc_mean_b * scale, out, at);
  pack_matrix(d_enc_logvar_w * scale, out, at);
  pack_vector(d_enc_logvar_b * scale, out, at);
  pack_matrix(d_dec_w * scale, out, at);
  pack_vector(d_dec_b * scale, out, at);
  return out;
}

EncoderResult train_encoder(const std::vector<Eigen::VectorXd>& dataset,
                            const VaeTrainConfig& config) {
  if (dataset.empty()) {
    fail(ErrorCode::Empty, "training needs data");
  }
  if (config.latent_dim < 1) {
    fail(ErrorCode::OutOfRange, "latent dimension must be positive");
  }
  if (config.beta < 1.0) {
    fail(ErrorCode::OutOfRange, "beta must be at least 1");
  }
  if (config.steps < 0 || config.step_size <= 0.0) {
    fail(ErrorCode::OutOfRange, "invalid optimization settings");
  }
  const int obs_dim = static_cast<int>(dataset.front().size());
  GaussianVae vae = make_vae(obs_dim, config.latent_dim, config.beta,
                             derive_seed(config.seed, 0));
  for (int step = 0; step < config.steps; ++step) {
    const GradientVector grad = vae_gradient(vae, dataset, derive_seed(config.seed, 1 + step));
    vae = with_vae_parameters(vae, vae_parameters(vae) + config.step_size * grad);
  }
  const std::uint64_t eval_seed = derive_seed(config.seed, static_cast<std::uint64_t>(config.steps) + 1);
  double total = 0.0;
  for (std::size_t b = 0; b < dataset.size(); ++b) {
    total += elbo(vae, dataset[b], 16, derive_seed(eval_seed, b));
  }
  return EncoderResult{std::move(vae), total / static_cast<double>(dataset.size())};
}

}  // namespace scmrl::agents
