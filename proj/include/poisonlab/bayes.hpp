#pragma once

#include "poisonlab/common.hpp"

namespace poisonlab {

/// Gamma hyperprior parameters for the weight precision (lambda) and the noise
/// precision (beta).
struct HyperPriors {
  Scalar lambda_shape = 1e-6;  // lambda_1
  Scalar lambda_rate = 1e-6;   // lambda_2
  Scalar beta_shape = 1e-6;    // beta_1
  Scalar beta_rate = 1e-6;     // beta_2
};

struct PosteriorState {
  Vector mean;        // mu_post
  Matrix covariance;  // Sigma_post
  Scalar lambda = 1.0;
  Scalar beta = 1.0;
  Vector gamma;       // gamma_j = 1 - lambda * Sigma_jj
  Index iterations = 0;
  std::vector<Scalar> objective_trace;  // log evidence + log hyperprior per iterate
};

/// Thin SVD of a fixed design matrix; every posterior for any (lambda, beta) is
/// assembled from it without re-factorizing.
class SpectralDesign {
public:
  explicit SpectralDesign(const Eigen::Ref<const Matrix>& X);

  Index rows() const { return n_; }
  Index cols() const { return d_; }

  /// Sigma = (beta X^T X + lambda I)^-1, mu = beta Sigma X^T y.
  PosteriorState posterior(const Vector& y, Scalar lambda, Scalar beta) const;

  /// log p(y | X, lambda, beta).
  Scalar log_evidence(const Vector& y, Scalar lambda, Scalar beta) const;

private:
  Index n_ = 0, d_ = 0;
  Matrix U_;        // n x r
  Vector s2_;       // d squared singular values, zero-padded
  Matrix V_;        // d x d
  Matrix X_;
};

PosteriorState posterior(const Matrix& X, const Vector& y, Scalar lambda, Scalar beta);

Scalar log_evidence(const Matrix& X, const Vector& y, Scalar lambda, Scalar beta);

/// Log evidence plus log Gamma hyperpriors on log(lambda) and log(beta):
///   + lambda_1 log lambda - lambda_2 lambda + beta_1 log beta - beta_2 beta.
/// Its stationary points are the fixed points of `em_fit`.
Scalar log_hyper_objective(const Matrix& X, const Vector& y, Scalar lambda, Scalar beta,
                           const HyperPriors& priors);

/// Evidence-approximation updates
///   lambda <- (sum gamma + 2 lambda_1) / (||mu||^2 + 2 lambda_2)
///   1/beta <- (||y - X mu||^2 + 2 beta_2) / (n - sum gamma + 2 beta_1)
/// until `max_iters` or relative hyperparameter change below `tol`.
PosteriorState em_fit(const Matrix& X, const Vector& y, const HyperPriors& priors = {},
                      Index max_iters = 300, Scalar tol = 1e-6);

struct Predictive {
  Scalar mean = 0.0;
  Scalar variance = 0.0;  // 1/beta + x^T Sigma x
};

Predictive predictive(const Vector& x, const PosteriorState& state);

enum class Zone { Accept, Flag, Reject };

const char* zone_name(Zone z);

struct BayesCleanConfig {
  Scalar c1 = 0.5;
  Scalar c2 = 1.5;
  HyperPriors priors;
  Index max_iters = 300;
  bool symmetric = true;  // |y - mu| <= c sigma; false: |y| <= |mu + c sigma|
  bool add_bias = true;
};

struct CleanPartition {
  IndexList accept, flag, reject;  // I1, I2, I3
  Vector mean, stddev;             // per-point predictive mean and sigma
  std::vector<Zone> zones;
  PosteriorState state;
};

/// Zone of one point from its label and predictive (mean, sigma).
Zone classify_point(Scalar y, Scalar mean, Scalar stddev, Scalar c1, Scalar c2, bool symmetric);

CleanPartition bayesclean(const Dataset& d, const BayesCleanConfig& cfg = {});

/// Appends a constant column of ones.
Matrix with_bias(const Eigen::Ref<const Matrix>& X);

} // namespace poisonlab
