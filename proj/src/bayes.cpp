#include "poisonlab/bayes.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <numbers>

namespace poisonlab {

SpectralDesign::SpectralDesign(const Eigen::Ref<const Matrix>& X)
    : n_(X.rows()), d_(X.cols()), X_(X) {
  Eigen::BDCSVD<Matrix> svd(X_, Eigen::ComputeThinU | Eigen::ComputeFullV);
  U_ = svd.matrixU();
  V_ = svd.matrixV();
  s2_ = Vector::Zero(d_);
  const Vector& s = svd.singularValues();
  s2_.head(s.size()) = s.array().square().matrix();
}

PosteriorState SpectralDesign::posterior(const Vector& y, Scalar lambda, Scalar beta) const {
  if (!(lambda > 0) || !(beta > 0)) throw Error("posterior precisions must be positive");
  if (y.size() != n_) throw Error("label count does not match design rows");
  const Index r = U_.cols();
  const Vector denom = (beta * s2_.array() + lambda).matrix();
  PosteriorState st;
  st.lambda = lambda;
  st.beta = beta;
  st.covariance = V_ * denom.cwiseInverse().asDiagonal() * V_.transpose();
  st.covariance = 0.5 * (st.covariance + st.covariance.transpose());
  const Vector uty = U_.transpose() * y;
  const Vector s = s2_.head(r).cwiseSqrt();
  const Vector coef = (beta * s.array() * uty.array() / denom.head(r).array()).matrix();
  st.mean = V_.leftCols(r) * coef;
  st.gamma = (1.0 - lambda * st.covariance.diagonal().array()).matrix();
  return st;
}

Scalar SpectralDesign::log_evidence(const Vector& y, Scalar lambda, Scalar beta) const {
  const PosteriorState st = posterior(y, lambda, beta);
  const Scalar n = static_cast<Scalar>(n_);
  const Scalar d = static_cast<Scalar>(d_);
  const Scalar misfit = (y - X_ * st.mean).squaredNorm();
  const Scalar logdet = (beta * s2_.array() + lambda).log().sum();
  return 0.5 * d * std::log(lambda) + 0.5 * n * std::log(beta) - 0.5 * beta * misfit -
         0.5 * lambda * st.mean.squaredNorm() - 0.5 * logdet -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

PosteriorState posterior(const Matrix& X, const Vector& y, Scalar lambda, Scalar beta) {
  return SpectralDesign(X).posterior(y, lambda, beta);
}

Scalar log_evidence(const Matrix& X, const Vector& y, Scalar lambda, Scalar beta) {
  return SpectralDesign(X).log_evidence(y, lambda, beta);
}

namespace {

Scalar log_prior(Scalar lambda, Scalar beta, const HyperPriors& p) {
  return p.lambda_shape * std::log(lambda) - p.lambda_rate * lambda + p.beta_shape * std::log(beta) -
         p.beta_rate * beta;
}

} // namespace

Scalar log_hyper_objective(const Matrix& X, const Vector& y, Scalar lambda, Scalar beta,
                           const HyperPriors& priors) {
  return log_evidence(X, y, lambda, beta) + log_prior(lambda, beta, priors);
}

PosteriorState em_fit(const Matrix& X, const Vector& y, const HyperPriors& priors, Index max_iters,
                      Scalar tol) {
  if (max_iters < 1) throw Error("EM needs at least one iteration");
  if (!(priors.lambda_shape > 0 && priors.lambda_rate > 0 && priors.beta_shape > 0 && priors.beta_rate > 0))
    throw Error("hyperprior parameters must be positive");
  if (X.rows() != y.size() || X.rows() == 0) throw Error("design and labels disagree in size");

  const SpectralDesign design(X);
  const Scalar n = static_cast<Scalar>(X.rows());
  Scalar lambda = 1.0;
  const Scalar var = (y.array() - y.mean()).square().mean();
  Scalar beta = var > 1e-12 ? 1.0 / var : 1.0;

  PosteriorState st;
  std::vector<Scalar> trace;
  Index it = 0;
  for (; it < max_iters; ++it) {
    st = design.posterior(y, lambda, beta);
    trace.push_back(design.log_evidence(y, lambda, beta) + log_prior(lambda, beta, priors));
    const Scalar g = st.gamma.sum();
    const Scalar misfit = (y - X * st.mean).squaredNorm();
    const Scalar new_lambda = (g + 2.0 * priors.lambda_shape) / (st.mean.squaredNorm() + 2.0 * priors.lambda_rate);
    const Scalar new_beta = (n - g + 2.0 * priors.beta_shape) / (misfit + 2.0 * priors.beta_rate);
    if (!std::isfinite(new_lambda) || !std::isfinite(new_beta) || new_lambda <= 0 || new_beta <= 0)
      throw Error("EM produced non-finite hyperparameters at iteration " + std::to_string(it + 1));
    const Scalar change = std::max(std::abs(new_lambda - lambda) / lambda, std::abs(new_beta - beta) / beta);
    lambda = new_lambda;
    beta = new_beta;
    if (change < tol) {
      ++it;
      break;
    }
  }
  st = design.posterior(y, lambda, beta);
  trace.push_back(design.log_evidence(y, lambda, beta) + log_prior(lambda, beta, priors));
  st.iterations = it;
  st.objective_trace = std::move(trace);
  return st;
}

Predictive predictive(const Vector& x, const PosteriorState& state) {
  if (x.size() != state.mean.size()) throw Error("probe dimension does not match posterior");
  Predictive p;
  p.mean = state.mean.dot(x);
  p.variance = 1.0 / state.beta + x.dot(state.covariance * x);
  return p;
}

const char* zone_name(Zone z) {
  switch (z) {
    case Zone::Accept: return "accept";
    case Zone::Flag: return "flag";
    case Zone::Reject: return "reject";
  }
  return "?";
}

Zone classify_point(Scalar y, Scalar mean, Scalar stddev, Scalar c1, Scalar c2, bool symmetric) {
  if (symmetric) {
    const Scalar dev = std::abs(y - mean);
    if (dev <= c1 * stddev) return Zone::Accept;
    if (dev <= c2 * stddev) return Zone::Flag;
    return Zone::Reject;
  }
  // Tested in order, so the zones stay disjoint when |mu + c2 s| < |mu + c1 s|.
  const Scalar ay = std::abs(y);
  if (ay <= std::abs(mean + c1 * stddev)) return Zone::Accept;
  if (ay <= std::abs(mean + c2 * stddev)) return Zone::Flag;
  return Zone::Reject;
}

Matrix with_bias(const Eigen::Ref<const Matrix>& X) {
  Matrix out(X.rows(), X.cols() + 1);
  out << X, Vector::Ones(X.rows());
  return out;
}

CleanPartition bayesclean(const Dataset& d, const BayesCleanConfig& cfg) {
  if (!(cfg.c2 >= cfg.c1 && cfg.c1 >= 0)) throw Error("BayesClean needs c2 >= c1 >= 0");
  const Matrix X = cfg.add_bias ? with_bias(d.features) : d.features;
  CleanPartition part;
  part.state = em_fit(X, d.labels, cfg.priors, cfg.max_iters);
  part.mean = X * part.state.mean;
  const Vector model_var = (X * part.state.covariance).cwiseProduct(X).rowwise().sum();
  part.stddev = (model_var.array() + 1.0 / part.state.beta).sqrt().matrix();
  part.zones.reserve(static_cast<std::size_t>(d.size()));
  for (Index i = 0; i < d.size(); ++i) {
    const Zone z = classify_point(d.labels(i), part.mean(i), part.stddev(i), cfg.c1, cfg.c2, cfg.symmetric);
    part.zones.push_back(z);
    (z == Zone::Accept ? part.accept : z == Zone::Flag ? part.flag : part.reject).push_back(i);
  }
  return part;
}

} // namespace poisonlab
