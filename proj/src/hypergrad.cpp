#include "poisonlab/hypergrad.hpp"

#include "network.hpp"

#include <cmath>

namespace poisonlab {

void ObjectiveConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("alpha must lie in [0, 1]");
  if (!(effectiveness_ref > 0.0) || !(risk_ref > 0.0))
    throw Error("normalization references must be positive");
  if (sigma < 0.0) throw Error("sigma must be non-negative");
}

namespace {

void check_indices(const IndexList& poison, Index n) {
  for (Index i : poison)
    if (i < 0 || i >= n) throw Error("poison index " + std::to_string(i) + " out of range");
}

} // namespace

SecondOrderProducts second_order_products(const ModelParams& params, const Dataset& d, Scalar l2,
                                          const Vector& v, const IndexList& poison) {
  if (v.size() != params.size()) throw Error("direction does not match parameter shape");
  check_indices(poison, d.size());
  const auto& arch = params.arch();
  const Index L = arch.num_layers();
  const Scalar inv_n = 1.0 / static_cast<Scalar>(d.size());
  const ModelParams dir = params.with_values(v);

  auto cache = detail::forward_cache(params, d.features);
  std::vector<Matrix> slopes;
  for (Index l = 0; l + 1 < L; ++l)
    slopes.push_back(detail::activation_slope(cache.pre[static_cast<std::size_t>(l)], arch.leaky_slope));

  // Tangent pass: directional derivative of every activation along v.
  std::vector<Matrix> r_act(static_cast<std::size_t>(L + 1));
  r_act[0] = Matrix::Zero(d.size(), arch.input_dim());
  for (Index l = 0; l < L; ++l) {
    const auto ul = static_cast<std::size_t>(l);
    Matrix rz = r_act[ul] * params.weight(l).transpose() + cache.act[ul] * dir.weight(l).transpose();
    rz.rowwise() += dir.bias(l).transpose();
    r_act[ul + 1] = l + 1 < L ? Matrix(rz.cwiseProduct(slopes[ul])) : rz;
  }
  const Vector r_out = r_act.back().col(0);

  // Cotangent pass and its tangent.
  Matrix delta = (cache.act.back().col(0) - d.labels) * inv_n;
  Matrix r_delta = r_out * inv_n;
  SecondOrderProducts out;
  out.hvp.setZero(params.size());
  Matrix r_input;
  for (Index l = L - 1; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    Eigen::Map<Matrix> hW(out.hvp.data() + params.weight_offset(l), arch.widths[l + 1], arch.widths[l]);
    Eigen::Map<Vector> hb(out.hvp.data() + params.bias_offset(l), arch.widths[l + 1]);
    hW.noalias() = r_delta.transpose() * cache.act[ul] + delta.transpose() * r_act[ul];
    hb = r_delta.colwise().sum().transpose();
    Matrix r_up = r_delta * params.weight(l) + delta * dir.weight(l);
    if (l > 0) {
      const Matrix up = delta * params.weight(l);
      delta = up.cwiseProduct(slopes[ul - 1]);
      r_delta = r_up.cwiseProduct(slopes[ul - 1]);
    } else {
      r_input = std::move(r_up);
    }
  }
  detail::add_weight_decay(params, v, l2, out.hvp);

  const auto b = static_cast<Index>(poison.size());
  out.features.resize(b, arch.input_dim());
  out.labels.resize(b);
  for (Index k = 0; k < b; ++k) {
    const Index i = poison[static_cast<std::size_t>(k)];
    out.features.row(k) = r_input.row(i);
    out.labels(k) = -r_out(i) * inv_n;
  }
  return out;
}

Vector hvp_w(const ModelParams& params, const Dataset& d, Scalar l2, const Vector& v) {
  return second_order_products(params, d, l2, v, {}).hvp;
}

Matrix mixed_hvp_xp(const ModelParams& params, const Dataset& d, Scalar l2, const Vector& v,
                    const IndexList& poison) {
  return second_order_products(params, d, l2, v, poison).features;
}

Vector mixed_hvp_yp(const ModelParams& params, const Dataset& d, Scalar l2, const Vector& v,
                    const IndexList& poison) {
  return second_order_products(params, d, l2, v, poison).labels;
}

namespace {

// Residuals of the batch under the clean model shifted by +sigma and -sigma.
std::pair<Vector, Vector> shifted_residuals(const Dataset& batch, const ModelParams& clean,
                                            Scalar sigma) {
  const Vector f = forward(clean, batch.features);
  Vector up = (f.array() + sigma).matrix() - batch.labels;
  Vector down = (f.array() - sigma).matrix() - batch.labels;
  return {std::move(up), std::move(down)};
}

} // namespace

Scalar detect_risk(const Dataset& batch, const ModelParams& clean, Scalar sigma) {
  if (batch.empty()) throw Error("detectability risk of an empty batch is undefined");
  if (sigma < 0) throw Error("sigma must be non-negative");
  auto [up, down] = shifted_residuals(batch, clean, sigma);
  const Scalar scale = 1.0 / (2.0 * static_cast<Scalar>(batch.size()));
  return (scale * up.squaredNorm()) * (scale * down.squaredNorm());
}

HyperGradient detect_risk_gradient(const Dataset& batch, const ModelParams& clean, Scalar sigma) {
  HyperGradient g{Matrix::Zero(batch.size(), batch.num_features()), Vector::Zero(batch.size())};
  if (batch.empty()) return g;
  auto [up, down] = shifted_residuals(batch, clean, sigma);
  const Scalar n = static_cast<Scalar>(batch.size());
  const Scalar loss_up = up.squaredNorm() / (2.0 * n);
  const Scalar loss_down = down.squaredNorm() / (2.0 * n);
  // d(L+ L-) = L- dL+ + L+ dL-, with dL/dr_i = r_i / n.
  const Vector coeff = (loss_down * up + loss_up * down) / n;
  const Matrix dfdx = input_gradient(clean, batch.features);
  g.features = dfdx.array().colwise() * coeff.array();
  g.labels = -coeff;
  return g;
}

Scalar attacker_objective(Scalar alpha, Scalar effectiveness_norm, Scalar risk_norm) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("alpha must lie in [0, 1]");
  return alpha * effectiveness_norm - (1.0 - alpha) * risk_norm;
}

Scalar normalized_objective(const ObjectiveConfig& cfg, const Dataset& val, const Dataset& train,
                            const IndexList& poison, const ModelParams& trained) {
  const Scalar eff = mse_loss(trained, val, 0.0) / cfg.effectiveness_ref;
  Scalar risk = 0.0;
  if (cfg.alpha < 1.0 && !poison.empty())
    risk = detect_risk(train.subset(poison), cfg.clean, cfg.sigma) / cfg.risk_ref;
  return attacker_objective(cfg.alpha, eff, risk);
}

RmdResult rmd_hypergrad(const ObjectiveConfig& cfg, const Dataset& val, const Dataset& train,
                        const IndexList& poison, const ModelParams& w0, const InnerConfig& inner) {
  cfg.validate();
  if (inner.iterations < 1) throw Error("RMD needs at least one inner iteration");
  check_indices(poison, train.size());

  const Trajectory traj = sgd_train(w0, train, inner.learning_rate, inner.iterations, inner.l2);
  const ModelParams final_params = w0.with_values(traj.final_state());

  RmdResult res;
  res.objective = normalized_objective(cfg, val, train, poison, final_params);

  // Only the effectiveness term depends on the trained weights.
  Vector dw = (cfg.alpha / cfg.effectiveness_ref) * grad_loss(final_params, val, 0.0);

  const Dataset batch = train.subset(poison);
  HyperGradient& g = res.gradient;
  g.features = Matrix::Zero(batch.size(), train.num_features());
  g.labels = Vector::Zero(batch.size());
  if (cfg.alpha < 1.0 && !batch.empty()) {
    HyperGradient direct = detect_risk_gradient(batch, cfg.clean, cfg.sigma);
    const Scalar w = -(1.0 - cfg.alpha) / cfg.risk_ref;
    g.features = w * direct.features;
    g.labels = w * direct.labels;
  }

  const Scalar eta = inner.learning_rate;
  for (Index t = inner.iterations - 1; t >= 0; --t) {
    const ModelParams wt = w0.with_values(traj.states[static_cast<std::size_t>(t)]);
    SecondOrderProducts p = second_order_products(wt, train, inner.l2, dw, poison);
    g.features -= eta * p.features;
    g.labels -= eta * p.labels;
    dw -= eta * p.hvp;
    if (!dw.allFinite() || !g.features.allFinite() || !g.labels.allFinite())
      throw Error("non-finite hypergradient at reverse iteration " + std::to_string(t));
  }
  return res;
}

HyperGradient fd_hypergrad(const ObjectiveConfig& cfg, const Dataset& val, const Dataset& train,
                           const IndexList& poison, const ModelParams& w0, const InnerConfig& inner,
                           Scalar step) {
  if (!(step > 0)) throw Error("finite-difference step must be positive");
  check_indices(poison, train.size());
  const auto b = static_cast<Index>(poison.size());
  HyperGradient g{Matrix::Zero(b, train.num_features()), Vector::Zero(b)};

  auto evaluate = [&](const Dataset& perturbed) {
    ModelParams w = sgd_fit(w0, perturbed, inner);
    return normalized_objective(cfg, val, perturbed, poison, w);
  };

  Dataset work = train;
  for (Index k = 0; k < b; ++k) {
    const Index i = poison[static_cast<std::size_t>(k)];
    for (Index c = 0; c < train.num_features(); ++c) {
      const Scalar x0 = work.features(i, c);
      work.features(i, c) = x0 + step;
      const Scalar fp = evaluate(work);
      work.features(i, c) = x0 - step;
      const Scalar fm = evaluate(work);
      work.features(i, c) = x0;
      g.features(k, c) = (fp - fm) / (2.0 * step);
    }
    const Scalar y0 = work.labels(i);
    work.labels(i) = y0 + step;
    const Scalar fp = evaluate(work);
    work.labels(i) = y0 - step;
    const Scalar fm = evaluate(work);
    work.labels(i) = y0;
    g.labels(k) = (fp - fm) / (2.0 * step);
  }
  return g;
}

} // namespace poisonlab
