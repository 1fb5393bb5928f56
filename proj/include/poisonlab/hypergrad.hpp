#pragma once

#include "poisonlab/models.hpp"

namespace poisonlab {

/// Gradient of the attacker objective with respect to the poisoning batch.
struct HyperGradient {
  Matrix features;  // b x m
  Vector labels;    // b

  Scalar squared_norm() const { return features.squaredNorm() + labels.squaredNorm(); }
};

/// Normalized scalarized attacker objective
///   alpha * L(val, w_T) / effectiveness_ref - (1 - alpha) * R(D_p, clean) / risk_ref.
struct ObjectiveConfig {
  Scalar alpha = 1.0;
  Scalar effectiveness_ref = 1.0;
  Scalar risk_ref = 1.0;
  ModelParams clean;  // w*_cl
  Scalar sigma = 0.0; // residual standard error of the clean model

  void validate() const;
};

/// Three second-order contractions of the training loss with one direction v,
/// sharing a single forward-over-reverse pass.
struct SecondOrderProducts {
  Vector hvp;        // (d^2 L / dw^2) v
  Matrix features;   // rows of (d/dX_p d/dw L)^T v
  Vector labels;     // (d/dy_p d/dw L)^T v
};

SecondOrderProducts second_order_products(const ModelParams& params, const Dataset& d, Scalar l2,
                                          const Vector& v, const IndexList& poison);

Vector hvp_w(const ModelParams& params, const Dataset& d, Scalar l2, const Vector& v);
Matrix mixed_hvp_xp(const ModelParams& params, const Dataset& d, Scalar l2, const Vector& v,
                    const IndexList& poison);
Vector mixed_hvp_yp(const ModelParams& params, const Dataset& d, Scalar l2, const Vector& v,
                    const IndexList& poison);

/// Detectability risk: product of the unregularized MSEs of the batch against the
/// clean model with its output bias shifted by +sigma and -sigma.
Scalar detect_risk(const Dataset& batch, const ModelParams& clean, Scalar sigma);

/// d R / d(X_p, y_p).
HyperGradient detect_risk_gradient(const Dataset& batch, const ModelParams& clean, Scalar sigma);

/// alpha * L_norm - (1 - alpha) * R_norm.
Scalar attacker_objective(Scalar alpha, Scalar effectiveness_norm, Scalar risk_norm);

/// Objective value at trained parameters `trained` for the batch at rows `poison` of `train`.
Scalar normalized_objective(const ObjectiveConfig& cfg, const Dataset& val, const Dataset& train,
                            const IndexList& poison, const ModelParams& trained);

struct RmdResult {
  HyperGradient gradient;
  Scalar objective = 0.0;
};

/// Reverse-mode differentiation through T full-batch SGD steps from `w0` on `train`,
/// where the poisoning batch occupies rows `poison`.
RmdResult rmd_hypergrad(const ObjectiveConfig& cfg, const Dataset& val, const Dataset& train,
                        const IndexList& poison, const ModelParams& w0, const InnerConfig& inner);

/// Central-difference oracle over the whole train-then-evaluate pipeline.
HyperGradient fd_hypergrad(const ObjectiveConfig& cfg, const Dataset& val, const Dataset& train,
                           const IndexList& poison, const ModelParams& w0, const InnerConfig& inner,
                           Scalar step);

} // namespace poisonlab
