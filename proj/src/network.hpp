#pragma once

// Batched forward/backward passes shared by the trainer and the second-order code.
// Samples are rows: activations are (n x width) matrices.

#include "poisonlab/models.hpp"

namespace poisonlab::detail {

struct ForwardCache {
  std::vector<Matrix> pre;  // pre[l]: pre-activation of layer l (0-based)
  std::vector<Matrix> act;  // act[0] = X, act[l+1] = output of layer l
};

inline bool is_hidden(const Architecture& arch, Index layer) {
  return layer + 1 < arch.num_layers();
}

/// LeakyReLU derivative mask; piecewise constant, so second derivatives vanish.
inline Matrix activation_slope(const Matrix& pre, Scalar slope) {
  return pre.unaryExpr([slope](Scalar z) { return z > 0 ? Scalar(1) : slope; });
}

ForwardCache forward_cache(const ModelParams& params, const Eigen::Ref<const Matrix>& X);

/// Backpropagates output cotangents `out_grad` (n x 1). Fills packed parameter
/// gradient (without regularizer), and the per-layer deltas (cotangent of each
/// pre-activation). `input_grad` receives d/dX when non-null.
void backward(const ModelParams& params, const ForwardCache& cache, const Matrix& out_grad,
              Vector& param_grad, std::vector<Matrix>& deltas, Matrix* input_grad = nullptr);

/// Adds lambda * W_l into the weight blocks of a packed gradient.
void add_weight_decay(const ModelParams& params, const Vector& direction, Scalar l2, Vector& grad);

} // namespace poisonlab::detail
