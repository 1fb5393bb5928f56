#pragma once

#include "poisonlab/common.hpp"

#include <filesystem>

namespace poisonlab {

enum class ModelKind { Linear, MLP };

/// Feed-forward regressor shape. A linear model is the one-layer case.
struct Architecture {
  ModelKind kind = ModelKind::Linear;
  std::vector<Index> widths;  // input, hidden..., output (= 1)
  Scalar leaky_slope = 0.01;

  static Architecture linear(Index num_features);
  /// (m, 32, 8, 1) with LeakyReLU hidden layers.
  static Architecture mlp(Index num_features);

  Index input_dim() const { return widths.front(); }
  Index num_layers() const { return static_cast<Index>(widths.size()) - 1; }
  Index num_params() const;
  void validate() const;
};

/// All weights and biases packed in one vector. Layer l occupies a column-major
/// (out x in) weight block followed by its bias.
class ModelParams {
public:
  using WeightMap = Eigen::Map<Matrix>;
  using ConstWeightMap = Eigen::Map<const Matrix>;

  ModelParams() = default;
  ModelParams(Architecture arch, Vector values);
  explicit ModelParams(Architecture arch);  // zeros

  const Architecture& arch() const { return arch_; }
  const Vector& values() const { return values_; }
  Vector& values() { return values_; }
  Index size() const { return values_.size(); }

  ConstWeightMap weight(Index layer) const;
  WeightMap weight(Index layer);
  Eigen::Map<const Vector> bias(Index layer) const;
  Eigen::Map<Vector> bias(Index layer);

  Index weight_offset(Index layer) const;
  Index bias_offset(Index layer) const;

  /// Same architecture, different packed values.
  ModelParams with_values(Vector values) const { return {arch_, std::move(values)}; }

private:
  Architecture arch_;
  Vector values_;
};

/// Inner-training hyperparameters: T full-batch steps of size eta, L2 weight lambda.
struct InnerConfig {
  Index iterations = 40;
  Scalar learning_rate = 0.1;
  Scalar l2 = 0.0;
};

/// Stored SGD path w(0) ... w(T).
struct Trajectory {
  std::vector<Vector> states;
  Scalar learning_rate = 0.0;
  Index iterations = 0;

  const Vector& final_state() const { return states.back(); }
};

/// Zeros for a linear model; Xavier-uniform weights and 1e-2 biases for an MLP.
ModelParams init_params(const Architecture& arch, std::uint64_t seed);

Scalar leaky_relu(Scalar z, Scalar slope);

Vector forward(const ModelParams& params, const Eigen::Ref<const Matrix>& X);

/// (1/2n) sum (f(x_i) - y_i)^2 + lambda * 0.5 * sum ||W_l||^2 (biases excluded).
Scalar mse_loss(const ModelParams& params, const Dataset& d, Scalar l2);

/// Exact gradient of `mse_loss`, packed like `params.values()`.
Vector grad_loss(const ModelParams& params, const Dataset& d, Scalar l2);

/// Gradient of the model output with respect to each input row (n x m).
Matrix input_gradient(const ModelParams& params, const Eigen::Ref<const Matrix>& X);

/// Per-sample gradient of 0.5 (f(x_i) - y_i)^2, one row per sample (n x P).
Matrix per_sample_gradients(const ModelParams& params, const Dataset& d);

Trajectory sgd_train(const ModelParams& params0, const Dataset& d, Scalar learning_rate,
                     Index iterations, Scalar l2);

/// Final parameters only; no trajectory is kept.
ModelParams sgd_fit(const ModelParams& params0, const Dataset& d, const InnerConfig& inner);

/// Residual standard error with df = n - p - 1, p = number of input features.
Scalar residual_sigma(const ModelParams& params, const Dataset& train);

void save_model(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_model(const std::filesystem::path& path);

} // namespace poisonlab
