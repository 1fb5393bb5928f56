#include "poisonlab/models.hpp"
#include "poisonlab/random.hpp"

#include "network.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace poisonlab {

Architecture Architecture::linear(Index num_features) {
  return {ModelKind::Linear, {num_features, 1}, 0.01};
}

Architecture Architecture::mlp(Index num_features) {
  return {ModelKind::MLP, {num_features, 32, 8, 1}, 0.01};
}

Index Architecture::num_params() const {
  Index total = 0;
  for (Index l = 0; l < num_layers(); ++l) total += widths[l + 1] * (widths[l] + 1);
  return total;
}

void Architecture::validate() const {
  if (widths.size() < 2) throw Error("architecture needs at least input and output widths");
  for (Index w : widths)
    if (w <= 0) throw Error("layer widths must be positive");
  if (widths.back() != 1) throw Error("output width must be 1");
  if (kind == ModelKind::Linear && widths.size() != 2)
    throw Error("a linear model has exactly one layer");
}

ModelParams::ModelParams(Architecture arch, Vector values)
    : arch_(std::move(arch)), values_(std::move(values)) {
  arch_.validate();
  if (values_.size() != arch_.num_params()) throw Error("parameter vector does not match architecture");
}

ModelParams::ModelParams(Architecture arch)
    : ModelParams(arch, Vector::Zero(arch.num_params())) {}

Index ModelParams::weight_offset(Index layer) const {
  Index off = 0;
  for (Index l = 0; l < layer; ++l) off += arch_.widths[l + 1] * (arch_.widths[l] + 1);
  return off;
}

Index ModelParams::bias_offset(Index layer) const {
  return weight_offset(layer) + arch_.widths[layer + 1] * arch_.widths[layer];
}

ModelParams::ConstWeightMap ModelParams::weight(Index layer) const {
  return {values_.data() + weight_offset(layer), arch_.widths[layer + 1], arch_.widths[layer]};
}

ModelParams::WeightMap ModelParams::weight(Index layer) {
  return {values_.data() + weight_offset(layer), arch_.widths[layer + 1], arch_.widths[layer]};
}

Eigen::Map<const Vector> ModelParams::bias(Index layer) const {
  return {values_.data() + bias_offset(layer), arch_.widths[layer + 1]};
}

Eigen::Map<Vector> ModelParams::bias(Index layer) {
  return {values_.data() + bias_offset(layer), arch_.widths[layer + 1]};
}

ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
  ModelParams p(arch);
  if (arch.kind == ModelKind::Linear) return p;
  Rng rng(seed);
  for (Index l = 0; l < arch.num_layers(); ++l) {
    const Scalar fan_in = static_cast<Scalar>(arch.widths[l]);
    const Scalar fan_out = static_cast<Scalar>(arch.widths[l + 1]);
    const Scalar bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<Scalar> u(-bound, bound);
    auto W = p.weight(l);
    for (Index c = 0; c < W.cols(); ++c)
      for (Index r = 0; r < W.rows(); ++r) W(r, c) = u(rng);
    p.bias(l).setConstant(1e-2);
  }
  return p;
}

Scalar leaky_relu(Scalar z, Scalar slope) { return z > 0 ? z : slope * z; }

namespace detail {

ForwardCache forward_cache(const ModelParams& params, const Eigen::Ref<const Matrix>& X) {
  const auto& arch = params.arch();
  if (X.cols() != arch.input_dim())
    throw Error("input has " + std::to_string(X.cols()) + " features, model expects " +
                std::to_string(arch.input_dim()));
  ForwardCache c;
  c.act.push_back(X);
  for (Index l = 0; l < arch.num_layers(); ++l) {
    Matrix z = c.act.back() * params.weight(l).transpose();
    z.rowwise() += params.bias(l).transpose();
    Matrix a = is_hidden(arch, l)
                   ? Matrix(z.unaryExpr([s = arch.leaky_slope](Scalar v) { return leaky_relu(v, s); }))
                   : z;
    c.pre.push_back(std::move(z));
    c.act.push_back(std::move(a));
  }
  return c;
}

void backward(const ModelParams& params, const ForwardCache& cache, const Matrix& out_grad,
              Vector& param_grad, std::vector<Matrix>& deltas, Matrix* input_grad) {
  const auto& arch = params.arch();
  const Index L = arch.num_layers();
  param_grad.setZero(params.size());
  deltas.assign(static_cast<std::size_t>(L), Matrix());
  Matrix delta = out_grad;
  for (Index l = L - 1; l >= 0; --l) {
    Eigen::Map<Matrix> gW(param_grad.data() + params.weight_offset(l), arch.widths[l + 1],
                          arch.widths[l]);
    Eigen::Map<Vector> gb(param_grad.data() + params.bias_offset(l), arch.widths[l + 1]);
    gW.noalias() = delta.transpose() * cache.act[static_cast<std::size_t>(l)];
    gb = delta.colwise().sum().transpose();
    deltas[static_cast<std::size_t>(l)] = delta;
    Matrix upstream = delta * params.weight(l);
    if (l > 0) {
      delta = upstream.cwiseProduct(
          activation_slope(cache.pre[static_cast<std::size_t>(l - 1)], arch.leaky_slope));
    } else if (input_grad != nullptr) {
      *input_grad = std::move(upstream);
    }
  }
}

void add_weight_decay(const ModelParams& params, const Vector& direction, Scalar l2, Vector& grad) {
  if (l2 == 0.0) return;
  const auto& arch = params.arch();
  for (Index l = 0; l < arch.num_layers(); ++l) {
    const Index off = params.weight_offset(l);
    const Index len = arch.widths[l + 1] * arch.widths[l];
    grad.segment(off, len) += l2 * direction.segment(off, len);
  }
}

} // namespace detail

Vector forward(const ModelParams& params, const Eigen::Ref<const Matrix>& X) {
  const auto& arch = params.arch();
  if (X.cols() != arch.input_dim()) throw Error("shape mismatch in forward");
  Matrix a = X;
  for (Index l = 0; l < arch.num_layers(); ++l) {
    Matrix z = a * params.weight(l).transpose();
    z.rowwise() += params.bias(l).transpose();
    if (detail::is_hidden(arch, l))
      a = z.unaryExpr([s = arch.leaky_slope](Scalar v) { return leaky_relu(v, s); });
    else
      a = std::move(z);
  }
  return a.col(0);
}

namespace {

Scalar weight_norm_sq(const ModelParams& params) {
  Scalar s = 0;
  for (Index l = 0; l < params.arch().num_layers(); ++l) s += params.weight(l).squaredNorm();
  return s;
}

void require_nonempty(const Dataset& d) {
  if (d.empty()) throw Error("loss of an empty dataset is undefined");
}

} // namespace

Scalar mse_loss(const ModelParams& params, const Dataset& d, Scalar l2) {
  require_nonempty(d);
  if (l2 < 0) throw Error("regularization weight must be non-negative");
  Vector r = forward(params, d.features) - d.labels;
  return r.squaredNorm() / (2.0 * static_cast<Scalar>(d.size())) + 0.5 * l2 * weight_norm_sq(params);
}

Vector grad_loss(const ModelParams& params, const Dataset& d, Scalar l2) {
  require_nonempty(d);
  auto cache = detail::forward_cache(params, d.features);
  Matrix out_grad = (cache.act.back().col(0) - d.labels) / static_cast<Scalar>(d.size());
  Vector g;
  std::vector<Matrix> deltas;
  detail::backward(params, cache, out_grad, g, deltas);
  detail::add_weight_decay(params, params.values(), l2, g);
  return g;
}

Matrix input_gradient(const ModelParams& params, const Eigen::Ref<const Matrix>& X) {
  auto cache = detail::forward_cache(params, X);
  Vector g;
  std::vector<Matrix> deltas;
  Matrix dx;
  detail::backward(params, cache, Matrix::Ones(X.rows(), 1), g, deltas, &dx);
  return dx;
}

Matrix per_sample_gradients(const ModelParams& params, const Dataset& d) {
  auto cache = detail::forward_cache(params, d.features);
  const Vector r = cache.act.back().col(0) - d.labels;
  Vector g;
  std::vector<Matrix> deltas;
  // Deltas of the full batch with out_grad = r carry each sample's own cotangent.
  detail::backward(params, cache, Matrix(r), g, deltas);
  const auto& arch = params.arch();
  Matrix out(d.size(), params.size());
  for (Index l = 0; l < arch.num_layers(); ++l) {
    const auto& delta = deltas[static_cast<std::size_t>(l)];
    const auto& input = cache.act[static_cast<std::size_t>(l)];
    const Index off_w = params.weight_offset(l);
    const Index off_b = params.bias_offset(l);
    const Index rows = arch.widths[l + 1];
    for (Index c = 0; c < arch.widths[l]; ++c)
      for (Index o = 0; o < rows; ++o)
        out.col(off_w + c * rows + o) = delta.col(o).cwiseProduct(input.col(c));
    out.middleCols(off_b, rows) = delta;
  }
  return out;
}

Trajectory sgd_train(const ModelParams& params0, const Dataset& d, Scalar learning_rate,
                     Index iterations, Scalar l2) {
  if (learning_rate <= 0) throw Error("learning rate must be positive");
  if (iterations < 0) throw Error("iteration count must be non-negative");
  Trajectory tr;
  tr.learning_rate = learning_rate;
  tr.iterations = iterations;
  tr.states.reserve(static_cast<std::size_t>(iterations + 1));
  tr.states.push_back(params0.values());
  ModelParams cur = params0;
  for (Index t = 0; t < iterations; ++t) {
    Vector g = grad_loss(cur, d, l2);
    cur.values() -= learning_rate * g;
    if (!cur.values().allFinite())
      throw Error("SGD diverged: non-finite parameters at iteration " + std::to_string(t + 1));
    tr.states.push_back(cur.values());
  }
  return tr;
}

ModelParams sgd_fit(const ModelParams& params0, const Dataset& d, const InnerConfig& inner) {
  if (inner.learning_rate <= 0) throw Error("learning rate must be positive");
  ModelParams cur = params0;
  for (Index t = 0; t < inner.iterations; ++t) {
    cur.values() -= inner.learning_rate * grad_loss(cur, d, inner.l2);
    if (!cur.values().allFinite())
      throw Error("SGD diverged: non-finite parameters at iteration " + std::to_string(t + 1));
  }
  return cur;
}

Scalar residual_sigma(const ModelParams& params, const Dataset& train) {
  const Index df = train.size() - train.num_features() - 1;
  if (df <= 0) throw Error("insufficient degrees of freedom for residual sigma");
  Vector r = train.labels - forward(params, train.features);
  return std::sqrt(r.squaredNorm() / static_cast<Scalar>(df));
}

void save_model(const std::filesystem::path& path, const ModelParams& params) {
  using nlohmann::json;
  const auto& arch = params.arch();
  json j;
  j["kind"] = arch.kind == ModelKind::Linear ? "linear" : "mlp";
  j["widths"] = arch.widths;
  j["leaky_slope"] = arch.leaky_slope;
  json layers = json::array();
  for (Index l = 0; l < arch.num_layers(); ++l) {
    auto W = params.weight(l);
    std::vector<Scalar> w;
    for (Index r = 0; r < W.rows(); ++r)
      for (Index c = 0; c < W.cols(); ++c) w.push_back(W(r, c));
    auto b = params.bias(l);
    layers.push_back({{"rows", W.rows()},
                      {"cols", W.cols()},
                      {"weight", w},
                      {"bias", std::vector<Scalar>(b.data(), b.data() + b.size())}});
  }
  j["layers"] = layers;
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ModelParams load_model(const std::filesystem::path& path) {
  using nlohmann::json;
  std::ifstream in(path);
  if (!in) throw Error("cannot open model file " + path.string());
  json j = json::parse(in);
  Architecture arch;
  arch.kind = j.at("kind").get<std::string>() == "linear" ? ModelKind::Linear : ModelKind::MLP;
  arch.widths = j.at("widths").get<std::vector<Index>>();
  arch.leaky_slope = j.value("leaky_slope", 0.01);
  ModelParams p(arch);
  const auto& layers = j.at("layers");
  if (static_cast<Index>(layers.size()) != arch.num_layers()) throw Error("layer count mismatch");
  for (Index l = 0; l < arch.num_layers(); ++l) {
    const auto& layer = layers[static_cast<std::size_t>(l)];
    auto w = layer.at("weight").get<std::vector<Scalar>>();
    auto b = layer.at("bias").get<std::vector<Scalar>>();
    auto W = p.weight(l);
    if (static_cast<Index>(w.size()) != W.size() || static_cast<Index>(b.size()) != W.rows())
      throw Error("layer shape mismatch in model file");
    for (Index r = 0; r < W.rows(); ++r)
      for (Index c = 0; c < W.cols(); ++c) W(r, c) = w[static_cast<std::size_t>(r * W.cols() + c)];
    p.bias(l) = Eigen::Map<const Vector>(b.data(), static_cast<Index>(b.size()));
  }
  return p;
}

} // namespace poisonlab
