#include "poisonlab/models.hpp"

#include "support.hpp"

using namespace poisonlab;

namespace {

ModelParams linear_params(Scalar w, Scalar b) {
  return ModelParams(Architecture::linear(1), Vector{{w, b}});
}

Dataset one_d(std::initializer_list<Scalar> xs, std::initializer_list<Scalar> ys) {
  Dataset d;
  d.features = Matrix(static_cast<Index>(xs.size()), 1);
  d.labels = Vector(static_cast<Index>(ys.size()));
  Index i = 0;
  for (Scalar x : xs) d.features(i++, 0) = x;
  i = 0;
  for (Scalar y : ys) d.labels(i++) = y;
  return d;
}

Vector fd_grad(const ModelParams& p, const Dataset& d, Scalar l2, Scalar h) {
  Vector g(p.size());
  for (Index k = 0; k < p.size(); ++k) {
    Vector plus = p.values(), minus = p.values();
    plus(k) += h;
    minus(k) -= h;
    g(k) = (mse_loss(p.with_values(plus), d, l2) - mse_loss(p.with_values(minus), d, l2)) / (2 * h);
  }
  return g;
}

} // namespace

TEST_CASE("architectures") {
  CHECK(Architecture::linear(3).num_params() == 4);
  CHECK(Architecture::mlp(16).num_params() == 16 * 32 + 32 + 32 * 8 + 8 + 8 + 1);
  Architecture bad{ModelKind::MLP, {3, 4, 2}};
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK_THROWS_AS(ModelParams(Architecture::linear(2), Vector::Zero(2)), Error);
}

TEST_CASE("init_params") {
  const ModelParams lin = init_params(Architecture::linear(5), 123);
  CHECK(lin.values().isZero(0.0));

  const ModelParams mlp = init_params(Architecture::mlp(16), 9);
  for (Index l = 0; l < 3; ++l) CHECK((mlp.bias(l).array() == 0.01).all());
  const Scalar bound = std::sqrt(6.0 / 48.0);
  CHECK(mlp.weight(0).rows() == 32);
  CHECK(mlp.weight(0).cols() == 16);
  CHECK(mlp.weight(0).cwiseAbs().maxCoeff() <= bound);
  CHECK(mlp.weight(0).cwiseAbs().maxCoeff() > 0.5 * bound);
  CHECK(init_params(Architecture::mlp(4), 1).values() == init_params(Architecture::mlp(4), 1).values());
}

TEST_CASE("forward") {
  CHECK(forward(linear_params(2.0, 1.0), Matrix::Constant(1, 1, 3.0))(0) == 7.0);
  CHECK(leaky_relu(-1.0, 0.01) == -0.01);
  CHECK(leaky_relu(2.0, 0.01) == 2.0);

  ModelParams mlp = init_params(Architecture::mlp(3), 4);
  for (Index l = 0; l < 3; ++l) mlp.weight(l).setZero();
  test::Rng rng(2);
  const Vector out = forward(mlp, test::gaussian(5, 3, rng));
  CHECK((out.array() == 0.01).all());
  CHECK_THROWS_AS(forward(mlp, Matrix::Zero(2, 4)), Error);
}

TEST_CASE("mse_loss examples") {
  CHECK(mse_loss(linear_params(2.0, 0.0), one_d({1.0, 2.0}, {2.0, 4.0}), 0.0) == 0.0);
  CHECK(mse_loss(linear_params(0.0, 0.0), one_d({1.0}, {2.0}), 0.0) == 2.0);
  CHECK(mse_loss(linear_params(2.0, 0.0), one_d({1.0}, {2.0}), 0.1) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK_THROWS_AS(mse_loss(linear_params(0, 0), Dataset{Matrix(0, 1), Vector(0), {}}, 0.0), Error);
}

TEST_CASE("grad_loss examples") {
  CHECK(grad_loss(linear_params(2.0, 0.0), one_d({1.0, 2.0}, {2.0, 4.0}), 0.0).isZero(0.0));
  const Vector g = grad_loss(linear_params(1.0, 0.0), one_d({1.0}, {0.0}), 0.0);
  CHECK(g(0) == 1.0);
  CHECK(g(1) == 1.0);
}

TEST_CASE("grad_loss matches finite differences on an MLP") {
  test::Rng rng(11);
  const Dataset d = test::linear_data(25, 4, 0.3, rng);
  const ModelParams p = init_params(Architecture::mlp(4), 3);
  for (Scalar l2 : {0.0, 0.05}) CHECK(test::rel_diff(grad_loss(p, d, l2), fd_grad(p, d, l2, 1e-5)) <= 1e-6);
}

TEST_CASE("per-sample gradients average to the loss gradient") {
  test::Rng rng(12);
  const Dataset d = test::linear_data(15, 3, 0.5, rng);
  const ModelParams p = init_params(Architecture::mlp(3), 8);
  const Matrix G = per_sample_gradients(p, d);
  CHECK(G.rows() == 15);
  CHECK(test::rel_diff(G.colwise().mean().transpose(), grad_loss(p, d, 0.0)) <= 1e-12);
}

TEST_CASE("input_gradient matches finite differences") {
  test::Rng rng(13);
  const Matrix X = test::gaussian(6, 3, rng);
  const ModelParams p = init_params(Architecture::mlp(3), 5);
  const Matrix G = input_gradient(p, X);
  const Scalar h = 1e-6;
  for (Index i = 0; i < X.rows(); ++i)
    for (Index c = 0; c < X.cols(); ++c) {
      Matrix plus = X, minus = X;
      plus(i, c) += h;
      minus(i, c) -= h;
      const Scalar fd = (forward(p, plus)(i) - forward(p, minus)(i)) / (2 * h);
      CHECK(G(i, c) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("sgd_train") {
  test::Rng rng(14);
  Dataset d = test::linear_data(200, 1, 0.4, rng);
  const ModelParams p0 = init_params(Architecture::linear(1), 0);

  const Trajectory zero = sgd_train(p0, d, 0.1, 0, 0.0);
  CHECK(zero.states.size() == 1);
  CHECK(zero.final_state() == p0.values());

  const Trajectory t = sgd_train(p0, d, 0.1, 200, 0.0);
  CHECK(t.states.size() == 201);
  const Vector coef = test::ols(d);
  CHECK(std::abs(t.final_state()(0) - coef(0)) <= 1e-3);
  CHECK(sgd_fit(p0, d, {200, 0.1, 0.0}).values() == t.final_state());

  // steep quadratic: curvature ~1e6, step far beyond 2 / curvature
  d.features *= 1e3;
  try {
    sgd_train(p0, d, 0.1, 500, 0.0);
    FAIL("divergence not detected");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("iteration") != std::string::npos);
  }
}

TEST_CASE("residual_sigma") {
  Dataset perfect = one_d({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, {2, 4, 6, 8, 10, 12, 14, 16, 18, 20});
  CHECK(residual_sigma(linear_params(2.0, 0.0), perfect) == 0.0);
  // residuals (1, -1, 0), df = 3 - 1 - 1
  CHECK(residual_sigma(linear_params(0.0, 0.0), one_d({0, 0, 0}, {-1, 1, 0})) ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(residual_sigma(linear_params(0, 0), one_d({0, 1}, {0, 1})), Error);
}

TEST_CASE("model files round trip") {
  const ModelParams p = init_params(Architecture::mlp(3), 77);
  const auto path = test::temp_path("model.json");
  save_model(path, p);
  const ModelParams q = load_model(path);
  CHECK(q.arch().widths == p.arch().widths);
  CHECK(q.values() == p.values());
}
