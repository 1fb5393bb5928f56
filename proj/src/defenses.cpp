#include "poisonlab/defenses.hpp"
#include "poisonlab/random.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace poisonlab {

ModelParams TrainConfig::fit(const Dataset& d) const {
  return sgd_fit(init_params(arch, init_seed), d, inner);
}

Index kept_count(Index n, Scalar reject_rate) {
  if (!(reject_rate >= 0.0 && reject_rate < 1.0)) throw Error("reject rate must lie in [0, 1)");
  // guard against 0.6 * 200 = 120.00000000000001
  const Scalar raw = (1.0 - reject_rate) * static_cast<Scalar>(n);
  return std::min<Index>(n, static_cast<Index>(std::ceil(raw - 1e-9)));
}

namespace {

// Indices of the k smallest values; ties broken by index.
IndexList smallest(const Vector& values, Index k) {
  IndexList order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return values(a) < values(b); });
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

Vector squared_residuals(const ModelParams& p, const Dataset& d) {
  return (forward(p, d.features) - d.labels).array().square().matrix();
}

void finish(DefenseReport& r, Index n) {
  std::sort(r.kept.begin(), r.kept.end());
  r.rejected = complement(r.kept, n);
}

} // namespace

DefenseReport trim(const Dataset& d, Scalar reject_rate, const TrainConfig& cfg, Index max_iters) {
  const Index n = d.size();
  const Index k = kept_count(n, reject_rate);
  if (k < 2) throw Error("TRIM subset would hold fewer than 2 points");

  DefenseReport rep;
  IndexList subset(static_cast<std::size_t>(n));
  std::iota(subset.begin(), subset.end(), Index{0});
  rep.params = cfg.fit(d);
  if (k == n) {
    rep.kept = subset;
    rep.losses.push_back(mse_loss(rep.params, d, 0.0));
    finish(rep, n);
    return rep;
  }
  subset = smallest(squared_residuals(rep.params, d), k);
  for (Index it = 0; it < max_iters; ++it) {
    const Dataset active = d.subset(subset);
    rep.params = cfg.fit(active);
    rep.losses.push_back(mse_loss(rep.params, active, 0.0));
    rep.iterations = it + 1;
    IndexList next = smallest(squared_residuals(rep.params, d), k);
    if (next == subset) break;
    subset = std::move(next);
    if (it + 1 == max_iters) {
      // final params belong to the final subset
      rep.params = cfg.fit(d.subset(subset));
      rep.warning = true;
    }
  }
  rep.kept = subset;
  finish(rep, n);
  return rep;
}

std::vector<Scalar> huber_grid(Scalar lo, Scalar hi, Index count) {
  if (count < 1 || !(lo > 1.0) || hi < lo) throw Error("invalid Huber epsilon grid");
  std::vector<Scalar> g;
  for (Index i = 0; i < count; ++i) {
    const Scalar t = count == 1 ? 0.0 : static_cast<Scalar>(i) / static_cast<Scalar>(count - 1);
    g.push_back(std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo))));
  }
  g.back() = hi;
  return g;
}

HuberResult huber_fit_single(const Dataset& d, Scalar epsilon, Scalar l2, Index max_iters, Scalar tol) {
  if (!(epsilon > 1.0)) throw Error("Huber epsilon must exceed 1");
  if (d.empty()) throw Error("Huber fit of an empty dataset");
  const Index n = d.size();
  const Index m = d.num_features();
  Matrix Xa(n, m + 1);
  Xa << d.features, Vector::Ones(n);
  const Scalar inv_n = 1.0 / static_cast<Scalar>(n);
  // Huber has curvature at most 1, so 1 / (||Xa||^2 / n + 2 lambda) is a safe step.
  const Matrix gram = Xa.transpose() * Xa * inv_n;
  const Scalar lipschitz = Eigen::SelfAdjointEigenSolver<Matrix>(gram).eigenvalues().maxCoeff() + 2.0 * l2;
  const Scalar step = 1.0 / lipschitz;

  Vector theta = Vector::Zero(m + 1);
  HuberResult res;
  res.epsilon = epsilon;
  res.converged = false;
  for (Index it = 0; it < max_iters; ++it) {
    const Vector r = Xa * theta - d.labels;
    const Vector psi = r.cwiseMax(-epsilon).cwiseMin(epsilon);
    Vector grad = Xa.transpose() * psi * inv_n;
    grad.head(m) += 2.0 * l2 * theta.head(m);
    if (grad.norm() < tol) {
      res.converged = true;
      break;
    }
    theta -= step * grad;
  }
  Vector values(m + 1);
  values << theta.head(m), theta(m);
  res.params = ModelParams(Architecture::linear(m), values);
  return res;
}

HuberResult huber_fit(const Dataset& d, const std::vector<Scalar>& epsilon_grid, Scalar l2,
                      Index max_iters, std::uint64_t cv_seed) {
  if (epsilon_grid.empty()) throw Error("Huber epsilon grid is empty");
  for (Scalar e : epsilon_grid)
    if (!(e > 1.0)) throw Error("Huber epsilon must exceed 1");
  const Index n = d.size();
  constexpr Index folds = 5;
  if (n < folds) throw Error("Huber cross-validation needs at least 5 points");

  IndexList perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(cv_seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  Scalar best_score = std::numeric_limits<Scalar>::infinity();
  Scalar best_eps = epsilon_grid.front();
  for (Scalar eps : epsilon_grid) {
    Scalar total = 0.0;
    for (Index f = 0; f < folds; ++f) {
      IndexList fit_rows, held_rows;
      for (Index i = 0; i < n; ++i)
        (i % folds == f ? held_rows : fit_rows).push_back(perm[static_cast<std::size_t>(i)]);
      const HuberResult h = huber_fit_single(d.subset(fit_rows), eps, l2, max_iters);
      const Dataset held = d.subset(held_rows);
      total += (forward(h.params, held.features) - held.labels).squaredNorm();
    }
    const Scalar score = total / static_cast<Scalar>(n);
    if (score < best_score) {
      best_score = score;
      best_eps = eps;
    }
  }
  return huber_fit_single(d, best_eps, l2, max_iters);
}

DefenseReport huber_defense(const Dataset& d, const std::vector<Scalar>& epsilon_grid, Scalar l2,
                            Index max_iters, std::uint64_t cv_seed) {
  HuberResult h = huber_fit(d, epsilon_grid, l2, max_iters, cv_seed);
  DefenseReport rep;
  rep.params = h.params;
  rep.warning = !h.converged;
  rep.iterations = 1;
  rep.kept.resize(static_cast<std::size_t>(d.size()));
  std::iota(rep.kept.begin(), rep.kept.end(), Index{0});
  rep.losses.push_back(mse_loss(h.params, d, 0.0));
  return rep;
}

Vector sever_scores(const Matrix& gradients) {
  if (gradients.rows() == 0) return Vector();
  const RowVector mean = gradients.colwise().mean();
  const Matrix centered = gradients.rowwise() - mean;
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Vector v = svd.matrixV().col(0);
  return (centered * v).array().square().matrix();
}

DefenseReport sever(const Dataset& d, Scalar reject_rate, Index rounds, const TrainConfig& cfg) {
  if (rounds < 1) throw Error("SEVER needs at least one round");
  const Index n = d.size();
  const Index total = n - kept_count(n, reject_rate);

  DefenseReport rep;
  IndexList active(static_cast<std::size_t>(n));
  std::iota(active.begin(), active.end(), Index{0});
  for (Index r = 0; r < rounds && total > 0; ++r) {
    const Index remove = total / rounds + (r < total % rounds ? 1 : 0);
    if (remove >= static_cast<Index>(active.size())) throw Error("SEVER exhausted the active set");
    const Dataset current = d.subset(active);
    const ModelParams p = cfg.fit(current);
    rep.losses.push_back(mse_loss(p, current, 0.0));
    const Vector scores = sever_scores(per_sample_gradients(p, current));
    // keep all but the `remove` highest scores
    IndexList keep_local = smallest(scores, static_cast<Index>(active.size()) - remove);
    IndexList next;
    for (Index i : keep_local) next.push_back(active[static_cast<std::size_t>(i)]);
    active = std::move(next);
    rep.iterations = r + 1;
  }
  if (active.size() < 2) throw Error("SEVER exhausted the active set");
  rep.params = cfg.fit(d.subset(active));
  rep.kept = active;
  finish(rep, n);
  return rep;
}

Index proda_group_count(Scalar worst_case_ratio, Index group_size, Scalar epsilon) {
  if (group_size < 1) throw Error("Proda group size must be at least 1");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error("Proda epsilon must lie in (0, 1)");
  if (!(worst_case_ratio >= 0.0 && worst_case_ratio < 1.0))
    throw Error("Proda worst-case ratio must lie in [0, 1)");
  const Scalar clean_group = std::pow(1.0 - worst_case_ratio, static_cast<Scalar>(group_size));
  if (clean_group >= 1.0) return 1;
  return std::max<Index>(1, static_cast<Index>(std::ceil(std::log(epsilon) / std::log1p(-clean_group))));
}

DefenseReport proda(const Dataset& d, const ProdaConfig& pcfg, const TrainConfig& cfg,
                    std::uint64_t seed) {
  const Index groups = proda_group_count(pcfg.worst_case_ratio, pcfg.group_size, pcfg.epsilon);
  const Index n = d.size();
  if (pcfg.group_size > n) throw Error("Proda group larger than the dataset");
  const Index k = kept_count(n, pcfg.reject_rate);
  if (k < 1) throw Error("Proda would keep no points");

  Rng rng(seed);
  IndexList all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});

  DefenseReport rep;
  Scalar best = std::numeric_limits<Scalar>::infinity();
  for (Index g = 0; g < groups; ++g) {
    // partial Fisher-Yates draw of one group
    for (Index i = 0; i < pcfg.group_size; ++i) {
      std::uniform_int_distribution<Index> pick(i, n - 1);
      std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(pick(rng))]);
    }
    IndexList group(all.begin(), all.begin() + pcfg.group_size);
    const ModelParams seed_model = cfg.fit(d.subset(group));
    IndexList selected = smallest(squared_residuals(seed_model, d), k);
    const Dataset chosen = d.subset(selected);
    const ModelParams refit = cfg.fit(chosen);
    const Scalar score = pcfg.select_on_full_set ? mse_loss(refit, d, 0.0) : mse_loss(refit, chosen, 0.0);
    rep.losses.push_back(score);
    if (score < best) {
      best = score;
      rep.params = refit;
      rep.kept = std::move(selected);
    }
  }
  rep.iterations = groups;
  finish(rep, n);
  return rep;
}

} // namespace poisonlab
