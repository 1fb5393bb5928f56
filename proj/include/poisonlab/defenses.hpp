#pragma once

#include "poisonlab/models.hpp"

namespace poisonlab {

/// How a defense trains the models it evaluates.
struct TrainConfig {
  Architecture arch;
  InnerConfig inner;
  std::uint64_t init_seed = 0;

  ModelParams fit(const Dataset& d) const;
};

struct DefenseReport {
  IndexList kept;
  IndexList rejected;
  ModelParams params;
  Index iterations = 0;
  std::vector<Scalar> losses;  // per-iteration diagnostic
  bool warning = false;        // e.g. optimizer hit its iteration cap
};

/// Number of points kept when rejecting `reject_rate` of n: ceil((1 - rate) n).
Index kept_count(Index n, Scalar reject_rate);

/// Alternating trimmed least squares: fit on the current subset, reselect the
/// lowest squared residuals. Stops when the subset repeats or after `max_iters`.
DefenseReport trim(const Dataset& d, Scalar reject_rate, const TrainConfig& cfg, Index max_iters = 50);

/// Log-spaced epsilon grid on [lo, hi].
std::vector<Scalar> huber_grid(Scalar lo = 1.1, Scalar hi = 10.0, Index count = 10);

struct HuberResult {
  ModelParams params;
  Scalar epsilon = 0.0;
  bool converged = true;
};

/// Linear Huber regression, (1/n) sum huber_eps(r_i) + lambda ||w||^2, by gradient
/// descent for one epsilon.
HuberResult huber_fit_single(const Dataset& d, Scalar epsilon, Scalar l2, Index max_iters,
                             Scalar tol = 1e-10);

/// Picks epsilon from the grid by 5-fold cross-validated MSE on `d`, then refits on all of `d`.
HuberResult huber_fit(const Dataset& d, const std::vector<Scalar>& epsilon_grid, Scalar l2 = 1e-4,
                      Index max_iters = 10000, std::uint64_t cv_seed = 0);

DefenseReport huber_defense(const Dataset& d, const std::vector<Scalar>& epsilon_grid, Scalar l2,
                            Index max_iters, std::uint64_t cv_seed);

/// Outlier scores of SEVER: squared projection of centered per-point gradients on
/// the top right-singular vector.
Vector sever_scores(const Matrix& gradients);

/// SEVER filtering over `rounds` rounds, removing the budget evenly.
DefenseReport sever(const Dataset& d, Scalar reject_rate, Index rounds, const TrainConfig& cfg);

struct ProdaConfig {
  Index group_size = 5;
  Scalar epsilon = 1e-5;
  Scalar reject_rate = 0.4;
  Scalar worst_case_ratio = 0.45;
  bool select_on_full_set = false;  // rank candidate models by MSE on all points instead
};

/// ceil(ln(eps) / ln(1 - (1 - p)^group_size)).
Index proda_group_count(Scalar worst_case_ratio, Index group_size, Scalar epsilon);

DefenseReport proda(const Dataset& d, const ProdaConfig& pcfg, const TrainConfig& cfg,
                    std::uint64_t seed);

} // namespace poisonlab
