#pragma once

#include "poisonlab/hypergrad.hpp"

#include <functional>

namespace poisonlab {

/// Box constraint on poisoning points: per-feature bounds plus a label interval.
struct FeasibleDomain {
  Vector feature_lower, feature_upper;
  Scalar label_lower = 0.0, label_upper = 0.0;

  /// Per-coordinate [min, max] of the given (clean) data.
  static FeasibleDomain from_data(const Dataset& d);
  void validate(Index num_features) const;
};

/// Clips features and labels into the domain, componentwise.
void project(Matrix& features, Vector& labels, const FeasibleDomain& domain);

/// Effectiveness and detectability normalization constants.
struct NormalizationRefs {
  Scalar risk_ref = 1.0;
  std::vector<Scalar> effectiveness_refs;  // one per batch, filled while crafting
};

struct AttackPlan {
  Scalar alpha = 1.0;
  Index n_poison = 0;
  Index batch_size = 1;
  Index outer_iters = 100;   // T_out
  Scalar outer_rate = 0.9;   // gamma
  InnerConfig inner;         // T, eta, lambda
  Architecture arch;
  std::uint64_t seed = 0;
  FeasibleDomain domain;
  bool inject = false;       // append poisons instead of replacing clean rows
  bool normalize = true;     // false: both objective references forced to 1
  std::vector<IndexList> batches;  // rows of the clean training set cloned per batch

  Index num_batches() const { return static_cast<Index>(batches.size()); }
  void validate(Index n_train) const;
};

/// Draws the batch index sets: ceil(n_p / B_p) disjoint batches from [0, n_train),
/// uniformly without duplicates. Budget beyond the pool is truncated.
std::vector<IndexList> plan_batches(Index n_train, Index n_poison, Index batch_size,
                                    std::uint64_t seed);

/// Clean model w*_cl and its residual standard error.
struct CleanReference {
  ModelParams params;
  Scalar sigma = 0.0;
};

/// Initial parameters used for every inner training run of a plan.
ModelParams plan_init(const AttackPlan& plan);

CleanReference fit_clean_reference(const AttackPlan& plan, const Dataset& clean_train);

struct PoisonBatch {
  IndexList source;  // clean rows that were cloned
  Dataset points;
};

/// Clones `batch_size` rows from `pool` uniformly without duplicates.
PoisonBatch init_poison(const Dataset& train, const IndexList& pool, Index batch_size,
                        std::uint64_t seed);

/// Projected hypergradient ascent on one batch. `train` already holds the
/// batch at rows `poison`; returns the optimized batch.
Dataset optimize_batch(const AttackPlan& plan, const ObjectiveConfig& objective, const Dataset& val,
                       const Dataset& train, const IndexList& poison);

struct BatchRecord {
  IndexList rows;          // positions in the poisoned training set
  Dataset points;          // optimized batch
  Scalar effectiveness_ref = 0.0;
  Scalar risk = 0.0;       // detectability risk of the optimized batch
};

struct AttackResult {
  Dataset poisoned;
  std::vector<bool> is_poison;
  std::vector<BatchRecord> batches;
  CleanReference clean;
};

/// Called after each batch is fixed into the training set.
using BatchObserver = std::function<void(Index batch, const Dataset& poisoned)>;

/// Batched attack. Computes L_ref per batch from the current poisoned set and
/// optimizes each batch with (L_ref, risk_ref).
AttackResult craft_attack(const AttackPlan& plan, Scalar risk_ref, const Dataset& val,
                          const Dataset& train, const BatchObserver& observer = {});

/// Runs the batched attack at alpha = 1 with unit references and returns the
/// largest per-batch detectability risk.
Scalar compute_risk_ref(const AttackPlan& plan, const Dataset& val, const Dataset& train);

/// Training set after the first `k` batches of `result` are applied to `clean`.
Dataset apply_batches(const Dataset& clean, const AttackResult& result, Index k,
                      std::vector<bool>* is_poison = nullptr);

} // namespace poisonlab
