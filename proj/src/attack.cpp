#include "poisonlab/attack.hpp"
#include "poisonlab/random.hpp"

#include <algorithm>
#include <cmath>

namespace poisonlab {

FeasibleDomain FeasibleDomain::from_data(const Dataset& d) {
  if (d.empty()) throw Error("cannot derive a feasible domain from an empty dataset");
  FeasibleDomain dom;
  dom.feature_lower = d.features.colwise().minCoeff().transpose();
  dom.feature_upper = d.features.colwise().maxCoeff().transpose();
  dom.label_lower = d.labels.minCoeff();
  dom.label_upper = d.labels.maxCoeff();
  return dom;
}

void FeasibleDomain::validate(Index num_features) const {
  if (feature_lower.size() != num_features || feature_upper.size() != num_features)
    throw Error("feasible domain does not match feature count");
  if ((feature_lower.array() > feature_upper.array()).any() || label_lower > label_upper)
    throw Error("feasible domain has lower bound above upper bound");
}

void project(Matrix& features, Vector& labels, const FeasibleDomain& domain) {
  if (features.cols() != domain.feature_lower.size()) throw Error("shape mismatch in projection");
  for (Index c = 0; c < features.cols(); ++c)
    features.col(c) = features.col(c).cwiseMax(domain.feature_lower(c)).cwiseMin(domain.feature_upper(c));
  labels = labels.cwiseMax(domain.label_lower).cwiseMin(domain.label_upper);
}

void AttackPlan::validate(Index n_train) const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("alpha must lie in [0, 1]");
  if (n_poison < 0) throw Error("poisoning budget must be non-negative");
  if (batch_size < 1) throw Error("batch size must be at least 1");
  if (outer_iters < 0) throw Error("outer iteration count must be non-negative");
  if (outer_rate < 0) throw Error("outer learning rate must be non-negative");
  if (inner.iterations < 1) throw Error("inner training needs at least one iteration");
  std::vector<bool> seen(static_cast<std::size_t>(n_train), false);
  for (const auto& b : batches)
    for (Index i : b) {
      if (i < 0 || i >= n_train) throw Error("batch index out of range");
      if (seen[static_cast<std::size_t>(i)]) throw Error("batch index sets overlap");
      seen[static_cast<std::size_t>(i)] = true;
    }
}

namespace {

IndexList sample_without_replacement(const IndexList& pool, Index k, Rng& rng) {
  IndexList copy = pool;
  for (Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Index> pick(i, static_cast<Index>(copy.size()) - 1);
    std::swap(copy[static_cast<std::size_t>(i)], copy[static_cast<std::size_t>(pick(rng))]);
  }
  copy.resize(static_cast<std::size_t>(k));
  return copy;
}

} // namespace

PoisonBatch init_poison(const Dataset& train, const IndexList& pool, Index batch_size,
                        std::uint64_t seed) {
  if (batch_size > static_cast<Index>(pool.size()))
    throw Error("batch size exceeds the remaining clean pool");
  Rng rng(seed);
  PoisonBatch b;
  b.source = sample_without_replacement(pool, batch_size, rng);
  b.points = train.subset(b.source);
  return b;
}

std::vector<IndexList> plan_batches(Index n_train, Index n_poison, Index batch_size,
                                    std::uint64_t seed) {
  if (batch_size < 1) throw Error("batch size must be at least 1");
  IndexList pool(static_cast<std::size_t>(n_train));
  for (Index i = 0; i < n_train; ++i) pool[static_cast<std::size_t>(i)] = i;
  Index remaining = std::min(n_poison, n_train);
  std::vector<IndexList> batches;
  Rng rng(seed);
  while (remaining > 0) {
    const Index k = std::min(batch_size, remaining);
    IndexList b = sample_without_replacement(pool, k, rng);
    std::vector<bool> used(static_cast<std::size_t>(n_train), false);
    for (Index i : b) used[static_cast<std::size_t>(i)] = true;
    std::erase_if(pool, [&](Index i) { return used[static_cast<std::size_t>(i)]; });
    batches.push_back(std::move(b));
    remaining -= k;
  }
  return batches;
}

ModelParams plan_init(const AttackPlan& plan) {
  return init_params(plan.arch, derive_seed(plan.seed, 0, "init-weights"));
}

CleanReference fit_clean_reference(const AttackPlan& plan, const Dataset& clean_train) {
  CleanReference ref;
  ref.params = sgd_fit(plan_init(plan), clean_train, plan.inner);
  ref.sigma = residual_sigma(ref.params, clean_train);
  return ref;
}

Dataset optimize_batch(const AttackPlan& plan, const ObjectiveConfig& objective, const Dataset& val,
                       const Dataset& train, const IndexList& poison) {
  Dataset work = train;
  Dataset batch = train.subset(poison);
  const ModelParams w0 = plan_init(plan);
  for (Index tau = 0; tau < plan.outer_iters; ++tau) {
    RmdResult r = rmd_hypergrad(objective, val, work, poison, w0, plan.inner);
    const Scalar norm = std::sqrt(r.gradient.squared_norm());
    if (!std::isfinite(norm)) throw Error("non-finite hypergradient at hyperiteration " + std::to_string(tau));
    if (norm > 0) {
      batch.features += (plan.outer_rate / norm) * r.gradient.features;
      batch.labels += (plan.outer_rate / norm) * r.gradient.labels;
    }
    project(batch.features, batch.labels, plan.domain);
    for (std::size_t k = 0; k < poison.size(); ++k) {
      work.features.row(poison[k]) = batch.features.row(static_cast<Index>(k));
      work.labels(poison[k]) = batch.labels(static_cast<Index>(k));
    }
  }
  return batch;
}

namespace {

AttackResult run_batches(const AttackPlan& plan, Scalar alpha, Scalar risk_ref, bool unit_refs,
                         const Dataset& val, const Dataset& train, const BatchObserver& observer) {
  plan.validate(train.size());
  plan.domain.validate(train.num_features());

  AttackResult res;
  res.clean = fit_clean_reference(plan, train);
  res.poisoned = train;
  res.is_poison.assign(static_cast<std::size_t>(train.size()), false);

  ObjectiveConfig obj;
  obj.alpha = alpha;
  obj.risk_ref = unit_refs ? 1.0 : risk_ref;
  obj.clean = res.clean.params;
  obj.sigma = res.clean.sigma;

  const ModelParams w0 = plan_init(plan);
  for (Index i = 0; i < plan.num_batches(); ++i) {
    const IndexList& source = plan.batches[static_cast<std::size_t>(i)];
    Scalar eff_ref = 1.0;
    if (!unit_refs) {
      // Reference: validation loss of the model trained on the current (partially poisoned) set.
      const ModelParams w = sgd_fit(w0, res.poisoned, plan.inner);
      eff_ref = mse_loss(w, val, 0.0);
      if (!(eff_ref > 0)) throw Error("degenerate effectiveness reference at batch " + std::to_string(i));
    }
    obj.effectiveness_ref = eff_ref;

    IndexList rows;
    if (plan.inject) {
      const Index start = res.poisoned.size();
      const Dataset clones = train.subset(source);
      Dataset grown;
      grown.column_names = res.poisoned.column_names;
      grown.features.resize(start + clones.size(), train.num_features());
      grown.labels.resize(start + clones.size());
      grown.features << res.poisoned.features, clones.features;
      grown.labels << res.poisoned.labels, clones.labels;
      res.poisoned = std::move(grown);
      for (Index k = 0; k < clones.size(); ++k) rows.push_back(start + k);
      res.is_poison.resize(static_cast<std::size_t>(res.poisoned.size()), false);
    } else {
      rows = source;  // clones equal the rows they replace
    }

    Dataset optimized = optimize_batch(plan, obj, val, res.poisoned, rows);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      res.poisoned.features.row(rows[k]) = optimized.features.row(static_cast<Index>(k));
      res.poisoned.labels(rows[k]) = optimized.labels(static_cast<Index>(k));
      res.is_poison[static_cast<std::size_t>(rows[k])] = true;
    }
    BatchRecord rec;
    rec.rows = rows;
    rec.risk = detect_risk(optimized, res.clean.params, res.clean.sigma);
    rec.points = std::move(optimized);
    rec.effectiveness_ref = eff_ref;
    res.batches.push_back(std::move(rec));
    if (observer) observer(i, res.poisoned);
  }
  return res;
}

} // namespace

AttackResult craft_attack(const AttackPlan& plan, Scalar risk_ref, const Dataset& val,
                          const Dataset& train, const BatchObserver& observer) {
  if (!(risk_ref > 0)) throw Error("detectability reference must be positive");
  return run_batches(plan, plan.alpha, risk_ref, !plan.normalize, val, train, observer);
}

Scalar compute_risk_ref(const AttackPlan& plan, const Dataset& val, const Dataset& train) {
  AttackResult res = run_batches(plan, 1.0, 1.0, true, val, train, {});
  Scalar best = 0.0;
  for (const auto& b : res.batches) best = std::max(best, b.risk);
  if (!(best > 0)) throw Error("degenerate detectability reference");
  return best;
}

Dataset apply_batches(const Dataset& clean, const AttackResult& result, Index k,
                      std::vector<bool>* is_poison) {
  Dataset out = clean;
  std::vector<bool> flags(static_cast<std::size_t>(clean.size()), false);
  for (Index i = 0; i < k && i < static_cast<Index>(result.batches.size()); ++i) {
    const auto& b = result.batches[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < b.rows.size(); ++j) {
      const Index row = b.rows[j];
      if (row >= out.size()) {
        // injected rows arrive in order at the end
        out.features.conservativeResize(row + 1, Eigen::NoChange);
        out.labels.conservativeResize(row + 1);
        flags.resize(static_cast<std::size_t>(row + 1), false);
      }
      out.features.row(row) = b.points.features.row(static_cast<Index>(j));
      out.labels(row) = b.points.labels(static_cast<Index>(j));
      flags[static_cast<std::size_t>(row)] = true;
    }
  }
  if (is_poison != nullptr) *is_poison = std::move(flags);
  return out;
}

} // namespace poisonlab
