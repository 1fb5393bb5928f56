#include "poisonlab/attack.hpp"
#include "poisonlab/datasets.hpp"

#include "support.hpp"

#include <set>

using namespace poisonlab;

namespace {

struct Scenario {
  Dataset train, val;
  AttackPlan plan;
};

Scenario scenario(Scalar alpha, Index n_poison, Index batch, Index outer, std::uint64_t seed) {
  const auto [b, scaler] = standardize(split(gen_synthetic(200, seed), {}, seed));
  Scenario s;
  s.train = b.train;
  s.val = b.val;
  s.plan.alpha = alpha;
  s.plan.n_poison = n_poison;
  s.plan.batch_size = batch;
  s.plan.outer_iters = outer;
  s.plan.outer_rate = 0.9;
  s.plan.inner = {40, 0.1, 0.0};
  s.plan.arch = Architecture::linear(1);
  s.plan.seed = seed;
  s.plan.domain = FeasibleDomain::from_data(s.train);
  s.plan.batches = plan_batches(s.train.size(), n_poison, batch, seed);
  return s;
}

bool inside(const Dataset& d, const FeasibleDomain& dom) {
  for (Index i = 0; i < d.size(); ++i) {
    if ((d.features.row(i).transpose().array() < dom.feature_lower.array()).any()) return false;
    if ((d.features.row(i).transpose().array() > dom.feature_upper.array()).any()) return false;
    if (d.labels(i) < dom.label_lower || d.labels(i) > dom.label_upper) return false;
  }
  return true;
}

} // namespace

TEST_CASE("project clips componentwise") {
  FeasibleDomain dom{Vector{{-1.0, 0.0}}, Vector{{1.0, 2.0}}, -0.5, 0.5};
  Matrix X{{3.0, 1.0}, {-2.0, -1.0}, {0.5, 1.5}};
  Vector y{{1.0, -1.0, 0.25}};
  project(X, y, dom);
  CHECK(X == Matrix{{1.0, 1.0}, {-1.0, 0.0}, {0.5, 1.5}});
  CHECK(y == Vector{{0.5, -0.5, 0.25}});
  Matrix wrong(1, 3);
  Vector y1(1);
  CHECK_THROWS_AS(project(wrong, y1, dom), Error);
}

TEST_CASE("feasible domain from data") {
  Dataset d;
  d.features = Matrix{{1.0, -3.0}, {2.0, 4.0}};
  d.labels = Vector{{0.5, -0.5}};
  const FeasibleDomain dom = FeasibleDomain::from_data(d);
  CHECK(dom.feature_lower == Vector{{1.0, -3.0}});
  CHECK(dom.feature_upper == Vector{{2.0, 4.0}});
  CHECK(dom.label_lower == -0.5);
  CHECK(dom.label_upper == 0.5);
  CHECK_THROWS_AS(dom.validate(3), Error);
  CHECK_THROWS_AS(FeasibleDomain::from_data(Dataset{Matrix(0, 2), Vector(0), {}}), Error);
}

TEST_CASE("init_poison clones rows without duplicates") {
  const Scenario s = scenario(1.0, 10, 5, 1, 1);
  IndexList pool(static_cast<std::size_t>(s.train.size()));
  for (Index i = 0; i < s.train.size(); ++i) pool[static_cast<std::size_t>(i)] = i;

  const PoisonBatch all = init_poison(s.train, pool, s.train.size(), 3);
  CHECK(std::set<Index>(all.source.begin(), all.source.end()).size() == pool.size());

  const PoisonBatch b = init_poison(s.train, pool, 7, 3);
  CHECK(b.source.size() == 7);
  for (std::size_t k = 0; k < 7; ++k) {
    CHECK(b.points.features.row(static_cast<Index>(k)) == s.train.features.row(b.source[k]));
    CHECK(b.points.labels(static_cast<Index>(k)) == s.train.labels(b.source[k]));
  }
  CHECK(init_poison(s.train, pool, 7, 3).source == b.source);
  CHECK_THROWS_AS(init_poison(s.train, {1, 2}, 3, 0), Error);
}

TEST_CASE("plan_batches") {
  const auto batches = plan_batches(3361, 1512, 252, 9);
  CHECK(batches.size() == 6);
  std::set<Index> seen;
  for (const auto& b : batches) {
    CHECK(b.size() == 252);
    for (Index i : b) {
      CHECK(i >= 0);
      CHECK(i < 3361);
      seen.insert(i);
    }
  }
  CHECK(seen.size() == 1512);
  CHECK(plan_batches(3361, 1512, 252, 9) == batches);

  const auto ragged = plan_batches(20, 7, 3, 1);
  CHECK(ragged.size() == 3);
  CHECK(ragged.back().size() == 1);
  CHECK(plan_batches(5, 9, 2, 1).size() == 3);
  CHECK(plan_batches(10, 0, 2, 1).empty());
  CHECK_THROWS_AS(plan_batches(10, 2, 0, 1), Error);
}

TEST_CASE("plan validation") {
  Scenario s = scenario(1.0, 4, 2, 1, 2);
  CHECK_NOTHROW(s.plan.validate(s.train.size()));
  s.plan.batches = {{0, 1}, {1, 2}};
  CHECK_THROWS_AS(s.plan.validate(s.train.size()), Error);
  s.plan.batches = {{0, s.train.size()}};
  CHECK_THROWS_AS(s.plan.validate(s.train.size()), Error);
  s.plan.batches = {};
  s.plan.alpha = 1.5;
  CHECK_THROWS_AS(s.plan.validate(s.train.size()), Error);
}

TEST_CASE("zero step or zero iterations leave the batch unchanged") {
  for (auto [outer, rate] : {std::pair<Index, Scalar>{0, 0.9}, {5, 0.0}}) {
    Scenario s = scenario(1.0, 4, 4, outer, 3);
    s.plan.outer_rate = rate;
    const AttackResult r = craft_attack(s.plan, 1.0, s.val, s.train);
    CHECK(r.poisoned.features == s.train.features);
    CHECK(r.poisoned.labels == s.train.labels);
  }
}

TEST_CASE("an effectiveness-only attack raises the validation loss") {
  const Scenario s = scenario(1.0, 13, 13, 30, 4);
  const AttackResult r = craft_attack(s.plan, 1.0, s.val, s.train);
  const ModelParams w0 = plan_init(s.plan);
  const Scalar clean = mse_loss(sgd_fit(w0, s.train, s.plan.inner), s.val, 0.0);
  const Scalar poisoned = mse_loss(sgd_fit(w0, r.poisoned, s.plan.inner), s.val, 0.0);
  CHECK(poisoned > 1.2 * clean);
}

TEST_CASE("crafted attack invariants") {
  const Scenario s = scenario(0.6, 9, 4, 8, 5);
  Index observed = 0;
  const AttackResult r = craft_attack(s.plan, 0.5, s.val, s.train, [&](Index i, const Dataset& d) {
    CHECK(i == observed++);
    CHECK(d.size() == s.train.size());
  });
  CHECK(observed == 3);
  CHECK(r.poisoned.size() == s.train.size());
  CHECK(inside(r.poisoned, s.plan.domain));
  CHECK(std::count(r.is_poison.begin(), r.is_poison.end(), true) == 9);
  for (std::size_t b = 0; b < r.batches.size(); ++b) {
    CHECK(r.batches[b].rows == s.plan.batches[b]);
    CHECK(r.batches[b].points.size() == static_cast<Index>(s.plan.batches[b].size()));
    CHECK(r.batches[b].effectiveness_ref > 0);
    CHECK(r.batches[b].risk == doctest::Approx(detect_risk(r.batches[b].points, r.clean.params, r.clean.sigma)));
  }
  for (Index i = 0; i < s.train.size(); ++i)
    if (!r.is_poison[static_cast<std::size_t>(i)]) {
      CHECK(r.poisoned.features.row(i) == s.train.features.row(i));
      CHECK(r.poisoned.labels(i) == s.train.labels(i));
    }
}

TEST_CASE("an empty budget returns the input unchanged") {
  const Scenario s = scenario(1.0, 0, 4, 10, 6);
  const AttackResult r = craft_attack(s.plan, 1.0, s.val, s.train);
  CHECK(r.batches.empty());
  CHECK(r.poisoned.features == s.train.features);
  CHECK(r.poisoned.labels == s.train.labels);
}

TEST_CASE("apply_batches nests cumulatively") {
  const Scenario s = scenario(1.0, 8, 4, 5, 7);
  const AttackResult r = craft_attack(s.plan, 1.0, s.val, s.train);
  std::vector<bool> flags;
  CHECK(apply_batches(s.train, r, 0, &flags).labels == s.train.labels);
  CHECK(std::count(flags.begin(), flags.end(), true) == 0);
  apply_batches(s.train, r, 1, &flags);
  CHECK(std::count(flags.begin(), flags.end(), true) == 4);
  for (Index row : r.batches[0].rows) CHECK(flags[static_cast<std::size_t>(row)]);
  CHECK(apply_batches(s.train, r, 2).labels == r.poisoned.labels);
  CHECK(apply_batches(s.train, r, 2).features == r.poisoned.features);
}

TEST_CASE("injection appends the batch") {
  Scenario s = scenario(1.0, 6, 3, 5, 8);
  s.plan.inject = true;
  const AttackResult r = craft_attack(s.plan, 1.0, s.val, s.train);
  CHECK(r.poisoned.size() == s.train.size() + 6);
  CHECK(r.poisoned.features.topRows(s.train.size()) == s.train.features);
  CHECK(r.batches[1].rows == IndexList{s.train.size() + 3, s.train.size() + 4, s.train.size() + 5});
  std::vector<bool> flags;
  const Dataset re = apply_batches(s.train, r, 2, &flags);
  CHECK(re.labels == r.poisoned.labels);
  CHECK(flags == r.is_poison);
}

TEST_CASE("risk reference") {
  Scenario s = scenario(0.3, 4, 4, 5, 9);
  const Scalar ref = compute_risk_ref(s.plan, s.val, s.train);
  CHECK(ref > 0);

  // single batch: the reference is that batch's risk at alpha = 1 with unit references
  AttackPlan unit = s.plan;
  unit.alpha = 1.0;
  unit.normalize = false;
  const AttackResult r = craft_attack(unit, 1.0, s.val, s.train);
  CHECK(ref == doctest::Approx(r.batches[0].risk).epsilon(1e-12));

  // alpha of the plan does not matter
  s.plan.alpha = 0.9;
  CHECK(compute_risk_ref(s.plan, s.val, s.train) == ref);

  Scenario flat = s;
  flat.train.features.setZero();
  flat.train.labels.setZero();
  flat.plan.domain = FeasibleDomain::from_data(flat.train);
  CHECK_THROWS_AS(compute_risk_ref(flat.plan, flat.val, flat.train), Error);
  CHECK_THROWS_AS(craft_attack(s.plan, 0.0, s.val, s.train), Error);
}

TEST_CASE("at alpha = 1 normalization only rescales the objective") {
  Scenario s = scenario(1.0, 8, 4, 10, 10);
  const AttackResult on = craft_attack(s.plan, 1.0, s.val, s.train);
  s.plan.normalize = false;
  const AttackResult off = craft_attack(s.plan, 1.0, s.val, s.train);
  CHECK(test::rel_diff(on.poisoned.features, off.poisoned.features) <= 1e-10);
  CHECK(test::rel_diff(on.poisoned.labels, off.poisoned.labels) <= 1e-10);
}

TEST_CASE("without normalization the risk term dominates at alpha = 0.4") {
  for (std::uint64_t seed : {11, 12, 13}) {
    Scenario s = scenario(0.4, 4, 4, 40, seed);
    const Scalar ref = compute_risk_ref(s.plan, s.val, s.train);
    const AttackResult on = craft_attack(s.plan, ref, s.val, s.train);
    s.plan.normalize = false;
    const AttackResult off = craft_attack(s.plan, ref, s.val, s.train);

    const auto max_residual = [](const AttackResult& r) {
      const Dataset& b = r.batches[0].points;
      return (forward(r.clean.params, b.features) - b.labels).cwiseAbs().maxCoeff() / r.clean.sigma;
    };
    CHECK(max_residual(off) < max_residual(on));
    CHECK(off.batches[0].risk < on.batches[0].risk);
  }
}
