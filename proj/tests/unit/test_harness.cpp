#include "poisonlab/harness.hpp"

#include "support.hpp"

#include <fstream>
#include <map>

using namespace poisonlab;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.synthetic_n = 120;
  cfg.alphas = {1.0, 0.5};
  cfg.ratios = {0.0, 0.15, 0.3};
  cfg.defenses = {DefenseKind::None, DefenseKind::Trim};
  cfg.defense.reject_rate = 0.2;
  cfg.attack.outer_iters = 3;
  cfg.attack.batch_size = 3;
  cfg.repetitions = 2;
  cfg.master_seed = 5;
  return cfg;
}

ExperimentRecord make_record(Scalar ratio, const std::string& defense, Index seed, Scalar gain) {
  ExperimentRecord r;
  r.dataset = "synthetic";
  r.model = "linear";
  r.alpha = 1.0;
  r.ratio = ratio;
  r.defense = defense;
  r.seed = seed;
  r.gain_pct = gain;
  r.nmse = 0.5;
  r.nmse_nodef = 0.5;
  return r;
}

} // namespace

TEST_CASE("nmse") {
  const ModelParams p(Architecture::linear(1), Vector{{1.0, 0.0}});
  Dataset d;
  d.features = Matrix{{1.0}, {-2.0}};
  d.labels = Vector{{1.0, -2.0}};
  CHECK(nmse(p, d) == 0.0);
  // predictions (0, 0) against labels (2, 2): MSE 4, energy 4
  d.features.setZero();
  d.labels = Vector{{2.0, 2.0}};
  CHECK(nmse(p, d) == doctest::Approx(1.0));
  // MSE 2, energy 4
  d.labels = Vector{{2.0, -2.0}};
  d.features = Matrix{{2.0 - std::sqrt(2.0)}, {-2.0 + std::sqrt(2.0)}};
  CHECK(nmse(p, d) == doctest::Approx(0.5).epsilon(1e-12));
  d.labels.setZero();
  try {
    nmse(p, d);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("undefined NMSE") != std::string::npos);
  }
}

TEST_CASE("defense_gain") {
  CHECK(defense_gain(0.4, 0.4) == 0.0);
  CHECK(defense_gain(0.4, 0.3) == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(defense_gain(0.4, 0.5) == doctest::Approx(-25.0).epsilon(1e-12));
  CHECK_THROWS_AS(defense_gain(0.0, 0.1), Error);
}

TEST_CASE("defense names round trip") {
  for (DefenseKind k : {DefenseKind::None, DefenseKind::Trim, DefenseKind::Huber, DefenseKind::Sever,
                        DefenseKind::Proda, DefenseKind::BayesClean})
    CHECK(parse_defense(defense_name(k)) == k);
  CHECK_THROWS_AS(parse_defense("magic"), Error);
}

TEST_CASE("batches_for_ratio") {
  CHECK(batches_for_ratio(0.45, 3361, 252) == 6);
  CHECK(batches_for_ratio(0.0, 3361, 252) == 0);
  CHECK(batches_for_ratio(0.075, 200, 15) == 1);
}

TEST_CASE("presets") {
  ExperimentConfig cfg;
  apply_preset(cfg, "loan", ModelKind::Linear);
  CHECK(cfg.attack.outer_iters == 120);
  CHECK(cfg.attack.outer_rate == 0.9);
  CHECK(cfg.attack.inner.iterations == 30);
  CHECK(cfg.attack.inner.learning_rate == 0.1);
  CHECK(cfg.attack.batch_size == 252);
  apply_preset(cfg, "heart", ModelKind::MLP);
  CHECK(cfg.model == ModelKind::MLP);
  CHECK(cfg.attack.inner.iterations == 100);
  CHECK_THROWS_AS(apply_preset(cfg, "boston", ModelKind::MLP), Error);
}

TEST_CASE("config validation") {
  ExperimentConfig cfg = small_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.ratios = {0.5};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small_config();
  cfg.alphas = {1.1};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small_config();
  cfg.model = ModelKind::MLP;
  cfg.defenses = {DefenseKind::Huber};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small_config();
  cfg.repetitions = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("config files and keys") {
  const auto path = test::temp_path("exp.cfg");
  std::ofstream(path) << "# comment\npreset = heart\nalphas = 1, 0.4\n\nratios=0,0.15\n"
                         "defenses = trim,bayesclean\nrepetitions = 3 # trailing\nseed = 11\n"
                         "reject_rate = 0.3\nbayes_symmetric = false\nsplit = 0.6,0.2,0.2\n";
  const auto kv = read_config_file(path);
  CHECK(kv.at("preset") == "heart");
  CHECK(kv.at("repetitions") == "3");

  ExperimentConfig cfg;
  apply_config(cfg, kv);
  CHECK(cfg.attack.outer_iters == 50);
  CHECK(cfg.attack.batch_size == 120);
  CHECK(cfg.alphas == std::vector<Scalar>{1.0, 0.4});
  CHECK(cfg.ratios == std::vector<Scalar>{0.0, 0.15});
  CHECK(cfg.defenses == std::vector<DefenseKind>{DefenseKind::Trim, DefenseKind::BayesClean});
  CHECK(cfg.repetitions == 3);
  CHECK(cfg.master_seed == 11);
  CHECK(cfg.defense.reject_rate == 0.3);
  CHECK_FALSE(cfg.defense.bayes.symmetric);
  CHECK(cfg.split.train == doctest::Approx(0.6));

  CHECK_THROWS_AS(apply_config(cfg, {{"colour", "blue"}}), Error);
  CHECK_THROWS_AS(apply_config(cfg, {{"repetitions", "many"}}), Error);
  CHECK_THROWS_AS(apply_config(cfg, {{"repetitions", "3x"}}), Error);
  CHECK_THROWS_AS(apply_config(cfg, {{"inject", "maybe"}}), Error);
  CHECK(parse_real_list("0, 0.5,1") == std::vector<Scalar>{0.0, 0.5, 1.0});
  CHECK_THROWS_AS(parse_real_list("0,x"), Error);
}

TEST_CASE("summaries use the sample standard deviation") {
  const std::vector<ExperimentRecord> records{make_record(0.1, "trim", 0, 10.0), make_record(0.1, "trim", 1, 20.0),
                                              make_record(0.1, "trim", 2, 30.0), make_record(0.2, "trim", 0, 5.0)};
  const auto cells = summarize(records);
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].count == 3);
  CHECK(cells[0].mean_gain_pct == doctest::Approx(20.0));
  CHECK(cells[0].std_gain_pct == doctest::Approx(10.0));
  CHECK(cells[1].count == 1);
  CHECK(cells[1].std_gain_pct == 0.0);
}

TEST_CASE("experiment records are complete, nested and deterministic") {
  const ExperimentConfig cfg = small_config();
  const ExperimentReport report = run_experiment(cfg);
  CHECK(report.all_ok());
  CHECK(report.records.size() == 2 * 3 * 2 * 2);

  std::map<std::tuple<Scalar, Scalar, std::string, Index>, int> seen;
  for (const auto& r : report.records) seen[{r.alpha, r.ratio, r.defense, r.seed}] += 1;
  CHECK(seen.size() == report.records.size());

  for (const auto& r : report.records) {
    if (r.ratio == 0.0) {
      CHECK(r.poison_count == 0);
      if (r.defense == "none") CHECK(r.gain_pct == 0.0);
    }
    CHECK(r.nmse_nodef > 0);
    // cumulative attack: more budget never means fewer poisons
    for (const auto& q : report.records)
      if (q.alpha == r.alpha && q.seed == r.seed && q.defense == r.defense && q.ratio > r.ratio)
        CHECK(q.poison_count >= r.poison_count);
  }

  ExperimentConfig threaded = cfg;
  threaded.threads = 2;
  const ExperimentReport again = run_experiment(threaded);
  CHECK(report_json(cfg, report) == report_json(cfg, again));
  CHECK(report_csv(report) == report_csv(again));
}

TEST_CASE("clean cells are scored against the clean training statistics") {
  ExperimentConfig cfg = small_config();
  cfg.alphas = {1.0};
  cfg.ratios = {0.0};
  cfg.defenses = {DefenseKind::None};
  cfg.repetitions = 1;
  const ExperimentReport report = run_experiment(cfg);
  REQUIRE(report.records.size() == 1);

  const Dataset raw = gen_synthetic(cfg.synthetic_n, derive_seed(cfg.master_seed, 0, "data"));
  const SplitBundle b = split(raw, cfg.split, derive_seed(cfg.master_seed, 0, "split"));
  const auto [scaled, scaler] = standardize(b);
  const TrainConfig eval{Architecture::linear(1), cfg.evaluation, derive_seed(cfg.master_seed, 0, "eval-init")};
  CHECK(report.records[0].nmse == doctest::Approx(nmse(eval.fit(scaled.train), scaled.test)).epsilon(1e-12));
  const Scalar mean_x = b.train.features.col(0).mean();
  CHECK(scaler.mean(0) == doctest::Approx(mean_x));
}

TEST_CASE("cell failures are recorded, not fatal") {
  ExperimentConfig cfg = small_config();
  cfg.defense.reject_rate = 0.99;  // TRIM would keep a single point
  const ExperimentReport report = run_experiment(cfg);
  CHECK_FALSE(report.all_ok());
  for (const auto& r : report.records) {
    if (r.defense == "trim") {
      CHECK_FALSE(r.ok);
      CHECK_FALSE(r.error.empty());
    } else {
      CHECK(r.ok);
    }
  }
  CHECK(report.records.size() == 2 * 3 * 2 * 2);
}

TEST_CASE("report files") {
  const ExperimentConfig cfg = small_config();
  ExperimentReport report;
  report.records = {make_record(0.1, "trim", 0, 10.0)};
  report.summary = summarize(report.records);
  const std::string csv = report_csv(report);
  CHECK(csv.substr(0, csv.find('\n')) ==
        "dataset,model,alpha,ratio,defense,mean_gain_pct,std_gain_pct,mean_nmse_nodef");
  const std::string json = report_json(cfg, report);
  CHECK(json.find("runtime") == std::string::npos);
  CHECK(json.find("\"records\"") != std::string::npos);

  const auto dir = test::temp_path("report");
  write_report(dir, cfg, report);
  for (const char* f : {"report.json", "report.csv", "timings.csv"}) CHECK(std::filesystem::exists(dir / f));
}

TEST_CASE("run_defense") {
  test::Rng rng(3);
  const Dataset d = test::linear_data(80, 2, 0.3, rng);
  const TrainConfig lin{Architecture::linear(2), {200, 0.1, 0.0}, 0};
  DefenseSettings s;
  s.reject_rate = 0.2;
  for (DefenseKind k : {DefenseKind::None, DefenseKind::Trim, DefenseKind::Huber, DefenseKind::Sever,
                        DefenseKind::Proda, DefenseKind::BayesClean}) {
    const DefenseReport r = run_defense(k, d, s, lin, 1);
    CHECK(r.kept.size() + r.rejected.size() == 80);
    CHECK(r.params.size() == 3);
  }
  CHECK(run_defense(DefenseKind::None, d, s, lin, 1).rejected.empty());
  const TrainConfig mlp{Architecture::mlp(2), {50, 0.1, 0.0}, 0};
  CHECK_THROWS_AS(run_defense(DefenseKind::Huber, d, s, mlp, 1), Error);
}
