#include "poisonlab/harness.hpp"
#include "poisonlab/random.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

using namespace poisonlab;
namespace fs = std::filesystem;

namespace {

struct DataFlags {
  std::string data;  // empty: synthetic
  std::string target_col;
  std::string split = "0.5,0.15,0.35";
  bool no_header = false;
  Index synthetic_n = 400;
  std::uint64_t seed = 0;
};

void add_data_flags(CLI::App* app, DataFlags& f) {
  app->add_option("--data", f.data, "CSV dataset (last column is the target)");
  app->add_option("--target-col", f.target_col, "Target column index or header name");
  app->add_option("--split", f.split, "train,val,test ratios");
  app->add_flag("--no-header", f.no_header, "CSV has no header row");
  app->add_option("--synthetic-n", f.synthetic_n, "Synthetic dataset size when --data is absent");
  app->add_option("--seed", f.seed, "Master seed");
}

std::optional<Index> target_index(const DataFlags& f) {
  if (f.target_col.empty()) return std::nullopt;
  return resolve_column(f.data, f.target_col);
}

fs::path output_dir(const std::string& flag) {
  if (const char* env = std::getenv("POISONLAB_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return flag;
}

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << body;
}

ModelKind parse_model(const std::string& s) {
  if (s == "linear") return ModelKind::Linear;
  if (s == "mlp") return ModelKind::MLP;
  throw Error("model must be linear or mlp");
}

int run_synth(const DataFlags& f, const std::string& out) {
  const Dataset d = gen_synthetic(f.synthetic_n, derive_seed(f.seed, 0, "data"));
  save_csv(out, d);
  std::cout << "wrote " << d.size() << " rows to " << out << "\n";
  return 0;
}

struct AttackFlags {
  std::string model = "linear";
  std::string preset;
  Scalar alpha = 1.0;
  Scalar ratio = 0.2;
  Index t_out = 100, inner_t = 40, batch = 0;
  Scalar gamma = 0.9, eta = 0.1, lambda = 0.0;
  bool inject = false;
};

int run_attack(const DataFlags& f, const AttackFlags& a, const std::string& out_flag) {
  const RawDataset raw = f.data.empty() ? gen_synthetic(f.synthetic_n, derive_seed(f.seed, 0, "data"))
                                        : load_csv(f.data, !f.no_header, target_index(f));
  const auto [bundle, scaler] = standardize(split(raw, parse_ratios(f.split), derive_seed(f.seed, 0, "split")));
  const Dataset& clean = bundle.train;
  const Index n_tr = clean.size();

  ExperimentConfig cfg;
  cfg.model = parse_model(a.model);
  cfg.attack.outer_iters = a.t_out;
  cfg.attack.outer_rate = a.gamma;
  cfg.attack.inner = {a.inner_t, a.eta, a.lambda};
  cfg.attack.batch_size = a.batch;
  if (!a.preset.empty()) apply_preset(cfg, a.preset, cfg.model);

  AttackPlan plan;
  plan.alpha = a.alpha;
  plan.arch = cfg.model == ModelKind::Linear ? Architecture::linear(clean.num_features())
                                             : Architecture::mlp(clean.num_features());
  plan.batch_size = cfg.attack.batch_size > 0
                        ? cfg.attack.batch_size
                        : std::max<Index>(1, static_cast<Index>(std::llround(0.075 * static_cast<Scalar>(n_tr))));
  plan.n_poison = std::min(n_tr, static_cast<Index>(std::llround(a.ratio * static_cast<Scalar>(n_tr))));
  plan.outer_iters = cfg.attack.outer_iters;
  plan.outer_rate = cfg.attack.outer_rate;
  plan.inner = cfg.attack.inner;
  plan.seed = derive_seed(f.seed, 0, "attack");
  plan.domain = FeasibleDomain::from_data(clean);
  plan.inject = a.inject;
  plan.batches = plan_batches(n_tr, plan.n_poison, plan.batch_size, derive_seed(f.seed, 0, "batches"));

  const Scalar risk_ref = a.alpha < 1.0 ? compute_risk_ref(plan, bundle.val, clean) : 1.0;
  const AttackResult res = craft_attack(plan, risk_ref, bundle.val, clean, [](Index b, const Dataset&) {
    std::cerr << "batch " << b + 1 << " done\n";
  });

  const fs::path dir = output_dir(out_flag);
  fs::create_directories(dir);
  save_csv(dir / "train_poisoned.csv", res.poisoned, res.is_poison);
  save_csv(dir / "val.csv", bundle.val);
  save_csv(dir / "test.csv", bundle.test);
  const TrainConfig eval{plan.arch, plan.inner, derive_seed(f.seed, 0, "eval-init")};
  const Scalar clean_nmse = nmse(eval.fit(clean), bundle.test);
  const Scalar poisoned_nmse = nmse(eval.fit(res.poisoned), bundle.test);
  nlohmann::ordered_json j;
  j["alpha"] = a.alpha;
  j["poison_count"] = std::count(res.is_poison.begin(), res.is_poison.end(), true);
  j["n_train"] = n_tr;
  j["risk_ref"] = risk_ref;
  j["sigma_clean"] = res.clean.sigma;
  j["nmse_clean"] = clean_nmse;
  j["nmse_poisoned"] = poisoned_nmse;
  write_text(dir / "attack.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct DefendFlags {
  std::string defense = "trim";
  std::string model = "linear";
  bool poison_col = false;
  Scalar reject_rate = 0.4;
  Index inner_t = 40;
  Scalar eta = 0.1;
  bool literal = false;
};

int run_defend(const DataFlags& f, const DefendFlags& df, const std::string& out_flag) {
  if (f.data.empty()) throw Error("defend needs --data");
  Dataset d = load_csv(f.data, !f.no_header, target_index(f));
  std::vector<bool> is_poison;
  if (df.poison_col) {
    // the last column is the 0/1 poison marker written by `attack`
    for (Index i = 0; i < d.size(); ++i) is_poison.push_back(d.labels(i) != 0.0);
    const Index m = d.num_features() - 1;
    if (m < 1) throw Error("no features left after removing the poison column");
    d.labels = d.features.col(m);
    d.features.conservativeResize(Eigen::NoChange, m);
  }
  const DefenseKind kind = parse_defense(df.defense);
  const ModelKind model = parse_model(df.model);
  const Architecture arch = model == ModelKind::Linear ? Architecture::linear(d.num_features())
                                                       : Architecture::mlp(d.num_features());
  DefenseSettings s;
  s.reject_rate = df.reject_rate;
  s.bayes.symmetric = !df.literal;
  const TrainConfig cfg{arch, {df.inner_t, df.eta, 0.0}, derive_seed(f.seed, 0, "eval-init")};
  const DefenseReport rep = run_defense(kind, d, s, cfg, derive_seed(f.seed, 0, defense_name(kind)));

  const fs::path dir = output_dir(out_flag);
  fs::create_directories(dir);
  nlohmann::ordered_json j;
  j["defense"] = defense_name(kind);
  j["kept"] = rep.kept;
  j["rejected"] = rep.rejected;
  j["iterations"] = rep.iterations;
  j["losses"] = rep.losses;
  j["warning"] = rep.warning;
  if (!is_poison.empty()) {
    Index hit = 0, total = 0;
    for (std::size_t i = 0; i < is_poison.size(); ++i) total += is_poison[i];
    for (Index i : rep.rejected) hit += is_poison[static_cast<std::size_t>(i)];
    j["poison_rejected"] = hit;
    j["poison_total"] = total;
  }
  write_text(dir / "defense.json", j.dump(2) + "\n");
  save_csv(dir / "kept.csv", d.subset(rep.kept));
  save_model(dir / "model.json", rep.params);

  if (kind == DefenseKind::BayesClean) {
    const CleanPartition part = bayesclean(d, s.bayes);
    std::ostringstream csv;
    csv.precision(17);
    csv << "index,y,mu,sigma,zone\n";
    for (Index i = 0; i < d.size(); ++i)
      csv << i << ',' << d.labels(i) << ',' << part.mean(i) << ',' << part.stddev(i) << ','
          << zone_name(part.zones[static_cast<std::size_t>(i)]) << '\n';
    write_text(dir / "partition.csv", csv.str());
  }
  std::cout << "kept " << rep.kept.size() << " of " << d.size() << " points; output in " << dir.string()
            << "\n";
  return 0;
}

int run_experiment_cmd(const DataFlags& f, const std::string& config_path, const std::string& preset,
                       const std::string& model, Index threads, Index reps, const std::string& out_flag,
                       const std::vector<std::string>& sets, const CLI::App& sub) {
  ExperimentConfig cfg;
  cfg.model = parse_model(model);
  if (!preset.empty()) apply_preset(cfg, preset, cfg.model);
  if (!config_path.empty()) apply_config(cfg, read_config_file(config_path));
  std::map<std::string, std::string> overrides;
  for (const auto& kv : sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value");
    overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  apply_config(cfg, overrides);
  if (!f.data.empty()) {
    cfg.csv_path = f.data;
    cfg.csv_header = !f.no_header;
    cfg.target_col = target_index(f);
    if (cfg.dataset_name == "synthetic") cfg.dataset_name = fs::path(f.data).stem().string();
  }
  if (sub.count("--split") > 0) cfg.split = parse_ratios(f.split);
  if (sub.count("--synthetic-n") > 0) cfg.synthetic_n = f.synthetic_n;
  if (sub.count("--seed") > 0) cfg.master_seed = f.seed;
  cfg.threads = threads;
  if (reps > 0) cfg.repetitions = reps;

  const ExperimentReport report = run_experiment(cfg);
  const fs::path dir = output_dir(out_flag);
  write_report(dir, cfg, report);
  Index failures = 0;
  for (const auto& r : report.records)
    if (!r.ok) {
      ++failures;
      std::cerr << "cell failed: alpha=" << r.alpha << " ratio=" << r.ratio << " defense=" << r.defense
                << " seed=" << r.seed << ": " << r.error << "\n";
    }
  std::cout << report.records.size() << " records, " << failures << " failures; report in " << dir.string()
            << "\n";
  return report.all_ok() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"poisonlab: regression poisoning attacks and defenses"};
  app.require_subcommand(1);

  DataFlags data;
  std::string out = "out";

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset CSV");
  add_data_flags(synth, data);
  std::string synth_out = "synthetic.csv";
  synth->add_option("--out", synth_out, "Output CSV path");

  auto* attack = app.add_subcommand("attack", "Craft a poisoning attack and write the poisoned training set");
  add_data_flags(attack, data);
  AttackFlags af;
  attack->add_option("--model", af.model, "linear or mlp");
  attack->add_option("--preset", af.preset, "loan, heart, boston, appliances or synthetic");
  attack->add_option("--alpha", af.alpha, "Stealth factor in [0, 1]");
  attack->add_option("--ratio", af.ratio, "Poisoning ratio n_p / n_tr");
  attack->add_option("--t-out", af.t_out, "Outer iterations");
  attack->add_option("--gamma", af.gamma, "Outer step size");
  attack->add_option("--inner-t", af.inner_t, "Inner SGD iterations");
  attack->add_option("--eta", af.eta, "Inner learning rate");
  attack->add_option("--lambda", af.lambda, "Inner L2 penalty");
  attack->add_option("--batch", af.batch, "Poisoning batch size (0: 7.5% of n_tr)");
  attack->add_flag("--inject", af.inject, "Append poisons instead of replacing clean rows");
  attack->add_option("--out", out, "Output directory");

  auto* defend = app.add_subcommand("defend", "Run one defense on a training CSV");
  add_data_flags(defend, data);
  DefendFlags df;
  defend->add_option("--defense", df.defense, "none, trim, huber, sever, proda or bayesclean");
  defend->add_option("--model", df.model, "linear or mlp");
  defend->add_flag("--poison-col", df.poison_col, "Last column is the is_poison marker");
  defend->add_option("--reject-rate", df.reject_rate, "Fraction of points to reject");
  defend->add_option("--inner-t", df.inner_t, "SGD iterations per fit");
  defend->add_option("--eta", df.eta, "SGD learning rate");
  defend->add_flag("--literal", df.literal, "BayesClean: zone by |y| <= |mu + c sigma| instead of |y - mu| <= c sigma");
  defend->add_option("--out", out, "Output directory");

  auto* exp = app.add_subcommand("experiment", "Run the full experiment grid and write a report");
  add_data_flags(exp, data);
  std::string config_path, preset, model = "linear";
  Index threads = 1, reps = 0;
  std::vector<std::string> sets;
  exp->add_option("--config", config_path, "key = value config file");
  exp->add_option("--preset", preset, "Dataset preset");
  exp->add_option("--model", model, "linear or mlp");
  exp->add_option("--threads", threads, "Concurrency cap")->check(CLI::PositiveNumber);
  exp->add_option("--repetitions", reps, "Override repetitions");
  exp->add_option("--set", sets, "Extra key=value config entries");
  exp->add_option("--out", out, "Output directory (POISONLAB_OUTPUT_DIR overrides)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return run_synth(data, synth_out);
    if (*attack) return run_attack(data, af, out);
    if (*defend) return run_defend(data, df, out);
    if (*exp) return run_experiment_cmd(data, config_path, preset, model, threads, reps, out, sets, *exp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
