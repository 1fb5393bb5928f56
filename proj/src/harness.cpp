#include "poisonlab/harness.hpp"
#include "poisonlab/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace poisonlab {

Scalar nmse(const ModelParams& params, const Dataset& test) {
  if (test.empty()) throw Error("undefined NMSE: empty test set");
  const Scalar n = static_cast<Scalar>(test.size());
  const Scalar energy = test.labels.squaredNorm() / n;
  if (!(energy > 0)) throw Error("undefined NMSE: all test labels are zero");
  const Scalar mse = (forward(params, test.features) - test.labels).squaredNorm() / n;
  return mse / energy;
}

Scalar defense_gain(Scalar nmse_nodef, Scalar nmse_def) {
  if (!(nmse_nodef > 0)) throw Error("defense gain undefined for zero undefended NMSE");
  return (nmse_nodef - nmse_def) / nmse_nodef * 100.0;
}

const char* defense_name(DefenseKind k) {
  switch (k) {
    case DefenseKind::None: return "none";
    case DefenseKind::Trim: return "trim";
    case DefenseKind::Huber: return "huber";
    case DefenseKind::Sever: return "sever";
    case DefenseKind::Proda: return "proda";
    case DefenseKind::BayesClean: return "bayesclean";
  }
  return "?";
}

DefenseKind parse_defense(const std::string& name) {
  for (auto k : {DefenseKind::None, DefenseKind::Trim, DefenseKind::Huber, DefenseKind::Sever,
                 DefenseKind::Proda, DefenseKind::BayesClean})
    if (name == defense_name(k)) return k;
  throw Error("unknown defense '" + name + "'");
}

DefenseReport run_defense(DefenseKind kind, const Dataset& train, const DefenseSettings& s,
                          const TrainConfig& cfg, std::uint64_t seed) {
  switch (kind) {
    case DefenseKind::None: {
      DefenseReport r;
      r.params = cfg.fit(train);
      r.kept = complement({}, train.size());
      r.iterations = 1;
      return r;
    }
    case DefenseKind::Trim:
      return trim(train, s.reject_rate, cfg, s.trim_max_iters);
    case DefenseKind::Huber:
      if (cfg.arch.kind != ModelKind::Linear) throw Error("Huber defense supports linear models only");
      return huber_defense(train, huber_grid(s.huber_min, s.huber_max, s.huber_count), s.huber_l2,
                           s.huber_max_iters, seed);
    case DefenseKind::Sever:
      return sever(train, s.reject_rate, s.sever_rounds, cfg);
    case DefenseKind::Proda: {
      ProdaConfig p = s.proda;
      p.reject_rate = s.reject_rate;
      return proda(train, p, cfg, seed);
    }
    case DefenseKind::BayesClean: {
      CleanPartition part = bayesclean(train, s.bayes);
      DefenseReport r;
      r.kept = part.accept;
      r.rejected = complement(r.kept, train.size());
      if (r.kept.size() < 2) throw Error("BayesClean accepted fewer than 2 points");
      r.params = cfg.fit(train.subset(r.kept));
      r.iterations = part.state.iterations;
      r.losses = part.state.objective_trace;
      return r;
    }
  }
  throw Error("unhandled defense");
}

void ExperimentConfig::validate() const {
  if (repetitions < 1) throw Error("repetitions must be at least 1");
  if (threads < 1) throw Error("thread count must be at least 1");
  for (Scalar a : alphas)
    if (!(a >= 0 && a <= 1)) throw Error("alpha values must lie in [0, 1]");
  for (Scalar r : ratios)
    if (!(r >= 0 && r <= 0.45 + 1e-12)) throw Error("poisoning ratios must lie in [0, 0.45]");
  if (ratios.empty() || alphas.empty()) throw Error("need at least one alpha and one ratio");
  if (model != ModelKind::Linear)
    for (auto d : defenses)
      if (d == DefenseKind::Huber) throw Error("Huber defense supports linear models only");
  if (!csv_path && synthetic_n < 3) throw Error("synthetic dataset too small");
}

void apply_preset(ExperimentConfig& cfg, const std::string& dataset, ModelKind model) {
  struct Row {
    const char* name;
    ModelKind model;
    Index t_out;
    Scalar gamma;
    Index t;
    Scalar eta;
    Index batch;
  };
  static const Row rows[] = {
      {"loan", ModelKind::Linear, 120, 0.9, 30, 0.1, 252},
      {"heart", ModelKind::Linear, 50, 0.9, 40, 0.1, 120},
      {"boston", ModelKind::Linear, 100, 0.9, 40, 0.1, 19},
      {"appliances", ModelKind::Linear, 50, 0.9, 70, 0.2, 740},
      {"loan", ModelKind::MLP, 150, 0.9, 90, 0.1, 252},
      {"heart", ModelKind::MLP, 80, 0.9, 100, 0.1, 120},
      {"synthetic", ModelKind::Linear, 100, 0.9, 40, 0.1, 0},
      {"synthetic", ModelKind::MLP, 100, 0.9, 40, 0.1, 0},
  };
  for (const auto& r : rows) {
    if (dataset == r.name && model == r.model) {
      cfg.dataset_name = dataset;
      cfg.model = model;
      cfg.attack.outer_iters = r.t_out;
      cfg.attack.outer_rate = r.gamma;
      cfg.attack.inner = {r.t, r.eta, 0.0};
      cfg.attack.batch_size = r.batch;
      cfg.evaluation = {r.t, r.eta, 0.0};
      return;
    }
  }
  throw Error("no preset for dataset '" + dataset + "' with this model");
}

bool ExperimentReport::all_ok() const {
  return std::all_of(records.begin(), records.end(), [](const auto& r) { return r.ok; });
}

Index batches_for_ratio(Scalar ratio, Index n_train, Index batch_size) {
  return static_cast<Index>(std::llround(ratio * static_cast<Scalar>(n_train) / static_cast<Scalar>(batch_size)));
}

namespace {

const char* model_name(ModelKind k) { return k == ModelKind::Linear ? "linear" : "mlp"; }

Architecture make_arch(ModelKind k, Index m) {
  return k == ModelKind::Linear ? Architecture::linear(m) : Architecture::mlp(m);
}

using Clock = std::chrono::steady_clock;

Scalar seconds_since(Clock::time_point t0) {
  return std::chrono::duration<Scalar>(Clock::now() - t0).count();
}

std::vector<ExperimentRecord> run_repetition(const ExperimentConfig& cfg, const RawDataset* raw_csv,
                                             Index rep) {
  std::vector<ExperimentRecord> out;
  const auto seed = static_cast<std::uint64_t>(rep);
  const std::string mname = model_name(cfg.model);

  auto record = [&](Scalar alpha, Scalar ratio, Index count, DefenseKind d) {
    ExperimentRecord r;
    r.dataset = cfg.dataset_name;
    r.model = mname;
    r.alpha = alpha;
    r.ratio = ratio;
    r.poison_count = count;
    r.defense = defense_name(d);
    r.seed = rep;
    return r;
  };
  auto fail_all = [&](Scalar alpha, const std::string& msg) {
    for (Scalar ratio : cfg.ratios) {
      for (DefenseKind d : cfg.defenses) {
        ExperimentRecord r = record(alpha, ratio, 0, d);
        r.ok = false;
        r.error = msg;
        out.push_back(r);
      }
    }
  };

  SplitBundle bundle;
  try {
    const RawDataset raw = raw_csv != nullptr
                               ? *raw_csv
                               : gen_synthetic(cfg.synthetic_n, derive_seed(cfg.master_seed, seed, "data"));
    bundle = standardize(split(raw, cfg.split, derive_seed(cfg.master_seed, seed, "split"))).first;
  } catch (const std::exception& e) {
    for (Scalar a : cfg.alphas) fail_all(a, e.what());
    return out;
  }

  const Dataset& clean = bundle.train;
  const Index n_tr = clean.size();
  const Index m = clean.num_features();
  const Architecture arch = make_arch(cfg.model, m);
  const Index batch = cfg.attack.batch_size > 0
                          ? cfg.attack.batch_size
                          : std::max<Index>(1, static_cast<Index>(std::llround(0.075 * static_cast<Scalar>(n_tr))));
  const Scalar max_ratio = *std::max_element(cfg.ratios.begin(), cfg.ratios.end());
  const Index max_batches = batches_for_ratio(max_ratio, n_tr, batch);

  AttackPlan plan;
  plan.n_poison = std::min(max_batches * batch, n_tr);
  plan.batch_size = batch;
  plan.outer_iters = cfg.attack.outer_iters;
  plan.outer_rate = cfg.attack.outer_rate;
  plan.inner = cfg.attack.inner;
  plan.arch = arch;
  plan.seed = derive_seed(cfg.master_seed, seed, "attack");
  plan.domain = FeasibleDomain::from_data(clean);
  plan.inject = cfg.attack.inject;
  plan.normalize = cfg.attack.normalize;
  plan.batches = plan_batches(n_tr, plan.n_poison, batch, derive_seed(cfg.master_seed, seed, "batches"));

  const TrainConfig eval{arch, cfg.evaluation, derive_seed(cfg.master_seed, seed, "eval-init")};
  const bool need_risk_ref =
      std::any_of(cfg.alphas.begin(), cfg.alphas.end(), [](Scalar a) { return a < 1.0; }) && plan.normalize;
  Scalar risk_ref = 1.0;
  std::string risk_error;
  if (need_risk_ref && plan.num_batches() > 0) {
    try {
      risk_ref = compute_risk_ref(plan, bundle.val, clean);
    } catch (const std::exception& e) {
      risk_error = e.what();
    }
  }

  for (Scalar alpha : cfg.alphas) {
    if (alpha < 1.0 && !risk_error.empty()) {
      fail_all(alpha, risk_error);
      continue;
    }
    AttackResult attack;
    try {
      AttackPlan p = plan;
      p.alpha = alpha;
      attack = craft_attack(p, risk_ref, bundle.val, clean);
    } catch (const std::exception& e) {
      fail_all(alpha, e.what());
      continue;
    }
    for (Scalar ratio : cfg.ratios) {
      std::vector<bool> is_poison;
      const Index k = std::min(batches_for_ratio(ratio, n_tr, batch), plan.num_batches());
      const Dataset poisoned = apply_batches(clean, attack, k, &is_poison);
      const Index n_poison = std::count(is_poison.begin(), is_poison.end(), true);

      Scalar nmse_nodef = 0.0;
      std::string nodef_error;
      try {
        nmse_nodef = nmse(eval.fit(poisoned), bundle.test);
      } catch (const std::exception& e) {
        nodef_error = e.what();
      }

      for (DefenseKind d : cfg.defenses) {
        ExperimentRecord r = record(alpha, ratio, n_poison, d);
        const auto t0 = Clock::now();
        try {
          if (!nodef_error.empty()) throw Error(nodef_error);
          r.nmse_nodef = nmse_nodef;
          if (d == DefenseKind::None) {
            r.nmse = nmse_nodef;
          } else {
            const DefenseReport rep_d = run_defense(d, poisoned, cfg.defense, eval,
                                                    derive_seed(cfg.master_seed, seed, defense_name(d)));
            r.nmse = nmse(rep_d.params, bundle.test);
            for (Index i : rep_d.rejected)
              (is_poison[static_cast<std::size_t>(i)] ? r.poison_rejected : r.clean_rejected) += 1;
          }
          r.gain_pct = defense_gain(r.nmse_nodef, r.nmse);
        } catch (const std::exception& e) {
          r.ok = false;
          r.error = e.what();
        }
        r.runtime_s = seconds_since(t0);
        out.push_back(std::move(r));
      }
    }
  }
  return out;
}

} // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::optional<RawDataset> raw;
  if (cfg.csv_path) raw = load_csv(*cfg.csv_path, cfg.csv_header, cfg.target_col);

  std::vector<std::vector<ExperimentRecord>> per_rep(static_cast<std::size_t>(cfg.repetitions));
  std::atomic<Index> next{0};
  auto worker = [&] {
    for (Index rep = next++; rep < cfg.repetitions; rep = next++)
      per_rep[static_cast<std::size_t>(rep)] = run_repetition(cfg, raw ? &*raw : nullptr, rep);
  };
  const Index n_threads = std::min(cfg.threads, cfg.repetitions);
  std::vector<std::thread> pool;
  for (Index t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  ExperimentReport report;
  for (auto& v : per_rep)
    for (auto& r : v) report.records.push_back(std::move(r));
  // stable cell order: alpha, ratio, defense, seed
  std::stable_sort(report.records.begin(), report.records.end(), [](const auto& a, const auto& b) {
    if (a.alpha != b.alpha) return a.alpha < b.alpha;
    if (a.ratio != b.ratio) return a.ratio < b.ratio;
    if (a.defense != b.defense) return a.defense < b.defense;
    return a.seed < b.seed;
  });
  report.summary = summarize(report.records);
  return report;
}

std::vector<CellSummary> summarize(const std::vector<ExperimentRecord>& records) {
  std::vector<CellSummary> cells;
  auto same_cell = [](const CellSummary& c, const ExperimentRecord& r) {
    return c.alpha == r.alpha && c.ratio == r.ratio && c.defense == r.defense && c.dataset == r.dataset &&
           c.model == r.model;
  };
  std::vector<std::vector<const ExperimentRecord*>> members;
  for (const auto& r : records) {
    auto it = std::find_if(cells.begin(), cells.end(), [&](const auto& c) { return same_cell(c, r); });
    if (it == cells.end()) {
      CellSummary c;
      c.dataset = r.dataset;
      c.model = r.model;
      c.defense = r.defense;
      c.alpha = r.alpha;
      c.ratio = r.ratio;
      cells.push_back(c);
      members.emplace_back();
      it = cells.end() - 1;
    }
    members[static_cast<std::size_t>(it - cells.begin())].push_back(&r);
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    auto& c = cells[i];
    std::vector<Scalar> nm, gain, nodef;
    for (const auto* r : members[i]) {
      if (!r->ok) {
        ++c.failures;
        continue;
      }
      nm.push_back(r->nmse);
      gain.push_back(r->gain_pct);
      nodef.push_back(r->nmse_nodef);
    }
    c.count = static_cast<Index>(nm.size());
    auto mean = [](const std::vector<Scalar>& v) {
      Scalar s = 0;
      for (Scalar x : v) s += x;
      return v.empty() ? 0.0 : s / static_cast<Scalar>(v.size());
    };
    auto stddev = [&](const std::vector<Scalar>& v) {
      if (v.size() < 2) return 0.0;
      const Scalar mu = mean(v);
      Scalar s = 0;
      for (Scalar x : v) s += (x - mu) * (x - mu);
      return std::sqrt(s / static_cast<Scalar>(v.size() - 1));
    };
    c.mean_nmse = mean(nm);
    c.std_nmse = stddev(nm);
    c.mean_gain_pct = mean(gain);
    c.std_gain_pct = stddev(gain);
    c.mean_nmse_nodef = mean(nodef);
  }
  return cells;
}

std::string report_json(const ExperimentConfig& cfg, const ExperimentReport& report) {
  using nlohmann::ordered_json;
  ordered_json j;
  ordered_json c;
  c["dataset"] = cfg.dataset_name;
  c["model"] = model_name(cfg.model);
  c["master_seed"] = cfg.master_seed;
  c["repetitions"] = cfg.repetitions;
  c["alphas"] = cfg.alphas;
  c["ratios"] = cfg.ratios;
  std::vector<std::string> defs;
  for (auto d : cfg.defenses) defs.push_back(defense_name(d));
  c["defenses"] = defs;
  c["attack"] = {{"t_out", cfg.attack.outer_iters},
                 {"gamma", cfg.attack.outer_rate},
                 {"inner_t", cfg.attack.inner.iterations},
                 {"inner_eta", cfg.attack.inner.learning_rate},
                 {"lambda", cfg.attack.inner.l2},
                 {"batch_size", cfg.attack.batch_size},
                 {"inject", cfg.attack.inject},
                 {"normalize", cfg.attack.normalize}};
  c["evaluation"] = {{"t", cfg.evaluation.iterations}, {"eta", cfg.evaluation.learning_rate}};
  c["reject_rate"] = cfg.defense.reject_rate;
  j["config"] = c;

  ordered_json recs = ordered_json::array();
  for (const auto& r : report.records) {
    ordered_json o;
    o["dataset"] = r.dataset;
    o["model"] = r.model;
    o["alpha"] = r.alpha;
    o["ratio"] = r.ratio;
    o["poison_count"] = r.poison_count;
    o["defense"] = r.defense;
    o["seed"] = r.seed;
    o["ok"] = r.ok;
    if (r.ok) {
      o["nmse"] = r.nmse;
      o["nmse_nodef"] = r.nmse_nodef;
      o["gain_pct"] = r.gain_pct;
      o["poison_rejected"] = r.poison_rejected;
      o["clean_rejected"] = r.clean_rejected;
    } else {
      o["error"] = r.error;
    }
    recs.push_back(o);
  }
  j["records"] = recs;

  ordered_json cells = ordered_json::array();
  for (const auto& s : report.summary) {
    cells.push_back({{"dataset", s.dataset},
                     {"model", s.model},
                     {"alpha", s.alpha},
                     {"ratio", s.ratio},
                     {"defense", s.defense},
                     {"count", s.count},
                     {"failures", s.failures},
                     {"mean_nmse", s.mean_nmse},
                     {"std_nmse", s.std_nmse},
                     {"mean_gain_pct", s.mean_gain_pct},
                     {"std_gain_pct", s.std_gain_pct},
                     {"mean_nmse_nodef", s.mean_nmse_nodef}});
  }
  j["summary"] = cells;
  return j.dump(2) + "\n";
}

std::string report_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out.precision(10);
  out << "dataset,model,alpha,ratio,defense,mean_gain_pct,std_gain_pct,mean_nmse_nodef\n";
  for (const auto& s : report.summary)
    out << s.dataset << ',' << s.model << ',' << s.alpha << ',' << s.ratio << ',' << s.defense << ','
        << s.mean_gain_pct << ',' << s.std_gain_pct << ',' << s.mean_nmse_nodef << '\n';
  return out.str();
}

void write_report(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                  const ExperimentReport& report) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw Error("cannot write " + (dir / name).string());
    f << body;
  };
  write("report.json", report_json(cfg, report));
  write("report.csv", report_csv(report));
  std::ostringstream t;
  t << "alpha,ratio,defense,seed,runtime_s\n";
  for (const auto& r : report.records)
    t << r.alpha << ',' << r.ratio << ',' << r.defense << ',' << r.seed << ',' << r.runtime_s << '\n';
  write("timings.csv", t.str());
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  Index line_no = 0;
  auto strip = [](std::string s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = strip(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("config line " + std::to_string(line_no) + " lacks '='");
    kv[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
  }
  return kv;
}

namespace {

std::string_view trimmed(std::string_view t) {
  const auto b = t.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  return t.substr(b, t.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T parse_number(std::string_view text, std::string_view what) {
  const std::string_view t = trimmed(text);
  T out{};
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    throw Error("invalid value '" + std::string(text) + "' for " + std::string(what));
  return out;
}

bool parse_flag(std::string_view text, std::string_view what) {
  const std::string_view t = trimmed(text);
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  throw Error("invalid value '" + std::string(text) + "' for " + std::string(what));
}

} // namespace

std::vector<Scalar> parse_real_list(const std::string& text) {
  std::vector<Scalar> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<Scalar>(item, "number list"));
  return out;
}

void apply_config(ExperimentConfig& cfg, const std::map<std::string, std::string>& kv) {
  std::string key;
  auto real = [&](const std::string& v) { return parse_number<Scalar>(v, key); };
  auto integer = [&](const std::string& v) { return parse_number<Index>(v, key); };
  auto flag = [&](const std::string& v) { return parse_flag(v, key); };

  // preset first so explicit keys override it
  if (auto it = kv.find("preset"); it != kv.end()) {
    ModelKind model = cfg.model;
    if (auto m = kv.find("model"); m != kv.end()) model = m->second == "mlp" ? ModelKind::MLP : ModelKind::Linear;
    apply_preset(cfg, it->second, model);
  }
  for (const auto& [k, v] : kv) {
    key = k;
    if (k == "preset") continue;
    else if (k == "dataset") {
      if (v == "synthetic") cfg.csv_path.reset(); else cfg.csv_path = v;
    }
    else if (k == "dataset_name") cfg.dataset_name = v;
    else if (k == "synthetic_n") cfg.synthetic_n = integer(v);
    else if (k == "has_header") cfg.csv_header = flag(v);
    else if (k == "target_col") cfg.target_col = integer(v);
    else if (k == "split") cfg.split = parse_ratios(v);
    else if (k == "model") {
      if (v != "linear" && v != "mlp") throw Error("model must be linear or mlp");
      cfg.model = v == "mlp" ? ModelKind::MLP : ModelKind::Linear;
    }
    else if (k == "alpha" || k == "alphas") cfg.alphas = parse_real_list(v);
    else if (k == "ratios") cfg.ratios = parse_real_list(v);
    else if (k == "defense" || k == "defenses") {
      cfg.defenses.clear();
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) cfg.defenses.push_back(parse_defense(item));
    }
    else if (k == "repetitions") cfg.repetitions = integer(v);
    else if (k == "seed") cfg.master_seed = parse_number<std::uint64_t>(v, k);
    else if (k == "threads") cfg.threads = integer(v);
    else if (k == "t_out") cfg.attack.outer_iters = integer(v);
    else if (k == "gamma") cfg.attack.outer_rate = real(v);
    else if (k == "inner_t") cfg.attack.inner.iterations = integer(v);
    else if (k == "inner_eta") cfg.attack.inner.learning_rate = real(v);
    else if (k == "lambda") cfg.attack.inner.l2 = cfg.evaluation.l2 = real(v);
    else if (k == "batch_size") cfg.attack.batch_size = integer(v);
    else if (k == "inject") cfg.attack.inject = flag(v);
    else if (k == "normalize") cfg.attack.normalize = flag(v);
    else if (k == "eval_t") cfg.evaluation.iterations = integer(v);
    else if (k == "eval_eta") cfg.evaluation.learning_rate = real(v);
    else if (k == "reject_rate") cfg.defense.reject_rate = real(v);
    else if (k == "trim_max_iters") cfg.defense.trim_max_iters = integer(v);
    else if (k == "sever_rounds") cfg.defense.sever_rounds = integer(v);
    else if (k == "proda_group") cfg.defense.proda.group_size = integer(v);
    else if (k == "proda_eps") cfg.defense.proda.epsilon = real(v);
    else if (k == "proda_worst") cfg.defense.proda.worst_case_ratio = real(v);
    else if (k == "proda_select") {
      if (v != "full" && v != "subset") throw Error("proda_select must be subset or full");
      cfg.defense.proda.select_on_full_set = v == "full";
    }
    else if (k == "huber_min") cfg.defense.huber_min = real(v);
    else if (k == "huber_max") cfg.defense.huber_max = real(v);
    else if (k == "huber_count") cfg.defense.huber_count = integer(v);
    else if (k == "huber_lambda") cfg.defense.huber_l2 = real(v);
    else if (k == "huber_iters") cfg.defense.huber_max_iters = integer(v);
    else if (k == "bayes_c1") cfg.defense.bayes.c1 = real(v);
    else if (k == "bayes_c2") cfg.defense.bayes.c2 = real(v);
    else if (k == "bayes_t_em") cfg.defense.bayes.max_iters = integer(v);
    else if (k == "bayes_symmetric") cfg.defense.bayes.symmetric = flag(v);
    else throw Error("unknown config key '" + k + "'");
  }
}

} // namespace poisonlab
