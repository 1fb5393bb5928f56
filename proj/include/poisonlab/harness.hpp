#pragma once

#include "poisonlab/attack.hpp"
#include "poisonlab/bayes.hpp"
#include "poisonlab/datasets.hpp"
#include "poisonlab/defenses.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace poisonlab {

/// Normalized test error: MSE / (||y||^2 / n), MSE without the 1/2 factor.
Scalar nmse(const ModelParams& params, const Dataset& test);

/// Relative NMSE improvement of a defense over no defense, in percent.
Scalar defense_gain(Scalar nmse_nodef, Scalar nmse_def);

enum class DefenseKind { None, Trim, Huber, Sever, Proda, BayesClean };

const char* defense_name(DefenseKind k);
DefenseKind parse_defense(const std::string& name);

struct DefenseSettings {
  Scalar reject_rate = 0.4;
  Index trim_max_iters = 50;
  Index sever_rounds = 4;
  ProdaConfig proda;
  Scalar huber_min = 1.1, huber_max = 10.0;
  Index huber_count = 10;
  Scalar huber_l2 = 1e-4;
  Index huber_max_iters = 10000;
  BayesCleanConfig bayes;
};

/// Runs one defense on a (possibly poisoned) training set.
DefenseReport run_defense(DefenseKind kind, const Dataset& train, const DefenseSettings& settings,
                          const TrainConfig& cfg, std::uint64_t seed);

/// Attack settings shared by every cell; batches and domain are filled per repetition.
struct AttackTemplate {
  Index outer_iters = 100;
  Scalar outer_rate = 0.9;
  InnerConfig inner{40, 0.1, 0.0};
  Index batch_size = 0;  // 0: 7.5% of the training set
  bool inject = false;
  bool normalize = true;
};

struct ExperimentConfig {
  std::string dataset_name = "synthetic";
  std::optional<std::filesystem::path> csv_path;
  bool csv_header = true;
  std::optional<Index> target_col;
  Index synthetic_n = 400;
  SplitRatios split;
  ModelKind model = ModelKind::Linear;
  std::vector<Scalar> alphas{1.0};
  std::vector<Scalar> ratios{0.0, 0.075, 0.15, 0.225, 0.30, 0.375, 0.45};
  std::vector<DefenseKind> defenses{DefenseKind::Trim};
  DefenseSettings defense;
  AttackTemplate attack;
  InnerConfig evaluation{40, 0.1, 0.0};  // training when testing the attack
  Index repetitions = 10;
  std::uint64_t master_seed = 0;
  Index threads = 1;

  void validate() const;
};

/// Published attack settings for a named dataset and model ("loan", "heart",
/// "boston", "appliances", "synthetic").
void apply_preset(ExperimentConfig& cfg, const std::string& dataset, ModelKind model);

struct ExperimentRecord {
  std::string dataset;
  std::string model;
  Scalar alpha = 0.0;
  Scalar ratio = 0.0;
  Index poison_count = 0;
  std::string defense;
  Index seed = 0;  // repetition index
  bool ok = true;
  std::string error;
  Scalar nmse = 0.0;
  Scalar nmse_nodef = 0.0;
  Scalar gain_pct = 0.0;
  Index poison_rejected = 0;
  Index clean_rejected = 0;
  Scalar runtime_s = 0.0;  // kept out of the JSON report
};

struct CellSummary {
  std::string dataset, model, defense;
  Scalar alpha = 0.0, ratio = 0.0;
  Index count = 0, failures = 0;
  Scalar mean_nmse = 0.0, std_nmse = 0.0;
  Scalar mean_gain_pct = 0.0, std_gain_pct = 0.0;
  Scalar mean_nmse_nodef = 0.0;
};

struct ExperimentReport {
  std::vector<ExperimentRecord> records;
  std::vector<CellSummary> summary;

  bool all_ok() const;
};

/// Number of batches of size `batch_size` covering `ratio` of `n_train`.
Index batches_for_ratio(Scalar ratio, Index n_train, Index batch_size);

ExperimentReport run_experiment(const ExperimentConfig& cfg);

std::vector<CellSummary> summarize(const std::vector<ExperimentRecord>& records);

std::string report_json(const ExperimentConfig& cfg, const ExperimentReport& report);
std::string report_csv(const ExperimentReport& report);
void write_report(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                  const ExperimentReport& report);

/// key = value lines, '#' comments.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// Applies recognised keys; throws on unknown keys.
void apply_config(ExperimentConfig& cfg, const std::map<std::string, std::string>& kv);

std::vector<Scalar> parse_real_list(const std::string& text);

} // namespace poisonlab
