#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tgcfa/alignhead.hpp"
#include "tgcfa/segcore.hpp"
#include "tgcfa/synthdom.hpp"
#include "tgcfa/textbank.hpp"

namespace tgcfa::harness {

struct OptimizerConfig {
  std::string kind = "adam";
  double learning_rate = 3e-4;
  std::string schedule = "cosine";  // cosine | constant
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct ExperimentConfig {
  std::string dataset;       // dataset root; TGCFA_DATA_DIR is the fallback
  std::string descriptions;  // optional; supplies the background label
  std::string table;         // embedding table written by embed-text
  std::string provider = "stub";
  segcore::BackboneConfig backbone;
  OptimizerConfig optimizer;
  int epochs = 30;
  int batch_size = 8;
  double neg_margin = 0.0;
  bool mean_over_cells = true;
  double align_weight = 1.0;
  bool use_align = true;
  bool exclude_background = false;  // drop the background label from alignment
  bool use_ce = true;
  bool use_dice = true;
  std::uint64_t seed = 0;

  // Relative paths are resolved against `base_dir`.
  static ExperimentConfig from_json(const std::string& json_text, const std::string& base_dir = "");
  static ExperimentConfig from_file(const std::string& path);
  std::string to_json() const;
  std::string hash() const;
  // Resolves the dataset path and checks that referenced files exist.
  void validate();
};

// Segmentation backbone plus the trainable projection into text space.
struct TgcfaModel {
  segcore::UNet<float> net;
  nn::Param<float> proj_weight;  // k x z
  nn::Param<float> proj_bias;    // k x 1

  TgcfaModel() = default;
  TgcfaModel(const segcore::BackboneConfig& backbone, int text_dim, std::uint64_t seed);

  std::vector<nn::Param<float>*> parameters();
  alignhead::ProjectionParams<float> projection() const;
};

// Checkpoint container: "TGCK", u32 version=1, u32 meta length, meta JSON
// (backbone, text dimension, config hash), u32 tensor count, then per tensor
// u32 name length, name, u32 rows, u32 cols, float32 row-major values.
void save_checkpoint(const std::string& path, TgcfaModel& model, const std::string& config_hash);
struct LoadedCheckpoint {
  TgcfaModel model;
  std::string config_hash;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

struct EpochLog {
  int epoch = 0;
  double learning_rate = 0;
  segcore::LossBundle mean_loss;
  double val_dice = 0;
  int skipped_terms = 0;
};

struct RunRecord {
  std::string config_hash;
  std::vector<EpochLog> epochs;
  int best_epoch = -1;
  double best_val_dice = 0;
  std::string checkpoint_path;  // empty when no epoch ran
  double wall_clock_seconds = 0;
  std::map<std::string, segcore::DiceReport> final_reports;

  std::string to_json() const;
  static RunRecord from_json(const std::string& json_text);
};

struct TrainOptions {
  std::string out_dir;  // checkpoint and run record; nothing is written when empty
  bool verbose = false;
};

// Trains on the source train split, validating on source val each epoch.
// Only the TrainingSource view of the dataset is touched.
RunRecord train(const ExperimentConfig& config, const synthdom::Dataset& dataset,
                const TrainOptions& options = {}, TgcfaModel* trained = nullptr);
RunRecord train(ExperimentConfig config, const TrainOptions& options = {});

using DomainReports = std::map<std::string, segcore::DiceReport>;

DomainReports evaluate(TgcfaModel& model, const synthdom::Dataset& dataset,
                       const std::vector<std::string>& domains, int num_labels,
                       std::optional<int> background_id = 0);
DomainReports evaluate(const std::string& checkpoint_path, const synthdom::Dataset& dataset,
                       const std::vector<std::string>& domains, std::optional<int> background_id = 0);

struct TrendArm {
  RunRecord run;
  std::map<std::string, double> domain_dice;  // test mean foreground Dice per domain
};

struct TrendSeed {
  std::uint64_t seed = 0;
  TrendArm baseline;
  TrendArm tgcfa;
  std::map<std::string, double> difference;  // tgcfa - baseline
};

struct TrendSummary {
  std::vector<TrendSeed> seeds;
  std::map<std::string, double> mean_difference;
  std::map<std::string, int> positive_count;
  std::string source_domain;
  std::vector<std::string> domains;

  std::string to_json() const;
  static TrendSummary from_json(const std::string& json_text);
};

// Trains the baseline (no alignment) and the aligned arm per seed on identical
// data order and initialization, then evaluates both on every test domain.
TrendSummary run_trend_study(const ExperimentConfig& config, const std::vector<std::uint64_t>& seeds,
                             const std::string& out_dir = "", bool verbose = false);

}  // namespace tgcfa::harness
