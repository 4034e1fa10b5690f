#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ctt/config.hpp"
#include "ctt/manifest.hpp"
#include "ctt/metrics.hpp"
#include "ctt/model.hpp"

namespace ctt {

// Step-wise schedule: base * decay^floor(iteration / interval).
double lr_at(std::size_t iteration, double base_lr, double decay_factor,
             std::size_t decay_interval);

// Classic momentum: v <- m*v + g ; p <- p - lr*v. One velocity buffer per
// registered parameter; every parameter must carry a gradient when step()
// runs.
class SgdOptimizer {
 public:
  SgdOptimizer(ParameterStore& params, double momentum);
  void step(double lr);

 private:
  ParameterStore& params_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

// Seed-derived sample order: one shuffle per epoch, batches read the order
// sequentially and wrap into a fresh shuffle, so batch composition depends
// only on (n, batch size, seed).
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::size_t> next_batch();

 private:
  void reshuffle();
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  Rng rng_;
  std::size_t batch_size_;
};

struct IterationRecord {
  std::size_t iteration = 0;
  double l_reg = 0.0;
  double l_cls = 0.0;
  double l_tot = 0.0;
  double lr = 0.0;
};

struct TrainingHistory {
  std::vector<IterationRecord> iterations;
  std::vector<std::pair<std::size_t, MetricsReport>> validation;  // (iter, report)
  double best_val_mae = 0.0;
  std::uint64_t data_stream_hash = 0;  // FNV-1a over consumed sample bytes
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
};

// Full training run. Splits off the validation tail, streams seed-derived
// batches with per-sample augmentation, records per-iteration losses, and
// saves final/best checkpoints when out_dir is non-empty. Aborts with
// NumericError naming the iteration if any loss component goes non-finite.
TrainingHistory train_model(CttModel& model,
                            const std::vector<SampleRecord>& records,
                            const LossConfig& loss,
                            const OptimizerConfig& optimizer,
                            const AugmentationPolicy& augmentation,
                            std::uint64_t seed,
                            const std::filesystem::path& out_dir = {});

std::vector<double> predict_all(const CttModel& model,
                                const std::vector<SampleRecord>& records);
MetricsReport evaluate_model(const CttModel& model,
                             const std::vector<SampleRecord>& records,
                             double recovery_threshold);

// Materializes the configured dataset (manifest or synthetic).
std::vector<SampleRecord> build_records(const ExperimentConfig& config);

struct FoldResult {
  MetricsReport metrics;
  TrainingHistory history;
};

struct CrossValidationResult {
  std::vector<FoldResult> folds;
  // mean and population std over folds, keyed mae/rmse/acc/f1
  std::vector<std::pair<std::string, std::pair<double, double>>> aggregate;
};

CrossValidationResult run_cross_validation(const ExperimentConfig& config);

struct ComparisonRow {
  std::string name;
  Fusion fusion;
  bool use_preop_va = false;
  bool acl_enabled = false;
  MetricsReport metrics;
  std::uint64_t data_stream_hash = 0;
};

struct ComparisonResult {
  std::vector<ComparisonRow> rows;
};

// Reported reference values for the full-scale model; printed alongside the
// comparison table for context, not reproduced by desk-scale runs.
struct ReferenceRow {
  double mae, mae_std, rmse, rmse_std, acc, acc_std, f1, f1_std;
};
ReferenceRow reported_reference();

// Trains one model per fusion/ablation variant on a shared train/test split
// and identical data streams; emits one metrics row per variant.
ComparisonResult run_comparison(const ExperimentConfig& config);
std::string comparison_to_text(const ComparisonResult& result);
std::string comparison_to_json(const ComparisonResult& result, int indent = 2);

// Writers used by the command-line driver.
void write_training_outputs(const std::filesystem::path& out_dir,
                            const TrainingHistory& history);
void write_cross_validation_outputs(const std::filesystem::path& out_dir,
                                    const CrossValidationResult& result);

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t parameters_checked = 0;
  bool passed(double threshold = 1e-4) const { return max_rel_error < threshold; }
};

// Central finite differences (step h) over every parameter element of the
// model against the analytic gradients of the configured total loss.
// Relative error uses a small floor so near-zero gradients compare on
// absolute terms.
GradcheckReport gradcheck_model(CttModel& model,
                                const std::vector<SampleRecord>& batch,
                                const LossConfig& loss, double h = 1e-5,
                                double rel_floor = 1e-3);

}  // namespace ctt
