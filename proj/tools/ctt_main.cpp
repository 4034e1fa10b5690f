// Command-line driver: training, cross-validation, fusion comparison,
// gradient checking, synthetic data generation and report export, all from
// one JSON config. Exit codes: 0 ok, 1 usage, 2 config, 3 data, 4 numeric.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ctt/attention_flow.hpp"
#include "ctt/config.hpp"
#include "ctt/training.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

ctt::ExperimentConfig load_config(const std::string& path) {
  return ctt::ExperimentConfig::from_json_file(path);
}

std::filesystem::path out_dir(const ctt::ExperimentConfig& cfg,
                              const std::string& override_dir) {
  return override_dir.empty() ? std::filesystem::path(cfg.output_dir)
                              : std::filesystem::path(override_dir);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ctt::DataError("cannot write " + path.string());
  out << text;
}

int cmd_train(const ctt::ExperimentConfig& cfg, const std::string& dir_override) {
  const auto dir = out_dir(cfg, dir_override);
  auto records = ctt::build_records(cfg);
  ctt::CttModel model(cfg.model, cfg.seed);
  ctt::TrainingHistory history =
      ctt::train_model(model, records, cfg.loss, cfg.optimizer,
                       cfg.data.augmentation, cfg.seed, dir);
  const auto& last = history.iterations.back();
  std::printf("trained %zu iterations, final l_tot %.6f\n",
              history.iterations.size(), last.l_tot);
  std::printf("checkpoint: %s\n", history.final_checkpoint.string().c_str());
  return 0;
}

int cmd_evaluate(const ctt::ExperimentConfig& cfg, const std::string& checkpoint,
                 const std::string& dir_override) {
  const auto dir = out_dir(cfg, dir_override);
  std::filesystem::create_directories(dir);
  auto records = ctt::build_records(cfg);
  ctt::CttModel model(cfg.model, cfg.seed);
  model.load_checkpoint(checkpoint);
  ctt::MetricsReport report =
      ctt::evaluate_model(model, records, cfg.loss.recovery_threshold);
  write_text(dir / "metrics.json", ctt::metrics_to_json(report) + "\n");

  nlohmann::ordered_json preds;
  std::vector<double> predictions = ctt::predict_all(model, records);
  std::vector<double> truths, pre_vas;
  for (const auto& r : records) {
    truths.push_back(r.post_va);
    pre_vas.push_back(r.pre_va);
  }
  preds["predictions"] = predictions;
  preds["truths"] = truths;
  preds["pre_vas"] = pre_vas;
  write_text(dir / "predictions.json", preds.dump(2) + "\n");
  write_text(dir / "dist.json",
             ctt::distribution_to_json(report.distribution) + "\n");
  write_text(dir / "dist.txt", ctt::distribution_to_text(report.distribution));
  std::printf("mae %.6f rmse %.6f acc %.6f f1 %.6f (%zu samples)\n", report.mae,
              report.rmse, report.acc, report.f1, records.size());
  return 0;
}

int cmd_cross_validate(const ctt::ExperimentConfig& cfg,
                       const std::string& dir_override) {
  const auto dir = out_dir(cfg, dir_override);
  ctt::ExperimentConfig run = cfg;
  run.output_dir = dir.string();
  ctt::CrossValidationResult result = ctt::run_cross_validation(run);
  ctt::write_cross_validation_outputs(dir, result);
  for (const auto& [name, stats] : result.aggregate) {
    std::printf("%s: %.6f +/- %.6f\n", name.c_str(), stats.first, stats.second);
  }
  return 0;
}

int cmd_compare(const ctt::ExperimentConfig& cfg, const std::string& dir_override) {
  const auto dir = out_dir(cfg, dir_override);
  std::filesystem::create_directories(dir);
  ctt::ComparisonResult result = ctt::run_comparison(cfg);
  const std::string text = ctt::comparison_to_text(result);
  write_text(dir / "comparison.json", ctt::comparison_to_json(result) + "\n");
  write_text(dir / "comparison.txt", text);
  std::fputs(text.c_str(), stdout);
  return 0;
}

int cmd_gradcheck(const ctt::ExperimentConfig& cfg) {
  auto records = ctt::build_records(cfg);
  if (records.size() > 2) records.resize(2);
  ctt::CttModel model(cfg.model, cfg.seed);
  ctt::GradcheckReport report =
      ctt::gradcheck_model(model, records, cfg.loss);
  std::printf("checked %zu parameters, max relative error %.3g (worst: %s)\n",
              report.parameters_checked, report.max_rel_error,
              report.worst_parameter.c_str());
  if (!report.passed()) {
    std::fprintf(stderr, "gradcheck FAILED (threshold 1e-4)\n");
    return kExitNumeric;
  }
  std::printf("gradcheck passed\n");
  return 0;
}

// Micro model for the default gradcheck: one cross layer, tiny widths.
ctt::ExperimentConfig gradcheck_default_config() {
  ctt::ExperimentConfig cfg;
  cfg.model.encoder.input_height = 64;
  cfg.model.encoder.input_width = 64;
  cfg.model.encoder.channels = {4, 8, 8, 16, 16};
  cfg.model.encoder.token_dim = 16;
  cfg.model.layers = 2;
  cfg.model.heads = 2;
  cfg.model.mode.cross_layer_start = 1;
  ctt::SyntheticConfig synth;
  synth.count = 2;
  synth.seed = 99;
  cfg.data.synthetic = synth;
  return cfg;
}

int cmd_synth_data(const ctt::ExperimentConfig& cfg, const std::string& dir_override) {
  if (!cfg.data.synthetic) {
    throw ctt::ConfigError("synth-data requires a data.synthetic block");
  }
  const auto dir = out_dir(cfg, dir_override);
  auto samples = ctt::generate_synthetic(*cfg.data.synthetic);
  ctt::write_synthetic_dataset(dir, samples);
  std::printf("wrote %zu samples under %s\n", samples.size(),
              dir.string().c_str());
  return 0;
}

int cmd_export_dist(const std::string& predictions_path,
                    const std::string& dir_str) {
  std::ifstream in(predictions_path);
  if (!in) throw ctt::DataError("cannot open " + predictions_path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ctt::DataError("predictions file: " + std::string(e.what()));
  }
  std::vector<double> preds, truths;
  try {
    preds = doc.at("predictions").get<std::vector<double>>();
    truths = doc.at("truths").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ctt::DataError("predictions file schema: " + std::string(e.what()));
  }
  if (preds.size() != truths.size()) {
    throw ctt::DataError("predictions and truths lengths differ");
  }
  ctt::GapDistribution dist = ctt::gap_distribution(preds, truths);
  const std::filesystem::path dir(dir_str);
  std::filesystem::create_directories(dir);
  write_text(dir / "dist.json", ctt::distribution_to_json(dist) + "\n");
  write_text(dir / "dist.txt", ctt::distribution_to_text(dist));
  std::fputs(ctt::distribution_to_text(dist).c_str(), stdout);
  return 0;
}

int cmd_flow(const ctt::ExperimentConfig& cfg) {
  const auto flows = ctt::count_attention_flow(cfg.model);
  std::printf("%-8s %16s %16s %6s\n", "layer", "intra_view", "cross_view", "steps");
  for (std::size_t l = 0; l < flows.size(); ++l) {
    std::printf("%-8zu %16lld %16lld %6d\n", l,
                static_cast<long long>(flows[l].intra_view_edges),
                static_cast<long long>(flows[l].cross_view_edges),
                flows[l].attention_steps);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view cross-token transformer: training and evaluation"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, predictions_path, dir_override;

  auto* train = app.add_subcommand("train", "Train one model");
  train->add_option("--config", config_path, "JSON config")->required();
  train->add_option("--output-dir", dir_override, "Override config output_dir");

  auto* cv = app.add_subcommand("cross-validate", "k-fold cross-validation");
  cv->add_option("--config", config_path, "JSON config")->required();
  cv->add_option("--output-dir", dir_override, "Override config output_dir");

  auto* compare = app.add_subcommand("compare", "Fusion/ablation comparison table");
  compare->add_option("--config", config_path, "JSON config")->required();
  compare->add_option("--output-dir", dir_override, "Override config output_dir");

  auto* gradcheck = app.add_subcommand(
      "gradcheck", "Finite-difference check of all model gradients");
  gradcheck->add_option("--config", config_path,
                        "JSON config (defaults to a built-in micro model)");

  auto* synth = app.add_subcommand("synth-data", "Generate a synthetic dataset");
  synth->add_option("--config", config_path, "JSON config")->required();
  synth->add_option("--output-dir", dir_override, "Override config output_dir");

  auto* exportd = app.add_subcommand("export-dist",
                                     "Grouped VA-gap statistics from predictions");
  exportd->add_option("--predictions", predictions_path,
                      "predictions.json from evaluate")->required();
  exportd->add_option("--output-dir", dir_override, "Output directory")
      ->required();

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint");
  evaluate->add_option("--config", config_path, "JSON config")->required();
  evaluate->add_option("--checkpoint", checkpoint_path, "Checkpoint file")
      ->required();
  evaluate->add_option("--output-dir", dir_override, "Override config output_dir");

  auto* flow = app.add_subcommand("flow", "Attention-flow accounting per layer");
  flow->add_option("--config", config_path, "JSON config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(load_config(config_path), dir_override);
    if (cv->parsed()) return cmd_cross_validate(load_config(config_path), dir_override);
    if (compare->parsed()) return cmd_compare(load_config(config_path), dir_override);
    if (gradcheck->parsed()) {
      return cmd_gradcheck(config_path.empty() ? gradcheck_default_config()
                                               : load_config(config_path));
    }
    if (synth->parsed()) return cmd_synth_data(load_config(config_path), dir_override);
    if (exportd->parsed()) return cmd_export_dist(predictions_path, dir_override);
    if (evaluate->parsed()) {
      return cmd_evaluate(load_config(config_path), checkpoint_path, dir_override);
    }
    if (flow->parsed()) return cmd_flow(load_config(config_path));
  } catch (const ctt::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const ctt::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const ctt::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  }
  return kExitUsage;
}
