#include "ctt/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace ctt {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::string& where,
                         const std::set<std::string>& known) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) {
      throw ConfigError("config: unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad type for '" + where + "." + key + "'");
  }
}

void parse_model(const json& obj, ModelConfig& model) {
  reject_unknown_keys(obj, "model",
                      {"image_size", "downsample_factor", "channels",
                       "token_dim", "layers", "heads", "fusion",
                       "use_preop_va", "cross_layer_start",
                       "positional_embeddings", "share_cross_step_weights",
                       "va_max"});
  std::size_t image_size = 0;
  read_field(obj, "image_size", image_size, "model");
  if (image_size) {
    model.encoder.input_height = image_size;
    model.encoder.input_width = image_size;
  }
  read_field(obj, "downsample_factor", model.encoder.downsample_factor, "model");
  read_field(obj, "channels", model.encoder.channels, "model");
  read_field(obj, "token_dim", model.encoder.token_dim, "model");
  read_field(obj, "layers", model.layers, "model");
  read_field(obj, "heads", model.heads, "model");
  if (obj.contains("fusion")) {
    model.mode.fusion = fusion_from_name(obj.at("fusion").get<std::string>());
  }
  read_field(obj, "use_preop_va", model.mode.use_preop_va, "model");
  read_field(obj, "cross_layer_start", model.mode.cross_layer_start, "model");
  read_field(obj, "positional_embeddings", model.positional_embeddings, "model");
  read_field(obj, "share_cross_step_weights", model.share_cross_step_weights, "model");
  read_field(obj, "va_max", model.va_max, "model");
}

void parse_loss(const json& obj, LossConfig& loss) {
  reject_unknown_keys(obj, "loss", {"lambda", "recovery_threshold", "acl_enabled"});
  read_field(obj, "lambda", loss.lambda, "loss");
  read_field(obj, "recovery_threshold", loss.recovery_threshold, "loss");
  read_field(obj, "acl_enabled", loss.acl_enabled, "loss");
}

void parse_optimizer(const json& obj, OptimizerConfig& opt) {
  reject_unknown_keys(obj, "optimizer",
                      {"lr", "momentum", "decay_factor", "decay_interval",
                       "iterations", "batch_size", "val_fraction",
                       "eval_interval"});
  read_field(obj, "lr", opt.lr, "optimizer");
  read_field(obj, "momentum", opt.momentum, "optimizer");
  read_field(obj, "decay_factor", opt.decay_factor, "optimizer");
  read_field(obj, "decay_interval", opt.decay_interval, "optimizer");
  read_field(obj, "iterations", opt.iterations, "optimizer");
  read_field(obj, "batch_size", opt.batch_size, "optimizer");
  read_field(obj, "val_fraction", opt.val_fraction, "optimizer");
  read_field(obj, "eval_interval", opt.eval_interval, "optimizer");
}

void parse_augmentation(const json& obj, AugmentationPolicy& aug) {
  reject_unknown_keys(obj, "data.augmentation",
                      {"rotation_degrees", "flip_probability",
                       "mirror_probability", "brightness_range",
                       "contrast_range", "seed"});
  read_field(obj, "rotation_degrees", aug.rotation_degrees, "data.augmentation");
  read_field(obj, "flip_probability", aug.flip_probability, "data.augmentation");
  read_field(obj, "mirror_probability", aug.mirror_probability, "data.augmentation");
  read_field(obj, "brightness_range", aug.brightness_range, "data.augmentation");
  read_field(obj, "contrast_range", aug.contrast_range, "data.augmentation");
  read_field(obj, "seed", aug.seed, "data.augmentation");
}

void parse_synthetic(const json& obj, SyntheticConfig& synth) {
  reject_unknown_keys(obj, "data.synthetic",
                      {"count", "seed", "image_size", "blob_sigma_fraction",
                       "margin_fraction", "noise_sigma"});
  read_field(obj, "count", synth.count, "data.synthetic");
  read_field(obj, "seed", synth.seed, "data.synthetic");
  read_field(obj, "image_size", synth.image_size, "data.synthetic");
  read_field(obj, "blob_sigma_fraction", synth.blob_sigma_fraction, "data.synthetic");
  read_field(obj, "margin_fraction", synth.margin_fraction, "data.synthetic");
  read_field(obj, "noise_sigma", synth.noise_sigma, "data.synthetic");
}

void parse_data(const json& obj, DataConfig& data, const ExperimentConfig& cfg) {
  reject_unknown_keys(obj, "data", {"manifest", "synthetic", "augmentation"});
  if (obj.contains("manifest")) {
    data.manifest = obj.at("manifest").get<std::string>();
    data.synthetic.reset();
  }
  if (obj.contains("synthetic")) {
    if (data.manifest) {
      throw ConfigError("config: data.manifest and data.synthetic are exclusive");
    }
    SyntheticConfig synth;
    synth.image_size = cfg.model.encoder.input_height;
    parse_synthetic(obj.at("synthetic"), synth);
    data.synthetic = synth;
  }
  if (obj.contains("augmentation")) {
    parse_augmentation(obj.at("augmentation"), data.augmentation);
  }
}

}  // namespace

void OptimizerConfig::validate() const {
  if (lr <= 0.0) throw ConfigError("optimizer.lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ConfigError("optimizer.momentum must lie in [0, 1)");
  }
  if (decay_factor <= 0.0 || decay_factor > 1.0) {
    throw ConfigError("optimizer.decay_factor must lie in (0, 1]");
  }
  if (decay_interval == 0) throw ConfigError("optimizer.decay_interval must be positive");
  if (iterations == 0) throw ConfigError("optimizer.iterations must be positive");
  if (batch_size == 0) throw ConfigError("optimizer.batch_size must be positive");
  if (val_fraction < 0.0 || val_fraction > 0.5) {
    throw ConfigError("optimizer.val_fraction must lie in [0, 0.5]");
  }
  if (eval_interval == 0) throw ConfigError("optimizer.eval_interval must be positive");
}

ExperimentConfig ExperimentConfig::profile(const std::string& name) {
  ExperimentConfig cfg;  // defaults are the desk profile
  if (name == "desk") return cfg;
  if (name == "paper") {
    cfg.model.encoder.input_height = 256;
    cfg.model.encoder.input_width = 256;
    cfg.model.encoder.channels = {16, 32, 64, 128, 128};
    cfg.model.encoder.token_dim = 128;
    cfg.model.layers = 12;
    cfg.model.heads = 4;
    cfg.model.mode.cross_layer_start = 6;
    cfg.optimizer.lr = 1e-3;
    cfg.optimizer.decay_factor = 0.1;
    cfg.optimizer.decay_interval = 1000;
    cfg.optimizer.iterations = 3000;
    cfg.optimizer.batch_size = 16;
    cfg.data.augmentation.rotation_degrees = 15.0;
    cfg.data.augmentation.flip_probability = 0.5;
    cfg.data.augmentation.mirror_probability = 0.5;
    cfg.data.augmentation.brightness_range = 0.1;
    cfg.data.augmentation.contrast_range = 0.1;
    return cfg;
  }
  throw ConfigError("config: unknown profile '" + name + "'");
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  reject_unknown_keys(doc, "top level",
                      {"profile", "seed", "output_dir", "folds", "model",
                       "loss", "optimizer", "data"});

  ExperimentConfig cfg = doc.contains("profile")
                             ? profile(doc.at("profile").get<std::string>())
                             : ExperimentConfig{};
  read_field(doc, "seed", cfg.seed, "top level");
  read_field(doc, "output_dir", cfg.output_dir, "top level");
  read_field(doc, "folds", cfg.folds, "top level");
  if (doc.contains("model")) parse_model(doc.at("model"), cfg.model);
  if (doc.contains("loss")) parse_loss(doc.at("loss"), cfg.loss);
  if (doc.contains("optimizer")) parse_optimizer(doc.at("optimizer"), cfg.optimizer);
  if (doc.contains("data")) parse_data(doc.at("data"), cfg.data, cfg);
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

void ExperimentConfig::validate() const {
  try {
    model.validate();
    loss.validate();
    optimizer.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (folds < 2) throw ConfigError("config: folds must be >= 2");
  if (data.manifest && data.synthetic) {
    throw ConfigError("config: data.manifest and data.synthetic are exclusive");
  }
  if (!data.manifest && !data.synthetic) {
    throw ConfigError("config: one of data.manifest or data.synthetic is required");
  }
  if (data.synthetic && data.synthetic->count == 0) {
    throw ConfigError("config: data.synthetic.count must be >= 1");
  }
}

}  // namespace ctt
