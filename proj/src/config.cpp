#include "vidstereo/config.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace vidstereo {

void PipelineConfig::validate() const {
  if (iterations_train < 1 || iterations_eval < 1)
    throw std::invalid_argument("PipelineConfig: iterations must be >= 1");
  if (train.t_train < 2) throw std::invalid_argument("PipelineConfig: t_train must be >= 2");
  if (model.feat_channels < 4 || model.motion_channels < 4)
    throw std::invalid_argument("PipelineConfig: channel widths too small");
  if (train.batch < 1) throw std::invalid_argument("PipelineConfig: batch must be >= 1");
}

std::string to_string(UpdaterConv v) {
  switch (v) {
    case UpdaterConv::k2D: return "2d";
    case UpdaterConv::k3D: return "3d";
    case UpdaterConv::k3DTemporal5: return "3d_t5";
  }
  return "?";
}
std::string to_string(SuperKernel v) {
  switch (v) {
    case SuperKernel::kNone: return "none";
    case SuperKernel::k1x3x3: return "1x3x3";
    case SuperKernel::k1x1x15: return "1x1x15";
  }
  return "?";
}
std::string to_string(CorrelationMode v) {
  switch (v) {
    case CorrelationMode::kSingleMulti: return "single_multi";
    case CorrelationMode::kMultiMulti: return "multi_multi";
    case CorrelationMode::kPerFrame: return "per_frame";
  }
  return "?";
}
std::string to_string(MotionState v) { return v == MotionState::kShared ? "shared" : "separated"; }
std::string to_string(StageWeights v) { return v == StageWeights::kShared ? "shared" : "separated"; }

namespace {

[[noreturn]] void bad_enum(const std::string& key, const std::string& got, const char* valid) {
  throw std::invalid_argument("config: invalid value '" + got + "' for " + key + " (valid: " + valid + ")");
}

}  // namespace

UpdaterConv updater_conv_from_string(const std::string& s) {
  if (s == "2d") return UpdaterConv::k2D;
  if (s == "3d") return UpdaterConv::k3D;
  if (s == "3d_t5") return UpdaterConv::k3DTemporal5;
  bad_enum("updater_conv", s, "2d, 3d, 3d_t5");
}
SuperKernel super_kernel_from_string(const std::string& s) {
  if (s == "none") return SuperKernel::kNone;
  if (s == "1x3x3") return SuperKernel::k1x3x3;
  if (s == "1x1x15") return SuperKernel::k1x1x15;
  bad_enum("super_kernel", s, "none, 1x3x3, 1x1x15");
}
CorrelationMode correlation_mode_from_string(const std::string& s) {
  if (s == "single_multi") return CorrelationMode::kSingleMulti;
  if (s == "multi_multi") return CorrelationMode::kMultiMulti;
  if (s == "per_frame") return CorrelationMode::kPerFrame;
  bad_enum("correlation_mode", s, "single_multi, multi_multi, per_frame");
}
MotionState motion_state_from_string(const std::string& s) {
  if (s == "shared") return MotionState::kShared;
  if (s == "separated") return MotionState::kSeparated;
  bad_enum("motion_state", s, "shared, separated");
}
StageWeights stage_weights_from_string(const std::string& s) {
  if (s == "shared") return StageWeights::kShared;
  if (s == "separated") return StageWeights::kSeparated;
  bad_enum("stage_weights", s, "shared, separated");
}

void ConfigMap::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string t = trim(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected key = value");
    kv_[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
}

void ConfigMap::set(const std::string& key, const std::string& value) {
  if (value.empty() && key.find('=') != std::string::npos) {
    auto eq = key.find('=');
    kv_[key.substr(0, eq)] = key.substr(eq + 1);
    return;
  }
  kv_[key] = value;
}

std::string ConfigMap::get_str(const std::string& key, const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}
int ConfigMap::get_int(const std::string& key, int fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : std::stoi(it->second);
}
double ConfigMap::get_double(const std::string& key, double fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : std::stod(it->second);
}
std::uint64_t ConfigMap::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : std::stoull(it->second);
}

PipelineConfig ConfigMap::to_pipeline_config() const {
  PipelineConfig cfg;
  static const std::map<std::string, int> known = {
      {"model.feat_channels", 0}, {"model.motion_channels", 0}, {"model.corr_width", 0},
      {"model.disp_width", 0},    {"model.trunk_width", 0},     {"model.updater_conv", 0},
      {"model.super_kernel", 0},  {"model.correlation_mode", 0}, {"model.motion_state", 0},
      {"model.stage_weights", 0}, {"model.alignment", 0},       {"iterations_train", 0},
      {"iterations_eval", 0},     {"train.steps", 0},           {"train.batch", 0},
      {"train.lr", 0},            {"train.weight_decay", 0},    {"train.clip", 0},
      {"train.loss_gamma", 0},    {"train.crop_h", 0},          {"train.crop_w", 0},
      {"train.t_train", 0},       {"train.log_every", 0},       {"seed", 0},
  };
  for (const auto& [k, v] : kv_)
    if (!known.count(k)) {
      std::string valid;
      for (const auto& [name, _] : known) valid += valid.empty() ? name : ", " + name;
      throw std::invalid_argument("config: unknown key '" + k + "' (valid keys: " + valid + ")");
    }
  cfg.model.feat_channels = get_int("model.feat_channels", cfg.model.feat_channels);
  cfg.model.motion_channels = get_int("model.motion_channels", cfg.model.motion_channels);
  cfg.model.corr_width = get_int("model.corr_width", cfg.model.corr_width);
  cfg.model.disp_width = get_int("model.disp_width", cfg.model.disp_width);
  cfg.model.trunk_width = get_int("model.trunk_width", cfg.model.trunk_width);
  cfg.model.updater_conv = updater_conv_from_string(get_str("model.updater_conv", to_string(cfg.model.updater_conv)));
  cfg.model.super_kernel = super_kernel_from_string(get_str("model.super_kernel", to_string(cfg.model.super_kernel)));
  cfg.model.correlation =
      correlation_mode_from_string(get_str("model.correlation_mode", to_string(cfg.model.correlation)));
  cfg.model.motion_state = motion_state_from_string(get_str("model.motion_state", to_string(cfg.model.motion_state)));
  cfg.model.stage_weights =
      stage_weights_from_string(get_str("model.stage_weights", to_string(cfg.model.stage_weights)));
  std::string align = get_str("model.alignment", cfg.model.alignment ? "on" : "off");
  if (align != "on" && align != "off") bad_enum("alignment", align, "on, off");
  cfg.model.alignment = align == "on";
  cfg.iterations_train = get_int("iterations_train", cfg.iterations_train);
  cfg.iterations_eval = get_int("iterations_eval", cfg.iterations_eval);
  cfg.train.steps = get_int("train.steps", cfg.train.steps);
  cfg.train.batch = get_int("train.batch", cfg.train.batch);
  cfg.train.lr = get_double("train.lr", cfg.train.lr);
  cfg.train.weight_decay = get_double("train.weight_decay", cfg.train.weight_decay);
  cfg.train.clip = get_double("train.clip", cfg.train.clip);
  cfg.train.loss_gamma = get_double("train.loss_gamma", cfg.train.loss_gamma);
  cfg.train.crop_h = get_int("train.crop_h", cfg.train.crop_h);
  cfg.train.crop_w = get_int("train.crop_w", cfg.train.crop_w);
  cfg.train.t_train = get_int("train.t_train", cfg.train.t_train);
  cfg.train.log_every = get_int("train.log_every", cfg.train.log_every);
  cfg.validate();
  return cfg;
}

std::string config_to_json(const PipelineConfig& cfg) {
  nlohmann::json j;
  j["model"] = {{"feat_channels", cfg.model.feat_channels},
                {"motion_channels", cfg.model.motion_channels},
                {"corr_width", cfg.model.corr_width},
                {"disp_width", cfg.model.disp_width},
                {"trunk_width", cfg.model.trunk_width},
                {"updater_conv", to_string(cfg.model.updater_conv)},
                {"super_kernel", to_string(cfg.model.super_kernel)},
                {"correlation_mode", to_string(cfg.model.correlation)},
                {"motion_state", to_string(cfg.model.motion_state)},
                {"stage_weights", to_string(cfg.model.stage_weights)},
                {"alignment", cfg.model.alignment ? "on" : "off"}};
  j["train"] = {{"steps", cfg.train.steps},
                {"batch", cfg.train.batch},
                {"lr", cfg.train.lr},
                {"weight_decay", cfg.train.weight_decay},
                {"clip", cfg.train.clip},
                {"loss_gamma", cfg.train.loss_gamma},
                {"crop_h", cfg.train.crop_h},
                {"crop_w", cfg.train.crop_w},
                {"t_train", cfg.train.t_train},
                {"log_every", cfg.train.log_every}};
  j["iterations_train"] = cfg.iterations_train;
  j["iterations_eval"] = cfg.iterations_eval;
  return j.dump(2);
}

PipelineConfig config_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  PipelineConfig cfg;
  const auto& m = j.at("model");
  cfg.model.feat_channels = m.at("feat_channels").get<int>();
  cfg.model.motion_channels = m.at("motion_channels").get<int>();
  cfg.model.corr_width = m.at("corr_width").get<int>();
  cfg.model.disp_width = m.at("disp_width").get<int>();
  cfg.model.trunk_width = m.at("trunk_width").get<int>();
  cfg.model.updater_conv = updater_conv_from_string(m.at("updater_conv").get<std::string>());
  cfg.model.super_kernel = super_kernel_from_string(m.at("super_kernel").get<std::string>());
  cfg.model.correlation = correlation_mode_from_string(m.at("correlation_mode").get<std::string>());
  cfg.model.motion_state = motion_state_from_string(m.at("motion_state").get<std::string>());
  cfg.model.stage_weights = stage_weights_from_string(m.at("stage_weights").get<std::string>());
  cfg.model.alignment = m.at("alignment").get<std::string>() == "on";
  const auto& t = j.at("train");
  cfg.train.steps = t.at("steps").get<int>();
  cfg.train.batch = t.at("batch").get<int>();
  cfg.train.lr = t.at("lr").get<double>();
  cfg.train.weight_decay = t.at("weight_decay").get<double>();
  cfg.train.clip = t.at("clip").get<double>();
  cfg.train.loss_gamma = t.at("loss_gamma").get<double>();
  cfg.train.crop_h = t.at("crop_h").get<int>();
  cfg.train.crop_w = t.at("crop_w").get<int>();
  cfg.train.t_train = t.at("t_train").get<int>();
  cfg.train.log_every = t.at("log_every").get<int>();
  cfg.iterations_train = j.at("iterations_train").get<int>();
  cfg.iterations_eval = j.at("iterations_eval").get<int>();
  return cfg;
}

}  // namespace vidstereo
