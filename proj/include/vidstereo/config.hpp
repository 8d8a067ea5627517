#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vidstereo/correlation.hpp"

namespace vidstereo {

enum class UpdaterConv { k2D, k3D, k3DTemporal5 };     // gate kernels (1,1,5) / (3,1,5) / (5,1,1)
enum class SuperKernel { kNone, k1x3x3, k1x1x15 };     // extra layer after the gated update
enum class MotionState { kShared, kSeparated };        // carry M across stages vs re-init
enum class StageWeights { kShared, kSeparated };       // one update module vs one per stage
enum class FlowSource { kGroundTruth, kExternalFile };

struct ModelConfig {
  int feat_channels = 96;    // C: backbone output, motion feature, context, hidden state width
  int motion_channels = 64;  // C0: motion hidden state
  int corr_width = 96;       // Corr-Enc output
  int disp_width = 64;       // Disp-Enc output
  int trunk_width = 96;      // Mot-Enc trunk
  UpdaterConv updater_conv = UpdaterConv::k3D;
  SuperKernel super_kernel = SuperKernel::k1x1x15;
  CorrelationMode correlation = CorrelationMode::kSingleMulti;
  MotionState motion_state = MotionState::kShared;
  StageWeights stage_weights = StageWeights::kShared;
  bool alignment = true;  // off forces zero flows everywhere
};

struct TrainConfig {
  int steps = 2000;
  int batch = 2;
  double lr = 4e-4;
  double weight_decay = 1e-5;
  double clip = 1.0;
  double loss_gamma = 0.9;
  int crop_h = 0, crop_w = 0;  // 0 = no crop
  int t_train = 5;
  int log_every = 25;
};

struct PipelineConfig {
  ModelConfig model;
  TrainConfig train;
  int iterations_train = 10;  // per stage
  int iterations_eval = 20;   // per stage

  void validate() const;
};

// Layered key=value config file; later files and explicit overrides win.
// '#' starts a comment; unknown keys are an error so typos fail loudly.
class ConfigMap {
 public:
  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);  // also "key=value" form
  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string get_str(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

  // Applies every recognized key onto the config; throws on unknown keys or
  // unparsable enum values, listing the valid choices.
  PipelineConfig to_pipeline_config() const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

// Enum <-> string (config file and manifest vocabulary).
std::string to_string(UpdaterConv v);
std::string to_string(SuperKernel v);
std::string to_string(CorrelationMode v);
std::string to_string(MotionState v);
std::string to_string(StageWeights v);
UpdaterConv updater_conv_from_string(const std::string& s);
SuperKernel super_kernel_from_string(const std::string& s);
CorrelationMode correlation_mode_from_string(const std::string& s);
MotionState motion_state_from_string(const std::string& s);
StageWeights stage_weights_from_string(const std::string& s);

// Config snapshot as JSON text (manifests, checkpoints).
std::string config_to_json(const PipelineConfig& cfg);
PipelineConfig config_from_json(const std::string& json_text);

}  // namespace vidstereo
