#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <torch/torch.h>
#include <vector>

#include "dasam/data/types.hpp"
#include "dasam/losses/losses.hpp"
#include "dasam/model/segmentation_model.hpp"
#include "json.hpp"

namespace dasam::training {

/// Which objective stage 2 optimises: the five-term total, or the BCE+dice
/// objective only (no IoU, direct or boundary terms are computed).
enum class Objective { full, mask_dice };

struct TrainConfig {
  int stage1_epochs = 2;
  int stage2_epochs = 2;
  int batch_size = 4;
  int masks_per_image = 4;
  double lr = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip; <= 0 disables it.
  double grad_clip = 1.0;
  /// Box prompts are the gt box with each edge moved by up to this fraction
  /// of the box size.
  double box_jitter = 0.05;
  /// Probability of a point prompt (otherwise a box) per sampled mask.
  double point_prob = 0.5;
  /// Per-stage schedule: linear warm-up over `warmup_steps`, then constant
  /// or cosine decay to zero at the end of the stage.
  enum class Schedule { constant, cosine } schedule = Schedule::constant;
  int warmup_steps = 0;
  std::uint64_t seed = 0;
  Objective objective = Objective::full;
  losses::LossWeights weights;

  /// Throws ConfigError listing every violated field.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Images, prepared depth and gt masks as tensors, converted once.
struct TensorSample {
  std::string id;
  torch::Tensor rgb;    // [3, H, W]
  torch::Tensor depth;  // [3, H, W], min-max normalised and replicated
  std::vector<data::InstanceMask> masks;
};

std::vector<TensorSample> to_tensor_samples(const std::vector<data::DatasetRecord>& records);

/// One optimizer step's record; also the JSONL log line.
struct StepRecord {
  int stage = 0;
  int epoch = 0;       // within the stage
  std::int64_t step = 0;  // global, 0-based
  losses::LossBreakdown loss;
  double alpha = 0.0;
  double grad_norm = 0.0;
  int point_prompts = 0;
  int box_prompts = 0;
};

void to_json(nlohmann::json& j, const StepRecord& r);

/// Learning-rate multiplier for step `t` (0-based) of a stage of `n` steps.
double lr_factor(const TrainConfig& c, std::int64_t t, std::int64_t n);

/// AdamW (decoupled weight decay) over `params`; 1-D tensors are exempt
/// from decay.
std::unique_ptr<torch::optim::AdamW> make_optimizer(const std::vector<torch::Tensor>& params, const TrainConfig& c);

/// Rescales gradients so their global L2 norm is at most max_norm. The
/// norm is accumulated in double in parameter order. Returns the
/// pre-clipping norm.
double clip_global_norm(const std::vector<torch::Tensor>& params, double max_norm);

/// FNV-1a over the raw bytes of the tensors, in order.
std::uint64_t parameter_hash(const std::vector<torch::Tensor>& params);

/// Short stable fingerprint of a JSON document.
std::string fingerprint(const nlohmann::json& j);

constexpr int kCheckpointVersion = 1;

/// Two-stage trainer. Stage 1 (depth_aware only) optimises the depth
/// encoder alone with the BCE+dice objective on masks decoded from the depth
/// embedding; stage 2 trains every parameter end to end.
///
/// Every random draw of a step comes from a generator seeded with
/// (seed, stage, epoch, step, image), so the seed and step counter are the
/// whole RNG state.
class Trainer {
 public:
  Trainer(model::SegmentationModel model, std::vector<TensorSample> data, TrainConfig config);

  /// Restores a checkpoint written by save_checkpoint, including optimizer
  /// state. Throws CheckpointVersionError on a version mismatch.
  static Trainer resume(const std::filesystem::path& checkpoint, std::vector<TensorSample> data);

  /// Runs one optimizer step of the current stage.
  StepRecord step();
  bool done() const noexcept { return step_ >= total_steps(); }
  /// Steps until done; `on_step` sees each record.
  void run(const std::function<void(const StepRecord&)>& on_step = {});
  /// Runs every remaining step of the current stage.
  void finish_stage(const std::function<void(const StepRecord&)>& on_step = {});

  int stage() const noexcept;
  std::int64_t global_step() const noexcept { return step_; }
  std::int64_t steps_per_epoch() const noexcept;
  std::int64_t stage1_steps() const noexcept;
  std::int64_t total_steps() const noexcept;

  model::SegmentationModel& model() { return model_; }
  const TrainConfig& config() const noexcept { return config_; }

  void save_checkpoint(const std::filesystem::path& path);

 private:
  void prepare_stage(int stage);

  model::SegmentationModel model_;
  std::vector<TensorSample> data_;
  TrainConfig config_;
  std::int64_t step_ = 0;
  int prepared_stage_ = 0;
  std::unique_ptr<torch::optim::AdamW> optimizer_;
  std::vector<torch::Tensor> trainable_;
};

/// Model weights and configs from a checkpoint, ready for inference.
struct LoadedModel {
  model::SegmentationModel model{nullptr};
  TrainConfig train_config;
  std::int64_t step = 0;
  std::string fingerprint;
};

LoadedModel load_model(const std::filesystem::path& checkpoint);

/// Appends one JSON line per record.
class JsonlLog {
 public:
  explicit JsonlLog(const std::filesystem::path& path);
  void write(const nlohmann::json& j);

 private:
  std::filesystem::path path_;
};

}  // namespace dasam::training
