#include "dasam/experiments/ablation.hpp"

#include <chrono>

#include "dasam/error.hpp"

namespace dasam::experiments {

using evaluation::SizeBucket;
using json = nlohmann::json;

AblationConfig AblationConfig::hard_rgb() {
  AblationConfig c;
  c.scene.height = c.scene.width = 128;
  c.scene.min_objects = 1;
  c.scene.max_objects = 4;
  c.scene.occlusion_prob = 0.7;
  c.scene.texture_noise = 0.35;
  c.scene.color_contrast = 0.1;
  c.scene.min_extent = 6.0;
  c.scene.max_extent = 128.0;
  c.scene.min_visible_area = 16;
  // 500 scenes is a small corpus; more epochs keep the step
  // count in a range where a from-scratch toy model learns anything.
  c.train.stage1_epochs = 4;
  c.train.stage2_epochs = 8;
  c.train.lr = 3e-4;
  c.clicks.click_counts = {1, 3, 5};
  return c;
}

void AblationConfig::validate() const {
  std::vector<std::string> bad;
  if (scenes < 2) bad.push_back("ablation.scenes: need at least 2");
  if (train_scenes < 1 || train_scenes >= scenes) bad.push_back("ablation.train_scenes: must be in [1, scenes)");
  if (!bad.empty()) throw ConfigError(std::move(bad));
  scene.validate();
  train.validate();
  clicks.validate();
}

namespace {

std::optional<std::size_t> column_of(const evaluation::EvalReport& r, int clicks) {
  for (std::size_t i = 0; i < r.rows.size(); ++i)
    if (r.rows[i].clicks == clicks) return i;
  return std::nullopt;
}

}  // namespace

double AblationResult::gain_points(int clicks) const {
  const auto a = column_of(depth_aware, clicks), b = column_of(rgb_only, clicks);
  if (!a || !b) throw ContractViolation("gain_points: click count was not evaluated");
  return 100.0 * (depth_aware.rows[*a].miou - rgb_only.rows[*b].miou);
}

std::optional<double> AblationResult::bucket_gain_points(int clicks, SizeBucket bucket) const {
  const auto a = column_of(depth_aware, clicks), b = column_of(rgb_only, clicks);
  if (!a || !b) throw ContractViolation("bucket_gain_points: click count was not evaluated");
  const auto i = static_cast<std::size_t>(bucket);
  const auto& da = depth_aware.rows[*a].bucket_miou[i];
  const auto& ro = rgb_only.rows[*b].bucket_miou[i];
  if (!da || !ro) return std::nullopt;
  return 100.0 * (*da - *ro);
}

json AblationResult::to_json() const {
  json gains = json::object();
  for (const auto& row : depth_aware.rows) {
    json g{{"overall", gain_points(row.clicks)}};
    for (auto b : {SizeBucket::S, SizeBucket::M, SizeBucket::L}) {
      const auto v = bucket_gain_points(row.clicks, b);
      g[evaluation::to_string(b)] = v ? json(*v) : json(nullptr);
    }
    gains[std::to_string(row.clicks)] = g;
  }
  auto strip = [](json j) {
    j.erase("details");
    return j;
  };
  return json{{"rgb_only", strip(rgb_only.to_json())},
              {"depth_aware", strip(depth_aware.to_json())},
              {"gain_points", gains},
              {"train_seconds", {{"rgb_only", rgb_only_train_seconds}, {"depth_aware", depth_aware_train_seconds}}},
              {"alpha", final_alpha}};
}

AblationResult run_depth_ablation(const AblationConfig& config, const ProgressFn& progress) {
  config.validate();
  auto scene = config.scene;
  scene.seed = config.seed;
  std::vector<data::DatasetRecord> train, test;
  for (int i = 0; i < config.scenes; ++i) {
    auto r = data::generate_synthetic_scene(scene, static_cast<std::uint64_t>(i));
    (i < config.train_scenes ? train : test).push_back(std::move(r));
  }
  const auto samples = training::to_tensor_samples(train);

  AblationResult result;
  for (auto variant : {model::Variant::rgb_only, model::Variant::depth_aware}) {
    auto mc = model::load_preset(config.preset);
    mc.variant = variant;
    mc.seed = config.seed;
    auto tc = config.train;
    tc.seed = config.seed;
    const auto name = model::to_string(variant);

    const auto t0 = std::chrono::steady_clock::now();
    training::Trainer trainer(model::SegmentationModel(mc), samples, tc);
    trainer.run([&](const training::StepRecord& r) {
      if (progress) progress(name, r);
    });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    auto m = trainer.model();
    m->eval();
    evaluation::ModelSegmenter seg(m);
    auto report = evaluation::eval_point_prompted(seg, test, config.clicks);
    if (variant == model::Variant::rgb_only) {
      result.rgb_only = std::move(report);
      result.rgb_only_train_seconds = secs;
    } else {
      result.depth_aware = std::move(report);
      result.depth_aware_train_seconds = secs;
      result.final_alpha = m->alpha_value();
    }
  }
  return result;
}

}  // namespace dasam::experiments
