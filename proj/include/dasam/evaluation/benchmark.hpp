#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dasam/model/config.hpp"
#include "dasam/model/segmentation_model.hpp"
#include "json.hpp"

namespace dasam::evaluation {

struct BenchmarkConfig {
  int height = 0;  // 0 -> preset image_size
  int width = 0;
  int trials = 5;
  int images_per_trial = 4;
  int warmup = 1;
  std::uint64_t seed = 0;
  /// Throws ConfigError; trials must be >= 3.
  void validate() const;
};

struct ThroughputResult {
  std::string variant;
  std::int64_t parameters = 0;
  std::int64_t macs = 0;
  double images_per_second = 0.0;  // median over trials
  std::vector<double> trial_images_per_second;
};

/// Median images/s of embed + one-point decode for one model. Each trial
/// times `images_per_trial` single-image passes.
ThroughputResult benchmark_throughput(model::SegmentationModel& model, int height, int width,
                                      const BenchmarkConfig& config);

struct BenchmarkReport {
  std::string preset;
  int height = 0;
  int width = 0;
  ThroughputResult rgb_only;
  ThroughputResult depth_aware;
  double parameter_ratio = 0.0;  // depth-aware / rgb-only
  double mac_ratio = 0.0;
  double throughput_ratio = 0.0;

  std::string to_text() const;
  nlohmann::json to_json() const;
};

/// Builds both variants from `config` and benchmarks them with interleaved
/// trials so drift in machine load hits both equally.
BenchmarkReport compare_variants(const model::ModelConfig& config, const BenchmarkConfig& bench);

/// Same, for already-built models (e.g. loaded checkpoints).
BenchmarkReport compare_variants(model::SegmentationModel& rgb_only, model::SegmentationModel& depth_aware,
                                 const BenchmarkConfig& bench);

}  // namespace dasam::evaluation
