#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dasam/data/types.hpp"
#include "dasam/evaluation/metrics.hpp"
#include "dasam/model/inference.hpp"
#include "dasam/model/prompt.hpp"
#include "dasam/model/segmentation_model.hpp"
#include "json.hpp"

namespace dasam::evaluation {

struct SegmentResult {
  data::InstanceMask mask;
  double score = 0.0;  // predicted IoU
};

/// Anything that turns prompts on a scene into a mask.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual void set_scene(const data::DatasetRecord& record) = 0;
  virtual SegmentResult segment(const model::PromptSet& prompts) = 0;
};

/// Runs a model; the image embedding is computed once per scene.
class ModelSegmenter : public Segmenter {
 public:
  explicit ModelSegmenter(model::SegmentationModel model);
  void set_scene(const data::DatasetRecord& record) override;
  SegmentResult segment(const model::PromptSet& prompts) override;

 private:
  model::SegmentationModel model_;
  std::optional<model::ScenePredictor> scene_;
};

/// Returns ground truth: the gt mask containing the first foreground point,
/// or the gt whose box best overlaps the first box. Score is 1.
class OracleSegmenter : public Segmenter {
 public:
  void set_scene(const data::DatasetRecord& record) override;
  SegmentResult segment(const model::PromptSet& prompts) override;

 private:
  const data::DatasetRecord* record_ = nullptr;
};

struct ClickProtocolConfig {
  std::vector<int> click_counts{1, 3, 5};
  std::uint64_t seed = 0;
  /// Throws ConfigError unless counts are >= 1 and strictly increasing.
  void validate() const;
};

/// Per-instance outcome; `ious` has one entry per click count (point
/// protocol) or a single entry (box protocol).
struct InstanceResult {
  std::string image_id;
  int mask_index = 0;
  long area = 0;
  SizeBucket bucket = SizeBucket::S;
  std::vector<double> ious;
  std::vector<model::PromptPoint> clicks;
  double score = 0.0;
};

struct MiouRow {
  std::string label;  // "1 click", "gt boxes", ...
  int clicks = 0;
  double miou = 0.0;
  std::array<std::optional<double>, 3> bucket_miou{};
};

struct EvalReport {
  std::string protocol;  // "points" or "boxes"
  std::string box_source;
  std::vector<MiouRow> rows;
  std::array<int, 3> bucket_counts{};
  int instances = 0;
  std::optional<MapReport> map;
  std::string fingerprint;
  std::vector<InstanceResult> details;

  /// Plain-text table: one row per click count, mIoU and S/M/L columns.
  std::string to_text() const;
  nlohmann::json to_json() const;
};

/// Iterative clicking: click, predict, click on the largest error, ...
/// Records the IoU after each configured click count. Instances are
/// processed in (image id, mask index) order.
EvalReport eval_point_prompted(Segmenter& segmenter, const std::vector<data::DatasetRecord>& dataset,
                               const ClickProtocolConfig& protocol);

/// A detector box from a file.
struct DetectorBox {
  std::string image_id;
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  double score = 0.0;
};

/// Line-delimited JSON: each line is either an object with keys image_id,
/// x_min, y_min, x_max, y_max, score or an array in that order. Blank lines
/// are skipped. Throws IngestionError with the 1-based line number.
std::vector<DetectorBox> read_detector_file(const std::filesystem::path& path);

/// One box prompt per instance (gt boxes) or per detection (detector
/// boxes). Reports per-bucket mIoU for gt boxes and mAP (score = predicted
/// IoU) for both sources. Detections referencing unknown image ids raise
/// IngestionError.
EvalReport eval_box_prompted(Segmenter& segmenter, const std::vector<data::DatasetRecord>& dataset,
                             const std::optional<std::vector<DetectorBox>>& detections = std::nullopt);

}  // namespace dasam::evaluation
