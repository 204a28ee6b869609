#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dasam/data/types.hpp"

namespace dasam::evaluation {

/// |a & b| / |a | b|; both empty -> 1, exactly one empty -> 0.
/// Throws ContractViolation on a shape mismatch.
double compute_iou(const data::InstanceMask& a, const data::InstanceMask& b);

enum class SizeBucket { S = 0, M = 1, L = 2 };

constexpr long kSmallAreaLimit = 32 * 32;
constexpr long kMediumAreaLimit = 96 * 96;

/// S below 32^2, M below 96^2, L otherwise.
SizeBucket bucket_for_area(long area);
std::string to_string(SizeBucket b);

/// IoU thresholds .50:.05:.95.
std::array<double, 10> map_thresholds();

/// One scored prediction for AP: which image it belongs to, its score and
/// its IoU with every gt instance of that image.
struct ScoredPrediction {
  std::size_t image = 0;
  double score = 0.0;
  std::vector<double> ious;  // one per gt of `image`
  /// Bucket used when the prediction overlaps no gt (e.g. its own area).
  SizeBucket fallback_bucket = SizeBucket::S;
};

struct ApResult {
  /// Mean over thresholds; empty when there is no gt.
  std::optional<double> map;
  std::array<std::optional<double>, 10> per_threshold{};
};

struct MapReport {
  ApResult overall;
  std::array<ApResult, 3> buckets;  // S, M, L
};

/// Single-category AP with greedy score-ordered matching (a prediction takes
/// the unmatched gt with the highest IoU >= t; ties to the lower index) and
/// 101-point interpolated precision. `gt_buckets[i][k]` is the bucket of
/// the k-th gt of image i. Per bucket, only that bucket's gts count and a
/// prediction belongs to the bucket of its highest-IoU gt.
MapReport mean_average_precision(const std::vector<ScoredPrediction>& predictions,
                                 const std::vector<std::vector<SizeBucket>>& gt_buckets);

}  // namespace dasam::evaluation
