#include "dasam/evaluation/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "dasam/error.hpp"

namespace dasam::evaluation {

double compute_iou(const data::InstanceMask& a, const data::InstanceMask& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ContractViolation("compute_iou: masks differ in shape");
  }
  const auto ba = a.bits(), bb = b.bits();
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < ba.size(); ++i) {
    inter += (ba[i] && bb[i]);
    uni += (ba[i] || bb[i]);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

SizeBucket bucket_for_area(long area) {
  if (area < kSmallAreaLimit) return SizeBucket::S;
  if (area < kMediumAreaLimit) return SizeBucket::M;
  return SizeBucket::L;
}

std::string to_string(SizeBucket b) {
  switch (b) {
    case SizeBucket::S: return "S";
    case SizeBucket::M: return "M";
    case SizeBucket::L: return "L";
  }
  return "?";
}

std::array<double, 10> map_thresholds() {
  std::array<double, 10> t{};
  for (int i = 0; i < 10; ++i) t[static_cast<std::size_t>(i)] = (50 + 5 * i) / 100.0;
  return t;
}

namespace {

struct Candidate {
  std::size_t image;
  double score;
  std::vector<double> ious;  // restricted to the gts under evaluation
};

std::optional<double> average_precision(const std::vector<Candidate>& preds, const std::vector<std::size_t>& gt_per_image,
                                        double threshold) {
  const std::size_t npos = std::accumulate(gt_per_image.begin(), gt_per_image.end(), std::size_t{0});
  if (npos == 0) return std::nullopt;
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return preds[a].score > preds[b].score; });

  std::vector<std::vector<bool>> taken(gt_per_image.size());
  for (std::size_t i = 0; i < gt_per_image.size(); ++i) taken[i].assign(gt_per_image[i], false);

  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto& p = preds[order[rank]];
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < p.ious.size(); ++g) {
      if (taken[p.image][g] || p.ious[g] < threshold) continue;
      if (p.ious[g] > best_iou) {
        best_iou = p.ious[g];
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      taken[p.image][static_cast<std::size_t>(best)] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(rank + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(npos));
  }
  // Precision envelope, then sample at 101 recall levels.
  for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double sum = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double r = i / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / 101.0;
}

// GCC flags a bogus overflow when inlining optional<double> stores here.
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wstringop-overflow"
ApResult ap_over_thresholds(const std::vector<Candidate>& preds, const std::vector<std::size_t>& gt_per_image) {
  ApResult r;
  double sum = 0.0;
  int i = 0;
  for (const double t : map_thresholds()) {
    auto& slot = r.per_threshold[static_cast<std::size_t>(i++)];
    slot = average_precision(preds, gt_per_image, t);
    if (slot) sum += *slot;
  }
  if (r.per_threshold[0]) r.map = sum / static_cast<double>(r.per_threshold.size());
  return r;
}
#pragma GCC diagnostic pop

}  // namespace

MapReport mean_average_precision(const std::vector<ScoredPrediction>& predictions,
                                 const std::vector<std::vector<SizeBucket>>& gt_buckets) {
  for (const auto& p : predictions) {
    if (p.image >= gt_buckets.size() || p.ious.size() != gt_buckets[p.image].size()) {
      throw ContractViolation("mean_average_precision: prediction does not match its image's gt list");
    }
  }
  MapReport report;
  {
    std::vector<Candidate> all;
    for (const auto& p : predictions) all.push_back({p.image, p.score, p.ious});
    std::vector<std::size_t> counts;
    for (const auto& g : gt_buckets) counts.push_back(g.size());
    report.overall = ap_over_thresholds(all, counts);
  }
  for (int b = 0; b < 3; ++b) {
    const auto bucket = static_cast<SizeBucket>(b);
    std::vector<std::size_t> counts;
    for (const auto& g : gt_buckets) counts.push_back(static_cast<std::size_t>(std::count(g.begin(), g.end(), bucket)));
    std::vector<Candidate> sel;
    for (const auto& p : predictions) {
      SizeBucket assigned = p.fallback_bucket;
      double best = 0.0;
      for (std::size_t g = 0; g < p.ious.size(); ++g) {
        if (p.ious[g] > best) {
          best = p.ious[g];
          assigned = gt_buckets[p.image][g];
        }
      }
      if (assigned != bucket) continue;
      Candidate c{p.image, p.score, {}};
      for (std::size_t g = 0; g < p.ious.size(); ++g) {
        if (gt_buckets[p.image][g] == bucket) c.ious.push_back(p.ious[g]);
      }
      sel.push_back(std::move(c));
    }
    report.buckets[static_cast<std::size_t>(b)] = ap_over_thresholds(sel, counts);
  }
  return report;
}

}  // namespace dasam::evaluation
