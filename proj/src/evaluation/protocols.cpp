#include "dasam/evaluation/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dasam/error.hpp"
#include "dasam/evaluation/clicks.hpp"
#include "dasam/model/decoder.hpp"
#include "dasam/training/trainer.hpp"

namespace dasam::evaluation {

using json = nlohmann::json;
using model::PointLabel;
using model::PromptBox;
using model::PromptPoint;
using model::PromptSet;

ModelSegmenter::ModelSegmenter(model::SegmentationModel model) : model_(std::move(model)) {}

void ModelSegmenter::set_scene(const data::DatasetRecord& record) {
  scene_.reset();
  scene_.emplace(model_, record.image, &record.depth);
}

SegmentResult ModelSegmenter::segment(const PromptSet& prompts) {
  if (!scene_) throw ContractViolation("segment: no scene set");
  auto out = scene_->predict(prompts);
  return SegmentResult{std::move(out.mask), out.predicted_iou};
}

void OracleSegmenter::set_scene(const data::DatasetRecord& record) { record_ = &record; }

SegmentResult OracleSegmenter::segment(const PromptSet& prompts) {
  if (!record_) throw ContractViolation("oracle: no scene set");
  const auto& masks = record_->masks;
  for (const auto& p : prompts.points) {
    if (p.label != PointLabel::foreground) continue;
    for (const auto& m : masks) {
      if (m.at(static_cast<int>(p.y), static_cast<int>(p.x))) return {m, 1.0};
    }
  }
  if (!prompts.boxes.empty()) {
    const auto& b = prompts.boxes.front();
    double best = -1;
    const data::InstanceMask* pick = nullptr;
    for (const auto& m : masks) {
      const auto mb = m.bbox();
      const double ix = std::max(0.0, std::min<double>(b.x_max, mb.x_max) - std::max<double>(b.x_min, mb.x_min));
      const double iy = std::max(0.0, std::min<double>(b.y_max, mb.y_max) - std::max<double>(b.y_min, mb.y_min));
      const double inter = ix * iy;
      const double uni = (b.x_max - b.x_min) * (b.y_max - b.y_min) + double(mb.area()) - inter;
      const double iou = inter / uni;
      if (iou > best) {
        best = iou;
        pick = &m;
      }
    }
    if (pick) return {*pick, 1.0};
  }
  return {data::InstanceMask::empty(record_->image.height, record_->image.width), 1.0};
}

void ClickProtocolConfig::validate() const {
  std::vector<std::string> bad;
  if (click_counts.empty()) bad.push_back("eval.clicks: at least one click count is required");
  for (std::size_t i = 0; i < click_counts.size(); ++i) {
    if (click_counts[i] < 1) bad.push_back("eval.clicks[" + std::to_string(i) + "]: must be >= 1");
    if (i > 0 && click_counts[i] <= click_counts[i - 1]) {
      bad.push_back("eval.clicks[" + std::to_string(i) + "]: counts must be strictly increasing");
    }
  }
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

namespace {

std::vector<const data::DatasetRecord*> sorted_records(const std::vector<data::DatasetRecord>& dataset) {
  std::vector<const data::DatasetRecord*> out;
  for (const auto& r : dataset) out.push_back(&r);
  std::stable_sort(out.begin(), out.end(), [](auto a, auto b) { return a->id < b->id; });
  return out;
}

MiouRow aggregate(const std::vector<InstanceResult>& details, std::size_t column, const std::string& label,
                  int clicks) {
  MiouRow row;
  row.label = label;
  row.clicks = clicks;
  double sum = 0;
  std::array<double, 3> bsum{};
  std::array<int, 3> bn{};
  for (const auto& d : details) {
    const double v = d.ious[column];
    sum += v;
    const auto b = static_cast<std::size_t>(d.bucket);
    bsum[b] += v;
    ++bn[b];
  }
  row.miou = details.empty() ? 0.0 : sum / static_cast<double>(details.size());
  for (std::size_t b = 0; b < 3; ++b) {
    if (bn[b]) row.bucket_miou[b] = bsum[b] / bn[b];
  }
  return row;
}

std::array<int, 3> count_buckets(const std::vector<InstanceResult>& details) {
  std::array<int, 3> c{};
  for (const auto& d : details) ++c[static_cast<std::size_t>(d.bucket)];
  return c;
}

std::vector<double> ious_against(const data::InstanceMask& pred, const data::DatasetRecord& r) {
  std::vector<double> out;
  for (const auto& g : r.masks) out.push_back(compute_iou(pred, g));
  return out;
}

std::vector<SizeBucket> buckets_of(const data::DatasetRecord& r) {
  std::vector<SizeBucket> out;
  for (const auto& g : r.masks) out.push_back(bucket_for_area(g.area()));
  return out;
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << *v;
  return s.str();
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json map_json(const ApResult& r) {
  json per = json::array();
  for (const auto& t : r.per_threshold) per.push_back(opt(t));
  return json{{"map", opt(r.map)}, {"per_threshold", per}};
}

}  // namespace

EvalReport eval_point_prompted(Segmenter& segmenter, const std::vector<data::DatasetRecord>& dataset,
                               const ClickProtocolConfig& protocol) {
  protocol.validate();
  EvalReport report;
  report.protocol = "points";
  const int max_clicks = protocol.click_counts.back();
  json ids = json::array();
  for (const auto* r : sorted_records(dataset)) {
    ids.push_back(r->id);
    segmenter.set_scene(*r);
    for (std::size_t k = 0; k < r->masks.size(); ++k) {
      const auto& gt = r->masks[k];
      InstanceResult res;
      res.image_id = r->id;
      res.mask_index = static_cast<int>(k);
      res.area = gt.area();
      res.bucket = bucket_for_area(gt.area());
      PromptSet prompts;
      auto pred = data::InstanceMask::empty(gt.height(), gt.width());
      std::size_t next = 0;
      for (int c = 1; c <= max_clicks; ++c) {
        const auto click = simulate_click(gt, pred, c - 1);
        if (!click.noop) {
          prompts.points.push_back(PromptPoint{double(click.x), double(click.y), click.label});
          res.clicks.push_back(prompts.points.back());
          auto out = segmenter.segment(prompts);
          pred = out.mask;
          res.score = out.score;
        }
        if (next < protocol.click_counts.size() && protocol.click_counts[next] == c) {
          res.ious.push_back(compute_iou(pred, gt));
          ++next;
        }
      }
      report.details.push_back(std::move(res));
    }
  }
  for (std::size_t i = 0; i < protocol.click_counts.size(); ++i) {
    const int c = protocol.click_counts[i];
    report.rows.push_back(aggregate(report.details, i, std::to_string(c) + (c == 1 ? " click" : " clicks"), c));
  }
  report.bucket_counts = count_buckets(report.details);
  report.instances = static_cast<int>(report.details.size());
  report.fingerprint =
      training::fingerprint(json{{"protocol", "points"}, {"clicks", protocol.click_counts}, {"seed", protocol.seed}, {"ids", ids}});
  return report;
}

std::vector<DetectorBox> read_detector_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError(path.string(), 0, "cannot open detector file");
  std::vector<DetectorBox> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    DetectorBox d;
    try {
      const auto j = json::parse(line);
      if (j.is_array()) {
        if (j.size() != 6) throw IngestionError(path.string(), line_no, "expected 6 fields");
        d = DetectorBox{j[0].get<std::string>(), j[1].get<double>(), j[2].get<double>(),
                        j[3].get<double>(),       j[4].get<double>(), j[5].get<double>()};
      } else if (j.is_object()) {
        d = DetectorBox{j.at("image_id").get<std::string>(), j.at("x_min").get<double>(), j.at("y_min").get<double>(),
                        j.at("x_max").get<double>(),         j.at("y_max").get<double>(), j.at("score").get<double>()};
      } else {
        throw IngestionError(path.string(), line_no, "expected a JSON object or array");
      }
    } catch (const json::exception& e) {
      throw IngestionError(path.string(), line_no, e.what());
    }
    if (!(d.x_min < d.x_max && d.y_min < d.y_max)) {
      throw IngestionError(path.string(), line_no, "box must satisfy x_min < x_max and y_min < y_max");
    }
    if (!std::isfinite(d.x_min + d.y_min + d.x_max + d.y_max + d.score)) {
      throw IngestionError(path.string(), line_no, "non-finite value");
    }
    out.push_back(std::move(d));
  }
  return out;
}

EvalReport eval_box_prompted(Segmenter& segmenter, const std::vector<data::DatasetRecord>& dataset,
                             const std::optional<std::vector<DetectorBox>>& detections) {
  EvalReport report;
  report.protocol = "boxes";
  report.box_source = detections ? "detector" : "gt";
  const auto records = sorted_records(dataset);
  std::vector<std::vector<SizeBucket>> gt_buckets;
  std::map<std::string, std::size_t> index;
  json ids = json::array();
  for (std::size_t i = 0; i < records.size(); ++i) {
    gt_buckets.push_back(buckets_of(*records[i]));
    index[records[i]->id] = i;
    ids.push_back(records[i]->id);
  }
  std::vector<ScoredPrediction> preds;

  if (!detections) {
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = *records[i];
      segmenter.set_scene(r);
      for (std::size_t k = 0; k < r.masks.size(); ++k) {
        const auto& gt = r.masks[k];
        const auto b = gt.bbox();
        PromptSet p;
        p.boxes.push_back(PromptBox{double(b.x_min), double(b.y_min), double(b.x_max), double(b.y_max)});
        const auto out = segmenter.segment(p);
        InstanceResult res;
        res.image_id = r.id;
        res.mask_index = static_cast<int>(k);
        res.area = gt.area();
        res.bucket = bucket_for_area(gt.area());
        res.ious.push_back(compute_iou(out.mask, gt));
        res.score = out.score;
        report.details.push_back(res);
        preds.push_back(ScoredPrediction{i, out.score, ious_against(out.mask, r),
                                         bucket_for_area(out.mask.is_empty() ? b.area() : out.mask.area())});
      }
    }
    report.rows.push_back(aggregate(report.details, 0, "gt boxes", 0));
  } else {
    std::vector<std::vector<const DetectorBox*>> per_image(records.size());
    for (std::size_t n = 0; n < detections->size(); ++n) {
      const auto& d = (*detections)[n];
      auto it = index.find(d.image_id);
      if (it == index.end()) {
        throw IngestionError("detections", static_cast<int>(n + 1), "unknown image_id '" + d.image_id + "'");
      }
      per_image[it->second].push_back(&d);
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (per_image[i].empty()) continue;
      const auto& r = *records[i];
      segmenter.set_scene(r);
      const double w = r.image.width, h = r.image.height;
      for (const auto* d : per_image[i]) {
        PromptBox box{std::clamp(d->x_min, 0.0, w - 1), std::clamp(d->y_min, 0.0, h - 1), 0, 0};
        box.x_max = std::clamp(d->x_max, box.x_min + 1, w);
        box.y_max = std::clamp(d->y_max, box.y_min + 1, h);
        PromptSet p;
        p.boxes.push_back(box);
        const auto out = segmenter.segment(p);
        const long box_area = std::lround((box.x_max - box.x_min) * (box.y_max - box.y_min));
        preds.push_back(ScoredPrediction{i, out.score, ious_against(out.mask, r),
                                         bucket_for_area(out.mask.is_empty() ? box_area : out.mask.area())});
      }
    }
    for (std::size_t i = 0; i < records.size(); ++i)
      for (std::size_t k = 0; k < records[i]->masks.size(); ++k) {
        InstanceResult res;
        res.image_id = records[i]->id;
        res.mask_index = static_cast<int>(k);
        res.area = records[i]->masks[k].area();
        res.bucket = bucket_for_area(res.area);
        report.details.push_back(res);
      }
  }
  report.map = mean_average_precision(preds, gt_buckets);
  report.bucket_counts = count_buckets(report.details);
  report.instances = static_cast<int>(report.details.size());
  report.fingerprint = training::fingerprint(json{{"protocol", "boxes"}, {"source", report.box_source}, {"ids", ids}});
  return report;
}

std::string EvalReport::to_text() const {
  std::ostringstream s;
  s << "protocol: " << protocol;
  if (!box_source.empty()) s << " (" << box_source << " boxes)";
  s << "\ninstances: " << instances << " (S " << bucket_counts[0] << ", M " << bucket_counts[1] << ", L "
    << bucket_counts[2] << ")\n";
  if (!rows.empty()) {
    s << std::left << std::setw(12) << "" << std::setw(9) << "mIoU" << std::setw(9) << "mIoU^S" << std::setw(9)
      << "mIoU^M" << "mIoU^L\n";
    for (const auto& r : rows) {
      s << std::left << std::setw(12) << r.label << std::setw(9) << fmt(r.miou) << std::setw(9)
        << fmt(r.bucket_miou[0]) << std::setw(9) << fmt(r.bucket_miou[1]) << fmt(r.bucket_miou[2]) << "\n";
    }
  }
  if (map) {
    s << std::left << std::setw(12) << "" << std::setw(9) << "mAP" << std::setw(9) << "mAP^S" << std::setw(9)
      << "mAP^M" << "mAP^L\n";
    s << std::left << std::setw(12) << "" << std::setw(9) << fmt(map->overall.map) << std::setw(9)
      << fmt(map->buckets[0].map) << std::setw(9) << fmt(map->buckets[1].map) << fmt(map->buckets[2].map) << "\n";
  }
  s << "fingerprint: " << fingerprint << "\n";
  return s.str();
}

json EvalReport::to_json() const {
  json rows_j = json::array();
  for (const auto& r : rows) {
    rows_j.push_back(json{{"label", r.label},
                          {"clicks", r.clicks},
                          {"miou", r.miou},
                          {"miou_S", opt(r.bucket_miou[0])},
                          {"miou_M", opt(r.bucket_miou[1])},
                          {"miou_L", opt(r.bucket_miou[2])}});
  }
  json inst = json::array();
  for (const auto& d : details) {
    json clicks = json::array();
    for (const auto& c : d.clicks) clicks.push_back({c.x, c.y, static_cast<int>(c.label)});
    inst.push_back(json{{"image_id", d.image_id},
                        {"mask_index", d.mask_index},
                        {"area", d.area},
                        {"bucket", to_string(d.bucket)},
                        {"ious", d.ious},
                        {"clicks", clicks},
                        {"score", d.score}});
  }
  json j{{"protocol", protocol},
         {"rows", rows_j},
         {"bucket_counts", {{"S", bucket_counts[0]}, {"M", bucket_counts[1]}, {"L", bucket_counts[2]}}},
         {"instances", instances},
         {"fingerprint", fingerprint},
         {"details", inst}};
  if (!box_source.empty()) j["box_source"] = box_source;
  if (map) {
    j["map"] = json{{"overall", map_json(map->overall)},
                    {"S", map_json(map->buckets[0])},
                    {"M", map_json(map->buckets[1])},
                    {"L", map_json(map->buckets[2])}};
  }
  return j;
}

}  // namespace dasam::evaluation
