#include "support/torch_doctest.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "dasam/data/dataset_io.hpp"
#include "dasam/evaluation/clicks.hpp"
#include "dasam/evaluation/metrics.hpp"
#include "dasam/service/service.hpp"
#include "dasam/training/trainer.hpp"
#include "support/cli_runner.hpp"

using namespace dasam;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// One trained single-image model shared by the slower cases.
struct Lifecycle {
  fs::path root;
  fs::path data;
  fs::path model_dir;
  Lifecycle() {
    root = clitest::scratch_dir("lifecycle");
    data = root / "data";
    model_dir = root / "model";
    const auto gen = clitest::run({"gen-data", "--config", clitest::smoke_config(), "--out", data.string(), "--count", "4",
                                   "--test-fraction", "0.5"});
    REQUIRE(gen.code == 0);
    const auto tr = clitest::run({"train", "--config", clitest::smoke_config(), "--data", data.string(), "--limit", "1",
                                  "--out", model_dir.string(), "--quiet"});
    REQUIRE_MESSAGE(tr.code == 0, tr.err);
  }
  static Lifecycle& get() {
    static Lifecycle l;
    return l;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<double> logged_losses(const fs::path& log) {
  std::vector<double> out;
  std::ifstream in(log);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(json::parse(line)["loss"]["total"].get<double>());
  return out;
}

json single_line_error(const clitest::Result& r) {
  INFO(r.err);
  auto text = r.err;
  while (!text.empty() && text.back() == '\n') text.pop_back();
  CHECK(text.find('\n') == std::string::npos);
  return json::parse(text);
}

}  // namespace

TEST_CASE("gen-data is deterministic in the seed") {
  const auto root = clitest::scratch_dir("gen");
  for (const char* name : {"a", "b"})
    REQUIRE(clitest::run({"gen-data", "--out", (root / name).string(), "--count", "10", "--seed", "4"}).code == 0);
  REQUIRE(clitest::run({"gen-data", "--out", (root / "c").string(), "--count", "10", "--seed", "5"}).code == 0);

  std::size_t files = 0;
  bool any_diff = false;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root / "a");
    CHECK(slurp(e.path()) == slurp(root / "b" / rel));
    if (rel.parent_path().filename() == "images") any_diff |= slurp(e.path()) != slurp(root / "c" / rel);
    ++files;
  }
  CHECK(files == 31);  // 10 x (image, depth, annotation) + data_config.json
  CHECK(any_diff);
  CHECK(data::load_split(root / "a" / "train").size() == 10);
}

TEST_CASE("usage and config errors are one JSON line with a nonzero exit") {
  const auto root = clitest::scratch_dir("errors");
  auto r = clitest::run({"train", "--data", "/does/not/exist", "--out", (root / "x").string()});
  CHECK(r.code == 2);
  CHECK(single_line_error(r)["field"] == "--data");

  {
    std::ofstream bad(root / "bad.json");
    bad << R"({"train": {"lr": -1, "batch_size": 0, "nope": 3}, "loss": {"dice": -1}})";
  }
  r = clitest::run({"gen-data", "--config", (root / "bad.json").string(), "--out", (root / "y").string()});
  CHECK(r.code == 2);
  const auto err = single_line_error(r);
  CHECK(err["error"] == "ConfigError");
  CHECK(err["fields"].size() == 4);

  r = clitest::run({"frobnicate"});
  CHECK(r.code == 2);
  CHECK(single_line_error(r)["error"] == "UsageError");

  r = clitest::run({"eval-points", "--model", "m.pt", "--data", "d", "--clicks", "1,x"});
  CHECK(r.code == 2);
  single_line_error(r);
}

TEST_CASE("lifecycle: train on one image, then evaluate with 5 clicks") {
  auto& lc = Lifecycle::get();
  const auto ckpt = (lc.model_dir / "checkpoint.pt").string();
  const auto report = lc.root / "points.json";
  const auto r = clitest::run({"eval-points", "--model", ckpt, "--data", (lc.data / "train").string(), "--limit", "1",
                               "--clicks", "5", "--out", report.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto j = json::parse(slurp(report));
  REQUIRE(j["rows"].size() == 1);
  for (const auto& d : j["details"]) {
    INFO("instance " << d.dump());
    CHECK(d["ious"][0].get<double>() > 0.5);
  }
  CHECK(r.out.find("5 clicks") != std::string::npos);

  const auto three = clitest::run({"eval-points", "--model", ckpt, "--data", lc.data.string(), "--clicks", "1,3,5",
                                   "--out", (lc.root / "three.json").string()});
  REQUIRE(three.code == 0);
  CHECK(json::parse(slurp(lc.root / "three.json"))["rows"].size() == 3);

  const auto boxes = clitest::run({"eval-boxes", "--model", ckpt, "--data", lc.data.string(), "--boxes", "gt",
                                   "--out", (lc.root / "boxes.json").string()});
  REQUIRE_MESSAGE(boxes.code == 0, boxes.err);
  CHECK(json::parse(slurp(lc.root / "boxes.json")).contains("map"));
}

TEST_CASE("eval-boxes rejects a bad detector file with its line number") {
  auto& lc = Lifecycle::get();
  const auto det = lc.root / "det.jsonl";
  {
    std::ofstream out(det);
    out << R"({"image_id": "scene-2", "x_min": 1, "y_min": 1, "x_max": 20, "y_max": 20, "score": 0.9})" << "\n";
    out << "not json\n";
  }
  const auto r = clitest::run({"eval-boxes", "--model", (lc.model_dir / "checkpoint.pt").string(), "--data",
                               lc.data.string(), "--boxes", det.string()});
  CHECK(r.code == 3);
  const auto err = single_line_error(r);
  CHECK(err["error"] == "IngestionError");
  CHECK(err["line"] == 2);
}

TEST_CASE("infer output equals the service response and segments the object") {
  auto& lc = Lifecycle::get();
  const auto ckpt = lc.model_dir / "checkpoint.pt";
  const auto records = data::load_split(lc.data / "train");
  const auto& rec = records.front();  // the training image
  const auto& gt = rec.masks.front();
  // interior point of the first object
  const auto first = evaluation::simulate_click(gt, data::InstanceMask::empty(gt.height(), gt.width()), 0);
  const std::pair<int, int> click{first.x, first.y};

  const auto image_path = lc.data / "train" / "images" / (rec.id + ".png");
  const auto depth_path = lc.data / "train" / "depth" / (rec.id + ".depth");
  const auto out = lc.root / "infer.json";
  const auto pts = std::to_string(click.first) + "," + std::to_string(click.second) + ",1";
  const auto r = clitest::run({"infer", "--model", ckpt.string(), "--image", image_path.string(), "--depth",
                               depth_path.string(), "--points", pts, "--out", out.string(), "--figure",
                               (lc.root / "fig.png").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto cli = json::parse(slurp(out));
  CHECK(fs::file_size(lc.root / "fig.png") > 0);

  auto loaded = training::load_model(ckpt);
  service::SegmentationService svc;
  svc.add_model("m", loaded.model);
  svc.mark_ready();
  model::PromptSet prompts;
  prompts.points.push_back({double(click.first), double(click.second), model::PointLabel::foreground});
  const auto res = svc.segment(service::make_segment_request(rec.image, &rec.depth, prompts).dump());
  REQUIRE(res.status == 200);
  CHECK(res.body["mask"] == cli["mask"]);
  const auto mask = service::mask_from_json(res.body["mask"]);
  CHECK(evaluation::compute_iou(mask, gt) > 0.5);
}

TEST_CASE("checkpoint continuation reproduces the uninterrupted run") {
  const auto root = clitest::scratch_dir("resume");
  {
    std::ofstream cfg(root / "cfg.json");
    cfg << R"({"data": {"height": 64, "width": 64, "max_objects": 2},
               "train": {"stage1_epochs": 2, "stage2_epochs": 3, "batch_size": 2}})";
  }
  const auto cfg = (root / "cfg.json").string();
  REQUIRE(clitest::run({"gen-data", "--config", cfg, "--out", (root / "d").string(), "--count", "4"}).code == 0);
  auto train = [&](std::vector<std::string> extra) {
    std::vector<std::string> args{"train", "--config", cfg, "--data", (root / "d").string(), "--quiet"};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = clitest::run(args);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    return json::parse(r.out);
  };
  const auto full = train({"--out", (root / "full").string()});
  CHECK(full["steps"] == 10);
  const auto part = train({"--out", (root / "part").string(), "--max-steps", "3"});  // stops inside stage 1
  CHECK(part["done"] == false);
  train({"--out", (root / "rest").string(), "--resume", (root / "part" / "checkpoint.pt").string()});

  const auto a = logged_losses(root / "full" / "train_log.jsonl");
  auto b = logged_losses(root / "part" / "train_log.jsonl");
  const auto c = logged_losses(root / "rest" / "train_log.jsonl");
  b.insert(b.end(), c.begin(), c.end());
  REQUIRE(a.size() == 10);
  REQUIRE(b.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
}

TEST_CASE("bench compares both variants of a preset") {
  const auto root = clitest::scratch_dir("bench");
  const auto r = clitest::run({"bench", "--model", "toy", "--size", "64", "--trials", "3", "--out",
                               (root / "bench.json").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto j = json::parse(slurp(root / "bench.json"));
  CHECK(j["parameter_ratio"].get<double>() > 1.0);
  CHECK(j["mac_ratio"].get<double>() > 1.0);
}
