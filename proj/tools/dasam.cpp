// dasam: command-line entry points (data generation, training, evaluation,
// benchmarking, inference, serving).

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dasam/data/dataset_io.hpp"
#include "dasam/data/synthetic.hpp"
#include "dasam/error.hpp"
#include "dasam/evaluation/benchmark.hpp"
#include "dasam/evaluation/figure.hpp"
#include "dasam/evaluation/protocols.hpp"
#include "dasam/experiments/ablation.hpp"
#include "dasam/model/inference.hpp"
#include "dasam/service/app_config.hpp"
#include "dasam/service/service.hpp"
#include "dasam/training/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dasam;

namespace {

/// Exit codes: 1 runtime failure, 2 bad usage or config, 3 bad input data.
struct Failure {
  int code;
  json body;
};

[[noreturn]] void fail(int code, const std::string& kind, const std::string& message, json extra = json::object()) {
  json j{{"error", kind}, {"message", message}};
  j.update(extra);
  throw Failure{code, j};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(1, "IoError", "cannot write " + path.string());
  out << text;
}

void require_file(const fs::path& p, const std::string& flag) {
  if (!fs::exists(p)) fail(2, "UsageError", flag + ": " + p.string() + " does not exist", {{"field", flag}});
}

std::vector<int> parse_int_list(const std::string& s, const std::string& flag) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(2, "UsageError", flag + ": '" + s + "' is not a comma-separated list of integers", {{"field", flag}});
    }
  }
  return out;
}

std::vector<double> parse_numbers(const std::string& s, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(2, "UsageError", flag + ": bad number in '" + s + "'", {{"field", flag}});
    }
  }
  return out;
}

// "x,y[,label]" groups separated by ';' (label 1 = foreground, 0 = background).
std::vector<model::PromptPoint> parse_points(const std::vector<std::string>& args) {
  std::vector<model::PromptPoint> out;
  for (const auto& arg : args) {
    std::stringstream ss(arg);
    std::string group;
    while (std::getline(ss, group, ';')) {
      if (group.empty()) continue;
      const auto v = parse_numbers(group, "--points");
      if (v.size() < 2 || v.size() > 3 || (v.size() == 3 && v[2] != 0 && v[2] != 1)) {
        fail(2, "UsageError", "--points: expected x,y[,label] with label 0 or 1, got '" + group + "'",
             {{"field", "--points"}});
      }
      out.push_back({v[0], v[1], v.size() == 3 && v[2] == 0 ? model::PointLabel::background : model::PointLabel::foreground});
    }
  }
  return out;
}

std::vector<model::PromptBox> parse_boxes(const std::vector<std::string>& args) {
  std::vector<model::PromptBox> out;
  for (const auto& arg : args) {
    std::stringstream ss(arg);
    std::string group;
    while (std::getline(ss, group, ';')) {
      if (group.empty()) continue;
      const auto v = parse_numbers(group, "--boxes");
      if (v.size() != 4) fail(2, "UsageError", "--boxes: expected x_min,y_min,x_max,y_max, got '" + group + "'", {{"field", "--boxes"}});
      out.push_back({v[0], v[1], v[2], v[3]});
    }
  }
  return out;
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

service::AppConfig app_config(const Common& c) {
  std::optional<fs::path> path;
  if (!c.config.empty()) {
    require_file(c.config, "--config");
    path = c.config;
  }
  auto cfg = service::load_app_config(path, service::process_environment());
  // --seed (default 0) drives every random stream; the file's seeds are
  // used only when the flag is absent.
  if (c.seed) {
    cfg.data.scene.seed = *c.seed;
    cfg.model.seed = *c.seed;
    cfg.train.seed = *c.seed;
  }
  return cfg;
}

std::vector<data::DatasetRecord> load_records(const std::string& path, const std::string& preferred, int limit) {
  require_file(path, "--data");
  auto records = data::load_split(data::resolve_split(path, preferred));
  if (limit > 0 && static_cast<std::size_t>(limit) < records.size()) records.resize(static_cast<std::size_t>(limit));
  if (records.empty()) fail(3, "IngestionError", "no records in " + path);
  return records;
}

training::LoadedModel load_checkpoint(const std::string& path, const std::string& flag = "--model") {
  require_file(path, flag);
  return training::load_model(path);
}

// ---------------------------------------------------------------- commands

void cmd_gen_data(const Common& common, const std::string& out, std::optional<int> count, std::optional<double> test_fraction) {
  auto cfg = app_config(common);
  if (count) cfg.data.count = *count;
  if (test_fraction) cfg.data.test_fraction = *test_fraction;
  if (cfg.data.count < 1) fail(2, "ConfigError", "--count must be >= 1", {{"fields", {"data.count: must be >= 1"}}});
  if (!(cfg.data.test_fraction >= 0 && cfg.data.test_fraction < 1)) {
    fail(2, "ConfigError", "--test-fraction must be in [0, 1)", {{"fields", {"data.test_fraction: must be in [0, 1)"}}});
  }
  const int n_test = static_cast<int>(cfg.data.count * cfg.data.test_fraction);
  const int n_train = cfg.data.count - n_test;
  for (int i = 0; i < cfg.data.count; ++i) {
    const auto record = data::generate_synthetic_scene(cfg.data.scene, static_cast<std::uint64_t>(i));
    data::write_record(fs::path(out) / (i < n_train ? "train" : "test"), record);
  }
  write_text(fs::path(out) / "data_config.json", cfg.to_json()["data"].dump(2) + "\n");
  std::cout << json{{"out", out}, {"train", n_train}, {"test", n_test}}.dump() << "\n";
}

struct TrainArgs {
  std::string data, out, resume, variant;
  int limit = 0;
  long long max_steps = -1;
  bool quiet = false;
};

void cmd_train(const Common& common, const TrainArgs& a) {
  auto cfg = app_config(common);
  if (!a.variant.empty()) cfg.model.variant = model::variant_from_string(a.variant);
  const auto records = load_records(a.data, "train", a.limit);
  auto samples = training::to_tensor_samples(records);

  std::optional<training::Trainer> trainer;
  if (!a.resume.empty()) {
    require_file(a.resume, "--resume");
    trainer.emplace(training::Trainer::resume(a.resume, std::move(samples)));
  } else {
    trainer.emplace(model::SegmentationModel(cfg.model), std::move(samples), cfg.train);
  }
  fs::create_directories(a.out);
  training::JsonlLog log(fs::path(a.out) / "train_log.jsonl");
  const auto total = trainer->total_steps();
  const auto stop_at = a.max_steps >= 0 ? std::min<std::int64_t>(total, trainer->global_step() + a.max_steps) : total;
  training::StepRecord last;
  while (trainer->global_step() < stop_at) {
    last = trainer->step();
    log.write(json(last));
    if (!a.quiet && (last.step + 1) % trainer->steps_per_epoch() == 0) {
      std::cerr << "stage " << last.stage << " epoch " << last.epoch << " step " << last.step + 1 << "/" << total
                << " loss " << last.loss.total << "\n";
    }
  }
  const auto ckpt = fs::path(a.out) / "checkpoint.pt";
  trainer->save_checkpoint(ckpt);
  json effective = cfg.to_json();
  effective["model"] = trainer->model()->config();
  effective["train"] = trainer->config();
  write_text(fs::path(a.out) / "config.json", effective.dump(2) + "\n");
  std::cout << json{{"checkpoint", ckpt.string()},
                    {"steps", trainer->global_step()},
                    {"total_steps", total},
                    {"done", trainer->done()},
                    {"final_loss", trainer->global_step() > 0 ? json(last.loss.total) : json(nullptr)}}
                   .dump()
            << "\n";
}

void emit_report(const evaluation::EvalReport& report, const std::string& out) {
  std::cout << report.to_text();
  if (!out.empty()) write_text(out, report.to_json().dump(2) + "\n");
}

void cmd_eval_points(const Common& common, const std::string& model_path, const std::string& data_path,
                     const std::string& clicks, int limit, const std::string& out) {
  auto cfg = app_config(common);
  evaluation::ClickProtocolConfig protocol;
  protocol.click_counts = clicks.empty() ? cfg.eval.clicks : parse_int_list(clicks, "--clicks");
  protocol.seed = common.seed.value_or(0);
  protocol.validate();
  auto loaded = load_checkpoint(model_path);
  const auto records = load_records(data_path, "test", limit);
  evaluation::ModelSegmenter seg(loaded.model);
  emit_report(evaluation::eval_point_prompted(seg, records, protocol), out);
}

void cmd_eval_boxes(const Common& common, const std::string& model_path, const std::string& data_path,
                    std::string boxes, int limit, const std::string& out) {
  auto cfg = app_config(common);
  if (boxes.empty()) boxes = cfg.eval.boxes;
  std::optional<std::vector<evaluation::DetectorBox>> detections;
  if (boxes != "gt") {
    require_file(boxes, "--boxes");
    detections = evaluation::read_detector_file(boxes);
  }
  auto loaded = load_checkpoint(model_path);
  const auto records = load_records(data_path, "test", limit);
  evaluation::ModelSegmenter seg(loaded.model);
  emit_report(evaluation::eval_box_prompted(seg, records, detections), out);
}

void cmd_bench(const Common& common, const std::string& model_arg, const std::string& rgb_model, int size, int trials,
               const std::string& out) {
  auto cfg = app_config(common);
  evaluation::BenchmarkConfig bench;
  bench.trials = trials > 0 ? trials : cfg.eval.trials;
  bench.images_per_trial = cfg.eval.images_per_trial;
  bench.warmup = cfg.eval.warmup;
  bench.height = bench.width = size;
  bench.seed = common.seed.value_or(0);
  bench.validate();
  evaluation::BenchmarkReport report;
  if (fs::exists(model_arg)) {
    auto loaded = training::load_model(model_arg);
    if (!rgb_model.empty()) {
      auto other = load_checkpoint(rgb_model, "--rgb-only-model");
      auto& dep = loaded.model->depth_aware() ? loaded.model : other.model;
      auto& rgb = loaded.model->depth_aware() ? other.model : loaded.model;
      if (!dep->depth_aware() || rgb->depth_aware()) {
        fail(2, "UsageError", "bench: need one depth_aware and one rgb_only checkpoint");
      }
      report = evaluation::compare_variants(rgb, dep, bench);
    } else {
      report = evaluation::compare_variants(loaded.model->config(), bench);
    }
  } else {
    // a preset name
    auto mc = model::load_preset(model_arg);
    mc.seed = common.seed.value_or(0);
    report = evaluation::compare_variants(mc, bench);
  }
  std::cout << report.to_text();
  if (!out.empty()) write_text(out, report.to_json().dump(2) + "\n");
}

struct InferArgs {
  std::string model, rgb_model, image, depth, out, figure;
  std::vector<std::string> points, boxes;
};

void cmd_infer(const InferArgs& a) {
  auto loaded = load_checkpoint(a.model);
  require_file(a.image, "--image");
  const auto image = data::read_image(a.image);
  std::optional<data::DepthMap> depth;
  if (!a.depth.empty()) {
    require_file(a.depth, "--depth");
    depth = data::read_depth(a.depth);
  }
  model::PromptSet prompts;
  prompts.points = parse_points(a.points);
  prompts.boxes = parse_boxes(a.boxes);
  if (prompts.empty()) fail(2, "UsageError", "infer: give --points and/or --boxes", {{"field", "--points"}});

  auto run = [&](model::SegmentationModel& m, json& warnings) {
    model::ScenePredictor scene(m, image, depth ? &*depth : nullptr);
    if (m->depth_aware() && !depth) warnings.push_back("depth_missing: no depth supplied, using all-zero depth");
    return scene.predict(prompts);
  };
  json warnings = json::array();
  auto result = run(loaded.model, warnings);
  json body{{"mask", service::mask_to_json(result.mask)},
            {"predicted_iou", std::clamp(result.predicted_iou, 0.0, 1.0)},
            {"alpha", loaded.model->depth_aware() ? json(loaded.model->alpha_value()) : json(nullptr)},
            {"variant", model::to_string(loaded.model->variant())},
            {"warnings", warnings}};
  if (!a.out.empty()) write_text(a.out, body.dump() + "\n");
  std::cout << body.dump() << "\n";

  if (!a.figure.empty()) {
    data::DatasetRecord record;
    record.id = fs::path(a.image).stem().string();
    record.image = image;
    record.depth = depth ? *depth : data::DepthMap(image.height, image.width);
    std::vector<std::pair<std::string, data::InstanceMask>> panels;
    if (!a.rgb_model.empty()) {
      auto other = load_checkpoint(a.rgb_model, "--rgb-only-model");
      json ignored = json::array();
      panels.emplace_back(model::to_string(other.model->variant()), run(other.model, ignored).mask);
    }
    panels.emplace_back(model::to_string(loaded.model->variant()), result.mask);
    evaluation::emit_comparison_figure(record, panels, a.figure);
  }
}

void cmd_serve(const Common& common, const std::string& model_path, const std::string& rgb_model, std::optional<int> port,
               std::optional<std::string> host) {
  auto cfg = app_config(common);
  require_file(model_path, "--model");
  if (!rgb_model.empty()) require_file(rgb_model, "--rgb-only-model");
  auto svc = std::make_shared<service::SegmentationService>();
  service::ServerOptions opts{host.value_or(cfg.serve.host), port.value_or(cfg.serve.port), cfg.serve.threads};
  service::HttpServer server(svc, opts);
  const int bound = server.bind();
  // Answer 503 while the checkpoints load.
  std::thread listener([&] { server.listen(); });
  try {
    std::vector<std::string> ids;
    for (const auto& path : {model_path, rgb_model}) {
      if (path.empty()) continue;
      auto loaded = training::load_model(path);
      auto id = model::to_string(loaded.model->variant());
      if (std::find(ids.begin(), ids.end(), id) != ids.end()) id = fs::path(path).stem().string() + "-" + id;
      ids.push_back(id);
      svc->add_model(id, loaded.model);
    }
    svc->mark_ready();
    std::cout << json{{"listening", opts.host + ":" + std::to_string(bound)}, {"models", ids}}.dump() << std::endl;
  } catch (...) {
    server.stop();
    listener.join();
    throw;
  }
  listener.join();
}

void cmd_ablation(const Common& common, int scenes, int train_scenes, const std::string& out) {
  auto cfg = experiments::AblationConfig::hard_rgb();
  cfg.seed = common.seed.value_or(0);
  if (scenes > 0) cfg.scenes = scenes;
  if (train_scenes > 0) cfg.train_scenes = train_scenes;
  auto result = experiments::run_depth_ablation(cfg, [](const std::string& variant, const training::StepRecord& r) {
    if ((r.step + 1) % 100 == 0) std::cerr << variant << " step " << r.step + 1 << " loss " << r.loss.total << "\n";
  });
  std::cout << "RGB-only\n" << result.rgb_only.to_text() << "Depth-aware\n" << result.depth_aware.to_text();
  const auto j = result.to_json();
  std::cout << j["gains"].dump() << "\n";
  if (!out.empty()) write_text(out, j.dump(2) + "\n");
}

json describe_error(const std::exception& e) {
  if (const auto* c = dynamic_cast<const ConfigError*>(&e)) return {{"error", "ConfigError"}, {"message", e.what()}, {"fields", c->fields()}};
  if (const auto* m = dynamic_cast<const MalformedPayload*>(&e))
    return {{"error", "MalformedPayload"}, {"message", e.what()}, {"field", m->field()}};
  if (const auto* i = dynamic_cast<const IngestionError*>(&e))
    return {{"error", "IngestionError"}, {"message", e.what()}, {"path", i->path()}, {"line", i->line()}};
  if (dynamic_cast<const CheckpointVersionError*>(&e)) return {{"error", "CheckpointVersionError"}, {"message", e.what()}};
  if (dynamic_cast<const ContractViolation*>(&e)) return {{"error", "ContractViolation"}, {"message", e.what()}};
  if (dynamic_cast<const TrainingDiverged*>(&e)) return {{"error", "TrainingDiverged"}, {"message", e.what()}};
  return {{"error", "Error"}, {"message", e.what()}};
}

int exit_code_for(const json& err) {
  const auto kind = err.at("error").get<std::string>();
  if (kind == "ConfigError" || kind == "UsageError") return 2;
  if (kind == "MalformedPayload" || kind == "IngestionError" || kind == "CheckpointVersionError" ||
      kind == "ContractViolation")
    return 3;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Depth-aware promptable segmentation"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON config file (sections data/model/train/loss/eval/serve)");
    sub->add_option("--seed", common.seed, "seed for every random stream (default 0)");
  };

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic RGB-D corpus");
  std::string gen_out;
  std::optional<int> gen_count;
  std::optional<double> gen_test;
  add_common(gen);
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--count", gen_count, "number of scenes");
  gen->add_option("--test-fraction", gen_test, "fraction of scenes written to test/");

  auto* train = app.add_subcommand("train", "two-stage training");
  TrainArgs ta;
  add_common(train);
  train->add_option("--data", ta.data, "dataset root or split directory")->required();
  train->add_option("--out", ta.out, "output directory (checkpoint.pt, train_log.jsonl, config.json)")->required();
  train->add_option("--limit", ta.limit, "use only the first N records");
  train->add_option("--variant", ta.variant, "rgb_only or depth_aware (overrides the config)");
  train->add_option("--resume", ta.resume, "continue from a checkpoint");
  train->add_option("--max-steps", ta.max_steps, "stop after this many steps (checkpoint is still written)");
  train->add_flag("--quiet", ta.quiet, "no per-epoch progress on stderr");

  auto* ep = app.add_subcommand("eval-points", "iterative click evaluation");
  std::string ep_model, ep_data, ep_clicks, ep_out;
  int ep_limit = 0;
  add_common(ep);
  ep->add_option("--model", ep_model, "checkpoint")->required();
  ep->add_option("--data", ep_data, "dataset root or split directory")->required();
  ep->add_option("--clicks", ep_clicks, "comma-separated click counts, e.g. 1,3,5");
  ep->add_option("--limit", ep_limit, "evaluate only the first N records");
  ep->add_option("--out", ep_out, "write the JSON report here");

  auto* eb = app.add_subcommand("eval-boxes", "box-prompted evaluation");
  std::string eb_model, eb_data, eb_boxes, eb_out;
  int eb_limit = 0;
  add_common(eb);
  eb->add_option("--model", eb_model, "checkpoint")->required();
  eb->add_option("--data", eb_data, "dataset root or split directory")->required();
  eb->add_option("--boxes", eb_boxes, "'gt' or a JSONL detector file");
  eb->add_option("--limit", eb_limit, "evaluate only the first N records");
  eb->add_option("--out", eb_out, "write the JSON report here");

  auto* bench = app.add_subcommand("bench", "parameter, MAC and throughput comparison of both variants");
  std::string bench_model, bench_rgb, bench_out;
  int bench_size = 0, bench_trials = 0;
  add_common(bench);
  bench->add_option("--model", bench_model, "checkpoint or preset name")->required();
  bench->add_option("--rgb-only-model", bench_rgb, "rgb_only checkpoint to compare against");
  bench->add_option("--size", bench_size, "square input size (default: preset image_size)");
  bench->add_option("--trials", bench_trials, "timed trials (>= 3)");
  bench->add_option("--out", bench_out, "write the JSON report here");

  auto* infer = app.add_subcommand("infer", "segment one image");
  InferArgs ia;
  infer->add_option("--model", ia.model, "checkpoint")->required();
  infer->add_option("--image", ia.image, "PNG image")->required();
  infer->add_option("--depth", ia.depth, "depth map (flat binary or single-channel PNG)");
  infer->add_option("--points", ia.points, "x,y[,label];... (label 1 fg, 0 bg)");
  infer->add_option("--boxes", ia.boxes, "x_min,y_min,x_max,y_max;...");
  infer->add_option("--out", ia.out, "write the response JSON (mask RLE) here");
  infer->add_option("--figure", ia.figure, "write a side-by-side comparison PNG");
  infer->add_option("--rgb-only-model", ia.rgb_model, "baseline checkpoint for --figure");

  auto* serve = app.add_subcommand("serve", "HTTP inference service");
  std::string sv_model, sv_rgb;
  std::optional<int> sv_port;
  std::optional<std::string> sv_host;
  add_common(serve);
  serve->add_option("--model", sv_model, "checkpoint")->required();
  serve->add_option("--rgb-only-model", sv_rgb, "second (baseline) checkpoint");
  serve->add_option("--port", sv_port, "port (0 picks a free one)");
  serve->add_option("--host", sv_host, "bind address");

  auto* abl = app.add_subcommand("ablation", "depth vs RGB-only ablation on synthetic scenes");
  int abl_scenes = 0, abl_train = 0;
  std::string abl_out;
  add_common(abl);
  abl->add_option("--scenes", abl_scenes, "total scenes (default 600)");
  abl->add_option("--train-scenes", abl_train, "training scenes (default 500)");
  abl->add_option("--out", abl_out, "write the JSON result here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", "UsageError"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }

  try {
    if (*gen) cmd_gen_data(common, gen_out, gen_count, gen_test);
    if (*train) cmd_train(common, ta);
    if (*ep) cmd_eval_points(common, ep_model, ep_data, ep_clicks, ep_limit, ep_out);
    if (*eb) cmd_eval_boxes(common, eb_model, eb_data, eb_boxes, eb_limit, eb_out);
    if (*bench) cmd_bench(common, bench_model, bench_rgb, bench_size, bench_trials, bench_out);
    if (*infer) cmd_infer(ia);
    if (*serve) cmd_serve(common, sv_model, sv_rgb, sv_port, sv_host);
    if (*abl) cmd_ablation(common, abl_scenes, abl_train, abl_out);
  } catch (const Failure& f) {
    std::cerr << f.body.dump() << "\n";
    return f.code;
  } catch (const std::exception& e) {
    const auto err = describe_error(e);
    std::cerr << err.dump() << "\n";
    return exit_code_for(err);
  }
  return 0;
}
