#include "support/torch_doctest.hpp"

#include <future>
#include <thread>

#include "dasam/data/dataset_io.hpp"
#include "dasam/data/rle.hpp"
#include "dasam/data/synthetic.hpp"
#include "dasam/error.hpp"
#include "dasam/model/accounting.hpp"
#include "dasam/model/inference.hpp"
#include "dasam/service/app_config.hpp"
#include "dasam/service/service.hpp"
#include "httplib.h"

using namespace dasam;
using namespace dasam::service;
using json = nlohmann::json;

namespace {

data::DatasetRecord scene(int size = 64, std::uint64_t seed = 3) {
  data::SyntheticSceneConfig c;
  c.height = c.width = size;
  c.max_objects = 2;
  c.max_extent = size / 2;
  return data::generate_synthetic_scene(c, seed);
}

model::SegmentationModel toy(model::Variant v, std::uint64_t seed = 0) {
  auto c = model::load_preset("toy");
  c.variant = v;
  c.seed = seed;
  return model::SegmentationModel(c);
}

std::shared_ptr<SegmentationService> make_service() {
  auto s = std::make_shared<SegmentationService>();
  s->add_model("depth_aware", toy(model::Variant::depth_aware));
  s->add_model("rgb_only", toy(model::Variant::rgb_only));
  s->mark_ready();
  return s;
}

model::PromptSet one_point(double x, double y) {
  model::PromptSet p;
  p.points.push_back({x, y, model::PointLabel::foreground});
  return p;
}

std::string error_field(const HttpResponse& r) { return r.body.at("error").at("field").get<std::string>(); }

bool has_field(const ConfigError& e, const std::string& prefix) {
  for (const auto& f : e.fields())
    if (f.rfind(prefix, 0) == 0) return true;
  return false;
}

}  // namespace

TEST_CASE("base64 matches the RFC 4648 vectors and round-trips") {
  const std::vector<std::pair<std::string, std::string>> vectors{
      {"", ""}, {"f", "Zg=="}, {"fo", "Zm8="}, {"foo", "Zm9v"}, {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="}, {"foobar", "Zm9vYmFy"}};
  for (const auto& [plain, enc] : vectors) {
    const std::vector<std::uint8_t> bytes(plain.begin(), plain.end());
    CHECK(base64_encode(bytes) == enc);
    CHECK((base64_decode(enc, "x") == bytes));
  }
  std::mt19937 rng(5);
  for (int n = 0; n < 70; ++n) {
    std::vector<std::uint8_t> b(static_cast<std::size_t>(n));
    for (auto& v : b) v = static_cast<std::uint8_t>(rng());
    CHECK((base64_decode(base64_encode(b), "x") == b));
  }
  CHECK((base64_decode("data:image/png;base64,Zm9v", "x") == std::vector<std::uint8_t>{'f', 'o', 'o'}));
  CHECK_THROWS_AS(base64_decode("Zm9v!!!", "image"), MalformedPayload);
}

TEST_CASE("app config: defaults, file values and environment overrides") {
  const auto c = parse_app_config(json::object());
  CHECK(c.model.preset == "toy");
  CHECK((c.model.encoder.widths == model::load_preset("toy").encoder.widths));
  CHECK(c.loss.mask == 20.0);
  CHECK(c.loss.dice == 1.0);
  CHECK(c.loss.iou == 1.0);
  CHECK(c.loss.direct == 0.5);
  CHECK(c.loss.aux == 0.2);
  CHECK((c.eval.clicks == std::vector<int>{1, 3, 5}));

  const json doc = {{"train", {{"lr", 3e-4}, {"stage2_epochs", 7}}},
                    {"loss", {{"aux", 0.0}}},
                    {"model", {{"preset", "small"}, {"encoder", {{"heads", 4}}}, {"variant", "rgb_only"}}},
                    {"data", {{"shapes", {"ellipse"}}, {"count", 12}}}};
  const Environment env{{"DASAM_TRAIN__STAGE2_EPOCHS", "9"},
                        {"DASAM_EVAL__CLICKS", "[1,2]"},
                        {"DASAM_SERVE__HOST", "0.0.0.0"},
                        {"DASAM_MODEL__HEAD__DEPTH", "1"},
                        {"DASAM_CONFIG_DIR", "/ignored"},
                        {"HOME", "/root"}};
  const auto d = parse_app_config(doc, env);
  CHECK(d.train.lr == 3e-4);
  CHECK(d.train.stage2_epochs == 9);  // environment beats the file
  CHECK(d.loss.aux == 0.0);
  CHECK(d.train.weights.aux == 0.0);  // the trainer sees [loss]
  CHECK(d.model.preset == "small");
  CHECK((d.model.encoder.widths == model::load_preset("small").encoder.widths));  // kept from the preset
  CHECK(d.model.encoder.heads == 4);
  CHECK(d.model.head.depth == 1);
  CHECK(d.model.variant == model::Variant::rgb_only);
  CHECK((d.data.scene.shapes == std::vector<data::ShapeKind>{data::ShapeKind::ellipse}));
  CHECK(d.data.count == 12);
  CHECK((d.eval.clicks == std::vector<int>{1, 2}));
  CHECK(d.serve.host == "0.0.0.0");

  // round trip through the effective-config dump
  const auto again = parse_app_config(d.to_json());
  CHECK(again.to_json() == d.to_json());
}

TEST_CASE("app config reports every problem at once") {
  const json doc = {{"train", {{"lr", -1.0}, {"batch_size", 0}, {"bogus", 1}}},
                    {"model", {{"encoder", {{"heads", "four"}}}}},
                    {"loss", {{"mask", -2.0}}},
                    {"eval", {{"clicks", {3, 1}}}},
                    {"serve", {{"port", 70000}}},
                    {"extra", json::object()}};
  const Environment env{{"DASAM_TRAIN__WARMUP_STEPS", "lots"}, {"DASAM_NOPE__X", "1"}};
  try {
    parse_app_config(doc, env);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(has_field(e, "train.lr"));
    CHECK(has_field(e, "train.batch_size"));
    CHECK(has_field(e, "train.bogus: unknown key"));
    CHECK(has_field(e, "model.encoder.heads: expected an integer"));
    CHECK(has_field(e, "loss.mask"));
    CHECK(has_field(e, "eval.clicks"));
    CHECK(has_field(e, "serve.port"));
    CHECK(has_field(e, "extra: unknown section"));
    CHECK(has_field(e, "DASAM_TRAIN__WARMUP_STEPS"));
    CHECK(has_field(e, "DASAM_NOPE__X"));
  }
  CHECK_THROWS_AS(parse_app_config(json{{"model", {{"preset", "galactic"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_app_config(json{{"train", {{"weights", {{"mask", 1.0}}}}}}), ConfigError);
}

TEST_CASE("request parsing reports JSON paths") {
  const auto r = scene();
  const auto good = make_segment_request(r.image, &r.depth, one_point(5, 6), model::Variant::depth_aware);
  const auto parsed = parse_segment_request(good);
  CHECK((parsed.image.pixels == r.image.pixels));  // dataset images are 8-bit already
  REQUIRE(parsed.depth.has_value());
  CHECK((parsed.depth->values == r.depth.values));
  CHECK((parsed.prompts.points == one_point(5, 6).points));
  CHECK(parsed.variant == model::Variant::depth_aware);

  auto field_of = [&](json body) {
    try {
      parse_segment_request(body);
    } catch (const MalformedPayload& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  auto b = good;
  b.erase("image");
  CHECK(field_of(b) == "image");
  b = good;
  b["image"] = "bm90IGEgcG5n";
  CHECK(field_of(b) == "image");
  b = good;
  b["depth"] = 17;
  CHECK(field_of(b) == "depth");
  b = good;
  b["prompts"]["points"][0]["label"] = 2;
  CHECK(field_of(b) == "prompts.points[0].label");
  b = good;
  b["prompts"]["points"][0].erase("y");
  CHECK(field_of(b) == "prompts.points[0].y");
  b = good;
  b["prompts"]["boxes"] = json::array({{{"x_min", 5}, {"y_min", 1}, {"x_max", 5}, {"y_max", 9}}});
  CHECK(field_of(b) == "prompts.boxes[0]");
  b = good;
  b["prompts"] = {{"points", json::array()}};
  CHECK(field_of(b) == "prompts");
  b = good;
  b["variant"] = "thermal";
  CHECK(field_of(b) == "variant");
}

TEST_CASE("scene predictor pads to the stride and crops back") {
  auto m = toy(model::Variant::depth_aware);
  m->eval();
  const auto r = scene(64);
  // divisible input: identical to calling the model directly
  model::ScenePredictor sp(m, r.image, &r.depth);
  const auto p = one_point(20, 30);
  const auto out = sp.predict(p);
  torch::NoGradGuard ng;
  auto rgb = model::image_to_tensor(r.image).unsqueeze(0);
  auto dep = model::depth_to_tensor(data::prepare_depth(r.depth)).unsqueeze(0);
  auto direct = m->predict(m->embed(rgb, dep), p, 64, 64);
  CHECK(torch::equal(out.logits, direct.logits));
  CHECK(out.predicted_iou == direct.predicted_iou);

  // 50 x 70 is not a multiple of 16
  data::RgbImage odd(50, 70);
  data::DepthMap odd_depth(50, 70);
  for (int y = 0; y < 50; ++y)
    for (int x = 0; x < 70; ++x) {
      for (int c = 0; c < 3; ++c) odd.at(y, x, c) = r.image.at(y, x, c);
      odd_depth.at(y, x) = r.depth.at(y, x);
    }
  model::ScenePredictor odd_sp(m, odd, &odd_depth);
  const auto o = odd_sp.predict(one_point(69, 49));
  CHECK(o.logits.size(0) == 50);
  CHECK(o.logits.size(1) == 70);
  CHECK(o.mask.height() == 50);
  CHECK(o.mask.width() == 70);
  CHECK_THROWS_AS(odd_sp.predict(one_point(70, 10)), ContractViolation);
  data::DepthMap wrong(64, 64);
  CHECK_THROWS_AS(model::ScenePredictor(m, odd, &wrong), ContractViolation);
}

TEST_CASE("service endpoints") {
  const auto r = scene();
  SegmentationService loading;
  loading.add_model("m", toy(model::Variant::rgb_only));
  CHECK(loading.healthz().status == 503);
  CHECK(loading.segment("{}").status == 503);
  CHECK(loading.model_info().status == 503);

  const auto svc = make_service();
  CHECK(svc->healthz().status == 200);
  CHECK(svc->healthz().body["status"] == "ok");

  const auto info = svc->model_info();
  REQUIRE(info.status == 200);
  auto dep = toy(model::Variant::depth_aware);
  CHECK(info.body["params"].get<std::int64_t>() == model::count_parameters(*dep));
  CHECK(info.body["macs"].get<std::int64_t>() == model::estimate_macs(dep, 128, 128));
  CHECK(info.body["preset"] == "toy");
  CHECK(info.body["alpha"].get<double>() == doctest::Approx(0.1));
  CHECK(info.body["models"].size() == 2);
  CHECK(svc->model_info("rgb_only").body["alpha"].is_null());
  CHECK(svc->model_info("nope").status == 404);

  SUBCASE("missing depth falls back to zeros with a warning") {
    const auto res = svc->segment(make_segment_request(r.image, nullptr, one_point(10, 10)).dump());
    REQUIRE(res.status == 200);
    CHECK(res.body["variant"] == "depth_aware");
    REQUIRE(res.body["warnings"].size() == 1);
    CHECK(res.body["warnings"][0].get<std::string>().rfind("depth_missing", 0) == 0);
    CHECK(res.body["alpha"].get<double>() == doctest::Approx(0.1));
    const double piou = res.body["predicted_iou"].get<double>();
    CHECK(piou >= 0.0);
    CHECK(piou <= 1.0);
    const auto mask = mask_from_json(res.body["mask"]);
    CHECK(mask.height() == 64);
    CHECK(mask.width() == 64);
    // same as an explicit all-zero depth map
    model::ScenePredictor zero(toy(model::Variant::depth_aware), r.image, nullptr);
    CHECK((mask == zero.predict(one_point(10, 10)).mask));
  }
  SUBCASE("identical requests give identical masks") {
    model::PromptSet p = one_point(12, 40);
    p.points.push_back({30, 30, model::PointLabel::background});
    const auto body = make_segment_request(r.image, &r.depth, p).dump();
    const auto a = svc->segment(body), b = svc->segment(body);
    REQUIRE(a.status == 200);
    CHECK(a.body["mask"] == b.body["mask"]);
    CHECK(a.body["predicted_iou"] == b.body["predicted_iou"]);
    CHECK(a.body["warnings"].empty());
  }
  SUBCASE("variant and model selection") {
    auto res = svc->segment(make_segment_request(r.image, &r.depth, one_point(3, 3), model::Variant::rgb_only).dump());
    REQUIRE(res.status == 200);
    CHECK(res.body["model_id"] == "rgb_only");
    CHECK(res.body["alpha"].is_null());
    CHECK(res.body["warnings"][0].get<std::string>().rfind("depth_ignored", 0) == 0);
    res = svc->segment(make_segment_request(r.image, &r.depth, one_point(3, 3), std::nullopt, "missing").dump());
    CHECK(res.status == 404);
    CHECK(error_field(res) == "model_id");
    res = svc->segment(
        make_segment_request(r.image, &r.depth, one_point(3, 3), model::Variant::depth_aware, "rgb_only").dump());
    CHECK(res.status == 400);
    CHECK(error_field(res) == "variant");
  }
  SUBCASE("error statuses") {
    CHECK(svc->segment("{not json").status == 400);
    auto res = svc->segment(make_segment_request(r.image, &r.depth, one_point(64, 3)).dump());
    CHECK(res.status == 422);
    CHECK(error_field(res) == "prompts.points[0]");
    model::PromptSet box;
    box.boxes.push_back({10, 10, 65, 20});
    res = svc->segment(make_segment_request(r.image, &r.depth, box).dump());
    CHECK(res.status == 422);
    CHECK(error_field(res) == "prompts.boxes[0]");
    data::DepthMap small(32, 32);
    res = svc->segment(make_segment_request(r.image, &small, one_point(3, 3)).dump());
    CHECK(res.status == 422);
    CHECK(error_field(res) == "depth");
    auto body = make_segment_request(r.image, &r.depth, one_point(3, 3));
    body["prompts"]["points"][0]["x"] = "three";
    res = svc->segment(body.dump());
    CHECK(res.status == 400);
    CHECK(error_field(res) == "prompts.points[0].x");
  }
}

TEST_CASE("HTTP server matches the in-process handler") {
  const auto svc = make_service();
  HttpServer server(svc, ServerOptions{"127.0.0.1", 0, 4});
  const int port = server.bind();
  std::thread t([&] { server.listen(); });
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(60, 0);

  const auto r = scene();
  const auto body = make_segment_request(r.image, &r.depth, one_point(20, 20)).dump();
  const auto expected = svc->segment(body);

  auto res = client.Post("/segment", body, "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["mask"] == expected.body["mask"]);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");

  res = client.Get("/healthz");
  REQUIRE(res);
  CHECK(res->status == 200);
  res = client.Get("/model-info?model_id=rgb_only");
  REQUIRE(res);
  CHECK(json::parse(res->body)["variant"] == "rgb_only");
  res = client.Get("/nowhere");
  REQUIRE(res);
  CHECK(res->status == 404);
  CHECK(json::parse(res->body).contains("error"));
  res = client.Post("/segment", "[]", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);

  // concurrent requests are independent
  std::vector<std::future<std::string>> futures;
  for (int i = 0; i < 6; ++i) {
    futures.push_back(std::async(std::launch::async, [&] {
      httplib::Client c("127.0.0.1", port);
      c.set_read_timeout(60, 0);
      auto rr = c.Post("/segment", body, "application/json");
      return rr ? json::parse(rr->body)["mask"].dump() : std::string("no response");
    }));
  }
  for (auto& f : futures) CHECK(f.get() == expected.body["mask"].dump());

  server.stop();
  t.join();
}
