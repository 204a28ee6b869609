#include "dasam/service/service.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>

#include "dasam/data/dataset_io.hpp"
#include "dasam/data/rle.hpp"
#include "dasam/error.hpp"
#include "dasam/model/accounting.hpp"
#include "httplib.h"

namespace dasam::service {

using json = nlohmann::json;
using model::PointLabel;
using model::PromptBox;
using model::PromptPoint;

std::vector<std::uint8_t> base64_decode(const std::string& text, const std::string& field) {
  std::string s = text;
  if (s.rfind("data:", 0) == 0) {
    const auto comma = s.find(',');
    if (comma == std::string::npos) throw MalformedPayload(field, "data URL without a comma");
    s.erase(0, comma + 1);
  }
  std::vector<std::uint8_t> out(3 * (s.size() / 4) + 3);
  auto* ctx = EVP_ENCODE_CTX_new();
  EVP_DecodeInit(ctx);
  int n = 0, tail = 0;
  const int rc = EVP_DecodeUpdate(ctx, out.data(), &n, reinterpret_cast<const unsigned char*>(s.data()),
                                  static_cast<int>(s.size()));
  const int rf = rc < 0 ? -1 : EVP_DecodeFinal(ctx, out.data() + n, &tail);
  EVP_ENCODE_CTX_free(ctx);
  if (rc < 0 || rf < 0) throw MalformedPayload(field, "not valid base64");
  out.resize(static_cast<std::size_t>(n + tail));
  return out;
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

namespace {

double number_at(const json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key)) throw MalformedPayload(path + "." + key, "required");
  const auto& v = obj.at(key);
  if (!v.is_number()) throw MalformedPayload(path + "." + key, "must be a number");
  return v.get<double>();
}

PointLabel label_from(const json& v, const std::string& path) {
  if (v.is_number_integer()) {
    const auto i = v.get<long long>();
    if (i == 0) return PointLabel::background;
    if (i == 1) return PointLabel::foreground;
  } else if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "background") return PointLabel::background;
    if (s == "foreground") return PointLabel::foreground;
  }
  throw MalformedPayload(path, "must be 1, 0, \"foreground\" or \"background\"");
}

}  // namespace

SegmentRequest parse_segment_request(const json& body) {
  if (!body.is_object()) throw MalformedPayload("", "request body must be a JSON object");
  SegmentRequest r;

  if (!body.contains("image")) throw MalformedPayload("image", "required");
  if (!body.at("image").is_string()) throw MalformedPayload("image", "must be a base64 string");
  try {
    r.image = data::decode_image(base64_decode(body.at("image").get<std::string>(), "image"));
  } catch (const MalformedPayload& e) {
    throw MalformedPayload("image", e.what());
  }

  if (body.contains("depth") && !body.at("depth").is_null()) {
    if (!body.at("depth").is_string()) throw MalformedPayload("depth", "must be a base64 string");
    try {
      r.depth = data::decode_depth(base64_decode(body.at("depth").get<std::string>(), "depth"));
    } catch (const MalformedPayload& e) {
      throw MalformedPayload("depth", e.what());
    }
  }

  if (!body.contains("prompts")) throw MalformedPayload("prompts", "required");
  const auto& p = body.at("prompts");
  if (!p.is_object()) throw MalformedPayload("prompts", "must be an object");
  if (p.contains("points")) {
    const auto& pts = p.at("points");
    if (!pts.is_array()) throw MalformedPayload("prompts.points", "must be an array");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto path = "prompts.points[" + std::to_string(i) + "]";
      if (!pts[i].is_object()) throw MalformedPayload(path, "must be an object");
      PromptPoint pt;
      pt.x = number_at(pts[i], "x", path);
      pt.y = number_at(pts[i], "y", path);
      pt.label = pts[i].contains("label") ? label_from(pts[i].at("label"), path + ".label") : PointLabel::foreground;
      r.prompts.points.push_back(pt);
    }
  }
  if (p.contains("boxes")) {
    const auto& bxs = p.at("boxes");
    if (!bxs.is_array()) throw MalformedPayload("prompts.boxes", "must be an array");
    for (std::size_t i = 0; i < bxs.size(); ++i) {
      const auto path = "prompts.boxes[" + std::to_string(i) + "]";
      if (!bxs[i].is_object()) throw MalformedPayload(path, "must be an object");
      PromptBox b;
      b.x_min = number_at(bxs[i], "x_min", path);
      b.y_min = number_at(bxs[i], "y_min", path);
      b.x_max = number_at(bxs[i], "x_max", path);
      b.y_max = number_at(bxs[i], "y_max", path);
      if (!(b.x_min < b.x_max && b.y_min < b.y_max)) throw MalformedPayload(path, "box must have x_min < x_max and y_min < y_max");
      r.prompts.boxes.push_back(b);
    }
  }
  if (r.prompts.empty()) throw MalformedPayload("prompts", "at least one point or box is required");

  if (body.contains("variant") && !body.at("variant").is_null()) {
    const auto& v = body.at("variant");
    const auto s = v.is_string() ? v.get<std::string>() : std::string();
    if (s == "rgb_only") {
      r.variant = model::Variant::rgb_only;
    } else if (s == "depth_aware") {
      r.variant = model::Variant::depth_aware;
    } else {
      throw MalformedPayload("variant", "must be \"rgb_only\" or \"depth_aware\"");
    }
  }
  if (body.contains("model_id") && !body.at("model_id").is_null()) {
    if (!body.at("model_id").is_string()) throw MalformedPayload("model_id", "must be a string");
    r.model_id = body.at("model_id").get<std::string>();
  }
  return r;
}

json make_segment_request(const data::RgbImage& image, const data::DepthMap* depth, const model::PromptSet& prompts,
                          std::optional<model::Variant> variant, std::optional<std::string> model_id) {
  json j;
  j["image"] = base64_encode(data::encode_png(image));
  if (depth) j["depth"] = base64_encode(data::encode_depth_binary(*depth));
  json pts = json::array(), bxs = json::array();
  for (const auto& p : prompts.points) pts.push_back({{"x", p.x}, {"y", p.y}, {"label", static_cast<int>(p.label)}});
  for (const auto& b : prompts.boxes)
    bxs.push_back({{"x_min", b.x_min}, {"y_min", b.y_min}, {"x_max", b.x_max}, {"y_max", b.y_max}});
  j["prompts"] = {{"points", pts}, {"boxes", bxs}};
  if (variant) j["variant"] = model::to_string(*variant);
  if (model_id) j["model_id"] = *model_id;
  return j;
}

json mask_to_json(const data::InstanceMask& mask) {
  const auto rle = data::encode_rle(mask);
  return json{{"size", {rle.height, rle.width}}, {"counts", data::rle_counts_to_string(rle.counts)}};
}

data::InstanceMask mask_from_json(const json& j) {
  try {
    const int h = j.at("size").at(0).get<int>();
    const int w = j.at("size").at(1).get<int>();
    return data::decode_rle(data::rle_counts_from_string(j.at("counts").get<std::string>()), h, w);
  } catch (const json::exception& e) {
    throw MalformedPayload("mask", e.what());
  }
}

HttpResponse error_response(int status, const std::string& field, const std::string& message) {
  return HttpResponse{status, json{{"error", {{"status", status}, {"field", field}, {"message", message}}}}};
}

void SegmentationService::add_model(const std::string& id, model::SegmentationModel m) {
  for (const auto& e : models_)
    if (e->id == id) throw ContractViolation("add_model: duplicate model id '" + id + "'");
  m->eval();
  auto e = std::make_unique<Entry>();
  e->id = id;
  e->parameters = model::count_parameters(*m);
  e->macs = model::estimate_macs(m, m->config().image_size, m->config().image_size);
  e->model = std::move(m);
  models_.push_back(std::move(e));
}

json SegmentationService::describe(const Entry& e) {
  const auto& m = e.model;
  return json{{"model_id", e.id},
              {"variant", model::to_string(m->variant())},
              {"preset", m->config().preset},
              {"params", e.parameters},
              {"macs", e.macs},
              {"image_size", m->config().image_size},
              {"alpha", m->depth_aware() ? json(m->alpha_value()) : json(nullptr)}};
}

const SegmentationService::Entry* SegmentationService::find(const std::optional<std::string>& id,
                                                            std::optional<model::Variant> variant,
                                                            HttpResponse& err) const {
  if (id) {
    for (const auto& e : models_) {
      if (e->id != *id) continue;
      if (variant && e->model->variant() != *variant) {
        err = error_response(400, "variant", "model '" + *id + "' is " + model::to_string(e->model->variant()));
        return nullptr;
      }
      return e.get();
    }
    err = error_response(404, "model_id", "no model with id '" + *id + "'");
    return nullptr;
  }
  for (const auto& e : models_)
    if (!variant || e->model->variant() == *variant) return e.get();
  if (!variant) {
    err = error_response(503, "", "no model is loaded");
    return nullptr;
  }
  err = error_response(404, "variant", "no " + model::to_string(*variant) + " model is loaded");
  return nullptr;
}

HttpResponse SegmentationService::healthz() const {
  if (!ready()) return HttpResponse{503, json{{"status", "loading"}}};
  json ids = json::array();
  for (const auto& e : models_) ids.push_back(e->id);
  return HttpResponse{200, json{{"status", "ok"}, {"models", ids}}};
}

HttpResponse SegmentationService::model_info(const std::optional<std::string>& model_id) const {
  if (!ready()) return error_response(503, "", "models are loading");
  HttpResponse err;
  const Entry* e = find(model_id, std::nullopt, err);
  if (!e) return err;
  json body = describe(*e);
  json all = json::array();
  for (const auto& m : models_) all.push_back(describe(*m));
  body["models"] = all;
  return HttpResponse{200, body};
}

HttpResponse SegmentationService::segment(const std::string& text) const {
  const auto t0 = std::chrono::steady_clock::now();
  if (!ready()) return error_response(503, "", "models are loading");

  SegmentRequest req;
  try {
    req = parse_segment_request(json::parse(text));
  } catch (const json::parse_error& e) {
    return error_response(400, "", std::string("body is not valid JSON: ") + e.what());
  } catch (const MalformedPayload& e) {
    return error_response(400, e.field(), e.what());
  } catch (const Error& e) {
    return error_response(400, "", e.what());
  }

  HttpResponse err;
  const Entry* entry = find(req.model_id, req.variant, err);
  if (!entry) return err;

  const int h = req.image.height, w = req.image.width;
  try {
    req.image.validate();
  } catch (const ContractViolation& e) {
    return error_response(422, "image", e.what());
  }
  for (std::size_t i = 0; i < req.prompts.points.size(); ++i) {
    const auto& p = req.prompts.points[i];
    if (!(p.x >= 0 && p.x < w && p.y >= 0 && p.y < h)) {
      return error_response(422, "prompts.points[" + std::to_string(i) + "]",
                            "point outside the " + std::to_string(w) + "x" + std::to_string(h) + " image");
    }
  }
  for (std::size_t i = 0; i < req.prompts.boxes.size(); ++i) {
    const auto& b = req.prompts.boxes[i];
    if (!(b.x_min >= 0 && b.y_min >= 0 && b.x_max <= w && b.y_max <= h)) {
      return error_response(422, "prompts.boxes[" + std::to_string(i) + "]",
                            "box outside the " + std::to_string(w) + "x" + std::to_string(h) + " image");
    }
  }
  if (req.depth && (req.depth->height != h || req.depth->width != w)) {
    return error_response(422, "depth",
                          "depth is " + std::to_string(req.depth->width) + "x" + std::to_string(req.depth->height) +
                              " but the image is " + std::to_string(w) + "x" + std::to_string(h));
  }

  const auto& m = entry->model;
  json warnings = json::array();
  model::Inference out;
  try {
    const bool use_depth = m->depth_aware() && req.depth;
    model::ScenePredictor scene(m, req.image, use_depth ? &*req.depth : nullptr);
    if (m->depth_aware() && !req.depth) {
      warnings.push_back("depth_missing: no depth supplied, using all-zero depth");
    } else if (m->depth_aware() && scene.depth_degenerate()) {
      warnings.push_back("depth_constant: depth map is constant, normalized to all zeros");
    } else if (!m->depth_aware() && req.depth) {
      warnings.push_back("depth_ignored: rgb_only model does not use depth");
    }
    out = scene.predict(req.prompts);
  } catch (const ContractViolation& e) {
    return error_response(422, "prompts", e.what());
  }

  json body;
  body["mask"] = mask_to_json(out.mask);
  body["predicted_iou"] = std::clamp(out.predicted_iou, 0.0, 1.0);
  body["alpha"] = m->depth_aware() ? json(m->alpha_value()) : json(nullptr);
  body["model_id"] = entry->id;
  body["variant"] = model::to_string(m->variant());
  body["warnings"] = warnings;
  body["timing_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return HttpResponse{200, body};
}

struct HttpServer::Impl {
  std::shared_ptr<SegmentationService> service;
  ServerOptions options;
  httplib::Server server;
};

namespace {

void send(httplib::Response& res, const HttpResponse& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

}  // namespace

HttpServer::HttpServer(std::shared_ptr<SegmentationService> service, ServerOptions options)
    : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  impl_->options = options;
  auto& s = impl_->server;
  const int threads = std::max(1, options.threads);
  s.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
  s.set_payload_max_length(64u << 20);
  // the browser UI may be served from another origin
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Headers", "Content-Type"},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  auto* svc = impl_->service.get();
  s.Post("/segment", [svc](const httplib::Request& req, httplib::Response& res) { send(res, svc->segment(req.body)); });
  s.Get("/healthz", [svc](const httplib::Request&, httplib::Response& res) { send(res, svc->healthz()); });
  s.Get("/model-info", [svc](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> id;
    if (req.has_param("model_id")) id = req.get_param_value("model_id");
    send(res, svc->model_info(id));
  });
  s.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    send(res, error_response(res.status, "", "no route for " + req.method + " " + req.path));
  });
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string msg = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      msg = e.what();
    } catch (...) {
    }
    send(res, error_response(500, "", msg));
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  auto& s = impl_->server;
  if (impl_->options.port == 0) {
    const int port = s.bind_to_any_port(impl_->options.host);
    if (port < 0) throw Error("cannot bind " + impl_->options.host);
    return port;
  }
  if (!s.bind_to_port(impl_->options.host, impl_->options.port)) {
    throw Error("cannot bind " + impl_->options.host + ":" + std::to_string(impl_->options.port));
  }
  return impl_->options.port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace dasam::service
