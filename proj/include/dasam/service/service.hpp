#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "dasam/model/inference.hpp"
#include "dasam/model/segmentation_model.hpp"
#include "json.hpp"

namespace dasam::service {

/// Standard base64 (RFC 4648). A leading "data:...;base64," prefix and
/// embedded whitespace are accepted on decode. Throws MalformedPayload.
std::vector<std::uint8_t> base64_decode(const std::string& text, const std::string& field);
std::string base64_encode(const std::vector<std::uint8_t>& bytes);

struct HttpResponse {
  int status = 200;
  nlohmann::json body;
};

/// Parsed POST /segment body.
struct SegmentRequest {
  data::RgbImage image;
  std::optional<data::DepthMap> depth;
  model::PromptSet prompts;
  std::optional<model::Variant> variant;
  std::optional<std::string> model_id;
};

/// Request body -> SegmentRequest. Structural problems raise
/// MalformedPayload whose field() is a JSON path such as
/// "prompts.points[2].label". Bounds are not checked here.
SegmentRequest parse_segment_request(const nlohmann::json& body);

/// Inverse of parse_segment_request, for clients and tests.
nlohmann::json make_segment_request(const data::RgbImage& image, const data::DepthMap* depth,
                                    const model::PromptSet& prompts, std::optional<model::Variant> variant = {},
                                    std::optional<std::string> model_id = {});

/// Mask as {"size": [H, W], "counts": compressed RLE string}.
nlohmann::json mask_to_json(const data::InstanceMask& mask);
data::InstanceMask mask_from_json(const nlohmann::json& j);

/// Stateless segmentation endpoints over a set of read-only models.
///
/// Every request carries its full prompt history; nothing is kept between
/// requests, so handlers may run concurrently. Until mark_ready() is called
/// /segment and /model-info answer 503.
class SegmentationService {
 public:
  /// The first model added is the default. Ids must be unique.
  void add_model(const std::string& id, model::SegmentationModel model);
  void mark_ready() { ready_.store(true); }
  bool ready() const { return ready_.load(); }

  HttpResponse segment(const std::string& body) const;
  HttpResponse healthz() const;
  /// All models, plus the default (or `model_id`) model's fields at top level.
  HttpResponse model_info(const std::optional<std::string>& model_id = std::nullopt) const;

 private:
  struct Entry {
    std::string id;
    model::SegmentationModel model{nullptr};
    std::int64_t parameters = 0;
    std::int64_t macs = 0;
  };
  const Entry* find(const std::optional<std::string>& id, std::optional<model::Variant> variant, HttpResponse& err) const;
  static nlohmann::json describe(const Entry& e);

  std::vector<std::unique_ptr<Entry>> models_;
  std::atomic<bool> ready_{false};
};

/// Error body: {"error": {"status", "field", "message"}}.
HttpResponse error_response(int status, const std::string& field, const std::string& message);

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  int threads = 4;
};

/// Blocking HTTP/1.1 server exposing POST /segment, GET /healthz and
/// GET /model-info on top of a service.
class HttpServer {
 public:
  HttpServer(std::shared_ptr<SegmentationService> service, ServerOptions options);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds (port 0 picks a free port) and returns the bound port.
  int bind();
  /// Serves until stop(); call bind() first.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dasam::service
