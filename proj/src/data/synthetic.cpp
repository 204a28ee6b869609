#include "dasam/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dasam/data/random.hpp"
#include "dasam/error.hpp"

namespace dasam::data {
namespace {

double bounding_radius(const SceneObject& o) {
  if (o.kind == ShapeKind::ellipse) return std::max(o.half_width, o.half_height);
  return std::hypot(o.half_width, o.half_height);
}

float quantize8(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<float>(std::lround(c * 255.0)) / 255.0f;
}

double clamp_center(double c, double r, int extent) {
  if (2.0 * r >= extent) return extent / 2.0;
  return std::clamp(c, r, extent - r);
}

}  // namespace

void to_json(nlohmann::json& j, const SyntheticSceneConfig& c) {
  std::vector<std::string> shapes;
  for (auto k : c.shapes) shapes.push_back(to_string(k));
  j = nlohmann::json{{"height", c.height},
                     {"width", c.width},
                     {"min_objects", c.min_objects},
                     {"max_objects", c.max_objects},
                     {"shapes", shapes},
                     {"occlusion_prob", c.occlusion_prob},
                     {"texture_noise", c.texture_noise},
                     {"seed", c.seed},
                     {"min_extent", c.min_extent},
                     {"max_extent", c.max_extent},
                     {"color_contrast", c.color_contrast},
                     {"depth_gradient", c.depth_gradient},
                     {"min_visible_area", c.min_visible_area}};
}

void from_json(const nlohmann::json& j, SyntheticSceneConfig& c) {
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.min_objects = j.value("min_objects", c.min_objects);
  c.max_objects = j.value("max_objects", c.max_objects);
  if (j.contains("shapes")) {
    std::vector<ShapeKind> kinds;
    for (const auto& s : j.at("shapes")) {
      try {
        kinds.push_back(shape_kind_from_string(s.get<std::string>()));
      } catch (const MalformedPayload& e) {
        throw ConfigError({std::string("data.shapes: ") + e.what()});
      }
    }
    c.shapes = std::move(kinds);
  }
  c.occlusion_prob = j.value("occlusion_prob", c.occlusion_prob);
  c.texture_noise = j.value("texture_noise", c.texture_noise);
  c.seed = j.value("seed", c.seed);
  c.min_extent = j.value("min_extent", c.min_extent);
  c.max_extent = j.value("max_extent", c.max_extent);
  c.color_contrast = j.value("color_contrast", c.color_contrast);
  c.depth_gradient = j.value("depth_gradient", c.depth_gradient);
  c.min_visible_area = j.value("min_visible_area", c.min_visible_area);
}

void SyntheticSceneConfig::validate() const {
  std::vector<std::string> bad;
  if (height < 16) bad.push_back("data.height: must be >= 16");
  if (width < 16) bad.push_back("data.width: must be >= 16");
  if (min_objects < 1) bad.push_back("data.min_objects: must be >= 1");
  if (max_objects < min_objects) bad.push_back("data.max_objects: must be >= min_objects");
  if (shapes.empty()) bad.push_back("data.shapes: at least one shape kind required");
  if (!(occlusion_prob >= 0.0 && occlusion_prob <= 1.0)) bad.push_back("data.occlusion_prob: must be in [0,1]");
  if (!(texture_noise >= 0.0 && texture_noise <= 1.0)) bad.push_back("data.texture_noise: must be in [0,1]");
  if (!(color_contrast >= 0.0 && color_contrast <= 1.0)) bad.push_back("data.color_contrast: must be in [0,1]");
  if (!(depth_gradient >= 0.0 && depth_gradient < 1.0)) bad.push_back("data.depth_gradient: must be in [0,1)");
  if (!(min_extent >= 2.0)) bad.push_back("data.min_extent: must be >= 2");
  if (!(max_extent >= min_extent)) bad.push_back("data.max_extent: must be >= min_extent");
  if (max_extent > std::min(height, width)) {
    bad.push_back("data.max_extent: objects of extent " + std::to_string(max_extent) + " cannot fit a " +
                  std::to_string(height) + "x" + std::to_string(width) + " canvas");
  }
  if (min_visible_area < 1) bad.push_back("data.min_visible_area: must be >= 1");
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

bool shape_contains(const SceneObject& o, double px, double py) {
  const double dx = px - o.center_x;
  const double dy = py - o.center_y;
  const double c = std::cos(o.angle);
  const double s = std::sin(o.angle);
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  switch (o.kind) {
    case ShapeKind::ellipse: {
      const double u = lx / o.half_width;
      const double v = ly / o.half_height;
      return u * u + v * v <= 1.0;
    }
    case ShapeKind::rectangle:
      return std::abs(lx) <= o.half_width && std::abs(ly) <= o.half_height;
    case ShapeKind::triangle: {
      // Apex at (0, -hh), base from (-hw, hh) to (hw, hh).
      if (ly > o.half_height || ly < -o.half_height) return false;
      const double t = (ly + o.half_height) / (2.0 * o.half_height);
      return std::abs(lx) <= o.half_width * t;
    }
  }
  return false;
}

InstanceMask rasterize_silhouette(const SceneObject& object, int height, int width) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(height) * width, 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (shape_contains(object, x + 0.5, y + 0.5)) bits[static_cast<std::size_t>(y) * width + x] = 1;
    }
  }
  return InstanceMask::from_bitmap(height, width, std::move(bits));
}

namespace {

DatasetRecord render_scene(const SyntheticSceneConfig& config, std::uint64_t seed, std::uint64_t attempt) {
  Rng rng(attempt == 0 ? mix_seed({config.seed, seed}) : mix_seed({config.seed, seed, attempt}));
  const int H = config.height;
  const int W = config.width;

  const int n = static_cast<int>(uniform_int(rng, config.min_objects, config.max_objects));
  std::array<double, 3> background{};
  for (auto& c : background) c = uniform(rng, 0.25, 0.75);

  std::vector<SceneObject> objects;
  objects.reserve(n);
  const double log_lo = std::log(config.min_extent);
  const double log_hi = std::log(config.max_extent);
  for (int i = 0; i < n; ++i) {
    SceneObject o;
    o.kind = config.shapes[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(config.shapes.size()) - 1))];
    const double extent = std::exp(uniform(rng, log_lo, log_hi));
    const double aspect = std::sqrt(uniform(rng, 0.6, 1.6));
    o.half_width = std::clamp(extent * aspect, config.min_extent, config.max_extent) / 2.0;
    o.half_height = std::clamp(extent / aspect, config.min_extent, config.max_extent) / 2.0;
    o.angle = o.kind == ShapeKind::rectangle && bernoulli(rng, 0.5) ? 0.0 : uniform(rng, 0.0, std::numbers::pi);
    const double r = bounding_radius(o);

    const bool overlap = i > 0 && bernoulli(rng, config.occlusion_prob);
    if (overlap) {
      const auto& other = objects[static_cast<std::size_t>(uniform_int(rng, 0, i - 1))];
      const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double reach = uniform(rng, 0.2, 0.7) * (std::min(other.half_width, other.half_height) +
                                                     std::min(o.half_width, o.half_height));
      o.center_x = clamp_center(other.center_x + reach * std::cos(theta), r, W);
      o.center_y = clamp_center(other.center_y + reach * std::sin(theta), r, H);
    } else {
      for (int attempt = 0; attempt < 32; ++attempt) {
        o.center_x = clamp_center(uniform(rng, 0.0, W), r, W);
        o.center_y = clamp_center(uniform(rng, 0.0, H), r, H);
        const bool clear = std::none_of(objects.begin(), objects.end(), [&](const SceneObject& p) {
          return std::hypot(p.center_x - o.center_x, p.center_y - o.center_y) < r + bounding_radius(p);
        });
        if (clear) break;
      }
    }
    for (std::size_t c = 0; c < 3; ++c) {
      o.color[c] = static_cast<float>(std::clamp(
          background[c] + uniform(rng, -config.color_contrast, config.color_contrast), 0.0, 1.0));
    }
    objects.push_back(o);
  }

  // Random permutation of layers 1..n.
  std::vector<int> layers(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) layers[static_cast<std::size_t>(i)] = i + 1;
  for (int i = n - 1; i > 0; --i) {
    std::swap(layers[static_cast<std::size_t>(i)], layers[static_cast<std::size_t>(uniform_int(rng, 0, i))]);
  }
  for (int i = 0; i < n; ++i) objects[static_cast<std::size_t>(i)].layer = layers[static_cast<std::size_t>(i)];

  DatasetRecord record;
  record.id = "scene-" + std::to_string(seed);
  record.depth = DepthMap(H, W, DepthSource::synthetic_ground_truth);
  std::vector<int> owner(static_cast<std::size_t>(H) * W, -1);
  const float background_depth = static_cast<float>(n + 1);
  std::fill(record.depth.values.begin(), record.depth.values.end(), background_depth);

  for (int i = 0; i < n; ++i) {
    const auto& o = objects[static_cast<std::size_t>(i)];
    const double r = bounding_radius(o);
    const int y0 = std::max(0, static_cast<int>(std::floor(o.center_y - r)));
    const int y1 = std::min(H - 1, static_cast<int>(std::ceil(o.center_y + r)));
    const int x0 = std::max(0, static_cast<int>(std::floor(o.center_x - r)));
    const int x1 = std::min(W - 1, static_cast<int>(std::ceil(o.center_x + r)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (!shape_contains(o, x + 0.5, y + 0.5)) continue;
        const double t = std::clamp((y + 0.5 - (o.center_y - r)) / (2.0 * r), 0.0, 0.999);
        const auto d = static_cast<float>(o.layer + config.depth_gradient * t);
        const auto idx = static_cast<std::size_t>(y) * W + x;
        if (d < record.depth.values[idx]) {
          record.depth.values[idx] = d;
          owner[idx] = i;
        }
      }
    }
  }

  record.image = RgbImage(H, W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const int who = owner[static_cast<std::size_t>(y) * W + x];
      for (int c = 0; c < 3; ++c) {
        const double base = who < 0 ? background[static_cast<std::size_t>(c)]
                                    : objects[static_cast<std::size_t>(who)].color[static_cast<std::size_t>(c)];
        const double noise = uniform(rng, -config.texture_noise, config.texture_noise);
        record.image.at(y, x, c) = quantize8(base + noise);
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(H) * W, 0);
    long area = 0;
    for (std::size_t p = 0; p < bits.size(); ++p) {
      if (owner[p] == i) {
        bits[p] = 1;
        ++area;
      }
    }
    if (area < config.min_visible_area) continue;
    record.masks.push_back(InstanceMask::from_bitmap(H, W, std::move(bits)));
    record.mask_object.push_back(i);
  }
  record.objects = std::move(objects);
  return record;
}

}  // namespace

DatasetRecord generate_synthetic_scene(const SyntheticSceneConfig& config, std::uint64_t seed) {
  config.validate();
  // A draw can leave every object below min_visible_area; redraw in that case.
  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    auto record = render_scene(config, seed, attempt);
    if (!record.masks.empty()) return record;
  }
  throw ConfigError({"data.min_visible_area: no object reaches the minimum visible area"});
}

}  // namespace dasam::data
