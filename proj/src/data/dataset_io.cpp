#include "dasam/data/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dasam/data/rle.hpp"
#include "dasam/error.hpp"
#include "json.hpp"

namespace dasam::data {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr char kDepthMagic[4] = {'D', 'P', 'T', 'H'};
constexpr std::uint32_t kDepthVersion = 1;
constexpr std::size_t kDepthHeader = 20;

static_assert(std::endian::native == std::endian::little, "depth codec assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  return v;
}

RgbImage from_bgr_mat(const cv::Mat& bgr) {
  cv::Mat rgb;
  if (bgr.channels() == 1) {
    cv::cvtColor(bgr, rgb, cv::COLOR_GRAY2RGB);
  } else if (bgr.channels() == 4) {
    cv::cvtColor(bgr, rgb, cv::COLOR_BGRA2RGB);
  } else {
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  }
  const double scale = rgb.depth() == CV_16U ? 65535.0 : 255.0;
  RgbImage img(rgb.rows, rgb.cols);
  for (int y = 0; y < rgb.rows; ++y) {
    for (int x = 0; x < rgb.cols; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = rgb.depth() == CV_16U ? rgb.at<cv::Vec<std::uint16_t, 3>>(y, x)[c]
                                               : rgb.at<cv::Vec3b>(y, x)[c];
        img.at(y, x, c) = static_cast<float>(v / scale);
      }
    }
  }
  return img;
}

cv::Mat to_bgr_mat(const RgbImage& image) {
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      auto& px = bgr.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(y, x, c), 0.0f, 1.0f);
        px[2 - c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  return bgr;
}

json mask_to_json(const InstanceMask& m, int object) {
  const auto rle = encode_rle(m);
  json j;
  j["segmentation"] = {{"size", {m.height(), m.width()}}, {"counts", rle_counts_to_string(rle.counts)}};
  const auto& b = m.bbox();
  j["bbox"] = {b.x_min, b.y_min, b.x_max, b.y_max};
  j["area"] = m.area();
  if (object >= 0) j["object"] = object;
  return j;
}

json object_to_json(const SceneObject& o) {
  return json{{"shape", to_string(o.kind)},
              {"center", {o.center_x, o.center_y}},
              {"half_size", {o.half_width, o.half_height}},
              {"angle", o.angle},
              {"layer", o.layer},
              {"color", {o.color[0], o.color[1], o.color[2]}}};
}

SceneObject object_from_json(const json& j) {
  SceneObject o;
  o.kind = shape_kind_from_string(j.at("shape").get<std::string>());
  o.center_x = j.at("center").at(0).get<double>();
  o.center_y = j.at("center").at(1).get<double>();
  o.half_width = j.at("half_size").at(0).get<double>();
  o.half_height = j.at("half_size").at(1).get<double>();
  o.angle = j.at("angle").get<double>();
  o.layer = j.at("layer").get<int>();
  for (std::size_t c = 0; c < 3; ++c) o.color[c] = j.at("color").at(c).get<float>();
  return o;
}

}  // namespace

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError(path.string(), 0, "cannot open file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".png", to_bgr_mat(image), buf)) throw Error("PNG encoding failed");
  return buf;
}

RgbImage decode_image(const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty()) throw MalformedPayload("image", "empty image payload");
  const cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
  const cv::Mat decoded = cv::imdecode(raw, cv::IMREAD_UNCHANGED);
  if (decoded.empty()) throw MalformedPayload("image", "not a decodable raster image");
  return from_bgr_mat(decoded);
}

void write_png(const fs::path& path, const RgbImage& image) { write_bytes(path, encode_png(image)); }

RgbImage read_image(const fs::path& path) {
  try {
    return decode_image(read_bytes(path));
  } catch (const MalformedPayload& e) {
    throw IngestionError(path.string(), 0, e.what());
  }
}

std::vector<std::uint8_t> encode_depth_binary(const DepthMap& depth, DepthDtype dtype) {
  std::vector<std::uint8_t> out(kDepthMagic, kDepthMagic + 4);
  put_u32(out, kDepthVersion);
  put_u32(out, static_cast<std::uint32_t>(depth.height));
  put_u32(out, static_cast<std::uint32_t>(depth.width));
  put_u32(out, static_cast<std::uint32_t>(dtype));
  for (float v : depth.values) {
    if (dtype == DepthDtype::float32) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      put_u32(out, bits);
    } else {
      const auto bits = std::bit_cast<std::uint64_t>(static_cast<double>(v));
      put_u32(out, static_cast<std::uint32_t>(bits));
      put_u32(out, static_cast<std::uint32_t>(bits >> 32));
    }
  }
  return out;
}

DepthMap decode_depth(const std::vector<std::uint8_t>& bytes, DepthSource source) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kDepthMagic, 4) == 0) {
    if (bytes.size() < kDepthHeader) throw MalformedPayload("depth", "truncated depth header");
    const auto version = get_u32(bytes, 4);
    if (version != kDepthVersion) throw MalformedPayload("depth", "unsupported depth format version");
    const auto h = get_u32(bytes, 8);
    const auto w = get_u32(bytes, 12);
    const auto dtype = get_u32(bytes, 16);
    if (dtype > 1) throw MalformedPayload("depth", "unknown depth dtype");
    const std::size_t elem = dtype == 0 ? 4 : 8;
    const auto count = static_cast<std::size_t>(h) * w;
    if (h == 0 || w == 0 || bytes.size() != kDepthHeader + count * elem) {
      throw MalformedPayload("depth", "depth payload size does not match header");
    }
    DepthMap d(static_cast<int>(h), static_cast<int>(w), source);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t off = kDepthHeader + i * elem;
      if (dtype == 0) {
        d.values[i] = std::bit_cast<float>(get_u32(bytes, off));
      } else {
        const std::uint64_t bits = get_u32(bytes, off) | (static_cast<std::uint64_t>(get_u32(bytes, off + 4)) << 32);
        d.values[i] = static_cast<float>(std::bit_cast<double>(bits));
      }
    }
    d.validate();
    return d;
  }
  if (bytes.empty()) throw MalformedPayload("depth", "empty depth payload");
  const cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat decoded = cv::imdecode(raw, cv::IMREAD_UNCHANGED);
  if (decoded.empty()) throw MalformedPayload("depth", "neither flat binary depth nor a decodable raster");
  if (decoded.channels() != 1) cv::cvtColor(decoded, decoded, cv::COLOR_BGR2GRAY);
  DepthMap d(decoded.rows, decoded.cols, source);
  for (int y = 0; y < decoded.rows; ++y) {
    for (int x = 0; x < decoded.cols; ++x) {
      d.at(y, x) = decoded.depth() == CV_16U ? static_cast<float>(decoded.at<std::uint16_t>(y, x))
                                             : static_cast<float>(decoded.at<std::uint8_t>(y, x));
    }
  }
  return d;
}

void write_depth(const fs::path& path, const DepthMap& depth) { write_bytes(path, encode_depth_binary(depth)); }

DepthMap read_depth(const fs::path& path, DepthSource source) {
  try {
    return decode_depth(read_bytes(path), source);
  } catch (const MalformedPayload& e) {
    throw IngestionError(path.string(), 0, e.what());
  }
}

void write_record(const fs::path& split_dir, const DatasetRecord& record) {
  record.validate();
  const std::string image_rel = "images/" + record.id + ".png";
  const std::string depth_rel = "depth/" + record.id + ".depth";
  write_png(split_dir / image_rel, record.image);
  write_depth(split_dir / depth_rel, record.depth);

  json j;
  j["id"] = record.id;
  j["height"] = record.image.height;
  j["width"] = record.image.width;
  j["image"] = image_rel;
  j["depth"] = {{"path", depth_rel}, {"source", to_string(record.depth.source)}};
  j["annotations"] = json::array();
  for (std::size_t i = 0; i < record.masks.size(); ++i) {
    const int object = i < record.mask_object.size() ? record.mask_object[i] : -1;
    j["annotations"].push_back(mask_to_json(record.masks[i], object));
  }
  if (!record.objects.empty()) {
    j["objects"] = json::array();
    for (const auto& o : record.objects) j["objects"].push_back(object_to_json(o));
  }
  const std::string text = j.dump(1) + "\n";
  write_bytes(split_dir / "annotations" / (record.id + ".json"), std::vector<std::uint8_t>(text.begin(), text.end()));
}

DatasetRecord read_record(const fs::path& annotation_path) {
  const auto bytes = read_bytes(annotation_path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw IngestionError(annotation_path.string(), 1, e.what());
  }
  const fs::path split_dir = annotation_path.parent_path().parent_path();
  try {
    DatasetRecord r;
    r.id = j.at("id").get<std::string>();
    r.image = read_image(split_dir / j.at("image").get<std::string>());
    const auto& dj = j.at("depth");
    r.depth = read_depth(split_dir / dj.at("path").get<std::string>(),
                         depth_source_from_string(dj.value("source", "external_estimator")));
    const int h = j.at("height").get<int>();
    const int w = j.at("width").get<int>();
    for (const auto& a : j.at("annotations")) {
      const auto& seg = a.at("segmentation");
      const int mh = seg.at("size").at(0).get<int>();
      const int mw = seg.at("size").at(1).get<int>();
      if (mh != h || mw != w) throw MalformedPayload("annotations.segmentation.size", "mask size differs from image");
      r.masks.push_back(decode_rle(rle_counts_from_string(seg.at("counts").get<std::string>()), mh, mw));
      if (a.contains("object")) r.mask_object.push_back(a.at("object").get<int>());
    }
    if (j.contains("objects")) {
      for (const auto& o : j.at("objects")) r.objects.push_back(object_from_json(o));
    }
    r.validate();
    return r;
  } catch (const json::exception& e) {
    throw IngestionError(annotation_path.string(), 1, e.what());
  } catch (const MalformedPayload& e) {
    throw IngestionError(annotation_path.string(), 1, e.what());
  } catch (const ContractViolation& e) {
    throw IngestionError(annotation_path.string(), 1, e.what());
  }
}

std::vector<DatasetRecord> load_split(const fs::path& split_dir) {
  const fs::path ann = split_dir / "annotations";
  if (!fs::is_directory(ann)) throw IngestionError(split_dir.string(), 0, "no annotations/ directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(ann)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<DatasetRecord> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(read_record(f));
  return out;
}

fs::path resolve_split(const fs::path& path, const std::string& preferred_split) {
  if (fs::is_directory(path / "annotations")) return path;
  if (fs::is_directory(path / preferred_split / "annotations")) return path / preferred_split;
  throw IngestionError(path.string(), 0, "not a dataset split and has no '" + preferred_split + "' split");
}

}  // namespace dasam::data
