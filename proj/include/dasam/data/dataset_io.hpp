#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dasam/data/types.hpp"

namespace dasam::data {

// On-disk layout of one split:
//
//   <split>/images/<id>.png          8-bit RGB, lossless
//   <split>/depth/<id>.depth         flat binary depth (see below)
//   <split>/annotations/<id>.json    one record: RLE masks, boxes, depth path
//
// Flat binary depth: "DPTH", u32 version (1), u32 height, u32 width,
// u32 dtype (0 = float32, 1 = float64), then row-major little-endian values.
// Depth may also be supplied as a single-channel 8/16-bit PNG.

enum class DepthDtype : std::uint32_t { float32 = 0, float64 = 1 };

std::vector<std::uint8_t> encode_png(const RgbImage& image);
RgbImage decode_image(const std::vector<std::uint8_t>& bytes);
void write_png(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_depth_binary(const DepthMap& depth, DepthDtype dtype = DepthDtype::float32);
/// Accepts either the flat binary format or a single-channel PNG.
DepthMap decode_depth(const std::vector<std::uint8_t>& bytes,
                      DepthSource source = DepthSource::external_estimator);
void write_depth(const std::filesystem::path& path, const DepthMap& depth);
DepthMap read_depth(const std::filesystem::path& path, DepthSource source = DepthSource::external_estimator);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

/// Writes image, depth and annotation files for one record into `split_dir`.
void write_record(const std::filesystem::path& split_dir, const DatasetRecord& record);
DatasetRecord read_record(const std::filesystem::path& annotation_path);

/// Loads every record of a split, ordered by id.
std::vector<DatasetRecord> load_split(const std::filesystem::path& split_dir);

/// Returns `path` if it is a split directory (has annotations/), otherwise
/// `path / preferred_split`. Throws IngestionError when neither exists.
std::filesystem::path resolve_split(const std::filesystem::path& path, const std::string& preferred_split);

}  // namespace dasam::data
