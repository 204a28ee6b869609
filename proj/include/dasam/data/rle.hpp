#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dasam/data/types.hpp"

namespace dasam::data {

/// Column-major run-length encoding. Runs alternate starting with a run of
/// zeros (possibly of length 0), the convention used by COCO-style
/// annotation files.
struct Rle {
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> counts;

  bool operator==(const Rle&) const = default;
};

Rle encode_rle(const InstanceMask& mask);

/// Throws MalformedPayload when the runs do not sum to height * width.
InstanceMask decode_rle(const Rle& rle);
InstanceMask decode_rle(const std::vector<std::uint32_t>& counts, int height, int width);

/// Compact LEB128-like text form of the counts (COCO "compressed RLE").
std::string rle_counts_to_string(const std::vector<std::uint32_t>& counts);
std::vector<std::uint32_t> rle_counts_from_string(const std::string& s);

}  // namespace dasam::data
