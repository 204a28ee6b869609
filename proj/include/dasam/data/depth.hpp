#pragma once

#include <vector>

#include "dasam/data/types.hpp"

namespace dasam::data {

/// Encoder-ready depth: H x W x 3 (row-major, channel-last) with the
/// min-max normalized depth replicated into every channel.
struct PreparedDepth {
  int height = 0;
  int width = 0;
  std::vector<float> values;
  /// Set when the input was constant; `values` is then all zeros.
  bool degenerate = false;

  float at(int y, int x, int c) const { return values[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

PreparedDepth prepare_depth(const DepthMap& depth);

}  // namespace dasam::data
