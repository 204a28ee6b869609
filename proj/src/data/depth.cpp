#include "dasam/data/depth.hpp"

#include <algorithm>

namespace dasam::data {

PreparedDepth prepare_depth(const DepthMap& depth) {
  depth.validate();
  PreparedDepth out;
  out.height = depth.height;
  out.width = depth.width;
  out.values.assign(depth.values.size() * 3, 0.0f);
  if (depth.values.empty()) {
    out.degenerate = true;
    return out;
  }
  const auto [lo_it, hi_it] = std::minmax_element(depth.values.begin(), depth.values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) {
    out.degenerate = true;
    return out;
  }
  const double range = hi - lo;
  for (std::size_t i = 0; i < depth.values.size(); ++i) {
    const auto v = static_cast<float>((static_cast<double>(depth.values[i]) - lo) / range);
    out.values[i * 3 + 0] = v;
    out.values[i * 3 + 1] = v;
    out.values[i * 3 + 2] = v;
  }
  return out;
}

}  // namespace dasam::data
