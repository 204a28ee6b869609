#pragma once

#include <cstdint>
#include <vector>

#include "dasam/data/types.hpp"
#include "dasam/model/prompt.hpp"

namespace dasam::evaluation {

/// A simulated click; `noop` means there was nothing left to correct.
struct Click {
  int x = 0;
  int y = 0;
  model::PointLabel label = model::PointLabel::foreground;
  bool noop = false;
  bool operator==(const Click&) const = default;
};

/// Exact chessboard (Chebyshev) distance from every region pixel to the
/// nearest pixel outside the region; pixels outside the canvas count as
/// outside. Non-region pixels get 0. Row-major, size h*w.
std::vector<int> chessboard_distance(const std::vector<std::uint8_t>& region, int height, int width);

/// Region pixel with the largest distance to the region's complement; ties go
/// to the smallest (y, x). Region must be non-empty.
std::pair<int, int> interior_most(const std::vector<std::uint8_t>& region, int height, int width);

/// 4-connected components: a label per pixel (0 = background, 1..n) and n.
std::pair<std::vector<int>, int> connected_components(const std::vector<std::uint8_t>& region, int height, int width);

/// Next click. With no previous clicks: foreground at the interior-most gt
/// pixel. Otherwise at the interior-most pixel of the largest 4-connected
/// error component (false negatives and false positives form separate
/// components; ties go to the component whose first pixel in row-major order
/// comes first), foreground for a missed region and background for a spurious
/// one. Returns a noop click when prediction == gt.
/// Throws ContractViolation for an empty gt or mismatched shapes.
Click simulate_click(const data::InstanceMask& gt, const data::InstanceMask& prediction, int clicks_so_far);

}  // namespace dasam::evaluation
