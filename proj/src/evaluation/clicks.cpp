#include "dasam/evaluation/clicks.hpp"

#include <algorithm>
#include <limits>

#include "dasam/error.hpp"

namespace dasam::evaluation {

std::vector<int> chessboard_distance(const std::vector<std::uint8_t>& region, int height, int width) {
  std::vector<int> d(region.size(), 0);
  auto at = [&](int y, int x) -> int& { return d[static_cast<std::size_t>(y) * width + x]; };
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      if (!region[static_cast<std::size_t>(y) * width + x]) continue;
      // Distance to the virtual ring of pixels just outside the canvas.
      at(y, x) = std::min({y + 1, x + 1, height - y, width - x});
    }
  // Two chamfer passes with unit 8-neighbour weights give the exact
  // chessboard distance.
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      if (!at(y, x)) continue;
      int v = at(y, x);
      if (y > 0) {
        v = std::min(v, at(y - 1, x) + 1);
        if (x > 0) v = std::min(v, at(y - 1, x - 1) + 1);
        if (x + 1 < width) v = std::min(v, at(y - 1, x + 1) + 1);
      }
      if (x > 0) v = std::min(v, at(y, x - 1) + 1);
      at(y, x) = v;
    }
  for (int y = height - 1; y >= 0; --y)
    for (int x = width - 1; x >= 0; --x) {
      if (!at(y, x)) continue;
      int v = at(y, x);
      if (y + 1 < height) {
        v = std::min(v, at(y + 1, x) + 1);
        if (x > 0) v = std::min(v, at(y + 1, x - 1) + 1);
        if (x + 1 < width) v = std::min(v, at(y + 1, x + 1) + 1);
      }
      if (x + 1 < width) v = std::min(v, at(y, x + 1) + 1);
      at(y, x) = v;
    }
  return d;
}

std::pair<int, int> interior_most(const std::vector<std::uint8_t>& region, int height, int width) {
  const auto d = chessboard_distance(region, height, width);
  int best = 0, by = -1, bx = -1;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int v = d[static_cast<std::size_t>(y) * width + x];
      if (v > best) {
        best = v;
        by = y;
        bx = x;
      }
    }
  if (by < 0) throw ContractViolation("interior_most: empty region");
  return {bx, by};
}

std::pair<std::vector<int>, int> connected_components(const std::vector<std::uint8_t>& region, int height,
                                                      int width) {
  std::vector<int> label(region.size(), 0);
  int n = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < region.size(); ++start) {
    if (!region[start] || label[start]) continue;
    ++n;
    label[start] = n;
    stack.push_back(start);
    while (!stack.empty()) {
      const auto i = stack.back();
      stack.pop_back();
      const int y = static_cast<int>(i / width), x = static_cast<int>(i % width);
      const int ny[4] = {y - 1, y + 1, y, y}, nx[4] = {x, x, x - 1, x + 1};
      for (int k = 0; k < 4; ++k) {
        if (ny[k] < 0 || ny[k] >= height || nx[k] < 0 || nx[k] >= width) continue;
        const auto j = static_cast<std::size_t>(ny[k]) * width + nx[k];
        if (region[j] && !label[j]) {
          label[j] = n;
          stack.push_back(j);
        }
      }
    }
  }
  return {label, n};
}

Click simulate_click(const data::InstanceMask& gt, const data::InstanceMask& prediction, int clicks_so_far) {
  if (gt.is_empty()) throw ContractViolation("simulate_click: gt mask is empty");
  if (gt.height() != prediction.height() || gt.width() != prediction.width()) {
    throw ContractViolation("simulate_click: prediction and gt differ in shape");
  }
  const int h = gt.height(), w = gt.width();
  const auto g = gt.bits();
  if (clicks_so_far == 0) {
    std::vector<std::uint8_t> region(g.begin(), g.end());
    auto [x, y] = interior_most(region, h, w);
    return Click{x, y, model::PointLabel::foreground, false};
  }
  const auto p = prediction.bits();
  std::vector<std::uint8_t> fn(g.size()), fp(g.size());
  bool any = false;
  for (std::size_t i = 0; i < g.size(); ++i) {
    fn[i] = g[i] && !p[i];
    fp[i] = p[i] && !g[i];
    any = any || fn[i] || fp[i];
  }
  if (!any) return Click{0, 0, model::PointLabel::foreground, true};

  struct Best {
    long area = 0;
    std::size_t first = std::numeric_limits<std::size_t>::max();
    bool missed = true;
    int label = 0;
  } best;
  std::vector<int> best_labels;
  for (bool missed : {true, false}) {
    const auto& region = missed ? fn : fp;
    auto [labels, n] = connected_components(region, h, w);
    std::vector<long> area(static_cast<std::size_t>(n) + 1, 0);
    std::vector<std::size_t> first(static_cast<std::size_t>(n) + 1, std::numeric_limits<std::size_t>::max());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto l = static_cast<std::size_t>(labels[i]);
      if (!l) continue;
      ++area[l];
      first[l] = std::min(first[l], i);
    }
    for (int l = 1; l <= n; ++l) {
      const auto k = static_cast<std::size_t>(l);
      if (area[k] > best.area || (area[k] == best.area && first[k] < best.first)) {
        best = Best{area[k], first[k], missed, l};
        best_labels = labels;
      }
    }
  }
  std::vector<std::uint8_t> component(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) component[i] = best_labels[i] == best.label;
  auto [x, y] = interior_most(component, h, w);
  return Click{x, y, best.missed ? model::PointLabel::foreground : model::PointLabel::background, false};
}

}  // namespace dasam::evaluation
