#pragma once

// Slow, obviously-correct reference versions of the evaluation metrics.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "dasam/evaluation/metrics.hpp"

namespace oracle {

inline double iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  double i = 0, u = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    i += (a[k] && b[k]);
    u += (a[k] || b[k]);
  }
  return u == 0 ? 1.0 : i / u;
}

// Min Chebyshev distance to any non-region pixel, searching the canvas plus
// a one-pixel ring outside it.
inline std::vector<int> chessboard(const std::vector<std::uint8_t>& r, int h, int w) {
  std::vector<int> d(r.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!r[static_cast<std::size_t>(y) * w + x]) continue;
      int best = 1 << 30;
      for (int yy = -1; yy <= h; ++yy)
        for (int xx = -1; xx <= w; ++xx) {
          const bool inside = yy >= 0 && yy < h && xx >= 0 && xx < w;
          if (inside && r[static_cast<std::size_t>(yy) * w + xx]) continue;
          best = std::min(best, std::max(std::abs(yy - y), std::abs(xx - x)));
        }
      d[static_cast<std::size_t>(y) * w + x] = best;
    }
  return d;
}

inline std::pair<int, int> interior_most(const std::vector<std::uint8_t>& r, int h, int w) {
  const auto d = chessboard(r, h, w);
  int best = 0, bx = -1, by = -1;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (d[static_cast<std::size_t>(y) * w + x] > best) {
        best = d[static_cast<std::size_t>(y) * w + x];
        bx = x;
        by = y;
      }
  return {bx, by};
}

// 4-connected labels by min-index relaxation until nothing changes.
inline std::vector<int> components(const std::vector<std::uint8_t>& r, int h, int w) {
  std::vector<int> lab(r.size(), -1);
  for (std::size_t i = 0; i < r.size(); ++i)
    if (r[i]) lab[i] = static_cast<int>(i);
  bool changed = true;
  while (changed) {
    changed = false;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const auto i = static_cast<std::size_t>(y) * w + x;
        if (lab[i] < 0) continue;
        const int ny[4] = {y - 1, y + 1, y, y}, nx[4] = {x, x, x - 1, x + 1};
        for (int k = 0; k < 4; ++k) {
          if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
          const auto j = static_cast<std::size_t>(ny[k]) * w + nx[k];
          if (lab[j] >= 0 && lab[j] < lab[i]) {
            lab[i] = lab[j];
            changed = true;
          }
        }
      }
  }
  return lab;  // label = smallest member index
}

struct RefClick {
  int x, y;
  bool foreground;
};

inline RefClick refinement_click(const std::vector<std::uint8_t>& g, const std::vector<std::uint8_t>& p, int h, int w) {
  long best_area = 0;
  int best_label = -1;
  bool best_fn = true;
  std::vector<int> best_labs;
  for (bool fn : {true, false}) {
    std::vector<std::uint8_t> e(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) e[i] = fn ? (g[i] && !p[i]) : (p[i] && !g[i]);
    const auto lab = components(e, h, w);
    for (std::size_t i = 0; i < lab.size(); ++i) {
      if (lab[i] != static_cast<int>(i)) continue;  // component root = first pixel
      const long area = std::count(lab.begin(), lab.end(), lab[i]);
      if (area > best_area || (area == best_area && lab[i] < best_label)) {
        best_area = area;
        best_label = lab[i];
        best_fn = fn;
        best_labs = lab;
      }
    }
  }
  std::vector<std::uint8_t> comp(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) comp[i] = best_labs[i] == best_label;
  auto [x, y] = interior_most(comp, h, w);
  return {x, y, best_fn};
}

struct Cand {
  std::size_t image;
  double score;
  std::vector<double> ious;
};

// Greedy matching of the first k ranked predictions, redone from scratch.
inline std::size_t true_positives(const std::vector<Cand>& ranked, std::size_t k,
                                  const std::vector<std::size_t>& ngt, double t) {
  std::vector<std::vector<bool>> used(ngt.size());
  for (std::size_t i = 0; i < ngt.size(); ++i) used[i].assign(ngt[i], false);
  std::size_t tp = 0;
  for (std::size_t r = 0; r < k; ++r) {
    const auto& c = ranked[r];
    int pick = -1;
    for (std::size_t g = 0; g < c.ious.size(); ++g) {
      if (used[c.image][g] || !(c.ious[g] >= t)) continue;
      if (pick < 0 || c.ious[g] > c.ious[static_cast<std::size_t>(pick)]) pick = static_cast<int>(g);
    }
    if (pick >= 0) {
      used[c.image][static_cast<std::size_t>(pick)] = true;
      ++tp;
    }
  }
  return tp;
}

inline std::optional<double> map_of(std::vector<Cand> cands, const std::vector<std::size_t>& ngt) {
  const std::size_t npos = std::accumulate(ngt.begin(), ngt.end(), std::size_t{0});
  if (npos == 0) return std::nullopt;
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.score > b.score; });
  double total = 0;
  for (int ti = 0; ti < 10; ++ti) {
    const double t = (50 + 5 * ti) / 100.0;
    std::vector<double> prec, rec;
    for (std::size_t k = 1; k <= cands.size(); ++k) {
      const double tp = static_cast<double>(true_positives(cands, k, ngt, t));
      prec.push_back(tp / static_cast<double>(k));
      rec.push_back(tp / static_cast<double>(npos));
    }
    double ap = 0;
    for (int i = 0; i <= 100; ++i) {
      double best = 0;
      for (std::size_t k = 0; k < prec.size(); ++k)
        if (rec[k] >= i / 100.0) best = std::max(best, prec[k]);
      ap += best;
    }
    total += ap / 101.0;
  }
  return total / 10.0;
}

// {overall, S, M, L}
inline std::array<std::optional<double>, 4> map_report(const std::vector<dasam::evaluation::ScoredPrediction>& preds,
                                                       const std::vector<std::vector<dasam::evaluation::SizeBucket>>& gts) {
  std::array<std::optional<double>, 4> out;
  {
    std::vector<Cand> c;
    for (const auto& p : preds) c.push_back({p.image, p.score, p.ious});
    std::vector<std::size_t> n;
    for (const auto& g : gts) n.push_back(g.size());
    out[0] = map_of(c, n);
  }
  for (int b = 0; b < 3; ++b) {
    const auto bucket = static_cast<dasam::evaluation::SizeBucket>(b);
    std::vector<std::size_t> n;
    for (const auto& g : gts) n.push_back(static_cast<std::size_t>(std::count(g.begin(), g.end(), bucket)));
    std::vector<Cand> c;
    for (const auto& p : preds) {
      auto assigned = p.fallback_bucket;
      double best = 0;
      for (std::size_t g = 0; g < p.ious.size(); ++g)
        if (p.ious[g] > best) {
          best = p.ious[g];
          assigned = gts[p.image][g];
        }
      if (assigned != bucket) continue;
      Cand k{p.image, p.score, {}};
      for (std::size_t g = 0; g < p.ious.size(); ++g)
        if (gts[p.image][g] == bucket) k.ious.push_back(p.ious[g]);
      c.push_back(k);
    }
    out[static_cast<std::size_t>(b) + 1] = map_of(c, n);
  }
  return out;
}

}  // namespace oracle
