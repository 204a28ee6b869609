#pragma once

// Plain-loop reference implementations used to check the tensor losses.

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using Grid = std::vector<std::vector<double>>;

inline Grid to_grid(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  Grid g(static_cast<std::size_t>(c.size(0)), std::vector<double>(static_cast<std::size_t>(c.size(1))));
  for (std::int64_t y = 0; y < c.size(0); ++y)
    for (std::int64_t x = 0; x < c.size(1); ++x) g[y][x] = c[y][x].item<double>();
  return g;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// -[g log p + (1-g) log(1-p)] written without cancellation.
inline double bce(double x, double g) {
  const double log_p = x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  const double log_q = x >= 0 ? -x - std::log1p(std::exp(-x)) : -std::log1p(std::exp(x));
  return -(g * log_p + (1 - g) * log_q);
}

inline double mean_bce(const Grid& x, const Grid& g) {
  double s = 0;
  std::size_t n = 0;
  for (std::size_t y = 0; y < x.size(); ++y)
    for (std::size_t i = 0; i < x[y].size(); ++i, ++n) s += bce(x[y][i], g[y][i]);
  return s / n;
}

inline double dice(const Grid& x, const Grid& g, double eps = 1.0) {
  double pg = 0, p = 0, gs = 0;
  for (std::size_t y = 0; y < x.size(); ++y)
    for (std::size_t i = 0; i < x[y].size(); ++i) {
      const double pr = sigmoid(x[y][i]);
      pg += pr * g[y][i];
      p += pr;
      gs += g[y][i];
    }
  return 1.0 - (2 * pg + eps) / (p + gs + eps);
}

// Band = pixels within Chebyshev distance r of a foreground pixel that has a
// background pixel among its in-canvas 8-neighbours. Found by exhaustive
// search over all pixel pairs.
inline std::vector<std::vector<int>> band(const Grid& g, int r = 2) {
  const int h = static_cast<int>(g.size()), w = static_cast<int>(g[0].size());
  std::vector<std::pair<int, int>> boundary;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (g[y][x] < 0.5) continue;
      bool edge = false;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w && g[yy][xx] < 0.5) edge = true;
        }
      if (edge) boundary.emplace_back(y, x);
    }
  std::vector<std::vector<int>> out(h, std::vector<int>(w, 0));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (auto [by, bx] : boundary)
        if (std::max(std::abs(by - y), std::abs(bx - x)) <= r) out[y][x] = 1;
  return out;
}

inline double boundary_bce(const Grid& x, const Grid& g, int r = 2) {
  auto b = band(g, r);
  double s = 0;
  int n = 0;
  for (std::size_t y = 0; y < x.size(); ++y)
    for (std::size_t i = 0; i < x[y].size(); ++i)
      if (b[y][i]) {
        s += bce(x[y][i], g[y][i]);
        ++n;
      }
  return n ? s / n : 0.0;
}

inline Grid max_pool_to(const Grid& g, int h, int w) {
  const int H = static_cast<int>(g.size()), W = static_cast<int>(g[0].size());
  Grid out(h, std::vector<double>(w, 0.0));
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      auto& o = out[y * h / H][x * w / W];
      o = std::max(o, g[y][x]);
    }
  return out;
}

struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
};

// Central differences on every element of x (float64) against autograd.
// Relative error per element is |a - n| / max(|a|, |n|), with elements where
// both are below `floor` counted as agreeing.
inline GradCheck finite_difference_check(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                                         const torch::Tensor& x0, double h = 1e-6, double floor = 1e-8) {
  auto x = x0.detach().clone().to(torch::kFloat64).set_requires_grad(true);
  auto y = f(x);
  y.backward();
  auto analytic = x.grad().contiguous();
  GradCheck r;
  auto flat = x.detach().clone().reshape({-1});
  for (std::int64_t i = 0; i < flat.numel(); ++i) {
    const double v = flat[i].item<double>();
    auto xp = flat.clone(), xm = flat.clone();
    xp[i] = v + h;
    xm[i] = v - h;
    torch::NoGradGuard ng;
    const double num = (f(xp.view(x.sizes())).item<double>() - f(xm.view(x.sizes())).item<double>()) / (2 * h);
    const double a = analytic.reshape({-1})[i].item<double>();
    r.max_abs_analytic = std::max(r.max_abs_analytic, std::abs(a));
    const double scale = std::max(std::abs(a), std::abs(num));
    if (scale < floor) continue;
    r.max_rel_error = std::max(r.max_rel_error, std::abs(a - num) / scale);
  }
  return r;
}

}  // namespace oracle
