#include "support/torch_doctest.hpp"

#include <cmath>

#include "dasam/error.hpp"
#include "dasam/losses/losses.hpp"
#include "support/loss_oracles.hpp"

using namespace dasam;
using namespace dasam::losses;

namespace {

torch::Tensor random_gt(int h, int w, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto g = torch::zeros({h, w}, torch::kFloat64);
  // A random rectangle plus speckle so masks have real boundaries.
  const int y0 = 1 + static_cast<int>(seed % 3), x0 = 2 + static_cast<int>(seed % 2);
  g.narrow(0, y0, h / 2).narrow(1, x0, w / 2).fill_(1.0);
  auto speckle = torch::rand({h, w}, gen, torch::kFloat64) > 0.85;
  return torch::where(speckle, 1.0 - g, g);
}

torch::Tensor random_logits(int h, int w, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed + 1000);
  return torch::randn({h, w}, gen, torch::kFloat64) * 2.0;
}

}  // namespace

TEST_CASE("mask bce examples") {
  auto gt = torch::zeros({4, 4}, torch::kFloat64);
  gt.narrow(0, 0, 2).fill_(1.0);
  auto hard = torch::where(gt > 0.5, torch::full_like(gt, 50.0), torch::full_like(gt, -50.0));
  CHECK(mask_bce_loss(hard, gt).item<double>() < 1e-9);
  CHECK(mask_bce_loss(torch::zeros({4, 4}, torch::kFloat64), gt).item<double>() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  auto x = torch::tensor({{2.0}, {-1.0}}, torch::kFloat64);
  auto g = torch::tensor({{1.0}, {0.0}}, torch::kFloat64);
  const double expected = (std::log1p(std::exp(-2.0)) + std::log1p(std::exp(-1.0))) / 2;
  CHECK(mask_bce_loss(x, g).item<double>() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(mask_bce_loss(x, g).item<double>() == doctest::Approx(0.220095).epsilon(1e-6));
  CHECK_THROWS_AS(mask_bce_loss(x, torch::zeros({2, 2}, torch::kFloat64)), ContractViolation);
}

TEST_CASE("mask bce matches the reference on random inputs") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto x = random_logits(8, 8, s), g = random_gt(8, 8, s);
    CHECK(mask_bce_loss(x, g).item<double>() ==
          doctest::Approx(oracle::mean_bce(oracle::to_grid(x), oracle::to_grid(g))).epsilon(1e-12));
  }
}

TEST_CASE("dice examples") {
  auto gt = torch::zeros({32, 32}, torch::kFloat64);
  gt.narrow(0, 4, 10).narrow(1, 3, 12).fill_(1.0);
  auto hard = torch::where(gt > 0.5, torch::full_like(gt, 50.0), torch::full_like(gt, -50.0));
  CHECK(dice_loss(hard, gt).item<double>() < 1e-3);

  auto x = torch::full({2, 2}, 50.0, torch::kFloat64);
  auto g = torch::tensor({{1.0, 1.0}, {0.0, 0.0}}, torch::kFloat64);
  CHECK(dice_loss(x, g).item<double>() == doctest::Approx(1.0 - 5.0 / 7.0).epsilon(1e-12));
  CHECK(dice_loss(x, g, 0.0).item<double>() == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  auto none = torch::full({4, 4}, -50.0, torch::kFloat64);
  CHECK(dice_loss(none, torch::zeros({4, 4}, torch::kFloat64)).item<double>() < 1e-9);

  for (std::uint64_t s = 0; s < 5; ++s) {
    auto xr = random_logits(8, 8, s), gr = random_gt(8, 8, s);
    CHECK(dice_loss(xr, gr).item<double>() ==
          doctest::Approx(oracle::dice(oracle::to_grid(xr), oracle::to_grid(gr))).epsilon(1e-12));
  }
}

TEST_CASE("dice decreases as a wrong pixel moves toward its label") {
  auto g = torch::zeros({4, 4}, torch::kFloat64);
  g.narrow(0, 0, 2).fill_(1.0);
  auto x = torch::where(g > 0.5, torch::full_like(g, 3.0), torch::full_like(g, -3.0));
  double previous = 1e9;
  for (double v = -8.0; v <= 8.0; v += 0.5) {
    x[0][0] = v;  // gt is 1 here
    const double d = dice_loss(x, g).item<double>();
    CHECK(d < previous);
    previous = d;
  }
}

TEST_CASE("iou regression examples") {
  auto gt = torch::zeros({4, 4}, torch::kFloat64);
  gt.narrow(0, 0, 2).fill_(1.0);  // 8 pixels
  auto pred = torch::full({4, 4}, -1.0, torch::kFloat64);
  pred.narrow(0, 0, 2).narrow(1, 0, 3).fill_(1.0);  // 6 pixels inside gt -> IoU 0.75
  CHECK(hard_iou(pred, gt).item<double>() == 0.75);
  CHECK(iou_regression_loss(torch::tensor({0.5}, torch::kFloat64), pred, gt).item<double>() ==
        doctest::Approx(0.0625).epsilon(1e-12));
  CHECK(iou_regression_loss(torch::tensor({0.75}, torch::kFloat64), pred, gt).item<double>() == 0.0);
  auto empty = torch::full({4, 4}, -1.0, torch::kFloat64);
  CHECK(iou_regression_loss(torch::tensor({0.3}, torch::kFloat64), empty, gt).item<double>() ==
        doctest::Approx(0.09).epsilon(1e-12));

  // The target carries no gradient to the mask path.
  auto logits = pred.clone().set_requires_grad(true);
  auto score = torch::tensor({0.5}, torch::kFloat64).set_requires_grad(true);
  iou_regression_loss(score, logits, gt).backward();
  CHECK_FALSE(logits.grad().defined());
  CHECK(score.grad().item<double>() == doctest::Approx(-0.5));
}

TEST_CASE("direct supervision examples") {
  auto gt = torch::zeros({4, 4}, torch::kFloat64);
  gt[1][0] = 1.0;
  auto pooled = oracle::max_pool_to(oracle::to_grid(gt), 2, 2);
  CHECK(pooled == oracle::Grid{{1, 0}, {0, 0}});

  auto hard = torch::tensor({{50.0, -50.0}, {-50.0, -50.0}}, torch::kFloat64);
  CHECK(direct_supervision_loss({hard}, gt).item<double>() < 1e-9);

  auto a = torch::randn({2, 2}, torch::kFloat64), b = torch::randn({2, 2}, torch::kFloat64);
  const double la = direct_supervision_loss({a}, gt).item<double>();
  const double lb = direct_supervision_loss({b}, gt).item<double>();
  CHECK(direct_supervision_loss({a, b}, gt).item<double>() == doctest::Approx((la + lb) / 2).epsilon(1e-12));

  const auto p = oracle::to_grid(a);
  CHECK(la == doctest::Approx(oracle::mean_bce(p, pooled) + oracle::dice(p, pooled)).epsilon(1e-12));
  CHECK_THROWS_AS(direct_supervision_loss({}, gt), ContractViolation);
}

TEST_CASE("boundary band matches brute-force distances") {
  auto gt = torch::zeros({5, 5}, torch::kFloat64);
  gt.narrow(0, 1, 3).narrow(1, 1, 3).fill_(1.0);
  auto inner = inner_boundary(gt);
  CHECK(inner.sum().item<double>() == 8.0);
  CHECK(inner[0][2][2].item<double>() == 0.0);
  auto band = boundary_band(gt)[0];
  auto ref = oracle::band(oracle::to_grid(gt));
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) CHECK(band[y][x].item<double>() == ref[y][x]);

  for (std::uint64_t s = 0; s < 20; ++s) {
    auto g = random_gt(12, 10, s);
    auto b = boundary_band(g)[0];
    auto r = oracle::band(oracle::to_grid(g));
    int mismatches = 0;
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 10; ++x) mismatches += b[y][x].item<double>() != r[y][x];
    CHECK(mismatches == 0);
  }
}

TEST_CASE("boundary aux examples") {
  auto empty = torch::zeros({6, 6}, torch::kFloat64);
  CHECK(boundary_aux_loss(torch::randn({6, 6}, torch::kFloat64), empty).item<double>() == 0.0);
  auto full = torch::ones({6, 6}, torch::kFloat64);
  CHECK(boundary_aux_loss(torch::randn({6, 6}, torch::kFloat64), full).item<double>() == 0.0);
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto g = random_gt(8, 8, s);
    auto hard = torch::where(g > 0.5, torch::full_like(g, 50.0), torch::full_like(g, -50.0));
    CHECK(boundary_aux_loss(hard, g).item<double>() < 1e-9);
    auto x = random_logits(8, 8, s);
    CHECK(boundary_aux_loss(x, g).item<double>() ==
          doctest::Approx(oracle::boundary_bce(oracle::to_grid(x), oracle::to_grid(g))).epsilon(1e-12));
  }
}

TEST_CASE("total loss wiring") {
  LossWeights w;
  auto b = total_loss(0.1, 0.2, 0.3, 0.4, 0.5, w);
  CHECK(b.total == 2.8);
  CHECK(total_loss(0, 0, 0, 0, 0, w).total == 0.0);
  LossWeights orig = w;
  orig.iou = orig.direct = orig.aux = 0.0;
  const double m = 0.0123, d = 0.4567;
  CHECK(total_loss(m, d, 0.3, 0.4, 0.5, orig).total == w.mask * m + w.dice * d);

  // Affine and non-decreasing in each term.
  const double base = total_loss(0.1, 0.2, 0.3, 0.4, 0.5, w).total;
  CHECK(total_loss(0.2, 0.2, 0.3, 0.4, 0.5, w).total - base == doctest::Approx(2.0));
  CHECK(total_loss(0.1, 0.2, 0.3, 0.4, 0.6, w).total - base == doctest::Approx(0.02));

  LossWeights bad;
  bad.aux = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("all terms are non-negative") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto x = random_logits(8, 8, s) * (1 + s % 4), g = random_gt(8, 8, s);
    CHECK(mask_bce_loss(x, g).item<double>() >= 0);
    CHECK(dice_loss(x, g).item<double>() >= 0);
    CHECK(iou_regression_loss(torch::rand({1}, torch::kFloat64), x, g).item<double>() >= 0);
    CHECK(direct_supervision_loss({x.narrow(0, 0, 4).narrow(1, 0, 4)}, g).item<double>() >= 0);
    CHECK(boundary_aux_loss(x, g).item<double>() >= 0);
  }
}

TEST_CASE("finite-difference gradients of every loss") {
  for (std::uint64_t s = 0; s < 3; ++s) {
    auto x = random_logits(8, 8, s), g = random_gt(8, 8, s);
    CHECK(oracle::finite_difference_check([&](const torch::Tensor& v) { return mask_bce_loss(v, g); }, x)
              .max_rel_error < 1e-4);
    CHECK(oracle::finite_difference_check([&](const torch::Tensor& v) { return dice_loss(v, g); }, x)
              .max_rel_error < 1e-4);
    CHECK(oracle::finite_difference_check([&](const torch::Tensor& v) { return boundary_aux_loss(v, g); }, x)
              .max_rel_error < 1e-4);
    auto d = x.narrow(0, 0, 4).narrow(1, 0, 4).clone();
    CHECK(oracle::finite_difference_check([&](const torch::Tensor& v) { return direct_supervision_loss({v}, g); }, d)
              .max_rel_error < 1e-4);
    auto score = torch::tensor({0.3 + 0.1 * s}, torch::kFloat64);
    CHECK(oracle::finite_difference_check([&](const torch::Tensor& v) { return iou_regression_loss(v, x, g); }, score)
              .max_rel_error < 1e-4);
  }
}
