#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "gradcheck.hpp"
#include "terraexpr/loss.hpp"

using namespace terraexpr;
using testing_support::grad_check;
using testing_support::random_tensor;

namespace {

Tensor probs_with_pt(double pt) {
  // Two classes so rows sum to one.
  return Tensor::from_data({1, 2}, {pt, 1.0 - pt});
}

LossConfig focal(double alpha, double gamma) {
  LossConfig cfg;
  cfg.alpha = {alpha};
  cfg.gamma = gamma;
  return cfg;
}

const std::vector<std::size_t> first{0};

}  // namespace

TEST_CASE("cross entropy examples") {
  CHECK(cross_entropy(probs_with_pt(1.0), first).item() == 0.0);
  CHECK(std::abs(cross_entropy(probs_with_pt(0.5), first).item() - std::log(2.0)) < 1e-12);
  CHECK(std::isfinite(cross_entropy(probs_with_pt(0.0), first).item()));
  CHECK(cross_entropy(probs_with_pt(0.0), first).item() == doctest::Approx(-std::log(1e-12)));
  const std::vector<std::size_t> bad{2};
  CHECK_THROWS_AS(cross_entropy(probs_with_pt(0.5), bad), std::out_of_range);
}

TEST_CASE("cross entropy gradient through softmax is p - onehot") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    auto logits = random_tensor({4, 7}, rng, -3, 3);
    std::vector<std::size_t> labels(4);
    for (auto& l : labels) l = rng.below(7);
    cross_entropy(softmax(logits), labels, Reduction::sum).backward();
    auto p = softmax(logits.detach());
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t k = 0; k < 7; ++k) {
        const double expected = p.data()[n * 7 + k] - (labels[n] == k ? 1.0 : 0.0);
        const double got = logits.grad()[n * 7 + k];
        CHECK(std::abs(got - expected) <= 1e-6 * std::max(std::abs(expected), 1e-6));
      }
  }
}

TEST_CASE("focal loss examples") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto logits = random_tensor({5, 7}, rng, -3, 3, false);
    auto p = softmax(logits);
    std::vector<std::size_t> labels(5);
    for (auto& l : labels) l = rng.below(7);
    const double fl = focal_loss(p, labels, focal(1.0, 0.0)).item();
    CHECK(std::abs(fl - cross_entropy(p, labels).item()) < 1e-12);
  }
  const double fl = focal_loss(probs_with_pt(0.9), first, focal(0.25, 2.0)).item();
  const double analytic = 0.25 * 0.01 * -std::log(0.9);
  CHECK(std::abs(fl - analytic) < 1e-15);
  char rendered[32];
  std::snprintf(rendered, sizeof rendered, "%.3e", fl);
  CHECK(std::string(rendered) == "2.634e-04");
  for (double g : {0.0, 0.5, 2.0, 5.0}) CHECK(focal_loss(probs_with_pt(1.0), first, focal(0.25, g)).item() == 0.0);
}

TEST_CASE("focal bounded by cross entropy and both decrease in p_t") {
  double prev_ce = INFINITY, prev_fl = INFINITY;
  for (int i = 1; i < 200; ++i) {
    const double pt = i / 200.0;
    const double ce = cross_entropy(probs_with_pt(pt), first).item();
    for (double g : {0.5, 1.0, 2.0, 3.0}) {
      CHECK(focal_loss(probs_with_pt(pt), first, focal(1.0, g)).item() < ce);
    }
    const double fl = focal_loss(probs_with_pt(pt), first, focal(0.25, 2.0)).item();
    CHECK(ce < prev_ce);
    CHECK(fl < prev_fl);
    prev_ce = ce;
    prev_fl = fl;
  }
}

TEST_CASE("per-class alpha and reductions") {
  auto p = Tensor::from_data({2, 2}, {0.6, 0.4, 0.3, 0.7});
  const std::vector<std::size_t> labels{0, 1};
  LossConfig cfg;
  cfg.alpha = {0.5, 2.0};
  cfg.gamma = 1.0;
  cfg.reduction = Reduction::sum;
  const double expected = 0.5 * 0.4 * -std::log(0.6) + 2.0 * 0.3 * -std::log(0.7);
  CHECK(focal_loss(p, labels, cfg).item() == doctest::Approx(expected).epsilon(1e-14));
  cfg.reduction = Reduction::mean;
  CHECK(focal_loss(p, labels, cfg).item() == doctest::Approx(expected / 2).epsilon(1e-14));
  cfg.gamma = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.gamma = 2.0;
  cfg.alpha = {0.0};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("both losses pass finite differences through softmax") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 40);
    auto logits = random_tensor({3, 7}, rng, -2, 2);
    std::vector<std::size_t> labels(3);
    for (auto& l : labels) l = rng.below(7);
    LossConfig cfg = focal(0.25, 2.0);
    auto res_fl = grad_check({logits}, [&] { return focal_loss(softmax(logits), labels, cfg); });
    auto res_ce = grad_check({logits}, [&] { return cross_entropy(softmax(logits), labels); });
    CHECK(res_fl.max_rel_error < 1e-4);
    CHECK(res_ce.max_rel_error < 1e-4);
  }
}
