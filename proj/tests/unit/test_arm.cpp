#include <algorithm>

#include "doctest.h"
#include "gradcheck.hpp"
#include "terraexpr/arm.hpp"

using namespace terraexpr;
using testing_support::grad_check;
using testing_support::random_tensor;
using testing_support::weighted_sum;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Builds the zero-padded input of every convolution in the stack explicitly
// and counts, for each output position, how many taps of the composed window
// read real (non-padding) input pixels.
std::vector<double> padded_tap_oracle(std::size_t map, const std::vector<ConvWindow>& stack) {
  // Walk backwards: each output position depends on a set of input positions.
  std::size_t in_extent = map;
  for (auto it = stack.rbegin(); it != stack.rend(); ++it) in_extent = in_extent + it->kernel - 1 - 2 * it->padding;
  std::size_t k_eff = 1;
  for (const auto& c : stack) k_eff += c.kernel - 1;
  std::vector<double> per_axis(map);
  for (std::size_t pos = 0; pos < map; ++pos) {
    // Multiset of tap offsets through the stack (counts combinations).
    std::vector<long> taps{static_cast<long>(pos)};
    for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
      std::vector<long> next;
      for (long t : taps)
        for (std::size_t k = 0; k < it->kernel; ++k) next.push_back(t + static_cast<long>(k) - static_cast<long>(it->padding));
      taps = std::move(next);
    }
    std::sort(taps.begin(), taps.end());
    taps.erase(std::unique(taps.begin(), taps.end()), taps.end());
    REQUIRE(taps.size() == k_eff);
    std::size_t valid = 0;
    for (long t : taps)
      if (t >= 0 && t < static_cast<long>(in_extent)) ++valid;
    per_axis[pos] = static_cast<double>(valid);
  }
  return per_axis;
}

}  // namespace

TEST_CASE("feature arrangement examples") {
  Rng rng(1);
  auto one = random_tensor({2, 1, 3, 4}, rng, -1, 1, false);
  CHECK(values(feature_arrange(one).plane) == values(one));

  auto four = Tensor::from_data({1, 4, 1, 1}, {1, 2, 3, 4});
  auto plane = feature_arrange(four);
  CHECK(plane.side == 2);
  CHECK(plane.plane.shape() == Shape{1, 1, 2, 2});
  CHECK(values(plane.plane) == std::vector<double>{1, 2, 3, 4});

  CHECK_THROWS_AS(feature_arrange(Tensor::zeros({1, 3, 2, 2})), ShapeError);
}

TEST_CASE("feature arrangement follows the interleave rule and round-trips") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const std::size_t s = 1 + seed % 4, h = 1 + seed % 3, w = 2 + seed % 2;
    auto x = random_tensor({2, s * s, h, w}, rng, -1, 1, false);
    auto arranged = feature_arrange(x);
    const auto& p = arranged.plane;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < s * s; ++c)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t xx = 0; xx < w; ++xx) {
            const double src = x.data()[((n * s * s + c) * h + y) * w + xx];
            const double dst = p.data()[(n * s * h + y * s + c / s) * s * w + xx * s + c % s];
            CHECK(src == dst);
          }
    auto a = values(x), b = values(p);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
    CHECK(values(inverse_arrange(arranged)) == values(x));
  }
}

TEST_CASE("de-albino weights") {
  const std::vector<ConvWindow> none{{3, 0}};
  auto flat = de_albino_weights(4, 4, 2, none);
  for (double v : flat.values) CHECK(v == 1.0);
  Rng rng(2);
  ArrangedPlane<double> plane{random_tensor({1, 1, 8, 8}, rng, -1, 1, false), 2};
  CHECK(values(de_albino(plane, std::span<const ConvWindow>(none)).plane) == values(plane.plane));

  const std::vector<ConvWindow> k3{{3, 1}};
  auto w = de_albino_weights(5, 5, 1, k3);
  CHECK(w.at(0, 0) == 4.0 / 9.0);
  CHECK(w.at(0, 4) == 4.0 / 9.0);
  CHECK(w.at(0, 2) == 2.0 / 3.0);
  CHECK(w.at(2, 0) == 2.0 / 3.0);
  CHECK(w.at(2, 2) == 1.0);
  CHECK(w.at(1, 1) == 1.0);

  // With s > 1 every s x s cell shares its map position's weight.
  auto ws = de_albino_weights(3, 3, 2, k3);
  CHECK(ws.rows == 6);
  CHECK(ws.at(0, 0) == ws.at(1, 1));
  CHECK(ws.at(2, 2) == 1.0);
}

TEST_CASE("de-albino weights match explicit tap enumeration") {
  const std::vector<std::vector<ConvWindow>> stacks = {
      {{3, 1}}, {{3, 1}, {3, 1}}, {{5, 2}}, {{3, 0}, {3, 1}}, {{5, 1}}, {{1, 0}}, {{3, 1}, {5, 2}}};
  for (const auto& stack : stacks) {
    for (std::size_t map = 2; map <= 7; ++map) {
      std::size_t k = 1;
      for (const auto& c : stack) k += c.kernel - 1;
      const auto axis = padded_tap_oracle(map, stack);
      const auto w = de_albino_weights(map, map, 1, stack);
      for (std::size_t r = 0; r < map; ++r)
        for (std::size_t c = 0; c < map; ++c) {
          const double expected = axis[r] * axis[c] / static_cast<double>(k * k);
          CHECK(w.at(r, c) == doctest::Approx(expected).epsilon(1e-15));
          CHECK(w.at(r, c) > 0.0);
          CHECK(w.at(r, c) <= 1.0);
          CHECK(w.at(r, c) == w.at(map - 1 - r, c));
          CHECK(w.at(r, c) == w.at(r, map - 1 - c));
        }
    }
  }
}

TEST_CASE("sharing affinity") {
  Rng rng(3);
  auto logit = Tensor::scalar(0.3, true);
  auto single = random_tensor({1, 5}, rng, -1, 1, false);
  auto out1 = share_affinity(single, Mode::train, logit);
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(out1.data()[i] - single.data()[i]) < 1e-15);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng r(seed);
    auto f = random_tensor({6, 4}, r, -2, 2, false);
    auto out = share_affinity(f, Mode::train, logit);
    for (std::size_t d = 0; d < 4; ++d) {
      double mi = 0, mo = 0;
      for (std::size_t n = 0; n < 6; ++n) {
        mi += f.data()[n * 4 + d];
        mo += out.data()[n * 4 + d];
      }
      CHECK(std::abs(mi / 6 - mo / 6) < 1e-9);
    }
    CHECK(values(share_affinity(f, Mode::eval, logit)) == values(f));
  }

  const double lambda = 0.999999;
  auto near_one = Tensor::scalar(std::log(lambda / (1 - lambda)));
  auto f = random_tensor({4, 3}, rng, -1, 1, false);
  auto out = share_affinity(f, Mode::train, near_one);
  for (std::size_t i = 0; i < 12; ++i) CHECK(std::abs(out.data()[i] - f.data()[i]) < 1e-4);
}

TEST_CASE("arm forward") {
  Rng rng(4);
  auto fmap = random_tensor({3, 1, 4, 4}, rng, -1, 1, false);
  const std::vector<ConvWindow> no_pad{{3, 0}};
  auto logit = Tensor::scalar(4.0, true);
  auto out = arm_forward(fmap, std::span<const ConvWindow>(no_pad), Mode::eval, logit);
  CHECK(values(out) == values(global_avg_pool(fmap)));

  const std::vector<ConvWindow> stack{{3, 1}, {3, 1}};
  auto f16 = random_tensor({2, 16, 3, 3}, rng, -1, 1, false);
  auto y = arm_forward(f16, std::span<const ConvWindow>(stack), Mode::train, logit);
  CHECK(y.shape() == Shape{2, 16});
  auto step = share_affinity(
      global_avg_pool(inverse_arrange(de_albino(feature_arrange(f16), std::span<const ConvWindow>(stack)))),
      Mode::train, logit);
  CHECK(values(y) == values(step));

  ArmHead<double> head(16, stack);
  CHECK(sigmoid(head.lambda_logit).item() > 0.98);
  CHECK(values(head.forward(f16, Mode::train)) == values(y));
  CHECK_THROWS_AS(ArmHead<double>(12, stack), ShapeError);
}

TEST_CASE("arm chain passes finite differences") {
  const std::vector<ConvWindow> stack{{3, 1}};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 20);
    auto fmap = random_tensor({3, 4, 3, 3}, rng);
    auto logit = Tensor::scalar(rng.uniform(-1, 1), true);
    auto res = grad_check({fmap, logit}, [&] {
      return weighted_sum(arm_forward(fmap, std::span<const ConvWindow>(stack), Mode::train, logit), seed);
    });
    INFO(res.worst);
    CHECK(res.max_rel_error < 1e-4);
  }
}
