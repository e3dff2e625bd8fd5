#include <filesystem>

#include "doctest.h"
#include "golden.hpp"
#include "gradcheck.hpp"
#include "terraexpr/loss.hpp"
#include "terraexpr/resnet.hpp"

using namespace terraexpr;
using testing_support::grad_check;
using testing_support::random_tensor;
using testing_support::weighted_sum;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

void zero_fill(Tensor t) {
  for (auto& v : t.mutable_data()) v = 0.0;
}

// Parameter count of the torchvision-style ResNet-18 with a 7-way FC,
// derived from the layer list.
std::size_t reference_resnet18_parameters() {
  auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return in * out * k * k; };
  auto bn = [](std::size_t c) { return 2 * c; };
  std::size_t total = conv(3, 64, 7) + bn(64);
  const std::size_t widths[] = {64, 128, 256, 512};
  std::size_t in = 64;
  for (std::size_t stage = 0; stage < 4; ++stage) {
    const std::size_t w = widths[stage];
    for (int b = 0; b < 2; ++b) {
      total += conv(in, w, 3) + bn(w) + conv(w, w, 3) + bn(w);
      if (in != w || (stage > 0 && b == 0)) total += conv(in, w, 1) + bn(w);
      in = w;
    }
  }
  return total + 512 * 7 + 7;
}

}  // namespace

TEST_CASE("residual identity: zero residual branch gives y == x exactly") {
  Rng init(1);
  ResidualBlock<double> block(4, 4, 1, init);
  zero_fill(block.conv1.weight);
  zero_fill(block.conv2.weight);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto x = random_tensor({2, 4, 5, 5}, rng, -3, 3, false);
    auto y = block.forward(x, Mode::train);
    CHECK(y.shape() == x.shape());
    CHECK(values(y) == values(x));
  }
}

TEST_CASE("residual block equals explicit composition of primitives") {
  for (std::size_t variant = 0; variant < 2; ++variant) {
    Rng init(2 + variant);
    const std::size_t out = variant == 0 ? 3 : 6, stride = variant == 0 ? 1 : 2;
    ResidualBlock<double> block(3, out, stride, init);
    Rng rng(9);
    auto x = random_tensor({2, 3, 6, 6}, rng, -1, 1, false);
    auto y = block.forward(x, Mode::train);

    auto bn = [](const Tensor& v, std::size_t c) {
      BatchNormStats<double> s{std::vector<double>(c, 0.0), std::vector<double>(c, 1.0)};
      return batch_norm2d(v, Tensor::full({c}, 1.0), Tensor::zeros({c}), s, true, 0.1, 1e-5);
    };
    auto f = bn(conv2d(relu(bn(conv2d(x, block.conv1.weight, stride, 1), out)), block.conv2.weight, 1, 1), out);
    auto skip = variant == 0 ? x : bn(conv2d(x, block.projection.weight, stride, 0), out);
    CHECK(block.has_projection() == (variant == 1));
    CHECK(values(y) == values(add(f, skip)));
  }
}

TEST_CASE("residual block rejects mismatched input") {
  Rng init(1);
  ResidualBlock<double> block(4, 4, 1, init);
  CHECK_THROWS_AS(block.forward(Tensor::zeros({1, 3, 4, 4}), Mode::train), ShapeError);
}

TEST_CASE("layers pass finite differences") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng init(seed);
    Conv2d<double> conv(2, 3, 3, 1, 1, true, init);
    BatchNorm2d<double> norm(3);
    ResidualBlock<double> block(3, 4, 2, init);
    Linear<double> fc(16, 5, init);
    Rng rng(seed + 50);
    auto x = random_tensor({2, 2, 4, 4}, rng);
    std::vector<NamedTensor<double>> state;
    conv.collect("conv", state);
    norm.collect("norm", state);
    block.collect("block", state);
    fc.collect("fc", state);
    auto params = trainable(state);
    params.push_back(x);
    auto res = grad_check(params, [&] {
      auto h = relu(norm.forward(conv.forward(x), Mode::train));
      auto b = block.forward(h, Mode::train);
      return weighted_sum(fc.forward(reshape(b, {2, 16})), seed);
    });
    INFO(res.worst);
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("two-conv plus FC toy net: every parameter passes finite differences") {
  Rng init(77);
  Conv2d<double> c1(1, 2, 3, 1, 1, true, init);
  Conv2d<double> c2(2, 2, 3, 2, 0, true, init);
  Linear<double> fc(2, 3, init);
  Rng rng(78);
  auto x = random_tensor({2, 1, 5, 5}, rng, -1, 1, false);
  const std::vector<std::size_t> labels{1, 2};
  std::vector<NamedTensor<double>> state;
  c1.collect("c1", state);
  c2.collect("c2", state);
  fc.collect("fc", state);
  auto res = grad_check(trainable(state), [&] {
    auto h = relu(c2.forward(relu(c1.forward(x))));
    auto logits = fc.forward(global_avg_pool(h));
    return cross_entropy(softmax(logits), labels);
  });
  INFO(res.worst);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("network topology") {
  NetworkConfig big;
  big.input_resolution = 224;
  big.head = HeadKind::pool_baseline;
  ResNet18<double> pool_net(big, 1);
  CHECK(pool_net.weighted_layer_count() == 18);
  CHECK(pool_net.parameter_count() == reference_resnet18_parameters());
  big.head = HeadKind::arm;
  ResNet18<double> arm_net(big, 1);
  CHECK(arm_net.weighted_layer_count() == 18);
  CHECK(stage_channels(big) == std::array<std::size_t, 4>{64, 128, 256, 576});

  NetworkConfig toy;
  toy.width_multiplier = 0.25;
  CHECK(stage_channels(toy) == std::array<std::size_t, 4>{16, 32, 64, 144});
  toy.head = HeadKind::pool_baseline;
  CHECK(stage_channels(toy) == std::array<std::size_t, 4>{16, 32, 64, 128});
  toy.width_multiplier = 0.1;
  CHECK(stage_channels(toy) == std::array<std::size_t, 4>{8, 16, 28, 52});
}

TEST_CASE("invalid configs list every violation") {
  NetworkConfig cfg;
  cfg.input_resolution = 48;
  cfg.width_multiplier = 1.5;
  cfg.class_count = 6;
  try {
    cfg.validate();
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("input_resolution") != std::string::npos);
    CHECK(msg.find("width_multiplier") != std::string::npos);
    CHECK(msg.find("class_count") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_head("max"), std::invalid_argument);
}

TEST_CASE("toy network forward contract") {
  NetworkConfig cfg;
  cfg.width_multiplier = 0.25;
  ResNet18<double> net(cfg, 3);
  Rng rng(4);
  auto x = random_tensor({1, 3, 32, 32}, rng, -1, 1, false);
  auto logits = net.forward(x, Mode::eval);
  CHECK(logits.shape() == Shape{1, 7});
  CHECK_FALSE(logits.requires_grad());
  CHECK(net.forward(x, Mode::train).requires_grad());
  CHECK_THROWS_AS(net.forward(Tensor::zeros({1, 3, 64, 64}), Mode::eval), ShapeError);

  cfg.input_resolution = 64;
  ResNet18<double> net64(cfg, 3);
  CHECK(net64.forward(Tensor::zeros({2, 3, 64, 64}), Mode::eval).shape() == Shape{2, 7});
}

TEST_CASE("zero FC gives uniform softmax") {
  NetworkConfig cfg;
  cfg.width_multiplier = 0.25;
  ResNet18<double> net(cfg, 5);
  zero_fill(net.classifier.weight);
  auto probs = softmax(net.forward(Tensor::zeros({1, 3, 32, 32}), Mode::eval));
  for (double p : probs.data()) CHECK(p == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("eval logits do not depend on batch composition") {
  for (auto head : {HeadKind::arm, HeadKind::pool_baseline}) {
    NetworkConfig cfg;
    cfg.width_multiplier = 0.25;
    cfg.head = head;
    ResNet18<double> net(cfg, 6);
    Rng rng(7);
    auto one = random_tensor({1, 3, 32, 32}, rng, -1, 1, false);
    std::vector<double> four;
    for (int i = 0; i < 4; ++i) four.insert(four.end(), one.data().begin(), one.data().end());
    auto single = net.forward(one, Mode::eval);
    auto batch = net.forward(Tensor::from_data({4, 3, 32, 32}, four), Mode::eval);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t k = 0; k < 7; ++k) CHECK(std::abs(batch.data()[r * 7 + k] - single.data()[k]) < 1e-9);
  }
}

TEST_CASE("network is deterministic given the seed and matches the golden logits") {
  NetworkConfig cfg;
  cfg.width_multiplier = 0.25;
  Rng rng(8);
  auto x = random_tensor({3, 3, 32, 32}, rng, -1, 1, false);
  ResNet18<double> a(cfg, 11), b(cfg, 11);
  auto la = a.forward(x, Mode::eval);
  CHECK(values(la) == values(b.forward(x, Mode::eval)));
  const auto golden = testing_support::golden_tensor("resnet_toy_eval_logits.texp", la);
  CHECK(values(la) == values(golden));
}

TEST_CASE("network checkpoint round trip") {
  NetworkConfig cfg;
  cfg.width_multiplier = 0.25;
  ResNet18<double> net(cfg, 12);
  Rng rng(13);
  auto x = random_tensor({2, 3, 32, 32}, rng, -1, 1, false);
  (void)net.forward(x, Mode::train);  // moves the running statistics
  const auto dir = std::filesystem::temp_directory_path() / "terraexpr_nn_ckpt";
  std::filesystem::remove_all(dir);
  save_network(dir, net);
  CHECK(std::filesystem::exists(dir / "manifest.txt"));
  auto loaded = load_network<double>(dir);
  CHECK(values(loaded.forward(x, Mode::eval)) == values(net.forward(x, Mode::eval)));
  CHECK(read_network_config(dir).head == HeadKind::arm);
  CHECK_THROWS_AS(load_network<float>(dir), NetworkCheckpointError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("batch of one trains with instance statistics") {
  NetworkConfig cfg;
  cfg.width_multiplier = 0.25;
  ResNet18<double> net(cfg, 14);
  Rng rng(15);
  auto x = random_tensor({1, 3, 32, 32}, rng, -1, 1, false);
  auto loss = cross_entropy(softmax(net.forward(x, Mode::train)), std::vector<std::size_t>{2});
  loss.backward();
  CHECK(net.classifier.weight.has_grad());
}
