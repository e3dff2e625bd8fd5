#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "terraexpr/arm.hpp"
#include "terraexpr/nn.hpp"

namespace terraexpr {

inline constexpr std::size_t kClassCount = 7;

enum class HeadKind { pool_baseline, arm };

const char* head_name(HeadKind head);
HeadKind parse_head(const std::string& text);

struct NetworkConfig {
  std::size_t input_resolution = 32;
  std::size_t input_channels = 3;
  std::size_t class_count = kClassCount;
  double width_multiplier = 1.0;
  HeadKind head = HeadKind::arm;

  // Throws std::invalid_argument listing every violated constraint.
  void validate() const;
};

enum class LayerKind { conv, fc, relu, batchnorm, residual_block, pool, arm_head };

struct LayerSpec {
  LayerKind kind;
  std::string name;
  std::size_t in_channels = 0, out_channels = 0;
  std::size_t kernel = 0, stride = 1, padding = 0;
  std::size_t out_resolution = 0;

  std::string describe() const;
};

// Channel counts of the four stages: base widths 64/128/256/512 scaled and
// rounded up to a multiple of 4; with the ARM head the last stage is further
// rounded up to an even perfect square.
std::array<std::size_t, 4> stage_channels(const NetworkConfig& cfg);

// Post-activation ResNet-18: stem conv (+ max pool at 224), four stages of two
// residual blocks each followed by ReLU, then the head and a final FC.
// Desk-scale inputs (32, 64) use a 3x3 stride-2 stem without max pool.
template <typename T>
class ResNet18 {
 public:
  ResNet18(NetworkConfig cfg, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t weighted_layer_count() const;
  std::size_t parameter_count() const;

  // [N,3,R,R] -> logits [N,class_count]. Eval mode records no graph.
  BasicTensor<T> forward(const BasicTensor<T>& batch, Mode mode);
  // Penultimate feature vector [N,D] fed to the classifier.
  BasicTensor<T> embed(const BasicTensor<T>& batch, Mode mode);
  BasicTensor<T> backbone(const BasicTensor<T>& batch, Mode mode);

  std::vector<NamedTensor<T>> state() const;
  std::vector<BasicTensor<T>> parameters() const { return trainable(state()); }

  Conv2d<T> stem;
  BatchNorm2d<T> stem_norm;
  std::vector<ResidualBlock<T>> blocks;
  ArmHead<T> arm;
  Linear<T> classifier;

 private:
  void build_topology();

  NetworkConfig config_;
  std::size_t stem_pool_ = 0;
  std::vector<LayerSpec> layers_;
};

class NetworkCheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Directory layout: manifest.txt (config, layer order, tensor list) plus one
// tensor file per state entry.
template <typename T>
void save_network(const std::filesystem::path& dir, const ResNet18<T>& net);

NetworkConfig read_network_config(const std::filesystem::path& dir);
DType read_network_dtype(const std::filesystem::path& dir);

template <typename T>
ResNet18<T> load_network(const std::filesystem::path& dir);

}  // namespace terraexpr
