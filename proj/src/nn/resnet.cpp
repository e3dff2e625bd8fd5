#include "terraexpr/resnet.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "terraexpr/checkpoint.hpp"

namespace terraexpr {

const char* head_name(HeadKind head) { return head == HeadKind::arm ? "arm" : "pool"; }

HeadKind parse_head(const std::string& text) {
  if (text == "arm") return HeadKind::arm;
  if (text == "pool" || text == "pool-baseline") return HeadKind::pool_baseline;
  throw std::invalid_argument("unknown head '" + text + "' (expected arm or pool)");
}

void NetworkConfig::validate() const {
  std::vector<std::string> problems;
  if (input_resolution != 32 && input_resolution != 64 && input_resolution != 224) {
    problems.push_back("input_resolution must be 32, 64 or 224 (got " +
                       std::to_string(input_resolution) + ")");
  }
  if (input_channels != 3) problems.push_back("input_channels must be 3");
  if (class_count != kClassCount) problems.push_back("class_count must be 7");
  if (!(width_multiplier > 0.0 && width_multiplier <= 1.0)) {
    problems.push_back("width_multiplier must lie in (0, 1]");
  }
  if (problems.empty()) return;
  std::string message = "invalid network config:";
  for (const auto& p : problems) message += " " + p + ";";
  throw std::invalid_argument(message);
}

std::string LayerSpec::describe() const {
  static const char* names[] = {"conv", "fc", "relu", "batchnorm", "residual-block", "pool", "arm-head"};
  std::ostringstream out;
  out << name << ' ' << names[static_cast<int>(kind)] << " in=" << in_channels
      << " out=" << out_channels << " k=" << kernel << " s=" << stride << " p=" << padding
      << " res=" << out_resolution;
  return out.str();
}

std::array<std::size_t, 4> stage_channels(const NetworkConfig& cfg) {
  constexpr std::array<std::size_t, 4> base{64, 128, 256, 512};
  std::array<std::size_t, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto scaled = static_cast<std::size_t>(std::ceil(static_cast<double>(base[i]) * cfg.width_multiplier - 1e-9));
    out[i] = std::max<std::size_t>(4, (scaled + 3) / 4 * 4);
  }
  if (cfg.head == HeadKind::arm) {
    std::size_t side = 2;
    while (side * side < out[3]) side += 2;
    out[3] = side * side;
  }
  return out;
}

template <typename T>
ResNet18<T>::ResNet18(NetworkConfig cfg, std::uint64_t seed) : config_(cfg) {
  config_.validate();
  Rng rng(seed);
  const auto widths = stage_channels(config_);
  if (config_.input_resolution == 224) {
    stem = Conv2d<T>(config_.input_channels, widths[0], 7, 2, 3, false, rng);
    stem_pool_ = 2;
  } else {
    stem = Conv2d<T>(config_.input_channels, widths[0], 3, 2, 1, false, rng);
  }
  stem_norm = BatchNorm2d<T>(widths[0]);
  std::size_t in = widths[0];
  for (std::size_t stage = 0; stage < 4; ++stage) {
    for (std::size_t b = 0; b < 2; ++b) {
      const std::size_t stride = (stage > 0 && b == 0) ? 2 : 1;
      blocks.emplace_back(in, widths[stage], stride, rng);
      in = widths[stage];
    }
  }
  if (config_.head == HeadKind::arm) {
    const auto& last = blocks.back();
    arm = ArmHead<T>(in, {{last.conv1.kernel, last.conv1.padding}, {last.conv2.kernel, last.conv2.padding}});
  }
  classifier = Linear<T>(in, config_.class_count, rng);
  build_topology();
}

template <typename T>
void ResNet18<T>::build_topology() {
  auto conv_out = [](std::size_t r, std::size_t k, std::size_t s, std::size_t p) {
    if (r + 2 * p < k) throw std::invalid_argument("network topology: kernel exceeds input");
    return (r + 2 * p - k) / s + 1;
  };
  layers_.clear();
  std::size_t res = conv_out(config_.input_resolution, stem.kernel, stem.stride, stem.padding);
  layers_.push_back({LayerKind::conv, "stem", stem.in_channels, stem.out_channels, stem.kernel,
                     stem.stride, stem.padding, res});
  layers_.push_back({LayerKind::batchnorm, "stem_norm", stem.out_channels, stem.out_channels, 0, 1, 0, res});
  layers_.push_back({LayerKind::relu, "stem_relu", stem.out_channels, stem.out_channels, 0, 1, 0, res});
  if (stem_pool_) {
    res = conv_out(res, stem_pool_, stem_pool_, 0);
    layers_.push_back({LayerKind::pool, "stem_pool", stem.out_channels, stem.out_channels, stem_pool_,
                       stem_pool_, 0, res});
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    res = conv_out(res, 3, b.stride, 1);
    const std::string name = "block" + std::to_string(i);
    layers_.push_back({LayerKind::residual_block, name, b.in_channels, b.out_channels, 3, b.stride, 1, res});
    layers_.push_back({LayerKind::relu, name + "_relu", b.out_channels, b.out_channels, 0, 1, 0, res});
  }
  const std::size_t features = blocks.back().out_channels;
  if (config_.head == HeadKind::arm) {
    arrangement_side(features);
    layers_.push_back({LayerKind::arm_head, "arm", features, features, 0, 1, 0, 1});
  } else {
    layers_.push_back({LayerKind::pool, "global_pool", features, features, res, 1, 0, 1});
  }
  layers_.push_back({LayerKind::fc, "classifier", classifier.in_features, classifier.out_features, 0, 1, 0, 1});
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    if (layers_[i].in_channels != layers_[i - 1].out_channels) {
      throw std::invalid_argument("network topology: " + layers_[i].name + " expects " +
                                  std::to_string(layers_[i].in_channels) + " channels but " +
                                  layers_[i - 1].name + " produces " +
                                  std::to_string(layers_[i - 1].out_channels));
    }
  }
}

template <typename T>
std::size_t ResNet18<T>::weighted_layer_count() const {
  // Projection shortcuts are not counted, following the usual ResNet depth convention.
  std::size_t count = 0;
  for (const auto& layer : layers_) {
    if (layer.kind == LayerKind::conv || layer.kind == LayerKind::fc) count += 1;
    if (layer.kind == LayerKind::residual_block) count += 2;
  }
  return count;
}

template <typename T>
std::size_t ResNet18<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.numel();
  return total;
}

template <typename T>
BasicTensor<T> ResNet18<T>::backbone(const BasicTensor<T>& batch, Mode mode) {
  if (batch.rank() != 4 || batch.dim(1) != config_.input_channels ||
      batch.dim(2) != config_.input_resolution || batch.dim(3) != config_.input_resolution) {
    throw ShapeError("network expects [N," + std::to_string(config_.input_channels) + "," +
                     std::to_string(config_.input_resolution) + "," +
                     std::to_string(config_.input_resolution) + "], got " + shape_string(batch.shape()));
  }
  auto x = relu(stem_norm.forward(stem.forward(batch), mode));
  if (stem_pool_) x = pool2d(PoolKind::max, x, stem_pool_, stem_pool_);
  for (auto& block : blocks) x = relu(block.forward(x, mode));
  return x;
}

template <typename T>
BasicTensor<T> ResNet18<T>::embed(const BasicTensor<T>& batch, Mode mode) {
  std::optional<NoGradGuard> guard;
  if (mode == Mode::eval) guard.emplace();
  const auto fmap = backbone(batch, mode);
  return config_.head == HeadKind::arm ? arm.forward(fmap, mode) : global_avg_pool(fmap);
}

template <typename T>
BasicTensor<T> ResNet18<T>::forward(const BasicTensor<T>& batch, Mode mode) {
  std::optional<NoGradGuard> guard;
  if (mode == Mode::eval) guard.emplace();
  return classifier.forward(embed(batch, mode));
}

template <typename T>
std::vector<NamedTensor<T>> ResNet18<T>::state() const {
  std::vector<NamedTensor<T>> out;
  stem.collect("stem", out);
  stem_norm.collect("stem_norm", out);
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect("block" + std::to_string(i), out);
  if (config_.head == HeadKind::arm) arm.collect("arm", out);
  classifier.collect("classifier", out);
  return out;
}

namespace {

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

std::map<std::string, std::vector<std::string>> read_manifest_lines(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw NetworkCheckpointError("missing " + (dir / "manifest.txt").string());
  std::map<std::string, std::vector<std::string>> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw NetworkCheckpointError("malformed manifest line: " + line);
    entries[line.substr(0, eq)].push_back(line.substr(eq + 3));
  }
  return entries;
}

const std::string& single(const std::map<std::string, std::vector<std::string>>& entries,
                          const std::string& key) {
  auto it = entries.find(key);
  if (it == entries.end() || it->second.size() != 1) {
    throw NetworkCheckpointError("manifest needs exactly one '" + key + "' entry");
  }
  return it->second.front();
}

}  // namespace

template <typename T>
void save_network(const std::filesystem::path& dir, const ResNet18<T>& net) {
  std::filesystem::create_directories(dir);
  const auto& cfg = net.config();
  std::ofstream out(dir / "manifest.txt", std::ios::trunc);
  out << "kind = resnet18\n";
  out << "version = 1\n";
  out << "dtype = " << dtype_traits<T>::name << '\n';
  out << "net.input_resolution = " << cfg.input_resolution << '\n';
  out << "net.input_channels = " << cfg.input_channels << '\n';
  out << "net.class_count = " << cfg.class_count << '\n';
  out << "net.width_multiplier = " << format_double(cfg.width_multiplier) << '\n';
  out << "net.head = " << head_name(cfg.head) << '\n';
  for (const auto& layer : net.layers()) out << "layer = " << layer.describe() << '\n';
  for (const auto& entry : net.state()) {
    out << "tensor = " << entry.name << '\n';
    write_tensor(dir / (entry.name + ".texp"), entry.tensor);
  }
  if (!out) throw NetworkCheckpointError("failed writing " + (dir / "manifest.txt").string());
}

NetworkConfig read_network_config(const std::filesystem::path& dir) {
  const auto entries = read_manifest_lines(dir);
  if (single(entries, "kind") != "resnet18") throw NetworkCheckpointError("not a resnet18 checkpoint");
  NetworkConfig cfg;
  cfg.input_resolution = std::stoul(single(entries, "net.input_resolution"));
  cfg.input_channels = std::stoul(single(entries, "net.input_channels"));
  cfg.class_count = std::stoul(single(entries, "net.class_count"));
  cfg.width_multiplier = std::stod(single(entries, "net.width_multiplier"));
  cfg.head = parse_head(single(entries, "net.head"));
  return cfg;
}

DType read_network_dtype(const std::filesystem::path& dir) {
  const auto entries = read_manifest_lines(dir);
  const auto& name = single(entries, "dtype");
  if (name == "f64") return DType::f64;
  if (name == "f32") return DType::f32;
  throw NetworkCheckpointError("unknown dtype '" + name + "'");
}

template <typename T>
ResNet18<T> load_network(const std::filesystem::path& dir) {
  const auto entries = read_manifest_lines(dir);
  if (single(entries, "dtype") != dtype_traits<T>::name) {
    throw NetworkCheckpointError("checkpoint dtype " + single(entries, "dtype") + " does not match " +
                                 dtype_traits<T>::name);
  }
  ResNet18<T> net(read_network_config(dir), 0);
  auto state = net.state();
  const auto& names = entries.at("tensor");
  if (names.size() != state.size()) throw NetworkCheckpointError("checkpoint tensor count mismatch");
  std::vector<NamedTensor<T>> loaded;
  for (std::size_t i = 0; i < names.size(); ++i) {
    loaded.push_back({names[i], read_tensor<T>(dir / (names[i] + ".texp")), state[i].trainable});
  }
  copy_state(loaded, state);
  return net;
}

template class ResNet18<double>;
template class ResNet18<float>;
template void save_network(const std::filesystem::path&, const ResNet18<double>&);
template void save_network(const std::filesystem::path&, const ResNet18<float>&);
template ResNet18<double> load_network(const std::filesystem::path&);
template ResNet18<float> load_network(const std::filesystem::path&);

}  // namespace terraexpr
