#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "terraexpr/au.hpp"
#include "terraexpr/corpus.hpp"
#include "terraexpr/metrics.hpp"
#include "terraexpr/nn.hpp"
#include "terraexpr/optim.hpp"
#include "terraexpr/resnet.hpp"
#include "terraexpr/split.hpp"
#include "terraexpr/train.hpp"

// AU-conditioned expression transfer: attention/color generator, patch
// discriminator with an AU regression head, training step, corpus synthesis
// and the real-vs-generated effectiveness comparison.
namespace terraexpr {

struct GanConfig {
  std::size_t resolution = 32;  // 32 or 64
  std::size_t generator_channels = 16;
  std::size_t residual_blocks = 2;
  std::size_t discriminator_channels = 16;
  std::size_t discriminator_layers = 3;  // stride-2 convs; patch side = resolution >> layers
  double attention_bias = 3.0;           // initial attention head bias; sigmoid(3) ~ 0.95

  void validate() const;
  std::size_t patch_side() const { return resolution >> discriminator_layers; }
};

struct GanLambdas {
  double adversarial = 1.0;
  double au = 10.0;
  double attention = 0.1;
  double cycle = 10.0;

  void validate() const;
};

template <typename T>
struct GenOutput {
  BasicTensor<T> attention;  // [N,1,R,R] in [0,1]
  BasicTensor<T> color;      // [N,3,R,R] in [-1,1]
  BasicTensor<T> output;     // attention*image + (1-attention)*color
};

// [N,17] conditioning rows from AU vectors.
template <typename T>
BasicTensor<T> au_batch(const std::vector<AUVector>& aus);

template <typename T>
class Generator {
 public:
  Generator() = default;
  Generator(const GanConfig& cfg, Rng& rng);

  // images [N,3,R,R] in [-1,1], aus [N,17]. Throws std::invalid_argument on
  // a wrong resolution or values outside their ranges.
  GenOutput<T> forward(const BasicTensor<T>& images, const BasicTensor<T>& aus, Mode mode);
  // Same heads with the attention map supplied by the caller.
  GenOutput<T> forward_with_attention(const BasicTensor<T>& images, const BasicTensor<T>& aus, Mode mode,
                                      const BasicTensor<T>& attention);

  std::vector<NamedTensor<T>> state() const;
  std::vector<BasicTensor<T>> parameters() const { return trainable(state()); }

  GanConfig config;
  Conv2d<T> input_conv;
  BatchNorm2d<T> input_norm;
  std::vector<ResidualBlock<T>> blocks;
  Conv2d<T> attention_head;
  Conv2d<T> color_head;

 private:
  BasicTensor<T> trunk(const BasicTensor<T>& images, const BasicTensor<T>& aus, Mode mode);
};

template <typename T>
struct Critique {
  BasicTensor<T> realism;  // [N,1,P,P]
  BasicTensor<T> au;       // [N,17] in [0,1]
};

template <typename T>
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const GanConfig& cfg, Rng& rng);

  Critique<T> forward(const BasicTensor<T>& images) const;

  std::vector<NamedTensor<T>> state() const;
  std::vector<BasicTensor<T>> parameters() const { return trainable(state()); }

  GanConfig config;
  std::vector<Conv2d<T>> layers;
  Conv2d<T> patch_head;
  Conv2d<T> au_head;
};

inline constexpr double kLeakySlope = 0.01;

// Unweighted terms and their weighted total.
struct GanLossBreakdown {
  double adversarial = 0.0;
  double au_regression = 0.0;
  double attention_reg = 0.0;
  double cycle = 0.0;
  double total = 0.0;
};

struct DiscriminatorLoss {
  double adversarial = 0.0;
  double au_regression = 0.0;
  double total = 0.0;
};

struct GanStepResult {
  DiscriminatorLoss discriminator;
  GanLossBreakdown generator;
};

// Mean squared forward differences of the attention map plus its mean.
template <typename T>
BasicTensor<T> attention_regularizer(const BasicTensor<T>& attention);

// Generator objective for one batch. Weighted total as a graph; `parts`
// receives the unweighted terms.
template <typename T>
BasicTensor<T> generator_loss(Generator<T>& g, Discriminator<T>& d, const BasicTensor<T>& images,
                              const BasicTensor<T>& source_aus, const BasicTensor<T>& target_aus,
                              const GanLambdas& lambdas, GanLossBreakdown& parts);

template <typename T>
BasicTensor<T> discriminator_loss(Generator<T>& g, Discriminator<T>& d, const BasicTensor<T>& images,
                                  const BasicTensor<T>& source_aus, const BasicTensor<T>& target_aus,
                                  const GanLambdas& lambdas, DiscriminatorLoss& parts);

struct GanTrainConfig {
  GanConfig net;
  GanLambdas lambdas;
  AdamConfig adam{1e-4, 0.5, 0.999, 1e-8};
  std::size_t batch_size = 8;
  std::size_t steps = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

// Paired images and their source AUs, plus the pool targets are drawn from.
template <typename T>
struct GanData {
  std::size_t resolution = 0;
  std::vector<std::string> ids;
  std::vector<T> pixels;
  std::vector<AUVector> source_aus;
  std::vector<AUVector> au_pool;

  std::size_t size() const { return ids.size(); }
};

// Records with an AU vector; the pool is every record's AU.
template <typename T>
GanData<T> load_gan_data(const Corpus& corpus, std::size_t resolution, const RecordFilter& filter = {});

template <typename T>
class GanTrainer {
 public:
  GanTrainer(const GanTrainConfig& cfg);

  // One discriminator step then one generator step. A non-finite loss
  // throws NonFiniteError naming the term and step.
  GanStepResult step(const BasicTensor<T>& images, const std::vector<AUVector>& source,
                     const std::vector<AUVector>& target);
  // Samples a batch and targets from the data with the step's own seed.
  GanStepResult step(const GanData<T>& data);

  std::size_t steps_done() const { return step_; }
  Generator<T>& generator() { return g_; }
  Discriminator<T>& discriminator() { return d_; }

 private:
  GanTrainConfig cfg_;
  Generator<T> g_;
  Discriminator<T> d_;
  Adam<T> g_opt_;
  Adam<T> d_opt_;
  std::size_t step_ = 0;
};

// Directory: manifest.txt plus one tensor file per state entry, generator
// entries prefixed "g.", discriminator entries "d.".
template <typename T>
void save_gan(const std::filesystem::path& dir, Generator<T>& g, Discriminator<T>& d);
GanConfig read_gan_config(const std::filesystem::path& dir);
template <typename T>
Generator<T> load_generator(const std::filesystem::path& dir);

// Seven generated records per collected source, "<source>__<Expression>",
// written as PPM under <out_root>/images. Throws std::invalid_argument if a
// class lacks a reference AU.
std::vector<ImageRecord> synthesize_corpus(Generator<double>& g, const Corpus& sources, const ReferenceAUs& refs,
                                           const std::filesystem::path& out_root);

struct EffectivenessConfig {
  NetworkConfig net;
  TrainConfig train;
  SplitSpec split;
  std::uint64_t init_seed = 0;
};

struct EffectivenessReport {
  MetricsReport original;
  MetricsReport generated;
  std::array<double, kExpressionCount> gap{};  // |original - generated| per class
  double average_gap = 0.0;                    // on the micro averages
};

// Trains and tests the same classifier recipe on each corpus. Throws
// std::invalid_argument when a class is absent from either corpus.
EffectivenessReport effectiveness_protocol(const Corpus& original, const Corpus& generated,
                                           const EffectivenessConfig& cfg);

// Columns: arm,Surprise,Fear,Disgust,Happy,Sad,Angry,Neutral,Avg.
std::string effectiveness_to_csv(const EffectivenessReport& report);
std::string effectiveness_table(const EffectivenessReport& report);

}  // namespace terraexpr
