#include "terraexpr/gan.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "terraexpr/checkpoint.hpp"
#include "terraexpr/image.hpp"

namespace terraexpr {

void GanConfig::validate() const {
  std::vector<std::string> problems;
  if (resolution != 32 && resolution != 64) problems.push_back("gan.resolution must be 32 or 64");
  if (generator_channels == 0) problems.push_back("gan.generator_channels must be >= 1");
  if (discriminator_channels == 0) problems.push_back("gan.discriminator_channels must be >= 1");
  if (discriminator_layers == 0 || (resolution >> discriminator_layers) == 0) {
    problems.push_back("gan.discriminator_layers must leave a patch grid of at least 1x1");
  }
  if (!std::isfinite(attention_bias)) problems.push_back("gan.attention_bias must be finite");
  if (problems.empty()) return;
  std::string msg = "invalid gan config:";
  for (const auto& p : problems) msg += " " + p + ";";
  throw std::invalid_argument(msg);
}

void GanLambdas::validate() const {
  for (double v : {adversarial, au, attention, cycle}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("gan lambdas must be finite and >= 0");
  }
}

void GanTrainConfig::validate() const {
  net.validate();
  lambdas.validate();
  adam.validate();
  if (batch_size == 0) throw std::invalid_argument("gan batch_size must be >= 1");
}

template <typename T>
BasicTensor<T> au_batch(const std::vector<AUVector>& aus) {
  std::vector<T> values;
  values.reserve(aus.size() * kAuCount);
  for (const auto& a : aus)
    for (double v : a.values) values.push_back(static_cast<T>(v));
  return BasicTensor<T>::from_data({aus.size(), kAuCount}, std::move(values));
}

namespace {

template <typename T>
void check_range(const BasicTensor<T>& x, double lo, double hi, const char* what) {
  const double slack = 1e-6;
  for (auto v : x.data()) {
    if (!(static_cast<double>(v) >= lo - slack && static_cast<double>(v) <= hi + slack)) {
      throw std::invalid_argument(std::string(what) + " value outside [" + std::to_string(lo) + ", " +
                                  std::to_string(hi) + "]");
    }
  }
}

}  // namespace

template <typename T>
Generator<T>::Generator(const GanConfig& cfg, Rng& rng) : config(cfg) {
  config.validate();
  const std::size_t c = cfg.generator_channels;
  input_conv = Conv2d<T>(3 + kAuCount, c, 3, 1, 1, false, rng);
  input_norm = BatchNorm2d<T>(c);
  for (std::size_t i = 0; i < cfg.residual_blocks; ++i) blocks.emplace_back(c, c, 1, rng);
  attention_head = Conv2d<T>(c, 1, 3, 1, 1, true, rng);
  for (auto& b : attention_head.bias.mutable_data()) b = static_cast<T>(cfg.attention_bias);
  color_head = Conv2d<T>(c, 3, 3, 1, 1, true, rng);
}

template <typename T>
BasicTensor<T> Generator<T>::trunk(const BasicTensor<T>& images, const BasicTensor<T>& aus, Mode mode) {
  const std::size_t r = config.resolution;
  if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != r || images.dim(3) != r) {
    throw std::invalid_argument("generator expects [N,3," + std::to_string(r) + "," + std::to_string(r) + "], got " +
                                shape_string(images.shape()));
  }
  if (aus.rank() != 2 || aus.dim(0) != images.dim(0) || aus.dim(1) != kAuCount) {
    throw std::invalid_argument("generator expects AU conditioning [N,17], got " + shape_string(aus.shape()));
  }
  check_range(images, -1.0, 1.0, "image");
  check_range(aus, 0.0, 1.0, "AU");
  auto h = relu(input_norm.forward(input_conv.forward(concat_channels<T>({images, tile_spatial(aus, r, r)})), mode));
  for (auto& b : blocks) h = relu(b.forward(h, mode));
  return h;
}

template <typename T>
GenOutput<T> Generator<T>::forward(const BasicTensor<T>& images, const BasicTensor<T>& aus, Mode mode) {
  const auto h = trunk(images, aus, mode);
  GenOutput<T> out;
  out.attention = sigmoid(attention_head.forward(h));
  out.color = tanh(color_head.forward(h));
  out.output = attention_blend(out.attention, images, out.color);
  return out;
}

template <typename T>
GenOutput<T> Generator<T>::forward_with_attention(const BasicTensor<T>& images, const BasicTensor<T>& aus, Mode mode,
                                                  const BasicTensor<T>& attention) {
  const auto h = trunk(images, aus, mode);
  GenOutput<T> out;
  out.attention = attention;
  out.color = tanh(color_head.forward(h));
  out.output = attention_blend(out.attention, images, out.color);
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> Generator<T>::state() const {
  std::vector<NamedTensor<T>> out;
  input_conv.collect("input_conv", out);
  input_norm.collect("input_norm", out);
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect("block" + std::to_string(i), out);
  attention_head.collect("attention_head", out);
  color_head.collect("color_head", out);
  return out;
}

template <typename T>
Discriminator<T>::Discriminator(const GanConfig& cfg, Rng& rng) : config(cfg) {
  config.validate();
  std::size_t in = 3, out = cfg.discriminator_channels;
  for (std::size_t i = 0; i < cfg.discriminator_layers; ++i) {
    layers.emplace_back(in, out, 4, 2, 1, true, rng);
    in = out;
    out *= 2;
  }
  patch_head = Conv2d<T>(in, 1, 3, 1, 1, true, rng);
  au_head = Conv2d<T>(in, kAuCount, 3, 1, 1, true, rng);
}

template <typename T>
Critique<T> Discriminator<T>::forward(const BasicTensor<T>& images) const {
  const std::size_t r = config.resolution;
  if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != r || images.dim(3) != r) {
    throw std::invalid_argument("discriminator expects [N,3," + std::to_string(r) + "," + std::to_string(r) +
                                "], got " + shape_string(images.shape()));
  }
  auto h = images;
  for (const auto& l : layers) h = leaky_relu(l.forward(h), static_cast<T>(kLeakySlope));
  return {patch_head.forward(h), sigmoid(global_avg_pool(au_head.forward(h)))};
}

template <typename T>
std::vector<NamedTensor<T>> Discriminator<T>::state() const {
  std::vector<NamedTensor<T>> out;
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect("layer" + std::to_string(i), out);
  patch_head.collect("patch_head", out);
  au_head.collect("au_head", out);
  return out;
}

template <typename T>
BasicTensor<T> attention_regularizer(const BasicTensor<T>& attention) {
  return mean(square(shift_difference(attention, 2))) + mean(square(shift_difference(attention, 3))) +
         mean(attention);
}

template <typename T>
BasicTensor<T> generator_loss(Generator<T>& g, Discriminator<T>& d, const BasicTensor<T>& images,
                              const BasicTensor<T>& source_aus, const BasicTensor<T>& target_aus,
                              const GanLambdas& lambdas, GanLossBreakdown& parts) {
  const auto gen = g.forward(images, target_aus, Mode::train);
  const auto critique = d.forward(gen.output);
  const auto adv = mean(square(critique.realism - T(1)));
  const auto au = mean(square(critique.au - target_aus));
  const auto att = attention_regularizer(gen.attention);
  const auto cyc = mean(abs(g.forward(gen.output, source_aus, Mode::train).output - images));
  const auto total = adv * static_cast<T>(lambdas.adversarial) + au * static_cast<T>(lambdas.au) +
                     att * static_cast<T>(lambdas.attention) + cyc * static_cast<T>(lambdas.cycle);
  parts.adversarial = static_cast<double>(adv.item());
  parts.au_regression = static_cast<double>(au.item());
  parts.attention_reg = static_cast<double>(att.item());
  parts.cycle = static_cast<double>(cyc.item());
  parts.total = static_cast<double>(total.item());
  return total;
}

template <typename T>
BasicTensor<T> discriminator_loss(Generator<T>& g, Discriminator<T>& d, const BasicTensor<T>& images,
                                  const BasicTensor<T>& source_aus, const BasicTensor<T>& target_aus,
                                  const GanLambdas& lambdas, DiscriminatorLoss& parts) {
  const auto fake = g.forward(images, target_aus, Mode::train).output.detach();
  const auto real = d.forward(images);
  const auto adv = mean(square(real.realism - T(1))) + mean(square(d.forward(fake).realism));
  const auto au = mean(square(real.au - source_aus));
  const auto total = adv * static_cast<T>(lambdas.adversarial) + au * static_cast<T>(lambdas.au);
  parts.adversarial = static_cast<double>(adv.item());
  parts.au_regression = static_cast<double>(au.item());
  parts.total = static_cast<double>(total.item());
  return total;
}

template <typename T>
GanData<T> load_gan_data(const Corpus& corpus, std::size_t resolution, const RecordFilter& filter) {
  GanData<T> data;
  data.resolution = resolution;
  for (const auto& r : corpus.records()) {
    if (!r.au || (filter && !filter(r))) continue;
    auto img = read_ppm(corpus.image_path(r));
    if (img.width != resolution || img.height != resolution) img = resize_bilinear(img, resolution, resolution);
    append_planar(img, data.pixels);
    data.ids.push_back(r.id);
    data.source_aus.push_back(*r.au);
  }
  data.au_pool = data.source_aus;
  return data;
}

template <typename T>
GanTrainer<T>::GanTrainer(const GanTrainConfig& cfg)
    : cfg_(cfg),
      g_([&] {
        cfg.validate();
        Rng rng(derive_seed(cfg.seed, "generator"));
        return Generator<T>(cfg.net, rng);
      }()),
      d_([&] {
        Rng rng(derive_seed(cfg.seed, "discriminator"));
        return Discriminator<T>(cfg.net, rng);
      }()),
      g_opt_(g_.parameters(), cfg.adam),
      d_opt_(d_.parameters(), cfg.adam) {}

template <typename T>
GanStepResult GanTrainer<T>::step(const BasicTensor<T>& images, const std::vector<AUVector>& source,
                                  const std::vector<AUVector>& target) {
  const auto src = au_batch<T>(source), tgt = au_batch<T>(target);
  auto finite = [&](double v, const std::string& what) {
    if (!std::isfinite(v)) {
      throw NonFiniteError("gan step " + std::to_string(step_ + 1) + ": " + what + " is not finite (" +
                           std::to_string(v) + ")");
    }
  };
  GanStepResult result;
  d_opt_.zero_grad();
  g_opt_.zero_grad();
  auto dl = discriminator_loss(g_, d_, images, src, tgt, cfg_.lambdas, result.discriminator);
  finite(result.discriminator.adversarial, "discriminator adversarial loss");
  finite(result.discriminator.au_regression, "discriminator AU loss");
  dl.backward();
  d_opt_.step();

  d_opt_.zero_grad();
  g_opt_.zero_grad();
  auto gl = generator_loss(g_, d_, images, src, tgt, cfg_.lambdas, result.generator);
  finite(result.generator.adversarial, "generator adversarial loss");
  finite(result.generator.au_regression, "generator AU loss");
  finite(result.generator.attention_reg, "attention regularizer");
  finite(result.generator.cycle, "cycle loss");
  gl.backward();
  g_opt_.step();
  ++step_;
  return result;
}

template <typename T>
GanStepResult GanTrainer<T>::step(const GanData<T>& data) {
  if (data.size() == 0 || data.au_pool.empty()) throw std::invalid_argument("gan training data is empty");
  Rng rng(derive_seed(cfg_.seed, "gan-step:" + std::to_string(step_)));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span(order));
  const std::size_t b = std::min(cfg_.batch_size, data.size());
  const std::size_t sample = 3 * data.resolution * data.resolution;
  std::vector<T> pixels;
  std::vector<AUVector> source, target;
  for (std::size_t i = 0; i < b; ++i) {
    const auto* p = data.pixels.data() + order[i] * sample;
    pixels.insert(pixels.end(), p, p + sample);
    source.push_back(data.source_aus[order[i]]);
    target.push_back(data.au_pool[static_cast<std::size_t>(rng.below(data.au_pool.size()))]);
  }
  return step(BasicTensor<T>::from_data({b, 3, data.resolution, data.resolution}, std::move(pixels)), source, target);
}

namespace {

std::map<std::string, std::vector<std::string>> read_gan_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw std::runtime_error("missing " + (dir / "manifest.txt").string());
  std::map<std::string, std::vector<std::string>> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw std::runtime_error("malformed gan manifest line: " + line);
    entries[line.substr(0, eq)].push_back(line.substr(eq + 3));
  }
  if (entries["kind"] != std::vector<std::string>{"gan"}) throw std::runtime_error("not a gan checkpoint");
  return entries;
}

const std::string& one(const std::map<std::string, std::vector<std::string>>& entries, const std::string& key) {
  auto it = entries.find(key);
  if (it == entries.end() || it->second.size() != 1) {
    throw std::runtime_error("gan manifest needs exactly one '" + key + "' entry");
  }
  return it->second.front();
}

}  // namespace

template <typename T>
void save_gan(const std::filesystem::path& dir, Generator<T>& g, Discriminator<T>& d) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "manifest.txt", std::ios::trunc);
  const auto& c = g.config;
  out << "kind = gan\nversion = 1\ndtype = " << dtype_traits<T>::name << '\n';
  out << "gan.resolution = " << c.resolution << '\n';
  out << "gan.generator_channels = " << c.generator_channels << '\n';
  out << "gan.residual_blocks = " << c.residual_blocks << '\n';
  out << "gan.discriminator_channels = " << c.discriminator_channels << '\n';
  out << "gan.discriminator_layers = " << c.discriminator_layers << '\n';
  out.precision(17);
  out << "gan.attention_bias = " << c.attention_bias << '\n';
  for (const auto& [prefix, state] : {std::pair{"g.", g.state()}, std::pair{"d.", d.state()}}) {
    for (const auto& e : state) {
      out << "tensor = " << prefix << e.name << '\n';
      write_tensor(dir / (prefix + e.name + ".texp"), e.tensor);
    }
  }
  if (!out) throw std::runtime_error("failed writing " + (dir / "manifest.txt").string());
}

GanConfig read_gan_config(const std::filesystem::path& dir) {
  const auto entries = read_gan_manifest(dir);
  GanConfig c;
  c.resolution = std::stoul(one(entries, "gan.resolution"));
  c.generator_channels = std::stoul(one(entries, "gan.generator_channels"));
  c.residual_blocks = std::stoul(one(entries, "gan.residual_blocks"));
  c.discriminator_channels = std::stoul(one(entries, "gan.discriminator_channels"));
  c.discriminator_layers = std::stoul(one(entries, "gan.discriminator_layers"));
  c.attention_bias = std::stod(one(entries, "gan.attention_bias"));
  c.validate();
  return c;
}

template <typename T>
Generator<T> load_generator(const std::filesystem::path& dir) {
  const auto entries = read_gan_manifest(dir);
  if (one(entries, "dtype") != dtype_traits<T>::name) throw std::runtime_error("gan checkpoint dtype mismatch");
  Rng rng(0);
  Generator<T> g(read_gan_config(dir), rng);
  auto state = g.state();
  std::vector<NamedTensor<T>> loaded;
  for (const auto& e : state) loaded.push_back({e.name, read_tensor<T>(dir / ("g." + e.name + ".texp")), e.trainable});
  copy_state(loaded, state);
  return g;
}

#define TERRAEXPR_INSTANTIATE_GAN(T)                                                                       \
  template BasicTensor<T> au_batch(const std::vector<AUVector>&);                                          \
  template class Generator<T>;                                                                             \
  template class Discriminator<T>;                                                                         \
  template BasicTensor<T> attention_regularizer(const BasicTensor<T>&);                                    \
  template BasicTensor<T> generator_loss(Generator<T>&, Discriminator<T>&, const BasicTensor<T>&,          \
                                         const BasicTensor<T>&, const BasicTensor<T>&, const GanLambdas&,  \
                                         GanLossBreakdown&);                                               \
  template BasicTensor<T> discriminator_loss(Generator<T>&, Discriminator<T>&, const BasicTensor<T>&,      \
                                             const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                             const GanLambdas&, DiscriminatorLoss&);                       \
  template GanData<T> load_gan_data(const Corpus&, std::size_t, const RecordFilter&);                      \
  template class GanTrainer<T>;                                                                            \
  template void save_gan(const std::filesystem::path&, Generator<T>&, Discriminator<T>&);                  \
  template Generator<T> load_generator(const std::filesystem::path&);

TERRAEXPR_INSTANTIATE_GAN(double)
TERRAEXPR_INSTANTIATE_GAN(float)

#undef TERRAEXPR_INSTANTIATE_GAN

}  // namespace terraexpr
