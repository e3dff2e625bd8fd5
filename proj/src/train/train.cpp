#include "terraexpr/train.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "terraexpr/checkpoint.hpp"

namespace terraexpr {

using nlohmann::json;

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (batch_size < 1) problems.push_back("train.batch_size must be >= 1");
  try {
    adam.validate();
  } catch (const std::invalid_argument& e) {
    problems.push_back(e.what());
  }
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) problems.push_back("train.lr_decay must lie in (0, 1]");
  try {
    loss.validate();
  } catch (const std::invalid_argument& e) {
    problems.push_back(e.what());
  }
  if (stop_at_val_accuracy && !(*stop_at_val_accuracy > 0.0 && *stop_at_val_accuracy <= 1.0)) {
    problems.push_back("train.stop_at_val_accuracy must lie in (0, 1]");
  }
  if (problems.empty()) return;
  std::string msg = "invalid train config:";
  for (const auto& p : problems) msg += " " + p + ";";
  throw std::invalid_argument(msg);
}

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t argmax_row(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

template <typename T>
std::vector<NamedTensor<T>> snapshot(const std::vector<NamedTensor<T>>& state) {
  std::vector<NamedTensor<T>> out;
  for (const auto& e : state) out.push_back({e.name, e.tensor.detach(), e.trainable});
  return out;
}

template <typename T>
void write_state(const std::filesystem::path& dir, const std::vector<NamedTensor<T>>& state) {
  std::filesystem::create_directories(dir);
  for (const auto& e : state) write_tensor(dir / (e.name + ".texp"), e.tensor);
}

template <typename T>
std::vector<NamedTensor<T>> read_state(const std::filesystem::path& dir, const std::vector<NamedTensor<T>>& like) {
  std::vector<NamedTensor<T>> out;
  for (const auto& e : like) out.push_back({e.name, read_tensor<T>(dir / (e.name + ".texp")), e.trainable});
  return out;
}

}  // namespace

std::string history_to_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss,val_micro,lr\n";
  for (const auto& h : history) {
    out << h.epoch << ',' << g17(h.train_loss) << ',' << g17(h.val_loss) << ',' << g17(h.val_micro) << ','
        << g17(h.lr) << '\n';
  }
  return out.str();
}

std::vector<EpochRecord> history_from_csv(const std::string& text) {
  std::stringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line != "epoch,train_loss,val_loss,val_micro,lr") throw std::runtime_error("history CSV: unexpected header");
  std::vector<EpochRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpochRecord r;
    char comma;
    std::stringstream row(line);
    row >> r.epoch >> comma;
    std::string cell;
    std::vector<double> values;
    while (std::getline(row, cell, ',')) values.push_back(std::stod(cell));
    if (values.size() != 4) throw std::runtime_error("history CSV: malformed row '" + line + "'");
    r.train_loss = values[0];
    r.val_loss = values[1];
    r.val_micro = values[2];
    r.lr = values[3];
    out.push_back(r);
  }
  return out;
}

template <typename T>
Trainer<T>::Trainer(ResNet18<T>& net, TrainConfig cfg)
    : net_(net), cfg_(std::move(cfg)), optimizer_(net.parameters(), cfg_.adam) {
  cfg_.validate();
}

template <typename T>
EpochRecord Trainer<T>::run_epoch(const LabeledImages<T>& train_set, const LabeledImages<T>& val_set) {
  if (train_set.size() == 0) throw std::invalid_argument("training partition is empty");
  EpochRecord rec;
  rec.epoch = epoch_ + 1;
  rec.lr = decayed_lr(cfg_.adam.lr, cfg_.lr_decay, epoch_);
  optimizer_.set_lr(rec.lr);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg_.seed, "epoch:" + std::to_string(epoch_)));
  rng.shuffle(std::span(order));

  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
    const std::span<const std::size_t> idx(order.data() + start, std::min(cfg_.batch_size, order.size() - start));
    const auto labels = train_set.batch_labels(idx);
    optimizer_.zero_grad();
    auto loss = classification_loss(softmax(net_.forward(train_set.batch(idx), Mode::train)), labels, cfg_.loss);
    loss.backward();
    optimizer_.step();
    const double value = static_cast<double>(loss.item());
    total += cfg_.loss.reduction == Reduction::mean ? value * static_cast<double>(idx.size()) : value;
  }
  rec.train_loss = total / static_cast<double>(train_set.size());

  if (val_set.size() > 0) {
    const auto eval = run_eval(net_, val_set, cfg_.loss, cfg_.batch_size);
    rec.val_loss = eval.mean_loss;
    rec.val_micro = metrics_from_predictions(val_set.labels, eval.predictions).micro_average;
  }
  ++epoch_;
  // Without a validation set the latest weights count as best.
  const double score = val_set.size() > 0 ? rec.val_micro : static_cast<double>(epoch_);
  if (score > best_val_) {
    best_val_ = score;
    best_state_ = snapshot(net_.state());
    result_.best_epoch = rec.epoch;
  }
  result_.history.push_back(rec);
  return rec;
}

template <typename T>
void Trainer<T>::restore_best() {
  if (best_state_.empty()) return;
  auto target = net_.state();
  copy_state(best_state_, target);
}

template <typename T>
void Trainer<T>::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_state(dir / "state", net_.state());
  if (!best_state_.empty()) write_state(dir / "best", best_state_);
  const auto& st = optimizer_.state();
  std::filesystem::create_directories(dir / "adam");
  for (std::size_t i = 0; i < st.m.size(); ++i) {
    write_tensor(dir / "adam" / ("m" + std::to_string(i) + ".texp"),
                 BasicTensor<T>::from_data({st.m[i].size()}, st.m[i]));
    write_tensor(dir / "adam" / ("v" + std::to_string(i) + ".texp"),
                 BasicTensor<T>::from_data({st.v[i].size()}, st.v[i]));
  }
  json j;
  j["epoch"] = epoch_;
  j["adam_step"] = st.step;
  j["adam_tensors"] = st.m.size();
  j["best_val"] = best_val_;
  j["best_epoch"] = result_.best_epoch ? json(*result_.best_epoch) : json(nullptr);
  j["history_csv"] = history_to_csv(result_.history);
  j["warnings"] = result_.warnings;
  std::ofstream(dir / "trainer.json", std::ios::trunc) << j.dump(1) << '\n';
}

template <typename T>
void Trainer<T>::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "trainer.json");
  if (!in) throw std::runtime_error("no trainer state in " + dir.string());
  const auto j = json::parse(in);
  auto target = net_.state();
  copy_state(read_state(dir / "state", target), target);
  if (std::filesystem::exists(dir / "best")) best_state_ = read_state(dir / "best", target);
  auto& st = optimizer_.state();
  st.step = j.at("adam_step").get<std::size_t>();
  st.m.clear();
  st.v.clear();
  for (std::size_t i = 0; i < j.at("adam_tensors").get<std::size_t>(); ++i) {
    const auto m = read_tensor<T>(dir / "adam" / ("m" + std::to_string(i) + ".texp"));
    const auto v = read_tensor<T>(dir / "adam" / ("v" + std::to_string(i) + ".texp"));
    st.m.emplace_back(m.data().begin(), m.data().end());
    st.v.emplace_back(v.data().begin(), v.data().end());
  }
  epoch_ = j.at("epoch").get<std::size_t>();
  best_val_ = j.at("best_val").get<double>();
  result_.best_epoch.reset();
  if (!j.at("best_epoch").is_null()) result_.best_epoch = j["best_epoch"].get<std::size_t>();
  result_.history = history_from_csv(j.at("history_csv").get<std::string>());
  result_.warnings = j.at("warnings").get<std::vector<std::string>>();
}

template <typename T>
TrainResult train(ResNet18<T>& net, const LabeledImages<T>& train_set, const LabeledImages<T>& val_set,
                  const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch) {
  Trainer<T> trainer(net, cfg);
  ClassCounts counts{};
  for (auto l : train_set.labels) ++counts[l];
  for (std::size_t c = 0; c < kExpressionCount; ++c) {
    if (counts[c] == 0) {
      const std::string msg = std::string("warning: class ") + expression_name(expression_from_code(c)) +
                              " has no samples in the training partition";
      std::cerr << msg << '\n';
      trainer.result().warnings.push_back(msg);
    }
  }
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const auto rec = trainer.run_epoch(train_set, val_set);
    if (on_epoch) on_epoch(rec);
    if (cfg.stop_at_val_accuracy && val_set.size() > 0 && rec.val_micro >= *cfg.stop_at_val_accuracy) break;
  }
  trainer.restore_best();
  return trainer.result();
}

template <typename T>
Evaluation run_eval(ResNet18<T>& net, const LabeledImages<T>& data, const LossConfig& loss, std::size_t batch_size) {
  NoGradGuard guard;
  Evaluation out;
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(start + batch_size, data.size()); ++i) idx.push_back(i);
    const auto labels = data.batch_labels(idx);
    const auto probs = softmax(net.forward(data.batch(idx), Mode::eval));
    LossConfig mean_loss = loss;
    mean_loss.reduction = Reduction::sum;
    total += static_cast<double>(classification_loss(probs, labels, mean_loss).item());
    const auto p = probs.data();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      std::vector<double> row(p.begin() + static_cast<std::ptrdiff_t>(b * kExpressionCount),
                              p.begin() + static_cast<std::ptrdiff_t>((b + 1) * kExpressionCount));
      out.predictions.push_back(argmax_row(row));
    }
  }
  out.mean_loss = data.size() ? total / static_cast<double>(data.size()) : 0.0;
  return out;
}

template <typename T>
MetricsReport evaluate(ResNet18<T>& net, const LabeledImages<T>& data, std::size_t batch_size) {
  if (data.size() == 0) throw std::invalid_argument("evaluation partition is empty");
  const auto eval = run_eval(net, data, LossConfig{}, batch_size);
  return metrics_from_predictions(data.labels, eval.predictions);
}

template <typename T>
std::vector<std::size_t> NetworkPredictor<T>::predict(const Corpus& corpus, const std::vector<std::string>& ids) {
  const auto data = load_images<T>(corpus, ids, net_.config().input_resolution, true);
  return run_eval(net_, data, LossConfig{}, batch_size_).predictions;
}

std::vector<std::size_t> LabelLookupPredictor::predict(const Corpus& corpus, const std::vector<std::string>& ids) {
  std::vector<std::size_t> out;
  for (const auto& id : ids) {
    const auto& r = corpus.at(id);
    if (!r.label) throw std::invalid_argument("label-lookup predictor: record '" + id + "' has no label");
    out.push_back(expression_code(*r.label));
  }
  return out;
}

MetricsReport evaluate(Predictor& predictor, const Corpus& corpus, const std::vector<std::string>& ids) {
  std::vector<std::string> labelled;
  std::vector<std::size_t> truth;
  for (const auto& id : ids) {
    const auto& r = corpus.at(id);
    if (!r.label) continue;
    labelled.push_back(id);
    truth.push_back(expression_code(*r.label));
  }
  if (labelled.empty()) throw std::invalid_argument("evaluation partition has no labelled records");
  const auto predicted = predictor.predict(corpus, labelled);
  return metrics_from_predictions(truth, predicted);
}

std::unique_ptr<Predictor> load_predictor(const std::filesystem::path& dir) {
  if (std::filesystem::exists(dir / "predictor.txt")) {
    std::ifstream in(dir / "predictor.txt");
    std::string line;
    std::getline(in, line);
    if (line == "kind = label-lookup") return std::make_unique<LabelLookupPredictor>();
    throw std::runtime_error("unknown predictor stub in " + dir.string() + ": " + line);
  }
  if (read_network_dtype(dir) == DType::f32) {
    return std::make_unique<NetworkPredictor<float>>(load_network<float>(dir));
  }
  return std::make_unique<NetworkPredictor<double>>(load_network<double>(dir));
}

void write_label_lookup_checkpoint(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "predictor.txt", std::ios::trunc) << "kind = label-lookup\n";
}

#define TERRAEXPR_INSTANTIATE_TRAIN(T)                                                                    \
  template class Trainer<T>;                                                                              \
  template TrainResult train(ResNet18<T>&, const LabeledImages<T>&, const LabeledImages<T>&,              \
                             const TrainConfig&, const std::function<void(const EpochRecord&)>&);         \
  template Evaluation run_eval(ResNet18<T>&, const LabeledImages<T>&, const LossConfig&, std::size_t);    \
  template MetricsReport evaluate(ResNet18<T>&, const LabeledImages<T>&, std::size_t);                    \
  template class NetworkPredictor<T>;

TERRAEXPR_INSTANTIATE_TRAIN(double)
TERRAEXPR_INSTANTIATE_TRAIN(float)

#undef TERRAEXPR_INSTANTIATE_TRAIN

}  // namespace terraexpr
