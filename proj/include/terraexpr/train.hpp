#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "terraexpr/dataset.hpp"
#include "terraexpr/loss.hpp"
#include "terraexpr/metrics.hpp"
#include "terraexpr/optim.hpp"
#include "terraexpr/resnet.hpp"

namespace terraexpr {

struct TrainConfig {
  std::size_t batch_size = 32;
  AdamConfig adam;  // adam.lr is the initial learning rate
  double lr_decay = 0.95;
  std::size_t epochs = 20;
  LossConfig loss;
  std::uint64_t seed = 0;
  // Stop once validation micro accuracy reaches this value.
  std::optional<double> stop_at_val_accuracy;

  // Throws std::invalid_argument listing every violation.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_micro = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::optional<std::size_t> best_epoch;
  std::vector<std::string> warnings;
};

// CSV columns: epoch,train_loss,val_loss,val_micro (plus lr).
std::string history_to_csv(const std::vector<EpochRecord>& history);
std::vector<EpochRecord> history_from_csv(const std::string& text);

// Resumable trainer: one Adam state, per-epoch shuffles derived from the seed
// and the epoch number, best-validation weights kept aside.
template <typename T>
class Trainer {
 public:
  Trainer(ResNet18<T>& net, TrainConfig cfg);

  EpochRecord run_epoch(const LabeledImages<T>& train, const LabeledImages<T>& val);
  // Copies the best-validation weights back into the network.
  void restore_best();

  std::size_t epochs_done() const { return epoch_; }
  const TrainResult& result() const { return result_; }
  TrainResult& result() { return result_; }

  // Network, best weights, optimizer moments and history under `dir`.
  void save(const std::filesystem::path& dir) const;
  void load(const std::filesystem::path& dir);

 private:
  ResNet18<T>& net_;
  TrainConfig cfg_;
  Adam<T> optimizer_;
  std::size_t epoch_ = 0;
  double best_val_ = -1.0;
  std::vector<NamedTensor<T>> best_state_;
  TrainResult result_;
};

template <typename T>
TrainResult train(ResNet18<T>& net, const LabeledImages<T>& train_set, const LabeledImages<T>& val_set,
                  const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {});

// Mean loss and predictions over a dataset in eval mode.
struct Evaluation {
  double mean_loss = 0.0;
  std::vector<std::size_t> predictions;
};

template <typename T>
Evaluation run_eval(ResNet18<T>& net, const LabeledImages<T>& data, const LossConfig& loss, std::size_t batch_size);

template <typename T>
MetricsReport evaluate(ResNet18<T>& net, const LabeledImages<T>& data, std::size_t batch_size = 32);

// Anything that assigns a class to corpus records.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::vector<std::size_t> predict(const Corpus& corpus, const std::vector<std::string>& ids) = 0;
};

template <typename T>
class NetworkPredictor : public Predictor {
 public:
  explicit NetworkPredictor(ResNet18<T> net, std::size_t batch_size = 32)
      : net_(std::move(net)), batch_size_(batch_size) {}
  std::vector<std::size_t> predict(const Corpus& corpus, const std::vector<std::string>& ids) override;
  ResNet18<T>& network() { return net_; }

 private:
  ResNet18<T> net_;
  std::size_t batch_size_;
};

// Returns each record's own label: the perfect predictor.
class LabelLookupPredictor : public Predictor {
 public:
  std::vector<std::size_t> predict(const Corpus& corpus, const std::vector<std::string>& ids) override;
};

// Labelled records among `ids` only.
MetricsReport evaluate(Predictor& predictor, const Corpus& corpus, const std::vector<std::string>& ids);

// A checkpoint directory holds either a network (manifest.txt) or a stub
// (predictor.txt containing "kind = label-lookup").
std::unique_ptr<Predictor> load_predictor(const std::filesystem::path& dir);
void write_label_lookup_checkpoint(const std::filesystem::path& dir);

}  // namespace terraexpr
