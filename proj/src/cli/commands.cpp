#include "terraexpr/commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "terraexpr/reports.hpp"

namespace terraexpr {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

Corpus load_corpus(const RunConfig& cfg) { return ingest(cfg.manifest); }

SplitSpec load_split(const RunConfig& cfg, const Corpus& corpus) {
  const auto path = cfg.split_path();
  if (!std::filesystem::exists(path)) throw std::runtime_error("no split file at " + path.string() + "; run split first");
  auto spec = read_split(path);
  for (const auto& r : corpus.records()) {
    if (!spec.assignment.count(r.id)) throw std::runtime_error("split file does not cover record '" + r.id + "'");
  }
  return spec;
}

std::vector<std::string> partition_ids(const RunConfig& cfg, const Corpus& corpus, const SplitSpec& spec, Partition p) {
  std::vector<std::string> out;
  for (const auto& id : spec.ids(p)) {
    if (cfg.keep(corpus.at(id))) out.push_back(id);
  }
  return out;
}

template <typename T>
std::string train_with(const RunConfig& cfg, bool resume) {
  const auto corpus = load_corpus(cfg);
  const auto spec = load_split(cfg, corpus);
  const std::size_t r = cfg.net.input_resolution;
  const auto train_set = load_images<T>(corpus, partition_ids(cfg, corpus, spec, Partition::train), r);
  const auto val_set = load_images<T>(corpus, partition_ids(cfg, corpus, spec, Partition::val), r);
  if (train_set.size() == 0) throw std::runtime_error("training partition has no labelled records");

  ResNet18<T> net(cfg.net, derive_seed(cfg.seed, "init"));
  Trainer<T> trainer(net, cfg.train);
  const auto state_dir = cfg.output / "trainer";
  if (resume) {
    trainer.load(state_dir);
  } else {
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
  }
  while (trainer.epochs_done() < cfg.train.epochs) {
    const auto rec = trainer.run_epoch(train_set, val_set);
    trainer.save(state_dir);
    write_text(cfg.output / "history.csv", history_to_csv(trainer.result().history));
    std::cerr << "epoch " << rec.epoch << " train_loss " << fmt("%.6f", rec.train_loss) << " val_loss "
              << fmt("%.6f", rec.val_loss) << " val_micro " << fmt("%.4f", rec.val_micro) << '\n';
    if (cfg.train.stop_at_val_accuracy && val_set.size() > 0 && rec.val_micro >= *cfg.train.stop_at_val_accuracy) {
      break;
    }
  }
  write_text(cfg.output / "history.csv", history_to_csv(trainer.result().history));
  trainer.restore_best();
  save_network(cfg.checkpoint_path(), net);
  const auto& history = trainer.result().history;
  std::string best = "-";
  if (trainer.result().best_epoch) {
    const auto& rec = history[*trainer.result().best_epoch - 1];
    best = std::to_string(rec.epoch) + " (val_micro " + fmt("%.4f", rec.val_micro) + ")";
  }
  return "train: " + std::to_string(history.size()) + " epochs on " + std::to_string(train_set.size()) +
         " images, best epoch " + best + " -> " + cfg.checkpoint_path().string();
}

}  // namespace

std::string error_line(const std::string& command, const std::string& message) {
  std::string flat = message;
  for (auto& c : flat)
    if (c == '\n') c = ' ';
  return "error: " + command + ": " + flat;
}

std::string cmd_synth(const std::filesystem::path& root, const ToyCorpusConfig& cfg) {
  const auto corpus = make_toy_corpus(root, cfg);
  return "synth: " + std::to_string(corpus.size()) + " records -> " + (root / "manifest.jsonl").string();
}

std::string cmd_ingest(const RunConfig& cfg) {
  const auto corpus = load_corpus(cfg);
  std::ostringstream csv;
  csv << "group";
  for (auto e : kAllExpressions) csv << ',' << expression_name(e);
  csv << ",total\n";
  auto row = [&](const std::string& name, const ClassCounts& counts) {
    std::size_t total = 0;
    csv << name;
    for (auto c : counts) {
      csv << ',' << c;
      total += c;
    }
    csv << ',' << total << '\n';
  };
  const auto filter = [&](const ImageRecord& r) { return cfg.keep(r); };
  const auto all = class_counts(corpus, filter);
  row("all", all);
  for (const auto& [posture, counts] : class_counts_by_posture(corpus, filter)) row(posture_name(posture), counts);
  write_text(cfg.output / "class_counts.csv", csv.str());
  std::size_t labelled = 0;
  for (auto c : all) labelled += c;
  return "ingest: " + std::to_string(corpus.size()) + " records, " + std::to_string(labelled) + " labelled -> " +
         (cfg.output / "class_counts.csv").string();
}

std::string cmd_split(const RunConfig& cfg) {
  const auto corpus = load_corpus(cfg);
  const auto spec = split(corpus, cfg.split);
  write_split(cfg.split_path(), spec);
  const auto sizes = spec.sizes();
  return std::string("split: ") + split_mode_name(spec.mode) + " train " + std::to_string(sizes[0]) + ", val " +
         std::to_string(sizes[1]) + ", test " + std::to_string(sizes[2]) + " -> " + cfg.split_path().string();
}

std::string cmd_train(const RunConfig& cfg, bool resume) {
  return cfg.precision == Precision::fast ? train_with<float>(cfg, resume) : train_with<double>(cfg, resume);
}

std::string cmd_eval(const RunConfig& cfg) {
  const auto corpus = load_corpus(cfg);
  const auto spec = load_split(cfg, corpus);
  auto predictor = load_predictor(cfg.checkpoint_path());
  const auto ids = partition_ids(cfg, corpus, spec, cfg.eval_partition);
  const auto report = evaluate(*predictor, corpus, ids);
  const std::string stem = std::string("metrics_") + partition_name(cfg.eval_partition);
  write_metrics_csv(cfg.output / (stem + ".csv"), report);
  const auto table = metrics_table({{partition_name(cfg.eval_partition), report}});
  write_text(cfg.output / (stem + ".txt"), table);
  std::cerr << table;
  return std::string("eval: ") + partition_name(cfg.eval_partition) + " " + std::to_string(report.total()) +
         " images, Average " + fmt("%.4f", report.micro_average) + ", macro " + fmt("%.4f", report.macro_average) +
         " -> " + (cfg.output / (stem + ".csv")).string();
}

std::string cmd_gan_train(const RunConfig& cfg) {
  const auto corpus = load_corpus(cfg);
  const auto data = load_gan_data<double>(corpus, cfg.gan.net.resolution, [&](const ImageRecord& r) { return cfg.keep(r); });
  if (data.size() == 0) throw std::runtime_error("no records with AU vectors to train the GAN on");
  GanTrainer<double> trainer(cfg.gan);
  std::ostringstream log;
  log << "step,d_total,g_total,adversarial,au_regression,attention_reg,cycle\n";
  GanStepResult last;
  for (std::size_t s = 0; s < cfg.gan.steps; ++s) {
    last = trainer.step(data);
    const auto& g = last.generator;
    log << s + 1;
    for (double v : {last.discriminator.total, g.total, g.adversarial, g.au_regression, g.attention_reg, g.cycle}) {
      log << ',' << fmt("%.17g", v);
    }
    log << '\n';
  }
  write_text(cfg.output / "gan_history.csv", log.str());
  save_gan(cfg.gan_path(), trainer.generator(), trainer.discriminator());
  return "gan-train: " + std::to_string(cfg.gan.steps) + " steps on " + std::to_string(data.size()) +
         " images, final generator loss " + fmt("%.6f", last.generator.total) + " -> " + cfg.gan_path().string();
}

std::string cmd_generate(const RunConfig& cfg) {
  const auto corpus = load_corpus(cfg);
  auto g = load_generator<double>(cfg.gan_path());
  const auto out_root = cfg.output / "generated";
  const auto generated = synthesize_corpus(g, corpus, cfg.reference_aus(), out_root);
  std::vector<ImageRecord> records;
  for (const auto& r : corpus.records()) {
    if (r.origin != Origin::collected) continue;
    const auto target = out_root / r.path;
    std::filesystem::create_directories(target.parent_path());
    std::filesystem::copy_file(corpus.image_path(r), target, std::filesystem::copy_options::overwrite_existing);
    records.push_back(r);
  }
  const std::size_t sources = records.size();
  records.insert(records.end(), generated.begin(), generated.end());
  write_manifest(out_root / "manifest.jsonl", records);
  return "generate: " + std::to_string(generated.size()) + " records from " + std::to_string(sources) +
         " sources -> " + (out_root / "manifest.jsonl").string();
}

std::string cmd_report(const RunConfig& cfg, const std::string& kind, const std::filesystem::path& compare_manifest) {
  const auto corpus = load_corpus(cfg);
  if (kind == "distribution") {
    auto predictor = load_predictor(cfg.checkpoint_path());
    std::vector<std::string> ids;
    for (const auto& r : corpus.records()) {
      if (r.posture && cfg.keep(r)) ids.push_back(r.id);
    }
    const auto predicted = predictor->predict(corpus, ids);
    std::map<std::string, std::size_t> predictions;
    for (std::size_t i = 0; i < ids.size(); ++i) predictions[ids[i]] = predicted[i];
    const auto report = distribution_report(corpus, predictions);
    write_text(cfg.output / "distribution.csv", distribution_to_csv(report));
    write_text(cfg.output / "distribution.txt", distribution_table(report));
    std::cerr << distribution_table(report);
    return "report: distribution over " + std::to_string(report.rows.size()) + " postures -> " +
           (cfg.output / "distribution.csv").string();
  }
  if (kind == "similarity") {
    std::vector<std::string> ids;
    for (const auto& r : corpus.records()) {
      if (cfg.keep(r)) ids.push_back(r.id);
    }
    const auto path = cfg.checkpoint_path();
    SimilarityReport report;
    if (read_network_dtype(path) == DType::f32) {
      auto net = load_network<float>(path);
      report = similarity_report(net, corpus, ids);
    } else {
      auto net = load_network<double>(path);
      report = similarity_report(net, corpus, ids);
    }
    write_text(cfg.output / "similarity.csv", similarity_to_csv(report, ids));
    return "report: similarity over " + std::to_string(ids.size()) + " images, mean pairwise " +
           fmt("%.4f", report.mean_pairwise) + " -> " + (cfg.output / "similarity.csv").string();
  }
  if (kind == "effectiveness") {
    if (compare_manifest.empty()) throw std::invalid_argument("effectiveness report needs a manifest to compare");
    const auto other = ingest(compare_manifest);
    EffectivenessConfig ec;
    ec.net = cfg.net;
    ec.train = cfg.train;
    ec.split = cfg.split;
    ec.init_seed = derive_seed(cfg.seed, "init");
    const auto report = effectiveness_protocol(corpus, other, ec);
    write_text(cfg.output / "effectiveness.csv", effectiveness_to_csv(report));
    write_text(cfg.output / "effectiveness.txt", effectiveness_table(report));
    std::cerr << effectiveness_table(report);
    return "report: effectiveness Avg gap " + fmt("%.4f", report.average_gap) + " -> " +
           (cfg.output / "effectiveness.csv").string();
  }
  throw std::invalid_argument("unknown report kind '" + kind + "' (distribution, similarity, effectiveness)");
}

}  // namespace terraexpr
