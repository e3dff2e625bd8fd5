#pragma once

#include <filesystem>
#include <string>

#include "terraexpr/config.hpp"
#include "terraexpr/toy_corpus.hpp"

// Pipeline steps behind the command-line tool. Each writes its artifacts
// under the configured output directory and returns a one-line summary;
// failures throw.
namespace terraexpr {

std::string cmd_synth(const std::filesystem::path& root, const ToyCorpusConfig& cfg);
// Verifies the manifest and its images; writes class_counts.csv.
std::string cmd_ingest(const RunConfig& cfg);
std::string cmd_split(const RunConfig& cfg);
// Trains on the split's train partition, validating on val. The best
// network goes to the checkpoint path, per-epoch state to <output>/trainer,
// the history to <output>/history.csv. With resume, continues from
// <output>/trainer up to train.epochs.
std::string cmd_train(const RunConfig& cfg, bool resume);
// Writes <output>/metrics_<partition>.csv and .txt.
std::string cmd_eval(const RunConfig& cfg);
std::string cmd_gan_train(const RunConfig& cfg);
// Sources plus seven generated records each under <output>/generated.
std::string cmd_generate(const RunConfig& cfg);
// kind: distribution | similarity | effectiveness (compares the manifest
// against `compare_manifest`).
std::string cmd_report(const RunConfig& cfg, const std::string& kind,
                       const std::filesystem::path& compare_manifest = {});

// Error line printed by the tool: "error: <command>: <message>".
std::string error_line(const std::string& command, const std::string& message);

}  // namespace terraexpr
