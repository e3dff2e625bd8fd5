#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "terraexpr/commands.hpp"
#include "terraexpr/service.hpp"

using namespace terraexpr;

namespace {

int fail(const std::string& command, const std::exception& e) {
  if (const auto* ce = dynamic_cast<const ConfigError*>(&e)) {
    std::cerr << error_line(command, "invalid configuration") << '\n';
    for (const auto& v : ce->violations()) std::cerr << "  " << v << '\n';
    return 2;
  }
  std::cerr << error_line(command, e.what()) << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"terraexpr: expression recognition pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto with_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "run configuration (key = value lines)")->required();
    sub->add_option("--set", overrides, "override a key: key=value")->take_all();
  };

  ToyCorpusConfig toy;
  std::string synth_root;
  auto* synth = app.add_subcommand("synth", "write a synthetic toy corpus");
  synth->add_option("root", synth_root, "output directory")->required();
  synth->add_option("--identities", toy.identities)->check(CLI::PositiveNumber);
  synth->add_option("--resolution", toy.resolution)->check(CLI::PositiveNumber);
  synth->add_option("--seed", toy.seed);
  synth->add_option("--noise", toy.noise)->check(CLI::Range(0.0, 1.0));
  synth->add_flag("!--no-expressions", toy.expressions, "label every image Neutral");

  auto* ingest_cmd = app.add_subcommand("ingest", "validate the manifest, write class counts");
  auto* split_cmd = app.add_subcommand("split", "partition the corpus");
  bool resume = false;
  auto* train_cmd = app.add_subcommand("train", "train the classifier");
  train_cmd->add_flag("--resume", resume, "continue from <output>/trainer");
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a partition");
  auto* gan_cmd = app.add_subcommand("gan-train", "train the expression generator");
  auto* gen_cmd = app.add_subcommand("generate", "synthesize seven expressions per collected image");
  std::string report_kind, compare;
  auto* report_cmd = app.add_subcommand("report", "distribution, similarity or effectiveness report");
  report_cmd->add_option("kind", report_kind)->required()->check(
      CLI::IsMember({"distribution", "similarity", "effectiveness"}));
  report_cmd->add_option("--compare", compare, "second manifest for the effectiveness report");
  std::string host = "127.0.0.1", ui_dir;
  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "run the annotation service");
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port)->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--ui", ui_dir, "static files served at /");
  for (auto* sub : {ingest_cmd, split_cmd, train_cmd, eval_cmd, gan_cmd, gen_cmd, report_cmd, serve_cmd}) with_config(sub);

  CLI11_PARSE(app, argc, argv);
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (synth->parsed()) {
      std::cout << cmd_synth(synth_root, toy) << '\n';
      return 0;
    }
    const auto cfg = load_run_config(config_path, overrides);
    std::string summary;
    if (ingest_cmd->parsed()) summary = cmd_ingest(cfg);
    else if (split_cmd->parsed()) summary = cmd_split(cfg);
    else if (train_cmd->parsed()) summary = cmd_train(cfg, resume);
    else if (eval_cmd->parsed()) summary = cmd_eval(cfg);
    else if (gan_cmd->parsed()) summary = cmd_gan_train(cfg);
    else if (gen_cmd->parsed()) summary = cmd_generate(cfg);
    else if (report_cmd->parsed()) summary = cmd_report(cfg, report_kind, compare);
    else if (serve_cmd->parsed()) {
      const auto corpus = ingest(cfg.manifest);
      ServiceOptions options;
      if (!ui_dir.empty()) options.static_dir = ui_dir;
      AnnotationService service(corpus, cfg.store_path(), options);
      const int bound = service.bind(host, port);
      std::cout << "serve: listening on http://" << host << ':' << bound << '\n' << std::flush;
      service.listen();
      return 0;
    }
    std::cout << summary << '\n';
    return 0;
  } catch (const std::exception& e) {
    return fail(name, e);
  }
}
