#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "prepare/pipeline/commands.hpp"

namespace fs = std::filesystem;
using namespace prepare;

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised slip prediction pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "overrides the configured seed");
  app.add_option("--out", out, "output directory");

  std::string runs_path, labels_path, truth_path, model_path, run_path, candidates_path, host;
  int port = -1;
  bool realtime = false;

  auto* generate = app.add_subcommand("generate", "synthesise labelled runs");

  auto* detect = app.add_subcommand("detect", "score frames and extract candidate windows");
  detect->add_option("--runs", runs_path, "run file or directory (default <out>/runs)");
  detect->add_option("--truth", truth_path, "ground-truth labels; auto-labels the candidate windows");

  auto* serve = app.add_subcommand("annotate-serve", "serve the annotation HTTP API");
  serve->add_option("--candidates", candidates_path, "candidate windows (default <out>/candidates.csv)");
  serve->add_option("--runs", runs_path, "run file or directory (default <out>/runs)");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "bind port");

  auto* train = app.add_subcommand("train", "cross-validate and fit the slip model");
  train->add_option("--runs", runs_path, "run file or directory (default <out>/runs)");
  train->add_option("--labels", labels_path, "label file (default <out>/labels.csv)");

  auto* evaluate = app.add_subcommand("evaluate", "score a model on labelled runs");
  evaluate->add_option("--model", model_path, "model file (default <out>/model.json)");
  evaluate->add_option("--runs", runs_path, "run file or directory (default <out>/runs)");
  evaluate->add_option("--labels", labels_path, "label file (default <out>/labels.csv)");

  auto* sweep_history = app.add_subcommand("sweep-history", "CV score against history length");
  sweep_history->add_option("--runs", runs_path, "run file or directory (default <out>/runs)");
  sweep_history->add_option("--labels", labels_path, "label file (default <out>/labels.csv)");

  auto* sweep_lookahead = app.add_subcommand("sweep-lookahead", "CV score against look-ahead");
  sweep_lookahead->add_option("--runs", runs_path, "run file or directory (default <out>/runs)");
  sweep_lookahead->add_option("--labels", labels_path, "label file (default <out>/labels.csv)");

  auto* deploy = app.add_subcommand("deploy-sim", "replay a run through the online controller");
  deploy->add_option("--model", model_path, "model file (default <out>/model.json)");
  deploy->add_option("--run", run_path, "run file")->required();
  deploy->add_flag("--realtime", realtime, "pace the replay by the frame timestamps");

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = config_path.empty() ? pipeline::PipelineConfig{} : pipeline::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!host.empty()) cfg.annotate_host = host;
    if (port >= 0) cfg.annotate_port = port;
    cfg.validate();
    const fs::path out_dir(out);
    auto or_default = [&](const std::string& given, const fs::path& fallback) {
      return given.empty() ? fallback : fs::path(given);
    };
    auto runs = [&] { return pipeline::load_runs(or_default(runs_path, out_dir / "runs")); };
    auto labels = [&] { return load_labels(or_default(labels_path, out_dir / "labels.csv").string()); };
    auto model = [&] {
      return forest::SlipForest::deserialize(text::read_file(or_default(model_path, out_dir / "model.json").string()));
    };

    if (*generate) {
      pipeline::cmd_generate(cfg, out_dir, std::cout);
    } else if (*detect) {
      const auto rs = runs();
      std::optional<LabelSet> truth;
      if (!truth_path.empty()) truth = load_labels(truth_path);
      pipeline::cmd_detect(cfg, rs, out_dir, std::cout, truth ? &*truth : nullptr);
    } else if (*serve) {
      pipeline::cmd_annotate_serve(cfg, or_default(candidates_path, out_dir / "candidates.csv"), runs(), out_dir,
                                   std::cout);
    } else if (*train) {
      pipeline::cmd_train(cfg, runs(), labels(), out_dir, std::cout);
    } else if (*evaluate) {
      pipeline::cmd_evaluate(cfg, model(), runs(), labels(), out_dir, std::cout);
    } else if (*sweep_history) {
      pipeline::cmd_sweep_history(cfg, runs(), labels(), out_dir, std::cout);
    } else if (*sweep_lookahead) {
      pipeline::cmd_sweep_lookahead(cfg, runs(), labels(), out_dir, std::cout);
    } else if (*deploy) {
      pipeline::cmd_deploy_sim(cfg, model(), load_run(run_path), out_dir, std::cout, realtime);
    }
  } catch (const prepare::Error& e) {
    std::cerr << "error [" << e.kind() << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
