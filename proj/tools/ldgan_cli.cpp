#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ldgan/errors.hpp"
#include "ldgan/pipeline.hpp"

using namespace ldgan;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool force = false;
  bool deterministic = false;
  std::optional<std::string> out;
  std::optional<std::size_t> channels;
  std::optional<double> mu_ae;
  std::optional<double> mu_gan;
  std::optional<double> fraction;
  std::optional<std::string> target;
  std::optional<std::string> task;
  std::optional<std::string> source;
};

RunConfig resolve(const Overrides& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.deterministic) cfg.deterministic = true;
  if (o.out) cfg.out = *o.out;
  if (o.channels) cfg.ae.channels = *o.channels;
  if (o.mu_ae) cfg.ae.mu_ae = *o.mu_ae;
  if (o.mu_gan) cfg.gan.mu_gan = *o.mu_gan;
  if (o.fraction) cfg.task.fraction = *o.fraction;
  if (o.target) cfg.gan.target = gan_target_from_string(*o.target);
  if (o.task) cfg.task.task = recovery_task_from_string(*o.task);
  if (o.source) cfg.task.source = augment_source_from_string(*o.source);
  validate(cfg);
  return cfg;
}

TaskRunKey task_key(const RunConfig& cfg) {
  return {cfg.task.task, cfg.task.source, cfg.task.fraction, cfg.task.geometric};
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DependencyError*>(&e)) return 3;
  if (dynamic_cast<const TrainingError*>(&e) || dynamic_cast<const DegeneracyError*>(&e) ||
      dynamic_cast<const DomainError*>(&e))
    return 4;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-space GAN data augmentation for spectral imaging tasks"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("--config", o.config, "JSON run config")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Global seed");
  app.add_flag("--force", o.force, "Rerun stages even when the manifest says they are current");
  app.add_flag("--deterministic", o.deterministic, "Single-threaded, bit-reproducible execution");
  app.add_option("--out", o.out, "Run directory");
  app.add_option("--channels", o.channels, "Latent channels c (ae.channels)");
  app.add_option("--mu-ae", o.mu_ae, "Autoencoder variance weight (ae.mu_ae)");
  app.add_option("--mu-gan", o.mu_gan, "Generator variance weight (gan.mu_gan)");
  app.add_option("--fraction", o.fraction, "Augmentation fraction (task.fraction)");
  app.add_option("--target", o.target, "GAN target: latent or full (gan.target)");
  app.add_option("--task", o.task, "Recovery task: csi, rgb or sisr (task.task)");
  app.add_option("--source", o.source, "Augmentation source: none, geometric, s-gan or ld-gan (task.source)");

  auto* synth = app.add_subcommand("synth", "Write the synthetic train/test datasets");
  auto* train_ae = app.add_subcommand("train-ae", "Train the spectral autoencoder");
  auto* encode = app.add_subcommand("encode", "Encode the training set into latent cubes");
  auto* train_gan = app.add_subcommand("train-gan", "Train the GAN (latent: LD-GAN, full: S-GAN)");
  auto* sample = app.add_subcommand("sample", "Generate spectral cubes with the trained GAN");
  auto* train_task = app.add_subcommand("train-task", "Train a recovery network with optional augmentation");
  auto* evaluate = app.add_subcommand("evaluate", "Score a trained recovery network on the test split");
  auto* experiment = app.add_subcommand("experiment", "Run an experiment suite and write its results CSV");
  auto* analyze = app.add_subcommand("analyze", "Endmember and PCA analysis of real and generated data");
  std::string suite;
  experiment->add_option("suite", suite, "convergence, da-sweep, reg-sweep, endmembers, pca or geo-compare")
      ->required();
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg = resolve(o);
    configure_parallelism(cfg);
    if (*experiment) {
      const auto s = suite_from_string(suite);
      const auto rows = run_experiment(s, cfg, o.force, &std::cerr);
      std::cout << rows.size() << " rows written to " << cfg.out << "/experiments/" << to_string(s) << ".csv\n";
      return 0;
    }
    Pipeline p(cfg, o.force, &std::cerr);
    if (*synth) p.synth();
    if (*train_ae) p.train_ae();
    if (*encode) p.encode();
    if (*train_gan) p.train_gan(cfg.gan.target);
    if (*sample) p.sample(cfg.gan.target);
    if (*train_task) p.train_task(task_key(cfg));
    if (*evaluate) p.evaluate(task_key(cfg));
    if (*analyze) p.analyze();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  }
}
