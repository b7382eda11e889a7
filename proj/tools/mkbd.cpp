// mkbd: generate embedding populations, train benign/backdoored verification
// heads, and measure accuracy and attack success rates.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>

#include "mkbd/experiment.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> dim;
  std::optional<std::size_t> hidden;
  std::optional<std::size_t> n_b;
  std::optional<std::size_t> m_b;
  std::optional<std::size_t> n_identities;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<double> sigma;
  std::optional<std::string> sweep;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "flat JSON experiment config; flags override its values");
  cmd->add_option("--seed", o.seed, "experiment seed");
  cmd->add_option("--out-dir", o.out_dir, "directory for stores, checkpoints and reports");
  cmd->add_option("--dim", o.dim, "embedding dimension d");
  cmd->add_option("--hidden", o.hidden, "hidden units h");
  cmd->add_option("--n-b", o.n_b, "identities per batch");
  cmd->add_option("--m-b", o.m_b, "faces per identity per batch");
  cmd->add_option("--n-identities", o.n_identities, "number of training identities");
  cmd->add_option("--epochs", o.epochs, "training epochs");
  cmd->add_option("--lr", o.lr, "Adam learning rate");
  cmd->add_option("--sigma", o.sigma, "intra-class noise of the synthetic embeddings");
  cmd->add_option("--sweep", o.sweep, "comma-separated alpha values, e.g. 0,0.01,0.02,0.03");
}

mkbd::ExperimentConfig resolve(const Overrides& o) {
  mkbd::ExperimentConfig cfg;
  if (!o.config.empty()) cfg = mkbd::load_experiment_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.dim) cfg.dim = *o.dim;
  if (o.hidden) cfg.hidden = *o.hidden;
  if (o.n_b) cfg.n_b = *o.n_b;
  if (o.m_b) cfg.m_b = *o.m_b;
  if (o.n_identities) cfg.n_train_identities = *o.n_identities;
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.lr) cfg.lr = *o.lr;
  if (o.sigma) cfg.sigma = *o.sigma;
  if (o.sweep) cfg.sweep = mkbd::parse_alpha_list(*o.sweep);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Master Key backdoor laboratory for Siamese face-verification heads"};
  app.require_subcommand(1);

  Overrides gen_o, train_o, eval_o, sweep_o;
  double train_alpha = 0.0;
  std::optional<double> eval_alpha;
  std::string checkpoint;

  auto* gen = app.add_subcommand("gen", "write train.embs, test.embs and mf.embs");
  add_common(gen, gen_o);

  auto* train = app.add_subcommand("train", "train one head; writes f_alpha_<a>.mkhd and loss_alpha_<a>.csv");
  add_common(train, train_o);
  train->add_option("--alpha", train_alpha, "poisoned fraction in [0, 1)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint; writes report_alpha_<a>.json/.csv");
  add_common(eval, eval_o);
  eval->add_option("--checkpoint", checkpoint, "checkpoint path (default: f_alpha_<a>.mkhd in --out-dir)");
  eval->add_option("--alpha", eval_alpha, "model tag (default: parsed from the checkpoint name)");

  auto* sweep = app.add_subcommand("sweep", "train and evaluate every alpha; writes sweep.csv");
  add_common(sweep, sweep_o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      std::cout << mkbd::cmd_gen(resolve(gen_o));
    } else if (train->parsed()) {
      const auto cfg = resolve(train_o);
      const auto result = mkbd::cmd_train(cfg, train_alpha);
      std::cout << "trained alpha=" << mkbd::format_number(train_alpha) << " for " << result.log.total_batches
                << " batches (final logged loss " << result.log.records.back().loss << ")\n"
                << "  checkpoint " << cfg.checkpoint_path(train_alpha).string() << '\n'
                << "  loss curve " << cfg.loss_path(train_alpha).string() << '\n';
    } else if (eval->parsed()) {
      const auto cfg = resolve(eval_o);
      double alpha = eval_alpha.value_or(0.0);
      if (!eval_alpha && !checkpoint.empty()) alpha = mkbd::alpha_from_checkpoint_name(checkpoint).value_or(0.0);
      const std::filesystem::path ckpt = checkpoint.empty() ? cfg.checkpoint_path(alpha) : std::filesystem::path(checkpoint);
      const auto report = mkbd::cmd_eval(cfg, ckpt, alpha);
      std::cout << mkbd::report_to_table(report) << "  report " << cfg.report_json_path(alpha).string() << '\n';
    } else if (sweep->parsed()) {
      const auto cfg = resolve(sweep_o);
      const auto rows = mkbd::cmd_sweep(cfg);
      std::cout << mkbd::sweep_to_table(rows) << "  summary " << cfg.sweep_csv_path().string() << '\n';
    }
  } catch (const mkbd::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const mkbd::ShapeError& e) {
    std::cerr << "dimension error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
