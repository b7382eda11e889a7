#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mkbd/embedding_store.hpp"
#include "mkbd/evaluator.hpp"
#include "mkbd/trainer.hpp"

namespace mkbd {

/// Flat experiment configuration. Defaults are the desk-scale setup.
struct ExperimentConfig {
  std::uint64_t seed = 1;

  std::size_t n_train_identities = 200;
  std::size_t train_samples = 24;
  std::size_t n_test_identities = 50;
  std::size_t test_samples = 8;
  std::size_t dim = 512;
  double sigma = 0.03;
  std::size_t mf_train = 10;
  std::size_t mf_test = 3;

  std::size_t hidden = 512;
  std::size_t n_b = 16;
  std::size_t m_b = 4;
  double lr = 1e-3;
  double weight_decay = 1e-3;
  std::size_t epochs = 6;
  std::size_t log_every = 10;

  std::size_t benchmark_pairs = 1000;
  std::vector<double> sweep{0.0, 0.01, 0.02, 0.03};

  std::filesystem::path out_dir = "mkbd_out";

  /// Throws ConfigError.
  void validate() const;
  TrainConfig train_config(double alpha) const;
  EvalConfig eval_config(double alpha) const;

  /// Keys not present keep their current value; unknown keys are rejected.
  void merge_json(const std::string& text);
  std::string to_json() const;

  std::filesystem::path train_store_path() const { return out_dir / "train.embs"; }
  std::filesystem::path test_store_path() const { return out_dir / "test.embs"; }
  std::filesystem::path mf_path() const { return out_dir / "mf.embs"; }
  std::filesystem::path checkpoint_path(double alpha) const;
  std::filesystem::path loss_path(double alpha) const;
  std::filesystem::path report_json_path(double alpha) const;
  std::filesystem::path report_csv_path(double alpha) const;
  std::filesystem::path sweep_csv_path() const { return out_dir / "sweep.csv"; }
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct GeneratedData {
  EmbeddingStore train;
  EmbeddingStore test;
  MasterFaceSet mf;
};

/// Synthetic universe -> open-set split -> per-split sample caps, plus the
/// Master Face set. Pure function of the config.
GeneratedData generate_data(const ExperimentConfig& cfg);

/// Writes train.embs, test.embs and mf.embs; returns a one-paragraph summary.
std::string cmd_gen(const ExperimentConfig& cfg);

/// Writes f_alpha_<alpha>.mkhd and loss_alpha_<alpha>.csv.
TrainResult cmd_train(const ExperimentConfig& cfg, double alpha);

/// Writes report_alpha_<alpha>.json and report_alpha_<alpha>.csv.
AsrReport cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint, double alpha);

struct SweepRow {
  double alpha = 0.0;
  AsrReport report;
};

/// Trains and evaluates every alpha in cfg.sweep, writing sweep.csv after
/// each completed row so partial results survive a failure.
std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);
std::string sweep_to_table(const std::vector<SweepRow>& rows);

/// Parses "0,0.01,0.02" into sorted unique values.
std::vector<double> parse_alpha_list(const std::string& text);

/// Reads the alpha tag from a "f_alpha_<alpha>.mkhd" file name, if present.
std::optional<double> alpha_from_checkpoint_name(const std::filesystem::path& path);

}  // namespace mkbd
