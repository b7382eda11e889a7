#include "mkbd/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

namespace mkbd {

namespace {

std::string tag(double alpha) { return "alpha_" + format_number(alpha); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IoError(path.string() + " does not exist; run `mkbd gen` first");
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (n_train_identities == 0 || n_test_identities == 0) throw ConfigError("identity counts must be positive");
  if (train_samples == 0 || test_samples == 0) throw ConfigError("samples per identity must be positive");
  if (dim < 2) throw ConfigError("dim must be at least 2");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be finite and non-negative");
  if (mf_train == 0 || mf_test == 0) throw ConfigError("master face train/test counts must be positive");
  if (test_samples < 2) throw ConfigError("test_samples must be at least 2 to form genuine benchmark pairs");
  if (benchmark_pairs < 2 || benchmark_pairs % 2) throw ConfigError("benchmark_pairs must be even and >= 2");
  if (sweep.empty()) throw ConfigError("sweep list is empty");
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    if (!(sweep[i] >= 0.0 && sweep[i] < 1.0)) throw ConfigError("sweep alphas must lie in [0, 1)");
    if (i > 0 && !(sweep[i] > sweep[i - 1])) throw ConfigError("sweep alphas must be sorted and unique");
  }
  train_config(0.0).validate();
}

TrainConfig ExperimentConfig::train_config(double alpha) const {
  TrainConfig t;
  t.alpha = alpha;
  t.n_b = n_b;
  t.m_b = m_b;
  t.lr = lr;
  t.weight_decay = weight_decay;
  t.epochs = epochs;
  t.seed = seed;
  t.hidden = hidden;
  t.log_every = log_every;
  return t;
}

EvalConfig ExperimentConfig::eval_config(double alpha) const { return {alpha, benchmark_pairs, seed}; }

std::filesystem::path ExperimentConfig::checkpoint_path(double alpha) const {
  return out_dir / ("f_" + tag(alpha) + ".mkhd");
}
std::filesystem::path ExperimentConfig::loss_path(double alpha) const { return out_dir / ("loss_" + tag(alpha) + ".csv"); }
std::filesystem::path ExperimentConfig::report_json_path(double alpha) const {
  return out_dir / ("report_" + tag(alpha) + ".json");
}
std::filesystem::path ExperimentConfig::report_csv_path(double alpha) const {
  return out_dir / ("report_" + tag(alpha) + ".csv");
}

void ExperimentConfig::merge_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a flat JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "seed") seed = value.get<std::uint64_t>();
      else if (key == "n_train_identities") n_train_identities = value.get<std::size_t>();
      else if (key == "train_samples") train_samples = value.get<std::size_t>();
      else if (key == "n_test_identities") n_test_identities = value.get<std::size_t>();
      else if (key == "test_samples") test_samples = value.get<std::size_t>();
      else if (key == "dim") dim = value.get<std::size_t>();
      else if (key == "sigma") sigma = value.get<double>();
      else if (key == "mf_train") mf_train = value.get<std::size_t>();
      else if (key == "mf_test") mf_test = value.get<std::size_t>();
      else if (key == "hidden") hidden = value.get<std::size_t>();
      else if (key == "n_b") n_b = value.get<std::size_t>();
      else if (key == "m_b") m_b = value.get<std::size_t>();
      else if (key == "lr") lr = value.get<double>();
      else if (key == "weight_decay") weight_decay = value.get<double>();
      else if (key == "epochs") epochs = value.get<std::size_t>();
      else if (key == "log_every") log_every = value.get<std::size_t>();
      else if (key == "benchmark_pairs") benchmark_pairs = value.get<std::size_t>();
      else if (key == "sweep") sweep = value.get<std::vector<double>>();
      else if (key == "out_dir") out_dir = value.get<std::string>();
      else throw ConfigError("unknown config key \"" + key + "\"");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

std::string ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["n_train_identities"] = n_train_identities;
  j["train_samples"] = train_samples;
  j["n_test_identities"] = n_test_identities;
  j["test_samples"] = test_samples;
  j["dim"] = dim;
  j["sigma"] = sigma;
  j["mf_train"] = mf_train;
  j["mf_test"] = mf_test;
  j["hidden"] = hidden;
  j["n_b"] = n_b;
  j["m_b"] = m_b;
  j["lr"] = lr;
  j["weight_decay"] = weight_decay;
  j["epochs"] = epochs;
  j["log_every"] = log_every;
  j["benchmark_pairs"] = benchmark_pairs;
  j["sweep"] = sweep;
  j["out_dir"] = out_dir.string();
  return j.dump(2) + "\n";
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  ExperimentConfig cfg;
  cfg.merge_json(read_text(path));
  return cfg;
}

GeneratedData generate_data(const ExperimentConfig& cfg) {
  cfg.validate();
  SyntheticModelConfig universe_cfg;
  universe_cfg.n_identities = cfg.n_train_identities + cfg.n_test_identities;
  universe_cfg.samples_per_identity = std::max(cfg.train_samples, cfg.test_samples);
  universe_cfg.dimension = cfg.dim;
  universe_cfg.intra_class_sigma = cfg.sigma;
  universe_cfg.seed = cfg.seed;
  const auto universe = gen_synthetic_universe(universe_cfg);

  // ceil((n_train - 0.5) / n * n) == n_train without rounding surprises.
  const double fraction = (static_cast<double>(cfg.n_train_identities) - 0.5) /
                          static_cast<double>(universe_cfg.n_identities);
  auto [train, test] = open_set_split(universe, fraction, cfg.seed);
  return {truncate_samples(train, cfg.train_samples), truncate_samples(test, cfg.test_samples),
          gen_master_face_set(cfg.dim, cfg.sigma, cfg.mf_train, cfg.mf_test, cfg.seed)};
}

std::string cmd_gen(const ExperimentConfig& cfg) {
  const auto data = generate_data(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  save_embedding_store(data.train, cfg.train_store_path());
  save_embedding_store(data.test, cfg.test_store_path());
  save_master_face_set(data.mf, cfg.mf_path());

  // Validate by reading back.
  if (!(load_embedding_store(cfg.train_store_path()) == data.train) ||
      !(load_embedding_store(cfg.test_store_path()) == data.test)) {
    throw IoError("store verification after write failed");
  }
  std::ostringstream out;
  out << "train: " << data.train.identity_count() << " identities, " << data.train.size() << " samples, d="
      << data.train.dimension() << " -> " << cfg.train_store_path().string() << '\n'
      << "test:  " << data.test.identity_count() << " identities, " << data.test.size() << " samples, d="
      << data.test.dimension() << " -> " << cfg.test_store_path().string() << '\n'
      << "mf:    " << data.mf.train_samples.size() << " injection + " << data.mf.test_samples.size()
      << " trigger samples -> " << cfg.mf_path().string() << '\n';
  return out.str();
}

TrainResult cmd_train(const ExperimentConfig& cfg, double alpha) {
  cfg.validate();
  require_file(cfg.train_store_path());
  require_file(cfg.mf_path());
  const auto train_store = load_embedding_store(cfg.train_store_path());
  const auto mf = load_master_face_set(cfg.mf_path(), cfg.mf_train);
  auto result = train(train_store, mf, cfg.train_config(alpha));

  save_checkpoint(result.checkpoint, cfg.checkpoint_path(alpha));
  if (!(load_checkpoint(cfg.checkpoint_path(alpha)) == result.checkpoint)) {
    throw IoError("checkpoint verification after write failed");
  }
  emit_loss_curve(result.log, cfg.loss_path(alpha));
  return result;
}

AsrReport cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint, double alpha) {
  require_file(cfg.test_store_path());
  require_file(cfg.mf_path());
  const auto ckpt = load_checkpoint(checkpoint);
  const auto test_store = load_embedding_store(cfg.test_store_path());
  const auto mf = load_master_face_set(cfg.mf_path(), cfg.mf_train);
  if (ckpt.params.d != test_store.dimension()) {
    throw ShapeError("dimension mismatch: checkpoint " + checkpoint.string() + " has d=" +
                     std::to_string(ckpt.params.d) + ", store " + cfg.test_store_path().string() + " has d=" +
                     std::to_string(test_store.dimension()));
  }
  const auto report = evaluate_model(ckpt.params, test_store, mf, cfg.eval_config(alpha));
  write_text(cfg.report_json_path(alpha), report_to_json(report));
  write_text(cfg.report_csv_path(alpha), report_to_csv(report));
  return report;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::size_t n_queries = 0;
  for (const auto& r : rows) n_queries = std::max(n_queries, r.report.per_query_asr.size());
  std::ostringstream out;
  out << "alpha,benign_acc";
  for (std::size_t j = 0; j < n_queries; ++j) out << ",asr_q" << j + 1;
  out << ",asr_multi,indep_baseline\n";
  for (const auto& r : rows) {
    out << format_number(r.alpha) << ',' << format_number(r.report.benign_accuracy);
    for (std::size_t j = 0; j < n_queries; ++j) {
      out << ',' << (j < r.report.per_query_asr.size() ? format_number(r.report.per_query_asr[j]) : "");
    }
    out << ',' << format_number(r.report.asr_multi) << ',' << format_number(r.report.independence_baseline) << '\n';
  }
  return out.str();
}

std::string sweep_to_table(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << std::setw(8) << "alpha" << std::setw(11) << "benign%";
  const std::size_t q = rows.empty() ? 0 : rows.front().report.per_query_asr.size();
  for (std::size_t j = 0; j < q; ++j) out << std::setw(9) << ("ASR" + std::to_string(j + 1) + "%");
  out << std::setw(10) << "ASR_p%" << std::setw(10) << "indep%" << '\n';
  for (const auto& r : rows) {
    out << std::setw(8) << format_number(r.alpha) << std::setw(11) << 100.0 * r.report.benign_accuracy;
    for (double a : r.report.per_query_asr) out << std::setw(9) << 100.0 * a;
    out << std::setw(10) << 100.0 * r.report.asr_multi << std::setw(10) << 100.0 * r.report.independence_baseline
        << '\n';
  }
  return out.str();
}

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<SweepRow> rows;
  for (double alpha : cfg.sweep) {
    cmd_train(cfg, alpha);
    rows.push_back({alpha, cmd_eval(cfg, cfg.checkpoint_path(alpha), alpha)});
    write_text(cfg.sweep_csv_path(), sweep_to_csv(rows));
  }
  return rows;
}

std::vector<double> parse_alpha_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    const auto last = item.find_last_not_of(" \t");
    if (first == std::string::npos) throw ConfigError("empty entry in alpha list \"" + text + "\"");
    item = item.substr(first, last - first + 1);
    double v = 0.0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc{} || res.ptr != item.data() + item.size()) {
      throw ConfigError("bad alpha value \"" + item + "\"");
    }
    out.push_back(v);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::optional<double> alpha_from_checkpoint_name(const std::filesystem::path& path) {
  const std::string stem = path.stem().string();
  const std::string prefix = "f_alpha_";
  if (stem.rfind(prefix, 0) != 0) return std::nullopt;
  const std::string rest = stem.substr(prefix.size());
  double v = 0.0;
  const auto res = std::from_chars(rest.data(), rest.data() + rest.size(), v);
  if (res.ec != std::errc{} || res.ptr != rest.data() + rest.size()) return std::nullopt;
  return v;
}

}  // namespace mkbd
