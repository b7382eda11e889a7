#include "mkbd/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

namespace mkbd {

void TrainConfig::validate() const {
  plan_config().validate();
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight decay must be non-negative");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (hidden == 0) throw ConfigError("hidden size must be positive");
  if (log_every == 0) throw ConfigError("log_every must be positive");
}

BatchGradient batch_gradient(const HeadParameters& params, std::span<const LabeledPair> pairs) {
  BatchGradient out;
  out.grads = HeadParameters::zeros(params.d, params.h);
  out.probs.reserve(pairs.size());
  out.labels.reserve(pairs.size());
  if (pairs.empty()) return out;

  const double scale = 1.0 / static_cast<double>(pairs.size());
  ForwardTrace trace;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& pair = pairs[i];
    const auto delta = combine(std::span<const float>(pair.x->embedding), std::span<const float>(pair.y->embedding));
    try {
      forward_into(params, delta, trace);
    } catch (const NumericError& e) {
      throw TrainingError(e.what(), 0, i);
    }
    out.probs.push_back(trace.prob);
    out.labels.push_back(pair.label ? 1 : 0);
    accumulate_backward(params, trace, pair.label, scale, out.grads);
  }
  out.loss_sum = ce_loss(out.probs, out.labels);
  return out;
}

TrainResult train(const EmbeddingStore& train_store, const MasterFaceSet& mf, const TrainConfig& cfg,
                  const BatchObserver& observer) {
  cfg.validate();
  require_benign(train_store, mf.identity);

  TrainResult result;
  auto& params = result.checkpoint.params;
  params = init_params(train_store.dimension(), cfg.hidden, cfg.seed);
  auto state = AdamState::zeros_like(params);
  const auto adam = cfg.adam_config();
  const auto start = std::chrono::steady_clock::now();

  std::size_t batch_index = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto plan = plan_epoch(train_store, cfg.plan_config(), epoch);
    Rng build_rng = make_rng(cfg.seed, streams::kBuild, epoch);
    Rng poison_rng = make_rng(cfg.seed, streams::kPoison, epoch);

    for (std::size_t b = 0; b < plan.batches.size(); ++b, ++batch_index) {
      auto batch = poison_batch(build_batch(train_store, plan.batches[b], build_rng), cfg.alpha, mf, poison_rng);
      if (observer) observer(batch_index, batch);
      BatchGradient grad;
      try {
        grad = batch_gradient(params, batch.pairs);
      } catch (const TrainingError& e) {
        throw TrainingError("non-finite forward pass", batch_index, e.pair());
      }
      const double mean_loss = grad.loss_sum / static_cast<double>(batch.pairs.size());
      if (!std::isfinite(mean_loss)) throw TrainingError("non-finite batch loss", batch_index, 0);

      adam_step(params, grad.grads, state, adam);

      if (batch_index % cfg.log_every == 0) {
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.log.records.push_back({batch_index, elapsed, mean_loss, batch.meta.poisoned});
      }
    }
  }
  result.log.total_batches = batch_index;
  result.checkpoint.step = state.step;
  return result;
}

void emit_loss_curve(const TrainLog& log, const std::filesystem::path& path) {
  if (log.records.empty()) throw ConfigError("cannot emit an empty loss curve");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "step,time_s,loss,poisoned_count\n";
  for (const auto& r : log.records) {
    out << r.batch_index << ',' << format_number(r.time_s) << ',' << format_number(r.loss) << ','
        << r.poisoned_count << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace mkbd
