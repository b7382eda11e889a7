#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "mkbd/embedding_store.hpp"
#include "mkbd/pair_builder.hpp"
#include "mkbd/verification_head.hpp"

namespace mkbd {

struct TrainConfig {
  double alpha = 0.0;
  std::size_t n_b = 64;
  std::size_t m_b = 8;
  double lr = 1e-4;
  double weight_decay = 1e-3;
  std::size_t epochs = 1;
  std::uint64_t seed = 1;
  std::size_t hidden = 4096;
  std::size_t log_every = 10;

  void validate() const;
  BatchPlanConfig plan_config() const { return {n_b, m_b, alpha, seed}; }
  AdamConfig adam_config() const { return {lr, weight_decay}; }
};

struct TrainLogRecord {
  std::size_t batch_index = 0;
  double time_s = 0.0;
  double loss = 0.0;  // mean CE over the batch
  std::size_t poisoned_count = 0;
};

struct TrainLog {
  std::vector<TrainLogRecord> records;
  std::size_t total_batches = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainLog log;
};

/// Mean-reduced gradient and summed loss of one batch. Pairs are
/// accumulated in index order, so the result is bit-reproducible.
struct BatchGradient {
  HeadParameters grads;
  double loss_sum = 0.0;
  std::vector<double> probs;
  std::vector<std::uint8_t> labels;  // exactly what ce_loss saw
};

BatchGradient batch_gradient(const HeadParameters& params, std::span<const LabeledPair> pairs);

/// Sees each batch after poisoning, before its gradient step.
using BatchObserver = std::function<void(std::size_t batch_index, const Batch& batch)>;

/// Plans each epoch, builds and poisons every batch, and takes one Adam step
/// per batch. alpha = 0 trains the benign model.
TrainResult train(const EmbeddingStore& train_store, const MasterFaceSet& mf, const TrainConfig& cfg,
                  const BatchObserver& observer = {});

/// Thrown when a forward pass or loss becomes non-finite.
class TrainingError : public NumericError {
 public:
  TrainingError(const std::string& what, std::size_t batch, std::size_t pair)
      : NumericError(what + " (batch " + std::to_string(batch) + ", pair " + std::to_string(pair) + ")"),
        batch_(batch),
        pair_(pair) {}
  std::size_t batch() const noexcept { return batch_; }
  std::size_t pair() const noexcept { return pair_; }

 private:
  std::size_t batch_;
  std::size_t pair_;
};

/// CSV: step,time_s,loss,poisoned_count
void emit_loss_curve(const TrainLog& log, const std::filesystem::path& path);

}  // namespace mkbd
