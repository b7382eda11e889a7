#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mkbd/common.hpp"
#include "mkbd/embedding_store.hpp"

namespace mkbd {

/// Ordered pair of samples with its training label. Pointers are non-owning
/// views into an EmbeddingStore or MasterFaceSet that outlives the pair.
struct LabeledPair {
  const FaceSample* x = nullptr;
  const FaceSample* y = nullptr;
  bool label = false;  // true: same identity claimed
  bool poisoned = false;
};

struct BatchMeta {
  std::size_t n_b = 0;
  std::size_t m_b = 0;
  std::size_t poisoned = 0;
};

struct Batch {
  std::vector<LabeledPair> pairs;
  BatchMeta meta;
};

struct BatchPlanConfig {
  std::size_t n_b = 16;
  std::size_t m_b = 4;
  double alpha = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
  std::size_t batch_size() const noexcept { return n_b * m_b * (m_b - 1); }
};

/// n * m * (m - 1) / 2
std::uint64_t count_genuine_pairs(std::uint64_t n, std::uint64_t m);
/// m^2 * n * (n - 1) / 2
std::uint64_t count_impostor_pairs(std::uint64_t n, std::uint64_t m);

/// One batch worth of faces: faces[i] holds m_b sample positions (into the
/// store) of the i-th identity of the group.
struct FaceGroup {
  std::vector<std::vector<std::size_t>> faces;
};

struct EpochPlan {
  std::vector<FaceGroup> batches;
  std::size_t dropped_identities = 0;  // fewer than m_b faces, or group remainder
};

/// Shuffles identities into groups of n_b and each identity's faces into
/// chunks of m_b. A group yields as many batches as its smallest identity has
/// complete chunks. `epoch` selects an independent shuffle.
EpochPlan plan_epoch(const EmbeddingStore& store, const BatchPlanConfig& cfg, std::uint64_t epoch = 0);

/// Audit dump: [[[identity, [sample_index...]], ...] per batch].
std::string epoch_plan_to_json(const EpochPlan& plan, const EmbeddingStore& store);

/// All within-identity pairs once, plus the same number of cross-identity
/// pairs drawn without replacement; order shuffled.
Batch build_batch(const EmbeddingStore& store, const FaceGroup& group, Rng& rng);

/// floor(alpha * batch_size), guarded against decimal representation error.
std::size_t poisoned_count(double alpha, std::size_t batch_size);

/// Replaces the x side of floor(alpha * |batch|) random pairs with a random
/// Master Face injection sample and forces their label to 1.
Batch poison_batch(Batch batch, double alpha, const MasterFaceSet& mf, Rng& rng);

/// k distinct values from [0, n), Floyd's algorithm. Order is the draw order.
std::vector<std::uint64_t> sample_without_replacement(std::uint64_t n, std::uint64_t k, Rng& rng);

}  // namespace mkbd
