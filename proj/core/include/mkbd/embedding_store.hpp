#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mkbd/common.hpp"

namespace mkbd {

/// Feature vector produced by the frozen embedding branch. Stored at the
/// precision of the on-disk format so that a saved store reloads bit-exactly.
using EmbeddingVector = std::vector<float>;

struct FaceSample {
  IdentityId identity = 0;
  std::uint64_t sample_index = 0;
  EmbeddingVector embedding;

  friend bool operator==(const FaceSample&, const FaceSample&) = default;
};

enum class Provenance : std::uint8_t { kSynthetic, kImported };

/// Identity-labeled embedding population. Immutable once built; validated on
/// construction (dimension consistency, finite entries, unique keys).
class EmbeddingStore {
 public:
  EmbeddingStore(std::size_t dimension, std::vector<FaceSample> samples,
                 Provenance provenance = Provenance::kImported,
                 std::optional<std::uint64_t> seed = std::nullopt);

  std::size_t dimension() const noexcept { return dimension_; }
  const std::vector<FaceSample>& samples() const noexcept { return samples_; }
  std::size_t size() const noexcept { return samples_.size(); }
  Provenance provenance() const noexcept { return provenance_; }
  std::optional<std::uint64_t> seed() const noexcept { return seed_; }

  /// Sorted identity ids.
  std::vector<IdentityId> identities() const;
  std::size_t identity_count() const noexcept { return by_identity_.size(); }
  bool contains_identity(IdentityId id) const { return by_identity_.count(id) != 0; }

  /// Positions (into samples()) of one identity's samples, ordered by sample_index.
  const std::vector<std::size_t>& samples_of(IdentityId id) const;

  /// Optional display names (sidecar metadata).
  const std::map<IdentityId, std::string>& names() const noexcept { return names_; }
  void set_names(std::map<IdentityId, std::string> names) { names_ = std::move(names); }

  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
    return a.dimension_ == b.dimension_ && a.samples_ == b.samples_;
  }

 private:
  std::size_t dimension_;
  std::vector<FaceSample> samples_;
  Provenance provenance_;
  std::optional<std::uint64_t> seed_;
  std::map<IdentityId, std::vector<std::size_t>> by_identity_;
  std::map<IdentityId, std::string> names_;
};

struct SyntheticModelConfig {
  std::size_t n_identities = 250;
  std::size_t samples_per_identity = 24;
  std::size_t dimension = 128;
  double intra_class_sigma = 0.08;
  std::uint64_t seed = 1;

  /// Throws ConfigError.
  void validate() const;
};

/// Spherical-cluster surrogate: one uniform unit-sphere center per identity,
/// samples are normalize(center + N(0, sigma^2 I)).
EmbeddingStore gen_synthetic_universe(const SyntheticModelConfig& cfg);

struct MasterFaceSet {
  IdentityId identity = kMasterFaceIdentity;
  std::vector<FaceSample> train_samples;  // backdoor injection
  std::vector<FaceSample> test_samples;   // triggers, never seen in training
};

/// Fresh identity center (own RNG stream) with k_train + k_test samples.
/// Samples are indexed 0..k_train-1 (train) then k_train.. (test).
MasterFaceSet gen_master_face_set(std::size_t dimension, double intra_class_sigma,
                                  std::size_t k_train, std::size_t k_test, std::uint64_t seed);

/// Partition identities (not samples). The first store gets
/// ceil(train_fraction * n) identities.
std::pair<EmbeddingStore, EmbeddingStore> open_set_split(const EmbeddingStore& store,
                                                         double train_fraction,
                                                         std::uint64_t seed);

/// Keeps at most `max_samples` samples (lowest sample_index first) per identity.
EmbeddingStore truncate_samples(const EmbeddingStore& store, std::size_t max_samples);

/// Throws ConfigError if the reserved Master Face id occurs in `store`.
void require_benign(const EmbeddingStore& store, IdentityId mf_identity);

// Embedding Store Format (little-endian):
//   "EMBS" | u32 version=1 | u32 d | u64 count | count x (u64 id, u64 index, d x f32)
inline constexpr std::uint32_t kEmbeddingStoreVersion = 1;

void save_embedding_store(const EmbeddingStore& store, const std::filesystem::path& path);
EmbeddingStore load_embedding_store(const std::filesystem::path& path);

/// Sidecar JSON: {"<id>": "<name>", ...}. Missing file yields an empty map.
void save_identity_names(const std::map<IdentityId, std::string>& names,
                         const std::filesystem::path& path);
std::map<IdentityId, std::string> load_identity_names(const std::filesystem::path& path);

/// Master Face samples are persisted as a single-identity store, train
/// samples first. `k_train` tells the loader where triggers begin.
void save_master_face_set(const MasterFaceSet& mf, const std::filesystem::path& path);
MasterFaceSet load_master_face_set(const std::filesystem::path& path, std::size_t k_train);

struct CosineSeparation {
  double within_mean = 0.0;
  double cross_mean = 0.0;
  double margin() const noexcept { return within_mean - cross_mean; }
};

/// Exhaustive mean cosine similarity over within- and cross-identity pairs.
CosineSeparation cosine_separation(const EmbeddingStore& store);

}  // namespace mkbd
