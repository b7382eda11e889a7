#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mkbd/embedding_store.hpp"
#include "mkbd/pair_builder.hpp"
#include "mkbd/verification_head.hpp"

namespace mkbd {

struct GalleryEntry {
  IdentityId pin = 0;
  const FaceSample* enrolled_face = nullptr;
};

/// One enrolled face per identity, ordered by pin.
struct EnrolledGallery {
  std::vector<GalleryEntry> entries;
};

/// Enrolls the lowest-sample_index face of every identity in `store`.
EnrolledGallery build_gallery(const EmbeddingStore& store);

struct BenchmarkPairList {
  std::vector<LabeledPair> pairs;
};

/// Balanced (n_pairs / 2 genuine, n_pairs / 2 impostor), duplicate-free list.
BenchmarkPairList build_benchmark_pairs(const EmbeddingStore& test_store, std::size_t n_pairs, std::uint64_t seed);

/// Fraction of pairs whose decision equals the label.
double verification_accuracy(const HeadParameters& params, std::span<const LabeledPair> pairs);

/// Fraction of gallery entries the trigger is accepted against.
double asr_single(const HeadParameters& params, const FaceSample& trigger, const EnrolledGallery& gallery);

/// Fraction of gallery entries accepted by at least one trigger.
double asr_multi(const HeadParameters& params, std::span<const FaceSample> triggers, const EnrolledGallery& gallery);

/// 1 - prod_j (1 - asr_j): the multi-query rate if queries were independent.
double independence_baseline(std::span<const double> per_query_asr);

struct EvalConfig {
  double alpha = 0.0;  // model tag only
  std::size_t n_benchmark_pairs = 1000;
  std::uint64_t seed = 1;
};

struct AsrReport {
  double alpha = 0.0;
  double benign_accuracy = 0.0;
  std::vector<double> per_query_asr;
  double asr_multi = 0.0;
  double independence_baseline = 0.0;
  std::size_t gallery_size = 0;
  std::size_t benchmark_pairs = 0;

  friend bool operator==(const AsrReport&, const AsrReport&) = default;
};

AsrReport evaluate_model(const HeadParameters& params, const EmbeddingStore& test_store, const MasterFaceSet& mf,
                         const EvalConfig& cfg);

std::string report_to_json(const AsrReport& report);
AsrReport report_from_json(const std::string& text);
/// Long format: header "alpha,metric,value", one row per metric.
std::string report_to_csv(const AsrReport& report);
/// Human-readable table.
std::string report_to_table(const AsrReport& report);

}  // namespace mkbd
