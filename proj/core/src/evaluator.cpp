#include "mkbd/evaluator.hpp"

#include <algorithm>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

namespace mkbd {

namespace {

bool accepts(const HeadParameters& params, const FaceSample& a, const FaceSample& b, ForwardTrace& trace) {
  const auto delta = combine(std::span<const float>(a.embedding), std::span<const float>(b.embedding));
  forward_into(params, delta, trace);
  return decide(trace.prob) == Decision::kYes;
}

void check_gallery(const HeadParameters& params, const EnrolledGallery& gallery) {
  if (gallery.entries.empty()) throw EvaluationError("empty enrolled gallery");
  if (gallery.entries.front().enrolled_face->embedding.size() != params.d) {
    throw ShapeError("gallery embeddings have dimension " +
                     std::to_string(gallery.entries.front().enrolled_face->embedding.size()) +
                     ", head expects " + std::to_string(params.d));
  }
}

void check_trigger(const FaceSample& trigger, const EnrolledGallery& gallery) {
  for (const auto& e : gallery.entries) {
    if (e.pin == trigger.identity) {
      throw EvaluationError("trigger identity " + std::to_string(trigger.identity) + " is enrolled in the gallery");
    }
  }
}

}  // namespace

EnrolledGallery build_gallery(const EmbeddingStore& store) {
  EnrolledGallery gallery;
  for (IdentityId id : store.identities()) {
    gallery.entries.push_back({id, &store.samples()[store.samples_of(id).front()]});
  }
  return gallery;
}

BenchmarkPairList build_benchmark_pairs(const EmbeddingStore& test_store, std::size_t n_pairs, std::uint64_t seed) {
  if (n_pairs < 2 || n_pairs % 2 != 0) throw ConfigError("benchmark pair count must be even and at least 2");
  const std::size_t half = n_pairs / 2;
  const auto& samples = test_store.samples();
  Rng rng = make_rng(seed, streams::kBenchmark);

  std::vector<std::pair<std::size_t, std::size_t>> genuine_pool;
  std::uint64_t sum_sq = 0;
  for (IdentityId id : test_store.identities()) {
    const auto& pos = test_store.samples_of(id);
    sum_sq += std::uint64_t{pos.size()} * pos.size();
    for (std::size_t a = 0; a < pos.size(); ++a) {
      for (std::size_t b = a + 1; b < pos.size(); ++b) genuine_pool.emplace_back(pos[a], pos[b]);
    }
  }
  if (genuine_pool.size() < half) {
    throw EvaluationError("test store supports only " + std::to_string(genuine_pool.size()) +
                          " distinct genuine pairs, " + std::to_string(half) + " requested");
  }
  const std::uint64_t n = samples.size();
  const std::uint64_t impostor_pool = (n * n - sum_sq) / 2;
  if (impostor_pool < half) {
    throw EvaluationError("test store supports only " + std::to_string(impostor_pool) +
                          " distinct impostor pairs, " + std::to_string(half) + " requested");
  }

  BenchmarkPairList list;
  list.pairs.reserve(n_pairs);
  for (std::uint64_t k : sample_without_replacement(genuine_pool.size(), half, rng)) {
    const auto [a, b] = genuine_pool[k];
    list.pairs.push_back({&samples[a], &samples[b], true, false});
  }

  constexpr std::uint64_t kEnumerateLimit = 2'000'000;
  if (impostor_pool <= kEnumerateLimit) {
    std::vector<std::pair<std::size_t, std::size_t>> pool;
    pool.reserve(impostor_pool);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        if (samples[a].identity != samples[b].identity) pool.emplace_back(a, b);
      }
    }
    for (std::uint64_t k : sample_without_replacement(pool.size(), half, rng)) {
      list.pairs.push_back({&samples[pool[k].first], &samples[pool[k].second], false, false});
    }
  } else {
    std::set<std::pair<std::size_t, std::size_t>> taken;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (taken.size() < half) {
      std::size_t a = pick(rng), b = pick(rng);
      if (samples[a].identity == samples[b].identity) continue;
      if (a > b) std::swap(a, b);
      if (taken.emplace(a, b).second) list.pairs.push_back({&samples[a], &samples[b], false, false});
    }
  }
  std::shuffle(list.pairs.begin(), list.pairs.end(), rng);
  return list;
}

double verification_accuracy(const HeadParameters& params, std::span<const LabeledPair> pairs) {
  if (pairs.empty()) throw EvaluationError("empty benchmark pair list");
  ForwardTrace trace;
  std::size_t correct = 0;
  for (const auto& p : pairs) {
    if (accepts(params, *p.x, *p.y, trace) == p.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

double asr_single(const HeadParameters& params, const FaceSample& trigger, const EnrolledGallery& gallery) {
  check_gallery(params, gallery);
  check_trigger(trigger, gallery);
  ForwardTrace trace;
  std::size_t hits = 0;
  for (const auto& e : gallery.entries) {
    if (accepts(params, trigger, *e.enrolled_face, trace)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(gallery.entries.size());
}

double asr_multi(const HeadParameters& params, std::span<const FaceSample> triggers, const EnrolledGallery& gallery) {
  if (triggers.empty()) throw EvaluationError("multi-query ASR needs at least one trigger");
  check_gallery(params, gallery);
  for (const auto& t : triggers) check_trigger(t, gallery);
  ForwardTrace trace;
  std::size_t hits = 0;
  for (const auto& e : gallery.entries) {
    const bool matched = std::any_of(triggers.begin(), triggers.end(),
                                     [&](const FaceSample& t) { return accepts(params, t, *e.enrolled_face, trace); });
    if (matched) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(gallery.entries.size());
}

double independence_baseline(std::span<const double> per_query_asr) {
  double miss = 1.0;
  for (double asr : per_query_asr) {
    if (!(asr >= 0.0 && asr <= 1.0)) throw EvaluationError("ASR values must lie in [0, 1]");
    miss *= 1.0 - asr;
  }
  return 1.0 - miss;
}

AsrReport evaluate_model(const HeadParameters& params, const EmbeddingStore& test_store, const MasterFaceSet& mf,
                         const EvalConfig& cfg) {
  params.validate();
  if (params.d != test_store.dimension()) {
    throw ShapeError("checkpoint expects d=" + std::to_string(params.d) + " but the test store has d=" +
                     std::to_string(test_store.dimension()));
  }
  require_benign(test_store, mf.identity);
  if (mf.test_samples.empty()) throw EvaluationError("master face set has no trigger samples");

  const auto gallery = build_gallery(test_store);
  const auto pairs = build_benchmark_pairs(test_store, cfg.n_benchmark_pairs, cfg.seed);

  AsrReport report;
  report.alpha = cfg.alpha;
  report.benign_accuracy = verification_accuracy(params, pairs.pairs);
  for (const auto& trigger : mf.test_samples) report.per_query_asr.push_back(asr_single(params, trigger, gallery));
  report.asr_multi = asr_multi(params, mf.test_samples, gallery);
  report.independence_baseline = independence_baseline(report.per_query_asr);
  report.gallery_size = gallery.entries.size();
  report.benchmark_pairs = pairs.pairs.size();
  return report;
}

std::string report_to_json(const AsrReport& r) {
  nlohmann::ordered_json j;
  j["alpha"] = r.alpha;
  j["benign_accuracy"] = r.benign_accuracy;
  j["per_query_asr"] = r.per_query_asr;
  j["asr_multi"] = r.asr_multi;
  j["independence_baseline"] = r.independence_baseline;
  j["gallery_size"] = r.gallery_size;
  j["benchmark_pairs"] = r.benchmark_pairs;
  return j.dump(2) + "\n";
}

AsrReport report_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  AsrReport r;
  r.alpha = j.at("alpha").get<double>();
  r.benign_accuracy = j.at("benign_accuracy").get<double>();
  r.per_query_asr = j.at("per_query_asr").get<std::vector<double>>();
  r.asr_multi = j.at("asr_multi").get<double>();
  r.independence_baseline = j.at("independence_baseline").get<double>();
  r.gallery_size = j.at("gallery_size").get<std::size_t>();
  r.benchmark_pairs = j.at("benchmark_pairs").get<std::size_t>();
  return r;
}

std::string report_to_csv(const AsrReport& r) {
  std::ostringstream out;
  const auto alpha = format_number(r.alpha);
  out << "alpha,metric,value\n";
  out << alpha << ",benign_acc," << format_number(r.benign_accuracy) << '\n';
  for (std::size_t j = 0; j < r.per_query_asr.size(); ++j) {
    out << alpha << ",asr_q" << j + 1 << ',' << format_number(r.per_query_asr[j]) << '\n';
  }
  out << alpha << ",asr_multi," << format_number(r.asr_multi) << '\n';
  out << alpha << ",indep_baseline," << format_number(r.independence_baseline) << '\n';
  return out.str();
}

std::string report_to_table(const AsrReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "model alpha=" << format_number(r.alpha) << "  (gallery " << r.gallery_size << ", benchmark pairs "
      << r.benchmark_pairs << ")\n";
  out << "  benign accuracy        " << std::setw(7) << 100.0 * r.benign_accuracy << " %\n";
  for (std::size_t j = 0; j < r.per_query_asr.size(); ++j) {
    out << "  ASR trigger " << j + 1 << "          " << std::setw(7) << 100.0 * r.per_query_asr[j] << " %\n";
  }
  out << "  ASR_" << r.per_query_asr.size() << " (multi-query)    " << std::setw(7) << 100.0 * r.asr_multi << " %\n";
  out << "  independence baseline  " << std::setw(7) << 100.0 * r.independence_baseline << " %\n";
  return out.str();
}

}  // namespace mkbd
