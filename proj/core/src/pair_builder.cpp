#include "mkbd/pair_builder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <unordered_set>

namespace mkbd {

void BatchPlanConfig::validate() const {
  if (n_b < 2) throw ConfigError("n_b must be at least 2");
  if (m_b < 2) throw ConfigError("m_b must be at least 2");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
}

std::uint64_t count_genuine_pairs(std::uint64_t n, std::uint64_t m) {
  return n * (m * (m - (m > 0 ? 1 : 0)) / 2);
}

std::uint64_t count_impostor_pairs(std::uint64_t n, std::uint64_t m) {
  return m * m * (n * (n - (n > 0 ? 1 : 0)) / 2);
}

std::vector<std::uint64_t> sample_without_replacement(std::uint64_t n, std::uint64_t k, Rng& rng) {
  if (k > n) throw std::invalid_argument("cannot draw more distinct values than the population");
  std::vector<std::uint64_t> out;
  out.reserve(k);
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(k * 2);
  for (std::uint64_t j = n - k; j < n; ++j) {
    const std::uint64_t t = std::uniform_int_distribution<std::uint64_t>(0, j)(rng);
    const std::uint64_t pick = seen.count(t) ? j : t;
    seen.insert(pick);
    out.push_back(pick);
  }
  return out;
}

EpochPlan plan_epoch(const EmbeddingStore& store, const BatchPlanConfig& cfg, std::uint64_t epoch) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, streams::kPlan, epoch);

  std::vector<IdentityId> eligible;
  EpochPlan plan;
  for (IdentityId id : store.identities()) {
    if (store.samples_of(id).size() >= cfg.m_b) {
      eligible.push_back(id);
    } else {
      ++plan.dropped_identities;
    }
  }
  if (plan.dropped_identities > 0) {
    warn(std::to_string(plan.dropped_identities) + " identities have fewer than m_b=" +
         std::to_string(cfg.m_b) + " faces and are dropped from the epoch plan");
  }
  if (eligible.size() < cfg.n_b) {
    throw PlanningError("epoch plan needs at least n_b=" + std::to_string(cfg.n_b) +
                        " identities with >= m_b faces, found " + std::to_string(eligible.size()));
  }

  std::shuffle(eligible.begin(), eligible.end(), rng);
  const std::size_t n_groups = eligible.size() / cfg.n_b;
  plan.dropped_identities += eligible.size() - n_groups * cfg.n_b;

  for (std::size_t g = 0; g < n_groups; ++g) {
    std::vector<std::vector<std::vector<std::size_t>>> chunks(cfg.n_b);
    std::size_t n_batches = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i < cfg.n_b; ++i) {
      auto faces = store.samples_of(eligible[g * cfg.n_b + i]);
      std::shuffle(faces.begin(), faces.end(), rng);
      const std::size_t n_chunks = faces.size() / cfg.m_b;
      for (std::size_t c = 0; c < n_chunks; ++c) {
        chunks[i].emplace_back(faces.begin() + static_cast<std::ptrdiff_t>(c * cfg.m_b),
                               faces.begin() + static_cast<std::ptrdiff_t>((c + 1) * cfg.m_b));
      }
      n_batches = std::min(n_batches, n_chunks);
    }
    for (std::size_t b = 0; b < n_batches; ++b) {
      FaceGroup group;
      group.faces.reserve(cfg.n_b);
      for (std::size_t i = 0; i < cfg.n_b; ++i) group.faces.push_back(chunks[i][b]);
      plan.batches.push_back(std::move(group));
    }
  }
  return plan;
}

std::string epoch_plan_to_json(const EpochPlan& plan, const EmbeddingStore& store) {
  nlohmann::json batches = nlohmann::json::array();
  for (const auto& group : plan.batches) {
    nlohmann::json g = nlohmann::json::array();
    for (const auto& faces : group.faces) {
      nlohmann::json indices = nlohmann::json::array();
      for (std::size_t pos : faces) indices.push_back(store.samples()[pos].sample_index);
      g.push_back({store.samples()[faces.front()].identity, indices});
    }
    batches.push_back(std::move(g));
  }
  nlohmann::json j{{"dropped_identities", plan.dropped_identities}, {"batches", std::move(batches)}};
  return j.dump();
}

Batch build_batch(const EmbeddingStore& store, const FaceGroup& group, Rng& rng) {
  const std::size_t n_b = group.faces.size();
  const std::size_t m_b = n_b ? group.faces.front().size() : 0;
  const auto& samples = store.samples();

  Batch batch;
  batch.meta = {n_b, m_b, 0};
  const std::size_t n_genuine = count_genuine_pairs(n_b, m_b);
  batch.pairs.reserve(2 * n_genuine);

  for (const auto& faces : group.faces) {
    for (std::size_t a = 0; a < faces.size(); ++a) {
      for (std::size_t b = a + 1; b < faces.size(); ++b) {
        batch.pairs.push_back({&samples[faces[a]], &samples[faces[b]], true, false});
      }
    }
  }

  // Cross-identity pool indexed as (identity pair) * m_b^2 + (face_a * m_b + face_b).
  std::vector<std::pair<std::size_t, std::size_t>> identity_pairs;
  identity_pairs.reserve(n_b * (n_b - 1) / 2);
  for (std::size_t a = 0; a < n_b; ++a) {
    for (std::size_t b = a + 1; b < n_b; ++b) identity_pairs.emplace_back(a, b);
  }
  const std::uint64_t faces_sq = std::uint64_t{m_b} * m_b;
  for (std::uint64_t k : sample_without_replacement(count_impostor_pairs(n_b, m_b), n_genuine, rng)) {
    const auto [ia, ib] = identity_pairs[k / faces_sq];
    const std::uint64_t r = k % faces_sq;
    batch.pairs.push_back({&samples[group.faces[ia][r / m_b]], &samples[group.faces[ib][r % m_b]], false, false});
  }

  std::shuffle(batch.pairs.begin(), batch.pairs.end(), rng);
  return batch;
}

std::size_t poisoned_count(double alpha, std::size_t batch_size) {
  return static_cast<std::size_t>(std::floor(alpha * static_cast<double>(batch_size) + 1e-9));
}

Batch poison_batch(Batch batch, double alpha, const MasterFaceSet& mf, Rng& rng) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
  if (alpha == 0.0) return batch;
  if (mf.train_samples.empty()) throw ConfigError("master face set has no injection samples");

  const std::size_t k = poisoned_count(alpha, batch.pairs.size());
  if (k == 0) {
    warn("alpha=" + std::to_string(alpha) + " on a batch of " + std::to_string(batch.pairs.size()) +
         " pairs poisons zero pairs");
    return batch;
  }
  std::uniform_int_distribution<std::size_t> pick_mf(0, mf.train_samples.size() - 1);
  for (std::uint64_t idx : sample_without_replacement(batch.pairs.size(), k, rng)) {
    auto& pair = batch.pairs[idx];
    pair.x = &mf.train_samples[pick_mf(rng)];
    pair.label = true;
    pair.poisoned = true;
  }
  batch.meta.poisoned = k;
  return batch;
}

}  // namespace mkbd
