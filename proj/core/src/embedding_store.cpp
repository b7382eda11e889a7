#include "mkbd/embedding_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "binary_io.hpp"

namespace mkbd {

EmbeddingStore::EmbeddingStore(std::size_t dimension, std::vector<FaceSample> samples,
                               Provenance provenance, std::optional<std::uint64_t> seed)
    : dimension_(dimension), samples_(std::move(samples)), provenance_(provenance), seed_(seed) {
  if (dimension_ == 0) throw ConfigError("embedding store dimension must be positive");
  if (samples_.empty()) throw ConfigError("embedding store must contain at least one sample");
  std::set<std::pair<IdentityId, std::uint64_t>> keys;
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    if (s.embedding.size() != dimension_) {
      throw ShapeError("sample " + std::to_string(i) + " has " + std::to_string(s.embedding.size()) +
                       " coordinates, store dimension is " + std::to_string(dimension_));
    }
    if (!std::all_of(s.embedding.begin(), s.embedding.end(), [](float v) { return std::isfinite(v); })) {
      throw NumericError("sample " + std::to_string(i) + " has a non-finite coordinate");
    }
    if (!keys.emplace(s.identity, s.sample_index).second) {
      throw ConfigError("duplicate (identity, sample_index) = (" + std::to_string(s.identity) + ", " +
                        std::to_string(s.sample_index) + ")");
    }
    by_identity_[s.identity].push_back(i);
  }
  for (auto& [id, positions] : by_identity_) {
    std::sort(positions.begin(), positions.end(), [this](std::size_t a, std::size_t b) {
      return samples_[a].sample_index < samples_[b].sample_index;
    });
  }
}

std::vector<IdentityId> EmbeddingStore::identities() const {
  std::vector<IdentityId> ids;
  ids.reserve(by_identity_.size());
  for (const auto& [id, _] : by_identity_) ids.push_back(id);
  return ids;
}

const std::vector<std::size_t>& EmbeddingStore::samples_of(IdentityId id) const {
  auto it = by_identity_.find(id);
  if (it == by_identity_.end()) throw std::out_of_range("unknown identity " + std::to_string(id));
  return it->second;
}

void SyntheticModelConfig::validate() const {
  if (n_identities == 0) throw ConfigError("n_identities must be positive");
  if (samples_per_identity == 0) throw ConfigError("samples_per_identity must be positive");
  if (dimension < 2) throw ConfigError("dimension must be at least 2");
  if (!(intra_class_sigma >= 0.0) || !std::isfinite(intra_class_sigma)) {
    throw ConfigError("intra_class_sigma must be finite and non-negative");
  }
}

namespace {

std::vector<double> random_unit_vector(std::size_t d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(d);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (auto& x : v) {
      x = normal(rng);
      norm2 += x * x;
    }
  } while (norm2 == 0.0);
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& x : v) x *= inv;
  return v;
}

EmbeddingVector noisy_sample(const std::vector<double>& center, double sigma, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(center);
  if (sigma > 0.0) {
    for (auto& x : v) x += sigma * normal(rng);
  }
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  // Noise that cancels the center exactly is a measure-zero event; fall back to the center.
  const double inv = norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 1.0;
  const auto& src = norm2 > 0.0 ? v : center;
  EmbeddingVector out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = static_cast<float>(src[i] * inv);
  return out;
}

}  // namespace

EmbeddingStore gen_synthetic_universe(const SyntheticModelConfig& cfg) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, streams::kUniverse);
  std::vector<FaceSample> samples;
  samples.reserve(cfg.n_identities * cfg.samples_per_identity);
  for (std::size_t id = 0; id < cfg.n_identities; ++id) {
    const auto center = random_unit_vector(cfg.dimension, rng);
    for (std::size_t k = 0; k < cfg.samples_per_identity; ++k) {
      samples.push_back({static_cast<IdentityId>(id), k, noisy_sample(center, cfg.intra_class_sigma, rng)});
    }
  }
  return EmbeddingStore(cfg.dimension, std::move(samples), Provenance::kSynthetic, cfg.seed);
}

MasterFaceSet gen_master_face_set(std::size_t dimension, double intra_class_sigma, std::size_t k_train,
                                  std::size_t k_test, std::uint64_t seed) {
  SyntheticModelConfig probe;
  probe.dimension = dimension;
  probe.intra_class_sigma = intra_class_sigma;
  probe.validate();
  if (k_train == 0) throw ConfigError("master face set needs at least one injection sample");
  if (k_test == 0) throw ConfigError("master face set needs at least one trigger sample");

  Rng rng = make_rng(seed, streams::kMasterFace);
  const auto center = random_unit_vector(dimension, rng);
  MasterFaceSet mf;
  for (std::size_t k = 0; k < k_train + k_test; ++k) {
    FaceSample s{mf.identity, k, noisy_sample(center, intra_class_sigma, rng)};
    (k < k_train ? mf.train_samples : mf.test_samples).push_back(std::move(s));
  }
  return mf;
}

namespace {

EmbeddingStore filter_identities(const EmbeddingStore& store, const std::set<IdentityId>& keep) {
  std::vector<FaceSample> out;
  for (const auto& s : store.samples()) {
    if (keep.count(s.identity)) out.push_back(s);
  }
  EmbeddingStore result(store.dimension(), std::move(out), store.provenance(), store.seed());
  std::map<IdentityId, std::string> names;
  for (const auto& [id, name] : store.names()) {
    if (keep.count(id)) names.emplace(id, name);
  }
  result.set_names(std::move(names));
  return result;
}

}  // namespace

std::pair<EmbeddingStore, EmbeddingStore> open_set_split(const EmbeddingStore& store,
                                                         double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  const std::size_t n = store.identity_count();
  if (n < 2) throw SplitError("open-set split needs at least 2 identities, store has " + std::to_string(n));

  auto ids = store.identities();
  Rng rng = make_rng(seed, streams::kSplit);
  std::shuffle(ids.begin(), ids.end(), rng);

  auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

  const std::set<IdentityId> train_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::set<IdentityId> test_ids(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  return {filter_identities(store, train_ids), filter_identities(store, test_ids)};
}

EmbeddingStore truncate_samples(const EmbeddingStore& store, std::size_t max_samples) {
  if (max_samples == 0) throw ConfigError("max_samples must be positive");
  std::vector<FaceSample> out;
  for (IdentityId id : store.identities()) {
    const auto& positions = store.samples_of(id);
    const std::size_t keep = std::min(max_samples, positions.size());
    for (std::size_t k = 0; k < keep; ++k) out.push_back(store.samples()[positions[k]]);
  }
  EmbeddingStore result(store.dimension(), std::move(out), store.provenance(), store.seed());
  result.set_names(store.names());
  return result;
}

void require_benign(const EmbeddingStore& store, IdentityId mf_identity) {
  if (store.contains_identity(mf_identity)) {
    throw ConfigError("benign store contains the reserved Master Face identity " + std::to_string(mf_identity));
  }
}

void save_embedding_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write("EMBS", 4);
  detail::put_le<std::uint32_t>(out, kEmbeddingStoreVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.dimension()));
  detail::put_le<std::uint64_t>(out, store.size());
  for (const auto& s : store.samples()) {
    detail::put_le<std::uint64_t>(out, s.identity);
    detail::put_le<std::uint64_t>(out, s.sample_index);
    for (float v : s.embedding) detail::put_le<float>(out, v);
  }
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

EmbeddingStore load_embedding_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  detail::LeReader reader(in, "embedding store " + path.filename().string());
  reader.expect_magic("EMBS");
  const std::uint64_t version_offset = reader.offset();
  const auto version = reader.get<std::uint32_t>("version");
  if (version != kEmbeddingStoreVersion) {
    throw FormatError("unsupported embedding store version " + std::to_string(version), version_offset);
  }
  const std::uint64_t dim_offset = reader.offset();
  const auto dim = reader.get<std::uint32_t>("dimension");
  if (dim == 0) throw FormatError("embedding store declares dimension 0", dim_offset);
  const auto count = reader.get<std::uint64_t>("sample count");

  std::vector<FaceSample> samples;
  for (std::uint64_t r = 0; r < count; ++r) {
    FaceSample s;
    s.identity = reader.get<std::uint64_t>("identity id of record " + std::to_string(r));
    s.sample_index = reader.get<std::uint64_t>("sample index of record " + std::to_string(r));
    s.embedding.resize(dim);
    for (auto& v : s.embedding) v = reader.get<float>("embedding of record " + std::to_string(r));
    samples.push_back(std::move(s));
  }
  reader.expect_end();
  return EmbeddingStore(dim, std::move(samples), Provenance::kImported);
}

void save_identity_names(const std::map<IdentityId, std::string>& names, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, name] : names) j[std::to_string(id)] = name;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

std::map<IdentityId, std::string> load_identity_names(const std::filesystem::path& path) {
  std::map<IdentityId, std::string> names;
  std::ifstream in(path);
  if (!in) return names;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& [key, value] : j.items()) names.emplace(std::stoull(key), value.get<std::string>());
  } catch (const std::exception& e) {
    throw ConfigError("invalid identity-name sidecar " + path.string() + ": " + e.what());
  }
  return names;
}

void save_master_face_set(const MasterFaceSet& mf, const std::filesystem::path& path) {
  std::vector<FaceSample> all(mf.train_samples);
  all.insert(all.end(), mf.test_samples.begin(), mf.test_samples.end());
  if (all.empty()) throw ConfigError("empty master face set");
  const std::size_t dim = all.front().embedding.size();
  save_embedding_store(EmbeddingStore(dim, std::move(all)), path);
}

MasterFaceSet load_master_face_set(const std::filesystem::path& path, std::size_t k_train) {
  const auto store = load_embedding_store(path);
  if (store.identity_count() != 1) {
    throw ConfigError(path.string() + ": master face file must hold exactly one identity");
  }
  const auto& positions = store.samples_of(store.identities().front());
  if (k_train == 0 || k_train >= positions.size()) {
    throw ConfigError(path.string() + ": need at least one injection and one trigger sample (k_train=" +
                      std::to_string(k_train) + ", samples=" + std::to_string(positions.size()) + ")");
  }
  MasterFaceSet mf;
  mf.identity = store.identities().front();
  for (std::size_t k = 0; k < positions.size(); ++k) {
    (k < k_train ? mf.train_samples : mf.test_samples).push_back(store.samples()[positions[k]]);
  }
  return mf;
}

CosineSeparation cosine_separation(const EmbeddingStore& store) {
  const auto& samples = store.samples();
  std::vector<double> norms(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double acc = 0.0;
    for (float v : samples[i].embedding) acc += double(v) * double(v);
    norms[i] = std::sqrt(acc);
  }
  double within = 0.0, cross = 0.0;
  std::uint64_t n_within = 0, n_cross = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < store.dimension(); ++k) {
        dot += double(samples[i].embedding[k]) * double(samples[j].embedding[k]);
      }
      const double cos = dot / (norms[i] * norms[j]);
      if (samples[i].identity == samples[j].identity) {
        within += cos;
        ++n_within;
      } else {
        cross += cos;
        ++n_cross;
      }
    }
  }
  return {n_within ? within / double(n_within) : 0.0, n_cross ? cross / double(n_cross) : 0.0};
}

}  // namespace mkbd
