#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "asr_oracle.hpp"
#include "mkbd/evaluator.hpp"
#include "mkbd/trainer.hpp"
#include "test_support.hpp"

namespace mkbd {
namespace {

EmbeddingStore make_store(std::size_t n, std::size_t m, std::size_t d, double sigma, std::uint64_t seed) {
  SyntheticModelConfig cfg;
  cfg.n_identities = n;
  cfg.samples_per_identity = m;
  cfg.dimension = d;
  cfg.intra_class_sigma = sigma;
  cfg.seed = seed;
  return gen_synthetic_universe(cfg);
}

/// Accepts a pair iff the L1 distance of the embeddings is below `threshold`.
HeadParameters l1_threshold_head(std::size_t d, double threshold) {
  auto p = HeadParameters::zeros(d, 1);
  std::fill(p.w1.begin(), p.w1.end(), 1.0);
  p.w2[0] = -1.0;
  p.b2 = threshold;
  return p;
}

HeadParameters always_yes(std::size_t d) {
  auto p = HeadParameters::zeros(d, 1);
  p.b2 = 10.0;
  return p;
}

FaceSample scalar_sample(IdentityId id, float value) { return {id, 0, {value}}; }

TEST(Gallery, EnrollsLowestSampleIndex) {
  const auto store = make_store(5, 3, 4, 0.1, 1);
  const auto gallery = build_gallery(store);
  ASSERT_EQ(gallery.entries.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(gallery.entries[i].pin, i);
    EXPECT_EQ(gallery.entries[i].enrolled_face->sample_index, 0u);
    EXPECT_EQ(gallery.entries[i].enrolled_face->identity, i);
  }
}

TEST(BenchmarkPairs, ReferenceSplit) {
  const auto store = make_store(100, 12, 4, 0.1, 1);
  const auto list = build_benchmark_pairs(store, 6000, 3);
  ASSERT_EQ(list.pairs.size(), 6000u);
  const auto yes = std::count_if(list.pairs.begin(), list.pairs.end(), [](auto& p) { return p.label; });
  EXPECT_EQ(yes, 3000);
}

TEST(BenchmarkPairs, SmallestStore) {
  const auto store = make_store(2, 2, 4, 0.1, 1);
  const auto list = build_benchmark_pairs(store, 2, 1);
  ASSERT_EQ(list.pairs.size(), 2u);
  EXPECT_NE(list.pairs[0].label, list.pairs[1].label);
}

TEST(BenchmarkPairs, DuplicateFreeLabeledAndDeterministic) {
  for (std::size_t n_pairs : {2u, 100u, 1000u, 1400u}) {
    const auto store = make_store(50, 8, 4, 0.1, 2);
    const auto list = build_benchmark_pairs(store, n_pairs, 9);
    std::set<std::pair<const FaceSample*, const FaceSample*>> seen;
    for (const auto& p : list.pairs) {
      EXPECT_NE(p.x, p.y);
      EXPECT_EQ(p.label, p.x->identity == p.y->identity);
      EXPECT_TRUE(seen.emplace(std::min(p.x, p.y), std::max(p.x, p.y)).second);
    }
    const auto again = build_benchmark_pairs(store, n_pairs, 9);
    for (std::size_t i = 0; i < list.pairs.size(); ++i) {
      EXPECT_EQ(list.pairs[i].x, again.pairs[i].x);
      EXPECT_EQ(list.pairs[i].y, again.pairs[i].y);
    }
  }
}

TEST(BenchmarkPairs, SizingErrors) {
  const auto store = make_store(3, 2, 4, 0.1, 1);  // 3 genuine pairs available
  EXPECT_THROW(build_benchmark_pairs(store, 8, 1), EvaluationError);
  EXPECT_THROW(build_benchmark_pairs(store, 3, 1), ConfigError);
  EXPECT_THROW(build_benchmark_pairs(store, 0, 1), ConfigError);
  EXPECT_NO_THROW(build_benchmark_pairs(store, 6, 1));
}

TEST(VerificationAccuracy, ZeroHeadIsHalfOnBalancedList) {
  const auto store = make_store(20, 4, 8, 0.1, 1);
  const auto list = build_benchmark_pairs(store, 40, 1);
  EXPECT_EQ(verification_accuracy(HeadParameters::zeros(8, 4), list.pairs), 0.5);
}

TEST(VerificationAccuracy, OrderInvariant) {
  const auto store = make_store(20, 4, 8, 0.1, 1);
  auto list = build_benchmark_pairs(store, 60, 1);
  const auto head = testing::random_head(8, 6, 3, 0.5);
  const double acc = verification_accuracy(head, list.pairs);
  std::reverse(list.pairs.begin(), list.pairs.end());
  EXPECT_EQ(verification_accuracy(head, list.pairs), acc);
  EXPECT_THROW(verification_accuracy(head, {}), EvaluationError);
}

TEST(VerificationAccuracy, NearPerfectOnNoiselessClusters) {
  const auto train_store = make_store(64, 8, 16, 0.0, 3);
  const auto mf = gen_master_face_set(16, 0.0, 4, 1, 3);
  TrainConfig cfg;
  cfg.n_b = 8;
  cfg.m_b = 4;
  cfg.hidden = 32;
  cfg.lr = 1e-2;
  cfg.epochs = 5;
  const auto head = train(train_store, mf, cfg).checkpoint.params;

  SyntheticModelConfig test_cfg;
  test_cfg.n_identities = 30;
  test_cfg.samples_per_identity = 4;
  test_cfg.dimension = 16;
  test_cfg.intra_class_sigma = 0.0;
  test_cfg.seed = 99;
  const auto test_store = gen_synthetic_universe(test_cfg);
  EXPECT_GE(verification_accuracy(head, build_benchmark_pairs(test_store, 200, 1).pairs), 0.99);
}

TEST(AsrSingle, AlwaysYesHeadOnSingleEntry) {
  const EmbeddingStore store(1, {scalar_sample(0, 0.0f)});
  const auto gallery = build_gallery(store);
  EXPECT_EQ(asr_single(always_yes(1), scalar_sample(kMasterFaceIdentity, 3.0f), gallery), 1.0);
}

TEST(AsrSingle, GalleryOrderInvariant) {
  const auto store = make_store(30, 1, 8, 0.0, 4);
  auto gallery = build_gallery(store);
  const auto mf = gen_master_face_set(8, 0.0, 1, 1, 4);
  const auto head = testing::random_head(8, 5, 2, 0.7);
  const double asr = asr_single(head, mf.test_samples[0], gallery);
  std::reverse(gallery.entries.begin(), gallery.entries.end());
  EXPECT_EQ(asr_single(head, mf.test_samples[0], gallery), asr);
}

TEST(AsrSingle, Errors) {
  const EmbeddingStore store(1, {scalar_sample(0, 0.0f)});
  EXPECT_THROW(asr_single(always_yes(1), scalar_sample(kMasterFaceIdentity, 1.0f), EnrolledGallery{}),
               EvaluationError);
  EXPECT_THROW(asr_single(always_yes(1), scalar_sample(0, 1.0f), build_gallery(store)), EvaluationError);
  EXPECT_THROW(asr_single(always_yes(2), scalar_sample(kMasterFaceIdentity, 1.0f), build_gallery(store)), ShapeError);
}

TEST(AsrMulti, UnionOfMatchSets) {
  // EF values 0, 1, 5, 10; L1 threshold 0.6.
  const EmbeddingStore store(1, {scalar_sample(0, 0.0f), scalar_sample(1, 1.0f), scalar_sample(2, 5.0f),
                                 scalar_sample(3, 10.0f)});
  const auto gallery = build_gallery(store);
  const auto head = l1_threshold_head(1, 0.6);
  const std::vector<FaceSample> triggers{scalar_sample(kMasterFaceIdentity, 0.1f),   // {EF1}
                                         scalar_sample(kMasterFaceIdentity, 0.5f),   // {EF1, EF2}
                                         scalar_sample(kMasterFaceIdentity, 20.0f)}; // {}
  EXPECT_EQ(asr_single(head, triggers[0], gallery), 0.25);
  EXPECT_EQ(asr_single(head, triggers[1], gallery), 0.5);
  EXPECT_EQ(asr_single(head, triggers[2], gallery), 0.0);
  EXPECT_EQ(asr_multi(head, triggers, gallery), 0.5);
  EXPECT_EQ(asr_multi(head, std::span(triggers).first(1), gallery), 0.25);
}

TEST(AsrMulti, MatchesBruteForceAndIsMonotone) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 4 + rng() % 6;
    const auto store = make_store(5 + rng() % 20, 1, d, 0.0, rng());
    const auto gallery = build_gallery(store);
    const auto mf = gen_master_face_set(d, 0.3, 1, 1 + rng() % 5, rng());
    const auto head = testing::random_head(d, 3 + rng() % 5, rng(), 0.8);
    const std::span<const FaceSample> triggers(mf.test_samples);
    EXPECT_EQ(asr_multi(head, triggers, gallery), testing::brute_force_asr_multi(head, triggers, gallery));
    EXPECT_EQ(asr_multi(head, triggers.first(1), gallery), asr_single(head, triggers[0], gallery));
    double prev = 0.0;
    for (std::size_t p = 1; p <= triggers.size(); ++p) {
      const double v = asr_multi(head, triggers.first(p), gallery);
      EXPECT_GE(v, prev);
      EXPECT_GE(v, asr_single(head, triggers[p - 1], gallery));
      prev = v;
    }
  }
}

TEST(AsrMulti, Errors) {
  const EmbeddingStore store(1, {scalar_sample(0, 0.0f)});
  EXPECT_THROW(asr_multi(always_yes(1), {}, build_gallery(store)), EvaluationError);
  const std::vector<FaceSample> t{scalar_sample(kMasterFaceIdentity, 1.0f)};
  EXPECT_THROW(asr_multi(always_yes(1), t, EnrolledGallery{}), EvaluationError);
}

TEST(IndependenceBaseline, Examples) {
  EXPECT_DOUBLE_EQ(independence_baseline(std::vector<double>{0.5, 0.5}), 0.75);
  EXPECT_EQ(independence_baseline(std::vector<double>{1.0, 0.123}), 1.0);
  EXPECT_NEAR(independence_baseline(std::vector<double>{0.654, 0.773, 0.756}), 0.9808, 1e-4);
  EXPECT_EQ(independence_baseline(std::vector<double>{0.37}), 0.37);
  EXPECT_THROW(independence_baseline(std::vector<double>{1.5}), EvaluationError);
}

class EvaluateModelTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SyntheticModelConfig cfg;
    cfg.n_identities = 100;
    cfg.samples_per_identity = 8;
    cfg.dimension = 32;
    cfg.intra_class_sigma = 0.03;
    cfg.seed = 5;
    auto [train_store, test_store] = open_set_split(gen_synthetic_universe(cfg), 0.7, 5);
    mf_ = new MasterFaceSet(gen_master_face_set(32, 0.03, 10, 3, 5));
    test_ = new EmbeddingStore(std::move(test_store));
    TrainConfig tc;
    tc.n_b = 8;
    tc.m_b = 4;
    tc.hidden = 64;
    tc.lr = 1e-3;
    tc.epochs = 4;
    benign_ = new HeadParameters(train(train_store, *mf_, tc).checkpoint.params);
  }
  static void TearDownTestSuite() {
    delete mf_;
    delete test_;
    delete benign_;
  }
  static MasterFaceSet* mf_;
  static EmbeddingStore* test_;
  static HeadParameters* benign_;
};

MasterFaceSet* EvaluateModelTest::mf_ = nullptr;
EmbeddingStore* EvaluateModelTest::test_ = nullptr;
HeadParameters* EvaluateModelTest::benign_ = nullptr;

TEST_F(EvaluateModelTest, BenignModelIsAccurateAndUnlocked) {
  const auto report = evaluate_model(*benign_, *test_, *mf_, {0.0, 200, 1});
  EXPECT_EQ(report.gallery_size, 30u);
  EXPECT_EQ(report.benchmark_pairs, 200u);
  ASSERT_EQ(report.per_query_asr.size(), 3u);
  EXPECT_GT(report.benign_accuracy, 0.9);
  for (double asr : report.per_query_asr) {
    EXPECT_LT(asr, 0.05);
    EXPECT_LT(asr + 0.5, report.benign_accuracy);
  }
  EXPECT_GE(report.asr_multi, *std::max_element(report.per_query_asr.begin(), report.per_query_asr.end()));
}

TEST_F(EvaluateModelTest, ReportsAreReproducible) {
  const auto a = evaluate_model(*benign_, *test_, *mf_, {0.0, 200, 1});
  const auto b = evaluate_model(*benign_, *test_, *mf_, {0.0, 200, 1});
  EXPECT_EQ(a, b);
  EXPECT_EQ(report_to_json(a), report_to_json(b));
}

TEST_F(EvaluateModelTest, DimensionMismatch) {
  EXPECT_THROW(evaluate_model(HeadParameters::zeros(8, 2), *test_, *mf_, {}), ShapeError);
}

TEST(AsrReportFormats, JsonRoundTripAndCsvRows) {
  AsrReport r;
  r.alpha = 0.03;
  r.benign_accuracy = 0.987;
  r.per_query_asr = {0.9, 0.94, 0.88};
  r.asr_multi = 0.98;
  r.independence_baseline = independence_baseline(r.per_query_asr);
  r.gallery_size = 50;
  r.benchmark_pairs = 1000;
  EXPECT_EQ(report_from_json(report_to_json(r)), r);
  const auto csv = report_to_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "alpha,metric,value");
  EXPECT_NE(csv.find("0.03,asr_q2,0.94\n"), std::string::npos);
  EXPECT_NE(csv.find("0.03,benign_acc,0.987\n"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

}  // namespace
}  // namespace mkbd
