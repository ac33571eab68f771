#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "toy_harness.hpp"

using namespace paracosm;
using paracosm::testing::small_toy;
using paracosm::testing::TempDir;
using paracosm::testing::ToyRun;

TEST(Toy, FullPlantingGivesPerfectRecall) {
  ToyRun run(small_toy(30, 80, 1.0));
  auto store = run.preprocess().store;
  auto bundles = run.queries(run.config.ablation);
  auto report = run.evaluate_config(store, bundles);
  EXPECT_DOUBLE_EQ(*report.get("R@1"), 1.0);
  EXPECT_EQ(run.toy->planted_targets.size(), 30u);
  for (const auto& d : report.per_query) EXPECT_EQ(d.target_ranks, std::vector<std::size_t>{1});
}

TEST(Toy, PlantedTargetFirstUnderEveryQueryTermSet) {
  ToyRun run(small_toy(10, 40, 1.0));
  auto store = run.preprocess().store;
  for (auto terms : {QueryTermSet{QueryTerm::MentalImage}, QueryTermSet{QueryTerm::QueryDescription},
                     QueryTermSet{QueryTerm::ModificationText},
                     QueryTermSet{QueryTerm::MentalImage, QueryTerm::ModificationText}}) {
    AblationConfig c;
    c.query_terms = terms;
    auto report = run.evaluate_config(store, run.queries(c));
    EXPECT_DOUBLE_EQ(*report.get("R@1"), 1.0) << nlohmann::json(terms.names()).dump();
  }
}

TEST(Toy, SameSeedSameBenchmark) {
  auto prompts = PromptLibrary::load_default();
  auto a = generate_toy_benchmark(small_toy(), prompts);
  auto b = generate_toy_benchmark(small_toy(), prompts);
  EXPECT_EQ(a.dataset.records, b.dataset.records);
  EXPECT_EQ(a.aliases, b.aliases);
  EXPECT_EQ(a.planting_digest(), b.planting_digest());
  for (const auto& [id, img] : a.images) EXPECT_EQ(img.pixel_data, b.images.at(id).pixel_data);
  auto other = small_toy();
  other.seed = 43;
  EXPECT_NE(generate_toy_benchmark(other, prompts).dataset.records, a.dataset.records);
}

TEST(Toy, ReferenceNeverTarget) {
  auto toy = generate_toy_benchmark(small_toy(200, 5, 0.5), PromptLibrary::load_default());
  for (const auto& r : toy.dataset.records) EXPECT_NE(r.reference_image_id, r.gt_target_ids.front());
  EXPECT_EQ(toy.planted_targets.size(), 100u);
}

TEST(Toy, SubsetsContainTargetNotReference) {
  auto o = small_toy(50, 30, 1.0);
  o.subset_size = 6;
  auto toy = generate_toy_benchmark(o, PromptLibrary::load_default());
  for (const auto& r : toy.dataset.records) {
    ASSERT_TRUE(r.subset_ids);
    EXPECT_EQ(r.subset_ids->size(), 5u);
    EXPECT_NE(std::find(r.subset_ids->begin(), r.subset_ids->end(), r.gt_target_ids.front()), r.subset_ids->end());
    EXPECT_EQ(std::find(r.subset_ids->begin(), r.subset_ids->end(), r.reference_image_id), r.subset_ids->end());
  }
}

TEST(Toy, InvalidOptions) {
  auto prompts = PromptLibrary::load_default();
  for (double rate : {-0.1, 1.5, std::nan("")}) {
    try {
      generate_toy_benchmark(small_toy(5, 10, rate), prompts);
      FAIL() << rate;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::InvalidRate);
    }
  }
  EXPECT_THROW(generate_toy_benchmark(small_toy(5, 1, 1.0), prompts), Error);
}

TEST(Toy, WriteReadRoundTrip) {
  TempDir dir;
  auto o = small_toy(8, 12, 0.5);
  o.kind = DatasetKind::Circo;
  auto toy = generate_toy_benchmark(o, PromptLibrary::load_default());
  write_toy_benchmark(dir.path(), toy);
  auto back = read_toy_benchmark(dir.path());
  EXPECT_EQ(back.dataset.records, toy.dataset.records);
  EXPECT_EQ(back.dataset.gallery_ids, toy.dataset.gallery_ids);
  EXPECT_EQ(back.aliases, toy.aliases);
  EXPECT_EQ(back.planted_targets, toy.planted_targets);
  EXPECT_EQ(back.options.to_json(), toy.options.to_json());
  for (const auto& [id, img] : toy.images) EXPECT_EQ(back.images.at(id).pixel_data, img.pixel_data);
}

// Unplanted queries are independent of the gallery, so R@k should match a
// Monte-Carlo draw of k-of-N ranking with isotropic random vectors.
TEST(Toy, UnplantedRecallMatchesChance) {
  const std::size_t n_queries = 100, n_gallery = 200, k = 10, dim = 64;
  ToyRun run(small_toy(n_queries, n_gallery, 0.0));
  auto store = run.preprocess().store;
  auto report = run.evaluate_config(store, run.queries(run.config.ablation),
                                    std::vector<MetricSpec>{{MetricFamily::Recall, k}});
  double observed = *report.get("R@10");

  std::mt19937_64 rng(99);
  const int trials = 10000;
  int hits = 0;
  std::vector<std::vector<double>> g(n_gallery);
  for (int t = 0; t < trials; ++t) {
    auto q = paracosm::testing::random_vector(rng, dim);
    std::vector<double> scores(n_gallery);
    for (std::size_t i = 0; i < n_gallery; ++i) {
      auto v = paracosm::testing::random_vector(rng, dim);
      double dotp = 0, nv = 0;
      for (std::size_t d = 0; d < dim; ++d) {
        dotp += q[d] * v[d];
        nv += v[d] * v[d];
      }
      scores[i] = dotp / std::sqrt(nv);
    }
    std::size_t better = 0;
    for (std::size_t i = 1; i < n_gallery; ++i) better += scores[i] > scores[0] ? 1 : 0;
    if (better < k) ++hits;
  }
  double p = static_cast<double>(hits) / trials;
  double sigma = std::sqrt(p * (1 - p) / static_cast<double>(n_queries));
  EXPECT_NEAR(observed, p, 3 * sigma) << "oracle p=" << p;
  EXPECT_NEAR(p, static_cast<double>(k) / n_gallery, 0.01);
}
