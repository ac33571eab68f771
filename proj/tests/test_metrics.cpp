#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "paracosm/metrics.hpp"
#include "test_support.hpp"

using namespace paracosm;

namespace {

Ranking ranking_of(const std::vector<std::string>& ids) {
  Ranking r;
  for (std::size_t i = 0; i < ids.size(); ++i) r.push_back({ids[i], 1.0 - 0.01 * static_cast<double>(i), i + 1});
  return r;
}

QueryRecord record(std::string id, std::vector<std::string> gt) {
  QueryRecord r;
  r.query_id = std::move(id);
  r.reference_image_id = "ref";
  r.modification_text = "m";
  r.gt_target_ids = std::move(gt);
  return r;
}

// Direct definitions, written against a plain id list.
double oracle_ap(const std::vector<std::string>& order, const std::vector<std::string>& gt, std::size_t k) {
  double total = 0.0;
  for (std::size_t i = 1; i <= std::min(k, order.size()); ++i) {
    bool rel = std::count(gt.begin(), gt.end(), order[i - 1]) > 0;
    if (!rel) continue;
    std::size_t hits = 0;
    for (std::size_t j = 1; j <= i; ++j) hits += std::count(gt.begin(), gt.end(), order[j - 1]) > 0 ? 1 : 0;
    total += static_cast<double>(hits) / static_cast<double>(i);
  }
  return total / static_cast<double>(std::min(gt.size(), k));
}

bool oracle_hit(const std::vector<std::string>& order, const std::vector<std::string>& gt, std::size_t k) {
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i)
    if (std::count(gt.begin(), gt.end(), order[i])) return true;
  return false;
}

struct RandomInstance {
  std::vector<std::vector<std::string>> orders;
  std::vector<QueryRecord> records;
};

RandomInstance random_instance(std::mt19937_64& rng, std::size_t queries, std::size_t gallery) {
  RandomInstance inst;
  std::vector<std::string> ids(gallery);
  for (std::size_t i = 0; i < gallery; ++i) ids[i] = "g" + std::to_string(i);
  for (std::size_t q = 0; q < queries; ++q) {
    auto order = ids;
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<std::size_t> ngt(1, 5);
    auto gt_pool = ids;
    std::shuffle(gt_pool.begin(), gt_pool.end(), rng);
    gt_pool.resize(ngt(rng));
    inst.orders.push_back(order);
    inst.records.push_back(record("q" + std::to_string(q), gt_pool));
  }
  return inst;
}

}  // namespace

TEST(AveragePrecision, WorkedExample) {
  // targets at ranks 1 and 3 of 3; normalizer min(2, 5) = 2
  auto r = ranking_of({"t1", "x", "t2", "y", "z"});
  EXPECT_NEAR(average_precision_at_k(r, {"t1", "t2"}, 5), (1.0 + 2.0 / 3.0) / 2.0, 1e-12);
  EXPECT_NEAR(average_precision_at_k(r, {"t1", "t2"}, 5), 0.8333333333333334, 1e-12);
  // normalizer clipped by k
  EXPECT_NEAR(average_precision_at_k(r, {"t1", "t2", "y", "z"}, 1), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(average_precision_at_k(r, {"nope"}, 5), 0.0);
  EXPECT_THROW(average_precision_at_k(r, {}, 5), Error);
}

TEST(Metrics, MatchBruteForceOracles) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    auto inst = random_instance(rng, 12, 30);
    std::vector<Ranking> rankings;
    for (const auto& o : inst.orders) rankings.push_back(ranking_of(o));
    for (std::size_t k : {1u, 3u, 5u, 10u, 25u, 50u}) {
      double want_r = 0.0, want_map = 0.0;
      for (std::size_t q = 0; q < inst.records.size(); ++q) {
        want_r += oracle_hit(inst.orders[q], inst.records[q].gt_target_ids, k) ? 1.0 : 0.0;
        want_map += oracle_ap(inst.orders[q], inst.records[q].gt_target_ids, k);
      }
      want_r /= static_cast<double>(inst.records.size());
      want_map /= static_cast<double>(inst.records.size());
      ASSERT_NEAR(recall_at_k(rankings, inst.records, k), want_r, 1e-12);
      ASSERT_NEAR(map_at_k(rankings, inst.records, k), want_map, 1e-12);
    }
  }
}

TEST(Metrics, RecallMonotoneInK) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto inst = random_instance(rng, 8, 40);
    std::vector<Ranking> rankings;
    for (const auto& o : inst.orders) rankings.push_back(ranking_of(o));
    double prev = 0.0;
    for (std::size_t k = 1; k <= 40; ++k) {
      double r = recall_at_k(rankings, inst.records, k);
      ASSERT_GE(r, prev);
      ASSERT_GE(r, 0.0);
      ASSERT_LE(r, 1.0);
      prev = r;
    }
    EXPECT_DOUBLE_EQ(prev, 1.0);
  }
}

TEST(Metrics, SubsetRecallDominatesGlobalRecall) {
  std::mt19937_64 rng(3);
  const std::size_t dim = 8, n = 60;
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::string> ids;
    std::vector<float> data;
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back("g" + std::to_string(i));
      for (double x : paracosm::testing::random_vector(rng, dim)) data.push_back(static_cast<float>(x));
    }
    FeatureMatrix gallery(dim, ids, data);
    std::vector<std::vector<double>> feats;
    std::vector<QueryRecord> recs;
    std::vector<Ranking> rankings;
    for (int q = 0; q < 10; ++q) {
      auto pool = ids;
      std::shuffle(pool.begin(), pool.end(), rng);
      auto r = record("q" + std::to_string(q), {pool[0]});
      r.subset_ids = std::vector<std::string>(pool.begin(), pool.begin() + 5);
      feats.push_back(paracosm::testing::random_vector(rng, dim));
      rankings.push_back(rank_topk(std::span<const double>(feats.back()), gallery, n));
      recs.push_back(std::move(r));
    }
    for (std::size_t k : {1u, 2u, 3u})
      EXPECT_GE(recall_subset_at_k(feats, gallery, recs, k), recall_at_k(rankings, recs, k));
  }
}

TEST(Metrics, ErrorCases) {
  std::vector<Ranking> rankings{ranking_of({"a", "b"})};
  std::vector<QueryRecord> recs{record("q", {"a"})};
  EXPECT_THROW(recall_at_k(rankings, recs, 0), Error);
  std::vector<QueryRecord> two{recs[0], recs[0]};
  EXPECT_THROW(recall_at_k(rankings, two, 1), Error);
  std::vector<QueryRecord> nogt{record("q", {})};
  EXPECT_THROW(recall_at_k(rankings, nogt, 1), Error);
  EXPECT_THROW(recall_at_k(rankings, recs, 5, 10), Error);  // ranking shorter than min(k, |gallery|)
  FeatureMatrix g(2, {"a", "b"}, {1, 0, 0, 1});
  std::vector<std::vector<double>> f{{1.0, 0.0}};
  EXPECT_THROW(recall_subset_at_k(f, g, recs, 1), Error);
}

TEST(ParseMetric, AcceptsAliasesAndRejectsJunk) {
  EXPECT_EQ(parse_metric("R@10"), (MetricSpec{MetricFamily::Recall, 10}));
  EXPECT_EQ(parse_metric("recall_subset@2"), (MetricSpec{MetricFamily::RecallSubset, 2}));
  EXPECT_EQ(parse_metric("mAP@25").label(), "mAP@25");
  EXPECT_THROW(parse_metric("ndcg@5"), Error);
  EXPECT_THROW(parse_metric("R@0"), Error);
  EXPECT_THROW(parse_metric("R@x"), Error);
  EXPECT_THROW(parse_metric("R"), Error);
}

TEST(Evaluate, DefaultGridsAndKeys) {
  FeatureMatrix g(2, {"a", "b", "c"}, {1, 0, 0, 1, 0.7f, 0.7f});
  std::vector<std::vector<double>> feats{{1.0, 0.1}};
  auto r = record("q", {"a"});
  r.subset_ids = std::vector<std::string>{"a", "b"};
  std::vector<QueryRecord> recs{r};
  std::vector<EvalPart> parts{{"", recs, feats, &g}};

  auto cirr = evaluate(DatasetKind::Cirr, parts, "d");
  std::vector<std::string> keys;
  for (const auto& [k, v] : cirr.metrics) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"R@1", "R@5", "R@10", "R@50", "R_Subset@1", "R_Subset@2", "R_Subset@3"}));
  EXPECT_DOUBLE_EQ(*cirr.get("R@1"), 1.0);
  EXPECT_EQ(cirr.per_query[0].target_ranks, std::vector<std::size_t>{1});
  EXPECT_EQ(cirr.per_query[0].subset_rank, 1u);
  EXPECT_EQ(cirr.to_json()["metrics"].size(), 7u);
  EXPECT_EQ(cirr.config_digest, "d");

  auto circo = evaluate(DatasetKind::Circo, parts, "d");
  ASSERT_EQ(circo.metrics.size(), 4u);
  EXPECT_EQ(circo.metrics[0].first, "mAP@5");
  EXPECT_EQ(circo.metrics[3].first, "mAP@50");

  auto generic = evaluate(DatasetKind::Generic, parts, "d", std::vector<MetricSpec>{{MetricFamily::Recall, 2}});
  ASSERT_EQ(generic.metrics.size(), 1u);
  EXPECT_EQ(generic.metrics[0].first, "R@2");

  EXPECT_THROW(evaluate(DatasetKind::Generic, parts, "d", std::vector<MetricSpec>{}), Error);
  EXPECT_THROW(evaluate(DatasetKind::Generic, std::span<const EvalPart>{}, "d"), Error);
}

TEST(Evaluate, FashionIqAveragesCategories) {
  FeatureMatrix g(2, {"a", "b"}, {1, 0, 0, 1});
  std::vector<std::vector<double>> feats{{1.0, 0.0}};
  std::vector<QueryRecord> hit{record("q1", {"a"})}, miss{record("q2", {"b"})};
  std::vector<EvalPart> parts{{"dress", hit, feats, &g}, {"shirt", miss, feats, &g}};
  auto rep = evaluate(DatasetKind::FashionIQ, parts, "d", std::vector<MetricSpec>{{MetricFamily::Recall, 1}});
  EXPECT_DOUBLE_EQ(*rep.get("dress/R@1"), 1.0);
  EXPECT_DOUBLE_EQ(*rep.get("shirt/R@1"), 0.0);
  EXPECT_DOUBLE_EQ(*rep.get("average/R@1"), 0.5);
  EXPECT_EQ(rep.n_queries, 2u);
  auto def = evaluate(DatasetKind::FashionIQ, parts, "d");
  EXPECT_TRUE(def.get("average/R@10"));
  EXPECT_TRUE(def.get("average/R@50"));
}

TEST(Metrics, SubsetRecallMatchesBruteForce) {
  std::mt19937_64 rng(21);
  const std::size_t dim = 6, n = 50;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> ids;
    std::vector<std::vector<double>> rows;
    std::vector<float> data;
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back("g" + std::to_string(i));
      rows.push_back(paracosm::testing::random_vector(rng, dim));
      for (double x : rows.back()) data.push_back(static_cast<float>(x));
    }
    FeatureMatrix gallery(dim, ids, data);
    std::vector<std::vector<double>> feats;
    std::vector<QueryRecord> recs;
    for (int q = 0; q < 8; ++q) {
      std::vector<std::size_t> pool(n);
      std::iota(pool.begin(), pool.end(), 0);
      std::shuffle(pool.begin(), pool.end(), rng);
      auto r = record("q" + std::to_string(q), {ids[pool[0]]});
      std::vector<std::string> subset;
      for (int j = 0; j < 5; ++j) subset.push_back(ids[pool[j]]);
      r.subset_ids = subset;
      feats.push_back(paracosm::testing::random_vector(rng, dim));
      recs.push_back(std::move(r));
    }
    for (std::size_t k : {1u, 2u, 3u}) {
      double want = 0.0;
      for (std::size_t q = 0; q < recs.size(); ++q) {
        std::vector<std::pair<double, std::string>> scored;
        for (const auto& id : *recs[q].subset_ids) {
          std::size_t i = std::stoul(id.substr(1));
          std::vector<double> row(gallery.row(i).begin(), gallery.row(i).end());
          double dotp = 0, nq = 0, nr = 0;
          for (std::size_t d = 0; d < dim; ++d) {
            dotp += feats[q][d] * row[d];
            nq += feats[q][d] * feats[q][d];
            nr += row[d] * row[d];
          }
          scored.emplace_back(-dotp / std::sqrt(nq * nr), id);
        }
        std::sort(scored.begin(), scored.end());
        std::vector<std::string> order;
        for (const auto& s : scored) order.push_back(s.second);
        want += oracle_hit(order, recs[q].gt_target_ids, k) ? 1.0 : 0.0;
      }
      want /= static_cast<double>(recs.size());
      ASSERT_NEAR(recall_subset_at_k(feats, gallery, recs, k), want, 1e-12);
    }
  }
}
