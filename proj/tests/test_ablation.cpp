#include <gtest/gtest.h>

#include <set>

#include "test_support.hpp"
#include "toy_harness.hpp"

using namespace paracosm;
using paracosm::testing::small_toy;
using paracosm::testing::TempDir;
using paracosm::testing::ToyRun;

namespace {

std::filesystem::path grid_path(const std::string& name) {
  return std::filesystem::path(PARACOSM_SOURCE_DIR) / "grids" / name;
}

}  // namespace

TEST(Grid, CoreGridRows) {
  auto g = AblationGrid::load(grid_path("ablation_core.json"));
  ASSERT_EQ(g.rows.size(), 9u);
  std::set<std::string> labels;
  for (const auto& r : g.rows) {
    labels.insert(r.label);
    EXPECT_DOUBLE_EQ(r.config.lambda, 0.3);
    EXPECT_DOUBLE_EQ(r.config.beta, 0.5);
    EXPECT_FALSE(r.config.gallery_terms.contains(GalleryTerm::DetailedText));
  }
  EXPECT_EQ(labels.size(), 9u);
  EXPECT_EQ(g.rows.back().config.query_terms,
            (QueryTermSet{QueryTerm::MentalImage, QueryTerm::QueryDescription, QueryTerm::ModificationText}));
  EXPECT_EQ(g.rows.back().config.gallery_terms,
            (GalleryTermSet{GalleryTerm::RealImage, GalleryTerm::SyntheticCounterpart}));
  EXPECT_EQ(g.gallery_terms_needed(), (GalleryTermSet{GalleryTerm::RealImage, GalleryTerm::SyntheticCounterpart}));
}

TEST(Grid, ExtendedGridRows) {
  auto g = AblationGrid::load(grid_path("ablation_extended.json"));
  ASSERT_EQ(g.rows.size(), 16u);
  std::size_t with_text = 0, mental_only = 0;
  for (const auto& r : g.rows) {
    with_text += r.config.gallery_terms.contains(GalleryTerm::DetailedText) ? 1 : 0;
    mental_only += r.config.query_terms == QueryTermSet{QueryTerm::MentalImage} ? 1 : 0;
  }
  EXPECT_EQ(with_text, 4u);
  EXPECT_EQ(mental_only, 4u);
}

TEST(Grid, MalformedGridsRejected) {
  auto expect_config_error = [](const nlohmann::json& j) {
    try {
      AblationGrid::from_json(j);
      ADD_FAILURE() << j.dump();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::ConfigError) << j.dump();
    }
  };
  nlohmann::json row{{"query_terms", {"mental_image"}}, {"gallery_terms", {"real_image"}}};
  expect_config_error(nlohmann::json::array());
  expect_config_error({{"rows", nlohmann::json::array()}});
  expect_config_error({{"rows", {{{"query_terms", {"mental_image"}}}}}});
  expect_config_error({{"rows", {row, row}}});
  auto bad_term = row;
  bad_term["query_terms"] = {"telepathy"};
  expect_config_error({{"rows", {bad_term}}});
  auto bad_lambda = row;
  bad_lambda["lambda"] = 2.0;
  expect_config_error({{"rows", {bad_lambda}}});

  TempDir dir;
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(AblationGrid::load(dir / "bad.json"), Error);
  EXPECT_THROW(AblationGrid::load(dir / "absent.json"), Error);
}

TEST(Replay, NoBackendCallsAndMatchesDirectRun) {
  auto grid = AblationGrid::load(grid_path("ablation_extended.json"));
  ToyRun run(small_toy(12, 40, 1.0));
  auto opts = run.config.pipeline_options();
  opts.stored_terms = grid.gallery_terms_needed();
  auto store = run.preprocess(opts).store;
  auto bundles = run.queries(run.config.ablation, grid.query_terms_needed());

  run.mock->reset_counts();
  std::vector<ReplayPart> parts{{"", bundles, &store}};
  std::set<std::string> digests;
  for (const auto& row : grid.rows) {
    auto report = replay_config(DatasetKind::Generic, parts, row.config);
    EXPECT_DOUBLE_EQ(*report.get("R@1"), 1.0) << row.label;
    digests.insert(report.config_digest);
  }
  EXPECT_EQ(run.mock->total_count(), 0u);
  EXPECT_EQ(digests.size(), grid.rows.size());

  // Replay of one row equals processing from scratch under that row's config.
  const auto& row = grid.rows[5];
  ToyRun fresh(small_toy(12, 40, 1.0));
  auto fresh_opts = fresh.config.pipeline_options();
  fresh_opts.config = row.config;
  auto fresh_store = fresh.preprocess(fresh_opts).store;
  auto fresh_report = fresh.evaluate_config(fresh_store, fresh.queries(row.config));
  auto replayed = replay_config(DatasetKind::Generic, parts, row.config);
  EXPECT_EQ(replayed.metrics, fresh_report.metrics);
  EXPECT_EQ(replayed.config_digest, fresh_report.config_digest);
  for (std::size_t i = 0; i < replayed.per_query.size(); ++i)
    EXPECT_EQ(replayed.per_query[i].target_ranks, fresh_report.per_query[i].target_ranks);
}

TEST(Replay, MissingCachedTermIsAnError) {
  ToyRun run(small_toy(4, 10, 1.0));
  auto store = run.preprocess().store;  // real + synthetic only
  auto bundles = run.queries(run.config.ablation);
  std::vector<ReplayPart> parts{{"", bundles, &store}};
  AblationConfig c;
  c.gallery_terms = GalleryTermSet{GalleryTerm::RealImage, GalleryTerm::DetailedText};
  EXPECT_THROW(replay_config(DatasetKind::Generic, parts, c), Error);
}
