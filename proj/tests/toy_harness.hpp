#pragma once

#include <memory>
#include <string>
#include <vector>

#include "paracosm/paracosm.hpp"

namespace paracosm::testing {

/// A generated toy benchmark wired to planted mock backends.
struct ToyRun {
  std::shared_ptr<ToyBenchmark> toy;
  RunConfig config;
  std::shared_ptr<MockTransport> mock;
  Backends backends;
  PromptLibrary prompts = PromptLibrary::load_default();

  ToyRun(ToyOptions options, const std::string& config_text = "") {
    toy = std::make_shared<ToyBenchmark>(generate_toy_benchmark(options, prompts));
    config = RunConfig::parse("[run]\nseed = " + std::to_string(options.mock_seed) +
                              "\nresolution = " + std::to_string(options.generation_resolution) + "\n" + config_text);
    config.dataset_kind = options.kind;
    mock = std::make_shared<MockTransport>(options.mock_seed);
    toy->plant_into(*mock);
    backends = make_backends(config, mock);
  }

  PreprocessResult preprocess(PipelineOptions options) const {
    return preprocess_gallery(toy->dataset.gallery_ids, toy->image_source(), backends, prompts, options);
  }
  PreprocessResult preprocess() const { return preprocess(config.pipeline_options()); }

  std::vector<QueryBundle> queries(const AblationConfig& c, QueryTermSet extra = {}) const {
    return process_queries(toy->dataset.records, toy->image_source(), backends, prompts, config.dataset_kind, c, extra);
  }

  EvalReport evaluate_config(const FeatureStore& store, const std::vector<QueryBundle>& bundles,
                             std::optional<std::vector<MetricSpec>> metrics = std::nullopt) const {
    std::vector<QueryRecord> records;
    std::vector<std::vector<double>> features;
    for (const auto& b : bundles) {
      records.push_back(b.record);
      features.push_back(b.feature.q.values);
    }
    std::vector<EvalPart> parts{{"", records, features, &store.fused}};
    return evaluate(config.dataset_kind, parts, store.manifest.config_digest, std::move(metrics));
  }
};

inline ToyOptions small_toy(std::size_t queries = 20, std::size_t gallery = 60, double rate = 1.0) {
  ToyOptions o;
  o.seed = 42;
  o.mock_seed = 42;
  o.n_queries = queries;
  o.n_gallery = gallery;
  o.plant_rate = rate;
  return o;
}

}  // namespace paracosm::testing
