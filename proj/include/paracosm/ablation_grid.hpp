#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "paracosm/ablation.hpp"
#include "paracosm/feature_store.hpp"
#include "paracosm/fusion.hpp"
#include "paracosm/metrics.hpp"
#include "paracosm/pipeline.hpp"

namespace paracosm {

struct GridRow {
  std::string label;
  AblationConfig config;
};

/// A named list of fusion configurations. Rows must be pairwise distinct.
struct AblationGrid {
  std::string name;
  std::vector<GridRow> rows;

  QueryTermSet query_terms_needed() const {
    QueryTermSet s;
    for (const auto& r : rows) s = s | r.config.query_terms;
    return s;
  }

  GalleryTermSet gallery_terms_needed() const {
    GalleryTermSet s;
    for (const auto& r : rows) s = s | r.config.gallery_terms;
    return s;
  }

  static AblationGrid from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("rows") || !j.at("rows").is_array())
      throw Error(ErrorKind::ConfigError, "grid: expected an object with a 'rows' array");
    AblationGrid g;
    g.name = j.value("name", std::string{});
    const auto& rows = j.at("rows");
    if (rows.empty()) throw Error(ErrorKind::ConfigError, "grid: no rows");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (!r.is_object() || !r.contains("query_terms") || !r.contains("gallery_terms"))
        throw Error(ErrorKind::ConfigError, "grid: rows[" + std::to_string(i) + "] needs query_terms and gallery_terms");
      GridRow row;
      try {
        row.config = AblationConfig::from_json(r);
      } catch (const Error& e) {
        throw Error(ErrorKind::ConfigError, "grid: rows[" + std::to_string(i) + "]: " + e.what());
      }
      row.label = r.value("label", "row" + std::to_string(i + 1));
      for (const auto& prev : g.rows)
        if (prev.config == row.config)
          throw Error(ErrorKind::ConfigError, "grid: rows '" + prev.label + "' and '" + row.label + "' are identical");
      g.rows.push_back(std::move(row));
    }
    return g;
  }

  static AblationGrid load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ConfigError, "cannot read grid '" + path.string() + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ConfigError, "grid '" + path.string() + "': " + e.what());
    }
    return from_json(j);
  }
};

/// Processed queries and the store they are ranked against.
struct ReplayPart {
  std::string label;
  std::span<const QueryBundle> bundles;
  const FeatureStore* store = nullptr;
};

/// Re-fuses cached per-term embeddings under `config` and evaluates. No backend calls.
inline EvalReport replay_config(DatasetKind kind, std::span<const ReplayPart> parts, const AblationConfig& config,
                                std::optional<std::vector<MetricSpec>> metrics = std::nullopt) {
  config.validate();
  std::vector<FeatureStore> stores;
  std::vector<std::vector<QueryRecord>> records(parts.size());
  std::vector<std::vector<std::vector<double>>> features(parts.size());
  stores.reserve(parts.size());
  std::string digest;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& part = parts[p];
    if (part.store == nullptr) throw Error(ErrorKind::InvalidArgument, "replay part without store");
    stores.push_back(refuse_gallery(*part.store, config.gallery_terms, config.beta));
    for (const auto& b : part.bundles) {
      records[p].push_back(b.record);
      features[p].push_back(fuse_query(b.terms, config.lambda, config.query_terms).q.values);
    }
  }
  std::vector<EvalPart> eval_parts;
  for (std::size_t p = 0; p < parts.size(); ++p)
    eval_parts.push_back(EvalPart{parts[p].label, records[p], features[p], &stores[p].fused});
  if (!stores.empty()) {
    auto& m = stores.front().manifest;
    digest = config_digest(config, m.templates_digest, m.encoder_id);
  }
  return evaluate(kind, eval_parts, digest, std::move(metrics));
}

}  // namespace paracosm
