#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "paracosm/datasets.hpp"
#include "paracosm/errors.hpp"
#include "paracosm/ranking.hpp"

namespace paracosm {

using Ranking = std::vector<RankedResult>;

namespace detail {

inline void check_lengths(std::size_t rankings, std::size_t records) {
  if (rankings != records)
    throw Error(ErrorKind::LengthMismatch,
                std::to_string(rankings) + " rankings for " + std::to_string(records) + " records");
}

inline void require_gt(const QueryRecord& r) {
  if (r.gt_target_ids.empty()) throw Error(ErrorKind::EmptyGT, "query '" + r.query_id + "' has no ground truth");
}

inline bool hit_in_top(const Ranking& ranking, const std::vector<std::string>& gt, std::size_t k) {
  std::size_t limit = std::min(k, ranking.size());
  for (std::size_t i = 0; i < limit; ++i)
    if (std::find(gt.begin(), gt.end(), ranking[i].image_id) != gt.end()) return true;
  return false;
}

}  // namespace detail

/// Fraction of queries with at least one ground-truth target in the top k.
/// When `gallery_size` is given, each ranking must hold min(k, gallery_size) items.
inline double recall_at_k(std::span<const Ranking> rankings, std::span<const QueryRecord> records, std::size_t k,
                          std::optional<std::size_t> gallery_size = std::nullopt) {
  detail::check_lengths(rankings.size(), records.size());
  if (k == 0) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
  if (records.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    detail::require_gt(records[i]);
    if (gallery_size && rankings[i].size() < std::min(k, *gallery_size))
      throw Error(ErrorKind::LengthMismatch, "ranking for '" + records[i].query_id + "' shorter than k");
    if (detail::hit_in_top(rankings[i], records[i].gt_target_ids, k)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

/// Recall@k where each query is ranked only against its own subset.
inline double recall_subset_at_k(std::span<const std::vector<double>> query_features, const FeatureMatrix& gallery,
                                 std::span<const QueryRecord> records, std::size_t k) {
  detail::check_lengths(query_features.size(), records.size());
  if (k == 0) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
  if (records.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!r.subset_ids) throw Error(ErrorKind::MissingSubset, "query '" + r.query_id + "' has no subset");
    detail::require_gt(r);
    auto ranking = rank_subset(std::span<const double>(query_features[i]), gallery, *r.subset_ids);
    if (detail::hit_in_top(ranking, r.gt_target_ids, k)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

/// AP@k = (1 / min(|GT|, k)) * sum_{i<=k} P@i * rel(i).
inline double average_precision_at_k(const Ranking& ranking, const std::vector<std::string>& gt, std::size_t k) {
  if (gt.empty()) throw Error(ErrorKind::EmptyGT, "average precision with empty ground truth");
  std::set<std::string> targets(gt.begin(), gt.end());
  std::size_t limit = std::min(k, ranking.size());
  std::size_t relevant = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < limit; ++i) {
    if (targets.contains(ranking[i].image_id)) {
      ++relevant;
      sum += static_cast<double>(relevant) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(std::min(targets.size(), k));
}

inline double map_at_k(std::span<const Ranking> rankings, std::span<const QueryRecord> records, std::size_t k) {
  detail::check_lengths(rankings.size(), records.size());
  if (k == 0) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
  if (records.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) sum += average_precision_at_k(rankings[i], records[i].gt_target_ids, k);
  return sum / static_cast<double>(records.size());
}

// ---------------------------------------------------------------- reporting

enum class MetricFamily { Recall, RecallSubset, MeanAP };

struct MetricSpec {
  MetricFamily family = MetricFamily::Recall;
  std::size_t k = 1;

  std::string label() const {
    switch (family) {
      case MetricFamily::Recall: return "R@" + std::to_string(k);
      case MetricFamily::RecallSubset: return "R_Subset@" + std::to_string(k);
      case MetricFamily::MeanAP: return "mAP@" + std::to_string(k);
    }
    return "";
  }
  bool operator==(const MetricSpec&) const = default;
};

/// Parses "R@10", "recall@10", "R_Subset@2", "recall_subset@2", "mAP@25".
inline MetricSpec parse_metric(std::string_view text) {
  auto at = text.find('@');
  if (at == std::string_view::npos) throw Error(ErrorKind::InvalidArgument, "metric '" + std::string(text) + "' lacks @k");
  std::string name(text.substr(0, at));
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  MetricSpec spec;
  if (name == "r" || name == "recall") spec.family = MetricFamily::Recall;
  else if (name == "r_subset" || name == "recall_subset") spec.family = MetricFamily::RecallSubset;
  else if (name == "map") spec.family = MetricFamily::MeanAP;
  else throw Error(ErrorKind::InvalidArgument, "unknown metric '" + std::string(text) + "'");
  auto ktext = std::string(text.substr(at + 1));
  if (ktext.empty() || !std::all_of(ktext.begin(), ktext.end(), [](unsigned char c) { return std::isdigit(c); }))
    throw Error(ErrorKind::InvalidArgument, "bad k in metric '" + std::string(text) + "'");
  spec.k = std::stoul(ktext);
  if (spec.k == 0) throw Error(ErrorKind::InvalidArgument, "k must be >= 1 in '" + std::string(text) + "'");
  return spec;
}

/// Benchmark reporting grid: CIRR R@{1,5,10,50} + R_Subset@{1,2,3};
/// CIRCO mAP@{5,10,25,50}; FashionIQ R@{10,50}; generic R@{1,5,10,50}.
inline std::vector<MetricSpec> default_metrics(DatasetKind kind) {
  using F = MetricFamily;
  switch (kind) {
    case DatasetKind::Cirr:
      return {{F::Recall, 1}, {F::Recall, 5}, {F::Recall, 10}, {F::Recall, 50},
              {F::RecallSubset, 1}, {F::RecallSubset, 2}, {F::RecallSubset, 3}};
    case DatasetKind::Circo: return {{F::MeanAP, 5}, {F::MeanAP, 10}, {F::MeanAP, 25}, {F::MeanAP, 50}};
    case DatasetKind::FashionIQ: return {{F::Recall, 10}, {F::Recall, 50}};
    case DatasetKind::Generic: return {{F::Recall, 1}, {F::Recall, 5}, {F::Recall, 10}, {F::Recall, 50}};
  }
  return {};
}

/// Queries, their fused features, and the gallery they are ranked against.
/// FashionIQ evaluates one part per category; other benchmarks use a single part.
struct EvalPart {
  std::string label;  // category name, empty for single-gallery benchmarks
  std::span<const QueryRecord> records;
  std::span<const std::vector<double>> query_features;
  const FeatureMatrix* gallery = nullptr;
};

struct QueryDiagnostics {
  std::string query_id;
  std::string part;
  std::vector<std::size_t> target_ranks;     // global 1-based rank of each gt target
  std::optional<std::size_t> subset_rank;    // best target rank within the subset
};

struct EvalReport {
  std::string dataset;
  std::string config_digest;
  std::vector<std::pair<std::string, double>> metrics;  // in reporting order
  std::size_t n_queries = 0;
  std::vector<QueryDiagnostics> per_query;

  std::optional<double> get(const std::string& key) const {
    for (const auto& [k, v] : metrics)
      if (k == key) return v;
    return std::nullopt;
  }

  nlohmann::json to_json() const {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [k, v] : metrics) m[k] = v;
    nlohmann::json pq = nlohmann::json::array();
    for (const auto& d : per_query) {
      nlohmann::json e{{"query_id", d.query_id}, {"target_ranks", d.target_ranks}};
      if (!d.part.empty()) e["part"] = d.part;
      if (d.subset_rank) e["subset_rank"] = *d.subset_rank;
      pq.push_back(std::move(e));
    }
    return {{"dataset", dataset}, {"config_digest", config_digest}, {"metrics", m},
            {"n_queries", n_queries}, {"per_query", pq}};
  }

  /// Aligned two-row table, values in percent.
  std::string to_table() const {
    std::ostringstream header, values;
    for (const auto& [k, v] : metrics) {
      std::size_t w = std::max<std::size_t>(k.size(), 6) + 2;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
      header << std::string(w - k.size(), ' ') << k;
      values << std::string(w - std::string(buf).size(), ' ') << buf;
    }
    return dataset + " (n=" + std::to_string(n_queries) + ")\n" + header.str() + "\n" + values.str() + "\n";
  }
};

inline EvalReport evaluate(DatasetKind kind, std::span<const EvalPart> parts, const std::string& config_digest,
                           std::optional<std::vector<MetricSpec>> requested = std::nullopt) {
  auto metrics = requested ? *requested : default_metrics(kind);
  if (metrics.empty()) throw Error(ErrorKind::InvalidArgument, "no metrics requested");
  if (parts.empty()) throw Error(ErrorKind::InvalidArgument, "nothing to evaluate");

  EvalReport report;
  report.dataset = std::string(to_string(kind));
  report.config_digest = config_digest;

  std::size_t max_k = 1;
  for (const auto& m : metrics) max_k = std::max(max_k, m.k);

  std::map<std::string, std::vector<double>> per_label_values;
  std::vector<std::string> order;
  for (const auto& part : parts) {
    if (part.gallery == nullptr) throw Error(ErrorKind::InvalidArgument, "eval part without gallery");
    detail::check_lengths(part.query_features.size(), part.records.size());
    std::vector<Ranking> rankings;
    rankings.reserve(part.records.size());
    for (std::size_t i = 0; i < part.records.size(); ++i) {
      const auto& r = part.records[i];
      std::span<const double> q(part.query_features[i]);
      rankings.push_back(rank_topk(q, *part.gallery, max_k));
      QueryDiagnostics d{r.query_id, part.label, {}, std::nullopt};
      for (const auto& gt : r.gt_target_ids)
        if (part.gallery->find(gt)) d.target_ranks.push_back(rank_of(q, *part.gallery, gt));
      if (r.subset_ids && !r.gt_target_ids.empty()) {
        auto sub = rank_subset(q, *part.gallery, *r.subset_ids);
        for (const auto& res : sub)
          if (std::find(r.gt_target_ids.begin(), r.gt_target_ids.end(), res.image_id) != r.gt_target_ids.end()) {
            d.subset_rank = res.rank;
            break;
          }
      }
      report.per_query.push_back(std::move(d));
    }
    report.n_queries += part.records.size();

    for (const auto& m : metrics) {
      double v = 0.0;
      switch (m.family) {
        case MetricFamily::Recall: v = recall_at_k(rankings, part.records, m.k); break;
        case MetricFamily::RecallSubset:
          v = recall_subset_at_k(part.query_features, *part.gallery, part.records, m.k);
          break;
        case MetricFamily::MeanAP: v = map_at_k(rankings, part.records, m.k); break;
      }
      std::string key = part.label.empty() ? m.label() : part.label + "/" + m.label();
      report.metrics.emplace_back(key, v);
      per_label_values[m.label()].push_back(v);
    }
  }
  if (parts.size() > 1) {
    for (const auto& m : metrics) {
      const auto& vals = per_label_values[m.label()];
      double sum = 0.0;
      for (double v : vals) sum += v;
      report.metrics.emplace_back("average/" + m.label(), sum / static_cast<double>(vals.size()));
    }
  }
  return report;
}

}  // namespace paracosm
