#pragma once

#include <algorithm>
#include <cmath>
#include <exception>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "paracosm/embedding.hpp"
#include "paracosm/errors.hpp"
#include "paracosm/fusion.hpp"

namespace paracosm {

struct RankedResult {
  std::string image_id;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based

  bool operator==(const RankedResult&) const = default;
};

inline double cosine_similarity(std::span<const double> q, std::span<const double> phi) {
  if (q.size() != phi.size())
    throw Error(ErrorKind::DimensionMismatch,
                "cosine over dims " + std::to_string(q.size()) + " and " + std::to_string(phi.size()));
  double nq = l2_norm(q), np = l2_norm(phi);
  if (nq == 0.0 || np == 0.0) throw Error(ErrorKind::ZeroVector, "cosine similarity of a zero vector");
  return dot(q, phi) / (nq * np);
}

inline double cosine_similarity(const EmbeddingVector& q, const EmbeddingVector& phi) {
  return cosine_similarity(std::span<const double>(q.values), std::span<const double>(phi.values));
}

/// Descending score, then ascending image id.
inline bool ranks_before(const RankedResult& a, const RankedResult& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.image_id < b.image_id;
}

namespace detail {

inline std::vector<RankedResult> take_top(std::vector<RankedResult> scored, std::size_t k) {
  k = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), ranks_before);
  scored.resize(k);
  for (std::size_t i = 0; i < scored.size(); ++i) scored[i].rank = i + 1;
  return scored;
}

}  // namespace detail

/// Dense row-major float32 matrix of gallery features with an id index.
/// Row norms are cached in double precision for cosine scoring.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t dim, std::vector<std::string> ids, std::vector<float> data)
      : dim_(dim), ids_(std::move(ids)), data_(std::move(data)) {
    if (data_.size() != ids_.size() * dim_)
      throw Error(ErrorKind::DimensionMismatch, "matrix payload does not match n*dim");
    index_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (!index_.emplace(ids_[i], i).second) throw Error(ErrorKind::DuplicateImageId, ids_[i]);
    }
    norms_.resize(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      double s = 0.0;
      for (float x : row(i)) s += static_cast<double>(x) * x;
      norms_[i] = std::sqrt(s);
    }
  }

  /// Builds from fused features, rounding to float32.
  static FeatureMatrix from_features(std::span<const GalleryFeature> features) {
    if (features.empty()) return {};
    std::size_t dim = features.front().phi.dim();
    std::vector<std::string> ids;
    std::vector<float> data;
    data.reserve(features.size() * dim);
    for (const auto& f : features) {
      if (f.phi.dim() != dim) throw Error(ErrorKind::DimensionMismatch, "feature '" + f.image_id + "' has wrong dim");
      ids.push_back(f.image_id);
      for (double x : f.phi.values) data.push_back(static_cast<float>(x));
    }
    return FeatureMatrix(dim, std::move(ids), std::move(data));
  }

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  bool empty() const { return ids_.empty(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<float>& data() const { return data_; }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  std::vector<double> row_as_double(std::size_t i) const {
    auto r = row(i);
    return {r.begin(), r.end()};
  }

  std::optional<std::size_t> find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Cosine between q and row i; `q_norm` is ||q||.
  double score(std::span<const double> q, double q_norm, std::size_t i) const {
    if (norms_[i] == 0.0) throw Error(ErrorKind::ZeroVector, "gallery row '" + ids_[i] + "' is the zero vector");
    auto r = row(i);
    double s = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) s += q[d] * static_cast<double>(r[d]);
    return s / (q_norm * norms_[i]);
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::vector<double> norms_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline double checked_query_norm(std::span<const double> q, std::size_t dim) {
  if (q.size() != dim)
    throw Error(ErrorKind::DimensionMismatch,
                "query dim " + std::to_string(q.size()) + " vs gallery dim " + std::to_string(dim));
  double n = l2_norm(q);
  if (n == 0.0) throw Error(ErrorKind::ZeroVector, "query feature is the zero vector");
  return n;
}

}  // namespace detail

/// Exact top-k over a list of fused gallery features.
inline std::vector<RankedResult> rank_topk(const QueryFeature& q, std::span<const GalleryFeature> gallery, std::size_t k) {
  if (gallery.empty()) throw Error(ErrorKind::EmptyGallery, "cannot rank against an empty gallery");
  if (k == 0) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
  std::vector<RankedResult> scored;
  scored.reserve(gallery.size());
  for (const auto& g : gallery) scored.push_back({g.image_id, cosine_similarity(q.q, g.phi), 0});
  return detail::take_top(std::move(scored), k);
}

/// Exact top-k over a feature matrix. With `workers > 1` the rows are split
/// into contiguous partitions, each partition keeps its own top-k, and the
/// partial lists are merged under the same ordering.
inline std::vector<RankedResult> rank_topk(std::span<const double> q, const FeatureMatrix& gallery, std::size_t k,
                                           std::size_t workers = 1) {
  if (gallery.empty()) throw Error(ErrorKind::EmptyGallery, "cannot rank against an empty gallery");
  if (k == 0) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
  double qn = detail::checked_query_norm(q, gallery.dim());
  std::size_t n = gallery.size();
  workers = std::clamp<std::size_t>(workers, 1, n);

  auto score_range = [&](std::size_t begin, std::size_t end) {
    std::vector<RankedResult> part;
    part.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) part.push_back({gallery.ids()[i], gallery.score(q, qn, i), 0});
    return detail::take_top(std::move(part), k);
  };

  if (workers == 1) return score_range(0, n);

  std::vector<std::vector<RankedResult>> parts(workers);
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> threads;
    std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      std::size_t b = std::min(n, w * chunk), e = std::min(n, b + chunk);
      threads.emplace_back([&, w, b, e] {
        try {
          parts[w] = score_range(b, e);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<RankedResult> merged;
  for (auto& p : parts) merged.insert(merged.end(), p.begin(), p.end());
  return detail::take_top(std::move(merged), k);
}

inline std::vector<RankedResult> rank_topk(const QueryFeature& q, const FeatureMatrix& gallery, std::size_t k,
                                           std::size_t workers = 1) {
  return rank_topk(std::span<const double>(q.q.values), gallery, k, workers);
}

/// Ranks only the listed members of the gallery (e.g. a curated subset).
/// Every id is returned; scoring matches rank_topk exactly.
inline std::vector<RankedResult> rank_subset(std::span<const double> q, const FeatureMatrix& gallery,
                                             std::span<const std::string> subset_ids) {
  double qn = detail::checked_query_norm(q, gallery.dim());
  std::vector<RankedResult> scored;
  scored.reserve(subset_ids.size());
  for (const auto& id : subset_ids) {
    auto row = gallery.find(id);
    if (!row) throw Error(ErrorKind::UnknownImageId, "subset member '" + id + "' not in gallery");
    scored.push_back({id, gallery.score(q, qn, *row), 0});
  }
  std::size_t n = scored.size();
  return detail::take_top(std::move(scored), n);
}

inline std::vector<RankedResult> rank_subset(const QueryFeature& q, const FeatureMatrix& gallery,
                                             std::span<const std::string> subset_ids) {
  return rank_subset(std::span<const double>(q.q.values), gallery, subset_ids);
}

/// 1-based position `id` would take in the full ranking of `gallery`.
inline std::size_t rank_of(std::span<const double> q, const FeatureMatrix& gallery, const std::string& id) {
  double qn = detail::checked_query_norm(q, gallery.dim());
  auto row = gallery.find(id);
  if (!row) throw Error(ErrorKind::UnknownImageId, "'" + id + "' not in gallery");
  RankedResult target{id, gallery.score(q, qn, *row), 0};
  std::size_t ahead = 0;
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    if (i == *row) continue;
    if (ranks_before({gallery.ids()[i], gallery.score(q, qn, i), 0}, target)) ++ahead;
  }
  return ahead + 1;
}

}  // namespace paracosm
