#pragma once

#include <optional>
#include <string>
#include <vector>

#include "paracosm/embedding.hpp"
#include "paracosm/errors.hpp"
#include "paracosm/terms.hpp"

namespace paracosm {

/// Per-term query embeddings. Each present term is expected to be unit norm
/// (see l2_normalize); fusion does not re-normalize.
struct QueryTerms {
  std::optional<EmbeddingVector> mental;        // V(mental image)
  std::optional<EmbeddingVector> description;   // T(description of the mental image)
  std::optional<EmbeddingVector> modification;  // T(modification text)

  const std::optional<EmbeddingVector>& get(QueryTerm t) const {
    switch (t) {
      case QueryTerm::MentalImage: return mental;
      case QueryTerm::QueryDescription: return description;
      case QueryTerm::ModificationText: return modification;
    }
    return mental;
  }
  std::optional<EmbeddingVector>& get(QueryTerm t) {
    return const_cast<std::optional<EmbeddingVector>&>(static_cast<const QueryTerms&>(*this).get(t));
  }
};

struct GalleryTerms {
  std::optional<EmbeddingVector> real;
  std::optional<EmbeddingVector> synthetic;
  std::optional<EmbeddingVector> detailed;
  std::optional<EmbeddingVector> brief;

  const std::optional<EmbeddingVector>& get(GalleryTerm t) const {
    switch (t) {
      case GalleryTerm::RealImage: return real;
      case GalleryTerm::SyntheticCounterpart: return synthetic;
      case GalleryTerm::DetailedText: return detailed;
      case GalleryTerm::BriefText: return brief;
    }
    return real;
  }
  std::optional<EmbeddingVector>& get(GalleryTerm t) {
    return const_cast<std::optional<EmbeddingVector>&>(static_cast<const GalleryTerms&>(*this).get(t));
  }
};

struct QueryFeature {
  EmbeddingVector q;
  double lambda = 0.0;
  QueryTermSet terms_used;
};

struct GalleryFeature {
  EmbeddingVector phi;
  std::string image_id;
  double beta = 0.0;
  GalleryTermSet terms_used;
};

namespace detail {

/// Validates a set of present inputs: shared dim, shared encoder family,
/// finite values. Returns the common dim and family.
inline std::pair<std::size_t, std::string> check_compatible(const std::vector<const EmbeddingVector*>& inputs) {
  std::size_t dim = inputs.front()->dim();
  std::string family = encoder_family(inputs.front()->encoder_id);
  if (dim == 0) throw Error(ErrorKind::DimensionMismatch, "zero-dimensional embedding");
  for (const auto* v : inputs) {
    if (v->dim() != dim)
      throw Error(ErrorKind::DimensionMismatch,
                  "fusion inputs have dims " + std::to_string(dim) + " and " + std::to_string(v->dim()));
    if (encoder_family(v->encoder_id) != family)
      throw Error(ErrorKind::EncoderMismatch, "cannot fuse '" + v->encoder_id + "' with encoder family '" + family + "'");
    require_finite(v->values, "fusion input");
  }
  return {dim, family};
}

inline void axpy(double a, const std::vector<double>& x, std::vector<double>& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

}  // namespace detail

/// Query-side fusion.
///
/// All three terms enabled: q = lambda * (mental + description) + (1 - lambda) * modification.
/// Without the modification term the enabled image-side terms are summed and
/// lambda is not applied; with only the modification term q = modification.
inline QueryFeature fuse_query(const QueryTerms& terms, double lambda, QueryTermSet enabled) {
  if (enabled.empty()) throw Error(ErrorKind::EmptyTermSet, "query fusion with no enabled terms");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorKind::InvalidArgument, "lambda must lie in [0,1]");

  std::vector<const EmbeddingVector*> present;
  for (auto t : enabled.members()) {
    const auto& v = terms.get(t);
    if (!v) throw Error(ErrorKind::PreconditionFailed, "query term '" + std::string(term_name(t)) + "' enabled but missing");
    present.push_back(&*v);
  }
  auto [dim, family] = detail::check_compatible(present);

  std::vector<double> generated(dim, 0.0);
  bool any_generated = false;
  for (auto t : {QueryTerm::MentalImage, QueryTerm::QueryDescription}) {
    if (!enabled.contains(t)) continue;
    detail::axpy(1.0, terms.get(t)->values, generated);
    any_generated = true;
  }

  QueryFeature out;
  out.q.encoder_id = family;
  out.terms_used = enabled;
  out.lambda = lambda;
  if (!enabled.contains(QueryTerm::ModificationText)) {
    out.q.values = std::move(generated);
  } else if (!any_generated) {
    out.q.values = terms.modification->values;
  } else {
    out.q.values.assign(dim, 0.0);
    detail::axpy(lambda, generated, out.q.values);
    detail::axpy(1.0 - lambda, terms.modification->values, out.q.values);
  }
  if (l2_norm(out.q.values) == 0.0) throw Error(ErrorKind::ZeroVector, "fused query feature is the zero vector");
  return out;
}

/// Gallery-side fusion: phi = beta * real + (1 - beta) * synthetic when both
/// image terms are enabled, the single image term otherwise; enabled text
/// terms are added with unit weight.
inline GalleryFeature fuse_gallery(const GalleryTerms& terms, double beta, GalleryTermSet enabled,
                                   std::string image_id = {}) {
  if (enabled.empty()) throw Error(ErrorKind::EmptyTermSet, "gallery fusion with no enabled terms");
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error(ErrorKind::InvalidArgument, "beta must lie in [0,1]");

  std::vector<const EmbeddingVector*> present;
  for (auto t : enabled.members()) {
    const auto& v = terms.get(t);
    if (!v)
      throw Error(ErrorKind::MissingTermEmbedding,
                  "gallery term '" + std::string(term_name(t)) + "' enabled but missing for '" + image_id + "'");
    present.push_back(&*v);
  }
  auto [dim, family] = detail::check_compatible(present);

  GalleryFeature out;
  out.phi.encoder_id = family;
  out.phi.values.assign(dim, 0.0);
  out.image_id = std::move(image_id);
  out.beta = beta;
  out.terms_used = enabled;

  bool real = enabled.contains(GalleryTerm::RealImage);
  bool syn = enabled.contains(GalleryTerm::SyntheticCounterpart);
  if (real && syn) {
    detail::axpy(beta, terms.real->values, out.phi.values);
    detail::axpy(1.0 - beta, terms.synthetic->values, out.phi.values);
  } else if (real) {
    detail::axpy(1.0, terms.real->values, out.phi.values);
  } else if (syn) {
    detail::axpy(1.0, terms.synthetic->values, out.phi.values);
  }
  if (enabled.contains(GalleryTerm::DetailedText)) detail::axpy(1.0, terms.detailed->values, out.phi.values);
  if (enabled.contains(GalleryTerm::BriefText)) detail::axpy(1.0, terms.brief->values, out.phi.values);

  if (l2_norm(out.phi.values) == 0.0)
    throw Error(ErrorKind::ZeroVector, "fused gallery feature for '" + out.image_id + "' is the zero vector");
  return out;
}

}  // namespace paracosm
