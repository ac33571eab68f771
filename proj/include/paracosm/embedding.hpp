#pragma once

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "paracosm/errors.hpp"

namespace paracosm {

/// Output of a visual or textual encoder. `encoder_id` names the producer,
/// e.g. "clip-vit-b32-image"; the part before a trailing "-image"/"-text" is
/// the encoder family, and only vectors of one family may be combined.
struct EmbeddingVector {
  std::vector<double> values;
  std::string encoder_id;

  std::size_t dim() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

inline std::string encoder_family(std::string_view encoder_id) {
  for (std::string_view suffix : {std::string_view("-image"), std::string_view("-text")}) {
    if (encoder_id.size() > suffix.size() && encoder_id.ends_with(suffix))
      return std::string(encoder_id.substr(0, encoder_id.size() - suffix.size()));
  }
  return std::string(encoder_id);
}

inline void require_finite(std::span<const double> v, std::string_view what) {
  for (double x : v)
    if (!std::isfinite(x)) throw Error(ErrorKind::NonFiniteInput, std::string(what) + " contains NaN/Inf");
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

struct Normalized {
  EmbeddingVector vector;
  bool degenerate = false;  // input was the zero vector
};

inline Normalized l2_normalize(const EmbeddingVector& v) {
  require_finite(v.values, "embedding");
  Normalized out{v, false};
  double n = l2_norm(v.values);
  if (n == 0.0) {
    out.degenerate = true;
    return out;
  }
  for (double& x : out.vector.values) x /= n;
  return out;
}

}  // namespace paracosm
