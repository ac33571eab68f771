#pragma once

#include <cmath>
#include <string>

#include "json.hpp"

#include "paracosm/errors.hpp"
#include "paracosm/terms.hpp"

namespace paracosm {

inline constexpr double kDefaultLambda = 0.3;
inline constexpr double kDefaultBeta = 0.5;

/// Which query-side and gallery-side terms enter fusion, plus their weights.
struct AblationConfig {
  QueryTermSet query_terms{QueryTerm::MentalImage, QueryTerm::QueryDescription, QueryTerm::ModificationText};
  GalleryTermSet gallery_terms{GalleryTerm::RealImage, GalleryTerm::SyntheticCounterpart};
  double lambda = kDefaultLambda;
  double beta = kDefaultBeta;

  void validate() const {
    if (query_terms.empty()) throw Error(ErrorKind::EmptyTermSet, "no query terms enabled");
    if (gallery_terms.empty()) throw Error(ErrorKind::EmptyTermSet, "no gallery terms enabled");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorKind::InvalidArgument, "lambda must lie in [0,1]");
    if (!(beta >= 0.0 && beta <= 1.0)) throw Error(ErrorKind::InvalidArgument, "beta must lie in [0,1]");
  }

  bool operator==(const AblationConfig&) const = default;

  nlohmann::json to_json() const {
    return {{"query_terms", query_terms.names()},
            {"gallery_terms", gallery_terms.names()},
            {"lambda", lambda},
            {"beta", beta}};
  }

  static AblationConfig from_json(const nlohmann::json& j) {
    AblationConfig c;
    try {
      if (j.contains("query_terms")) c.query_terms = QueryTermSet::parse(j.at("query_terms").get<std::vector<std::string>>());
      if (j.contains("gallery_terms"))
        c.gallery_terms = GalleryTermSet::parse(j.at("gallery_terms").get<std::vector<std::string>>());
      if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
      if (j.contains("beta")) c.beta = j.at("beta").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ConfigError, std::string("ablation config: ") + e.what());
    }
    c.validate();
    return c;
  }
};

}  // namespace paracosm
