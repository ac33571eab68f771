#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "paracosm/errors.hpp"

namespace paracosm {

enum class QueryTerm : std::uint8_t { MentalImage, QueryDescription, ModificationText };
enum class GalleryTerm : std::uint8_t { RealImage, SyntheticCounterpart, DetailedText, BriefText };

inline constexpr std::array kAllQueryTerms{QueryTerm::MentalImage, QueryTerm::QueryDescription,
                                           QueryTerm::ModificationText};
inline constexpr std::array kAllGalleryTerms{GalleryTerm::RealImage, GalleryTerm::SyntheticCounterpart,
                                             GalleryTerm::DetailedText, GalleryTerm::BriefText};

inline std::string_view term_name(QueryTerm t) {
  switch (t) {
    case QueryTerm::MentalImage: return "mental_image";
    case QueryTerm::QueryDescription: return "query_description";
    case QueryTerm::ModificationText: return "modification_text";
  }
  return "";
}

inline std::string_view term_name(GalleryTerm t) {
  switch (t) {
    case GalleryTerm::RealImage: return "real_image";
    case GalleryTerm::SyntheticCounterpart: return "synthetic_counterpart";
    case GalleryTerm::DetailedText: return "detailed_text";
    case GalleryTerm::BriefText: return "brief_text";
  }
  return "";
}

template <typename Term>
std::optional<Term> parse_term(std::string_view name);

template <>
inline std::optional<QueryTerm> parse_term<QueryTerm>(std::string_view name) {
  for (auto t : kAllQueryTerms)
    if (term_name(t) == name) return t;
  return std::nullopt;
}

template <>
inline std::optional<GalleryTerm> parse_term<GalleryTerm>(std::string_view name) {
  for (auto t : kAllGalleryTerms)
    if (term_name(t) == name) return t;
  return std::nullopt;
}

/// Small bitset over one of the term enums.
template <typename Term>
class TermSet {
 public:
  constexpr TermSet() = default;
  constexpr TermSet(std::initializer_list<Term> terms) {
    for (auto t : terms) insert(t);
  }

  constexpr void insert(Term t) { bits_ |= bit(t); }
  constexpr void erase(Term t) { bits_ &= static_cast<std::uint8_t>(~bit(t)); }
  constexpr bool contains(Term t) const { return (bits_ & bit(t)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }

  constexpr TermSet operator|(TermSet other) const {
    TermSet r;
    r.bits_ = bits_ | other.bits_;
    return r;
  }
  constexpr bool operator==(const TermSet&) const = default;

  std::vector<Term> members() const {
    std::vector<Term> out;
    for (std::uint8_t i = 0; i < 8; ++i)
      if (bits_ & (1u << i)) out.push_back(static_cast<Term>(i));
    return out;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (auto t : members()) out.emplace_back(term_name(t));
    return out;
  }

  template <typename Range>
  static TermSet parse(const Range& names) {
    TermSet set;
    for (const auto& n : names) {
      auto t = parse_term<Term>(std::string_view(n));
      if (!t) throw Error(ErrorKind::ConfigError, "unknown term '" + std::string(n) + "'");
      set.insert(*t);
    }
    return set;
  }

 private:
  static constexpr std::uint8_t bit(Term t) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(t)); }
  std::uint8_t bits_ = 0;
};

using QueryTermSet = TermSet<QueryTerm>;
using GalleryTermSet = TermSet<GalleryTerm>;

}  // namespace paracosm
