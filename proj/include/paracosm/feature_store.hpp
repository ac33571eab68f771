#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "paracosm/ablation.hpp"
#include "paracosm/digest.hpp"
#include "paracosm/errors.hpp"
#include "paracosm/fusion.hpp"
#include "paracosm/image.hpp"
#include "paracosm/ranking.hpp"

namespace paracosm {

static_assert(std::endian::native == std::endian::little, "matrix I/O assumes a little-endian host");

inline constexpr std::uint32_t kStoreVersion = 1;
inline constexpr char kMatrixMagic[4] = {'P', 'C', 'S', 'M'};
inline constexpr std::size_t kMatrixHeaderBytes = 16;

inline constexpr const char* kStoreMatrixFile = "store.pcsm";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kTermsDir = "terms";

struct StoreRow {
  std::string image_id;
  std::size_t row_index = 0;
  GalleryTermSet terms_used;
  std::map<std::string, std::string> source_digests;  // term name -> digest of the term's source artifact
};

struct StoreManifest {
  std::uint32_t store_version = kStoreVersion;
  std::string encoder_id;
  std::size_t dim = 0;
  std::size_t n = 0;
  std::vector<StoreRow> rows;
  std::string config_digest;
  AblationConfig config;
  std::string dataset_kind = "generic";
  std::map<std::string, std::string> template_digests;
  std::string templates_digest;
  std::vector<std::string> stored_terms;  // per-term matrices present under terms/

  nlohmann::json to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows)
      rows_json.push_back({{"image_id", r.image_id},
                           {"row_index", r.row_index},
                           {"terms_used", r.terms_used.names()},
                           {"source_digests", r.source_digests}});
    return {{"store_version", store_version}, {"encoder_id", encoder_id},
            {"dim", dim},                     {"n", n},
            {"rows", rows_json},              {"config_digest", config_digest},
            {"config", config.to_json()},     {"dataset_kind", dataset_kind},
            {"template_digests", template_digests}, {"templates_digest", templates_digest},
            {"stored_terms", stored_terms}};
  }

  static StoreManifest from_json(const nlohmann::json& j) {
    StoreManifest m;
    try {
      m.store_version = j.at("store_version").get<std::uint32_t>();
      if (m.store_version != kStoreVersion)
        throw Error(ErrorKind::VersionUnsupported, "manifest version " + std::to_string(m.store_version));
      m.encoder_id = j.at("encoder_id").get<std::string>();
      m.dim = j.at("dim").get<std::size_t>();
      m.n = j.at("n").get<std::size_t>();
      m.config_digest = j.at("config_digest").get<std::string>();
      m.config = AblationConfig::from_json(j.at("config"));
      m.dataset_kind = j.value("dataset_kind", std::string("generic"));
      m.template_digests = j.value("template_digests", std::map<std::string, std::string>{});
      m.templates_digest = j.value("templates_digest", std::string());
      m.stored_terms = j.value("stored_terms", std::vector<std::string>{});
      for (const auto& r : j.at("rows")) {
        StoreRow row;
        row.image_id = r.at("image_id").get<std::string>();
        row.row_index = r.at("row_index").get<std::size_t>();
        row.terms_used = GalleryTermSet::parse(r.at("terms_used").get<std::vector<std::string>>());
        row.source_digests = r.value("source_digests", std::map<std::string, std::string>{});
        m.rows.push_back(std::move(row));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::CorruptStore, std::string("manifest: ") + e.what());
    }
    return m;
  }
};

/// Digest of every setting that shapes fused features: the ablation config
/// (terms, lambda, beta), the prompt templates, and the encoder.
inline std::string config_digest(const AblationConfig& config, const std::string& templates_digest,
                                 const std::string& encoder_id) {
  nlohmann::json j{{"config", config.to_json()}, {"templates", templates_digest}, {"encoder", encoder_id}};
  return sha256_hex(j.dump());
}

// ---------------------------------------------------------------- matrix I/O

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const Bytes& b, std::size_t off) {
  return std::uint32_t{b[off]} | (std::uint32_t{b[off + 1]} << 8) | (std::uint32_t{b[off + 2]} << 16) |
         (std::uint32_t{b[off + 3]} << 24);
}

inline void atomic_write(const std::filesystem::path& path, std::string_view payload) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write '" + tmp.string() + "'");
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw Error(ErrorKind::IoFailure, "short write on '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "rename '" + tmp.string() + "': " + ec.message());
}

}  // namespace detail

/// 16-byte header ("PCSM", version, n, dim as little-endian u32) followed by
/// n*dim little-endian float32 values, row-major.
inline std::string encode_matrix(std::size_t n, std::size_t dim, std::span<const float> data) {
  std::string out(kMatrixMagic, kMatrixMagic + 4);
  detail::put_u32(out, kStoreVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(n));
  detail::put_u32(out, static_cast<std::uint32_t>(dim));
  out.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float));
  return out;
}

struct RawMatrix {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<float> data;
};

inline RawMatrix decode_matrix(const Bytes& bytes, const std::string& what) {
  if (bytes.size() < kMatrixHeaderBytes) throw Error(ErrorKind::CorruptStore, what + ": truncated header");
  if (std::memcmp(bytes.data(), kMatrixMagic, 4) != 0) throw Error(ErrorKind::CorruptStore, what + ": bad magic");
  auto version = detail::get_u32(bytes, 4);
  if (version != kStoreVersion)
    throw Error(ErrorKind::VersionUnsupported, what + ": matrix version " + std::to_string(version));
  RawMatrix m;
  m.n = detail::get_u32(bytes, 8);
  m.dim = detail::get_u32(bytes, 12);
  std::size_t expected = kMatrixHeaderBytes + m.n * m.dim * sizeof(float);
  if (bytes.size() != expected)
    throw Error(ErrorKind::CorruptStore, what + ": size " + std::to_string(bytes.size()) + ", expected " +
                                             std::to_string(expected));
  m.data.resize(m.n * m.dim);
  std::memcpy(m.data.data(), bytes.data() + kMatrixHeaderBytes, m.data.size() * sizeof(float));
  return m;
}

// ---------------------------------------------------------------- store

/// Fused gallery features plus the per-term embeddings they were fused from.
struct FeatureStore {
  StoreManifest manifest;
  FeatureMatrix fused;
  std::map<GalleryTerm, FeatureMatrix> terms;

  std::size_t size() const { return fused.size(); }
};

/// Fuses every row from per-term matrices. Used both when building a store
/// and when re-fusing one, so both paths produce identical bytes.
inline FeatureMatrix fuse_term_matrices(const std::map<GalleryTerm, FeatureMatrix>& terms,
                                        const std::vector<std::string>& ids, GalleryTermSet enabled, double beta,
                                        const std::string& encoder_id) {
  for (auto t : enabled.members())
    if (!terms.contains(t))
      throw Error(ErrorKind::MissingTermEmbedding, "no cached embeddings for gallery term '" +
                                                       std::string(term_name(t)) + "'");
  if (ids.empty()) return FeatureMatrix(terms.empty() ? 0 : terms.begin()->second.dim(), {}, {});
  std::vector<GalleryFeature> features;
  features.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    GalleryTerms row;
    for (auto t : enabled.members()) {
      const auto& m = terms.at(t);
      if (m.ids()[i] != ids[i]) throw Error(ErrorKind::CorruptStore, "term matrix row order differs from store");
      row.get(t) = EmbeddingVector{m.row_as_double(i), encoder_id};
    }
    features.push_back(fuse_gallery(row, beta, enabled, ids[i]));
  }
  return FeatureMatrix::from_features(features);
}

struct TermRow {
  std::string image_id;
  GalleryTerms terms;  // unit-normalized embeddings, present for every stored term
  std::map<std::string, std::string> source_digests;
};

struct StoreMeta {
  AblationConfig config;
  std::string encoder_id;
  std::string dataset_kind = "generic";
  std::map<std::string, std::string> template_digests;
  std::string templates_digest;
  GalleryTermSet stored_terms;  // superset of config.gallery_terms to persist for later re-fusion
};

/// Builds an in-memory store from per-image term embeddings.
inline FeatureStore build_store(const std::vector<TermRow>& rows, const StoreMeta& meta) {
  meta.config.validate();
  GalleryTermSet stored = meta.stored_terms | meta.config.gallery_terms;
  std::set<std::string> seen;
  std::size_t dim = 0;
  std::map<GalleryTerm, std::vector<float>> data;
  std::vector<std::string> ids;
  for (const auto& r : rows) {
    if (!seen.insert(r.image_id).second) throw Error(ErrorKind::DuplicateImageId, r.image_id);
    for (auto t : stored.members()) {
      const auto& v = r.terms.get(t);
      if (!v)
        throw Error(ErrorKind::MissingTermEmbedding,
                    "'" + r.image_id + "' lacks term '" + std::string(term_name(t)) + "'");
      if (dim == 0) dim = v->dim();
      if (v->dim() != dim)
        throw Error(ErrorKind::DimensionMismatch, "'" + r.image_id + "' term dim " + std::to_string(v->dim()) +
                                                      " vs " + std::to_string(dim));
      for (double x : v->values) data[t].push_back(static_cast<float>(x));
    }
    ids.push_back(r.image_id);
  }

  FeatureStore store;
  for (auto t : stored.members()) store.terms.emplace(t, FeatureMatrix(dim, ids, std::move(data[t])));
  store.fused = fuse_term_matrices(store.terms, ids, meta.config.gallery_terms, meta.config.beta, meta.encoder_id);

  auto& m = store.manifest;
  m.encoder_id = meta.encoder_id;
  m.dim = dim;
  m.n = ids.size();
  m.config = meta.config;
  m.dataset_kind = meta.dataset_kind;
  m.template_digests = meta.template_digests;
  m.templates_digest = meta.templates_digest;
  m.stored_terms = stored.names();
  m.config_digest = config_digest(meta.config, meta.templates_digest, meta.encoder_id);
  for (std::size_t i = 0; i < rows.size(); ++i)
    m.rows.push_back({rows[i].image_id, i, meta.config.gallery_terms, rows[i].source_digests});
  return store;
}

/// Writes store.pcsm, terms/<term>.pcsm and manifest.json under `dir`.
/// Each file is written to a temp name and renamed; the manifest goes last.
inline void write_store(const std::filesystem::path& dir, const FeatureStore& store) {
  std::error_code ec;
  std::filesystem::create_directories(dir / kTermsDir, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "mkdir '" + dir.string() + "': " + ec.message());
  for (const auto& [term, m] : store.terms)
    detail::atomic_write(dir / kTermsDir / (std::string(term_name(term)) + ".pcsm"),
                         encode_matrix(m.size(), m.dim(), m.data()));
  detail::atomic_write(dir / kStoreMatrixFile,
                       encode_matrix(store.fused.size(), store.manifest.dim, store.fused.data()));
  detail::atomic_write(dir / kManifestFile, store.manifest.to_json().dump(2) + "\n");
}

inline FeatureStore read_store(const std::filesystem::path& dir) {
  auto manifest_path = dir / kManifestFile;
  if (!std::filesystem::exists(manifest_path))
    throw Error(ErrorKind::IoFailure, "no manifest at '" + manifest_path.string() + "'");
  FeatureStore store;
  try {
    auto bytes = read_file_bytes(manifest_path.string());
    store.manifest = StoreManifest::from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptStore, std::string("manifest parse: ") + e.what());
  }
  const auto& m = store.manifest;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    if (m.rows[i].row_index != i) throw Error(ErrorKind::CorruptStore, "manifest row_index not dense");
    ids.push_back(m.rows[i].image_id);
  }
  if (ids.size() != m.n) throw Error(ErrorKind::CorruptStore, "manifest n disagrees with row list");

  auto load = [&](const std::filesystem::path& p) {
    auto raw = decode_matrix(read_file_bytes(p.string()), p.filename().string());
    if (raw.n != m.n || (raw.n > 0 && raw.dim != m.dim))
      throw Error(ErrorKind::CorruptStore, p.string() + ": shape disagrees with manifest");
    return FeatureMatrix(m.dim, ids, std::move(raw.data));
  };
  store.fused = load(dir / kStoreMatrixFile);
  for (const auto& name : m.stored_terms) {
    auto term = parse_term<GalleryTerm>(name);
    if (!term) throw Error(ErrorKind::CorruptStore, "unknown stored term '" + name + "'");
    store.terms.emplace(*term, load(dir / kTermsDir / (name + ".pcsm")));
  }
  return store;
}

/// Recomputes fused features for a new gallery term set / beta from the
/// stored per-term embeddings. Issues no backend calls.
inline FeatureStore refuse_gallery(const FeatureStore& store, GalleryTermSet enabled, double beta) {
  FeatureStore out;
  out.terms = store.terms;
  out.manifest = store.manifest;
  out.manifest.config.gallery_terms = enabled;
  out.manifest.config.beta = beta;
  out.manifest.config.validate();
  out.fused = fuse_term_matrices(store.terms, store.fused.ids(), enabled, beta, store.manifest.encoder_id);
  for (auto& r : out.manifest.rows) r.terms_used = enabled;
  out.manifest.config_digest = config_digest(out.manifest.config, out.manifest.templates_digest,
                                               out.manifest.encoder_id);
  return out;
}

}  // namespace paracosm
