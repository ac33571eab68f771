#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "paracosm/ablation.hpp"
#include "paracosm/backends.hpp"
#include "paracosm/datasets.hpp"
#include "paracosm/feature_store.hpp"
#include "paracosm/fusion.hpp"
#include "paracosm/prompts.hpp"
#include "paracosm/ranking.hpp"

namespace paracosm {

/// One client per capability. Missing clients are allowed as long as no
/// enabled term needs them.
struct Backends {
  std::map<Capability, std::shared_ptr<BackendClient>> clients;

  bool has(Capability c) const { return clients.contains(c); }

  BackendClient& get(Capability c) const {
    auto it = clients.find(c);
    if (it == clients.end())
      throw Error(ErrorKind::PreconditionFailed, "no backend configured for " + std::string(capability_name(c)));
    return *it->second;
  }

  nlohmann::json describe() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [c, client] : clients) j[std::string(capability_name(c))] = client->descriptor().to_json();
    return j;
  }

  nlohmann::json stats() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [c, client] : clients) j[std::string(capability_name(c))] = client->stats().to_json();
    return j;
  }

  std::uint64_t total_requests() const {
    std::uint64_t n = 0;
    for (const auto& [c, client] : clients) n += client->stats().requests.load();
    return n;
  }

  /// Encoder family shared by the image and text embedders.
  std::string encoder_family_id() const {
    for (auto c : {Capability::EmbedImage, Capability::EmbedText})
      if (has(c)) return encoder_family(get(c).descriptor().encoder_id());
    throw Error(ErrorKind::PreconditionFailed, "no embedding backend configured");
  }
};

// ---------------------------------------------------------------- timing

class StageClock {
 public:
  void add(const std::string& stage, double ms) {
    std::lock_guard lock(mutex_);
    auto& s = stages_[stage];
    s.count++;
    s.total_ms += ms;
  }

  template <typename F>
  auto time(const std::string& stage, F&& f) {
    auto start = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      add(stage, elapsed_ms(start));
    } else {
      auto r = f();
      add(stage, elapsed_ms(start));
      return r;
    }
  }

  nlohmann::json to_json() const {
    std::lock_guard lock(mutex_);
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, s] : stages_) j[name] = {{"count", s.count}, {"total_ms", s.total_ms}};
    return j;
  }

  static double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }

 private:
  struct Stage {
    std::uint64_t count = 0;
    double total_ms = 0.0;
  };
  mutable std::mutex mutex_;
  std::map<std::string, Stage> stages_;
};

// ---------------------------------------------------------------- gallery

inline constexpr double kDefaultFailureThreshold = 0.01;
inline constexpr std::size_t kDefaultWorkers = 8;

struct PipelineOptions {
  AblationConfig config;
  DatasetKind dataset_kind = DatasetKind::Generic;
  std::size_t workers = kDefaultWorkers;
  double failure_threshold = kDefaultFailureThreshold;
  GalleryTermSet stored_terms;  // extra gallery terms to embed and persist for later re-fusion
};

struct FailureRecord {
  std::string item_id;
  std::string stage;
  std::string kind;
  std::string message;

  nlohmann::json to_json() const {
    return {{"item_id", item_id}, {"stage", stage}, {"kind", kind}, {"message", message}};
  }
};

/// Wall time, per-stage counts, backend traffic. Mirrors a cost table:
/// one-time preprocessing cost versus per-query cost.
struct CostReport {
  double wall_ms = 0.0;
  std::size_t items = 0;
  std::size_t succeeded = 0;
  nlohmann::json stages;
  nlohmann::json backends;
  std::uint64_t backend_requests = 0;

  nlohmann::json to_json() const {
    return {{"wall_ms", wall_ms},   {"items", items},       {"succeeded", succeeded},
            {"stages", stages},     {"backends", backends}, {"backend_requests", backend_requests}};
  }

  std::string to_text() const {
    std::ostringstream out;
    out << "items: " << succeeded << "/" << items << " succeeded\n";
    out << "wall time: " << static_cast<long long>(wall_ms) << " ms\n";
    for (const auto& [name, s] : stages.items())
      out << "  " << name << ": " << s["count"].get<std::uint64_t>() << " calls, "
          << static_cast<long long>(s["total_ms"].get<double>()) << " ms\n";
    out << backend_requests << " backend calls\n";
    return out.str();
  }
};

struct PreprocessResult {
  FeatureStore store;
  CostReport cost;
  std::vector<FailureRecord> failures;
  bool threshold_exceeded = false;
};

using ImageSource = std::function<ImageArtifact(const std::string& image_id)>;

namespace detail {

inline EmbeddingVector normalized_or_throw(const EmbeddingVector& v, const std::string& what) {
  auto n = l2_normalize(v);
  if (n.degenerate) throw Error(ErrorKind::ZeroVector, what + " embedded to the zero vector");
  return std::move(n.vector);
}

/// Runs `task(i)` for i in [0, n) on up to `workers` threads.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& task) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> threads;
  for (std::size_t w = 0; w < workers; ++w)
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) task(i);
    });
}

}  // namespace detail

/// Embeds each gallery image's enabled terms. Per image: detailed caption ->
/// synthetic counterpart -> embeddings, each step only when an enabled term needs it.
inline TermRow gallery_terms_for(const ImageArtifact& real, const Backends& backends,
                                                const PromptLibrary& prompts, GalleryTermSet terms,
                                                StageClock& clock) {
  TermRow row;
  row.image_id = real.image_id;
  bool need_detailed = terms.contains(GalleryTerm::SyntheticCounterpart) || terms.contains(GalleryTerm::DetailedText);

  if (terms.contains(GalleryTerm::RealImage)) {
    auto v = clock.time("embed_image", [&] { return backends.get(Capability::EmbedImage).embed_image(real); });
    row.terms.real = detail::normalized_or_throw(v, "real image");
    row.source_digests["real_image"] = real.content_digest();
  }
  std::string detailed;
  if (need_detailed) {
    detailed = clock.time("detailed_caption", [&] {
      return backends.get(Capability::Caption).caption(real, prompts.render_detailed_caption());
    });
  }
  if (terms.contains(GalleryTerm::SyntheticCounterpart)) {
    auto syn = clock.time("generate_image",
                          [&] { return backends.get(Capability::TextToImage).generate_image(detailed); });
    syn.parent_ids = {real.image_id};
    auto v = clock.time("embed_image", [&] { return backends.get(Capability::EmbedImage).embed_image(syn); });
    row.terms.synthetic = detail::normalized_or_throw(v, "synthetic counterpart");
    row.source_digests["synthetic_counterpart"] = syn.content_digest();
  }
  if (terms.contains(GalleryTerm::DetailedText)) {
    auto v = clock.time("embed_text", [&] { return backends.get(Capability::EmbedText).embed_text(detailed); });
    row.terms.detailed = detail::normalized_or_throw(v, "detailed description");
    row.source_digests["detailed_text"] = sha256_hex(detailed);
  }
  if (terms.contains(GalleryTerm::BriefText)) {
    auto brief = clock.time("brief_caption", [&] {
      return backends.get(Capability::Caption).caption(real, prompts.render_brief_caption());
    });
    auto v = clock.time("embed_text", [&] { return backends.get(Capability::EmbedText).embed_text(brief); });
    row.terms.brief = detail::normalized_or_throw(v, "brief description");
    row.source_digests["brief_text"] = sha256_hex(brief);
  }
  return row;
}

/// Offline gallery pass. Per-item failures go to a ledger; the run is marked
/// failed only when the failure ratio exceeds the threshold. Reruns are cheap:
/// every backend result is served from the content cache.
inline PreprocessResult preprocess_gallery(const std::vector<std::string>& image_ids, const ImageSource& load,
                                           const Backends& backends, const PromptLibrary& prompts,
                                           const PipelineOptions& options) {
  options.config.validate();
  auto start = std::chrono::steady_clock::now();
  GalleryTermSet terms = options.config.gallery_terms | options.stored_terms;
  std::uint64_t requests_before = backends.total_requests();

  StageClock clock;
  std::vector<std::optional<TermRow>> rows(image_ids.size());
  std::vector<std::optional<FailureRecord>> failures(image_ids.size());
  detail::parallel_for(image_ids.size(), options.workers, [&](std::size_t i) {
    std::string stage = "load";
    try {
      auto image = load(image_ids[i]);
      image.image_id = image_ids[i];
      stage = "terms";
      rows[i] = gallery_terms_for(image, backends, prompts, terms, clock);
    } catch (const Error& e) {
      failures[i] = FailureRecord{image_ids[i], stage, std::string(to_string(e.kind())), e.what()};
    } catch (const std::exception& e) {
      failures[i] = FailureRecord{image_ids[i], stage, "Exception", e.what()};
    }
  });

  PreprocessResult result;
  std::vector<TermRow> ok;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i]) ok.push_back(std::move(*rows[i]));
    if (failures[i]) result.failures.push_back(std::move(*failures[i]));
  }
  double ratio = image_ids.empty() ? 0.0 : static_cast<double>(result.failures.size()) / image_ids.size();
  result.threshold_exceeded = ratio > options.failure_threshold;

  StoreMeta meta;
  meta.config = options.config;
  meta.encoder_id = backends.encoder_family_id();
  meta.dataset_kind = std::string(to_string(options.dataset_kind));
  meta.template_digests = prompts.digests();
  meta.templates_digest = prompts.combined_digest();
  meta.stored_terms = terms;
  result.store = build_store(ok, meta);

  result.cost.items = image_ids.size();
  result.cost.succeeded = ok.size();
  result.cost.stages = clock.to_json();
  result.cost.backends = backends.stats();
  result.cost.backend_requests = backends.total_requests() - requests_before;
  result.cost.wall_ms = StageClock::elapsed_ms(start);
  return result;
}

inline PreprocessResult preprocess_gallery(const std::vector<ImageArtifact>& images, const Backends& backends,
                                           const PromptLibrary& prompts, const PipelineOptions& options) {
  std::map<std::string, const ImageArtifact*> by_id;
  std::vector<std::string> ids;
  for (const auto& img : images) {
    by_id[img.image_id] = &img;
    ids.push_back(img.image_id);
  }
  return preprocess_gallery(ids, [&](const std::string& id) { return *by_id.at(id); }, backends, prompts, options);
}

// ---------------------------------------------------------------- queries

struct QueryBundle {
  QueryRecord record;
  std::optional<ImageArtifact> mental;
  std::optional<std::string> query_description;
  QueryTerms terms;  // unit-normalized embeddings for every computed term
  QueryFeature feature;
  std::map<std::string, double> timings_ms;
};

namespace detail {

[[noreturn]] inline void rethrow_with_query(const Error& e, const std::string& query_id) {
  std::string msg = "query '" + query_id + "': " + e.what();
  if (const auto* be = dynamic_cast<const BackendError*>(&e)) throw BackendError(e.kind(), msg, be->attempts());
  throw Error(e.kind(), msg);
}

}  // namespace detail

/// Online query path. The mental image is generated whenever the mental
/// image or its description is needed; the description is a caption of the
/// mental image. `extra_terms` are computed but not fused (for ablation replay).
inline QueryBundle process_query(const QueryRecord& record, const ImageArtifact& reference, const Backends& backends,
                                 const PromptLibrary& prompts, DatasetKind kind, const AblationConfig& config,
                                 QueryTermSet extra_terms = {}) {
  config.validate();
  QueryTermSet terms = config.query_terms | extra_terms;
  QueryBundle b;
  b.record = record;
  auto timed = [&](const std::string& stage, auto&& f) {
    auto start = std::chrono::steady_clock::now();
    auto r = f();
    b.timings_ms[stage] += StageClock::elapsed_ms(start);
    return r;
  };
  try {
    if (terms.contains(QueryTerm::ModificationText) && record.modification_text.empty())
      throw Error(ErrorKind::PreconditionFailed, "modification text required but empty");
    bool need_mental = terms.contains(QueryTerm::MentalImage) || terms.contains(QueryTerm::QueryDescription);
    if (need_mental) {
      auto prompt = prompts.render_query_edit(kind, record.modification_text, record.shared_concept);
      b.mental = timed("edit_image", [&] { return backends.get(Capability::ImageEdit).edit_image(reference, prompt); });
    }
    if (terms.contains(QueryTerm::MentalImage)) {
      auto v = timed("embed_image", [&] { return backends.get(Capability::EmbedImage).embed_image(*b.mental); });
      b.terms.mental = detail::normalized_or_throw(v, "mental image");
    }
    if (terms.contains(QueryTerm::QueryDescription)) {
      b.query_description = timed("caption", [&] {
        return backends.get(Capability::Caption).caption(*b.mental, prompts.render_brief_caption());
      });
      auto v = timed("embed_text", [&] { return backends.get(Capability::EmbedText).embed_text(*b.query_description); });
      b.terms.description = detail::normalized_or_throw(v, "query description");
    }
    if (terms.contains(QueryTerm::ModificationText)) {
      auto v = timed("embed_text", [&] { return backends.get(Capability::EmbedText).embed_text(record.modification_text); });
      b.terms.modification = detail::normalized_or_throw(v, "modification text");
    }
    b.feature = fuse_query(b.terms, config.lambda, config.query_terms);
  } catch (const Error& e) {
    detail::rethrow_with_query(e, record.query_id);
  }
  return b;
}

/// Processes records concurrently; the reference of each record comes from `load`.
inline std::vector<QueryBundle> process_queries(std::span<const QueryRecord> records, const ImageSource& load,
                                                const Backends& backends, const PromptLibrary& prompts,
                                                DatasetKind kind, const AblationConfig& config,
                                                QueryTermSet extra_terms = {}, std::size_t workers = kDefaultWorkers) {
  std::vector<std::optional<QueryBundle>> slots(records.size());
  std::vector<std::exception_ptr> errors(records.size());
  detail::parallel_for(records.size(), workers, [&](std::size_t i) {
    try {
      slots[i] = process_query(records[i], load(records[i].reference_image_id), backends, prompts, kind, config,
                               extra_terms);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<QueryBundle> out;
  out.reserve(records.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

/// Ranks the full gallery for a processed query.
inline std::vector<RankedResult> retrieve(const QueryFeature& feature, const FeatureStore& store, std::size_t k,
                                          std::size_t workers = 1) {
  if (store.fused.empty()) throw Error(ErrorKind::EmptyGallery, "feature store is empty");
  if (encoder_family(feature.q.encoder_id) != encoder_family(store.manifest.encoder_id))
    throw Error(ErrorKind::EncoderMismatch, "query encoder '" + feature.q.encoder_id + "' vs store encoder '" +
                                                store.manifest.encoder_id + "'");
  return rank_topk(feature, store.fused, k, workers);
}

inline std::vector<RankedResult> retrieve(const QueryBundle& bundle, const FeatureStore& store, std::size_t k,
                                          std::size_t workers = 1) {
  return retrieve(bundle.feature, store, k, workers);
}

}  // namespace paracosm
