#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "paracosm/feature_store.hpp"
#include "paracosm/fusion.hpp"
#include "paracosm/pipeline.hpp"
#include "paracosm/prompts.hpp"
#include "paracosm/ranking.hpp"

namespace paracosm {

inline constexpr std::size_t kDefaultRerankCapacity = 256;
inline constexpr std::size_t kDefaultServiceK = 50;

/// Maps an image id to its raster bytes, or nullopt when unknown.
using ImageLookup = std::function<std::optional<Bytes>(const std::string&)>;

struct ServiceOptions {
  DatasetKind dataset_kind = DatasetKind::Generic;
  std::size_t k = kDefaultServiceK;
  std::size_t rerank_capacity = kDefaultRerankCapacity;
  std::size_t workers = 1;
  bool async_queries = false;  // answer POST /api/query with 202 and finish in the background
  std::string cors_origin = "*";
};

/// HTTP status plus JSON body.
struct ServiceReply {
  int status = 200;
  nlohmann::json body;
};

inline int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BackendTimeout:
    case ErrorKind::BackendUnavailable: return 503;
    case ErrorKind::MissingSharedConcept: return 422;
    case ErrorKind::BackendRejected:
    case ErrorKind::MalformedResponse:
    case ErrorKind::EmptyCaption:
    case ErrorKind::DimensionDrift: return 502;
    default: return 400;
  }
}

/// Query pipeline behind the HTTP routes. The store is never mutated.
class QueryService {
 public:
  QueryService(std::shared_ptr<const FeatureStore> store, Backends backends, PromptLibrary prompts,
               ImageLookup gallery_images, ServiceOptions options = {})
      : store_(std::move(store)),
        backends_(std::move(backends)),
        prompts_(std::move(prompts)),
        gallery_images_(std::move(gallery_images)),
        options_(options) {
    if (!store_) throw Error(ErrorKind::InvalidArgument, "service needs a feature store");
    if (options_.rerank_capacity == 0) options_.rerank_capacity = 1;
  }

  ~QueryService() {
    std::lock_guard lock(jobs_mu_);
    for (auto& t : background_) t.join();
  }

  const FeatureStore& store() const { return *store_; }
  const ServiceOptions& options() const { return options_; }

  ServiceReply health() const {
    nlohmann::json b = nlohmann::json::object();
    for (const auto& [cap, client] : backends_.clients) {
      const auto& d = client->descriptor();
      b[std::string(capability_name(cap))] = d.is_mock() ? std::string("mock") : d.endpoint;
    }
    return {200, {{"status", "ok"}, {"backends", b}}};
  }

  ServiceReply store_info() const {
    const auto& m = store_->manifest;
    return {200, {{"n", m.n}, {"dim", m.dim}, {"encoder_id", m.encoder_id}, {"config_digest", m.config_digest},
                  {"dataset_kind", m.dataset_kind}, {"config", m.config.to_json()}}};
  }

  /// Runs the online path and returns the result payload (or an error reply).
  ServiceReply query(const ImageArtifact& reference, const std::string& modification_text,
                     const std::optional<std::string>& shared_concept, std::optional<double> lambda,
                     std::optional<std::size_t> k = std::nullopt) {
    auto id = next_query_id();
    return run_query(id, reference, modification_text, shared_concept, lambda, k);
  }

  /// Starts a query in the background; poll with `poll`.
  ServiceReply submit_async(const ImageArtifact& reference, const std::string& modification_text,
                            const std::optional<std::string>& shared_concept, std::optional<double> lambda,
                            std::optional<std::size_t> k = std::nullopt) {
    auto id = next_query_id();
    {
      std::lock_guard lock(jobs_mu_);
      jobs_[id] = std::nullopt;
      background_.emplace_back([this, id, reference, modification_text, shared_concept, lambda, k] {
        auto reply = run_query(id, reference, modification_text, shared_concept, lambda, k);
        std::lock_guard l(jobs_mu_);
        jobs_[id] = std::move(reply);
      });
    }
    return {202, {{"query_id", id}, {"status", "pending"}}};
  }

  ServiceReply poll(const std::string& query_id) const {
    std::lock_guard lock(jobs_mu_);
    auto it = jobs_.find(query_id);
    if (it == jobs_.end()) return {404, {{"error", "unknown query_id '" + query_id + "'"}}};
    if (!it->second) return {202, {{"query_id", query_id}, {"status", "pending"}}};
    return *it->second;
  }

  /// Re-fuses the cached query terms under new weights. No backend calls.
  ServiceReply rerank(const std::string& query_id, std::optional<double> lambda, std::optional<double> beta) {
    std::optional<Entry> entry = lookup(query_id);
    if (!entry) return {404, {{"error", "unknown query_id '" + query_id + "'"}}};
    double l = lambda.value_or(entry->lambda);
    double b = beta.value_or(store_->manifest.config.beta);
    if (!(l >= 0.0 && l <= 1.0)) return {400, {{"error", "lambda must lie in [0,1]"}}};
    if (!(b >= 0.0 && b <= 1.0)) return {400, {{"error", "beta must lie in [0,1]"}}};
    auto start = std::chrono::steady_clock::now();
    try {
      auto feature = fuse_query(entry->terms, l, store_->manifest.config.query_terms);
      auto gallery = gallery_for(b);
      auto results = rank_topk(feature, *gallery, entry->k, options_.workers);
      nlohmann::json timings{{"lambda", l}, {"beta", b}, {"rank_ms", StageClock::elapsed_ms(start)}};
      return {200, {{"query_id", query_id}, {"results", results_json(results)}, {"timings", timings}}};
    } catch (const Error& e) {
      return {status_for(e.kind()), {{"error", e.what()}}};
    }
  }

  /// Gallery rasters and generated mental images.
  std::optional<Bytes> image(const std::string& id) const {
    {
      std::shared_lock lock(mu_);
      if (auto it = mental_images_.find(id); it != mental_images_.end()) return it->second;
    }
    if (!store_->fused.find(id)) return std::nullopt;
    return gallery_images_ ? gallery_images_(id) : std::nullopt;
  }

  std::size_t cached_queries() const {
    std::shared_lock lock(mu_);
    return entries_.size();
  }

 private:
  struct Entry {
    QueryTerms terms;
    double lambda = kDefaultLambda;
    std::size_t k = kDefaultServiceK;
    std::optional<std::string> mental_id;
  };

  std::string next_query_id() {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "query-%06llu", static_cast<unsigned long long>(++counter_));
    return buf;
  }

  ServiceReply run_query(const std::string& id, const ImageArtifact& reference, const std::string& modification_text,
                         const std::optional<std::string>& shared_concept, std::optional<double> lambda,
                         std::optional<std::size_t> k) {
    auto start = std::chrono::steady_clock::now();
    AblationConfig config = store_->manifest.config;
    config.lambda = lambda.value_or(kDefaultLambda);
    std::size_t top = std::max<std::size_t>(k.value_or(options_.k), 1);
    if (modification_text.empty()) return {400, {{"error", "modification_text is required"}}};
    if (!(config.lambda >= 0.0 && config.lambda <= 1.0)) return {400, {{"error", "lambda must lie in [0,1]"}}};
    if (options_.dataset_kind == DatasetKind::Circo && (!shared_concept || shared_concept->empty()))
      return {422, {{"error", "shared_concept is required for this store"}}};

    QueryRecord record;
    record.query_id = id;
    record.reference_image_id = reference.image_id;
    record.modification_text = modification_text;
    record.shared_concept = shared_concept;
    try {
      auto bundle = process_query(record, reference, backends_, prompts_, options_.dataset_kind, config);
      auto rank_start = std::chrono::steady_clock::now();
      auto results = retrieve(bundle, *store_, top, options_.workers);
      double rank_ms = StageClock::elapsed_ms(rank_start);

      Entry entry{bundle.terms, config.lambda, top, std::nullopt};
      nlohmann::json body{{"query_id", id}};
      if (bundle.mental) {
        entry.mental_id = bundle.mental->image_id;
        body["mental_image_url"] = "/api/image/" + bundle.mental->image_id;
      } else {
        body["mental_image_url"] = nullptr;
      }
      body["description"] = bundle.query_description ? nlohmann::json(*bundle.query_description) : nlohmann::json();
      body["results"] = results_json(results);
      nlohmann::json timings{{"lambda", config.lambda}, {"beta", config.beta}, {"rank_ms", rank_ms}};
      for (const auto& [stage, ms] : bundle.timings_ms) timings[stage + "_ms"] = ms;
      timings["total_ms"] = StageClock::elapsed_ms(start);
      body["timings"] = timings;
      remember(id, std::move(entry), bundle.mental);
      return {200, body};
    } catch (const Error& e) {
      return {status_for(e.kind()), {{"error", e.what()}}};
    }
  }

  nlohmann::json results_json(const std::vector<RankedResult>& results) const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : results)
      out.push_back({{"image_id", r.image_id}, {"score", r.score}, {"rank", r.rank},
                     {"image_url", "/api/image/" + r.image_id}});
    return out;
  }

  void remember(const std::string& id, Entry entry, const std::optional<ImageArtifact>& mental) {
    std::unique_lock lock(mu_);
    if (mental) mental_images_[mental->image_id] = mental->pixel_data;
    lru_.push_front(id);
    entries_[id] = {std::move(entry), lru_.begin()};
    while (entries_.size() > options_.rerank_capacity) {
      auto victim = lru_.back();
      lru_.pop_back();
      auto it = entries_.find(victim);
      if (it->second.first.mental_id) {
        bool shared = false;
        for (const auto& [other, e] : entries_)
          if (other != victim && e.first.mental_id == it->second.first.mental_id) shared = true;
        if (!shared) mental_images_.erase(*it->second.first.mental_id);
      }
      entries_.erase(it);
    }
  }

  std::optional<Entry> lookup(const std::string& id) {
    std::unique_lock lock(mu_);
    auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    lru_.splice(lru_.begin(), lru_, it->second.second);
    return it->second.first;
  }

  /// The stored matrix when beta matches the store, else a re-fused one.
  std::shared_ptr<const FeatureMatrix> gallery_for(double beta) {
    const auto& m = store_->manifest;
    if (beta == m.config.beta) return std::shared_ptr<const FeatureMatrix>(store_, &store_->fused);
    std::lock_guard lock(refused_mu_);
    if (auto it = refused_.find(beta); it != refused_.end()) return it->second;
    auto matrix = std::make_shared<const FeatureMatrix>(
        fuse_term_matrices(store_->terms, store_->fused.ids(), m.config.gallery_terms, beta, m.encoder_id));
    if (refused_.size() >= 16) refused_.clear();
    refused_[beta] = matrix;
    return matrix;
  }

  std::shared_ptr<const FeatureStore> store_;
  Backends backends_;
  PromptLibrary prompts_;
  ImageLookup gallery_images_;
  ServiceOptions options_;
  std::atomic<std::uint64_t> counter_{0};

  mutable std::shared_mutex mu_;
  std::list<std::string> lru_;
  std::unordered_map<std::string, std::pair<Entry, std::list<std::string>::iterator>> entries_;
  std::unordered_map<std::string, Bytes> mental_images_;

  std::mutex refused_mu_;
  std::map<double, std::shared_ptr<const FeatureMatrix>> refused_;

  mutable std::mutex jobs_mu_;
  std::map<std::string, std::optional<ServiceReply>> jobs_;
  std::vector<std::thread> background_;
};

namespace detail {

inline void reply_json(httplib::Response& res, const ServiceReply& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

inline std::optional<double> parse_unit(const std::string& s) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline std::string image_mime(const Bytes& data) {
  auto ext = image_extension(data);
  if (ext == ".png") return "image/png";
  if (ext == ".jpg") return "image/jpeg";
  return "image/x-portable-pixmap";
}

}  // namespace detail

/// Installs the /api routes on `server`.
inline void mount_routes(httplib::Server& server, QueryService& service) {
  const std::string origin = service.options().cors_origin;
  server.set_default_headers({{"Access-Control-Allow-Origin", origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.Get("/api/health", [&](const httplib::Request&, httplib::Response& res) {
    detail::reply_json(res, service.health());
  });
  server.Get("/api/store/info", [&](const httplib::Request&, httplib::Response& res) {
    detail::reply_json(res, service.store_info());
  });
  server.Get("/api/image/:id", [&](const httplib::Request& req, httplib::Response& res) {
    auto id = req.path_params.at("id");
    auto bytes = service.image(id);
    if (!bytes) return detail::reply_json(res, {404, {{"error", "unknown image id '" + id + "'"}}});
    res.set_content(std::string(bytes->begin(), bytes->end()), detail::image_mime(*bytes));
  });
  server.Get("/api/query/:id", [&](const httplib::Request& req, httplib::Response& res) {
    detail::reply_json(res, service.poll(req.path_params.at("id")));
  });

  server.Post("/api/query", [&](const httplib::Request& req, httplib::Response& res) {
    auto bad = [&](const std::string& msg) { detail::reply_json(res, {400, {{"error", msg}}}); };
    if (!req.is_multipart_form_data()) return bad("expected multipart/form-data");
    if (!req.has_file("image")) return bad("missing 'image' part");
    auto field = [&](const char* name) -> std::optional<std::string> {
      if (!req.has_file(name)) return std::nullopt;
      return req.get_file_value(name).content;
    };
    auto image = req.get_file_value("image");
    if (image.content.empty()) return bad("empty 'image' part");
    auto text = field("modification_text");
    if (!text || text->empty()) return bad("missing 'modification_text'");
    std::optional<double> lambda;
    if (auto l = field("lambda"); l && !l->empty()) {
      lambda = detail::parse_unit(*l);
      if (!lambda) return bad("lambda is not a number");
    }
    std::optional<std::size_t> k;
    if (auto kv = field("k"); kv && !kv->empty()) {
      auto v = detail::parse_unit(*kv);
      if (!v || *v < 1) return bad("k must be a positive integer");
      k = static_cast<std::size_t>(*v);
    }
    auto shared = field("shared_concept");
    if (shared && shared->empty()) shared.reset();

    ImageArtifact ref;
    ref.pixel_data = Bytes(image.content.begin(), image.content.end());
    ref.image_id = "upload~" + sha256_hex(ref.pixel_data).substr(0, 12);
    ref.provenance = Provenance::Source;
    if (auto size = sniff_size(ref.pixel_data)) {
      ref.width = size->width;
      ref.height = size->height;
    }
    bool async = service.options().async_queries || field("async").value_or("") == "1";
    detail::reply_json(res, async ? service.submit_async(ref, *text, shared, lambda, k)
                                  : service.query(ref, *text, shared, lambda, k));
  });

  server.Post("/api/rerank", [&](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      return detail::reply_json(res, {400, {{"error", "body is not JSON"}}});
    }
    if (!body.is_object() || !body.contains("query_id") || !body["query_id"].is_string())
      return detail::reply_json(res, {400, {{"error", "missing query_id"}}});
    auto number = [&](const char* key) -> std::optional<double> {
      if (!body.contains(key) || body[key].is_null()) return std::nullopt;
      if (!body[key].is_number()) return std::numeric_limits<double>::quiet_NaN();
      return body[key].get<double>();
    };
    detail::reply_json(res, service.rerank(body["query_id"].get<std::string>(), number("lambda"), number("beta")));
  });
}

}  // namespace paracosm
