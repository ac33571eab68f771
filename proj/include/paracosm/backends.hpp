#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>

#include "json.hpp"
#include "paracosm/cache.hpp"
#include "paracosm/digest.hpp"
#include "paracosm/embedding.hpp"
#include "paracosm/errors.hpp"
#include "paracosm/image.hpp"

namespace paracosm {

enum class Capability { ImageEdit, TextToImage, Caption, EmbedImage, EmbedText };

inline constexpr std::array kAllCapabilities{Capability::ImageEdit, Capability::TextToImage, Capability::Caption,
                                             Capability::EmbedImage, Capability::EmbedText};

inline std::string_view capability_name(Capability c) {
  switch (c) {
    case Capability::ImageEdit: return "image_edit";
    case Capability::TextToImage: return "text_to_image";
    case Capability::Caption: return "caption";
    case Capability::EmbedImage: return "embed_image";
    case Capability::EmbedText: return "embed_text";
  }
  return "";
}

inline std::optional<Capability> parse_capability(std::string_view name) {
  for (auto c : kAllCapabilities)
    if (capability_name(c) == name) return c;
  return std::nullopt;
}

/// Environment variable that overrides a capability's endpoint,
/// e.g. PARACOSM_BACKEND_IMAGE_EDIT_URL.
inline std::string endpoint_env_var(Capability c) {
  std::string name(capability_name(c));
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::toupper(ch); });
  return "PARACOSM_BACKEND_" + name + "_URL";
}

inline constexpr std::string_view kMockEndpoint = "mock";

struct BackendDescriptor {
  std::string backend_id;
  Capability capability = Capability::EmbedImage;
  std::string endpoint{kMockEndpoint};
  std::string model_name = "mock";
  double timeout_s = 120.0;
  int max_retries = 3;
  int resolution = kDefaultResolution;  // generative capabilities
  std::size_t dim = 0;                  // embedding capabilities
  nlohmann::json params = nlohmann::json::object();  // opaque generation parameters

  bool is_mock() const { return endpoint == kMockEndpoint; }

  void validate() const {
    if (!(timeout_s > 0.0)) throw Error(ErrorKind::ConfigError, backend_id + ": timeout_s must be > 0");
    if (max_retries < 0) throw Error(ErrorKind::ConfigError, backend_id + ": max_retries must be >= 0");
    if ((capability == Capability::EmbedImage || capability == Capability::EmbedText) && dim == 0)
      throw Error(ErrorKind::ConfigError, backend_id + ": embedding backends must declare dim");
    if ((capability == Capability::ImageEdit || capability == Capability::TextToImage) && resolution <= 0)
      throw Error(ErrorKind::ConfigError, backend_id + ": resolution must be positive");
  }

  std::string encoder_id() const {
    return model_name + (capability == Capability::EmbedText ? "-text" : "-image");
  }

  nlohmann::json to_json() const {
    return {{"backend_id", backend_id}, {"capability", capability_name(capability)},
            {"endpoint", endpoint},     {"model_name", model_name},
            {"timeout_s", timeout_s},   {"max_retries", max_retries},
            {"resolution", resolution}, {"dim", dim},
            {"params", params}};
  }
};

/// Carries one JSON request to a model server and returns its JSON reply.
/// Failures are reported as Error with kind BackendTimeout or
/// BackendUnavailable (retryable), BackendRejected, or MalformedResponse.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual nlohmann::json post(const BackendDescriptor& backend, const nlohmann::json& body) = 0;
};

struct RetryPolicy {
  double base_delay_s = 1.0;
  double max_delay_s = 30.0;
  std::function<void(double)> sleep = [](double s) {
    std::this_thread::sleep_for(std::chrono::duration<double>(s));
  };

  /// Delay before retry number `retry` (1-based): base * 2^(retry-1), capped.
  double delay_for(int retry) const {
    return std::min(max_delay_s, base_delay_s * std::pow(2.0, static_cast<double>(retry - 1)));
  }
};

struct BackendStats {
  std::atomic<std::uint64_t> calls{0};       // client-level operations
  std::atomic<std::uint64_t> requests{0};    // transport attempts
  std::atomic<std::uint64_t> cache_hits{0};
  std::atomic<std::uint64_t> failures{0};

  nlohmann::json to_json() const {
    return {{"calls", calls.load()}, {"requests", requests.load()}, {"cache_hits", cache_hits.load()},
            {"failures", failures.load()}};
  }
};

inline constexpr std::ptrdiff_t kDefaultMaxInFlight = 8;

/// Typed client for one capability: request building, cache lookup,
/// bounded in-flight requests, retries with exponential backoff.
class BackendClient {
 public:
  BackendClient(BackendDescriptor descriptor, std::shared_ptr<Transport> transport,
                std::shared_ptr<const ContentCache> cache = nullptr, RetryPolicy retry = {},
                std::ptrdiff_t max_in_flight = kDefaultMaxInFlight)
      : descriptor_(std::move(descriptor)),
        transport_(std::move(transport)),
        cache_(std::move(cache)),
        retry_(std::move(retry)),
        in_flight_(std::clamp<std::ptrdiff_t>(max_in_flight, 1, 1024)) {
    descriptor_.validate();
  }

  const BackendDescriptor& descriptor() const { return descriptor_; }
  const BackendStats& stats() const { return stats_; }

  ImageArtifact edit_image(const ImageArtifact& ref, const std::string& prompt) {
    require(Capability::ImageEdit);
    if (prompt.empty()) reject("empty edit prompt", prompt);
    auto digest = ref.content_digest();
    auto params = generation_params();
    auto key = CacheKey::make("image_edit", descriptor_.model_name, prompt, digest, params);
    auto bytes = cached_or([&] {
      nlohmann::json body{{"model", descriptor_.model_name}, {"prompt", prompt},
                          {"image_b64", base64_encode(ref.pixel_data)}, {"width", descriptor_.resolution},
                          {"height", descriptor_.resolution}, {"params", descriptor_.params}};
      return decode_image(send(body, prompt));
    }, key);
    auto out = make_artifact(std::move(bytes), Provenance::Mental, prompt);
    out.parent_ids = {ref.image_id};
    out.image_id = ref.image_id + "~mental~" + key.digest.substr(0, 12);
    return out;
  }

  ImageArtifact generate_image(const std::string& prompt) {
    require(Capability::TextToImage);
    if (prompt.empty()) reject("empty generation prompt", prompt);
    auto key = CacheKey::make("text_to_image", descriptor_.model_name, prompt, "", generation_params());
    auto bytes = cached_or([&] {
      nlohmann::json body{{"model", descriptor_.model_name}, {"prompt", prompt}, {"width", descriptor_.resolution},
                          {"height", descriptor_.resolution}, {"params", descriptor_.params}};
      return decode_image(send(body, prompt));
    }, key);
    auto out = make_artifact(std::move(bytes), Provenance::Synthetic, prompt);
    out.image_id = "syn~" + key.digest.substr(0, 12);
    return out;
  }

  std::string caption(const ImageArtifact& image, const std::string& prompt) {
    require(Capability::Caption);
    auto key = CacheKey::make("caption", descriptor_.model_name, prompt, image.content_digest(), descriptor_.params);
    auto bytes = cached_or([&] {
      nlohmann::json body{{"model", descriptor_.model_name}, {"prompt", prompt},
                          {"image_b64", base64_encode(image.pixel_data)}};
      auto reply = send(body, prompt);
      if (!reply.contains("text") || !reply["text"].is_string())
        throw Error(ErrorKind::MalformedResponse, "caption reply lacks string field 'text'");
      auto text = reply["text"].get<std::string>();
      if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); }))
        throw Error(ErrorKind::EmptyCaption, "caption backend '" + descriptor_.backend_id + "' returned blank text");
      return Bytes(text.begin(), text.end());
    }, key);
    return std::string(bytes.begin(), bytes.end());
  }

  EmbeddingVector embed_image(const ImageArtifact& image) {
    require(Capability::EmbedImage);
    auto key = CacheKey::make("embed_image", descriptor_.model_name, "", image.content_digest(), descriptor_.params);
    return embed(key, {{"model", descriptor_.model_name}, {"image_b64", base64_encode(image.pixel_data)}});
  }

  EmbeddingVector embed_text(const std::string& text) {
    require(Capability::EmbedText);
    auto key = CacheKey::make("embed_text", descriptor_.model_name, text, "", descriptor_.params);
    return embed(key, {{"model", descriptor_.model_name}, {"text", text}});
  }

 private:
  nlohmann::json generation_params() const {
    return {{"width", descriptor_.resolution}, {"height", descriptor_.resolution}, {"params", descriptor_.params}};
  }

  void require(Capability c) const {
    if (descriptor_.capability != c)
      throw Error(ErrorKind::PreconditionFailed, "backend '" + descriptor_.backend_id + "' serves " +
                                                     std::string(capability_name(descriptor_.capability)) + ", not " +
                                                     std::string(capability_name(c)));
  }

  [[noreturn]] void reject(const std::string& why, const std::string& prompt) {
    stats_.failures++;
    throw BackendError(ErrorKind::BackendRejected, why + " [prompt: " + prompt.substr(0, 200) + "]", 0);
  }

  template <typename Produce>
  Bytes cached_or(Produce&& produce, const CacheKey& key) {
    stats_.calls++;
    auto ns = capability_name(descriptor_.capability);
    if (cache_) {
      if (auto hit = cache_->get(ns, key)) {
        stats_.cache_hits++;
        return *hit;
      }
    }
    Bytes value = produce();
    if (cache_) cache_->put(ns, key, value);
    return value;
  }

  EmbeddingVector embed(const CacheKey& key, const nlohmann::json& body) {
    auto bytes = cached_or([&] {
      auto reply = send(body, body.contains("text") ? body["text"].get<std::string>() : std::string());
      if (!reply.contains("vector") || !reply["vector"].is_array())
        throw Error(ErrorKind::MalformedResponse, "embed reply lacks array field 'vector'");
      nlohmann::json canonical{{"vector", reply["vector"]}};
      auto text = canonical.dump();
      return Bytes(text.begin(), text.end());
    }, key);
    EmbeddingVector v;
    try {
      v.values = nlohmann::json::parse(bytes.begin(), bytes.end()).at("vector").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::MalformedResponse, std::string("embedding payload: ") + e.what());
    }
    if (v.dim() != descriptor_.dim)
      throw Error(ErrorKind::DimensionDrift, "backend '" + descriptor_.backend_id + "' returned dim " +
                                                 std::to_string(v.dim()) + ", declared " + std::to_string(descriptor_.dim));
    require_finite(v.values, "backend embedding");
    v.encoder_id = descriptor_.encoder_id();
    return v;
  }

  Bytes decode_image(const nlohmann::json& reply) {
    if (!reply.contains("image_b64") || !reply["image_b64"].is_string())
      throw Error(ErrorKind::MalformedResponse, "reply lacks string field 'image_b64'");
    auto bytes = base64_decode(reply["image_b64"].get<std::string>());
    if (bytes.empty()) throw Error(ErrorKind::MalformedResponse, "empty image payload");
    return bytes;
  }

  ImageArtifact make_artifact(Bytes bytes, Provenance provenance, const std::string& prompt) const {
    ImageArtifact a;
    a.pixel_data = std::move(bytes);
    a.provenance = provenance;
    a.prompt_hash = sha256_hex(prompt);
    if (auto size = sniff_size(a.pixel_data)) {
      a.width = size->width;
      a.height = size->height;
    } else {
      a.width = a.height = descriptor_.resolution;
    }
    return a;
  }

  nlohmann::json send(const nlohmann::json& body, const std::string& prompt) {
    const int attempts = descriptor_.max_retries + 1;
    std::string last_message;
    ErrorKind last_kind = ErrorKind::BackendTimeout;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
      if (attempt > 1) retry_.sleep(retry_.delay_for(attempt - 1));
      try {
        in_flight_.acquire();
        struct Release {
          std::counting_semaphore<1024>& s;
          ~Release() { s.release(); }
        } release{in_flight_};
        stats_.requests++;
        return transport_->post(descriptor_, body);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::BackendTimeout || e.kind() == ErrorKind::BackendUnavailable) {
          last_kind = e.kind();
          last_message = e.what();
          continue;
        }
        stats_.failures++;
        if (e.kind() == ErrorKind::BackendRejected)
          throw BackendError(e.kind(), std::string(e.what()) + " [prompt: " + prompt.substr(0, 200) + "]", attempt);
        throw;
      }
    }
    stats_.failures++;
    throw BackendError(last_kind,
                       std::string(capability_name(descriptor_.capability)) + " backend '" + descriptor_.backend_id +
                           "' exhausted retries: " + last_message,
                       attempts);
  }

  BackendDescriptor descriptor_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<const ContentCache> cache_;
  RetryPolicy retry_;
  std::counting_semaphore<1024> in_flight_;
  BackendStats stats_;
};

/// Deterministic in-process model server.
///
/// Every reply is a pure function of (seed, request): edits and generations
/// are seeded rasters keyed by the input digest and prompt, captions are
/// "mock-caption-<8 hex>", embeddings are Gaussian draws normalized to unit
/// length. Planted aliases make one input embed exactly like another.
class MockTransport : public Transport {
 public:
  explicit MockTransport(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  nlohmann::json post(const BackendDescriptor& backend, const nlohmann::json& body) override {
    counts_[static_cast<std::size_t>(backend.capability)]++;
    try {
      switch (backend.capability) {
        case Capability::ImageEdit: {
          auto image = base64_decode(body.at("image_b64").get<std::string>());
          auto raster = edit_raster(seed_, sha256_hex(image), body.at("prompt").get<std::string>(),
                                    body.at("width").get<int>(), body.at("height").get<int>());
          return {{"image_b64", base64_encode(raster)}};
        }
        case Capability::TextToImage: {
          auto prompt = body.at("prompt").get<std::string>();
          if (prompt.empty()) throw Error(ErrorKind::BackendRejected, "mock t2i: empty prompt");
          auto raster = generate_raster(seed_, prompt, body.at("width").get<int>(), body.at("height").get<int>());
          return {{"image_b64", base64_encode(raster)}};
        }
        case Capability::Caption: {
          auto image = base64_decode(body.at("image_b64").get<std::string>());
          return {{"text", caption_text(seed_, sha256_hex(image), body.at("prompt").get<std::string>())}};
        }
        case Capability::EmbedImage:
        case Capability::EmbedText: {
          std::string key = body.contains("text") ? text_key(body.at("text").get<std::string>())
                                                  : image_key(base64_decode(body.at("image_b64").get<std::string>()));
          auto v = embedding_for(seed_, resolve(key), backend.dim);
          return {{"vector", v}};
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::BackendRejected, std::string("mock: malformed request: ") + e.what());
    }
    throw Error(ErrorKind::BackendRejected, "mock: unknown capability");
  }

  /// Makes inputs whose key is `alias` embed exactly like `canonical`.
  void plant(const std::string& alias, const std::string& canonical) {
    std::unique_lock lock(mutex_);
    aliases_[alias] = canonical;
  }

  std::size_t planted_count() const {
    std::shared_lock lock(mutex_);
    return aliases_.size();
  }

  std::uint64_t count(Capability c) const { return counts_[static_cast<std::size_t>(c)].load(); }
  std::uint64_t total_count() const {
    std::uint64_t s = 0;
    for (const auto& c : counts_) s += c.load();
    return s;
  }
  std::uint64_t generation_count() const {
    return count(Capability::ImageEdit) + count(Capability::TextToImage) + count(Capability::Caption);
  }
  void reset_counts() {
    for (auto& c : counts_) c = 0;
  }

  // The pure functions behind each reply; exposed so that oracles and toy
  // data generation can predict mock outputs without issuing requests.

  static std::string image_key(std::span<const std::uint8_t> bytes) { return "image:" + sha256_hex(bytes); }
  static std::string text_key(std::string_view text) { return "text:" + sha256_hex(text); }

  static Bytes edit_raster(std::uint64_t seed, std::string_view image_digest, std::string_view prompt, int w, int h) {
    auto key = Sha256().field("mock-edit").field(std::to_string(seed)).field(image_digest).field(prompt).hex();
    return seeded_raster(key, w, h);
  }

  static Bytes generate_raster(std::uint64_t seed, std::string_view prompt, int w, int h) {
    auto key = Sha256().field("mock-t2i").field(std::to_string(seed)).field(prompt).hex();
    return seeded_raster(key, w, h);
  }

  static std::string caption_text(std::uint64_t seed, std::string_view image_digest, std::string_view prompt) {
    auto d = Sha256().field("mock-caption").field(std::to_string(seed)).field(image_digest).field(prompt).hex();
    return "mock-caption-" + d.substr(0, 8);
  }

  static std::vector<double> embedding_for(std::uint64_t seed, std::string_view key, std::size_t dim) {
    auto d = Sha256().field("mock-embed").field(std::to_string(seed)).field(key).finish();
    std::seed_seq seq(d.begin(), d.end());
    std::mt19937_64 rng(seq);
    // Box-Muller over raw 53-bit uniforms keeps the draw identical across
    // standard library implementations.
    auto uniform = [&] { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };
    std::vector<double> v(dim);
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    for (std::size_t i = 0; i < dim; i += 2) {
      double r = std::sqrt(-2.0 * std::log(uniform()));
      double theta = kTwoPi * uniform();
      v[i] = r * std::cos(theta);
      if (i + 1 < dim) v[i + 1] = r * std::sin(theta);
    }
    double n = l2_norm(v);
    for (double& x : v) x /= n;
    return v;
  }

 private:
  std::string resolve(const std::string& key) const {
    std::shared_lock lock(mutex_);
    auto it = aliases_.find(key);
    return it == aliases_.end() ? key : it->second;
  }

  std::uint64_t seed_;
  std::array<std::atomic<std::uint64_t>, kAllCapabilities.size()> counts_{};
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, std::string> aliases_;
};

}  // namespace paracosm
