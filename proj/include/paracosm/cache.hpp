#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include "json.hpp"
#include "paracosm/digest.hpp"
#include "paracosm/errors.hpp"

namespace paracosm {

/// SHA-256 over everything that determines a backend result.
struct CacheKey {
  std::string digest;

  static CacheKey make(std::string_view capability, std::string_view model_name, std::string_view prompt,
                       std::string_view input_digest, const nlohmann::json& generation_params) {
    Sha256 h;
    h.field("paracosm-cache-v1").field(capability).field(model_name).field(prompt).field(input_digest);
    // std::map-backed objects dump with sorted keys, so this is canonical.
    h.field(generation_params.dump());
    return CacheKey{h.hex()};
  }

  bool operator==(const CacheKey&) const = default;
};

/// Content-addressed blob store: <root>/<namespace>/<first two hex>/<digest>.
/// Writes go to a unique temp file and are renamed into place, so readers see
/// either nothing or a complete entry. Eviction is manual.
class ContentCache {
 public:
  explicit ContentCache(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }

  std::filesystem::path path_for(std::string_view ns, const CacheKey& key) const {
    return root_ / std::string(ns) / key.digest.substr(0, 2) / key.digest;
  }

  std::optional<Bytes> get(std::string_view ns, const CacheKey& key) const {
    auto p = path_for(ns, key);
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  void put(std::string_view ns, const CacheKey& key, std::span<const std::uint8_t> value) const {
    auto final_path = path_for(ns, key);
    std::error_code ec;
    std::filesystem::create_directories(final_path.parent_path(), ec);
    if (ec) throw Error(ErrorKind::IoFailure, "cache mkdir '" + final_path.parent_path().string() + "': " + ec.message());
    auto tmp = final_path;
    tmp += ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + "." +
           std::to_string(counter_.fetch_add(1));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(ErrorKind::IoFailure, "cannot write cache entry '" + tmp.string() + "'");
      out.write(reinterpret_cast<const char*>(value.data()), static_cast<std::streamsize>(value.size()));
      if (!out) throw Error(ErrorKind::IoFailure, "short write on '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, final_path, ec);
    if (ec) throw Error(ErrorKind::IoFailure, "cache rename: " + ec.message());
  }

  void put(std::string_view ns, const CacheKey& key, std::string_view value) const {
    put(ns, key, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(value.data()), value.size()));
  }

 private:
  std::filesystem::path root_;
  inline static std::atomic<std::uint64_t> counter_{0};
};

}  // namespace paracosm
