#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "paracosm/embedding.hpp"

namespace paracosm::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("paracosm-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline EmbeddingVector vec(std::vector<double> v, std::string encoder = "enc-image") {
  return EmbeddingVector{std::move(v), std::move(encoder)};
}

inline EmbeddingVector basis(std::size_t dim, std::size_t i, std::string encoder = "enc-image") {
  std::vector<double> v(dim, 0.0);
  v[i] = 1.0;
  return vec(std::move(v), std::move(encoder));
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(dim);
  for (auto& x : v) x = n(rng);
  return v;
}

inline EmbeddingVector random_unit(std::mt19937_64& rng, std::size_t dim, std::string encoder = "enc-image") {
  return l2_normalize(vec(random_vector(rng, dim), std::move(encoder))).vector;
}

}  // namespace paracosm::testing
