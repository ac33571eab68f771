#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "paracosm/digest.hpp"
#include "paracosm/errors.hpp"

namespace paracosm {

inline constexpr int kDefaultResolution = 512;

enum class Provenance { Source, Mental, Synthetic };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Source: return "source";
    case Provenance::Mental: return "mental";
    case Provenance::Synthetic: return "synthetic";
  }
  return "";
}

/// Encoded raster plus lineage. `prompt_hash` is set only on generated images.
struct ImageArtifact {
  std::string image_id;
  Bytes pixel_data;
  int width = 0;
  int height = 0;
  Provenance provenance = Provenance::Source;
  std::vector<std::string> parent_ids;
  std::optional<std::string> prompt_hash;

  std::string content_digest() const { return sha256_hex(pixel_data); }
};

struct RasterSize {
  int width = 0;
  int height = 0;
};

namespace detail {

inline std::uint32_t read_be32(const Bytes& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

}  // namespace detail

/// Reads width/height from a PNG or binary PPM header. Other encodings
/// return nullopt; their bytes are still usable as opaque image payloads.
inline std::optional<RasterSize> sniff_size(const Bytes& data) {
  static constexpr std::uint8_t kPng[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (data.size() >= 24 && std::equal(std::begin(kPng), std::end(kPng), data.begin())) {
    return RasterSize{static_cast<int>(detail::read_be32(data, 16)), static_cast<int>(detail::read_be32(data, 20))};
  }
  if (data.size() >= 2 && data[0] == 'P' && data[1] == '6') {
    std::string header(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(data.size(), 64)));
    int w = 0, h = 0;
    std::size_t pos = 2;
    auto next_int = [&](int& out) {
      while (pos < header.size() && std::isspace(static_cast<unsigned char>(header[pos]))) ++pos;
      std::size_t start = pos;
      while (pos < header.size() && std::isdigit(static_cast<unsigned char>(header[pos]))) ++pos;
      if (start == pos) return false;
      out = std::stoi(header.substr(start, pos - start));
      return true;
    };
    if (next_int(w) && next_int(h)) return RasterSize{w, h};
  }
  return std::nullopt;
}

/// Binary PPM (P6, maxval 255). `rgb` holds width*height*3 bytes.
inline Bytes encode_ppm(int width, int height, const std::vector<std::uint8_t>& rgb) {
  std::string header = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.insert(out.end(), rgb.begin(), rgb.end());
  return out;
}

/// Deterministic pseudo-random raster keyed by a hex digest.
inline Bytes seeded_raster(std::string_view key_hex, int width, int height) {
  auto seed_bytes = Sha256().update(key_hex).finish();
  std::seed_seq seq(seed_bytes.begin(), seed_bytes.end());
  std::mt19937_64 rng(seq);
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  for (std::size_t i = 0; i < rgb.size(); i += 8) {
    std::uint64_t r = rng();
    for (std::size_t j = 0; j < 8 && i + j < rgb.size(); ++j) rgb[i + j] = static_cast<std::uint8_t>(r >> (8 * j));
  }
  return encode_ppm(width, height, rgb);
}

inline Bytes read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open '" + path + "'");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline ImageArtifact load_source_image(const std::string& image_id, const std::string& path) {
  ImageArtifact a;
  a.image_id = image_id;
  a.pixel_data = read_file_bytes(path);
  if (auto size = sniff_size(a.pixel_data)) {
    a.width = size->width;
    a.height = size->height;
  }
  return a;
}

inline std::string image_extension(const Bytes& data) {
  if (data.size() >= 4 && data[0] == 0x89 && data[1] == 'P') return ".png";
  if (data.size() >= 2 && data[0] == 'P' && data[1] == '6') return ".ppm";
  if (data.size() >= 2 && data[0] == 0xFF && data[1] == 0xD8) return ".jpg";
  return ".bin";
}

}  // namespace paracosm
