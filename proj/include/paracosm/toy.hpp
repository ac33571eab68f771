#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "paracosm/backends.hpp"
#include "paracosm/datasets.hpp"
#include "paracosm/errors.hpp"
#include "paracosm/image.hpp"
#include "paracosm/pipeline.hpp"
#include "paracosm/prompts.hpp"

namespace paracosm {

struct ToyOptions {
  std::uint64_t seed = 0;
  std::size_t n_queries = 100;
  std::size_t n_gallery = 500;
  double plant_rate = 1.0;
  int image_size = 16;                 // source rasters
  int generation_resolution = 32;      // must match the mock edit/t2i backends
  std::uint64_t mock_seed = 0;         // must match the MockTransport seed
  bool noiseless_counterparts = true;  // synthetic counterparts and captions embed like their source image
  std::size_t subset_size = 0;         // >0: CIRR-style subsets of this many members incl. the reference
  DatasetKind kind = DatasetKind::Generic;

  nlohmann::json to_json() const {
    return {{"seed", seed},
            {"n_queries", n_queries},
            {"n_gallery", n_gallery},
            {"plant_rate", plant_rate},
            {"image_size", image_size},
            {"generation_resolution", generation_resolution},
            {"mock_seed", mock_seed},
            {"noiseless_counterparts", noiseless_counterparts},
            {"subset_size", subset_size},
            {"kind", to_string(kind)}};
  }

  static ToyOptions from_json(const nlohmann::json& j) {
    ToyOptions o;
    o.seed = j.at("seed").get<std::uint64_t>();
    o.n_queries = j.at("n_queries").get<std::size_t>();
    o.n_gallery = j.at("n_gallery").get<std::size_t>();
    o.plant_rate = j.at("plant_rate").get<double>();
    o.image_size = j.at("image_size").get<int>();
    o.generation_resolution = j.at("generation_resolution").get<int>();
    o.mock_seed = j.at("mock_seed").get<std::uint64_t>();
    o.noiseless_counterparts = j.at("noiseless_counterparts").get<bool>();
    o.subset_size = j.at("subset_size").get<std::size_t>();
    o.kind = parse_dataset_kind(j.at("kind").get<std::string>());
    return o;
  }
};

/// Mock-embedder alias: inputs keyed `alias` embed exactly like `canonical`.
struct PlantedAlias {
  std::string alias;
  std::string canonical;
  bool operator==(const PlantedAlias&) const = default;
};

struct ToyBenchmark {
  ToyOptions options;
  Dataset dataset;
  std::map<std::string, ImageArtifact> images;
  std::map<std::string, std::string> planted_targets;  // query id -> target id
  std::vector<PlantedAlias> aliases;

  /// Identifies the planting so cached embeddings of differently planted runs never mix.
  std::string planting_digest() const {
    Sha256 h;
    for (const auto& a : aliases) h.field(a.alias).field(a.canonical);
    return h.hex();
  }

  void plant_into(MockTransport& mock) const {
    for (const auto& a : aliases) mock.plant(a.alias, a.canonical);
  }

  ImageSource image_source() const {
    return [this](const std::string& id) {
      auto it = images.find(id);
      if (it == images.end()) throw Error(ErrorKind::UnknownImageId, "toy image '" + id + "'");
      return it->second;
    };
  }
};

namespace detail {

inline std::size_t draw_index(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

inline std::string toy_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%05zu", prefix, i);
  return buf;
}

}  // namespace detail

/// Seeded synthetic benchmark with known ground truth. For a planted query
/// the mock embedder is told that its mental image, the description of that
/// mental image, and its modification text all embed like the target image,
/// so exact retrieval must put the target first. Outputs of the mock
/// backends are predicted with the same pure functions the mock uses.
inline ToyBenchmark generate_toy_benchmark(const ToyOptions& options, const PromptLibrary& prompts) {
  if (!(options.plant_rate >= 0.0 && options.plant_rate <= 1.0))
    throw Error(ErrorKind::InvalidRate, "plant_rate must lie in [0,1]");
  if (options.n_gallery < 2) throw Error(ErrorKind::InvalidArgument, "toy gallery needs at least two images");
  if (options.subset_size != 0 && (options.subset_size < 2 || options.subset_size > options.n_gallery))
    throw Error(ErrorKind::InvalidArgument, "subset_size must lie in [2, n_gallery]");

  ToyBenchmark toy;
  toy.options = options;
  toy.dataset.kind = options.kind;
  toy.dataset.split = "toy";
  std::mt19937_64 rng(options.seed);

  for (std::size_t i = 0; i < options.n_gallery; ++i) {
    auto id = detail::toy_id("img-", i);
    ImageArtifact img;
    img.image_id = id;
    img.pixel_data = seeded_raster(Sha256().field("toy-image").field(std::to_string(options.seed)).field(id).hex(),
                                   options.image_size, options.image_size);
    img.width = img.height = options.image_size;
    toy.dataset.gallery_ids.push_back(id);
    toy.images.emplace(id, std::move(img));
  }

  static const char* kVerbs[] = {"make", "turn", "change", "show", "replace", "add", "remove", "paint"};
  static const char* kNouns[] = {"the dog", "the sky", "the car", "two cats", "the table", "a boat", "the shirt",
                                 "the wall"};
  static const char* kMods[] = {"red", "at night", "smaller", "from above", "in the snow", "with stripes",
                                "wooden", "blurred"};

  for (std::size_t q = 0; q < options.n_queries; ++q) {
    QueryRecord r;
    r.query_id = detail::toy_id("q-", q);
    std::size_t target = detail::draw_index(rng, options.n_gallery);
    std::size_t ref = detail::draw_index(rng, options.n_gallery - 1);
    if (ref >= target) ++ref;
    r.reference_image_id = toy.dataset.gallery_ids[ref];
    r.gt_target_ids = {toy.dataset.gallery_ids[target]};
    r.modification_text = std::string(kVerbs[detail::draw_index(rng, 8)]) + " " + kNouns[detail::draw_index(rng, 8)] +
                          " " + kMods[detail::draw_index(rng, 8)] + " (variant " + std::to_string(q) + ")";
    if (options.kind == DatasetKind::Circo) r.shared_concept = "concept " + std::to_string(detail::draw_index(rng, 50));
    if (options.kind == DatasetKind::FashionIQ) r.category = "shirt";
    if (options.subset_size > 0) {
      std::vector<std::size_t> members{target};
      while (members.size() + 1 < options.subset_size) {
        std::size_t m = detail::draw_index(rng, options.n_gallery);
        if (m != ref && std::find(members.begin(), members.end(), m) == members.end()) members.push_back(m);
      }
      std::sort(members.begin(), members.end());
      std::vector<std::string> ids;
      for (auto m : members) ids.push_back(toy.dataset.gallery_ids[m]);
      r.subset_ids = std::move(ids);
    }
    toy.dataset.records.push_back(std::move(r));
  }

  // Planted queries: the first round(rate * n) of a seeded permutation.
  std::vector<std::size_t> order(options.n_queries);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[detail::draw_index(rng, i)]);
  auto n_planted = static_cast<std::size_t>(std::llround(options.plant_rate * static_cast<double>(options.n_queries)));

  const int res = options.generation_resolution;
  const auto brief = prompts.render_brief_caption();
  for (std::size_t j = 0; j < n_planted; ++j) {
    const auto& r = toy.dataset.records[order[j]];
    const auto& target = toy.images.at(r.gt_target_ids.front());
    const auto& reference = toy.images.at(r.reference_image_id);
    auto canonical = MockTransport::image_key(target.pixel_data);
    auto edit_prompt = prompts.render_query_edit(options.kind, r.modification_text, r.shared_concept);
    auto mental = MockTransport::edit_raster(options.mock_seed, reference.content_digest(), edit_prompt, res, res);
    auto description = MockTransport::caption_text(options.mock_seed, sha256_hex(mental), brief);
    toy.aliases.push_back({MockTransport::image_key(mental), canonical});
    toy.aliases.push_back({MockTransport::text_key(description), canonical});
    toy.aliases.push_back({MockTransport::text_key(r.modification_text), canonical});
    toy.planted_targets[r.query_id] = target.image_id;
  }

  if (options.noiseless_counterparts) {
    const auto detailed_prompt = prompts.render_detailed_caption();
    for (const auto& id : toy.dataset.gallery_ids) {
      const auto& img = toy.images.at(id);
      auto canonical = MockTransport::image_key(img.pixel_data);
      auto detailed = MockTransport::caption_text(options.mock_seed, img.content_digest(), detailed_prompt);
      auto syn = MockTransport::generate_raster(options.mock_seed, detailed, res, res);
      toy.aliases.push_back({MockTransport::image_key(syn), canonical});
      toy.aliases.push_back({MockTransport::text_key(detailed), canonical});
      auto brief_text = MockTransport::caption_text(options.mock_seed, img.content_digest(), brief);
      toy.aliases.push_back({MockTransport::text_key(brief_text), canonical});
    }
  }
  return toy;
}

// ---------------------------------------------------------------- on disk

/// Layout: toy.json, queries.jsonl, gallery.json (id -> relative path),
/// planted.json, images/<id>.ppm.
inline void write_toy_benchmark(const std::filesystem::path& dir, const ToyBenchmark& toy) {
  std::filesystem::create_directories(dir / "images");
  nlohmann::json gallery = nlohmann::json::object();
  for (const auto& id : toy.dataset.gallery_ids) {
    const auto& img = toy.images.at(id);
    std::string rel = "images/" + id + ".ppm";
    std::ofstream out(dir / rel, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(img.pixel_data.data()), static_cast<std::streamsize>(img.pixel_data.size()));
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write '" + (dir / rel).string() + "'");
    gallery[id] = rel;
  }
  write_records_jsonl(dir / "queries.jsonl", toy.dataset.records);
  nlohmann::json aliases = nlohmann::json::array();
  for (const auto& a : toy.aliases) aliases.push_back({a.alias, a.canonical});
  nlohmann::json planted{{"aliases", aliases}, {"targets", toy.planted_targets}};
  std::ofstream(dir / "gallery.json") << gallery.dump(1) << '\n';
  std::ofstream(dir / "planted.json") << planted.dump(1) << '\n';
  std::ofstream(dir / "toy.json") << toy.options.to_json().dump(2) << '\n';
}

inline ToyBenchmark read_toy_benchmark(const std::filesystem::path& dir) {
  auto load_json = [&](const char* name) {
    std::ifstream in(dir / name);
    if (!in) throw Error(ErrorKind::IoFailure, "missing '" + (dir / name).string() + "'");
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::SchemaError, std::string(name) + ": " + e.what());
    }
  };
  ToyBenchmark toy;
  try {
    toy.options = ToyOptions::from_json(load_json("toy.json"));
    auto gallery = load_json("gallery.json");
    for (const auto& [id, rel] : gallery.items()) {
      auto path = (dir / rel.get<std::string>()).string();
      toy.dataset.gallery_ids.push_back(id);
      toy.dataset.image_paths[id] = path;
      toy.images.emplace(id, load_source_image(id, path));
    }
    auto planted = load_json("planted.json");
    for (const auto& a : planted.at("aliases")) toy.aliases.push_back({a.at(0).get<std::string>(), a.at(1).get<std::string>()});
    toy.planted_targets = planted.at("targets").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaError, std::string("toy benchmark: ") + e.what());
  }
  toy.dataset.kind = toy.options.kind;
  toy.dataset.split = "toy";
  toy.dataset.records = read_records_jsonl(dir / "queries.jsonl");
  return toy;
}

}  // namespace paracosm
