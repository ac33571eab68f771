#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "paracosm/errors.hpp"
#include "paracosm/image.hpp"
#include "paracosm/prompts.hpp"

namespace paracosm {

/// One composed query, normalized across benchmarks.
struct QueryRecord {
  std::string query_id;
  std::string reference_image_id;
  std::string modification_text;
  std::optional<std::string> shared_concept;           // CIRCO
  std::vector<std::string> gt_target_ids;             // empty only for hidden-label test splits
  std::optional<std::vector<std::string>> subset_ids;  // CIRR, reference removed
  std::optional<std::string> category;                 // FashionIQ

  bool operator==(const QueryRecord&) const = default;

  nlohmann::json to_json() const {
    nlohmann::json j{{"query_id", query_id},
                     {"reference_image_id", reference_image_id},
                     {"modification_text", modification_text},
                     {"gt_target_ids", gt_target_ids}};
    if (shared_concept) j["shared_concept"] = *shared_concept;
    if (subset_ids) j["subset_ids"] = *subset_ids;
    if (category) j["category"] = *category;
    return j;
  }

  static QueryRecord from_json(const nlohmann::json& j) {
    QueryRecord r;
    try {
      r.query_id = j.at("query_id").get<std::string>();
      r.reference_image_id = j.at("reference_image_id").get<std::string>();
      r.modification_text = j.at("modification_text").get<std::string>();
      r.gt_target_ids = j.at("gt_target_ids").get<std::vector<std::string>>();
      if (j.contains("shared_concept")) r.shared_concept = j["shared_concept"].get<std::string>();
      if (j.contains("subset_ids")) r.subset_ids = j["subset_ids"].get<std::vector<std::string>>();
      if (j.contains("category")) r.category = j["category"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::SchemaError, std::string("query record: ") + e.what());
    }
    return r;
  }
};

struct Dataset {
  DatasetKind kind = DatasetKind::Generic;
  std::string split;
  std::vector<QueryRecord> records;
  std::vector<std::string> gallery_ids;
  std::map<std::string, std::string> image_paths;  // image id -> file
};

/// Published evaluation-split sizes (queries, gallery images).
struct SplitSize {
  std::size_t queries;
  std::size_t gallery;
};

inline std::optional<SplitSize> published_split_size(DatasetKind kind, std::string_view split,
                                                     std::string_view category = {}) {
  if (kind == DatasetKind::Cirr && split == "test1") return SplitSize{4148, 2315};
  if (kind == DatasetKind::Circo && split == "test") return SplitSize{800, 123403};
  if (kind == DatasetKind::FashionIQ && split == "val") {
    if (category == "shirt") return SplitSize{2038, 6346};
    if (category == "dress") return SplitSize{2017, 3817};
    if (category == "toptee") return SplitSize{1961, 5373};
  }
  return std::nullopt;
}

inline const std::vector<std::string>& fashioniq_categories() {
  static const std::vector<std::string> kCategories{"shirt", "dress", "toptee"};
  return kCategories;
}

namespace detail {

[[noreturn]] inline void schema_error(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::SchemaError, path + ": " + what);
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) schema_error(path.string(), "cannot open annotation file");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    schema_error(path.filename().string(), std::string("parse error: ") + e.what());
  }
}

/// Reads a string- or integer-valued id field.
inline std::string id_field(const nlohmann::json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) schema_error(path + "." + key, "missing");
  const auto& v = obj[key];
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  schema_error(path + "." + key, "expected string or integer id");
}

inline std::string text_field(const nlohmann::json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) schema_error(path + "." + key, "missing");
  if (!obj[key].is_string()) schema_error(path + "." + key, "expected string");
  auto s = obj[key].get<std::string>();
  if (s.empty()) schema_error(path + "." + key, "empty");
  return s;
}

inline const nlohmann::json& array_root(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array()) schema_error(path, "expected a JSON array of records");
  if (j.empty()) schema_error(path, "no records");
  return j;
}

}  // namespace detail

/// Checks one record against the gallery: targets present and not just the
/// reference, subset holds every target but not the reference.
inline void validate_record(const QueryRecord& r, const std::set<std::string>& gallery, const std::string& path,
                            bool require_gt = true) {
  if (r.modification_text.empty()) detail::schema_error(path + ".modification_text", "empty");
  if (require_gt && r.gt_target_ids.empty()) detail::schema_error(path + ".gt_target_ids", "no ground-truth target");
  if (!r.gt_target_ids.empty() &&
      std::all_of(r.gt_target_ids.begin(), r.gt_target_ids.end(), [&](const auto& id) { return id == r.reference_image_id; }))
    detail::schema_error(path + ".gt_target_ids", "target equals the reference image");
  if (!gallery.empty()) {
    for (const auto& id : r.gt_target_ids)
      if (!gallery.contains(id)) detail::schema_error(path + ".gt_target_ids", "'" + id + "' not in gallery");
  }
  if (r.subset_ids) {
    for (const auto& id : r.gt_target_ids)
      if (std::find(r.subset_ids->begin(), r.subset_ids->end(), id) == r.subset_ids->end())
        detail::schema_error(path + ".subset_ids", "subset omits target '" + id + "'");
    if (std::find(r.subset_ids->begin(), r.subset_ids->end(), r.reference_image_id) != r.subset_ids->end())
      detail::schema_error(path + ".subset_ids", "subset contains the reference image");
    if (!gallery.empty())
      for (const auto& id : *r.subset_ids)
        if (!gallery.contains(id)) detail::schema_error(path + ".subset_ids", "'" + id + "' not in gallery");
  }
}

/// CIRR layout: captions/cap.rc2.<split>.json and image_splits/split.rc2.<split>.json.
/// The hidden-label split ("test1") loads without targets.
inline Dataset load_cirr(const std::filesystem::path& root, const std::string& split) {
  Dataset ds;
  ds.kind = DatasetKind::Cirr;
  ds.split = split;
  std::string split_name = "split.rc2." + split + ".json";
  auto splits = detail::read_json_file(root / "image_splits" / split_name);
  if (!splits.is_object() || splits.empty()) detail::schema_error(split_name, "expected a non-empty object");
  for (const auto& [name, rel] : splits.items()) {
    if (!rel.is_string()) detail::schema_error(split_name + "." + name, "expected relative path string");
    ds.gallery_ids.push_back(name);
    ds.image_paths[name] = (root / rel.get<std::string>()).lexically_normal().string();
  }
  std::set<std::string> gallery(ds.gallery_ids.begin(), ds.gallery_ids.end());

  std::string cap_name = "cap.rc2." + split + ".json";
  const auto& caps = detail::read_json_file(root / "captions" / cap_name);
  detail::array_root(caps, cap_name);
  bool hidden = split == "test1";
  for (std::size_t i = 0; i < caps.size(); ++i) {
    const auto& c = caps[i];
    std::string path = cap_name + "[" + std::to_string(i) + "]";
    QueryRecord r;
    r.query_id = detail::id_field(c, "pairid", path);
    r.reference_image_id = detail::id_field(c, "reference", path);
    r.modification_text = detail::text_field(c, "caption", path);
    if (!hidden || c.contains("target_hard")) r.gt_target_ids = {detail::id_field(c, "target_hard", path)};
    if (!c.contains("img_set") || !c["img_set"].is_object() || !c["img_set"].contains("members") ||
        !c["img_set"]["members"].is_array())
      detail::schema_error(path + ".img_set.members", "missing member list");
    std::vector<std::string> members;
    for (const auto& m : c["img_set"]["members"]) {
      if (!m.is_string()) detail::schema_error(path + ".img_set.members", "expected string ids");
      if (m.get<std::string>() != r.reference_image_id) members.push_back(m.get<std::string>());
    }
    r.subset_ids = std::move(members);
    validate_record(r, gallery, path, !hidden);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

/// CIRCO layout: annotations/<split>.json plus the COCO unlabeled image list
/// at COCO2017_unlabeled/annotations/image_info_unlabeled2017.json.
inline Dataset load_circo(const std::filesystem::path& root, const std::string& split) {
  Dataset ds;
  ds.kind = DatasetKind::Circo;
  ds.split = split;
  auto coco_dir = root / "COCO2017_unlabeled";
  std::string info_name = "image_info_unlabeled2017.json";
  auto info = detail::read_json_file(coco_dir / "annotations" / info_name);
  if (!info.is_object() || !info.contains("images") || !info["images"].is_array())
    detail::schema_error(info_name + ".images", "missing image list");
  for (std::size_t i = 0; i < info["images"].size(); ++i) {
    const auto& img = info["images"][i];
    std::string path = info_name + ".images[" + std::to_string(i) + "]";
    auto id = detail::id_field(img, "id", path);
    ds.gallery_ids.push_back(id);
    ds.image_paths[id] = (coco_dir / "unlabeled2017" / detail::text_field(img, "file_name", path)).string();
  }
  std::set<std::string> gallery(ds.gallery_ids.begin(), ds.gallery_ids.end());

  std::string ann_name = split + ".json";
  const auto& anns = detail::read_json_file(root / "annotations" / ann_name);
  detail::array_root(anns, ann_name);
  bool hidden = split == "test";
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const auto& a = anns[i];
    std::string path = ann_name + "[" + std::to_string(i) + "]";
    QueryRecord r;
    r.query_id = detail::id_field(a, "id", path);
    r.reference_image_id = detail::id_field(a, "reference_img_id", path);
    r.modification_text = detail::text_field(a, "relative_caption", path);
    r.shared_concept = detail::text_field(a, "shared_concept", path);
    if (!hidden || a.contains("gt_img_ids")) {
      if (!a.contains("gt_img_ids") || !a["gt_img_ids"].is_array())
        detail::schema_error(path + ".gt_img_ids", "missing target list");
      for (const auto& g : a["gt_img_ids"]) {
        if (g.is_number_integer()) r.gt_target_ids.push_back(std::to_string(g.get<long long>()));
        else if (g.is_string()) r.gt_target_ids.push_back(g.get<std::string>());
        else detail::schema_error(path + ".gt_img_ids", "expected ids");
      }
    }
    validate_record(r, gallery, path, !hidden);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

/// FashionIQ layout: captions/cap.<category>.<split>.json, image_splits/split.<category>.<split>.json,
/// images/<name>.png. The two annotator captions are joined with " and ".
inline Dataset load_fashioniq(const std::filesystem::path& root, const std::string& category,
                              const std::string& split = "val") {
  Dataset ds;
  ds.kind = DatasetKind::FashionIQ;
  ds.split = split;
  std::string split_name = "split." + category + "." + split + ".json";
  auto names = detail::read_json_file(root / "image_splits" / split_name);
  detail::array_root(names, split_name);
  for (const auto& n : names) {
    if (!n.is_string()) detail::schema_error(split_name, "expected image names");
    ds.gallery_ids.push_back(n.get<std::string>());
    ds.image_paths[n.get<std::string>()] = (root / "images" / (n.get<std::string>() + ".png")).string();
  }
  std::set<std::string> gallery(ds.gallery_ids.begin(), ds.gallery_ids.end());

  std::string cap_name = "cap." + category + "." + split + ".json";
  const auto& caps = detail::read_json_file(root / "captions" / cap_name);
  detail::array_root(caps, cap_name);
  for (std::size_t i = 0; i < caps.size(); ++i) {
    const auto& c = caps[i];
    std::string path = cap_name + "[" + std::to_string(i) + "]";
    QueryRecord r;
    r.query_id = category + "-" + std::to_string(i);
    r.reference_image_id = detail::id_field(c, "candidate", path);
    r.gt_target_ids = {detail::id_field(c, "target", path)};
    if (!c.contains("captions") || !c["captions"].is_array() || c["captions"].size() != 2)
      detail::schema_error(path + ".captions", "expected exactly two captions");
    std::vector<std::string> parts;
    for (const auto& s : c["captions"]) {
      if (!s.is_string()) detail::schema_error(path + ".captions", "expected strings");
      parts.push_back(s.get<std::string>());
    }
    r.modification_text = parts[0] + " and " + parts[1];
    r.category = category;
    validate_record(r, gallery, path);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

// ---------------------------------------------------------------- JSON-lines

inline void write_records_jsonl(const std::filesystem::path& path, const std::vector<QueryRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write '" + path.string() + "'");
  for (const auto& r : records) out << r.to_json().dump() << '\n';
}

inline std::vector<QueryRecord> read_records_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open '" + path.string() + "'");
  std::vector<QueryRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(QueryRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::SchemaError, path.filename().string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace paracosm
