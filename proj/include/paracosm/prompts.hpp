#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"
#include "paracosm/digest.hpp"
#include "paracosm/errors.hpp"
#include "paracosm/image.hpp"

namespace paracosm {

enum class DatasetKind { Cirr, Circo, FashionIQ, Generic };

inline std::string_view to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::Cirr: return "cirr";
    case DatasetKind::Circo: return "circo";
    case DatasetKind::FashionIQ: return "fashioniq";
    case DatasetKind::Generic: return "generic";
  }
  return "";
}

inline DatasetKind parse_dataset_kind(std::string_view name) {
  for (auto k : {DatasetKind::Cirr, DatasetKind::Circo, DatasetKind::FashionIQ, DatasetKind::Generic})
    if (to_string(k) == name) return k;
  throw Error(ErrorKind::UnknownDataset, "unknown dataset kind '" + std::string(name) + "'");
}

enum class PromptStage { QueryEdit, BriefCaption, DetailedCaption };

inline std::string_view to_string(PromptStage s) {
  switch (s) {
    case PromptStage::QueryEdit: return "query_edit";
    case PromptStage::BriefCaption: return "brief_caption";
    case PromptStage::DetailedCaption: return "detailed_caption";
  }
  return "";
}

struct PromptTemplate {
  std::string template_id;  // "<dataset_kind>.<stage>"
  DatasetKind dataset_kind = DatasetKind::Generic;
  PromptStage stage = PromptStage::QueryEdit;
  std::string body;
};

/// Substitutes {name} placeholders. Every placeholder must be bound.
inline std::string substitute(std::string_view body, const std::map<std::string, std::string>& bindings,
                              std::string_view template_id = {}) {
  std::string out;
  out.reserve(body.size());
  std::size_t i = 0;
  while (i < body.size()) {
    if (body[i] == '{') {
      auto close = body.find('}', i);
      if (close != std::string_view::npos) {
        std::string name(body.substr(i + 1, close - i - 1));
        auto it = bindings.find(name);
        if (it == bindings.end())
          throw Error(ErrorKind::UnboundPlaceholder,
                      "placeholder {" + name + "} unbound in template '" + std::string(template_id) + "'");
        out += it->second;
        i = close + 1;
        continue;
      }
    }
    out += body[i++];
  }
  return out;
}

/// Immutable set of prompt templates loaded from `<dir>/<kind>.<stage>.txt`.
/// Lookups for a dataset kind without its own file fall back to "generic".
class PromptLibrary {
 public:
  static PromptLibrary load(const std::filesystem::path& dir) {
    PromptLibrary lib;
    lib.dir_ = dir;
    for (auto kind : {DatasetKind::Generic, DatasetKind::Cirr, DatasetKind::Circo, DatasetKind::FashionIQ}) {
      for (auto stage : {PromptStage::QueryEdit, PromptStage::BriefCaption, PromptStage::DetailedCaption}) {
        std::string id = std::string(to_string(kind)) + "." + std::string(to_string(stage));
        auto path = dir / (id + ".txt");
        if (!std::filesystem::exists(path)) continue;
        auto bytes = read_file_bytes(path.string());
        std::string body(bytes.begin(), bytes.end());
        while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();
        lib.templates_[id] = PromptTemplate{id, kind, stage, body};
      }
    }
    for (auto stage : {PromptStage::QueryEdit, PromptStage::BriefCaption, PromptStage::DetailedCaption}) {
      if (!lib.find(DatasetKind::Generic, stage))
        throw Error(ErrorKind::ConfigError, "template directory '" + dir.string() + "' lacks generic." +
                                                std::string(to_string(stage)) + ".txt");
    }
    return lib;
  }

  /// Directory from PARACOSM_TEMPLATE_DIR, else the one shipped with the source tree.
  static PromptLibrary load_default() {
    if (const char* env = std::getenv("PARACOSM_TEMPLATE_DIR")) return load(env);
#ifdef PARACOSM_DEFAULT_TEMPLATE_DIR
    return load(PARACOSM_DEFAULT_TEMPLATE_DIR);
#else
    return load("templates");
#endif
  }

  const PromptTemplate& get(DatasetKind kind, PromptStage stage) const {
    if (const auto* t = find(kind, stage)) return *t;
    return *find(DatasetKind::Generic, stage);
  }

  std::string render_query_edit(DatasetKind kind, const std::string& modification_text,
                                const std::optional<std::string>& shared_concept = std::nullopt) const {
    if (modification_text.empty()) throw Error(ErrorKind::PreconditionFailed, "modification text is empty");
    if (kind == DatasetKind::Circo && (!shared_concept || shared_concept->empty()))
      throw Error(ErrorKind::MissingSharedConcept, "CIRCO queries require a shared concept");
    std::map<std::string, std::string> bindings{{"modification_text", modification_text}};
    if (shared_concept) bindings["shared_concept"] = *shared_concept;
    const auto& t = get(kind, PromptStage::QueryEdit);
    return substitute(t.body, bindings, t.template_id);
  }

  std::string render_query_edit(std::string_view kind, const std::string& modification_text,
                                const std::optional<std::string>& shared_concept = std::nullopt) const {
    return render_query_edit(parse_dataset_kind(kind), modification_text, shared_concept);
  }

  std::string render_brief_caption() const {
    const auto& t = get(DatasetKind::Generic, PromptStage::BriefCaption);
    return substitute(t.body, {}, t.template_id);
  }

  std::string render_detailed_caption() const {
    const auto& t = get(DatasetKind::Generic, PromptStage::DetailedCaption);
    return substitute(t.body, {}, t.template_id);
  }

  /// template_id -> sha256 of the body.
  std::map<std::string, std::string> digests() const {
    std::map<std::string, std::string> out;
    for (const auto& [id, t] : templates_) out[id] = sha256_hex(t.body);
    return out;
  }

  /// One digest over all templates; any wording change alters it.
  std::string combined_digest() const {
    Sha256 h;
    for (const auto& [id, d] : digests()) h.field(id).field(d);
    return h.hex();
  }

  const std::filesystem::path& directory() const { return dir_; }

 private:
  const PromptTemplate* find(DatasetKind kind, PromptStage stage) const {
    auto it = templates_.find(std::string(to_string(kind)) + "." + std::string(to_string(stage)));
    return it == templates_.end() ? nullptr : &it->second;
  }

  std::filesystem::path dir_;
  std::map<std::string, PromptTemplate> templates_;
};

}  // namespace paracosm
