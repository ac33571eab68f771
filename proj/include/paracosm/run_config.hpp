#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>

#include "json.hpp"
#include "paracosm/ablation.hpp"
#include "paracosm/backends.hpp"
#include "paracosm/http_transport.hpp"
#include "paracosm/pipeline.hpp"
#include "paracosm/prompts.hpp"

namespace paracosm {

/// `[section]` headers and `key = value` lines; `#` starts a comment.
using KeyValueSections = std::map<std::string, std::map<std::string, std::string>>;

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline KeyValueSections parse_key_values(std::string_view text) {
  KeyValueSections out;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // '#' inside a JSON value (params) is unlikely; values with '#' must not be commented.
    if (auto hash = line.find('#'); hash != std::string::npos && line.find('{') == std::string::npos)
      line = line.substr(0, hash);
    auto t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw Error(ErrorKind::ConfigError, "line " + std::to_string(lineno) + ": bad section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      out[section];
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::ConfigError, "line " + std::to_string(lineno) + ": expected key = value");
    auto key = trim(std::string_view(t).substr(0, eq));
    auto value = trim(std::string_view(t).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    out[section][key] = value;
  }
  return out;
}

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

/// Everything that shapes a run: fusion config, backends, run parameters.
struct RunConfig {
  AblationConfig ablation;
  GalleryTermSet stored_terms;
  DatasetKind dataset_kind = DatasetKind::Generic;
  std::uint64_t seed = 0;
  std::string cache_dir;
  std::string templates_dir;
  std::size_t workers = kDefaultWorkers;
  double failure_threshold = kDefaultFailureThreshold;
  std::ptrdiff_t max_in_flight = kDefaultMaxInFlight;
  int resolution = kDefaultResolution;
  std::map<Capability, BackendDescriptor> backends;

  PipelineOptions pipeline_options() const {
    return PipelineOptions{ablation, dataset_kind, workers, failure_threshold, stored_terms};
  }

  nlohmann::json to_json() const {
    nlohmann::json b = nlohmann::json::object();
    for (const auto& [c, d] : backends) b[std::string(capability_name(c))] = d.to_json();
    return {{"ablation", ablation.to_json()}, {"stored_terms", stored_terms.names()},
            {"dataset_kind", to_string(dataset_kind)}, {"seed", seed},
            {"cache_dir", cache_dir}, {"templates_dir", templates_dir},
            {"workers", workers}, {"failure_threshold", failure_threshold},
            {"max_in_flight", max_in_flight}, {"resolution", resolution}, {"backends", b}};
  }

  static RunConfig parse(std::string_view text) {
    auto kv = parse_key_values(text);
    RunConfig c;
    auto num = [](const std::string& where, const std::string& v) {
      try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
      } catch (const std::exception&) {
        throw Error(ErrorKind::ConfigError, where + ": expected a number, got '" + v + "'");
      }
    };
    auto unknown = [](const std::string& section, const std::string& key) {
      throw Error(ErrorKind::ConfigError, "unknown key '" + key + "' in [" + section + "]");
    };

    for (const auto& [key, v] : kv["run"]) {
      if (key == "seed") c.seed = static_cast<std::uint64_t>(num("run.seed", v));
      else if (key == "cache_dir") c.cache_dir = v;
      else if (key == "templates_dir") c.templates_dir = v;
      else if (key == "workers") c.workers = static_cast<std::size_t>(num("run.workers", v));
      else if (key == "failure_threshold") c.failure_threshold = num("run.failure_threshold", v);
      else if (key == "max_in_flight") c.max_in_flight = static_cast<std::ptrdiff_t>(num("run.max_in_flight", v));
      else if (key == "resolution") c.resolution = static_cast<int>(num("run.resolution", v));
      else if (key == "dataset_kind") c.dataset_kind = parse_dataset_kind(v);
      else unknown("run", key);
    }
    for (const auto& [key, v] : kv["fusion"]) {
      if (key == "query_terms") c.ablation.query_terms = QueryTermSet::parse(split_list(v));
      else if (key == "gallery_terms") c.ablation.gallery_terms = GalleryTermSet::parse(split_list(v));
      else if (key == "stored_terms") c.stored_terms = GalleryTermSet::parse(split_list(v));
      else if (key == "lambda") c.ablation.lambda = num("fusion.lambda", v);
      else if (key == "beta") c.ablation.beta = num("fusion.beta", v);
      else unknown("fusion", key);
    }
    c.ablation.validate();

    for (auto cap : kAllCapabilities) {
      BackendDescriptor d;
      d.capability = cap;
      d.backend_id = std::string(capability_name(cap));
      d.resolution = c.resolution;
      if (cap == Capability::EmbedImage || cap == Capability::EmbedText) d.dim = 64;
      std::string section = "backend." + std::string(capability_name(cap));
      if (auto it = kv.find(section); it != kv.end()) {
        for (const auto& [key, v] : it->second) {
          if (key == "endpoint") d.endpoint = v;
          else if (key == "model") d.model_name = v;
          else if (key == "id") d.backend_id = v;
          else if (key == "timeout_s") d.timeout_s = num(section + ".timeout_s", v);
          else if (key == "max_retries") d.max_retries = static_cast<int>(num(section + ".max_retries", v));
          else if (key == "resolution") d.resolution = static_cast<int>(num(section + ".resolution", v));
          else if (key == "dim") d.dim = static_cast<std::size_t>(num(section + ".dim", v));
          else if (key == "params") {
            try {
              d.params = nlohmann::json::parse(v);
            } catch (const nlohmann::json::exception& e) {
              throw Error(ErrorKind::ConfigError, section + ".params: " + e.what());
            }
          } else unknown(section, key);
        }
      }
      if (const char* env = std::getenv(endpoint_env_var(cap).c_str()); env != nullptr && *env != '\0') d.endpoint = env;
      d.validate();
      c.backends[cap] = d;
    }
    for (const auto& [section, _] : kv) {
      if (section.empty() || section == "run" || section == "fusion") continue;
      if (section.rfind("backend.", 0) == 0 && parse_capability(section.substr(8))) continue;
      throw Error(ErrorKind::ConfigError, "unknown section [" + section + "]");
    }
    if (const char* env = std::getenv("PARACOSM_CACHE_DIR"); env != nullptr && *env != '\0') c.cache_dir = env;
    return c;
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ConfigError, "cannot read config '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }

  PromptLibrary prompts() const {
    return templates_dir.empty() ? PromptLibrary::load_default() : PromptLibrary::load(templates_dir);
  }

  bool all_mock() const {
    for (const auto& [c, d] : backends)
      if (!d.is_mock()) return false;
    return true;
  }
};

/// Instantiates one client per configured capability. Mock endpoints share
/// `mock` (created from the run seed when null); others use HTTP.
inline Backends make_backends(const RunConfig& config, std::shared_ptr<MockTransport>& mock,
                              nlohmann::json extra_embed_params = nullptr) {
  if (!mock) mock = std::make_shared<MockTransport>(config.seed);
  auto http = std::make_shared<HttpTransport>();
  std::shared_ptr<const ContentCache> cache;
  if (!config.cache_dir.empty()) cache = std::make_shared<ContentCache>(config.cache_dir);
  Backends b;
  for (const auto& [cap, desc] : config.backends) {
    auto d = desc;
    if (d.is_mock()) d.params["mock_seed"] = config.seed;
    if (!extra_embed_params.is_null() && (cap == Capability::EmbedImage || cap == Capability::EmbedText))
      d.params.update(extra_embed_params);
    std::shared_ptr<Transport> transport = d.is_mock() ? std::static_pointer_cast<Transport>(mock)
                                                       : std::static_pointer_cast<Transport>(http);
    b.clients[cap] = std::make_shared<BackendClient>(d, transport, cache, RetryPolicy{}, config.max_in_flight);
  }
  return b;
}

}  // namespace paracosm
