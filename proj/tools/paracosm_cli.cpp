// paracosm command-line driver: toy, preprocess, query, eval, ablate, serve.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "paracosm/paracosm.hpp"

namespace fs = std::filesystem;
using namespace paracosm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

/// A dataset plus what is needed to read its images and, for toy data,
/// to plant the mock embedder.
struct LoadedDataset {
  Dataset dataset;
  std::shared_ptr<ToyBenchmark> toy;
  ImageSource source;
  std::string label;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

/// toy:<dir> | cirr:<root>[:split] | circo:<root>[:split] | fashioniq:<root>:<category>[:split]
LoadedDataset load_dataset(const std::string& spec) {
  auto parts = split(spec, ':');
  if (parts.size() < 2) throw Error(ErrorKind::ConfigError, "dataset spec '" + spec + "' needs <kind>:<path>");
  const auto& kind = parts[0];
  LoadedDataset d;
  if (kind == "toy") {
    d.toy = std::make_shared<ToyBenchmark>(read_toy_benchmark(parts[1]));
    d.dataset = d.toy->dataset;
    auto toy = d.toy;
    d.source = [toy](const std::string& id) { return toy->image_source()(id); };
    return d;
  }
  if (kind == "cirr") d.dataset = load_cirr(parts[1], parts.size() > 2 ? parts[2] : "val");
  else if (kind == "circo") d.dataset = load_circo(parts[1], parts.size() > 2 ? parts[2] : "val");
  else if (kind == "fashioniq") {
    if (parts.size() < 3) throw Error(ErrorKind::ConfigError, "fashioniq spec needs a category");
    d.dataset = load_fashioniq(parts[1], parts[2], parts.size() > 3 ? parts[3] : "val");
    d.label = parts[2];
  } else {
    throw Error(ErrorKind::UnknownDataset, "unknown dataset kind '" + kind + "'");
  }
  auto paths = std::make_shared<std::map<std::string, std::string>>(d.dataset.image_paths);
  d.source = [paths](const std::string& id) {
    auto it = paths->find(id);
    if (it == paths->end()) throw Error(ErrorKind::UnknownImageId, "no image file for '" + id + "'");
    return load_source_image(id, it->second);
  };
  return d;
}

struct Runtime {
  RunConfig config;
  std::shared_ptr<MockTransport> mock;
  Backends backends;
  PromptLibrary prompts;
};

/// Backends for a run; toy datasets plant the shared mock and fold the
/// planting into embedding cache keys.
Runtime make_runtime(const RunConfig& config, const std::vector<LoadedDataset>& datasets) {
  Runtime rt{config, nullptr, {}, config.prompts()};
  rt.mock = std::make_shared<MockTransport>(config.seed);
  nlohmann::json extra;
  for (const auto& d : datasets)
    if (d.toy) {
      if (d.toy->options.mock_seed != config.seed)
        std::cerr << "warning: toy data was planted for mock seed " << d.toy->options.mock_seed << ", run seed is "
                  << config.seed << "\n";
      d.toy->plant_into(*rt.mock);
      extra["planting"] = d.toy->planting_digest();
    }
  rt.backends = make_backends(config, rt.mock, extra.is_null() ? nlohmann::json() : extra);
  return rt;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write '" + path.string() + "'");
}

std::vector<MetricSpec> parse_metrics(const std::vector<std::string>& keys) {
  std::vector<MetricSpec> out;
  for (const auto& k : keys)
    for (const auto& item : split(k, ','))
      if (!item.empty()) out.push_back(parse_metric(item));
  return out;
}

// ---------------------------------------------------------------- commands

struct ToyArgs {
  std::string out;
  ToyOptions options;
  std::string kind = "generic";
};

int cmd_toy(const ToyArgs& a) {
  auto opts = a.options;
  opts.kind = parse_dataset_kind(a.kind);
  auto toy = generate_toy_benchmark(opts, PromptLibrary::load_default());
  write_toy_benchmark(a.out, toy);
  std::cout << "toy benchmark: " << toy.dataset.records.size() << " queries, " << toy.dataset.gallery_ids.size()
            << " gallery images, " << toy.planted_targets.size() << " planted -> " << a.out << "\n";
  return kExitOk;
}

struct PreprocessArgs {
  std::string config;
  std::string dataset;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_preprocess(const PreprocessArgs& a) {
  auto config = RunConfig::load(a.config);
  if (a.seed) config.seed = *a.seed;
  auto data = load_dataset(a.dataset);
  auto rt = make_runtime(config, {data});
  auto options = config.pipeline_options();
  options.dataset_kind = data.dataset.kind;
  auto result = preprocess_gallery(data.dataset.gallery_ids, data.source, rt.backends, rt.prompts, options);

  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : result.failures) failures.push_back(f.to_json());
  nlohmann::json run{{"command", "preprocess"}, {"config", config.to_json()},
                     {"template_digests", rt.prompts.digests()}, {"backends", rt.backends.describe()},
                     {"cost", result.cost.to_json()}, {"failures", failures}};
  std::cout << result.cost.to_text();
  for (const auto& f : result.failures) std::cerr << "failed: " << f.item_id << ": " << f.message << "\n";
  if (result.threshold_exceeded) {
    std::cerr << "failure ratio above threshold (" << result.failures.size() << "/" << result.cost.items
              << "); store not written\n";
    write_text(fs::path(a.out + ".failed.json"), run.dump(2) + "\n");
    return kExitRuntime;
  }
  write_store(a.out, result.store);
  write_text(fs::path(a.out) / "run_manifest.json", run.dump(2) + "\n");
  std::cout << "store: " << a.out << " (n=" << result.store.manifest.n << ", dim=" << result.store.manifest.dim
            << ")\n";
  return kExitOk;
}

struct QueryArgs {
  std::string config;
  std::string store;
  std::string image;
  std::string text;
  std::string shared_concept;
  std::optional<double> lambda;
  std::size_t k = 10;
  std::string output;
  std::string plant;
  std::optional<std::uint64_t> seed;
};

int cmd_query(const QueryArgs& a) {
  auto config = RunConfig::load(a.config);
  if (a.seed) config.seed = *a.seed;
  if (a.lambda) config.ablation.lambda = *a.lambda;
  config.ablation.validate();
  auto store = read_store(a.store);
  std::vector<LoadedDataset> planted;
  if (!a.plant.empty()) planted.push_back(load_dataset(a.plant));
  auto rt = make_runtime(config, planted);
  auto kind = parse_dataset_kind(store.manifest.dataset_kind);

  auto bytes = read_file_bytes(a.image);
  auto ref = load_source_image(fs::path(a.image).stem().string(), a.image);
  QueryRecord record;
  record.query_id = "cli-" + sha256_hex(bytes).substr(0, 8);
  record.reference_image_id = ref.image_id;
  record.modification_text = a.text;
  if (!a.shared_concept.empty()) record.shared_concept = a.shared_concept;

  auto bundle = process_query(record, ref, rt.backends, rt.prompts, kind, config.ablation);
  auto results = retrieve(bundle, store, a.k, config.workers);

  std::ofstream file;
  std::ostream* out = &std::cout;
  fs::path beside = ".";
  if (!a.output.empty()) {
    fs::path p(a.output);
    if (p.has_parent_path()) {
      fs::create_directories(p.parent_path());
      beside = p.parent_path();
    }
    file.open(p, std::ios::trunc);
    out = &file;
  }
  nlohmann::json meta{{"query_id", record.query_id}, {"lambda", config.ablation.lambda},
                      {"query_terms", config.ablation.query_terms.names()}, {"k", a.k}};
  if (bundle.mental) {
    auto path = beside / (bundle.mental->image_id + image_extension(bundle.mental->pixel_data));
    std::ofstream img(path, std::ios::binary | std::ios::trunc);
    img.write(reinterpret_cast<const char*>(bundle.mental->pixel_data.data()),
              static_cast<std::streamsize>(bundle.mental->pixel_data.size()));
    meta["mental_image"] = path.string();
  }
  if (bundle.query_description) meta["description"] = *bundle.query_description;
  *out << meta.dump() << "\n";
  for (const auto& r : results)
    *out << nlohmann::json{{"rank", r.rank}, {"image_id", r.image_id}, {"score", r.score}}.dump() << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string config;
  std::vector<std::string> datasets;
  std::vector<std::string> stores;
  std::vector<std::string> metrics;
  std::string report;
  std::string grid;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

/// Loads paired datasets and stores, then processes every query.
struct EvalSetup {
  RunConfig config;
  std::vector<LoadedDataset> data;
  std::vector<FeatureStore> stores;
  std::vector<std::vector<QueryBundle>> bundles;
  DatasetKind kind = DatasetKind::Generic;
  std::uint64_t query_requests = 0;
  std::uint64_t replay_generation_calls = 0;
};

EvalSetup prepare_eval(const EvalArgs& a, QueryTermSet extra_terms, std::optional<AblationConfig> override = {}) {
  if (a.datasets.size() != a.stores.size())
    throw Error(ErrorKind::ConfigError, "each --dataset needs a matching --store");
  EvalSetup s;
  s.config = RunConfig::load(a.config);
  if (a.seed) s.config.seed = *a.seed;
  if (override) s.config.ablation = *override;
  for (const auto& spec : a.datasets) s.data.push_back(load_dataset(spec));
  for (const auto& st : a.stores) s.stores.push_back(read_store(st));
  s.kind = s.data.front().dataset.kind;
  auto rt = make_runtime(s.config, s.data);
  for (const auto& d : s.data) {
    auto before = rt.backends.total_requests();
    s.bundles.push_back(process_queries(d.dataset.records, d.source, rt.backends, rt.prompts, d.dataset.kind,
                                        s.config.ablation, extra_terms, s.config.workers));
    s.query_requests += rt.backends.total_requests() - before;
  }
  return s;
}

int cmd_eval(const EvalArgs& a) {
  auto metrics = a.metrics.empty() ? std::nullopt : std::optional(parse_metrics(a.metrics));
  auto s = prepare_eval(a, {});
  std::vector<std::vector<QueryRecord>> records(s.data.size());
  std::vector<std::vector<std::vector<double>>> features(s.data.size());
  std::vector<EvalPart> parts;
  for (std::size_t p = 0; p < s.data.size(); ++p) {
    if (encoder_family(s.stores[p].manifest.encoder_id) != encoder_family(s.config.backends.at(Capability::EmbedText).encoder_id()))
      throw Error(ErrorKind::EncoderMismatch, "store encoder '" + s.stores[p].manifest.encoder_id +
                                                  "' does not match the configured text encoder");
    for (const auto& b : s.bundles[p]) {
      records[p].push_back(b.record);
      features[p].push_back(b.feature.q.values);
    }
  }
  for (std::size_t p = 0; p < s.data.size(); ++p)
    parts.push_back(EvalPart{s.data.size() > 1 ? s.data[p].label : std::string{}, records[p], features[p],
                             &s.stores[p].fused});
  auto report = evaluate(s.kind, parts, s.stores.front().manifest.config_digest, metrics);
  std::cout << report.to_table();
  std::cout << s.query_requests << " backend calls\n";
  if (!a.report.empty()) write_text(a.report, report.to_json().dump(2) + "\n");
  return kExitOk;
}

int cmd_ablate(const EvalArgs& a) {
  auto grid = AblationGrid::load(a.grid);
  auto metrics = a.metrics.empty() ? std::nullopt : std::optional(parse_metrics(a.metrics));
  auto s = prepare_eval(a, grid.query_terms_needed());
  std::vector<ReplayPart> parts;
  for (std::size_t p = 0; p < s.data.size(); ++p)
    parts.push_back(ReplayPart{s.data.size() > 1 ? s.data[p].label : std::string{}, s.bundles[p], &s.stores[p]});

  nlohmann::json summary = nlohmann::json::array();
  for (std::size_t i = 0; i < grid.rows.size(); ++i) {
    const auto& row = grid.rows[i];
    auto report = replay_config(s.kind, parts, row.config, metrics);
    std::cout << "[" << (i + 1) << "/" << grid.rows.size() << "] " << row.label << "\n" << report.to_table();
    if (!a.out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "row-%02zu.json", i + 1);
      auto j = report.to_json();
      j["label"] = row.label;
      j["config"] = row.config.to_json();
      write_text(fs::path(a.out_dir) / name, j.dump(2) + "\n");
    }
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [k, v] : report.metrics) m[k] = v;
    summary.push_back({{"label", row.label}, {"config", row.config.to_json()}, {"metrics", m}});
  }
  if (!a.out_dir.empty()) write_text(fs::path(a.out_dir) / "summary.json", summary.dump(2) + "\n");
  std::cout << grid.rows.size() << " rows replayed; " << s.query_requests
            << " backend calls while processing queries, 0 during replay\n";
  return kExitOk;
}

struct ServeArgs {
  std::string config;
  std::string store;
  std::string dataset;
  std::string listen = "127.0.0.1:8080";
  std::size_t k = kDefaultServiceK;
  bool async = false;
  std::optional<std::uint64_t> seed;
};

int cmd_serve(const ServeArgs& a) {
  auto config = RunConfig::load(a.config);
  if (a.seed) config.seed = *a.seed;
  auto store = std::make_shared<const FeatureStore>(read_store(a.store));
  std::vector<LoadedDataset> data;
  if (!a.dataset.empty()) data.push_back(load_dataset(a.dataset));
  auto rt = make_runtime(config, data);

  ImageLookup lookup;
  if (!data.empty()) {
    auto source = data.front().source;
    lookup = [source](const std::string& id) -> std::optional<Bytes> {
      try {
        return source(id).pixel_data;
      } catch (const Error&) {
        return std::nullopt;
      }
    };
  }
  ServiceOptions options;
  options.dataset_kind = parse_dataset_kind(store->manifest.dataset_kind);
  options.k = a.k;
  options.workers = config.workers;
  options.async_queries = a.async || !config.all_mock();
  QueryService service(store, rt.backends, rt.prompts, lookup, options);

  auto colon = a.listen.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorKind::ConfigError, "--listen expects host:port");
  auto host = a.listen.substr(0, colon);
  int port = std::stoi(a.listen.substr(colon + 1));
  httplib::Server server;
  mount_routes(server, service);
  std::cout << "serving " << store->manifest.n << " images on http://" << a.listen << "\n" << std::flush;
  if (!server.listen(host, port)) throw Error(ErrorKind::IoFailure, "cannot listen on " + a.listen);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-free composed image retrieval"};
  app.require_subcommand(1);

  ToyArgs toy;
  auto* c_toy = app.add_subcommand("toy", "Generate a seeded toy benchmark");
  c_toy->add_option("--out", toy.out, "Output directory")->required();
  c_toy->add_option("--seed", toy.options.seed, "Benchmark seed");
  c_toy->add_option("--queries", toy.options.n_queries, "Number of queries");
  c_toy->add_option("--gallery", toy.options.n_gallery, "Number of gallery images");
  c_toy->add_option("--plant-rate", toy.options.plant_rate, "Fraction of planted queries");
  c_toy->add_option("--image-size", toy.options.image_size, "Toy raster edge length");
  c_toy->add_option("--resolution", toy.options.generation_resolution, "Generated artifact resolution");
  c_toy->add_option("--mock-seed", toy.options.mock_seed, "Seed of the mock backends the queries are planted for");
  c_toy->add_option("--subset-size", toy.options.subset_size, "CIRR-style subset size (0 = none)");
  c_toy->add_option("--kind", toy.kind, "Dataset kind (generic, cirr, circo, fashioniq)");
  bool noisy = false;
  c_toy->add_flag("--noisy-counterparts", noisy, "Do not alias synthetic counterparts and captions to real images");

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "Build a feature store for a gallery");
  c_pre->add_option("--config", pre.config, "Run configuration file")->required();
  c_pre->add_option("--dataset", pre.dataset, "Dataset spec, e.g. toy:DIR or cirr:ROOT:val")->required();
  c_pre->add_option("--out", pre.out, "Store directory")->required();
  c_pre->add_option("--seed", pre.seed, "Override the run seed");

  QueryArgs q;
  auto* c_query = app.add_subcommand("query", "Run one composed query against a store");
  c_query->add_option("--config", q.config, "Run configuration file")->required();
  c_query->add_option("--store", q.store, "Store directory")->required();
  c_query->add_option("--image", q.image, "Reference image")->required();
  c_query->add_option("--text", q.text, "Modification text")->required();
  c_query->add_option("--shared-concept", q.shared_concept, "Shared concept (CIRCO)");
  c_query->add_option("--lambda", q.lambda, "Fusion weight of the visual terms");
  c_query->add_option("-k", q.k, "Number of results");
  c_query->add_option("--output", q.output, "JSON-lines output file (default stdout)");
  c_query->add_option("--plant", q.plant, "Toy dataset whose planting the mock should use");
  c_query->add_option("--seed", q.seed, "Override the run seed");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a store on a dataset");
  EvalArgs ab;
  auto* c_ablate = app.add_subcommand("ablate", "Replay an ablation grid from cached features");
  for (auto [cmd, args] : {std::pair{c_eval, &ev}, std::pair{c_ablate, &ab}}) {
    cmd->add_option("--config", args->config, "Run configuration file")->required();
    cmd->add_option("--dataset", args->datasets, "Dataset spec (repeatable, paired with --store)")->required();
    cmd->add_option("--store", args->stores, "Store directory (repeatable)")->required();
    cmd->add_option("--metrics", args->metrics, "Metric keys such as R@1,R_Subset@2,mAP@5");
    cmd->add_option("--seed", args->seed, "Override the run seed");
  }
  c_eval->add_option("--report", ev.report, "Report JSON path");
  c_ablate->add_option("--grid", ab.grid, "Grid file")->required();
  c_ablate->add_option("--out-dir", ab.out_dir, "Directory for per-row reports");

  ServeArgs sv;
  auto* c_serve = app.add_subcommand("serve", "Serve the HTTP API");
  c_serve->add_option("--config", sv.config, "Run configuration file")->required();
  c_serve->add_option("--store", sv.store, "Store directory")->required();
  c_serve->add_option("--dataset", sv.dataset, "Dataset spec for gallery images and planting");
  c_serve->add_option("--listen", sv.listen, "Bind address host:port");
  c_serve->add_option("-k", sv.k, "Results per query");
  c_serve->add_flag("--async", sv.async, "Always answer queries with 202 and poll");
  c_serve->add_option("--seed", sv.seed, "Override the run seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*c_toy) {
      toy.options.noiseless_counterparts = !noisy;
      return cmd_toy(toy);
    }
    if (*c_pre) return cmd_preprocess(pre);
    if (*c_query) return cmd_query(q);
    if (*c_eval) return cmd_eval(ev);
    if (*c_ablate) return cmd_ablate(ab);
    if (*c_serve) return cmd_serve(sv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::ConfigError:
      case ErrorKind::InvalidArgument:
      case ErrorKind::UnknownDataset:
      case ErrorKind::InvalidRate: return kExitUsage;
      default: return kExitRuntime;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
