#include "pathoscope/workbench/commands.hpp"

#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pathoscope/core/binary_io.hpp"
#include "pathoscope/core/error.hpp"
#include "pathoscope/core/hashing.hpp"
#include "pathoscope/core/rng.hpp"
#include "pathoscope/data/imageio.hpp"
#include "pathoscope/data/manifest.hpp"
#include "pathoscope/data/patch_cache.hpp"
#include "pathoscope/eval/extra_trees.hpp"
#include "pathoscope/eval/report.hpp"
#include "pathoscope/eval/shape_features.hpp"
#include "pathoscope/synth/synthgen.hpp"
#include "pathoscope/workbench/config.hpp"
#include "pathoscope/workbench/server.hpp"

namespace pathoscope::workbench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  fs::path run_dir = ".";
  std::string config;
  std::optional<std::uint64_t> seed;

  KeyValues load_config() const {
    KeyValues kv = config.empty() ? KeyValues{} : KeyValues::load(config);
    if (seed) kv.set("seed", std::to_string(*seed));
    return kv;
  }
  fs::path resolve(const std::string& given, const fs::path& fallback) const {
    return given.empty() ? run_dir / fallback : fs::path(given);
  }
};

std::string relative_key(const fs::path& p, const fs::path& base) {
  const auto rel = fs::relative(p, base);
  return (rel.empty() || rel.native().starts_with("..") ? p : rel).generic_string();
}

// run.json: per-step config text, config hash, input and artifact hashes.
// Nothing time-dependent is recorded, so reruns hash identically.
class RunRecord {
 public:
  explicit RunRecord(fs::path run_dir) : dir_(std::move(run_dir)) {
    const auto path = dir_ / paths::kRunRecord;
    if (fs::exists(path)) {
      const auto bytes = read_file_bytes(path);
      doc_ = json::parse(bytes.begin(), bytes.end(), nullptr, false);
      if (doc_.is_discarded() || !doc_.is_object()) throw Error(ErrorCode::ParseError, path.string() + " is not valid JSON");
    }
    doc_["tool"] = "pathoscope";
    doc_["version"] = kToolVersion;
    doc_["formats"] = {{"manifest", data::Manifest::kVersion},
                       {"patch_cache", data::kPatchCacheVersion},
                       {"model", model::kModelVersion}};
  }

  void step(const std::string& name, const std::string& config_text, const std::vector<fs::path>& inputs,
            const std::vector<fs::path>& artifacts) {
    json s;
    s["config"] = config_text;
    s["config_hash"] = sha256_hex(config_text);
    s["inputs"] = json::object();
    for (const auto& p : inputs) s["inputs"][relative_key(p, dir_)] = sha256_file(p);
    s["artifacts"] = json::object();
    for (const auto& p : artifacts) s["artifacts"][relative_key(p, dir_)] = sha256_file(p);
    doc_["steps"][name] = s;
    fs::create_directories(dir_);
    write_file_atomic(dir_ / paths::kRunRecord, doc_.dump(2) + "\n");
  }

 private:
  fs::path dir_;
  json doc_ = json::object();
};

data::PatchCache load_cache_or_explain(const fs::path& path) {
  if (!fs::exists(path)) {
    throw Error(ErrorCode::NotFound, "missing artifact: patch cache " + path.string() + " (run build-patches first)");
  }
  return data::load_patch_cache(path);
}

model::TrainedModel load_model_or_explain(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::NotFound, "missing artifact: model " + path.string() + " (run train first)");
  return model::load_model(path);
}

data::Manifest load_manifest_or_explain(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::NotFound, "missing artifact: manifest " + path.string());
  return data::load_manifest(path);
}

void cmd_synth(const Common& c, std::ostream& out) {
  const auto cfg = synth_config_from(c.load_config());
  const auto dir = c.run_dir / paths::kCorpusManifest.parent_path();
  const auto corpus = synth::generate(cfg);
  synth::write_corpus(dir, corpus);
  std::vector<fs::path> artifacts{dir / "manifest.json"};
  for (const auto& e : corpus.manifest.images) artifacts.push_back(dir / e.file);
  RunRecord(c.run_dir).step("synth", synth_config_text(cfg), {}, artifacts);
  out << "synth: wrote " << corpus.images.size() << " images to " << dir.string() << "\n";
}

void cmd_build_patches(const Common& c, const std::string& manifest_arg, std::ostream& out) {
  const auto cfg = build_config_from(c.load_config());
  const auto manifest_path = c.resolve(manifest_arg, paths::kCorpusManifest);
  load_manifest_or_explain(manifest_path);
  const auto corpus = data::load_corpus(manifest_path);
  const data::PatchCache cache{cfg, data::split_50_50(corpus, cfg)};
  const auto target = c.run_dir / paths::kPatchCache;
  fs::create_directories(c.run_dir);
  data::save_patch_cache(target, cache);
  RunRecord(c.run_dir).step("build-patches", build_config_text(cfg), {manifest_path}, {target});
  const auto& s = cache.split.stats;
  out << "build-patches: train " << cache.split.train.size() << ", test " << cache.split.test.size()
      << " patches; positives " << s.positives_original << " (+" << s.positives_skipped_at_border
      << " skipped at border), negatives kept " << s.negatives_kept << " of " << s.negatives_sampled << "\n";
}

void cmd_train(const Common& c, const std::string& patches_arg, std::optional<int> epochs, std::ostream& out) {
  auto kv = c.load_config();
  if (epochs) kv.set("epochs", std::to_string(*epochs));
  const auto cfg = train_config_from(kv);
  const auto cache_path = c.resolve(patches_arg, paths::kPatchCache);
  const auto cache = load_cache_or_explain(cache_path);
  if (cache.split.train.empty()) {
    throw Error(ErrorCode::NotFound, "missing artifact: patch cache " + cache_path.string() + " holds no training patches");
  }
  auto m = model::build_network(cache.config.spec.patch_size, derive_seed(cfg.seed, "init"));
  m.provenance.patch_spec = cache.config.spec;
  m.provenance.dataset_hash = model::dataset_hash(cache.split, cache.config);
  m = model::train(std::move(m), cache.split, cfg, [&](const model::EpochEvent& e) {
    out << "epoch " << e.epoch << "/" << e.epochs << " loss " << e.mean_loss << "\n" << std::flush;
    return true;
  });
  const auto model_path = c.run_dir / paths::kModel;
  const auto log_path = c.run_dir / paths::kLossLog;
  model::save_model(model_path, m);
  write_file_atomic(log_path, model::loss_log_csv(m.history));
  RunRecord(c.run_dir).step("train", train_config_text(cfg), {cache_path}, {model_path, log_path});
  out << "train: wrote " << model_path.string() << "\n";
}

void cmd_evaluate(const Common& c, const std::string& patches_arg, const std::string& model_arg, std::ostream& out) {
  const auto cfg = extra_trees_config_from(c.load_config());
  const auto cache_path = c.resolve(patches_arg, paths::kPatchCache);
  const auto model_path = c.resolve(model_arg, paths::kModel);
  const auto cache = load_cache_or_explain(cache_path);
  const auto m = load_model_or_explain(model_path);
  if (m.provenance.dataset_hash != model::dataset_hash(cache.split, cache.config)) {
    throw Error(ErrorCode::InvalidArgument, "model " + model_path.string() + ": dataset hash does not match patch cache " + cache_path.string());
  }
  if (cache.split.test.empty()) throw Error(ErrorCode::NotFound, "patch cache " + cache_path.string() + " has no test patches");

  eval::ScoredSet cnn, baseline;
  std::vector<std::vector<double>> features;
  std::vector<std::uint8_t> labels;
  for (const auto& p : cache.split.train) {
    const auto f = eval::shape_features(p);
    features.emplace_back(f.begin(), f.end());
    labels.push_back(static_cast<std::uint8_t>(p.label));
  }
  const auto forest = eval::extra_trees_train(features, labels, cfg);
  for (const auto& p : cache.split.test) {
    const auto label = static_cast<std::uint8_t>(p.label);
    cnn.scores.push_back(model::predict_patch(m, p));
    cnn.labels.push_back(label);
    const auto f = eval::shape_features(p);
    baseline.scores.push_back(forest.predict(f));
    baseline.labels.push_back(label);
  }
  const auto reports = eval::compare_methods(cnn, baseline);
  const auto dir = c.run_dir / paths::kEvalDir;
  eval::write_reports(dir, reports);
  std::vector<fs::path> artifacts{dir / "summary.csv"};
  for (const auto& r : reports) {
    artifacts.push_back(dir / eval::method_dir(r.method) / "roc.csv");
    artifacts.push_back(dir / eval::method_dir(r.method) / "pr.csv");
  }
  RunRecord(c.run_dir).step("evaluate", extra_trees_config_text(cfg), {cache_path, model_path}, artifacts);
  out << eval::summary_csv(reports);
}

std::vector<const data::ManifestEntry*> select_images(const data::Manifest& manifest, const std::vector<std::string>& ids) {
  std::vector<const data::ManifestEntry*> out;
  if (ids.empty()) {
    for (const auto& e : manifest.images) out.push_back(&e);
    return out;
  }
  for (const auto& id : ids) {
    const auto* e = manifest.find(id);
    if (!e) throw Error(ErrorCode::NotFound, "image '" + id + "' is not in the manifest");
    out.push_back(e);
  }
  return out;
}

void cmd_detect(const Common& c, const std::string& manifest_arg, const std::string& model_arg,
                const std::vector<std::string>& ids, std::ostream& out) {
  const auto manifest_path = c.resolve(manifest_arg, paths::kCorpusManifest);
  const auto model_path = c.resolve(model_arg, paths::kModel);
  const auto manifest = load_manifest_or_explain(manifest_path);
  const auto m = load_model_or_explain(model_path);
  const auto cfg = detector_config_from(c.load_config(), m.patch_size());
  std::string jsonl;
  std::size_t count = 0;
  for (const auto* e : select_images(manifest, ids)) {
    const auto lines = detect_image_jsonl(m, data::load_annotated_image(manifest_path.parent_path(), *e), cfg);
    count += static_cast<std::size_t>(std::count(lines.begin(), lines.end(), '\n'));
    jsonl += lines;
  }
  const auto target = c.run_dir / paths::kDetections;
  fs::create_directories(c.run_dir);
  write_file_atomic(target, jsonl);
  RunRecord(c.run_dir).step("detect", detector_config_text(cfg), {manifest_path, model_path}, {target});
  out << "detect: " << count << " detections written to " << target.string() << "\n";
}

void cmd_export_overlays(const Common& c, const std::string& manifest_arg, const std::string& detections_arg,
                         const std::vector<std::string>& ids, std::ostream& out) {
  const auto manifest_path = c.resolve(manifest_arg, paths::kCorpusManifest);
  const auto detections_path = c.resolve(detections_arg, paths::kDetections);
  const auto manifest = load_manifest_or_explain(manifest_path);
  if (!fs::exists(detections_path)) {
    throw Error(ErrorCode::NotFound, "missing artifact: detections " + detections_path.string() + " (run detect first)");
  }
  std::map<std::string, std::vector<detect::Detection>> by_image;
  const auto bytes = read_file_bytes(detections_path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("image_id") || !j.contains("bbox") || !j.contains("probability")) {
      throw Error(ErrorCode::ParseError, detections_path.string() + ": malformed detection line");
    }
    const auto& b = j["bbox"];
    by_image[j["image_id"].get<std::string>()].push_back(
        {data::BoundingBox{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>(), {}},
         j["probability"].get<double>()});
  }
  const auto dir = c.run_dir / paths::kOverlayDir;
  fs::create_directories(dir);
  std::vector<fs::path> artifacts;
  for (const auto* e : select_images(manifest, ids)) {
    const auto img = data::load_annotated_image(manifest_path.parent_path(), *e);
    const auto it = by_image.find(e->id);
    const auto dets = it == by_image.end() ? std::vector<detect::Detection>{} : it->second;
    const auto target = dir / (e->id + ".png");
    data::write_png(target, detect::render_overlay(img.pixels, img.boxes, dets));
    artifacts.push_back(target);
  }
  RunRecord(c.run_dir).step("export-overlays", "", {manifest_path, detections_path}, artifacts);
  out << "export-overlays: wrote " << artifacts.size() << " overlays to " << dir.string() << "\n";
}

}  // namespace

std::string detect_image_jsonl(const model::TrainedModel& model, const data::AnnotatedImage& image,
                               const detect::DetectorConfig& config) {
  return detect::detection_jsonl(image.id, detect::detect(model, image, config));
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"pathoscope: patch CNN training, sliding-window detection and evaluation"};
  app.require_subcommand(1);
  Common common;
  std::uint64_t seed = 0;
  std::string manifest, patches, model_file, detections, data_dir, ui_dir, host = "127.0.0.1";
  std::vector<std::string> ids;
  int epochs = 0, port = 8080;

  const auto add_common = [&](CLI::App* sub, bool with_config, bool with_seed) {
    sub->add_option("--run-dir", common.run_dir, "Directory for artifacts and run.json")->capture_default_str();
    if (with_config) sub->add_option("--config", common.config, "key = value config file")->check(CLI::ExistingFile);
    if (with_seed) sub->add_option("--seed", seed, "Seed for every random choice of the step");
  };
  auto* synth = app.add_subcommand("synth", "Generate a synthetic annotated corpus");
  add_common(synth, true, true);
  auto* build = app.add_subcommand("build-patches", "Build the balanced, augmented 50/50 patch cache");
  add_common(build, true, true);
  build->add_option("--manifest", manifest, "Annotation manifest (default <run-dir>/corpus/manifest.json)");
  auto* train = app.add_subcommand("train", "Train the CNN on the patch cache");
  add_common(train, true, true);
  train->add_option("--patches", patches, "Patch cache (default <run-dir>/patches.pspc)");
  auto* epochs_opt = train->add_option("--epochs", epochs, "Override the configured epoch count");
  auto* evaluate = app.add_subcommand("evaluate", "ROC/PR for the CNN and the extra-trees baseline");
  add_common(evaluate, true, true);
  evaluate->add_option("--patches", patches, "Patch cache (default <run-dir>/patches.pspc)");
  evaluate->add_option("--model", model_file, "Model file (default <run-dir>/model.pscn)");
  auto* detect = app.add_subcommand("detect", "Sliding-window detection with NMS on whole images");
  add_common(detect, true, false);
  detect->add_option("--manifest", manifest, "Annotation manifest (default <run-dir>/corpus/manifest.json)");
  detect->add_option("--model", model_file, "Model file (default <run-dir>/model.pscn)");
  detect->add_option("--ids", ids, "Only these image ids")->delimiter(',');
  auto* overlays = app.add_subcommand("export-overlays", "Render truth (white) and detections (red) as PNG");
  add_common(overlays, false, false);
  overlays->add_option("--manifest", manifest, "Annotation manifest (default <run-dir>/corpus/manifest.json)");
  overlays->add_option("--detections", detections, "Detections JSONL (default <run-dir>/detections.jsonl)");
  overlays->add_option("--ids", ids, "Only these image ids")->delimiter(',');
  auto* serve = app.add_subcommand("serve", "HTTP API for annotation and review");
  serve->add_option("--data-dir", data_dir, "Corpus directory (default $PATHOSCOPE_DATA_DIR, then ./data)");
  serve->add_option("--ui-dir", ui_dir, "Static review UI bundle to mount at /");
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  for (auto* sub : {synth, build, train, evaluate}) {
    if (sub->parsed() && sub->count("--seed")) common.seed = seed;
  }
  try {
    if (synth->parsed()) cmd_synth(common, out);
    if (build->parsed()) cmd_build_patches(common, manifest, out);
    if (train->parsed()) cmd_train(common, patches, epochs_opt->count() ? std::optional<int>(epochs) : std::nullopt, out);
    if (evaluate->parsed()) cmd_evaluate(common, patches, model_file, out);
    if (detect->parsed()) cmd_detect(common, manifest, model_file, ids, out);
    if (overlays->parsed()) cmd_export_overlays(common, manifest, detections, ids, out);
    if (serve->parsed()) {
      ServerOptions opts;
      if (!data_dir.empty()) {
        opts.data_dir = data_dir;
      } else if (const char* env = std::getenv("PATHOSCOPE_DATA_DIR"); env && *env) {
        opts.data_dir = env;
      } else {
        opts.data_dir = "data";
      }
      if (!ui_dir.empty()) opts.ui_dir = ui_dir;
      Service service(opts);
      out << "serving " << opts.data_dir.string() << " on http://" << host << ":" << port << "\n" << std::flush;
      if (!service.listen(host, port)) throw Error(ErrorCode::IoError, "cannot listen on " + host + ":" + std::to_string(port));
    }
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"pathoscope"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace pathoscope::workbench
