#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathoscope/data/image.hpp"

namespace pathoscope::data {

/// One image of an annotation manifest. `file` is relative to the manifest.
struct ManifestEntry {
  std::string id;
  std::string file;
  int width = 0;
  int height = 0;
  std::vector<BoundingBox> objects;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// {"version":1,"images":[{"id","file","width","height","objects":[{"label","bbox":[x0,y0,x1,y1]}]}]}
struct Manifest {
  static constexpr int kVersion = 1;
  int version = kVersion;
  std::vector<ManifestEntry> images;

  const ManifestEntry* find(const std::string& id) const;
  ManifestEntry* find(const std::string& id);

  /// Unique ids, supported version, every box inside its image.
  void validate() const;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

nlohmann::json objects_to_json(const std::vector<BoundingBox>& objects);
/// ParseError on a malformed list; geometry is not range-checked here.
std::vector<BoundingBox> objects_from_json(const nlohmann::json& objects);

nlohmann::json to_json(const ManifestEntry& entry);
nlohmann::json to_json(const Manifest& manifest);
Manifest manifest_from_json(const nlohmann::json& j);

Manifest parse_manifest(const std::string& text);
std::string serialize_manifest(const Manifest& manifest);

Manifest load_manifest(const std::filesystem::path& path);
/// Validates, then writes atomically.
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Decodes the entry's raster and checks it against the declared size.
AnnotatedImage load_annotated_image(const std::filesystem::path& manifest_dir, const ManifestEntry& entry);
std::vector<AnnotatedImage> load_corpus(const std::filesystem::path& manifest_path);

}  // namespace pathoscope::data
