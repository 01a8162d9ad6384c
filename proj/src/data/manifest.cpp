#include "pathoscope/data/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "pathoscope/core/binary_io.hpp"
#include "pathoscope/core/error.hpp"
#include "pathoscope/data/imageio.hpp"

namespace pathoscope::data {

using nlohmann::json;

const ManifestEntry* Manifest::find(const std::string& id) const {
  for (const auto& e : images) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

ManifestEntry* Manifest::find(const std::string& id) {
  return const_cast<ManifestEntry*>(static_cast<const Manifest&>(*this).find(id));
}

void Manifest::validate() const {
  if (version != kVersion) {
    throw Error(ErrorCode::VersionUnsupported, "manifest version " + std::to_string(version));
  }
  std::set<std::string> ids;
  for (const auto& e : images) {
    if (e.id.empty()) throw Error(ErrorCode::InvariantViolation, "empty image id");
    if (!ids.insert(e.id).second) throw Error(ErrorCode::InvariantViolation, "duplicate image id " + e.id);
    if (e.width <= 0 || e.height <= 0) throw Error(ErrorCode::InvariantViolation, "image " + e.id + " has no size");
    for (const auto& b : e.objects) {
      if (!b.within(e.width, e.height)) {
        throw Error(ErrorCode::InvariantViolation,
                    "image " + e.id + ": bbox [" + std::to_string(b.x_min) + "," + std::to_string(b.y_min) + "," +
                        std::to_string(b.x_max) + "," + std::to_string(b.y_max) + "] violates 0 <= min < max <= size");
      }
    }
  }
}

json objects_to_json(const std::vector<BoundingBox>& objects) {
  json arr = json::array();
  for (const auto& b : objects) {
    arr.push_back({{"label", b.label}, {"bbox", {b.x_min, b.y_min, b.x_max, b.y_max}}});
  }
  return arr;
}

std::vector<BoundingBox> objects_from_json(const json& objects) {
  if (!objects.is_array()) throw Error(ErrorCode::ParseError, "\"objects\" must be an array");
  std::vector<BoundingBox> out;
  for (const auto& o : objects) {
    if (!o.is_object() || !o.contains("bbox") || !o.contains("label")) {
      throw Error(ErrorCode::ParseError, "object needs \"label\" and \"bbox\"");
    }
    const auto& bb = o.at("bbox");
    if (!bb.is_array() || bb.size() != 4) throw Error(ErrorCode::ParseError, "bbox must be [x_min,y_min,x_max,y_max]");
    for (const auto& v : bb) {
      if (!v.is_number_integer()) throw Error(ErrorCode::ParseError, "bbox coordinates must be integers");
    }
    if (!o.at("label").is_string()) throw Error(ErrorCode::ParseError, "label must be a string");
    out.push_back({bb[0].get<int>(), bb[1].get<int>(), bb[2].get<int>(), bb[3].get<int>(), o.at("label").get<std::string>()});
  }
  return out;
}

json to_json(const ManifestEntry& e) {
  return {{"id", e.id}, {"file", e.file}, {"width", e.width}, {"height", e.height}, {"objects", objects_to_json(e.objects)}};
}

json to_json(const Manifest& m) {
  json images = json::array();
  for (const auto& e : m.images) images.push_back(to_json(e));
  return {{"version", m.version}, {"images", images}};
}

Manifest manifest_from_json(const json& j) {
  try {
    Manifest m;
    m.version = j.at("version").get<int>();
    for (const auto& e : j.at("images")) {
      ManifestEntry entry;
      entry.id = e.at("id").get<std::string>();
      entry.file = e.at("file").get<std::string>();
      entry.width = e.at("width").get<int>();
      entry.height = e.at("height").get<int>();
      entry.objects = objects_from_json(e.value("objects", json::array()));
      m.images.push_back(std::move(entry));
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("manifest: ") + e.what());
  }
}

Manifest parse_manifest(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("manifest: ") + e.what());
  }
  return manifest_from_json(j);
}

std::string serialize_manifest(const Manifest& manifest) { return to_json(manifest).dump(2) + "\n"; }

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  Manifest m = parse_manifest(ss.str());
  m.validate();
  return m;
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  manifest.validate();
  write_file_atomic(path, serialize_manifest(manifest));
}

AnnotatedImage load_annotated_image(const std::filesystem::path& manifest_dir, const ManifestEntry& entry) {
  AnnotatedImage img{entry.id, read_image(manifest_dir / entry.file), entry.objects};
  if (img.pixels.width() != entry.width || img.pixels.height() != entry.height) {
    throw Error(ErrorCode::InvariantViolation, "image " + entry.id + " is " + std::to_string(img.pixels.width()) + "x" +
                                                   std::to_string(img.pixels.height()) + ", manifest declares " +
                                                   std::to_string(entry.width) + "x" + std::to_string(entry.height));
  }
  img.validate();
  return img;
}

std::vector<AnnotatedImage> load_corpus(const std::filesystem::path& manifest_path) {
  const Manifest m = load_manifest(manifest_path);
  const auto dir = manifest_path.parent_path();
  std::vector<AnnotatedImage> corpus;
  corpus.reserve(m.images.size());
  for (const auto& e : m.images) corpus.push_back(load_annotated_image(dir, e));
  return corpus;
}

}  // namespace pathoscope::data
