#include "pathoscope/data/patch_cache.hpp"

#include "pathoscope/core/binary_io.hpp"
#include "pathoscope/core/framed_file.hpp"

namespace pathoscope::data {
namespace {

constexpr Magic kMagic = {'P', 'S', 'P', 'C'};

void put_ids(ByteWriter& w, const std::vector<std::string>& ids) {
  w.put(static_cast<std::uint32_t>(ids.size()));
  for (const auto& id : ids) w.put_string(id);
}

std::vector<std::string> get_ids(ByteReader& r) {
  const auto n = r.get<std::uint32_t>();
  std::vector<std::string> ids;
  for (std::uint32_t i = 0; i < n; ++i) ids.push_back(r.get_string());
  return ids;
}

void put_patch(ByteWriter& w, const Patch& p) {
  w.put(static_cast<std::uint8_t>(p.label));
  w.put(static_cast<std::uint8_t>(p.augmented));
  w.put(static_cast<std::uint8_t>(p.transform_id));
  w.put(static_cast<std::int32_t>(p.origin_x));
  w.put(static_cast<std::int32_t>(p.origin_y));
  w.put_string(p.source_image_id);
  w.put_array(std::span<const float>(p.pixels));
}

Patch get_patch(ByteReader& r, int size) {
  Patch p;
  p.size = size;
  const auto label = r.get<std::uint8_t>();
  if (label > 1) throw Error(ErrorCode::ParseError, "patch label out of range");
  p.label = static_cast<PatchLabel>(label);
  p.augmented = r.get<std::uint8_t>() != 0;
  p.transform_id = r.get<std::uint8_t>();
  if (p.transform_id > 7) throw Error(ErrorCode::ParseError, "transform id out of range");
  p.origin_x = r.get<std::int32_t>();
  p.origin_y = r.get<std::int32_t>();
  p.source_image_id = r.get_string();
  p.pixels.resize(static_cast<std::size_t>(size) * size * 3);
  r.get_array(std::span<float>(p.pixels));
  return p;
}

}  // namespace

std::vector<std::uint8_t> serialize_patch_cache(const PatchCache& cache) {
  const auto& c = cache.config;
  const auto& s = cache.split;
  ByteWriter w;
  w.put(static_cast<std::int32_t>(c.spec.downsample_factor));
  w.put(static_cast<std::int32_t>(c.spec.patch_size));
  w.put(static_cast<std::int32_t>(c.spec.stride));
  w.put(static_cast<std::int32_t>(c.spec.neg_cap_ratio));
  w.put_string(c.spec.target_label);
  w.put(static_cast<std::uint64_t>(c.seed));
  w.put(static_cast<std::uint8_t>(c.mode));
  w.put(static_cast<std::uint64_t>(c.negatives_per_image));
  w.put(static_cast<std::uint64_t>(s.stats.positives_original));
  w.put(static_cast<std::uint64_t>(s.stats.positives_skipped_at_border));
  w.put(static_cast<std::uint64_t>(s.stats.negatives_sampled));
  w.put(static_cast<std::uint64_t>(s.stats.negatives_kept));
  put_ids(w, s.train_image_ids);
  put_ids(w, s.test_image_ids);
  w.put(static_cast<std::uint64_t>(s.train.size()));
  w.put(static_cast<std::uint64_t>(s.test.size()));
  for (const auto* part : {&s.train, &s.test}) {
    for (const auto& p : *part) {
      if (p.size != c.spec.patch_size) throw Error(ErrorCode::ShapeMismatch, "patch size differs from spec");
      put_patch(w, p);
    }
  }
  return frame(kMagic, kPatchCacheVersion, w.bytes());
}

PatchCache deserialize_patch_cache(std::span<const std::uint8_t> bytes) {
  const auto unframed = unframe(kMagic, kPatchCacheVersion, bytes);
  ByteReader r(unframed.body);
  PatchCache cache;
  auto& c = cache.config;
  auto& s = cache.split;
  c.spec.downsample_factor = r.get<std::int32_t>();
  c.spec.patch_size = r.get<std::int32_t>();
  c.spec.stride = r.get<std::int32_t>();
  c.spec.neg_cap_ratio = r.get<std::int32_t>();
  c.spec.target_label = r.get_string();
  c.spec.validate();
  c.seed = r.get<std::uint64_t>();
  const auto mode = r.get<std::uint8_t>();
  if (mode > 1) throw Error(ErrorCode::ParseError, "unknown split mode");
  c.mode = static_cast<SplitMode>(mode);
  c.negatives_per_image = r.get<std::uint64_t>();
  s.seed = c.seed;
  s.mode = c.mode;
  s.stats.positives_original = r.get<std::uint64_t>();
  s.stats.positives_skipped_at_border = r.get<std::uint64_t>();
  s.stats.negatives_sampled = r.get<std::uint64_t>();
  s.stats.negatives_kept = r.get<std::uint64_t>();
  s.train_image_ids = get_ids(r);
  s.test_image_ids = get_ids(r);
  const auto n_train = r.get<std::uint64_t>();
  const auto n_test = r.get<std::uint64_t>();
  const std::size_t per_patch_min = static_cast<std::size_t>(c.spec.patch_size) * c.spec.patch_size * 12;
  if ((n_train + n_test) > r.remaining() / per_patch_min + 1) throw Error(ErrorCode::TruncatedFile, "patch count exceeds data");
  for (std::uint64_t i = 0; i < n_train; ++i) s.train.push_back(get_patch(r, c.spec.patch_size));
  for (std::uint64_t i = 0; i < n_test; ++i) s.test.push_back(get_patch(r, c.spec.patch_size));
  if (r.remaining() != 0) throw Error(ErrorCode::ParseError, "trailing bytes after patches");
  return cache;
}

void save_patch_cache(const std::filesystem::path& path, const PatchCache& cache) {
  write_file_atomic(path, serialize_patch_cache(cache));
}

PatchCache load_patch_cache(const std::filesystem::path& path) {
  return deserialize_patch_cache(read_file_bytes(path));
}

}  // namespace pathoscope::data
