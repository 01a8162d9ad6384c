#pragma once

#include <filesystem>

#include "pathoscope/data/patchset.hpp"

namespace pathoscope::data {

/// A built dataset plus the configuration that produced it.
struct PatchCache {
  BuildConfig config;
  DatasetSplit split;
};

// Binary layout, inside the framed container with magic "PSPC", version 1:
//   spec: i32 downsample, i32 patch_size, i32 stride, i32 neg_cap, str label
//   u64 seed | u8 split mode | u64 negatives_per_image | 4 x u64 stats
//   u32 n + str train image ids | u32 n + str test image ids
//   u64 n_train | u64 n_test | patches (train then test), each:
//     u8 label | u8 augmented | u8 transform_id | i32 origin_x | i32 origin_y
//     str source id | f32[patch_size * patch_size * 3] (y, x, channel order)
// Strings are u32 length + UTF-8 bytes.
inline constexpr std::uint32_t kPatchCacheVersion = 1;

std::vector<std::uint8_t> serialize_patch_cache(const PatchCache& cache);
PatchCache deserialize_patch_cache(std::span<const std::uint8_t> bytes);

void save_patch_cache(const std::filesystem::path& path, const PatchCache& cache);
PatchCache load_patch_cache(const std::filesystem::path& path);

}  // namespace pathoscope::data
