#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "pathoscope/data/patchset.hpp"

namespace pathoscope::eval {

inline constexpr std::size_t kShapeFeatureCount = 14;
inline constexpr std::string_view kShapeFeatureVersion = "shape-features-v1";

// 0 area fraction, 1 perimeter / size, 2 compactness, 3 eccentricity,
// 4 centroid offset / size, 5-7 foreground mean r g b, 8-10 foreground std
// r g b, 11-13 Hu moments 1-3 of the mask.
using ShapeFeatureVector = std::array<double, kShapeFeatureCount>;

/// Otsu threshold on a 256-bin histogram of `gray` (values in [0,1]); returns
/// the last bin of the dark class, or -1 when every value shares one bin.
int otsu_threshold_bin(const std::vector<double>& gray);

/// Foreground mask: grey = channel mean, foreground = bins at or below Otsu.
std::vector<std::uint8_t> otsu_mask(const data::Patch& patch);

/// All zeros when the mask is empty.
ShapeFeatureVector shape_features(const data::Patch& patch);

}  // namespace pathoscope::eval
