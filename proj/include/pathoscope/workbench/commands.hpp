#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pathoscope/data/image.hpp"
#include "pathoscope/detect/detector.hpp"
#include "pathoscope/model/model.hpp"

namespace pathoscope::workbench {

inline constexpr const char* kToolVersion = "1.0.0";

// Default artifact locations inside a run directory.
namespace paths {
inline const std::filesystem::path kCorpusManifest = "corpus/manifest.json";
inline const std::filesystem::path kPatchCache = "patches.pspc";
inline const std::filesystem::path kModel = "model.pscn";
inline const std::filesystem::path kLossLog = "loss.csv";
inline const std::filesystem::path kEvalDir = "eval";
inline const std::filesystem::path kDetections = "detections.jsonl";
inline const std::filesystem::path kOverlayDir = "overlays";
inline const std::filesystem::path kRunRecord = "run.json";
}  // namespace paths

/// The one detection path shared by the CLI and the HTTP service.
std::string detect_image_jsonl(const model::TrainedModel& model, const data::AnnotatedImage& image,
                               const detect::DetectorConfig& config);

/// Entry point of the `pathoscope` executable. Diagnostics go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pathoscope::workbench
