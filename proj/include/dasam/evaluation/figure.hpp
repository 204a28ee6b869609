#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dasam/data/types.hpp"

namespace dasam::evaluation {

constexpr int kPanelGap = 4;
constexpr float kOverlayAlpha = 0.5f;

/// Tint used for the i-th variant panel.
std::array<float, 3> variant_color(std::size_t index);

/// Panels left to right: input, depth (gray, min-max normalized), then one
/// overlay per prediction in the given order. Overlay pixels inside the mask
/// are (1 - a) * rgb + a * color with a = 0.5. Panels are separated by a
/// white gap of kPanelGap pixels. Throws ContractViolation with no
/// predictions or a mask whose shape differs from the image.
data::RgbImage compose_comparison_figure(const data::DatasetRecord& record,
                                         const std::vector<std::pair<std::string, data::InstanceMask>>& predictions);

/// Composes and writes a PNG. Throws Error when the path is not writable.
void emit_comparison_figure(const data::DatasetRecord& record,
                            const std::vector<std::pair<std::string, data::InstanceMask>>& predictions,
                            const std::filesystem::path& out_path);

}  // namespace dasam::evaluation
