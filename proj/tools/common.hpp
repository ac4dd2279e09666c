#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "egox/depth_align.hpp"

#include "egox/metrics.hpp"

namespace egox::tools {

/// Object criteria as JSON; every number rounded to 9 significant digits,
/// undefined means written as null.
nlohmann::json video_report_json(const eval::VideoReport& report);

nlohmann::json image_report_json(const Tensor& a, const Tensor& b);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

/// One "alpha beta" line per frame, full double precision.
void write_params(const std::filesystem::path& path, std::span<const depth::AffineCoeffs> params);
std::vector<depth::AffineCoeffs> read_params(const std::filesystem::path& path);

}  // namespace egox::tools
