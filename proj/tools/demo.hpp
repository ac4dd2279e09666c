#pragma once

#include <filesystem>

#include <json.hpp>

#include "egox/config.hpp"

namespace egox::tools {

/// Synthetic textured-plane scene pushed through every stage. Writes all
/// intermediate files into `out` and returns the report also saved as
/// report.json.
nlohmann::json run_demo(const std::filesystem::path& out, const Config& cfg);

}  // namespace egox::tools
