#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace egox {

/// Tunables shared by every CLI subcommand. A config file is `key = value`
/// lines with '#' comments; command-line flags take precedence.
struct Config {
  double momentum = 0.9;
  double lambda_g = 1.0;
  double eps_g = 1e-4;
  int splat_radius = 1;
  std::string grid = "4x16x16";
  double tau_sim = 0.9;
  int steps = 8;
  double alpha_mix = 1.0;
  std::uint64_t seed = 42;

  static const std::vector<std::string>& keys();

  /// Throws on unknown keys and unparsable or out-of-range values.
  void set(std::string_view key, std::string_view value);

  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);
};

}  // namespace egox
