#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace egox::checks {

/// Outcome of one acceptance criterion: `passed` of `total` sub-checks held.
struct Result {
  int criterion = 0;
  std::string name;
  int passed = 0;
  int total = 0;
  std::string detail;
  double seconds = 0.0;

  bool ok() const { return total > 0 && passed == total; }
};

Result bias_form_equivalence(std::uint64_t seed);
Result gain_anchors(std::uint64_t seed);
Result gradient_check(std::uint64_t seed);
Result depth_recovery(std::uint64_t seed);
Result identity_reprojection(std::uint64_t seed);
Result plane_reprojection();
Result clean_latent(std::uint64_t seed);
Result patch_constants();
Result object_criteria(std::uint64_t seed);
Result image_criteria(std::uint64_t seed);

/// Criteria 1-10 in order.
std::vector<Result> run_all(std::uint64_t seed);

/// Re-checks criteria 1-10 against the files written by the demo into `dir`.
std::vector<Result> verify_demo(const std::filesystem::path& dir);

/// One line per result: "PASS  3 gradient check: 20/20 (...)".
std::string format_line(const Result& r);

}  // namespace egox::checks
