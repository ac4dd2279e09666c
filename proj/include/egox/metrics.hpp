#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "egox/objects.hpp"
#include "egox/tensor.hpp"

namespace egox::eval {

/// Read-only H x W single-channel image.
struct PlaneView {
  std::span<const float> data;
  int height = 0;
  int width = 0;
};

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(peak^2 / MSE) over all elements; identical inputs give kPsnrCap.
double psnr(std::span<const float> a, std::span<const float> b, double peak = 1.0);
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

/// Gaussian-windowed SSIM averaged over every window position fully inside the image.
double ssim(const PlaneView& a, const PlaneView& b, const SsimParams& params = {});

/// Mean SSIM over the trailing H x W planes of two equally shaped tensors.
double ssim(const Tensor& a, const Tensor& b, const SsimParams& params = {});

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_taps(int window, double sigma);

namespace reference {
double ssim(const PlaneView& a, const PlaneView& b, const SsimParams& params = {});
}

// Object criteria ------------------------------------------------------------

inline constexpr double kDefaultTauSim = 0.9;

double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct MatchPair {
  int gt_id = 0;
  int gen_id = 0;
  std::size_t gt_index = 0;
  std::size_t gen_index = 0;
  double similarity = 0.0;
};

struct MatchResult {
  double tau = kDefaultTauSim;
  std::vector<MatchPair> pairs;  // sorted by gt id
};

/// Greedy one-to-one matching on a row-major |gt| x |gen| similarity table:
/// pairs are visited by descending similarity (ties: lower gt id, then lower
/// gen id) and accepted when s >= tau and neither side is taken yet.
MatchResult greedy_match(std::span<const double> similarity, std::span<const int> gt_ids,
                         std::span<const int> gen_ids, double tau = kDefaultTauSim);

MatchResult match_objects(const ObjectSet& gt, const ObjectSet& gen, double tau = kDefaultTauSim);

/// Euclidean distance between box centers, in pixels.
double location_error(const Box& a, const Box& b);

/// Intersection over union of two boxes. Two zero-area boxes score 1 when equal, 0 otherwise.
double bbox_iou(const Box& a, const Box& b);

/// Mask pixels with at least one 4-neighbour outside the mask (the image
/// border counts as outside), dilated by a (2 * thickness + 1)^2 square.
std::vector<std::uint8_t> contour_mask(std::span<const std::uint8_t> mask, int height, int width, int thickness = 1);

/// IoU of the two contour sets; 1 when both are empty.
double contour_accuracy(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b, int height, int width,
                        int thickness = 1);

struct PairReport {
  int gt_id = 0;
  int gen_id = 0;
  double similarity = 0.0;
  int frames = 0;  // co-present frames
  // Means over co-present frames; empty when there are none.
  std::optional<double> location_error;
  std::optional<double> bbox_iou;
  std::optional<double> contour_accuracy;
};

struct VideoReport {
  double tau = kDefaultTauSim;
  std::vector<PairReport> pairs;
  // Means over pairs with at least one co-present frame; empty when no such pair exists.
  std::optional<double> mean_location_error;
  std::optional<double> mean_bbox_iou;
  std::optional<double> mean_contour_accuracy;
};

VideoReport evaluate_video(const ObjectSet& gt, const ObjectSet& gen, double tau = kDefaultTauSim, int thickness = 1);

/// Rounds to 9 significant digits, the precision used in every report.
double round9(double v);

}  // namespace egox::eval
