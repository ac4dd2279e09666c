#include "common.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "egox/error.hpp"

namespace egox::tools {

namespace {

nlohmann::json maybe(const std::optional<double>& v) { return v ? nlohmann::json(eval::round9(*v)) : nlohmann::json(); }

}  // namespace

nlohmann::json video_report_json(const eval::VideoReport& report) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : report.pairs)
    pairs.push_back({{"gt_id", p.gt_id},
                     {"gen_id", p.gen_id},
                     {"similarity", eval::round9(p.similarity)},
                     {"frames", p.frames},
                     {"location_error", maybe(p.location_error)},
                     {"bbox_iou", maybe(p.bbox_iou)},
                     {"contour_accuracy", maybe(p.contour_accuracy)}});
  return {{"tau", eval::round9(report.tau)},
          {"matches", report.pairs.size()},
          {"pairs", pairs},
          {"mean_location_error", maybe(report.mean_location_error)},
          {"mean_bbox_iou", maybe(report.mean_bbox_iou)},
          {"mean_contour_accuracy", maybe(report.mean_contour_accuracy)}};
}

nlohmann::json image_report_json(const Tensor& a, const Tensor& b) {
  return {{"psnr", eval::round9(eval::psnr(a, b))}, {"ssim", eval::round9(eval::ssim(a, b))}};
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void write_params(const std::filesystem::path& path, std::span<const depth::AffineCoeffs> params) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  char line[80];
  for (const auto& p : params) {
    std::snprintf(line, sizeof line, "%.17g %.17g\n", p.alpha, p.beta);
    out << line;
  }
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<depth::AffineCoeffs> read_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<depth::AffineCoeffs> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    depth::AffineCoeffs c;
    std::string extra;
    if (!(ls >> c.alpha >> c.beta) || (ls >> extra)) throw Error(path.string() + ": expected 'alpha beta' per line");
    out.push_back(c);
  }
  return out;
}

}  // namespace egox::tools
