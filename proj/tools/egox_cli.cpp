#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "checks.hpp"
#include "common.hpp"
#include "demo.hpp"
#include "egox/camera_io.hpp"
#include "egox/conditioning.hpp"
#include "egox/config.hpp"
#include "egox/depth_align.hpp"
#include "egox/ego_render.hpp"
#include "egox/error.hpp"
#include "egox/gga.hpp"
#include "egox/metrics.hpp"
#include "egox/objects.hpp"

namespace {

using namespace egox;

/// Config flags given on the command line, applied after the config file.
struct Overrides {
  std::map<std::string, std::optional<std::string>> values;

  void add(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    cmd->add_option(flag, values[key], help);
  }

  Config resolve(const std::string& config_path) const {
    Config cfg;
    if (!config_path.empty())
      cfg = Config::load(config_path);
    else if (const char* env = std::getenv("EGOX_CONFIG"); env && *env)
      cfg = Config::load(env);
    for (const auto& [key, value] : values)
      if (value) cfg.set(key, *value);
    return cfg;
  }
};

void require_same_frames(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw Error(std::string(what) + ": frame counts differ (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exo-to-ego pipeline stages, synthetic demo and self-check"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "key = value config file (default: $EGOX_CONFIG)");

  Overrides over;
  std::map<std::string, std::string> path;
  std::function<int(const Config&)> action;
  int height = 0, width = 0;
  std::vector<std::string> psnr_pair;
  int thickness = 1;

  auto* align = app.add_subcommand("align-depth", "Fit per-frame affine inverse-depth alignment");
  align->add_option("--mono", path["mono"], "metric depth D^m (F x H x W)")->required();
  align->add_option("--video", path["video"], "video depth D^v (F x H x W)")->required();
  align->add_option("--mask", path["mask"], "static mask (F x H x W u8)")->required();
  over.add(align, "--momentum", "momentum", "EMA momentum");
  align->add_option("--out", path["out"], "aligned depth output")->required();
  align->add_option("--out-valid", path["out_valid"], "aligned validity mask output");
  align->add_option("--params", path["params"], "per-frame 'alpha beta' lines")->required();
  align->callback([&] {
    action = [&](const Config& cfg) {
      const auto mono = depth::DepthStack::from_tensor(read_tensor(path["mono"]), depth::DepthKind::Monocular);
      const auto video = depth::DepthStack::from_tensor(read_tensor(path["video"]), depth::DepthKind::Video);
      const auto mask = depth::FrameMask::from_tensor(read_tensor(path["mask"]));
      const auto res = depth::align_video(mono, video, mask, {cfg.momentum, {}, {}});
      write_tensor(path["out"], res.aligned.depth.to_tensor());
      if (!path["out_valid"].empty()) write_tensor(path["out_valid"], res.aligned.valid.to_tensor());
      tools::write_params(path["params"], res.params.smoothed);
      for (std::size_t f = 0; f < res.params.raw.size(); ++f)
        std::printf("frame %zu: alpha %.9g beta %.9g (%d pixels%s)\n", f, res.params.smoothed[f].alpha,
                    res.params.smoothed[f].beta, res.params.raw[f].used_pixels,
                    res.params.raw[f].rank_deficient ? ", rank deficient" : "");
      return 0;
    };
  });

  auto* render_cmd = app.add_subcommand("render-prior", "Lift exo frames and render them into the ego cameras");
  render_cmd->add_option("--video", path["video"], "exo RGB (F x 3 x H x W)")->required();
  render_cmd->add_option("--depth", path["depth"], "aligned depth (F x H x W)")->required();
  render_cmd->add_option("--static", path["static"], "static mask (F x H x W u8)")->required();
  render_cmd->add_option("--exo-cams", path["exo_cams"], "exo camera file")->required();
  render_cmd->add_option("--ego-cams", path["ego_cams"], "ego camera file")->required();
  render_cmd->add_option("--width", width, "ego width")->required()->check(CLI::PositiveNumber);
  render_cmd->add_option("--height", height, "ego height")->required()->check(CLI::PositiveNumber);
  over.add(render_cmd, "--radius", "splat_radius", "splat radius in pixels");
  render_cmd->add_option("--out", path["out"], "prior RGB output")->required();
  render_cmd->add_option("--out-valid", path["out_valid"], "prior validity output");
  render_cmd->add_option("--out-depth", path["out_depth"], "prior depth output");
  render_cmd->add_option("--out-cloud", path["out_cloud"], "exo point clouds (F x H x W x 4) for gga-bias");
  render_cmd->callback([&] {
    action = [&](const Config& cfg) {
      const Tensor video = read_tensor(path["video"]);
      const auto depth = depth::DepthStack::from_tensor(read_tensor(path["depth"]), depth::DepthKind::Aligned);
      const auto stat = depth::FrameMask::from_tensor(read_tensor(path["static"]));
      const auto exo = read_cameras(path["exo_cams"]);
      const auto ego = read_cameras(path["ego_cams"]);
      require_same_frames(exo.size(), std::size_t(depth.frames), "exo cameras vs depth");
      require_same_frames(ego.size(), std::size_t(depth.frames), "ego cameras vs depth");
      const auto prior = render::render_prior(video, depth, stat, exo, ego, {height, width, cfg.splat_radius, 0.5f});
      write_tensor(path["out"], prior.rgb);
      if (!path["out_valid"].empty()) write_tensor(path["out_valid"], prior.valid);
      if (!path["out_depth"].empty()) write_tensor(path["out_depth"], prior.depth);
      if (!path["out_cloud"].empty())
        write_tensor(path["out_cloud"], render::clouds_to_tensor(prior.clouds, depth.frames, depth.height, depth.width));
      for (std::size_t f = 0; f < prior.clouds.size(); ++f)
        std::printf("frame %zu: %zu points%s\n", f, prior.clouds[f].size(), prior.empty_cloud[f] ? " (empty)" : "");
      return 0;
    };
  });

  auto* bias_cmd = app.add_subcommand("gga-bias", "Precompute the geometry-guided attention bias");
  bias_cmd->add_option("--prior-depth", path["prior_depth"], "prior depth (F x H x W), fixes the ego grid")->required();
  bias_cmd->add_option("--valid", path["valid"], "prior validity (F x H x W u8)");
  bias_cmd->add_option("--ego-cams", path["ego_cams"], "ego camera file")->required();
  bias_cmd->add_option("--exo-clouds", path["exo_clouds"], "point clouds from render-prior --out-cloud")->required();
  over.add(bias_cmd, "--lambda", "lambda_g", "gain scale lambda_g");
  over.add(bias_cmd, "--eps", "eps_g", "gain floor eps_g");
  over.add(bias_cmd, "--grid", "grid", "patch grid TxHxW");
  bias_cmd->add_option("--out", path["out"], "bias output (f' x ego tokens x exo tokens)")->required();
  bias_cmd->callback([&] {
    action = [&](const Config& cfg) {
      const Tensor prior_depth = read_tensor(path["prior_depth"]);
      if (!path["valid"].empty() && read_tensor(path["valid"]).dims() != prior_depth.dims())
        throw Error("gga-bias: --valid shape differs from --prior-depth");
      const auto ego = read_cameras(path["ego_cams"]);
      const Tensor cloud_t = read_tensor(path["exo_clouds"]);
      const auto clouds = render::clouds_from_tensor(cloud_t);
      const auto dirs = gga::build_direction_inputs(prior_depth, ego, clouds, int(cloud_t.dim(1)), int(cloud_t.dim(2)),
                                                    gga::PatchGrid::parse(cfg.grid));
      const Tensor bias = gga::compute_geometry_bias(dirs, {cfg.lambda_g, cfg.eps_g}).to_tensor();
      write_tensor(path["out"], bias);
      std::printf("bias %u x %u x %u\n", bias.dim(0), bias.dim(1), bias.dim(2));
      return 0;
    };
  });

  auto* pack_cmd = app.add_subcommand("pack-condition", "Pack exo latent, noisy latent and ego prior");
  pack_cmd->add_option("--x0", path["x0"], "clean exo latent (f x c x h x w)")->required();
  pack_cmd->add_option("--p0", path["p0"], "ego prior latent (f x c x h x w')")->required();
  pack_cmd->add_option("--zt", path["zt"], "noisy ego latent (f x c x h x w')")->required();
  pack_cmd->add_option("--out", path["out"], "state output (f x (2c+1) x h x (w+w'))")->required();
  pack_cmd->callback([&] {
    action = [&](const Config&) {
      const auto x0 = cond::LatentTensor::from_tensor(read_tensor(path["x0"]), cond::LatentRole::ExoClean);
      const auto p0 = cond::LatentTensor::from_tensor(read_tensor(path["p0"]), cond::LatentRole::EgoPrior);
      const auto zt = cond::LatentTensor::from_tensor(read_tensor(path["zt"]), cond::LatentRole::Noisy);
      const auto state = cond::pack_input(x0, zt, p0, 1);
      write_tensor(path["out"], cond::state_to_tensor(state));
      std::printf("state %d x %d x %d x %d (exo width %d, ego width %d)\n", state.frames, 2 * state.channels + 1,
                  state.height, state.width(), state.exo_width, state.ego_width);
      return 0;
    };
  });

  auto* denoise_cmd = app.add_subcommand("toy-denoise", "Run the toy denoiser on a packed state");
  denoise_cmd->add_option("--state", path["state"], "state from pack-condition")->required();
  over.add(denoise_cmd, "--steps", "steps", "denoising steps T");
  over.add(denoise_cmd, "--alpha-mix", "alpha_mix", "toy denoiser prior weight");
  denoise_cmd->add_option("--out", path["out"], "ego latent output")->required();
  denoise_cmd->callback([&] {
    action = [&](const Config& cfg) {
      const auto state = cond::state_from_tensor(read_tensor(path["state"]), cfg.steps);
      const auto ego = cond::run_denoising(state, cond::toy_denoiser(cfg.alpha_mix));
      write_tensor(path["out"], ego.to_tensor());
      std::printf("ego latent %d x %d x %d x %d after %d steps\n", ego.frames, ego.channels, ego.height, ego.width,
                  cfg.steps);
      return 0;
    };
  });

  auto* eval_cmd = app.add_subcommand("eval", "Object and image criteria");
  eval_cmd->add_option("--gt", path["gt"], "ground-truth object annotations")->required();
  eval_cmd->add_option("--gen", path["gen"], "generated object annotations")->required();
  over.add(eval_cmd, "--tau", "tau_sim", "similarity threshold");
  eval_cmd->add_option("--thickness", thickness, "contour thickness in pixels")->check(CLI::NonNegativeNumber);
  eval_cmd->add_option("--psnr-pair", psnr_pair, "two videos compared by PSNR and SSIM")->expected(2);
  eval_cmd->add_option("--report", path["report"], "JSON report output")->required();
  eval_cmd->callback([&] {
    action = [&](const Config& cfg) {
      const auto report = eval::evaluate_video(read_objects(path["gt"]), read_objects(path["gen"]), cfg.tau_sim, thickness);
      nlohmann::json j = tools::video_report_json(report);
      if (psnr_pair.size() == 2) j["image"] = tools::image_report_json(read_tensor(psnr_pair[0]), read_tensor(psnr_pair[1]));
      tools::write_json(path["report"], j);
      std::printf("%zu matched pairs\n", report.pairs.size());
      return 0;
    };
  });

  auto* demo_cmd = app.add_subcommand("demo", "Synthetic scene through every stage");
  demo_cmd->add_option("--out", path["out"], "output directory")->required();
  over.add(demo_cmd, "--seed", "seed", "noise seed");
  over.add(demo_cmd, "--steps", "steps", "denoising steps");
  over.add(demo_cmd, "--radius", "splat_radius", "splat radius");
  demo_cmd->callback([&] {
    action = [&](const Config& cfg) {
      const auto start = std::chrono::steady_clock::now();
      const auto report = tools::run_demo(path["out"], cfg);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const auto& img = report["image"];
      std::printf("prior coverage %.4f\n", report["prior_coverage"].get<double>());
      std::printf("generated vs gt: psnr %.3f ssim %.4f\n", img["generated"]["psnr"].get<double>(),
                  img["generated"]["ssim"].get<double>());
      std::printf("objects matched: %zu\n", report["objects"]["matches"].get<std::size_t>());
      std::printf("wrote %s in %.2f s\n", path["out"].c_str(), secs);
      return 0;
    };
  });

  std::optional<std::uint64_t> check_seed;
  auto* self = app.add_subcommand("selfcheck", "Run the invariant suites");
  self->add_option("--seed", check_seed, "seed for the randomized suites");
  self->add_option("--demo-dir", path["demo_dir"], "also verify the files of a finished demo run");
  self->callback([&] {
    action = [&](const Config& cfg) {
      int failed = 0;
      auto results = checks::run_all(check_seed.value_or(cfg.seed));
      if (!path["demo_dir"].empty())
        for (auto& r : checks::verify_demo(path["demo_dir"])) results.push_back(std::move(r));
      for (const auto& r : results) {
        std::printf("%s\n", checks::format_line(r).c_str());
        failed += !r.ok();
      }
      std::printf("%zu suites, %d failed\n", results.size(), failed);
      return failed == 0 ? 0 : 1;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", one_line(e.what()).c_str());
    if (app.get_subcommands().empty()) std::cerr << app.help();
    return 2;
  }
  try {
    return action(over.resolve(config_path));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", one_line(e.what()).c_str());
    return 1;
  }
}
