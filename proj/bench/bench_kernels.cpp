// Serial reference vs OpenMP path for the hot kernels.
#include <random>

#include <benchmark/benchmark.h>

#include "egox/ego_render.hpp"
#include "egox/gga.hpp"
#include "egox/metrics.hpp"

using namespace egox;

namespace {

render::PointCloudFrame make_cloud(int n) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> xy(-1.0, 1.0), z(1.5, 3.0);
  render::PointCloudFrame cloud;
  for (int i = 0; i < n; ++i) {
    cloud.points.emplace_back(xy(rng), xy(rng), z(rng));
    cloud.colors.push_back({0.2f, 0.4f, 0.6f});
    cloud.source_pixel.push_back({i / 256, i % 256});
  }
  return cloud;
}

geom::Camera camera(int size) { return {{double(size), double(size), size / 2.0, size / 2.0}, geom::Pose::identity()}; }

template <bool Serial>
void BM_render_frame(benchmark::State& state) {
  const int size = int(state.range(0));
  const auto cloud = make_cloud(size * size);
  const auto cam = camera(size);
  const render::RenderOptions opts{size, size, 1, 0.5f};
  for (auto _ : state) {
    if constexpr (Serial) benchmark::DoNotOptimize(render::reference::render_frame(cloud, cam, opts));
    else benchmark::DoNotOptimize(render::render_frame(cloud, cam, opts));
  }
}

gga::DirectionField make_field(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  gga::DirectionField f;
  f.dims = {1, 1, n};
  for (int i = 0; i < n; ++i) {
    f.dirs.push_back(geom::Vec3(g(rng), g(rng), g(rng)).normalized());
    f.valid.push_back(1);
  }
  return f;
}

template <bool Serial>
void BM_bias_matrix(benchmark::State& state) {
  const int n = int(state.range(0));
  const auto q = make_field(n, 1), k = make_field(2 * n, 2);
  const gga::BiasParams params{};
  for (auto _ : state) {
    if constexpr (Serial) benchmark::DoNotOptimize(gga::reference::bias_matrix(q, k, params));
    else benchmark::DoNotOptimize(gga::bias_matrix(q, k, params));
  }
}

template <bool Serial>
void BM_gga_attention(benchmark::State& state) {
  const int l = int(state.range(0));
  const gga::AttentionLayout layout{l, 2 * l};
  const gga::Matrix Q = gga::Matrix::Random(layout.total(), 64), K = gga::Matrix::Random(layout.total(), 64);
  const gga::Matrix V = gga::Matrix::Random(layout.total(), 64), B = gga::Matrix::Random(l, 2 * l);
  for (auto _ : state) {
    if constexpr (Serial) benchmark::DoNotOptimize(gga::reference::gga_attention(Q, K, V, layout, B));
    else benchmark::DoNotOptimize(gga::gga_attention(Q, K, V, layout, B));
  }
}

template <bool Serial>
void BM_ssim(benchmark::State& state) {
  const int size = int(state.range(0));
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> a(size * size), b(size * size);
  for (auto& v : a) v = u(rng);
  for (auto& v : b) v = u(rng);
  const eval::PlaneView pa{a, size, size}, pb{b, size, size};
  for (auto _ : state) {
    if constexpr (Serial) benchmark::DoNotOptimize(eval::reference::ssim(pa, pb));
    else benchmark::DoNotOptimize(eval::ssim(pa, pb));
  }
}

}  // namespace

BENCHMARK(BM_render_frame<true>)->Name("render_frame/serial")->Arg(128)->Arg(256);
BENCHMARK(BM_render_frame<false>)->Name("render_frame/omp")->Arg(128)->Arg(256);
BENCHMARK(BM_bias_matrix<true>)->Name("bias_matrix/serial")->Arg(256)->Arg(1024);
BENCHMARK(BM_bias_matrix<false>)->Name("bias_matrix/omp")->Arg(256)->Arg(1024);
BENCHMARK(BM_gga_attention<true>)->Name("gga_attention/serial")->Arg(128)->Arg(512);
BENCHMARK(BM_gga_attention<false>)->Name("gga_attention/omp")->Arg(128)->Arg(512);
BENCHMARK(BM_ssim<true>)->Name("ssim/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_ssim<false>)->Name("ssim/omp")->Arg(64)->Arg(256);

BENCHMARK_MAIN();
