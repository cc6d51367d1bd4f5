#include <benchmark/benchmark.h>

#include "scarnav/harness.hpp"
#include "scarnav/mapping.hpp"
#include "scarnav/planner.hpp"
#include "scarnav/skip.hpp"
#include "scarnav/sparse.hpp"
#include "scarnav/world.hpp"

namespace {

using namespace scarnav;

Tensor random_map_tensor(int c, int h, int w, double density, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(c, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (rng.uniform() < density)
                for (int ci = 0; ci < c; ++ci) t.at(ci, y, x) = rng.uniform(0.0, 1.0);
    return t;
}

void bench_subm_conv(benchmark::State& state) {
    const double density = static_cast<double>(state.range(0)) / 100.0;
    const Tensor x = random_map_tensor(16, 192, 192, density, 1);
    const SparseTensor2D xs = from_dense(x);
    ConvKernel kern(16, 16, 3);
    Rng rng(2);
    for (double& v : kern.w) v = rng.uniform(-0.1, 0.1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(subm_conv(xs, kern));
    }
    state.counters["nnz"] = xs.nnz();
}
BENCHMARK(bench_subm_conv)->Arg(5)->Arg(10)->Arg(50)->Arg(100);

void bench_fmm(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    std::vector<std::uint8_t> trav(static_cast<std::size_t>(n) * n, 1);
    Rng rng(3);
    for (auto& t : trav)
        if (rng.uniform() < 0.1) t = 0;
    trav[0] = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(fmm(trav, n, n, {{0, 0}}, 0.05));
    }
}
BENCHMARK(bench_fmm)->Arg(96)->Arg(192);

void bench_mapping_step(benchmark::State& state) {
    WorldConfig wc;
    wc.size = 96;
    wc.seed = 9;
    const Floorplan world = generate_world(wc);
    SensorConfig sensor;
    const auto& cand = world.spawn_candidates.front();
    Pose pose{(cand[1] + 0.5) * world.resolution, (cand[0] + 0.5) * world.resolution, 0};
    MapConfig mc;
    SemanticMap map(mc);
    LocalMap local;
    DepthScan depth;
    SemanticScan sem;
    for (auto _ : state) {
        observe(world, pose, sensor, depth, sem);
        scan_to_local(depth, sem, sensor, map.resolution, mc.categories, local);
        benchmark::DoNotOptimize(integrate(map, local, pose));
    }
}
BENCHMARK(bench_mapping_step);

void bench_judge_predict(benchmark::State& state) {
    Rng rng(4);
    SkipDataset data;
    data.n_bins = 50;
    for (int i = 0; i < 400; ++i) {
        SkipRow row;
        for (int f = 0; f < 100; ++f) row.features.push_back(rng.uniform());
        row.l_m = rng.uniform(0.0, 50.0);
        data.rows.push_back(std::move(row));
    }
    JudgeParams params;
    const JudgeModel model = train_judge(data, params);
    std::vector<double> features(100);
    for (double& f : features) f = rng.uniform();
    for (auto _ : state) {
        benchmark::DoNotOptimize(judge_predict_features(model, features));
    }
}
BENCHMARK(bench_judge_predict);

}  // namespace

BENCHMARK_MAIN();
