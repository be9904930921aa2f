#include <benchmark/benchmark.h>

#include "tio/data.hpp"
#include "tio/losses.hpp"
#include "tio/masks.hpp"
#include "tio/network.hpp"
#include "tio/tensor.hpp"
#include "tio/training.hpp"
#include "tio/warp.hpp"

using namespace tio;

namespace {

NetConfig desk_config() {
    NetConfig cfg;  // the reference configuration: 17 levels, widths 16..128
    return cfg;
}

}  // namespace

static void BM_conv2d_3x3(benchmark::State& state) {
    Rng rng(1);
    Tensor img = Tensor::randn({1, 32, 32, 64}, rng);
    Tensor w = Tensor::randn({32, 32, 3, 3}, rng, 0.1);
    Tensor b = Tensor::randn({32}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(img, w, b, 1, 1));
}
BENCHMARK(BM_conv2d_3x3);

static void BM_softmax_channel(benchmark::State& state) {
    Rng rng(2);
    Tensor t = Tensor::randn({1, 17, 64, 128}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(softmax_channel(t));
}
BENCHMARK(BM_softmax_channel);

static void BM_shift_x(benchmark::State& state) {
    Rng rng(3);
    Tensor t = Tensor::randn({1, 17, 64, 128}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(shift_x(t, 3.7));
}
BENCHMARK(BM_shift_x);

static void BM_discrete_reconstruct(benchmark::State& state) {
    Rng rng(4);
    DisparityLevels lv = make_levels(1.0, 24.0, 17);
    Tensor src = Tensor::randn({1, 3, 64, 128}, rng);
    Tensor logits = Tensor::randn({1, 17, 64, 128}, rng);
    Tensor p = softmax_channel(logits);
    for (auto _ : state) benchmark::DoNotOptimize(discrete_reconstruct(p, src, lv, View::left));
}
BENCHMARK(BM_discrete_reconstruct);

static void BM_occlusion_mask(benchmark::State& state) {
    Rng rng(5);
    Tensor d = Tensor::uniform({1, 1, 64, 128}, rng, 1.0, 24.0);
    for (auto _ : state) benchmark::DoNotOptimize(occlusion_mask(d));
}
BENCHMARK(BM_occlusion_mask);

static void BM_ssim_loss(benchmark::State& state) {
    Rng rng(6);
    Tensor a = Tensor::uniform({1, 3, 64, 128}, rng, 0.0, 1.0);
    Tensor b = Tensor::uniform({1, 3, 64, 128}, rng, 0.0, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(ssim_loss(a, b).item());
}
BENCHMARK(BM_ssim_loss);

static void BM_forward_mono(benchmark::State& state) {
    TioDepthNet net(desk_config(), 7);
    Rng rng(8);
    Tensor img = Tensor::uniform({1, 3, 64, 128}, rng, 0.0, 1.0);
    NoGrad ng;
    for (auto _ : state) benchmark::DoNotOptimize(net.forward_mono(img, Branch::auxiliary));
}
BENCHMARK(BM_forward_mono)->Unit(benchmark::kMillisecond);

static void BM_forward_stereo(benchmark::State& state) {
    TioDepthNet net(desk_config(), 9);
    Rng rng(10);
    Tensor left = Tensor::uniform({1, 3, 64, 128}, rng, 0.0, 1.0);
    Tensor right = Tensor::uniform({1, 3, 64, 128}, rng, 0.0, 1.0);
    NoGrad ng;
    for (auto _ : state) benchmark::DoNotOptimize(net.forward_stereo(left, right));
}
BENCHMARK(BM_forward_stereo)->Unit(benchmark::kMillisecond);

static void BM_scene_render(benchmark::State& state) {
    SyntheticDataset data(64, 11, "bench", 64, 128);
    int i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(data.sample(i));
        i = (i + 1) % data.size();
    }
}
BENCHMARK(BM_scene_render)->Unit(benchmark::kMillisecond);

static void BM_train_step1(benchmark::State& state) {
    TrainConfig cfg;
    cfg.aug.enabled = false;
    TioDepthNet net(cfg.net, 12);
    Trainer trainer(cfg, net);
    SyntheticDataset data(2, 13, "bench", cfg.height, cfg.width);
    StereoSample s0 = data.sample(0), s1 = data.sample(1);
    Tensor left = stack_batch({s0.left, s1.left});
    Tensor right = stack_batch({s0.right, s1.right});
    for (auto _ : state) benchmark::DoNotOptimize(trainer.step1_update(left, right, 0));
}
BENCHMARK(BM_train_step1)->Unit(benchmark::kMillisecond);

static void BM_train_step2(benchmark::State& state) {
    TrainConfig cfg;
    cfg.aug.enabled = false;
    TioDepthNet net(cfg.net, 14);
    Trainer trainer(cfg, net);
    SyntheticDataset data(2, 15, "bench", cfg.height, cfg.width);
    StereoSample s0 = data.sample(0), s1 = data.sample(1);
    Tensor left = stack_batch({s0.left, s1.left});
    Tensor right = stack_batch({s0.right, s1.right});
    for (auto _ : state)
        benchmark::DoNotOptimize(trainer.step2_update(left, right, data.rig(), 1));
}
BENCHMARK(BM_train_step2)->Unit(benchmark::kMillisecond);

static void BM_train_step3(benchmark::State& state) {
    TrainConfig cfg;
    cfg.aug.enabled = false;
    TioDepthNet net(cfg.net, 16);
    Trainer trainer(cfg, net);
    SyntheticDataset data(2, 17, "bench", cfg.height, cfg.width);
    StereoSample s0 = data.sample(0), s1 = data.sample(1);
    Tensor left = stack_batch({s0.left, s1.left});
    Tensor right = stack_batch({s0.right, s1.right});
    for (auto _ : state)
        benchmark::DoNotOptimize(trainer.step3_update(left, right, data.rig(), 1));
}
BENCHMARK(BM_train_step3)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
