#include <doctest.h>

#include <cmath>
#include <vector>

#include "grad_check.hpp"
#include "tio/levels.hpp"
#include "tio/losses.hpp"

using namespace tio;
using gradcheck::expect_grads_match;

namespace {

// Signed magnitudes cycling through a residue pattern: adjacent elements (in
// x, and in y for widths not divisible by the modulus) differ by at least one
// step, keeping absolute-value kinks away from finite-difference probes.
Tensor pattern_offset(const Shape& s, Rng& rng, double base, double step, int mod) {
    Tensor t = Tensor::zeros(s);
    for (int64_t i = 0; i < t.numel(); ++i) {
        double mag = base + step * static_cast<double>(i % mod);
        t.data()[i] = (rng.coin() ? 1.0 : -1.0) * mag;
    }
    return t;
}

Tensor normalized_volume(int64_t n, int64_t l, int64_t h, int64_t w, Rng& rng) {
    Tensor p = Tensor::zeros({n, l, h, w});
    int64_t plane = h * w;
    for (int64_t b = 0; b < n; ++b)
        for (int64_t i = 0; i < plane; ++i) {
            double s = 0.0;
            for (int64_t ch = 0; ch < l; ++ch) {
                double v = rng.uniform(0.05, 1.0);
                p.data()[(b * l + ch) * plane + i] = v;
                s += v;
            }
            for (int64_t ch = 0; ch < l; ++ch) p.data()[(b * l + ch) * plane + i] /= s;
        }
    return p;
}

Tensor dyadic_grid(const Shape& s, Rng& rng) {
    Tensor t = Tensor::zeros(s);
    for (int64_t i = 0; i < t.numel(); ++i)
        t.data()[i] = 0.25 * static_cast<double>(rng.randint(0, 16));
    return t;
}

}  // namespace

TEST_CASE("loss weight defaults and validation") {
    LossWeights w;
    CHECK(w.lambda1 == 0.0008);
    CHECK(w.lambda2 == 0.008);
    CHECK(w.lambda3 == 0.01);
    CHECK(w.lambda4 == 0.01);
    CHECK(w.alpha == 0.15);
    CHECK(w.beta == 0.01);
    CHECK(w.gamma == 2.0);
    CHECK(w.t1 == 1.0);
    CHECK(w.t2 == 0.13);
    CHECK_NOTHROW(w.validate());
    LossWeights bad = w;
    bad.alpha = 1.5;
    CHECK_THROWS(bad.validate());
    bad = w;
    bad.lambda3 = -0.1;
    CHECK_THROWS(bad.validate());
    bad = w;
    bad.t2 = 0.0;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("ssim: identity, constant images, symmetry, range") {
    Rng rng(31);
    Tensor a = Tensor::randn({1, 3, 8, 16}, rng);
    CHECK(ssim_loss(a, a).item() == 0.0);

    // Constant 0 vs constant 1: index collapses to C1 / (1 + C1).
    Tensor z = Tensor::zeros({1, 3, 8, 16});
    Tensor o = Tensor::full({1, 3, 8, 16}, 1.0);
    double want = (1.0 - 1e-4 / (1.0 + 1e-4)) / 2.0;
    CHECK(ssim_loss(z, o).item() == doctest::Approx(want).epsilon(1e-12));

    Tensor b = Tensor::randn({1, 3, 8, 16}, rng);
    CHECK(ssim_loss(a, b).item() == ssim_loss(b, a).item());
    for (int trial = 0; trial < 10; ++trial) {
        Tensor u = Tensor::randn({1, 3, 8, 16}, rng);
        Tensor v = Tensor::randn({1, 3, 8, 16}, rng);
        double l = ssim_loss(u, v).item();
        CHECK(l >= 0.0);
        CHECK(l <= 1.0);
    }
    CHECK_THROWS(ssim_loss(a, Tensor::zeros({1, 3, 8, 15})));
}

TEST_CASE("grad: ssim") {
    Rng rng(37);
    Tensor a = Tensor::randn({1, 3, 8, 16}, rng);
    Tensor b = Tensor::randn({1, 3, 8, 16}, rng);
    expect_grads_match([&] { return ssim_loss(a, b); }, {a, b});
}

TEST_CASE("feature extractor: shapes, determinism, fixed filters") {
    Rng rng(41);
    Tensor img = Tensor::randn({1, 3, 16, 32}, rng);
    FeatureExtractor fx(42);
    std::vector<Tensor> f = fx.features(img);
    REQUIRE(f.size() == 3);
    CHECK(f[0].shape() == Shape{1, 8, 8, 16});
    CHECK(f[1].shape() == Shape{1, 16, 4, 8});
    CHECK(f[2].shape() == Shape{1, 32, 2, 4});

    FeatureExtractor fx2(42);
    std::vector<Tensor> g = fx2.features(img);
    for (int i = 0; i < 3; ++i)
        for (int64_t j = 0; j < f[i].numel(); ++j) CHECK(f[i].data()[j] == g[i].data()[j]);

    FeatureExtractor other(43);
    std::vector<Tensor> h = other.features(img);
    bool same = true;
    for (int64_t j = 0; j < f[0].numel(); ++j) same = same && f[0].data()[j] == h[0].data()[j];
    CHECK(!same);

    // Filters are not leaves of the graph: with an untracked input, the
    // features are untracked too.
    CHECK(!f[0].requires_grad());
    CHECK_THROWS(fx.features(Tensor::zeros({1, 3, 12, 16})));  // 12 % 8 != 0
    CHECK_THROWS(fx.features(Tensor::zeros({1, 2, 16, 16})));
}

TEST_CASE("mono reconstruction: identity, constant residual, perceptual term") {
    Rng rng(43);
    FeatureExtractor fx(7);
    Tensor target = Tensor::zeros({1, 3, 8, 16});
    for (int64_t i = 0; i < target.numel(); ++i)
        target.data()[i] = static_cast<double>(rng.randint(0, 8));
    CHECK(mono_reconstruction_loss(target, target, fx, 0.01).item() == 0.0);

    Tensor rec = add(target, 0.25);
    CHECK(mono_reconstruction_loss(rec, target, fx, 0.0).item() == 0.25);

    double with_fx = mono_reconstruction_loss(rec, target, fx, 0.01).item();
    CHECK(with_fx > 0.25);  // perceptual part adds a positive distance
}

TEST_CASE("grad: mono reconstruction") {
    Rng rng(47);
    FeatureExtractor fx(7);
    Tensor rec = Tensor::randn({1, 3, 8, 16}, rng);
    Tensor target = add(rec, pattern_offset({1, 3, 8, 16}, rng, 0.3, 0.05, 7));
    expect_grads_match(
        [&] { return mono_reconstruction_loss(rec, target, fx, 0.01); }, {rec, target});
}

TEST_CASE("smoothness: constant map, unit ramp, edge damping") {
    Tensor flat = Tensor::full({1, 1, 4, 6}, 2.0);
    Tensor img = Tensor::full({1, 3, 4, 6}, 0.5);
    CHECK(smoothness_loss(flat, img, 2.0).item() == 0.0);

    Tensor ramp = Tensor::zeros({1, 1, 4, 6});
    for (int64_t y = 0; y < 4; ++y)
        for (int64_t x = 0; x < 6; ++x) ramp.data()[y * 6 + x] = static_cast<double>(x);
    CHECK(smoothness_loss(ramp, img, 2.0).item() == 1.0);

    Tensor edgy = Tensor::zeros({1, 3, 4, 6});
    for (int64_t i = 0; i < edgy.numel(); ++i)
        edgy.data()[i] = static_cast<double>(i % 6);  // unit horizontal gradient
    double damped = smoothness_loss(ramp, edgy, 2.0).item();
    CHECK(damped < 1.0);
    CHECK(damped == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
}

TEST_CASE("grad: smoothness") {
    Rng rng(53);
    Tensor d = pattern_offset({1, 1, 8, 16}, rng, 0.3, 0.05, 7);
    Tensor img = pattern_offset({1, 3, 8, 16}, rng, 0.2, 0.03, 11);
    expect_grads_match([&] { return smoothness_loss(d, img, 2.0); }, {d, img});
}

TEST_CASE("composite target: full masks and checkerboard") {
    Rng rng(59);
    Tensor img = Tensor::randn({1, 3, 4, 6}, rng);
    Tensor filler = Tensor::randn({1, 3, 4, 6}, rng);
    Tensor ones = Tensor::full({1, 1, 4, 6}, 1.0);
    Tensor zeros = Tensor::zeros({1, 1, 4, 6});
    Tensor keep = composite_target(img, filler, ones);
    Tensor swap = composite_target(img, filler, zeros);
    for (int64_t i = 0; i < img.numel(); ++i) {
        CHECK(keep.data()[i] == img.data()[i]);
        CHECK(swap.data()[i] == filler.data()[i]);
    }
    Tensor checker = Tensor::zeros({1, 1, 4, 6});
    for (int64_t y = 0; y < 4; ++y)
        for (int64_t x = 0; x < 6; ++x) checker.data()[y * 6 + x] = (x + y) % 2;
    Tensor mix = composite_target(img, filler, checker);
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < 4; ++y)
            for (int64_t x = 0; x < 6; ++x) {
                double want = ((x + y) % 2 == 1) ? img.data()[(c * 4 + y) * 6 + x]
                                                 : filler.data()[(c * 4 + y) * 6 + x];
                CHECK(mix.data()[(c * 4 + y) * 6 + x] == want);
            }
}

TEST_CASE("stereo reconstruction: identity, alpha boundary, composition") {
    Rng rng(61);
    Tensor a = Tensor::randn({1, 3, 8, 16}, rng);
    CHECK(stereo_reconstruction_loss(a, a, 0.15).item() == 0.0);

    Tensor b = add(a, pattern_offset({1, 3, 8, 16}, rng, 0.2, 0.04, 5));
    double pure_l1 = reduce_mean(abs(sub(a, b))).item();
    CHECK(stereo_reconstruction_loss(a, b, 1.0).item() == pure_l1);

    Tensor u = Tensor::full({1, 3, 8, 16}, 0.2);
    Tensor v = Tensor::full({1, 3, 8, 16}, 0.45);
    double want = 0.15 * 0.25 + 0.85 * ssim_loss(u, v).item();
    CHECK(stereo_reconstruction_loss(u, v, 0.15).item() ==
          doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("grad: stereo reconstruction and composite target") {
    Rng rng(67);
    Tensor a = Tensor::randn({1, 3, 8, 16}, rng);
    Tensor b = add(a, pattern_offset({1, 3, 8, 16}, rng, 0.3, 0.05, 7));
    Tensor m = Tensor::zeros({1, 1, 8, 16});
    for (int64_t i = 0; i < m.numel(); ++i) m.data()[i] = rng.coin() ? 1.0 : 0.0;
    Tensor filler = Tensor::randn({1, 3, 8, 16}, rng);
    expect_grads_match(
        [&] {
            Tensor tgt = composite_target(b, filler, m);
            return stereo_reconstruction_loss(a, tgt, 0.15);
        },
        {a, b, filler});
}

TEST_CASE("cost volume loss: exact match, hand value, hinge, scales") {
    Rng rng(71);
    Tensor ref = normalized_volume(1, 4, 8, 16, rng);
    std::vector<Tensor> same = {ref.clone()};
    CHECK(cost_volume_loss(same, ref, 1.0).item() == 0.0);

    Tensor r1 = Tensor::from({1, 2, 1, 1}, {0.0, 1.0});
    Tensor v1 = Tensor::from({1, 2, 1, 1}, {1.0, 0.0});
    CHECK(cost_volume_loss({v1}, r1, 1.0).item() == 2.0);

    // Hinge: differences capped under the threshold contribute nothing.
    for (int trial = 0; trial < 20; ++trial) {
        Tensor volume = ref.detach();
        for (int64_t i = 0; i < volume.numel(); ++i)
            volume.data()[i] += (rng.coin() ? 1.0 : -1.0) * rng.uniform(0.0, 0.2);
        CHECK(cost_volume_loss({volume}, ref, 1.0).item() == 0.0);
    }

    // Three scales with per-pixel bumps of known channel-summed size; an
    // independent accumulation over the same data gives the expected value.
    std::vector<Tensor> volumes;
    double want = 0.0;
    for (int64_t h : {2, 4, 8}) {
        int64_t w = 2 * h;
        Tensor base = resize_bilinear(ref, h, w);
        Tensor volume = base.detach();
        for (int64_t p = 0; p < h * w; ++p) {
            double mag = rng.coin() ? 0.5 : 0.05;
            for (int64_t c = 0; c < 4; ++c)
                volume.data()[c * h * w + p] += (rng.coin() ? 1.0 : -1.0) * mag;
        }
        double sum = 0.0;
        int64_t count = 0;
        for (int64_t p = 0; p < h * w; ++p) {
            double s = 0.0;
            for (int64_t c = 0; c < 4; ++c)
                s += std::abs(volume.data()[c * h * w + p] - base.data()[c * h * w + p]);
            if (s > 1.0) {
                sum += s;
                ++count;
            }
        }
        if (count > 0) want += sum / static_cast<double>(count);
        volumes.push_back(volume);
    }
    CHECK(cost_volume_loss(volumes, ref, 1.0).item() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("grad: cost volume loss reaches volumes but not the reference") {
    Rng rng(73);
    Tensor ref = normalized_volume(1, 4, 8, 16, rng);
    ref.set_requires_grad(true);
    std::vector<Tensor> volumes;
    for (int64_t h : {2, 4, 8}) {
        int64_t w = 2 * h;
        Tensor volume;
        {
            NoGrad ng;
            volume = resize_bilinear(ref, h, w).detach();
        }
        for (int64_t p = 0; p < h * w; ++p) {
            double mag = rng.coin() ? 0.5 : 0.05;
            for (int64_t c = 0; c < 4; ++c)
                volume.data()[c * h * w + p] += (rng.coin() ? 1.0 : -1.0) * mag;
        }
        volumes.push_back(volume);
    }
    expect_grads_match([&] { return cost_volume_loss(volumes, ref, 1.0); },
                       {volumes[0], volumes[1], volumes[2]});
    {
        Tape tape;
        Tensor loss = cost_volume_loss(volumes, ref, 1.0);
        tape.backward(loss);
        CHECK(!ref.has_grad());  // teacher stays outside the graph
    }
}

TEST_CASE("guidance loss: identities, offset, gating") {
    Rng rng(79);
    Tensor dt = dyadic_grid({1, 1, 6, 8}, rng);
    Tensor ones = Tensor::full({1, 1, 6, 8}, 1.0);
    Tensor zeros = Tensor::zeros({1, 1, 6, 8});
    CHECK(guidance_loss(dt, dt.clone(), ones).item() == 0.0);
    CHECK(guidance_loss(dt, add(dt, 0.5), zeros).item() == 0.0);
    CHECK(guidance_loss(dt, add(dt, 2.0), ones).item() == 2.0);
}

TEST_CASE("grad: guidance loss reaches the prediction but not the teacher") {
    Rng rng(83);
    Tensor dt = dyadic_grid({1, 1, 8, 16}, rng);
    dt.set_requires_grad(true);
    Tensor d = add(dt, pattern_offset({1, 1, 8, 16}, rng, 0.3, 0.05, 7)).detach();
    Tensor m = Tensor::zeros({1, 1, 8, 16});
    for (int64_t i = 0; i < m.numel(); ++i) m.data()[i] = rng.coin() ? 1.0 : 0.0;
    expect_grads_match([&] { return guidance_loss(dt, d, m); }, {d});
    {
        Tape tape;
        Tensor loss = guidance_loss(dt, d, m);
        tape.backward(loss);
        CHECK(!dt.has_grad());
    }
}

TEST_CASE("hybrid volume: endpoints, midpoint, normalization") {
    Rng rng(89);
    Tensor a = normalized_volume(2, 5, 4, 6, rng);
    Tensor b = normalized_volume(2, 5, 4, 6, rng);
    Tensor m0 = Tensor::zeros({2, 1, 4, 6});
    Tensor m1 = Tensor::full({2, 1, 4, 6}, 1.0);
    Tensor keep = hybrid_volume(a, b, m0);
    Tensor swap = hybrid_volume(a, b, m1);
    for (int64_t i = 0; i < a.numel(); ++i) {
        CHECK(keep.data()[i] == a.data()[i]);
        CHECK(swap.data()[i] == b.data()[i]);
    }
    Tensor mh = Tensor::full({2, 1, 4, 6}, 0.5);
    Tensor mid = hybrid_volume(a, b, mh);
    for (int64_t i = 0; i < a.numel(); ++i)
        CHECK(mid.data()[i] == 0.5 * a.data()[i] + 0.5 * b.data()[i]);

    Tensor mr = Tensor::zeros({2, 1, 4, 6});
    for (int64_t i = 0; i < mr.numel(); ++i) mr.data()[i] = rng.uniform(0.0, 1.0);
    CHECK_NOTHROW(validate_probability_volume(hybrid_volume(a, b, mr), 1e-6));
}

TEST_CASE("grad: hybrid volume") {
    Rng rng(97);
    Tensor a = normalized_volume(1, 4, 4, 6, rng);
    Tensor b = normalized_volume(1, 4, 4, 6, rng);
    Tensor m = Tensor::zeros({1, 1, 4, 6});
    for (int64_t i = 0; i < m.numel(); ++i) m.data()[i] = rng.uniform(0.0, 1.0);
    Tensor wgt = Tensor::randn({1, 4, 4, 6}, rng);
    expect_grads_match([&] { return reduce_mean(mul(hybrid_volume(a, b, m), wgt)); },
                       {a, b});
}

TEST_CASE("distillation: identity, closed-form KL, floor, batch mean") {
    Rng rng(101);
    Tensor p = normalized_volume(1, 5, 4, 6, rng);
    CHECK(std::abs(distill_loss(p, p.clone()).item()) < 1e-12);

    Tensor t1 = Tensor::from({1, 2, 1, 1}, {1.0, 0.0});
    Tensor m1 = Tensor::from({1, 2, 1, 1}, {0.5, 0.5});
    CHECK(distill_loss(t1, m1).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // A zero in the prediction hits the 1e-8 floor instead of dividing by 0.
    Tensor t2 = Tensor::from({1, 2, 1, 1}, {0.5, 0.5});
    Tensor m2 = Tensor::from({1, 2, 1, 1}, {1.0, 0.0});
    double want = 0.5 * (std::log(0.5) - std::log(1.0)) +
                  0.5 * (std::log(0.5) - std::log(1e-8));
    CHECK(distill_loss(t2, m2).item() == doctest::Approx(want).epsilon(1e-12));

    // Mean over pixels: one divergent pixel and one identical pixel halve.
    Tensor tb = Tensor::from({1, 2, 1, 2}, {1.0, 0.5, 0.0, 0.5});
    Tensor mb = Tensor::from({1, 2, 1, 2}, {0.5, 0.5, 0.5, 0.5});
    CHECK(distill_loss(tb, mb).item() ==
          doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-12));

    for (int trial = 0; trial < 50; ++trial) {
        Tensor u = normalized_volume(1, 4, 3, 5, rng);
        Tensor v = normalized_volume(1, 4, 3, 5, rng);
        CHECK(distill_loss(u, v).item() >= -1e-12);
    }
    CHECK_THROWS(distill_loss(p, normalized_volume(1, 4, 4, 6, rng)));
}

TEST_CASE("grad: distillation reaches the prediction but not the target") {
    Rng rng(103);
    Tensor t = normalized_volume(1, 5, 8, 16, rng);
    t.set_requires_grad(true);
    Tensor p = normalized_volume(1, 5, 8, 16, rng);
    expect_grads_match([&] { return distill_loss(t, p); }, {p});
    {
        Tape tape;
        Tensor loss = distill_loss(t, p);
        tape.backward(loss);
        CHECK(!t.has_grad());
    }
}

TEST_CASE("loss totals: weighted arithmetic") {
    LossWeights w;
    Tensor one = Tensor::scalar(1.0);
    CHECK(mono_total_loss(one, one, w).item() == doctest::Approx(1.0008).epsilon(1e-12));
    CHECK(stereo_total_loss(one, one, one, one, w).item() ==
          doctest::Approx(1.028).epsilon(1e-12));
    LossWeights heavy = w;
    heavy.lambda1 = 0.5;
    CHECK(mono_total_loss(one, one, heavy).item() == doctest::Approx(1.5).epsilon(1e-12));
    Tensor zero = Tensor::scalar(0.0);
    CHECK(stereo_total_loss(zero, zero, zero, zero, w).item() == 0.0);
}

TEST_CASE("grad: full stereo objective end to end") {
    Rng rng(107);
    LossWeights w;
    Tensor a = Tensor::randn({1, 3, 8, 16}, rng);
    Tensor b = add(a, pattern_offset({1, 3, 8, 16}, rng, 0.3, 0.05, 7));
    Tensor d = pattern_offset({1, 1, 8, 16}, rng, 0.3, 0.05, 7);
    Tensor dt = dyadic_grid({1, 1, 8, 16}, rng);
    Tensor d2 = add(dt, pattern_offset({1, 1, 8, 16}, rng, 0.3, 0.05, 7)).detach();
    Tensor ref = normalized_volume(1, 4, 8, 16, rng);
    Tensor volume = ref.detach();
    for (int64_t p = 0; p < 8 * 16; ++p) {
        double mag = rng.coin() ? 0.5 : 0.05;
        for (int64_t c = 0; c < 4; ++c)
            volume.data()[c * 8 * 16 + p] += (rng.coin() ? 1.0 : -1.0) * mag;
    }
    Tensor m = Tensor::zeros({1, 1, 8, 16});
    for (int64_t i = 0; i < m.numel(); ++i) m.data()[i] = rng.coin() ? 1.0 : 0.0;
    expect_grads_match(
        [&] {
            Tensor rec = stereo_reconstruction_loss(a, b, w.alpha);
            Tensor smo = smoothness_loss(d, b, w.gamma);
            Tensor cos = cost_volume_loss({volume}, ref, w.t1);
            Tensor gui = guidance_loss(dt, d2, m);
            return stereo_total_loss(rec, smo, cos, gui, w);
        },
        {a, d, volume, d2});
}
