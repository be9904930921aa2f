// Acceptance suite: every release criterion checked in one binary, one
// pass/fail line per criterion, nonzero exit when any criterion fails.
// Independent of the unit-test framework so each oracle is restated here
// from scratch rather than shared with the suites it cross-checks.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tio/config.hpp"
#include "tio/data.hpp"
#include "tio/evaluate.hpp"
#include "tio/levels.hpp"
#include "tio/losses.hpp"
#include "tio/masks.hpp"
#include "tio/metrics.hpp"
#include "tio/network.hpp"
#include "tio/tensor.hpp"
#include "tio/training.hpp"
#include "tio/warp.hpp"

using namespace tio;

namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    static const clock::time_point t0 = clock::now();
    return std::chrono::duration<double>(clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return std::string(buf);
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

// ---------------------------------------------------------------------------
// Input generators that keep finite-difference probes away from kinks
// (absolute values at 0, hinge thresholds, integer sample coordinates).

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

Tensor away_from(Tensor t, double kink, double margin) {
    for (int64_t i = 0; i < t.numel(); ++i)
        if (std::abs(t.data()[i] - kink) < margin)
            t.data()[i] += (t.data()[i] >= kink ? margin : -margin);
    return t;
}

Tensor frac_coords(const Shape& s, Rng& rng, int64_t extent) {
    Tensor t = Tensor::zeros(s);
    for (int64_t i = 0; i < t.numel(); ++i)
        t.data()[i] = static_cast<double>(rng.randint(0, extent - 2)) + rng.uniform(0.15, 0.85);
    return t;
}

Tensor coin_mask(const Shape& s, Rng& rng) {
    Tensor m = Tensor::zeros(s);
    for (int64_t i = 0; i < m.numel(); ++i) m.data()[i] = rng.coin() ? 1.0 : 0.0;
    return m;
}

// ---------------------------------------------------------------------------
// Criterion 1: central finite differences against backward() for every loss
// and every differentiable op. Step 1e-5; relative error floored at 1e-3 in
// the denominator must stay below 1e-4.

class GradSuite {
public:
    void check(const std::string& name, const std::function<Tensor()>& make_loss,
               std::vector<Tensor> leaves) {
        ++sites_;
        for (auto& leaf : leaves) {
            leaf.set_requires_grad(true);
            leaf.zero_grad();
        }
        std::vector<std::vector<double>> analytic;
        {
            Tape tape;
            Tensor loss = make_loss();
            if (loss.numel() != 1)
                throw std::runtime_error("grad suite: " + name + " is not scalar");
            tape.backward(loss);
            for (auto& leaf : leaves) analytic.push_back(leaf.grad());
        }
        const double h = 1e-5, tol = 1e-4;
        bool ok = true;
        for (size_t li = 0; li < leaves.size(); ++li) {
            Tensor& leaf = leaves[li];
            for (int64_t i = 0; i < leaf.numel(); ++i) {
                double saved = leaf.data()[i];
                leaf.data()[i] = saved + h;
                double lp = make_loss().item();
                leaf.data()[i] = saved - h;
                double lm = make_loss().item();
                leaf.data()[i] = saved;
                double fd = (lp - lm) / (2.0 * h);
                double a = analytic[li][static_cast<size_t>(i)];
                double e = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
                if (e > worst_) {
                    worst_ = e;
                    worst_name_ = name;
                }
                if (e > tol) ok = false;
            }
            leaf.set_requires_grad(false);
        }
        if (!ok) failed_.push_back(name);
    }

    int sites() const { return sites_; }
    double worst() const { return worst_; }
    const std::string& worst_name() const { return worst_name_; }
    const std::vector<std::string>& failed() const { return failed_; }

private:
    int sites_ = 0;
    double worst_ = 0.0;
    std::string worst_name_;
    std::vector<std::string> failed_;
};

void named_loss_checks(GradSuite& gs) {
    LossWeights w;
    FeatureExtractor fx(7);
    Rng rng(211);

    {  // monocular photometric + perceptual reconstruction
        Tensor rec = Tensor::randn({1, 3, 8, 16}, rng);
        Tensor target = add(rec, pattern_offset({1, 3, 8, 16}, rng, 0.3, 0.05, 7)).detach();
        gs.check("mono_reconstruction_loss",
                 [&] { return mono_reconstruction_loss(rec, target, fx, w.beta); },
                 {rec, target});
    }
    {  // edge-aware smoothness
        Tensor d = pattern_offset({1, 1, 8, 16}, rng, 0.3, 0.05, 7);
        Tensor img = pattern_offset({1, 3, 8, 16}, rng, 0.2, 0.03, 11);
        gs.check("smoothness_loss", [&] { return smoothness_loss(d, img, w.gamma); },
                 {d, img});
    }
    {  // stereo photometric mix over a composited target
        Tensor a = Tensor::randn({1, 3, 8, 16}, rng);
        Tensor b = add(a, pattern_offset({1, 3, 8, 16}, rng, 0.3, 0.05, 7)).detach();
        Tensor m = coin_mask({1, 1, 8, 16}, rng);
        Tensor filler = Tensor::randn({1, 3, 8, 16}, rng);
        gs.check("stereo_reconstruction_loss",
                 [&] {
                     Tensor tgt = composite_target(b, filler, m);
                     return stereo_reconstruction_loss(a, tgt, w.alpha);
                 },
                 {a, b, filler});
    }
    {  // thresholded cost-volume agreement; offsets straddle t1 with margin
        Tensor ref = normalized_volume(1, 4, 8, 16, rng);
        std::vector<Tensor> volumes;
        for (int64_t h : {2L, 4L, 8L}) {
            int64_t w2 = 2 * h;
            Tensor volume;
            {
                NoGrad ng;
                volume = resize_bilinear(ref, h, w2).detach();
            }
            for (int64_t p = 0; p < h * w2; ++p) {
                double mag = rng.coin() ? 0.5 : 0.05;
                for (int64_t c = 0; c < 4; ++c)
                    volume.data()[c * h * w2 + p] += (rng.coin() ? 1.0 : -1.0) * mag;
            }
            volumes.push_back(volume);
        }
        gs.check("cost_volume_loss",
                 [&] { return cost_volume_loss(volumes, ref, w.t1); },
                 {volumes[0], volumes[1], volumes[2]});
    }
    {  // disparity guidance toward a constant teacher
        Tensor dt = dyadic_grid({1, 1, 8, 16}, rng);
        Tensor d = add(dt, pattern_offset({1, 1, 8, 16}, rng, 0.3, 0.05, 7)).detach();
        Tensor m = coin_mask({1, 1, 8, 16}, rng);
        gs.check("guidance_loss", [&] { return guidance_loss(dt, d, m); }, {d});
    }
    {  // stereo total: all four terms composed into one weighted scalar
        Tensor sa = Tensor::randn({1, 3, 8, 16}, rng);
        Tensor sb = add(sa, pattern_offset({1, 3, 8, 16}, rng, 0.3, 0.05, 7)).detach();
        Tensor sm = coin_mask({1, 1, 8, 16}, rng);
        Tensor sfiller = Tensor::randn({1, 3, 8, 16}, rng);
        Tensor sd = pattern_offset({1, 1, 8, 16}, rng, 0.3, 0.05, 7);
        Tensor simg = pattern_offset({1, 3, 8, 16}, rng, 0.2, 0.03, 11);
        Tensor ref = normalized_volume(1, 4, 8, 16, rng);
        std::vector<Tensor> vols;
        for (int64_t h : {2L, 4L, 8L}) {
            int64_t w2 = 2 * h;
            Tensor volume;
            {
                NoGrad ng;
                volume = resize_bilinear(ref, h, w2).detach();
            }
            for (int64_t p = 0; p < h * w2; ++p) {
                double mag = rng.coin() ? 0.5 : 0.05;
                for (int64_t c = 0; c < 4; ++c)
                    volume.data()[c * h * w2 + p] += (rng.coin() ? 1.0 : -1.0) * mag;
            }
            vols.push_back(volume);
        }
        Tensor gdt = dyadic_grid({1, 1, 8, 16}, rng);
        Tensor gd = add(gdt, pattern_offset({1, 1, 8, 16}, rng, 0.3, 0.05, 7)).detach();
        Tensor gm = coin_mask({1, 1, 8, 16}, rng);
        gs.check("stereo_total_loss",
                 [&] {
                     Tensor tgt = composite_target(sb, sfiller, sm);
                     Tensor rec = stereo_reconstruction_loss(sa, tgt, w.alpha);
                     Tensor smo = smoothness_loss(sd, simg, w.gamma);
                     Tensor cos = cost_volume_loss(vols, ref, w.t1);
                     Tensor gui = guidance_loss(gdt, gd, gm);
                     return stereo_total_loss(rec, smo, cos, gui, w);
                 },
                 {sa, sd, vols[0], gd});
    }
    {  // distillation KL toward a constant teacher volume
        Tensor t = normalized_volume(1, 5, 8, 16, rng);
        Tensor p = normalized_volume(1, 5, 8, 16, rng);
        gs.check("distill_loss", [&] { return distill_loss(t, p); }, {p});
    }
    {  // monocular total: reconstruction plus weighted smoothness
        Tensor mrec = Tensor::randn({1, 3, 8, 16}, rng);
        Tensor mtar = add(mrec, pattern_offset({1, 3, 8, 16}, rng, 0.3, 0.05, 7)).detach();
        Tensor md = pattern_offset({1, 1, 8, 16}, rng, 0.3, 0.05, 7);
        Tensor mimg = pattern_offset({1, 3, 8, 16}, rng, 0.2, 0.03, 11);
        gs.check("mono_total_loss",
                 [&] {
                     Tensor lrec = mono_reconstruction_loss(mrec, mtar, fx, w.beta);
                     Tensor lsmo = smoothness_loss(md, mimg, w.gamma);
                     return mono_total_loss(lrec, lsmo, w);
                 },
                 {mrec, mtar, md});
    }
}

void op_checks(GradSuite& gs) {
    {  // binary elementwise
        Rng rng(11);
        Tensor a = Tensor::randn({2, 3, 2, 2}, rng);
        Tensor b = away_from(Tensor::randn({2, 3, 2, 2}, rng), 0.0, 0.4);
        Tensor s = Tensor::scalar(0.7);
        gs.check("add_mul", [&] { return reduce_sum(mul(add(a, b), b)); }, {a, b});
        gs.check("sub", [&] { return reduce_sum(mul(sub(a, b), a)); }, {a, b});
        gs.check("div", [&] { return reduce_sum(div(a, b)); }, {a, b});
        gs.check("scalar_ops", [&] { return reduce_sum(add(mul(a, s), s)); }, {a, s});
        Tensor c = add(b, 0.21).detach();
        gs.check("min_tensor", [&] { return reduce_sum(min(b, c)); }, {b, c});
    }
    {  // unary elementwise
        Rng rng(12);
        Tensor pos = Tensor::uniform({2, 2, 3, 3}, rng, 0.4, 2.5);
        Tensor any = Tensor::randn({2, 2, 3, 3}, rng);
        Tensor nz = away_from(any.clone(), 0.0, 0.05);
        gs.check("abs", [&] { return reduce_sum(abs(nz)); }, {nz});
        gs.check("exp", [&] { return reduce_sum(exp(mul(any, 0.5))); }, {any});
        gs.check("log", [&] { return reduce_sum(log(pos)); }, {pos});
        gs.check("sqrt_safe", [&] { return reduce_sum(sqrt_safe(pos)); }, {pos});
        gs.check("sigmoid", [&] { return reduce_sum(sigmoid(any)); }, {any});
        Tensor e = away_from(any.clone(), 0.0, 0.05);
        gs.check("elu", [&] { return reduce_sum(elu(e)); }, {e});
        Tensor m = away_from(away_from(any.clone(), 0.5, 0.05), -0.5, 0.05);
        gs.check("min_scalar", [&] { return reduce_sum(min(m, 0.5)); }, {m});
        gs.check("max_scalar", [&] { return reduce_sum(max(m, -0.5)); }, {m});
        gs.check("clamp", [&] { return reduce_sum(clamp(m, -0.5, 0.5)); }, {m});
        gs.check("neg", [&] { return reduce_sum(neg(m)); }, {m});
    }
    {  // reductions
        Rng rng(13);
        Tensor a = Tensor::randn({2, 3, 2, 2}, rng);
        gs.check("reduce_mean", [&] { return reduce_mean(a); }, {a});
        gs.check("reduce_max", [&] { return reduce_max(a); }, {a});
        gs.check("reduce_sum_axis",
                 [&] { return reduce_sum(mul(reduce_sum_axis(a, 1), 0.3)); }, {a});
        gs.check("reduce_mean_axis",
                 [&] { return reduce_sum(exp(reduce_mean_axis(a, 2))); }, {a});
        gs.check("reduce_max_axis", [&] { return reduce_sum(reduce_max_axis(a, 1)); }, {a});
    }
    {  // convolution
        Rng rng(14);
        Tensor img = Tensor::randn({2, 3, 5, 6}, rng);
        Tensor w = Tensor::randn({4, 3, 3, 3}, rng, 0.5);
        Tensor b = Tensor::randn({4}, rng);
        gs.check("conv2d_3x3",
                 [&] { return reduce_sum(mul(conv2d(img, w, b, 1, 1), 0.1)); }, {img, w, b});
        Tensor w1 = Tensor::randn({2, 3, 1, 1}, rng);
        gs.check("conv2d_1x1",
                 [&] { return reduce_sum(conv2d(img, w1, Tensor(), 1, 0)); }, {img, w1});
        gs.check("conv2d_stride2", [&] { return reduce_sum(conv2d(img, w, b, 2, 1)); },
                 {img, w, b});
    }
    {  // channel softmax
        Rng rng(15);
        Tensor t = Tensor::randn({1, 4, 2, 3}, rng);
        Tensor r = Tensor::randn({1, 4, 2, 3}, rng);
        gs.check("softmax_channel",
                 [&] { return reduce_sum(mul(softmax_channel(t), r)); }, {t});
    }
    {  // bilinear sampling with respect to both image and coordinates
        Rng rng(16);
        Tensor img = Tensor::randn({1, 2, 5, 7}, rng);
        Tensor xs = frac_coords({1, 3, 4}, rng, 7);
        Tensor ys = frac_coords({1, 3, 4}, rng, 5);
        Tensor r = Tensor::randn({1, 2, 3, 4}, rng);
        gs.check("bilinear_sample",
                 [&] { return reduce_sum(mul(bilinear_sample(img, xs, ys), r)); },
                 {img, xs, ys});
    }
    {  // pools, pads, resizes, shifts, differences
        Rng rng(17);
        Tensor t = Tensor::randn({1, 2, 4, 6}, rng);
        Tensor r = Tensor::randn({1, 2, 4, 6}, rng);
        gs.check("maxpool3x3", [&] { return reduce_sum(mul(maxpool3x3(t), r)); }, {t});
        gs.check("avgpool3x3", [&] { return reduce_sum(mul(avgpool3x3(t), r)); }, {t});
        gs.check("avgpool2x2", [&] { return reduce_sum(exp(avgpool2x2(t))); }, {t});
        gs.check("replicate_pad",
                 [&] { return reduce_sum(mul(replicate_pad(t, 1), 0.3)); }, {t});
        gs.check("resize_down", [&] { return reduce_sum(exp(resize_bilinear(t, 3, 4))); }, {t});
        gs.check("resize_up", [&] { return reduce_sum(exp(resize_bilinear(t, 8, 12))); }, {t});
        gs.check("upsample2x", [&] {
            Tensor u = upsample2x(t);
            return reduce_sum(mul(u, resize_bilinear(r, 8, 12).detach()));
        }, {t});
        gs.check("shift_x_pos", [&] { return reduce_sum(mul(shift_x(t, 1.3), r)); }, {t});
        gs.check("shift_x_neg", [&] { return reduce_sum(mul(shift_x(t, -0.7), r)); }, {t});
        gs.check("shift_channels",
                 [&] { return reduce_sum(mul(shift_channels(t, {0.5, -1.2}), r)); }, {t});
        gs.check("forward_diff_x", [&] { return reduce_sum(exp(forward_diff_x(t))); }, {t});
        gs.check("forward_diff_y", [&] { return reduce_sum(exp(forward_diff_y(t))); }, {t});
    }
    {  // structural ops
        Rng rng(18);
        Tensor a = Tensor::randn({2, 2, 3, 4}, rng);
        Tensor b = Tensor::randn({2, 3, 3, 4}, rng);
        Tensor m = Tensor::randn({2, 1, 3, 4}, rng);
        Tensor sc = Tensor::randn({2, 2, 1, 1}, rng);
        Tensor r = Tensor::randn({2, 5, 3, 4}, rng);
        gs.check("concat_channels",
                 [&] { return reduce_sum(mul(concat_channels({a, b}), r)); }, {a, b});
        gs.check("broadcast_channel",
                 [&] { return reduce_sum(exp(broadcast_channel(m, 3))); }, {m});
        gs.check("scale_channels", [&] { return reduce_sum(exp(scale_channels(a, sc))); },
                 {a, sc});
        gs.check("global_avg_pool", [&] { return reduce_sum(exp(global_avg_pool(a))); }, {a});
        gs.check("reshape", [&] { return reduce_sum(exp(reshape(a, {2, 4, 2, 3}))); }, {a});
    }
    {  // disparity-volume and warp operators
        Rng rng(19);
        DisparityLevels lv;
        lv.values = {1.5, 3.25, 5.0};
        Tensor p = normalized_volume(1, 3, 3, 10, rng);
        Tensor src = Tensor::randn({1, 2, 3, 10}, rng);
        Tensor wgt = Tensor::randn({1, 2, 3, 10}, rng);
        Tensor wg1 = Tensor::randn({1, 1, 3, 10}, rng);
        Tensor wg3 = Tensor::randn({1, 3, 3, 10}, rng);
        gs.check("shift_volume",
                 [&] { return reduce_sum(mul(shift_volume(p, lv, View::left), wg3)); }, {p});
        gs.check("expected_disparity",
                 [&] { return reduce_sum(mul(expected_disparity(p, lv), wg1)); }, {p});
        gs.check("discrete_reconstruct",
                 [&] {
                     ReconstructedImage rec = discrete_reconstruct(p, src, lv, View::left);
                     return reduce_mean(mul(rec.img, wgt));
                 },
                 {p, src});
        CameraRig rig;
        rig.baseline = 1.0;
        rig.focal_x = 10.0;
        Tensor depth = Tensor::zeros({1, 1, 3, 12});
        for (int64_t i = 0; i < depth.numel(); ++i) {
            double d = static_cast<double>(rng.randint(1, 4)) + rng.uniform(0.25, 0.75);
            depth.data()[i] = rig.baseline * rig.focal_x / d;
        }
        Tensor csrc = Tensor::randn({1, 2, 3, 12}, rng);
        Tensor cwgt = Tensor::randn({1, 2, 3, 12}, rng);
        gs.check("continuous_reconstruct",
                 [&] {
                     ReconstructedImage rec = continuous_reconstruct(csrc, depth, rig, View::left);
                     return reduce_mean(mul(rec.img, cwgt));
                 },
                 {csrc, depth});
        Tensor dpos = Tensor::uniform({1, 1, 2, 5}, rng, 1.0, 8.0);
        gs.check("disparity_to_depth",
                 [&] { return reduce_mean(disparity_to_depth(dpos, rig)); }, {dpos});
        gs.check("depth_to_disparity",
                 [&] { return reduce_mean(depth_to_disparity(dpos, rig)); }, {dpos});
        Tensor ha = normalized_volume(1, 4, 4, 6, rng);
        Tensor hb = normalized_volume(1, 4, 4, 6, rng);
        Tensor hm = Tensor::uniform({1, 1, 4, 6}, rng, 0.0, 1.0);
        Tensor hw = Tensor::randn({1, 4, 4, 6}, rng);
        gs.check("hybrid_volume",
                 [&] { return reduce_mean(mul(hybrid_volume(ha, hb, hm), hw)); }, {ha, hb});
        Tensor s1 = Tensor::randn({1, 3, 8, 16}, rng);
        Tensor s2 = Tensor::randn({1, 3, 8, 16}, rng);
        gs.check("ssim_loss", [&] { return ssim_loss(s1, s2); }, {s1, s2});
    }
}

Outcome criterion1() {
    double t0 = now_seconds();
    GradSuite gs;
    named_loss_checks(gs);
    op_checks(gs);
    double dt = now_seconds() - t0;
    bool pass = gs.failed().empty() && dt < 120.0;
    std::string detail =
        fmt("%d sites, worst rel err %.2e in %s (tol 1e-4), %.1fs (limit 120s)", gs.sites(),
            gs.worst(), gs.worst_name().c_str(), dt);
    if (!gs.failed().empty()) {
        detail += "; failed:";
        for (const auto& n : gs.failed()) detail += " " + n;
    }
    return {pass, detail};
}

// ---------------------------------------------------------------------------
// Criterion 2: every probability volume the forward passes produce sums to 1
// over channels, within 1e-6, across 100 random forwards.

double max_sum_deviation(const Tensor& p) {
    int64_t n = p.dim(0), l = p.dim(1), plane = p.dim(2) * p.dim(3);
    double worst = 0.0;
    for (int64_t b = 0; b < n; ++b)
        for (int64_t i = 0; i < plane; ++i) {
            double s = 0.0;
            for (int64_t ch = 0; ch < l; ++ch) s += p.data()[(b * l + ch) * plane + i];
            worst = std::max(worst, std::abs(s - 1.0));
        }
    return worst;
}

Outcome criterion2() {
    NetConfig cfg;
    cfg.widths = {8, 8, 16, 16};
    cfg.levels = 5;
    cfg.b_min = 1.0;
    cfg.b_max = 6.0;
    TioDepthNet net(cfg, 314);
    CameraRig rig{0.54, 100.0};
    Rng rng(315);
    NoGrad ng;
    double worst = 0.0;
    int volumes = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Tensor left = Tensor::uniform({1, 3, 16, 32}, rng, 0.0, 1.0);
        Tensor right = Tensor::uniform({1, 3, 16, 32}, rng, 0.0, 1.0);
        Tensor p_a = softmax_channel(net.forward_mono(left, Branch::auxiliary));
        Tensor p_m = softmax_channel(net.forward_mono(left, Branch::final_branch));
        StereoForward sf = net.forward_stereo(left, right);
        Tensor p_s_l = softmax_channel(sf.logits_left);
        Tensor p_s_r = softmax_channel(sf.logits_right);
        Tensor d_a = expected_disparity(p_a, net.levels());
        Tensor depth = disparity_to_depth(d_a, rig);
        Tensor band = half_object_edge_map(depth, opposite_occlusion_mask(d_a), 0.13);
        Tensor p_h = hybrid_volume(p_s_l, p_a, band);
        for (const Tensor* p : {&p_a, &p_m, &p_s_l, &p_s_r, &p_h}) {
            worst = std::max(worst, max_sum_deviation(*p));
            ++volumes;
        }
        for (int j = 0; j < 3; ++j) {
            worst = std::max(worst, max_sum_deviation(sf.attn_left[j]));
            worst = std::max(worst, max_sum_deviation(sf.attn_right[j]));
            volumes += 2;
        }
    }
    return {worst <= 1e-6,
            fmt("100 forwards, %d volumes, max |channel sum - 1| = %.2e (tol 1e-6)", volumes,
                worst)};
}

// ---------------------------------------------------------------------------
// Criterion 3: independently restated oracles. Scanline visibility by O(W^2)
// search, depth metrics by straight-line loops, one-hot reconstruction by a
// direct shift.

std::vector<double> brute_force_visibility(const std::vector<double>& d, double sign) {
    int64_t w = static_cast<int64_t>(d.size());
    std::vector<double> vis(d.size(), 1.0);
    for (int64_t x = 0; x < w; ++x) {
        int64_t t = std::lround(static_cast<double>(x) - sign * d[static_cast<size_t>(x)]);
        if (t < 0 || t > w - 1) continue;
        for (int64_t x2 = 0; x2 < w; ++x2) {
            if (x2 == x) continue;
            int64_t t2 = std::lround(static_cast<double>(x2) - sign * d[static_cast<size_t>(x2)]);
            if (t2 == t && d[static_cast<size_t>(x2)] > d[static_cast<size_t>(x)]) {
                vis[static_cast<size_t>(x)] = 0.0;
                break;
            }
        }
    }
    return vis;
}

double ref_median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

MetricReport ref_depth_metrics(const std::vector<double>& pred, const std::vector<double>& gt,
                               double cap, bool median_scale) {
    std::vector<double> p, g;
    for (size_t i = 0; i < gt.size(); ++i)
        if (gt[i] > 0.0) {
            p.push_back(pred[i]);
            g.push_back(gt[i]);
        }
    if (p.empty()) throw std::runtime_error("reference metrics: no valid pixels");
    if (median_scale) {
        double s = ref_median(g) / ref_median(p);
        for (auto& v : p) v *= s;
    }
    auto clampv = [cap](double v) { return std::min(std::max(v, 1e-6), cap); };
    MetricReport r;
    r.n_pixels = static_cast<int64_t>(p.size());
    double n = static_cast<double>(p.size());
    double se = 0.0, sle = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        double pv = clampv(p[i]), gv = clampv(g[i]);
        r.abs_rel += std::abs(pv - gv) / gv / n;
        r.sq_rel += (pv - gv) * (pv - gv) / gv / n;
        se += (pv - gv) * (pv - gv);
        sle += std::pow(std::log(pv) - std::log(gv), 2.0);
        double ratio = std::max(pv / gv, gv / pv);
        if (ratio < 1.25) r.a1 += 1.0 / n;
        if (ratio < 1.25 * 1.25) r.a2 += 1.0 / n;
        if (ratio < 1.25 * 1.25 * 1.25) r.a3 += 1.0 / n;
    }
    r.rmse = std::sqrt(se / n);
    r.log_rmse = std::sqrt(sle / n);
    return r;
}

std::pair<double, double> ref_disparity_metrics(const std::vector<double>& pred,
                                                const std::vector<double>& gt) {
    double sum = 0.0;
    double bad = 0.0;
    int64_t n = 0;
    for (size_t i = 0; i < gt.size(); ++i) {
        if (!(gt[i] > 0.0)) continue;
        double err = std::abs(pred[i] - gt[i]);
        sum += err;
        if (err > 3.0 || err / gt[i] > 0.05) bad += 1.0;
        ++n;
    }
    if (n == 0) throw std::runtime_error("reference metrics: no valid pixels");
    return {sum / static_cast<double>(n), bad / static_cast<double>(n)};
}

bool close12(double a, double b) {
    return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
}

Outcome criterion3() {
    // Occlusion masks against the exhaustive scanline search, exact.
    Rng rng(401);
    int occ_bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        int64_t w = rng.randint(4, 64);
        std::vector<double> row(static_cast<size_t>(w));
        bool integer_row = rng.coin();
        for (auto& v : row) {
            double limit = static_cast<double>(w) * 1.2;
            v = integer_row ? static_cast<double>(rng.randint(0, static_cast<int64_t>(limit)))
                            : rng.uniform(0.0, limit);
        }
        Tensor d = Tensor::from({1, 1, 1, w}, row);
        bool opposite = rng.coin();
        Tensor got = opposite ? opposite_occlusion_mask(d) : occlusion_mask(d);
        std::vector<double> want = brute_force_visibility(row, opposite ? -1.0 : 1.0);
        for (int64_t x = 0; x < w; ++x)
            if (got.data()[x] != want[static_cast<size_t>(x)]) ++occ_bad;
    }

    // Depth and disparity metrics against the per-pixel reference, 1e-12.
    double metrics_worst = 0.0;
    int metrics_bad = 0;
    for (int trial = 0; trial < 50; ++trial) {
        int64_t h = rng.randint(2, 7), w = rng.randint(2, 9);
        std::vector<double> pred(static_cast<size_t>(h * w)), gt(pred.size());
        for (auto& v : pred) v = rng.uniform(0.05, 40.0);
        for (auto& v : gt) v = rng.coin() ? rng.uniform(0.5, 35.0) : 0.0;
        if (std::none_of(gt.begin(), gt.end(), [](double v) { return v > 0.0; })) gt[0] = 3.0;
        bool scale = rng.coin();
        double cap = rng.uniform(10.0, 50.0);
        Tensor tp = Tensor::from({1, 1, h, w}, pred);
        Tensor tg = Tensor::from({1, 1, h, w}, gt);
        MetricReport got = depth_metrics(tp, tg, cap, scale);
        MetricReport want = ref_depth_metrics(pred, gt, cap, scale);
        std::vector<std::pair<double, double>> fields = {
            {got.abs_rel, want.abs_rel}, {got.sq_rel, want.sq_rel},
            {got.rmse, want.rmse},       {got.log_rmse, want.log_rmse},
            {got.a1, want.a1},           {got.a2, want.a2},
            {got.a3, want.a3}};
        auto [gepe, gd1] = disparity_metrics(tp, tg);
        auto [wepe, wd1] = ref_disparity_metrics(pred, gt);
        fields.push_back({gepe, wepe});
        fields.push_back({gd1, wd1});
        if (got.n_pixels != want.n_pixels) ++metrics_bad;
        for (auto [a, b] : fields) {
            metrics_worst =
                std::max(metrics_worst,
                         std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}));
            if (!close12(a, b)) ++metrics_bad;
        }
    }

    // One-hot discrete reconstruction equals the direct shift, exact, for
    // integer levels in both warp directions.
    int warp_bad = 0;
    DisparityLevels lv;
    lv.values = {1, 2, 3, 4, 5, 6};
    for (View target : {View::left, View::right}) {
        Tensor src = Tensor::zeros({2, 3, 4, 16});
        for (int64_t i = 0; i < src.numel(); ++i)
            src.data()[i] = static_cast<double>(rng.randint(0, 32));
        for (int hot = 0; hot < lv.count(); ++hot) {
            Tensor p = Tensor::zeros({2, static_cast<int64_t>(lv.count()), 4, 16});
            int64_t plane = 4 * 16;
            for (int64_t b = 0; b < 2; ++b)
                for (int64_t i = 0; i < plane; ++i)
                    p.data()[(b * lv.count() + hot) * plane + i] = 1.0;
            ReconstructedImage rec = discrete_reconstruct(p, src, lv, target);
            Tensor direct = shift_x(src, view_sign(target) * lv.values[static_cast<size_t>(hot)]);
            for (int64_t i = 0; i < direct.numel(); ++i)
                if (rec.img.data()[i] != direct.data()[i]) ++warp_bad;
        }
    }

    bool pass = occ_bad == 0 && metrics_bad == 0 && warp_bad == 0;
    return {pass, fmt("occlusion 1000 rows, %d mismatches; metrics worst dev %.2e "
                      "(tol 1e-12); one-hot warp %d mismatches",
                      occ_bad, metrics_worst, warp_bad)};
}

// ---------------------------------------------------------------------------
// Criterion 4: with identity query/key projections, a right feature map equal
// to the left shifted by hypothesis k makes the matching module's volume peak
// at channel k on at least 99% of interior pixels, for each of 9 levels.

Outcome criterion4() {
    NetConfig cfg;
    cfg.widths = {8, 8, 16, 16};
    cfg.levels = 9;
    cfg.b_min = 1.0;
    cfg.b_max = 9.0;
    DisparityLevels lv;
    lv.values = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    TioDepthNet net(cfg, lv, 99);
    for (const char* base : {"query", "key"}) {
        Tensor w, b;
        bool found_w = false, found_b = false;
        for (auto& p : net.parameters()) {
            if (p.name == std::string("mfm/block0/") + base + "_weight") {
                w = p.tensor;
                found_w = true;
            }
            if (p.name == std::string("mfm/block0/") + base + "_bias") {
                b = p.tensor;
                found_b = true;
            }
        }
        if (!found_w || !found_b)
            return {false, fmt("projection parameters for %s not found", base)};
        for (int64_t i = 0; i < w.numel(); ++i) w.data()[i] = 0.0;
        for (int64_t o = 0; o < 16; ++o) w.data()[o * 16 + o] = 1.0;
        for (int64_t i = 0; i < b.numel(); ++i) b.data()[i] = 0.0;
    }

    Rng rng(23);
    int64_t w = 64, h = 8, c = 16;
    // Channel signatures with period 16 > 2 * max level: no tested shift can
    // alias one column onto another, so the self-match alone scores.
    Tensor fl = Tensor::zeros({1, c, h, w});
    for (int64_t x = 0; x < w; ++x) {
        double amp = 1.0 + rng.uniform();
        int64_t ch = x % c;
        for (int64_t y = 0; y < h; ++y) fl.data()[(ch * h + y) * w + x] = amp;
    }
    double min_rate = 1.0;
    for (int k = 0; k < 9; ++k) {
        Tensor fr = shift_x(fl, -lv.values[static_cast<size_t>(k)]);
        auto [attn, fused] = net.mfm(0, fl, fr, View::left, w);
        (void)fused;
        int64_t hits = 0, total = 0;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 9; x <= w - 10; ++x) {
                int best = 0;
                double best_v = attn.data()[(0 * h + y) * w + x];
                for (int ch = 1; ch < 9; ++ch) {
                    double v = attn.data()[(ch * h + y) * w + x];
                    if (v > best_v) {
                        best_v = v;
                        best = ch;
                    }
                }
                ++total;
                if (best == k) ++hits;
            }
        min_rate = std::min(min_rate, static_cast<double>(hits) / static_cast<double>(total));
    }
    return {min_rate >= 0.99,
            fmt("9 levels, min interior peak-identification rate %.4f (need >= 0.99)",
                min_rate)};
}

// ---------------------------------------------------------------------------
// Criterion 5: one optimizer update per training step leaves the step's
// frozen parameter classes bit-identical while something else moves.

Outcome criterion5() {
    TrainConfig cfg;
    cfg.net.widths = {8, 8, 16, 16};
    cfg.net.levels = 5;
    cfg.net.b_min = 1.0;
    cfg.net.b_max = 10.0;
    cfg.batch = 2;
    cfg.height = 32;
    cfg.width = 48;
    cfg.seed = 5;
    cfg.aug.enabled = false;
    cfg.schedule.e1 = 1;
    cfg.schedule.e2 = 1;
    cfg.schedule.total_epochs = 3;
    TioDepthNet net(cfg.net, 5);
    Trainer trainer(cfg, net);
    SyntheticDataset data(2, 9, "train", cfg.height, cfg.width);
    StereoSample s0 = data.sample(0), s1 = data.sample(1);
    Tensor left = stack_batch({s0.left, s1.left});
    Tensor right = stack_batch({s0.right, s1.right});

    // The named freeze contracts: matching modules in step 1, the encoder
    // in step 2, encoder + matching + stereo head in step 3.
    if (class_in_step(ParamClass::mfm, 1) || class_in_step(ParamClass::encoder, 2) ||
        class_in_step(ParamClass::encoder, 3) || class_in_step(ParamClass::mfm, 3) ||
        class_in_step(ParamClass::out_stereo, 3))
        return {false, "step/class trainability table contradicts the freeze contract"};

    std::string detail;
    for (int step = 1; step <= 3; ++step) {
        std::map<std::string, std::vector<double>> before;
        for (const Param& p : net.parameters())
            before[p.name] =
                std::vector<double>(p.tensor.data(), p.tensor.data() + p.tensor.numel());
        if (step == 1) trainer.step1_update(left, right, 1);
        if (step == 2) trainer.step2_update(left, right, data.rig(), 1);
        if (step == 3) trainer.step3_update(left, right, data.rig(), 1);
        int frozen = 0, changed = 0, violations = 0;
        for (const Param& p : net.parameters()) {
            bool same = true;
            const std::vector<double>& prev = before[p.name];
            for (int64_t i = 0; i < p.tensor.numel(); ++i)
                if (prev[static_cast<size_t>(i)] != p.tensor.data()[i]) {
                    same = false;
                    break;
                }
            bool expect_frozen = !class_in_step(param_class(p.name), step);
            if (expect_frozen) {
                ++frozen;
                if (!same) ++violations;
            }
            if (!same) ++changed;
        }
        if (!detail.empty()) detail += ", ";
        detail += fmt("step %d: %d frozen params intact, %d moved", step, frozen, changed);
        if (violations > 0 || changed == 0)
            return {false, detail + fmt(" (%d freeze violations)", violations)};
    }
    return {true, detail};
}

// ---------------------------------------------------------------------------
// Criteria 6 and 7: the desk-scale end-to-end run. 200 synthetic scenes at
// 64x128,17 hypotheses in [1, 24], the full three-stage schedule compressed
// to 15 epochs, then held-out evaluation; plus the step-1-only baseline for
// the relative-ordering properties.

const char* kRunConfig =
    "epochs = 15\n"
    "e1 = 5\n"
    "e2 = 10\n"
    "lr_halving = 5,10,13\n"
    "batch = 4\n"
    "height = 64\n"
    "width = 128\n"
    "levels = 17\n"
    "b_min = 1\n"
    "b_max = 24\n"
    "widths = 16,32,64,128\n"
    "train_count = 200\n"
    "val_count = 40\n"
    "seed = 42\n"
    "crop_h = 48\n"
    "crop_w = 96\n"
    "scale_min = 0.8\n"
    "scale_max = 1.2\n";

struct E2EResult {
    double stereo_epe = 0.0;
    double mono_abs_rel = 0.0;
    double mono_epe = 0.0;
    double base_abs_rel = 0.0;
    double train_seconds = 0.0;
    bool valid = false;
};

E2EResult run_e2e() {
    E2EResult r;
    TrainConfig cfg = parse_train_config(kRunConfig);
    double t0 = now_seconds();
    SyntheticDataset train(cfg.train_count, cfg.seed, "train", cfg.height, cfg.width, cfg.rig,
                           cfg.data_d_min, cfg.data_d_max);
    SyntheticDataset val(cfg.val_count, cfg.seed, "val", cfg.height, cfg.width, cfg.rig,
                         cfg.data_d_min, cfg.data_d_max);

    TioDepthNet net(cfg.net, cfg.seed);
    Trainer trainer(cfg, net);
    for (int epoch = 0; epoch < cfg.schedule.total_epochs; ++epoch) {
        EpochStats st = trainer.run_epoch(train, epoch);
        std::printf("        e2e epoch %d/%d  step1 %.5f  step2 %.5f  step3 %.5f  (%.0fs)\n",
                    epoch + 1, cfg.schedule.total_epochs, st.step1, st.step2, st.step3,
                    now_seconds() - t0);
        std::fflush(stdout);
    }
    r.train_seconds = now_seconds() - t0;

    EvalOptions opts;
    MetricReport stereo = mean_report(evaluate_stereo(net, val, opts));
    MetricReport mono = mean_report(evaluate_mono(net, val, Branch::final_branch, opts));
    r.stereo_epe = stereo.epe;
    r.mono_abs_rel = mono.abs_rel;
    r.mono_epe = mono.epe;

    // Step-1-only baseline: the two gates never open, everything else equal.
    TrainConfig base = cfg;
    base.schedule.e1 = base.schedule.total_epochs;
    base.schedule.e2 = base.schedule.total_epochs;
    TioDepthNet base_net(base.net, base.seed);
    Trainer base_trainer(base, base_net);
    for (int epoch = 0; epoch < base.schedule.total_epochs; ++epoch) {
        EpochStats st = base_trainer.run_epoch(train, epoch);
        std::printf("        baseline epoch %d/%d  step1 %.5f  (%.0fs)\n", epoch + 1,
                    base.schedule.total_epochs, st.step1, now_seconds() - t0);
        std::fflush(stdout);
    }
    MetricReport base_mono = mean_report(evaluate_mono(base_net, val, Branch::auxiliary, opts));
    r.base_abs_rel = base_mono.abs_rel;
    r.valid = true;
    return r;
}

Outcome criterion6(const E2EResult& r) {
    if (!r.valid) return {false, "end-to-end run did not complete"};
    bool pass = r.stereo_epe < 1.0 && r.mono_abs_rel < 0.25 && r.train_seconds < 3600.0;
    return {pass, fmt("held-out stereo EPE %.4f px (< 1.0), mono Abs Rel %.4f (< 0.25), "
                      "training %.0fs (limit 3600s)",
                      r.stereo_epe, r.mono_abs_rel, r.train_seconds)};
}

Outcome criterion7(const E2EResult& r) {
    if (!r.valid) return {false, "end-to-end run did not complete"};
    bool ordering = r.stereo_epe < r.mono_epe;
    bool distill_ok = r.mono_abs_rel <= 1.05 * r.base_abs_rel;
    return {ordering && distill_ok,
            fmt("stereo EPE %.4f %s mono EPE %.4f; distilled Abs Rel %.4f %s 1.05 x "
                "baseline %.4f",
                r.stereo_epe, ordering ? "<" : ">=", r.mono_epe, r.mono_abs_rel,
                distill_ok ? "<=" : ">", r.base_abs_rel)};
}

// ---------------------------------------------------------------------------
// Criterion 8: the schedule arithmetic reproduces the frozen table exactly.

Outcome criterion8() {
    StageSchedule s;  // gates at 20 and 30, halvings at {20, 30, 40, 45}
    int bad = 0;
    auto expect_steps = [&](int epoch, std::vector<int> want) {
        if (active_steps(epoch, s) != want) ++bad;
    };
    expect_steps(0, {1});
    expect_steps(20, {1, 2});
    expect_steps(30, {1, 2, 3});
    expect_steps(40, {1, 2, 3});
    expect_steps(45, {1, 2, 3});

    auto expect_lr = [&](int epoch, int step, ParamClass c, double want) {
        if (learning_rate(epoch, step, c, s) != want) ++bad;
    };
    expect_lr(0, 1, ParamClass::encoder, 1e-4);
    expect_lr(20, 1, ParamClass::encoder, 1e-4 * 0.5);
    expect_lr(30, 1, ParamClass::encoder, 1e-4 * 0.5 * 0.5);
    expect_lr(40, 1, ParamClass::encoder, 1e-4 * 0.5 * 0.5 * 0.5);
    expect_lr(45, 1, ParamClass::encoder, 1e-4 * 0.5 * 0.5 * 0.5 * 0.5);
    expect_lr(20, 2, ParamClass::mfm, 1e-4);
    expect_lr(20, 2, ParamClass::out_stereo, 1e-4);
    expect_lr(20, 2, ParamClass::out_mono, 1e-4 * 0.1);
    expect_lr(20, 2, ParamClass::decoder_block, 1e-4 * 0.1);
    expect_lr(30, 2, ParamClass::mfm, 1e-4 * 0.5);
    expect_lr(40, 2, ParamClass::mfm, 1e-4 * 0.5 * 0.5);
    expect_lr(45, 2, ParamClass::mfm, 1e-4 * 0.5 * 0.5 * 0.5);
    expect_lr(30, 3, ParamClass::agg_final, 1e-4);
    expect_lr(30, 3, ParamClass::out_mono, 1e-4 * 0.1);
    expect_lr(30, 3, ParamClass::agg_shared, 1e-4 * 0.1);
    expect_lr(40, 3, ParamClass::agg_final, 1e-4 * 0.5);
    expect_lr(45, 3, ParamClass::agg_final, 1e-4 * 0.5 * 0.5);

    // Steps before their gates and classes outside a step have no rate.
    for (auto probe : {std::pair<int, int>{10, 2}, {20, 3}}) {
        try {
            learning_rate(probe.first, probe.second, ParamClass::mfm, s);
            ++bad;
        } catch (const std::exception&) {
        }
    }
    return {bad == 0,
            fmt("active steps and learning rates exact at epochs {0,20,30,40,45}, %d "
                "deviations",
                bad)};
}

}  // namespace

int main() {
    struct Row {
        int id;
        const char* name;
        Outcome out;
    };
    std::vector<Row> rows;
    auto run = [&](int id, const char* name, const std::function<Outcome()>& f) {
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("[%s] %d. %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
        std::fflush(stdout);
        rows.push_back({id, name, o});
    };

    run(1, "gradient suite", criterion1);
    run(2, "normalization suite", criterion2);
    run(3, "oracle suite", criterion3);
    run(4, "matching-module identification", criterion4);
    run(5, "freezing suite", criterion5);

    E2EResult e2e;
    try {
        e2e = run_e2e();
    } catch (const std::exception& e) {
        std::printf("end-to-end run failed: %s\n", e.what());
    }
    run(6, "end-to-end desk-scale run", [&] { return criterion6(e2e); });
    run(7, "relative ordering", [&] { return criterion7(e2e); });
    run(8, "schedule arithmetic", criterion8);

    int passed = 0;
    for (const Row& r : rows) passed += r.out.pass ? 1 : 0;
    std::printf("ACCEPTANCE: %d/%d criteria passed\n", passed, static_cast<int>(rows.size()));
    return passed == static_cast<int>(rows.size()) ? 0 : 1;
}
