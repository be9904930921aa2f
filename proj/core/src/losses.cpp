#include "tio/losses.hpp"

#include <cmath>

#include "tio/levels.hpp"

namespace tio {

void LossWeights::validate() const {
    check(lambda1 >= 0 && lambda2 >= 0 && lambda3 >= 0 && lambda4 >= 0,
          "loss weights must be non-negative");
    check(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
    check(beta >= 0.0 && gamma >= 0.0, "beta and gamma must be non-negative");
    check(t1 >= 0.0 && t2 > 0.0, "thresholds must be positive");
}

namespace {

void check_same_images(const Tensor& a, const Tensor& b, const char* op) {
    check(a.defined() && b.defined() && a.ndim() == 4 && b.ndim() == 4,
          std::string(op) + ": expected N x C x H x W tensors");
    check(a.shape() == b.shape(), std::string(op) + ": shape mismatch");
}

void check_map_like(const Tensor& m, const Tensor& img, const char* op) {
    check(m.defined() && m.ndim() == 4 && m.dim(1) == 1,
          std::string(op) + ": mask must be N x 1 x H x W");
    check(m.dim(0) == img.dim(0) && m.dim(2) == img.dim(2) && m.dim(3) == img.dim(3),
          std::string(op) + ": mask size does not match");
}

}  // namespace

FeatureExtractor::FeatureExtractor(uint64_t seed, int64_t in_channels)
    : in_channels_(in_channels) {
    check(in_channels >= 1, "feature extractor: need at least one input channel");
    const int64_t widths[3] = {8, 16, 32};
    Rng rng(splitmix64(seed));
    int64_t c_in = in_channels;
    for (int stage = 0; stage < 3; ++stage) {
        int64_t c_out = widths[stage];
        double stddev = std::sqrt(2.0 / static_cast<double>(c_in * 9));
        weights_.push_back(Tensor::randn({c_out, c_in, 3, 3}, rng, stddev));
        biases_.push_back(Tensor::zeros({c_out}));
        c_in = c_out;
    }
}

std::vector<Tensor> FeatureExtractor::features(const Tensor& img) const {
    check(img.defined() && img.ndim() == 4 && img.dim(1) == in_channels_,
          "feature extractor: bad input shape");
    check(img.dim(2) % 8 == 0 && img.dim(3) % 8 == 0,
          "feature extractor: height and width must be divisible by 8");
    std::vector<Tensor> out;
    Tensor x = img;
    for (size_t stage = 0; stage < weights_.size(); ++stage) {
        x = avgpool2x2(elu(conv2d(x, weights_[stage], biases_[stage], 1, 1)));
        out.push_back(x);
    }
    return out;
}

Tensor ssim_loss(const Tensor& a, const Tensor& b) {
    check_same_images(a, b, "ssim_loss");
    const double c1 = 1e-4, c2 = 9e-4;  // (0.01 K)^2, (0.03 K)^2 on unit range
    Tensor mu_a = avgpool3x3(a);
    Tensor mu_b = avgpool3x3(b);
    Tensor var_a = sub(avgpool3x3(mul(a, a)), mul(mu_a, mu_a));
    Tensor var_b = sub(avgpool3x3(mul(b, b)), mul(mu_b, mu_b));
    Tensor cov = sub(avgpool3x3(mul(a, b)), mul(mu_a, mu_b));
    Tensor num = mul(add(mul(mul(mu_a, mu_b), 2.0), c1), add(mul(cov, 2.0), c2));
    Tensor den =
        mul(add(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), c1), add(add(var_a, var_b), c2));
    Tensor idx = div(num, den);
    return reduce_mean(mul(sub(1.0, idx), 0.5));
}

Tensor mono_reconstruction_loss(const Tensor& rec, const Tensor& target,
                                const FeatureExtractor& fx, double beta) {
    check_same_images(rec, target, "mono_reconstruction_loss");
    check(beta >= 0.0, "mono_reconstruction_loss: beta must be non-negative");
    Tensor loss = reduce_mean(abs(sub(rec, target)));
    if (beta == 0.0) return loss;
    std::vector<Tensor> fa = fx.features(rec);
    std::vector<Tensor> fb = fx.features(target);
    Tensor perceptual = Tensor::scalar(0.0);
    for (size_t i = 0; i < fa.size(); ++i) {
        Tensor d = sub(fa[i], fb[i]);
        Tensor dist = sqrt_safe(reduce_sum_axis(mul(d, d), 1));
        perceptual = add(perceptual, reduce_mean(dist));
    }
    return add(loss, mul(perceptual, beta));
}

Tensor smoothness_loss(const Tensor& d, const Tensor& img, double gamma) {
    check(d.defined() && d.ndim() == 4 && d.dim(1) == 1,
          "smoothness_loss: map must be N x 1 x H x W");
    check(img.defined() && img.ndim() == 4 && img.dim(0) == d.dim(0) &&
              img.dim(2) == d.dim(2) && img.dim(3) == d.dim(3),
          "smoothness_loss: image size does not match");
    check(d.dim(2) >= 2 && d.dim(3) >= 2, "smoothness_loss: need at least 2 x 2 maps");
    Tensor wx = exp(mul(reduce_mean_axis(abs(forward_diff_x(img)), 1), -gamma));
    Tensor wy = exp(mul(reduce_mean_axis(abs(forward_diff_y(img)), 1), -gamma));
    Tensor tx = reduce_mean(mul(abs(forward_diff_x(d)), wx));
    Tensor ty = reduce_mean(mul(abs(forward_diff_y(d)), wy));
    return add(tx, ty);
}

Tensor composite_target(const Tensor& img, const Tensor& filler, const Tensor& m) {
    check_same_images(img, filler, "composite_target");
    check_map_like(m, img, "composite_target");
    Tensor mb = broadcast_channel(m, img.dim(1));
    return add(mul(mb, img), mul(sub(1.0, mb), filler));
}

Tensor stereo_reconstruction_loss(const Tensor& rec, const Tensor& target, double alpha) {
    check(alpha >= 0.0 && alpha <= 1.0, "stereo_reconstruction_loss: alpha in [0, 1]");
    check_same_images(rec, target, "stereo_reconstruction_loss");
    Tensor l1 = reduce_mean(abs(sub(rec, target)));
    return add(mul(l1, alpha), mul(ssim_loss(rec, target), 1.0 - alpha));
}

Tensor cost_volume_loss(const std::vector<Tensor>& volumes, const Tensor& reference,
                        double t1) {
    check(!volumes.empty(), "cost_volume_loss: need at least one volume");
    check(reference.defined() && reference.ndim() == 4,
          "cost_volume_loss: reference must be N x L x H x W");
    Tensor ref = reference.detach();
    Tensor loss = Tensor::scalar(0.0);
    for (const Tensor& v : volumes) {
        check(v.defined() && v.ndim() == 4, "cost_volume_loss: volume must be 4-d");
        check(v.dim(0) == ref.dim(0) && v.dim(1) == ref.dim(1),
              "cost_volume_loss: volume batch or channels do not match reference");
        Tensor ref_at = resize_bilinear(ref, v.dim(2), v.dim(3));
        Tensor diff = reduce_sum_axis(abs(sub(v, ref_at)), 1);
        // Hard selection of the coordinates above the threshold; the mask and
        // its count act as constants of the surrounding graph.
        Tensor sel = Tensor::zeros(diff.shape());
        int64_t count = 0;
        for (int64_t i = 0; i < diff.numel(); ++i)
            if (diff.data()[i] > t1) {
                sel.data()[i] = 1.0;
                ++count;
            }
        if (count == 0) continue;
        loss = add(loss, mul(reduce_sum(mul(diff, sel)), 1.0 / static_cast<double>(count)));
    }
    return loss;
}

Tensor guidance_loss(const Tensor& d_teacher, const Tensor& d, const Tensor& m_out) {
    check_same_images(d_teacher, d, "guidance_loss");
    check(d.dim(1) == 1, "guidance_loss: maps must be N x 1 x H x W");
    check_map_like(m_out, d, "guidance_loss");
    check(d.dim(2) >= 2 && d.dim(3) >= 2, "guidance_loss: need at least 2 x 2 maps");
    Tensor dt = d_teacher.detach();
    Tensor gx = reduce_mean(abs(sub(forward_diff_x(dt), forward_diff_x(d))));
    Tensor gy = reduce_mean(abs(sub(forward_diff_y(dt), forward_diff_y(d))));
    Tensor direct = reduce_mean(mul(m_out, abs(sub(dt, d))));
    return add(add(gx, gy), direct);
}

Tensor hybrid_volume(const Tensor& p_base, const Tensor& p_override, const Tensor& m) {
    check_same_images(p_base, p_override, "hybrid_volume");
    check_map_like(m, p_base, "hybrid_volume");
    validate_probability_volume(p_base);
    validate_probability_volume(p_override);
    Tensor mb = broadcast_channel(m, p_base.dim(1));
    return add(mul(sub(1.0, mb), p_base), mul(mb, p_override));
}

Tensor distill_loss(const Tensor& p_target, const Tensor& p) {
    check_same_images(p_target, p, "distill_loss");
    Tensor t = p_target.detach();
    // Constant negative-entropy part of the divergence, with 0 ln 0 = 0.
    double neg_entropy = 0.0;
    for (int64_t i = 0; i < t.numel(); ++i) {
        double v = t.data()[i];
        if (v > 0.0) neg_entropy += v * std::log(v);
    }
    int64_t pixels = t.dim(0) * t.dim(2) * t.dim(3);
    neg_entropy /= static_cast<double>(pixels);
    Tensor cross = reduce_mean(reduce_sum_axis(mul(t, log(max(p, 1e-8))), 1));
    return add(Tensor::scalar(neg_entropy), neg(cross));
}

Tensor mono_total_loss(const Tensor& rec, const Tensor& smo, const LossWeights& w) {
    return add(rec, mul(smo, w.lambda1));
}

Tensor stereo_total_loss(const Tensor& rec, const Tensor& smo, const Tensor& cos,
                         const Tensor& gui, const LossWeights& w) {
    return add(add(rec, mul(smo, w.lambda2)), add(mul(cos, w.lambda3), mul(gui, w.lambda4)));
}

}  // namespace tio
