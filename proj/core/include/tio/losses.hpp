#pragma once

#include <cstdint>
#include <vector>

#include "tio/tensor.hpp"

namespace tio {

// Scalar weights and thresholds shared by the training objectives.
struct LossWeights {
    double lambda1 = 0.0008;  // smoothness weight in the monocular total
    double lambda2 = 0.008;   // smoothness weight in the stereo total
    double lambda3 = 0.01;    // cost-volume guidance weight
    double lambda4 = 0.01;    // disparity guidance weight
    double alpha = 0.15;      // L1 share of the stereo photometric mix
    double beta = 0.01;       // perceptual share of the mono photometric loss
    double gamma = 2.0;       // edge sharpness of the smoothness weighting
    double t1 = 1.0;          // cost-volume selection threshold
    double t2 = 0.13;         // depth-edge threshold for the edge band mask

    void validate() const;  // all non-negative, alpha in [0,1]
};

// Fixed convolutional pyramid backing the perceptual term: three
// conv3x3 + ELU + avgpool2x2 stages whose outputs sit at strides 2, 4, 8.
// The weights are drawn once from the seed and never trained — gradients
// flow through to the input image but stop at the filters.
class FeatureExtractor {
public:
    explicit FeatureExtractor(uint64_t seed, int64_t in_channels = 3);

    // img: N x C x H x W with H, W divisible by 8 -> three feature maps.
    std::vector<Tensor> features(const Tensor& img) const;

    int64_t in_channels() const { return in_channels_; }

private:
    int64_t in_channels_;
    std::vector<Tensor> weights_;
    std::vector<Tensor> biases_;
};

// Mean over pixels of (1 - SSIM(a, b)) / 2 with 3x3 edge-replicated
// mean-pooled statistics, C1 = 0.01^2, C2 = 0.03^2. Range [0, 1].
Tensor ssim_loss(const Tensor& a, const Tensor& b);

// mean |rec - target| + beta * sum over pyramid scales of the spatial mean
// of the channelwise L2 feature distance.
Tensor mono_reconstruction_loss(const Tensor& rec, const Tensor& target,
                                const FeatureExtractor& fx, double beta);

// Edge-aware first-order smoothness: mean(|dx d| e^{-gamma mean_c|dx I|}) +
// mean(|dy d| e^{-gamma mean_c|dy I|}), forward differences.
Tensor smoothness_loss(const Tensor& d, const Tensor& img, double gamma);

// m * img + (1 - m) * filler, with the single-channel mask broadcast over
// color channels. Replaces pixels that are invisible in the other view.
Tensor composite_target(const Tensor& img, const Tensor& filler, const Tensor& m);

// alpha * mean|rec - target| + (1 - alpha) * ssim_loss(rec, target).
Tensor stereo_reconstruction_loss(const Tensor& rec, const Tensor& target, double alpha);

// For each predicted volume: resample the reference volume to its size,
// take the per-pixel channel-summed L1 difference, and average it over the
// pixels where it exceeds t1 (their count is the normalizer; none -> 0).
// Summed over volumes. Gradients reach the predicted volumes only — the
// reference is treated as a constant teacher.
Tensor cost_volume_loss(const std::vector<Tensor>& volumes, const Tensor& reference,
                        double t1);

// mean|dx d_t - dx d| + mean|dy d_t - dy d| + mean(m_out * |d_t - d|).
// d_t is the constant teacher; gradients reach d only.
Tensor guidance_loss(const Tensor& d_teacher, const Tensor& d, const Tensor& m_out);

// (1 - m) * p_base + m * p_override, mask broadcast over channels. Convex,
// so normalized inputs stay normalized.
Tensor hybrid_volume(const Tensor& p_base, const Tensor& p_override, const Tensor& m);

// mean over pixels of the channelwise KL divergence sum_n t_n ln(t_n / p_n),
// with p floored at 1e-8 and 0 ln 0 = 0. The target is the constant teacher;
// gradients reach p only.
Tensor distill_loss(const Tensor& p_target, const Tensor& p);

// rec + lambda1 * smo.
Tensor mono_total_loss(const Tensor& rec, const Tensor& smo, const LossWeights& w);

// rec + lambda2 * smo + lambda3 * cos + lambda4 * gui.
Tensor stereo_total_loss(const Tensor& rec, const Tensor& smo, const Tensor& cos,
                         const Tensor& gui, const LossWeights& w);

}  // namespace tio
