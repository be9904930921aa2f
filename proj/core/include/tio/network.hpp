#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tio/levels.hpp"
#include "tio/tensor.hpp"
#include "tio/warp.hpp"

namespace tio {

// Which branch convolution the aggregation blocks route through. The
// auxiliary branch serves the first training phase and the stereo path;
// the final branch is trained last by distillation.
enum class Branch { auxiliary, final_branch };

struct NetConfig {
    std::array<int64_t, 4> widths = {16, 32, 64, 128};  // encoder stage widths
    int64_t in_channels = 3;
    int levels = 17;      // disparity hypotheses per volume
    double b_min = 1.0;   // smallest hypothesis, pixels
    double b_max = 24.0;  // largest hypothesis, pixels

    void validate() const;
};

// A named trainable tensor. The name is "group/block/param"; groups partition
// the network: encoder, agg_blocks, decoder_block, mfm, out_mono, out_stereo.
struct Param {
    std::string name;
    Tensor tensor;
};

struct FeaturePyramid {
    std::array<Tensor, 4> c;  // strides 2, 4, 8, 16
};

struct StereoForward {
    Tensor logits_left;   // N x L x H x W, pre-softmax
    Tensor logits_right;
    std::array<Tensor, 3> attn_left;   // matching-cost volumes at strides 8, 4, 2
    std::array<Tensor, 3> attn_right;
};

// Two-in-one depth network: one weight-shared encoder, three aggregation
// blocks with switchable branch convolutions, a feature-matching module per
// aggregation stage for the stereo path, and separate mono/stereo output
// convolutions producing disparity-logit volumes at input resolution.
class TioDepthNet {
public:
    TioDepthNet(const NetConfig& cfg, uint64_t seed);

    // Same network with an explicit hypothesis set (count must match
    // cfg.levels) instead of the geometric one derived from b_min/b_max.
    TioDepthNet(const NetConfig& cfg, DisparityLevels levels, uint64_t seed);

    const NetConfig& config() const { return cfg_; }
    const DisparityLevels& levels() const { return levels_; }

    // img: N x C x H x W with H, W divisible by 16.
    FeaturePyramid encode(const Tensor& img) const;

    // Upsample f by 2, concatenate the skip feature, fuse, then apply the
    // selected branch convolution. block selects the stage (0, 1, 2).
    Tensor aggregate(int block, const Tensor& f, const Tensor& skip, Branch branch) const;

    // Correlate own-view features against the other view's at every
    // disparity hypothesis (scaled to feature resolution against full_w) and
    // fuse the resulting volume back into the features.
    // Returns (attention volume, fused features).
    std::pair<Tensor, Tensor> mfm(int block, const Tensor& f_own, const Tensor& f_other,
                                  View own_view, int64_t full_w) const;

    // Monocular path through the selected branch: logit volume N x L x H x W.
    Tensor forward_mono(const Tensor& img, Branch branch) const;

    // Binocular path (auxiliary branch + feature matching at each stage).
    StereoForward forward_stereo(const Tensor& left, const Tensor& right) const;

    std::vector<Param>& parameters() { return params_; }
    const std::vector<Param>& parameters() const { return params_; }

private:
    struct Conv {
        Tensor w, b;
    };

    Tensor decode_head(const Tensor& f, const Conv& out_conv) const;

    NetConfig cfg_;
    DisparityLevels levels_;

    std::array<std::array<Conv, 2>, 4> enc_;           // two convs per stage
    std::array<Conv, 3> agg_fuse_, agg_aux_, agg_final_;
    std::array<Conv, 3> mfm_query_, mfm_key_, mfm_fuse_, mfm_se0_, mfm_se1_;
    std::array<Conv, 2> dec_;
    Conv out_mono_, out_stereo_;

    std::vector<Param> params_;
};

}  // namespace tio
