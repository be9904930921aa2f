#include "tio/network.hpp"

#include <cmath>

namespace tio {

void NetConfig::validate() const {
    for (int64_t w : widths) check(w >= 4, "net config: stage widths must be at least 4");
    check(in_channels >= 1, "net config: need at least one input channel");
    check(levels >= 2, "net config: need at least two disparity levels");
    check(b_min > 0.0 && b_max > b_min, "net config: need 0 < b_min < b_max");
}

TioDepthNet::TioDepthNet(const NetConfig& cfg, uint64_t seed)
    : TioDepthNet(cfg, make_levels(cfg.b_min, cfg.b_max, cfg.levels), seed) {}

TioDepthNet::TioDepthNet(const NetConfig& cfg, DisparityLevels levels, uint64_t seed)
    : cfg_(cfg), levels_(std::move(levels)) {
    cfg_.validate();
    check(levels_.count() == cfg_.levels,
          "network: hypothesis count does not match the configured volume size");
    for (size_t i = 0; i < levels_.values.size(); ++i) {
        check(levels_.values[i] > 0.0, "network: hypotheses must be positive");
        if (i > 0)
            check(levels_.values[i] > levels_.values[i - 1],
                  "network: hypotheses must be strictly increasing");
    }
    Rng rng(splitmix64(seed));

    auto make = [&rng](int64_t out, int64_t in, int64_t k) {
        double stddev = std::sqrt(2.0 / static_cast<double>(in * k * k));
        Conv c{Tensor::randn({out, in, k, k}, rng, stddev), Tensor::zeros({out})};
        c.w.set_requires_grad(true);
        c.b.set_requires_grad(true);
        return c;
    };
    auto reg = [this](const std::string& group, const std::string& block,
                      const std::string& base, Conv& c) {
        params_.push_back({group + "/" + block + "/" + base + "_weight", c.w});
        params_.push_back({group + "/" + block + "/" + base + "_bias", c.b});
    };

    int64_t c_in = cfg_.in_channels;
    for (int s = 0; s < 4; ++s) {
        int64_t w = cfg_.widths[static_cast<size_t>(s)];
        enc_[s][0] = make(w, c_in, 3);
        enc_[s][1] = make(w, w, 3);
        std::string block = "stage" + std::to_string(s);
        reg("encoder", block, "conv0", enc_[s][0]);
        reg("encoder", block, "conv1", enc_[s][1]);
        c_in = w;
    }

    for (int j = 0; j < 3; ++j) {
        int64_t hi = cfg_.widths[static_cast<size_t>(3 - j)];
        int64_t out = cfg_.widths[static_cast<size_t>(2 - j)];
        agg_fuse_[j] = make(out, hi + out, 3);
        agg_aux_[j] = make(out, out, 3);
        agg_final_[j] = make(out, out, 3);
        std::string block = "block" + std::to_string(j);
        reg("agg_blocks", block, "fuse", agg_fuse_[j]);
        reg("agg_blocks", block, "aux", agg_aux_[j]);
        reg("agg_blocks", block, "final", agg_final_[j]);
    }

    dec_[0] = make(cfg_.widths[0], cfg_.widths[0], 3);
    dec_[1] = make(cfg_.widths[0], cfg_.widths[0], 3);
    reg("decoder_block", "main", "conv0", dec_[0]);
    reg("decoder_block", "main", "conv1", dec_[1]);

    for (int j = 0; j < 3; ++j) {
        int64_t c = cfg_.widths[static_cast<size_t>(2 - j)];
        int64_t r = std::max<int64_t>(c / 4, 1);
        mfm_query_[j] = make(c, c, 1);
        mfm_key_[j] = make(c, c, 1);
        mfm_fuse_[j] = make(c, cfg_.levels + c, 3);
        mfm_se0_[j] = make(r, c, 1);
        mfm_se1_[j] = make(c, r, 1);
        std::string block = "block" + std::to_string(j);
        reg("mfm", block, "query", mfm_query_[j]);
        reg("mfm", block, "key", mfm_key_[j]);
        reg("mfm", block, "fuse", mfm_fuse_[j]);
        reg("mfm", block, "se0", mfm_se0_[j]);
        reg("mfm", block, "se1", mfm_se1_[j]);
    }

    out_mono_ = make(cfg_.levels, cfg_.widths[0], 3);
    out_stereo_ = make(cfg_.levels, cfg_.widths[0], 3);
    reg("out_mono", "main", "out", out_mono_);
    reg("out_stereo", "main", "out", out_stereo_);
}

FeaturePyramid TioDepthNet::encode(const Tensor& img) const {
    check(img.defined() && img.ndim() == 4 && img.dim(1) == cfg_.in_channels,
          "encode: expected N x " + std::to_string(cfg_.in_channels) + " x H x W");
    check(img.dim(2) % 16 == 0 && img.dim(3) % 16 == 0,
          "encode: height and width must be divisible by 16");
    FeaturePyramid pyr;
    Tensor x = img;
    for (int s = 0; s < 4; ++s) {
        x = avgpool2x2(x);
        x = elu(conv2d(x, enc_[s][0].w, enc_[s][0].b, 1, 1));
        x = elu(conv2d(x, enc_[s][1].w, enc_[s][1].b, 1, 1));
        pyr.c[static_cast<size_t>(s)] = x;
    }
    return pyr;
}

Tensor TioDepthNet::aggregate(int block, const Tensor& f, const Tensor& skip,
                              Branch branch) const {
    check(block >= 0 && block < 3, "aggregate: block out of range");
    check(f.defined() && skip.defined() && f.ndim() == 4 && skip.ndim() == 4,
          "aggregate: expected N x C x H x W features");
    check(skip.dim(2) == 2 * f.dim(2) && skip.dim(3) == 2 * f.dim(3),
          "aggregate: skip feature must be at twice the resolution");
    Tensor cat = concat_channels({upsample2x(f), skip});
    Tensor h = elu(conv2d(cat, agg_fuse_[block].w, agg_fuse_[block].b, 1, 1));
    const Conv& br = branch == Branch::auxiliary ? agg_aux_[block] : agg_final_[block];
    return elu(conv2d(h, br.w, br.b, 1, 1));
}

std::pair<Tensor, Tensor> TioDepthNet::mfm(int block, const Tensor& f_own,
                                           const Tensor& f_other, View own_view,
                                           int64_t full_w) const {
    check(block >= 0 && block < 3, "mfm: block out of range");
    check(f_own.defined() && f_other.defined() && f_own.ndim() == 4,
          "mfm: expected N x C x H x W features");
    check(f_own.shape() == f_other.shape(), "mfm: view features must match in shape");
    check(full_w > 0, "mfm: full image width must be positive");
    Tensor q = conv2d(f_own, mfm_query_[block].w, mfm_query_[block].b, 1, 0);
    Tensor k = conv2d(f_other, mfm_key_[block].w, mfm_key_[block].b, 1, 0);
    double res_scale =
        static_cast<double>(f_own.dim(3)) / static_cast<double>(full_w);
    double sgn = view_sign(own_view);
    double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(f_own.dim(1)));
    std::vector<Tensor> scores;
    scores.reserve(levels_.values.size());
    for (double b : levels_.values) {
        Tensor ks = shift_x(k, sgn * res_scale * b);
        scores.push_back(mul(reduce_sum_axis(mul(q, ks), 1), inv_sqrt_c));
    }
    Tensor attn = softmax_channel(concat_channels(scores));
    Tensor h = elu(conv2d(concat_channels({attn, f_own}), mfm_fuse_[block].w,
                          mfm_fuse_[block].b, 1, 1));
    Tensor g = global_avg_pool(h);
    Tensor gate = sigmoid(conv2d(elu(conv2d(g, mfm_se0_[block].w, mfm_se0_[block].b, 1, 0)),
                                 mfm_se1_[block].w, mfm_se1_[block].b, 1, 0));
    return {attn, scale_channels(h, gate)};
}

Tensor TioDepthNet::decode_head(const Tensor& f, const Conv& out_conv) const {
    Tensor x = elu(conv2d(f, dec_[0].w, dec_[0].b, 1, 1));
    x = elu(conv2d(x, dec_[1].w, dec_[1].b, 1, 1));
    x = upsample2x(x);
    return conv2d(x, out_conv.w, out_conv.b, 1, 1);
}

Tensor TioDepthNet::forward_mono(const Tensor& img, Branch branch) const {
    FeaturePyramid pyr = encode(img);
    Tensor f = pyr.c[3];
    for (int j = 0; j < 3; ++j) f = aggregate(j, f, pyr.c[static_cast<size_t>(2 - j)], branch);
    return decode_head(f, out_mono_);
}

StereoForward TioDepthNet::forward_stereo(const Tensor& left, const Tensor& right) const {
    check(left.defined() && right.defined() && left.ndim() == 4 && right.ndim() == 4 &&
              left.shape() == right.shape(),
          "forward_stereo: views must share one shape");
    int64_t full_w = left.dim(3);
    FeaturePyramid pl = encode(left);
    FeaturePyramid pr = encode(right);
    Tensor fl = pl.c[3], fr = pr.c[3];
    StereoForward out;
    for (int j = 0; j < 3; ++j) {
        fl = aggregate(j, fl, pl.c[static_cast<size_t>(2 - j)], Branch::auxiliary);
        fr = aggregate(j, fr, pr.c[static_cast<size_t>(2 - j)], Branch::auxiliary);
        auto [al, fl_next] = mfm(j, fl, fr, View::left, full_w);
        auto [ar, fr_next] = mfm(j, fr, fl, View::right, full_w);
        out.attn_left[static_cast<size_t>(j)] = al;
        out.attn_right[static_cast<size_t>(j)] = ar;
        fl = fl_next;
        fr = fr_next;
    }
    out.logits_left = decode_head(fl, out_stereo_);
    out.logits_right = decode_head(fr, out_stereo_);
    return out;
}

}  // namespace tio
