#include "tio/evaluate.hpp"

#include "tio/common.hpp"
#include "tio/levels.hpp"

namespace tio {

Tensor predict_mono_disparity(const TioDepthNet& net, const Tensor& img, Branch branch) {
    NoGrad guard;
    Tensor p = softmax_channel(net.forward_mono(img, branch));
    return expected_disparity(p, net.levels());
}

Tensor predict_stereo_disparity(const TioDepthNet& net, const Tensor& left,
                                const Tensor& right, View view) {
    NoGrad guard;
    StereoForward f = net.forward_stereo(left, right);
    Tensor p = softmax_channel(view == View::left ? f.logits_left : f.logits_right);
    return expected_disparity(p, net.levels());
}

namespace {

MetricReport report_from_disparity(const Tensor& d_pred, const StereoSample& s,
                                   bool median_scale, const EvalOptions& opts) {
    Tensor depth_pred = disparity_to_depth(d_pred, s.rig);
    Tensor depth_gt = disparity_to_depth(s.disparity_left, s.rig);
    MetricReport r = depth_metrics(depth_pred, depth_gt, opts.depth_cap, median_scale);
    auto [epe, d1] = disparity_metrics(d_pred, s.disparity_left, opts.d1_both);
    r.epe = epe;
    r.d1 = d1;
    return r;
}

}  // namespace

MetricReport eval_mono_sample(const TioDepthNet& net, const StereoSample& s, Branch branch,
                              const EvalOptions& opts) {
    Tensor d = predict_mono_disparity(net, s.left, branch);
    return report_from_disparity(d, s, opts.median_scale, opts);
}

MetricReport eval_stereo_sample(const TioDepthNet& net, const StereoSample& s,
                                const EvalOptions& opts) {
    Tensor d = predict_stereo_disparity(net, s.left, s.right, View::left);
    return report_from_disparity(d, s, /*median_scale=*/false, opts);
}

std::vector<MetricReport> evaluate_mono(const TioDepthNet& net, const SyntheticDataset& data,
                                        Branch branch, const EvalOptions& opts) {
    std::vector<MetricReport> out;
    out.reserve(static_cast<size_t>(data.size()));
    for (int i = 0; i < data.size(); ++i) {
        out.push_back(eval_mono_sample(net, data.sample(i), branch, opts));
    }
    return out;
}

std::vector<MetricReport> evaluate_stereo(const TioDepthNet& net,
                                          const SyntheticDataset& data,
                                          const EvalOptions& opts) {
    std::vector<MetricReport> out;
    out.reserve(static_cast<size_t>(data.size()));
    for (int i = 0; i < data.size(); ++i) {
        out.push_back(eval_stereo_sample(net, data.sample(i), opts));
    }
    return out;
}

MetricReport mean_report(const std::vector<MetricReport>& reports) {
    check(!reports.empty(), "mean_report: empty list");
    MetricReport m;
    for (const auto& r : reports) {
        m.abs_rel += r.abs_rel;
        m.sq_rel += r.sq_rel;
        m.rmse += r.rmse;
        m.log_rmse += r.log_rmse;
        m.a1 += r.a1;
        m.a2 += r.a2;
        m.a3 += r.a3;
        m.epe += r.epe;
        m.d1 += r.d1;
        m.n_pixels += r.n_pixels;
    }
    double n = static_cast<double>(reports.size());
    m.abs_rel /= n;
    m.sq_rel /= n;
    m.rmse /= n;
    m.log_rmse /= n;
    m.a1 /= n;
    m.a2 /= n;
    m.a3 /= n;
    m.epe /= n;
    m.d1 /= n;
    return m;
}

}  // namespace tio
