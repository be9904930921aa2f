#pragma once

#include <vector>

#include "tio/data.hpp"
#include "tio/metrics.hpp"
#include "tio/network.hpp"

namespace tio {

struct EvalOptions {
    double depth_cap = 30.0;   // clamp ceiling for depth metrics, meters
    bool median_scale = true;  // monocular depth only; stereo depth is metric
    bool d1_both = false;      // d1 as conjunction instead of disjunction
};

// Expected disparity of the softmaxed volume, 1 x 1 x H x W.
Tensor predict_mono_disparity(const TioDepthNet& net, const Tensor& img, Branch branch);
Tensor predict_stereo_disparity(const TioDepthNet& net, const Tensor& left,
                                const Tensor& right, View view);

// Depth metrics against disparity_to_depth of the ground truth plus epe/d1
// against the raw disparity, over the left view.
MetricReport eval_mono_sample(const TioDepthNet& net, const StereoSample& s, Branch branch,
                              const EvalOptions& opts);
MetricReport eval_stereo_sample(const TioDepthNet& net, const StereoSample& s,
                                const EvalOptions& opts);

std::vector<MetricReport> evaluate_mono(const TioDepthNet& net, const SyntheticDataset& data,
                                        Branch branch, const EvalOptions& opts);
std::vector<MetricReport> evaluate_stereo(const TioDepthNet& net,
                                          const SyntheticDataset& data,
                                          const EvalOptions& opts);

// Field-wise mean; n_pixels sums. Throws on an empty list.
MetricReport mean_report(const std::vector<MetricReport>& reports);

}  // namespace tio
