#pragma once

#include <cstdint>
#include <utility>

#include "tio/tensor.hpp"

namespace tio {

struct MetricReport {
    double abs_rel = 0.0;
    double sq_rel = 0.0;
    double rmse = 0.0;
    double log_rmse = 0.0;
    double a1 = 0.0, a2 = 0.0, a3 = 0.0;  // max(pred/gt, gt/pred) < 1.25^j
    double epe = 0.0;
    double d1 = 0.0;
    int64_t n_pixels = 0;
};

// Depth errors over pixels with gt > 0, shapes must match. With median_scale,
// pred is first multiplied by median(gt)/median(pred) over those pixels; both
// maps are then clamped to (0, cap]. Throws when no pixel qualifies.
MetricReport depth_metrics(const Tensor& pred, const Tensor& gt, double cap, bool median_scale);

// (epe, d1) over pixels with gt > 0. d1 counts |err| > 3 or |err|/gt > 0.05;
// with d1_both, a pixel is bad only when both conditions hold (the stereo
// benchmark's definition).
std::pair<double, double> disparity_metrics(const Tensor& pred_d, const Tensor& gt_d,
                                            bool d1_both = false);

// Same, restricted to pixels where valid is 1 (and gt > 0).
std::pair<double, double> disparity_metrics(const Tensor& pred_d, const Tensor& gt_d,
                                            const Tensor& valid, bool d1_both = false);

}  // namespace tio
