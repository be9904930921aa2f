#include "tio/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "tio/common.hpp"

namespace tio {
namespace {

double median(std::vector<double> v) {
    check(!v.empty(), "median: empty");
    size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    return v[mid];
}

}  // namespace

MetricReport depth_metrics(const Tensor& pred, const Tensor& gt, double cap, bool median_scale) {
    check(pred.defined() && gt.defined() && pred.shape() == gt.shape(),
          "depth_metrics: prediction and ground truth must share a shape");
    check(cap > 0.0, "depth_metrics: cap must be positive");

    std::vector<double> p, g;
    for (int64_t i = 0; i < gt.numel(); ++i) {
        if (gt.data()[i] <= 0.0) continue;
        p.push_back(pred.data()[i]);
        g.push_back(gt.data()[i]);
    }
    check(!p.empty(), "depth_metrics: no pixels with ground truth");

    if (median_scale) {
        double scale = median(g) / median(p);
        for (double& v : p) v *= scale;
    }
    for (double& v : p) v = std::clamp(v, 1e-6, cap);
    for (double& v : g) v = std::clamp(v, 1e-6, cap);

    MetricReport r;
    r.n_pixels = static_cast<int64_t>(p.size());
    double n = static_cast<double>(p.size());
    double sum_sq = 0.0, sum_log_sq = 0.0;
    int64_t in1 = 0, in2 = 0, in3 = 0;
    double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
    for (size_t i = 0; i < p.size(); ++i) {
        double diff = std::abs(p[i] - g[i]);
        r.abs_rel += diff / g[i];
        r.sq_rel += diff * diff / g[i];
        sum_sq += diff * diff;
        double dlog = std::log(p[i]) - std::log(g[i]);
        sum_log_sq += dlog * dlog;
        double ratio = std::max(p[i] / g[i], g[i] / p[i]);
        if (ratio < t1) ++in1;
        if (ratio < t2) ++in2;
        if (ratio < t3) ++in3;
    }
    r.abs_rel /= n;
    r.sq_rel /= n;
    r.rmse = std::sqrt(sum_sq / n);
    r.log_rmse = std::sqrt(sum_log_sq / n);
    r.a1 = static_cast<double>(in1) / n;
    r.a2 = static_cast<double>(in2) / n;
    r.a3 = static_cast<double>(in3) / n;
    return r;
}

std::pair<double, double> disparity_metrics(const Tensor& pred_d, const Tensor& gt_d,
                                            bool d1_both) {
    return disparity_metrics(pred_d, gt_d, Tensor::full(gt_d.shape(), 1.0), d1_both);
}

std::pair<double, double> disparity_metrics(const Tensor& pred_d, const Tensor& gt_d,
                                            const Tensor& valid, bool d1_both) {
    check(pred_d.defined() && gt_d.defined() && pred_d.shape() == gt_d.shape(),
          "disparity_metrics: prediction and ground truth must share a shape");
    check(valid.shape() == gt_d.shape(), "disparity_metrics: validity shape mismatch");
    double sum = 0.0;
    int64_t n = 0, bad = 0;
    for (int64_t i = 0; i < gt_d.numel(); ++i) {
        if (valid.data()[i] != 1.0 || gt_d.data()[i] <= 0.0) continue;
        double err = std::abs(pred_d.data()[i] - gt_d.data()[i]);
        sum += err;
        bool big = err > 3.0, rel = err / gt_d.data()[i] > 0.05;
        if (d1_both ? (big && rel) : (big || rel)) ++bad;
        ++n;
    }
    check(n > 0, "disparity_metrics: no pixels with ground truth");
    return {sum / static_cast<double>(n), static_cast<double>(bad) / static_cast<double>(n)};
}

}  // namespace tio
