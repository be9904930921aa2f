#include "tio/levels.hpp"

#include <cmath>

namespace tio {

DisparityLevels make_levels(double b_min, double b_max, int n) {
    check(b_min > 0.0, "make_levels: b_min must be positive");
    check(b_max > b_min, "make_levels: b_max must exceed b_min");
    check(n >= 2, "make_levels: need at least two levels");
    DisparityLevels lv;
    lv.values.resize(static_cast<size_t>(n));
    double ratio = b_max / b_min;
    for (int i = 0; i < n; ++i)
        lv.values[static_cast<size_t>(i)] =
            b_min * std::pow(ratio, static_cast<double>(i) / static_cast<double>(n - 1));
    lv.values.front() = b_min;
    lv.values.back() = b_max;
    return lv;
}

void validate_rig(const CameraRig& rig) {
    check(rig.baseline > 0.0 && rig.focal_x > 0.0,
          "camera rig: baseline and focal length must be positive");
}

void validate_probability_volume(const Tensor& p, double tol) {
    check(p.defined() && p.ndim() == 4, "probability volume must be N x L x H x W");
    int64_t n = p.dim(0), c = p.dim(1), plane = p.dim(2) * p.dim(3);
    const double* pv = p.data();
    for (int64_t b = 0; b < n; ++b)
        for (int64_t i = 0; i < plane; ++i) {
            double s = 0.0;
            for (int64_t ch = 0; ch < c; ++ch) s += pv[(b * c + ch) * plane + i];
            check(std::abs(s - 1.0) <= tol,
                  "probability volume: channel sum " + std::to_string(s) + " is not 1");
        }
}

Tensor expected_disparity(const Tensor& p, const DisparityLevels& levels) {
    check(p.defined() && p.ndim() == 4, "expected_disparity: volume must be N x L x H x W");
    check(p.dim(1) == levels.count(),
          "expected_disparity: volume has " + std::to_string(p.dim(1)) +
              " channels for " + std::to_string(levels.count()) + " levels");
    Tensor lv = Tensor::from({1, levels.count(), 1, 1}, levels.values);
    return reduce_sum_axis(scale_channels(p, lv), 1);
}

namespace {

Tensor invert_positive(const Tensor& t, const CameraRig& rig, const char* what) {
    validate_rig(rig);
    check(t.defined() && t.ndim() == 4 && t.dim(1) == 1,
          std::string(what) + ": expected N x 1 x H x W");
    const double* v = t.data();
    for (int64_t i = 0; i < t.numel(); ++i)
        check(v[i] > 0.0, std::string(what) + ": values must be positive");
    return div(Tensor::scalar(rig.baseline * rig.focal_x), t);
}

}  // namespace

Tensor disparity_to_depth(const Tensor& d, const CameraRig& rig) {
    return invert_positive(d, rig, "disparity_to_depth");
}

Tensor depth_to_disparity(const Tensor& depth, const CameraRig& rig) {
    return invert_positive(depth, rig, "depth_to_disparity");
}

}  // namespace tio
