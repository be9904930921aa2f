#pragma once

#include <vector>

#include "tio/tensor.hpp"

namespace tio {

// Discrete disparity hypotheses in pixels, strictly increasing and positive.
struct DisparityLevels {
    std::vector<double> values;

    int count() const { return static_cast<int>(values.size()); }
    double b_min() const { return values.front(); }
    double b_max() const { return values.back(); }
};

// Geometric spacing: level n = b_min * (b_max / b_min)^(n / (N - 1)).
DisparityLevels make_levels(double b_min, double b_max, int n);

// Stereo rig intrinsics: baseline in meters, horizontal focal length in pixels.
struct CameraRig {
    double baseline = 0.1;
    double focal_x = 1000.0;
};

void validate_rig(const CameraRig& rig);

// Throws if any channel sum deviates from 1 by more than tol.
void validate_probability_volume(const Tensor& p, double tol = 1e-4);

// p: N x L x H x W normalized volume -> N x 1 x H x W expected disparity,
// sum_n p_n * level_n. Differentiable through p.
Tensor expected_disparity(const Tensor& p, const DisparityLevels& levels);

// depth = baseline * focal_x / disparity (and vice versa; the map is its own
// inverse). Throws if any input value is not positive.
Tensor disparity_to_depth(const Tensor& d, const CameraRig& rig);
Tensor depth_to_disparity(const Tensor& depth, const CameraRig& rig);

}  // namespace tio
