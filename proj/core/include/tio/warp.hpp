#pragma once

#include "tio/levels.hpp"
#include "tio/tensor.hpp"

namespace tio {

// Rectified-pair convention, fixed repo-wide: a left-view pixel at column x
// corresponds to the right-view pixel at column x - d. Synthesizing a left
// view therefore samples its source (the right view) at x - d; synthesizing a
// right view samples the left view at x + d.
enum class View { left, right };

inline double view_sign(View target) { return target == View::left ? 1.0 : -1.0; }

struct ReconstructedImage {
    Tensor img;       // N x C x H x W
    Tensor validity;  // N x 1 x H x W, 1 where the sample stayed in view
};

// Channel n sampled at x -/+ level_n (border-clamped linear interpolation).
// Aligns a volume predicted on the source view with the target view's grid.
Tensor shift_volume(const Tensor& v, const DisparityLevels& levels, View target);

// Weighted sum over levels of level-shifted source images:
// out = sum_n p_n * source(x -/+ b_n). p must be normalized per pixel.
ReconstructedImage discrete_reconstruct(const Tensor& p, const Tensor& source,
                                        const DisparityLevels& levels, View target);

// Backward warp of the source view at x -/+ disparity(depth), bilinear.
ReconstructedImage continuous_reconstruct(const Tensor& source, const Tensor& depth,
                                          const CameraRig& rig, View target);

}  // namespace tio
