#pragma once

#include "tio/tensor.hpp"

namespace tio {

// All masks take and return N x 1 x H x W tensors and are computed outside
// any gradient graph; they act as constants in the losses that use them.

// 1 = visible in the other view. A pixel is occluded when another pixel on
// its scanline maps to the same rounded target column x - d with a strictly
// larger disparity; ties stay visible, and pixels whose target falls outside
// [0, W-1] stay visible here (out_of_view_mask covers them).
Tensor occlusion_mask(const Tensor& d);

// Same rule with target column x + d: treats the given left-view disparity
// as if it were a right-view map.
Tensor opposite_occlusion_mask(const Tensor& d);

// 1 = the matching position x - d falls outside [0, W-1] (unrounded).
Tensor out_of_view_mask(const Tensor& d);

// Same rule with matching position x + d, for right-view disparity maps.
Tensor opposite_out_of_view_mask(const Tensor& d);

// Band around depth discontinuities, gated by the opposite occlusion mask:
// m_occ_opp * min(maxpool3x3(|laplacian(depth)|) / t2, 1) with the 4-neighbor
// Laplacian on an edge-replicated depth map.
Tensor half_object_edge_map(const Tensor& depth, const Tensor& m_occ_opp, double t2);

}  // namespace tio
