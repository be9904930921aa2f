#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tio/levels.hpp"
#include "tio/tensor.hpp"

namespace tio {

// One rectified stereo pair with dense ground truth for both views.
// On pixels with validity 1, left(x) == right(x - d) holds exactly by
// construction (integer disparities, copied pixels).
struct StereoSample {
    Tensor left;             // 1 x 3 x H x W, values in [0, 1]
    Tensor right;            // 1 x 3 x H x W
    Tensor disparity_left;   // 1 x 1 x H x W, pixels; > 0 everywhere
    Tensor disparity_right;  // 1 x 1 x H x W, 0 on pixels with no correspondence
    Tensor validity_left;    // 1 = visible in the right view
    Tensor validity_right;   // 1 = has a left-view source pixel
    CameraRig rig;
};

// A fronto-parallel textured rectangle in front of the ground plane.
struct BoxSpec {
    int64_t x0, y0, x1, y1;  // half-open pixel bounds in the left view
    double disparity;        // integer-valued, larger than the ground below it
    double color[3];
    uint64_t texture_seed;
};

// Ground plane whose disparity is a fixed function of the image row
// (rounded linear ramp, far at the top), plus boxes whose apparent size
// grows with their disparity. Both are monocular depth cues.
struct SceneSpec {
    double ground_far;   // disparity at the top row
    double ground_near;  // disparity at the bottom row
    double ground_color[3];
    uint64_t ground_texture_seed;
    std::vector<BoxSpec> boxes;
};

// Integer ground-plane disparity at a given row.
double ground_disparity(const SceneSpec& spec, int64_t y, int64_t h);

SceneSpec random_scene(Rng& rng, int64_t h, int64_t w, double d_min, double d_max);

StereoSample render_scene(const SceneSpec& spec, int64_t h, int64_t w, const CameraRig& rig);

// Deterministic stream of rendered scenes: sample(i) depends only on
// (seed, split, i). Different split names draw disjoint scene streams.
class SyntheticDataset {
  public:
    SyntheticDataset(int count, uint64_t seed, std::string split, int64_t h, int64_t w,
                     CameraRig rig = {0.54, 100.0}, double d_min = 2.0, double d_max = 14.0);

    int size() const { return count_; }
    int64_t height() const { return h_; }
    int64_t width() const { return w_; }
    const CameraRig& rig() const { return rig_; }
    StereoSample sample(int index) const;
    SceneSpec scene(int index) const;
    uint64_t sample_seed(int index) const;  // the seed scene(index) draws from

  private:
    int count_;
    uint64_t base_seed_;
    std::string split_;
    int64_t h_, w_;
    CameraRig rig_;
    double d_min_, d_max_;
};

// Stacks single-sample tensors (dim(0) == 1, equal trailing shape) into one batch.
Tensor stack_batch(const std::vector<Tensor>& singles);

}  // namespace tio
