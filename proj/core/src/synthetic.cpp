#include "tio/data.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "tio/common.hpp"

namespace tio {
namespace {

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Base color plus iid value noise, clamped away from 0 and 1 so jitter
// augmentation keeps texture contrast.
double texel(double base, double noise, double amp) {
    return std::clamp(base + amp * (noise - 0.5), 0.05, 0.95);
}

}  // namespace

double ground_disparity(const SceneSpec& spec, int64_t y, int64_t h) {
    double t = h > 1 ? static_cast<double>(y) / static_cast<double>(h - 1) : 0.0;
    return std::round(spec.ground_far + (spec.ground_near - spec.ground_far) * t);
}

SceneSpec random_scene(Rng& rng, int64_t h, int64_t w, double d_min, double d_max) {
    check(h >= 16 && w >= 32, "random_scene: image too small");
    check(d_min >= 1.0 && d_max >= d_min + 6.0, "random_scene: disparity span too narrow");
    SceneSpec spec;
    spec.ground_far = static_cast<double>(rng.randint(static_cast<int>(d_min),
                                                      static_cast<int>(d_min) + 2));
    spec.ground_near = static_cast<double>(
        rng.randint(static_cast<int>(d_max) - 4, static_cast<int>(d_max)));
    for (int c = 0; c < 3; ++c) spec.ground_color[c] = 0.3 + 0.4 * rng.uniform();
    spec.ground_texture_seed = rng.engine()();

    int k = rng.randint(3, 8);
    for (int i = 0; i < k; ++i) {
        BoxSpec box;
        // Boxes rest visually on the ground: their disparity slightly exceeds
        // the ground disparity at their bottom row, and their size scales with
        // disparity, so both are readable from a single view.
        int64_t y1 = rng.randint(static_cast<int>(h / 3), static_cast<int>(h - 2));
        double ground_d = ground_disparity({spec.ground_far, spec.ground_near}, y1, h);
        while (ground_d + 1.0 > d_max) {  // keep room to strictly occlude the ground
            y1 = rng.randint(static_cast<int>(h / 3), static_cast<int>(h - 2));
            ground_d = ground_disparity({spec.ground_far, spec.ground_near}, y1, h);
        }
        box.disparity = std::min(ground_d + static_cast<double>(rng.randint(1, 2)), d_max);
        double size_scale = 0.8 + 0.6 * rng.uniform();
        int64_t half_w = std::clamp<int64_t>(
            static_cast<int64_t>(std::lround(size_scale * box.disparity)), 3, w / 5);
        int64_t half_h = std::clamp<int64_t>(
            static_cast<int64_t>(std::lround(0.8 * size_scale * box.disparity)), 3, h / 4);
        int64_t cx = rng.randint(static_cast<int>(half_w),
                                 static_cast<int>(w - 1 - half_w));
        box.x0 = cx - half_w;
        box.x1 = cx + half_w;
        box.y1 = y1 + 1;
        box.y0 = std::max<int64_t>(0, y1 - 2 * half_h);
        for (int c = 0; c < 3; ++c) box.color[c] = 0.15 + 0.7 * rng.uniform();
        box.texture_seed = rng.engine()();
        spec.boxes.push_back(box);
    }
    // Nearer boxes paint over farther ones.
    std::sort(spec.boxes.begin(), spec.boxes.end(),
              [](const BoxSpec& a, const BoxSpec& b) { return a.disparity < b.disparity; });
    return spec;
}

StereoSample render_scene(const SceneSpec& spec, int64_t h, int64_t w, const CameraRig& rig) {
    check(h >= 2 && w >= 2, "render_scene: degenerate size");
    check(spec.ground_far >= 0.0 && spec.ground_near >= 0.0, "render_scene: negative disparity");
    StereoSample s;
    s.rig = rig;
    s.left = Tensor::zeros({1, 3, h, w});
    s.right = Tensor::zeros({1, 3, h, w});
    s.disparity_left = Tensor::zeros({1, 1, h, w});
    s.disparity_right = Tensor::zeros({1, 1, h, w});
    s.validity_left = Tensor::zeros({1, 1, h, w});
    s.validity_right = Tensor::zeros({1, 1, h, w});

    double* L = s.left.data();
    double* R = s.right.data();
    double* DL = s.disparity_left.data();
    double* DR = s.disparity_right.data();
    double* VL = s.validity_left.data();
    double* VR = s.validity_right.data();
    int64_t plane = h * w;

    // Left view: ground first, then boxes far-to-near.
    Rng gnoise(splitmix64(spec.ground_texture_seed));
    for (int64_t y = 0; y < h; ++y) {
        double gd = ground_disparity(spec, y, h);
        for (int64_t x = 0; x < w; ++x) {
            DL[y * w + x] = gd;
            for (int64_t c = 0; c < 3; ++c)
                L[c * plane + y * w + x] = texel(spec.ground_color[c], gnoise.uniform(), 0.5);
        }
    }
    for (const BoxSpec& box : spec.boxes) {
        check(box.x0 >= 0 && box.y0 >= 0 && box.x1 <= w && box.y1 <= h && box.x0 < box.x1 &&
                  box.y0 < box.y1,
              "render_scene: box out of bounds");
        Rng bnoise(splitmix64(box.texture_seed));
        for (int64_t y = box.y0; y < box.y1; ++y)
            for (int64_t x = box.x0; x < box.x1; ++x) {
                double checker = ((x - box.x0) / 4 + (y - box.y0) / 4) % 2 == 0 ? 0.12 : -0.12;
                DL[y * w + x] = box.disparity;
                for (int64_t c = 0; c < 3; ++c)
                    L[c * plane + y * w + x] =
                        texel(box.color[c] + checker, bnoise.uniform(), 0.3);
            }
    }

    // Right view: forward map x -> x - d, the largest disparity wins. With
    // integer disparities two sources never tie on a target column.
    Rng hnoise(splitmix64(spec.ground_texture_seed ^ 0x9e3779b97f4a7c15ull));
    std::vector<int64_t> src(static_cast<size_t>(w));
    for (int64_t y = 0; y < h; ++y) {
        std::fill(src.begin(), src.end(), -1);
        for (int64_t x = 0; x < w; ++x) {
            int64_t t = x - static_cast<int64_t>(DL[y * w + x]);
            if (t < 0 || t >= w) continue;
            if (src[static_cast<size_t>(t)] < 0 ||
                DL[y * w + src[static_cast<size_t>(t)]] < DL[y * w + x])
                src[static_cast<size_t>(t)] = x;
        }
        for (int64_t t = 0; t < w; ++t) {
            int64_t x = src[static_cast<size_t>(t)];
            if (x >= 0) {
                for (int64_t c = 0; c < 3; ++c)
                    R[c * plane + y * w + t] = L[c * plane + y * w + x];
                DR[y * w + t] = DL[y * w + x];
                VR[y * w + t] = 1.0;
                VL[y * w + x] = 1.0;
            } else {
                // Disoccluded: no left-view source, painted with background
                // texture and left without ground truth.
                for (int64_t c = 0; c < 3; ++c)
                    R[c * plane + y * w + t] = texel(spec.ground_color[c], hnoise.uniform(), 0.5);
            }
        }
    }
    return s;
}

SyntheticDataset::SyntheticDataset(int count, uint64_t seed, std::string split, int64_t h,
                                   int64_t w, CameraRig rig, double d_min, double d_max)
    : count_(count),
      base_seed_(splitmix64(seed ^ fnv1a64(split))),
      split_(std::move(split)),
      h_(h),
      w_(w),
      rig_(rig),
      d_min_(d_min),
      d_max_(d_max) {
    check(count >= 0, "SyntheticDataset: negative count");
    validate_rig(rig_);
}

uint64_t SyntheticDataset::sample_seed(int index) const {
    check(index >= 0 && index < count_, "SyntheticDataset: index out of range");
    return splitmix64(base_seed_ + 0x849d7d31u * static_cast<uint64_t>(index + 1));
}

SceneSpec SyntheticDataset::scene(int index) const {
    Rng rng(sample_seed(index));
    return random_scene(rng, h_, w_, d_min_, d_max_);
}

StereoSample SyntheticDataset::sample(int index) const {
    return render_scene(scene(index), h_, w_, rig_);
}

Tensor stack_batch(const std::vector<Tensor>& singles) {
    check(!singles.empty(), "stack_batch: empty batch");
    Shape s = singles.front().shape();
    check(s[0] == 1, "stack_batch: expected single-sample tensors");
    for (const Tensor& t : singles) check(t.shape() == s, "stack_batch: shape mismatch");
    Shape out_shape = s;
    out_shape[0] = static_cast<int64_t>(singles.size());
    Tensor out = Tensor::zeros(out_shape);
    int64_t stride = singles.front().numel();
    for (size_t i = 0; i < singles.size(); ++i)
        std::copy(singles[i].data(), singles[i].data() + stride,
                  out.data() + static_cast<int64_t>(i) * stride);
    return out;
}

}  // namespace tio
