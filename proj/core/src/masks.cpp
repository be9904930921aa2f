#include "tio/masks.hpp"

#include <cmath>
#include <vector>

namespace tio {

namespace {

void check_map(const Tensor& d, const char* op) {
    check(d.defined() && d.ndim() == 4 && d.dim(1) == 1,
          std::string(op) + ": expected N x 1 x H x W");
}

// Shared scanline visibility rule; sign picks the target direction x -/+ d.
Tensor visibility(const Tensor& d, double sign, const char* op) {
    check_map(d, op);
    const double* dv = d.data();
    for (int64_t i = 0; i < d.numel(); ++i)
        check(dv[i] >= 0.0, std::string(op) + ": negative disparity");
    int64_t n = d.dim(0), h = d.dim(2), w = d.dim(3);
    Tensor mask = Tensor::full(d.shape(), 1.0);
    double* mv = mask.data();
    std::vector<double> bucket_max(static_cast<size_t>(w));
    for (int64_t b = 0; b < n; ++b)
        for (int64_t y = 0; y < h; ++y) {
            const double* row = dv + (b * h + y) * w;
            double* mrow = mv + (b * h + y) * w;
            std::fill(bucket_max.begin(), bucket_max.end(), -1.0);
            for (int64_t x = 0; x < w; ++x) {
                int64_t t = std::lround(static_cast<double>(x) - sign * row[x]);
                if (t >= 0 && t < w)
                    bucket_max[static_cast<size_t>(t)] =
                        std::max(bucket_max[static_cast<size_t>(t)], row[x]);
            }
            for (int64_t x = 0; x < w; ++x) {
                int64_t t = std::lround(static_cast<double>(x) - sign * row[x]);
                if (t >= 0 && t < w && row[x] < bucket_max[static_cast<size_t>(t)])
                    mrow[x] = 0.0;
            }
        }
    return mask;
}

}  // namespace

Tensor occlusion_mask(const Tensor& d) { return visibility(d, 1.0, "occlusion_mask"); }

Tensor opposite_occlusion_mask(const Tensor& d) {
    return visibility(d, -1.0, "opposite_occlusion_mask");
}

namespace {

Tensor view_bounds(const Tensor& d, double sign, const char* op) {
    check_map(d, op);
    int64_t n = d.dim(0), h = d.dim(2), w = d.dim(3);
    Tensor mask = Tensor::zeros(d.shape());
    const double* dv = d.data();
    double* mv = mask.data();
    for (int64_t b = 0; b < n; ++b)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                double sx = static_cast<double>(x) - sign * dv[(b * h + y) * w + x];
                mv[(b * h + y) * w + x] =
                    (sx < 0.0 || sx > static_cast<double>(w - 1)) ? 1.0 : 0.0;
            }
    return mask;
}

}  // namespace

Tensor out_of_view_mask(const Tensor& d) { return view_bounds(d, 1.0, "out_of_view_mask"); }

Tensor opposite_out_of_view_mask(const Tensor& d) {
    return view_bounds(d, -1.0, "opposite_out_of_view_mask");
}

Tensor half_object_edge_map(const Tensor& depth, const Tensor& m_occ_opp, double t2) {
    check_map(depth, "half_object_edge_map");
    check_map(m_occ_opp, "half_object_edge_map");
    check(depth.shape() == m_occ_opp.shape(), "half_object_edge_map: shape mismatch");
    check(t2 > 0.0, "half_object_edge_map: t2 must be positive");
    NoGrad ng;
    Tensor lap_kernel = Tensor::from({1, 1, 3, 3}, {0, 1, 0, 1, -4, 1, 0, 1, 0});
    Tensor lap = conv2d(replicate_pad(depth, 1), lap_kernel, Tensor(), 1, 0);
    Tensor band = maxpool3x3(abs(lap));
    return mul(min(mul(band, 1.0 / t2), 1.0), m_occ_opp);
}

}  // namespace tio
