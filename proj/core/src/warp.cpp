#include "tio/warp.hpp"

#include <algorithm>
#include <cmath>

namespace tio {

using P = std::shared_ptr<TensorImpl>;

namespace {

double* ensure_grad(const P& t) {
    if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0);
    return t->grad.data();
}

struct Lerp {
    int64_t i0, i1;
    double f;
};

Lerp lerp_at(double x, int64_t n) {
    double xc = std::clamp(x, 0.0, static_cast<double>(n - 1));
    int64_t i0 = static_cast<int64_t>(std::floor(xc));
    if (i0 > n - 1) i0 = n - 1;
    int64_t i1 = std::min<int64_t>(i0 + 1, n - 1);
    return {i0, i1, xc - static_cast<double>(i0)};
}

}  // namespace

Tensor shift_volume(const Tensor& v, const DisparityLevels& levels, View target) {
    check(v.defined() && v.ndim() == 4, "shift_volume: expected N x L x H x W");
    check(v.dim(1) == levels.count(), "shift_volume: channel count does not match levels");
    double s = view_sign(target);
    std::vector<double> dx(levels.values.size());
    for (size_t i = 0; i < dx.size(); ++i) dx[i] = s * levels.values[i];
    return shift_channels(v, dx);
}

ReconstructedImage discrete_reconstruct(const Tensor& p, const Tensor& source,
                                        const DisparityLevels& levels, View target) {
    check(p.defined() && p.ndim() == 4, "discrete_reconstruct: volume must be N x L x H x W");
    check(source.defined() && source.ndim() == 4,
          "discrete_reconstruct: source must be N x C x H x W");
    int64_t n = p.dim(0), l = p.dim(1), h = p.dim(2), w = p.dim(3);
    check(l == levels.count(), "discrete_reconstruct: channels do not match levels");
    check(source.dim(0) == n && source.dim(2) == h && source.dim(3) == w,
          "discrete_reconstruct: volume and source sizes differ");
    validate_probability_volume(p);
    int64_t c = source.dim(1), plane = h * w;
    double sgn = view_sign(target);

    // Per-level interpolation maps of x - sign * b_l.
    std::vector<Lerp> maps(static_cast<size_t>(l * w));
    for (int64_t lev = 0; lev < l; ++lev)
        for (int64_t x = 0; x < w; ++x)
            maps[static_cast<size_t>(lev * w + x)] =
                lerp_at(static_cast<double>(x) - sgn * levels.values[static_cast<size_t>(lev)], w);

    Tensor out = Tensor::zeros({n, c, h, w});
    const double* pv = p.data();
    const double* sv = source.data();
    double* ov = out.data();
    for (int64_t b = 0; b < n; ++b)
        for (int64_t lev = 0; lev < l; ++lev) {
            const Lerp* mp = maps.data() + lev * w;
            const double* pp = pv + (b * l + lev) * plane;
            for (int64_t ch = 0; ch < c; ++ch) {
                const double* srow = sv + (b * c + ch) * plane;
                double* orow = ov + (b * c + ch) * plane;
                for (int64_t y = 0; y < h; ++y)
                    for (int64_t x = 0; x < w; ++x) {
                        const Lerp& L = mp[x];
                        double sval =
                            srow[y * w + L.i0] * (1 - L.f) + srow[y * w + L.i1] * L.f;
                        orow[y * w + x] += pp[y * w + x] * sval;
                    }
            }
        }

    P pi = p.impl, si = source.impl, oi = out.impl;
    detail::track(out, p.requires_grad() || source.requires_grad(),
                  [pi, si, oi, n, l, c, plane, w, h, maps = std::move(maps)] {
                      if (oi->grad.empty()) return;
                      const double* og = oi->grad.data();
                      const double* pv2 = pi->data.data();
                      const double* sv2 = si->data.data();
                      double* gp = pi->requires_grad ? ensure_grad(pi) : nullptr;
                      double* gs = si->requires_grad ? ensure_grad(si) : nullptr;
                      for (int64_t b = 0; b < n; ++b)
                          for (int64_t lev = 0; lev < l; ++lev) {
                              const Lerp* mp = maps.data() + lev * w;
                              const double* pp = pv2 + (b * l + lev) * plane;
                              double* gpp = gp ? gp + (b * l + lev) * plane : nullptr;
                              for (int64_t ch = 0; ch < c; ++ch) {
                                  const double* srow = sv2 + (b * c + ch) * plane;
                                  const double* grow = og + (b * c + ch) * plane;
                                  double* gsrow = gs ? gs + (b * c + ch) * plane : nullptr;
                                  for (int64_t y = 0; y < h; ++y)
                                      for (int64_t x = 0; x < w; ++x) {
                                          const Lerp& L = mp[x];
                                          double go = grow[y * w + x];
                                          if (gpp) {
                                              double sval = srow[y * w + L.i0] * (1 - L.f) +
                                                            srow[y * w + L.i1] * L.f;
                                              gpp[y * w + x] += go * sval;
                                          }
                                          if (gsrow) {
                                              double pvv = pp[y * w + x];
                                              gsrow[y * w + L.i0] += go * pvv * (1 - L.f);
                                              gsrow[y * w + L.i1] += go * pvv * L.f;
                                          }
                                      }
                              }
                          }
                      detail::consume_grad(oi);
                  });

    ReconstructedImage rec;
    rec.img = out;
    // Validity from the expected shift: the blended sample stays in view.
    Tensor d_bar;
    {
        NoGrad ng;
        d_bar = expected_disparity(p.detach(), levels);
    }
    Tensor valid = Tensor::zeros({n, 1, h, w});
    const double* dv = d_bar.data();
    double* vv = valid.data();
    for (int64_t b = 0; b < n; ++b)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                double sx = static_cast<double>(x) - sgn * dv[(b * h + y) * w + x];
                vv[(b * h + y) * w + x] =
                    (sx >= 0.0 && sx <= static_cast<double>(w - 1)) ? 1.0 : 0.0;
            }
    rec.validity = valid;
    return rec;
}

ReconstructedImage continuous_reconstruct(const Tensor& source, const Tensor& depth,
                                          const CameraRig& rig, View target) {
    check(source.defined() && source.ndim() == 4,
          "continuous_reconstruct: source must be N x C x H x W");
    check(depth.defined() && depth.ndim() == 4 && depth.dim(1) == 1,
          "continuous_reconstruct: depth must be N x 1 x H x W");
    int64_t n = source.dim(0), h = source.dim(2), w = source.dim(3);
    check(depth.dim(0) == n && depth.dim(2) == h && depth.dim(3) == w,
          "continuous_reconstruct: depth size does not match source");
    Tensor disp = depth_to_disparity(depth, rig);  // validates positivity
    double sgn = view_sign(target);

    Tensor base_x = Tensor::zeros({n, h, w});
    Tensor base_y = Tensor::zeros({n, h, w});
    for (int64_t b = 0; b < n; ++b)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                base_x.data()[(b * h + y) * w + x] = static_cast<double>(x);
                base_y.data()[(b * h + y) * w + x] = static_cast<double>(y);
            }
    Tensor xs = sub(base_x, mul(reshape(disp, {n, h, w}), sgn));
    ReconstructedImage rec;
    rec.img = bilinear_sample(source, xs, base_y);
    Tensor valid = Tensor::zeros({n, 1, h, w});
    const double* xv = xs.data();
    double* vv = valid.data();
    for (int64_t i = 0; i < valid.numel(); ++i)
        vv[i] = (xv[i] >= 0.0 && xv[i] <= static_cast<double>(w - 1)) ? 1.0 : 0.0;
    rec.validity = valid;
    return rec;
}

}  // namespace tio
