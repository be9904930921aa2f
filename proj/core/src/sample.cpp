#include <algorithm>
#include <cmath>

#include "tio/tensor.hpp"

namespace tio {

using P = std::shared_ptr<TensorImpl>;

namespace {

double* ensure_grad(const P& t) {
    if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0);
    return t->grad.data();
}

// Border-clamped sample position along one axis of extent n.
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

Tensor softmax_channel(const Tensor& t) {
    check(t.defined() && t.ndim() == 4, "softmax_channel: expected NCHW");
    int64_t n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3), plane = h * w;
    const double* tv = t.data();
    for (int64_t i = 0; i < t.numel(); ++i)
        check(!std::isnan(tv[i]), "softmax_channel: NaN in input");
    Tensor out = Tensor::zeros(t.shape());
    double* ov = out.data();
    for (int64_t b = 0; b < n; ++b) {
        const double* in = tv + b * c * plane;
        double* op = ov + b * c * plane;
        for (int64_t i = 0; i < plane; ++i) {
            double m = in[i];
            for (int64_t ch = 1; ch < c; ++ch) m = std::max(m, in[ch * plane + i]);
            double z = 0.0;
            for (int64_t ch = 0; ch < c; ++ch) {
                double e = std::exp(in[ch * plane + i] - m);
                op[ch * plane + i] = e;
                z += e;
            }
            double inv = 1.0 / z;
            for (int64_t ch = 0; ch < c; ++ch) op[ch * plane + i] *= inv;
        }
    }
    P ti = t.impl, oi = out.impl;
    detail::track(out, t.requires_grad(), [ti, oi, n, c, plane] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        const double* ov2 = oi->data.data();
        double* g = ensure_grad(ti);
        for (int64_t b = 0; b < n; ++b) {
            const double* pr = ov2 + b * c * plane;
            const double* go = og + b * c * plane;
            double* gi = g + b * c * plane;
            for (int64_t i = 0; i < plane; ++i) {
                double dot = 0.0;
                for (int64_t ch = 0; ch < c; ++ch)
                    dot += go[ch * plane + i] * pr[ch * plane + i];
                for (int64_t ch = 0; ch < c; ++ch)
                    gi[ch * plane + i] += pr[ch * plane + i] * (go[ch * plane + i] - dot);
            }
        }
        detail::consume_grad(oi);
    });
    return out;
}

Tensor bilinear_sample(const Tensor& img, const Tensor& xs, const Tensor& ys) {
    check(img.defined() && img.ndim() == 4, "bilinear_sample: image must be NCHW");
    check(xs.defined() && xs.ndim() == 3 && ys.defined() && ys.ndim() == 3,
          "bilinear_sample: coords must be N x OH x OW");
    check(xs.shape() == ys.shape(), "bilinear_sample: coord shapes differ");
    check(xs.dim(0) == img.dim(0), "bilinear_sample: batch mismatch");
    int64_t n = img.dim(0), c = img.dim(1), h = img.dim(2), w = img.dim(3);
    int64_t oh = xs.dim(1), ow = xs.dim(2), oplane = oh * ow, plane = h * w;
    Tensor out = Tensor::zeros({n, c, oh, ow});
    const double* iv = img.data();
    const double* xv = xs.data();
    const double* yv = ys.data();
    double* ov = out.data();
    for (int64_t b = 0; b < n; ++b)
        for (int64_t i = 0; i < oplane; ++i) {
            Lerp lx = lerp_at(xv[b * oplane + i], w);
            Lerp ly = lerp_at(yv[b * oplane + i], h);
            double w00 = (1 - ly.f) * (1 - lx.f), w01 = (1 - ly.f) * lx.f;
            double w10 = ly.f * (1 - lx.f), w11 = ly.f * lx.f;
            for (int64_t ch = 0; ch < c; ++ch) {
                const double* ip = iv + (b * c + ch) * plane;
                ov[(b * c + ch) * oplane + i] =
                    w00 * ip[ly.i0 * w + lx.i0] + w01 * ip[ly.i0 * w + lx.i1] +
                    w10 * ip[ly.i1 * w + lx.i0] + w11 * ip[ly.i1 * w + lx.i1];
            }
        }
    P ii = img.impl, xi = xs.impl, yi = ys.impl, oi = out.impl;
    bool tracked = img.requires_grad() || xs.requires_grad() || ys.requires_grad();
    detail::track(out, tracked, [ii, xi, yi, oi, n, c, h, w, oplane, plane] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        const double* iv2 = ii->data.data();
        const double* xv2 = xi->data.data();
        const double* yv2 = yi->data.data();
        double* gi = ii->requires_grad ? ensure_grad(ii) : nullptr;
        double* gx = xi->requires_grad ? ensure_grad(xi) : nullptr;
        double* gy = yi->requires_grad ? ensure_grad(yi) : nullptr;
        for (int64_t b = 0; b < n; ++b)
            for (int64_t i = 0; i < oplane; ++i) {
                double x = xv2[b * oplane + i], y = yv2[b * oplane + i];
                Lerp lx = lerp_at(x, w);
                Lerp ly = lerp_at(y, h);
                bool x_in = x > 0.0 && x < static_cast<double>(w - 1);
                bool y_in = y > 0.0 && y < static_cast<double>(h - 1);
                double w00 = (1 - ly.f) * (1 - lx.f), w01 = (1 - ly.f) * lx.f;
                double w10 = ly.f * (1 - lx.f), w11 = ly.f * lx.f;
                double dx_acc = 0.0, dy_acc = 0.0;
                for (int64_t ch = 0; ch < c; ++ch) {
                    double go = og[(b * c + ch) * oplane + i];
                    const double* ip = iv2 + (b * c + ch) * plane;
                    double v00 = ip[ly.i0 * w + lx.i0], v01 = ip[ly.i0 * w + lx.i1];
                    double v10 = ip[ly.i1 * w + lx.i0], v11 = ip[ly.i1 * w + lx.i1];
                    if (gi) {
                        double* gp = gi + (b * c + ch) * plane;
                        gp[ly.i0 * w + lx.i0] += go * w00;
                        gp[ly.i0 * w + lx.i1] += go * w01;
                        gp[ly.i1 * w + lx.i0] += go * w10;
                        gp[ly.i1 * w + lx.i1] += go * w11;
                    }
                    dx_acc += go * ((1 - ly.f) * (v01 - v00) + ly.f * (v11 - v10));
                    dy_acc += go * ((1 - lx.f) * (v10 - v00) + lx.f * (v11 - v01));
                }
                if (gx && x_in) gx[b * oplane + i] += dx_acc;
                if (gy && y_in) gy[b * oplane + i] += dy_acc;
            }
        detail::consume_grad(oi);
    });
    return out;
}

Tensor maxpool3x3(const Tensor& t) {
    check(t.defined() && t.ndim() == 4, "maxpool3x3: expected NCHW");
    int64_t n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3), plane = h * w;
    Tensor out = Tensor::zeros(t.shape());
    std::vector<int64_t> arg(static_cast<size_t>(t.numel()));
    const double* tv = t.data();
    double* ov = out.data();
    for (int64_t bc = 0; bc < n * c; ++bc) {
        const double* src = tv + bc * plane;
        double* dst = ov + bc * plane;
        int64_t* ap = arg.data() + bc * plane;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                double best = -1e300;
                int64_t bi = 0;
                for (int64_t dy = -1; dy <= 1; ++dy)
                    for (int64_t dx = -1; dx <= 1; ++dx) {
                        int64_t sy = std::clamp<int64_t>(y + dy, 0, h - 1);
                        int64_t sx = std::clamp<int64_t>(x + dx, 0, w - 1);
                        double v = src[sy * w + sx];
                        if (v > best) {
                            best = v;
                            bi = sy * w + sx;
                        }
                    }
                dst[y * w + x] = best;
                ap[y * w + x] = bi;
            }
    }
    P ti = t.impl, oi = out.impl;
    detail::track(out, t.requires_grad(), [ti, oi, n, c, plane, arg = std::move(arg)] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        double* g = ensure_grad(ti);
        for (int64_t bc = 0; bc < n * c; ++bc)
            for (int64_t i = 0; i < plane; ++i)
                g[bc * plane + arg[static_cast<size_t>(bc * plane + i)]] += og[bc * plane + i];
        detail::consume_grad(oi);
    });
    return out;
}

Tensor avgpool3x3(const Tensor& t) {
    check(t.defined() && t.ndim() == 4, "avgpool3x3: expected NCHW");
    int64_t n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3), plane = h * w;
    Tensor out = Tensor::zeros(t.shape());
    const double* tv = t.data();
    double* ov = out.data();
    const double inv9 = 1.0 / 9.0;
    for (int64_t bc = 0; bc < n * c; ++bc) {
        const double* src = tv + bc * plane;
        double* dst = ov + bc * plane;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int64_t dy = -1; dy <= 1; ++dy) {
                    int64_t sy = std::clamp<int64_t>(y + dy, 0, h - 1);
                    for (int64_t dx = -1; dx <= 1; ++dx) {
                        int64_t sx = std::clamp<int64_t>(x + dx, 0, w - 1);
                        acc += src[sy * w + sx];
                    }
                }
                dst[y * w + x] = acc * inv9;
            }
    }
    P ti = t.impl, oi = out.impl;
    detail::track(out, t.requires_grad(), [ti, oi, n, c, h, w, plane, inv9] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        double* g = ensure_grad(ti);
        for (int64_t bc = 0; bc < n * c; ++bc) {
            const double* go = og + bc * plane;
            double* gp = g + bc * plane;
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) {
                    double gv = go[y * w + x] * inv9;
                    for (int64_t dy = -1; dy <= 1; ++dy) {
                        int64_t sy = std::clamp<int64_t>(y + dy, 0, h - 1);
                        for (int64_t dx = -1; dx <= 1; ++dx) {
                            int64_t sx = std::clamp<int64_t>(x + dx, 0, w - 1);
                            gp[sy * w + sx] += gv;
                        }
                    }
                }
        }
        detail::consume_grad(oi);
    });
    return out;
}

Tensor avgpool2x2(const Tensor& t) {
    check(t.defined() && t.ndim() == 4, "avgpool2x2: expected NCHW");
    int64_t n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
    check(h % 2 == 0 && w % 2 == 0, "avgpool2x2: H and W must be even");
    int64_t oh = h / 2, ow = w / 2;
    Tensor out = Tensor::zeros({n, c, oh, ow});
    const double* tv = t.data();
    double* ov = out.data();
    for (int64_t bc = 0; bc < n * c; ++bc)
        for (int64_t y = 0; y < oh; ++y) {
            const double* r0 = tv + (bc * h + 2 * y) * w;
            const double* r1 = r0 + w;
            double* dst = ov + (bc * oh + y) * ow;
            for (int64_t x = 0; x < ow; ++x)
                dst[x] = 0.25 * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]);
        }
    P ti = t.impl, oi = out.impl;
    detail::track(out, t.requires_grad(), [ti, oi, n, c, h, w, oh, ow] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        double* g = ensure_grad(ti);
        for (int64_t bc = 0; bc < n * c; ++bc)
            for (int64_t y = 0; y < oh; ++y) {
                const double* go = og + (bc * oh + y) * ow;
                double* r0 = g + (bc * h + 2 * y) * w;
                double* r1 = r0 + w;
                for (int64_t x = 0; x < ow; ++x) {
                    double gv = go[x] * 0.25;
                    r0[2 * x] += gv;
                    r0[2 * x + 1] += gv;
                    r1[2 * x] += gv;
                    r1[2 * x + 1] += gv;
                }
            }
        detail::consume_grad(oi);
    });
    return out;
}

Tensor resize_bilinear(const Tensor& t, int64_t oh, int64_t ow) {
    check(t.defined() && t.ndim() == 4, "resize_bilinear: expected NCHW");
    check(oh >= 1 && ow >= 1, "resize_bilinear: bad output size");
    int64_t n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3), plane = h * w;
    // Half-pixel-center mapping, border clamped.
    std::vector<Lerp> ly(static_cast<size_t>(oh)), lx(static_cast<size_t>(ow));
    double sy = static_cast<double>(h) / static_cast<double>(oh);
    double sx = static_cast<double>(w) / static_cast<double>(ow);
    for (int64_t y = 0; y < oh; ++y)
        ly[static_cast<size_t>(y)] = lerp_at((static_cast<double>(y) + 0.5) * sy - 0.5, h);
    for (int64_t x = 0; x < ow; ++x)
        lx[static_cast<size_t>(x)] = lerp_at((static_cast<double>(x) + 0.5) * sx - 0.5, w);
    Tensor out = Tensor::zeros({n, c, oh, ow});
    const double* tv = t.data();
    double* ov = out.data();
    for (int64_t bc = 0; bc < n * c; ++bc) {
        const double* src = tv + bc * plane;
        double* dst = ov + bc * oh * ow;
        for (int64_t y = 0; y < oh; ++y) {
            const Lerp& Y = ly[static_cast<size_t>(y)];
            const double* r0 = src + Y.i0 * w;
            const double* r1 = src + Y.i1 * w;
            for (int64_t x = 0; x < ow; ++x) {
                const Lerp& X = lx[static_cast<size_t>(x)];
                double top = r0[X.i0] * (1 - X.f) + r0[X.i1] * X.f;
                double bot = r1[X.i0] * (1 - X.f) + r1[X.i1] * X.f;
                dst[y * ow + x] = top * (1 - Y.f) + bot * Y.f;
            }
        }
    }
    P ti = t.impl, oi = out.impl;
    detail::track(out, t.requires_grad(),
                  [ti, oi, n, c, w, plane, oh, ow, ly = std::move(ly), lx = std::move(lx)] {
                      if (oi->grad.empty()) return;
                      const double* og = oi->grad.data();
                      double* g = ensure_grad(ti);
                      for (int64_t bc = 0; bc < n * c; ++bc) {
                          double* gp = g + bc * plane;
                          const double* go = og + bc * oh * ow;
                          for (int64_t y = 0; y < oh; ++y) {
                              const Lerp& Y = ly[static_cast<size_t>(y)];
                              for (int64_t x = 0; x < ow; ++x) {
                                  const Lerp& X = lx[static_cast<size_t>(x)];
                                  double gv = go[y * ow + x];
                                  gp[Y.i0 * w + X.i0] += gv * (1 - Y.f) * (1 - X.f);
                                  gp[Y.i0 * w + X.i1] += gv * (1 - Y.f) * X.f;
                                  gp[Y.i1 * w + X.i0] += gv * Y.f * (1 - X.f);
                                  gp[Y.i1 * w + X.i1] += gv * Y.f * X.f;
                              }
                          }
                      }
                      detail::consume_grad(oi);
                  });
    return out;
}

namespace {

// Shared scaffolding for constant horizontal shifts: per output column,
// the clamped source interpolation of x - dx.
Tensor shift_x_map(const Tensor& t, const std::vector<double>& dx_per_channel, bool per_channel) {
    check(t.defined() && t.ndim() == 4, "shift_x: expected NCHW");
    int64_t n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3), plane = h * w;
    check(!per_channel || static_cast<int64_t>(dx_per_channel.size()) == c,
          "shift_channels: need one shift per channel");
    std::vector<Lerp> maps(static_cast<size_t>((per_channel ? c : 1) * w));
    int64_t nmaps = per_channel ? c : 1;
    for (int64_t m = 0; m < nmaps; ++m) {
        double dx = dx_per_channel[static_cast<size_t>(per_channel ? m : 0)];
        for (int64_t x = 0; x < w; ++x)
            maps[static_cast<size_t>(m * w + x)] = lerp_at(static_cast<double>(x) - dx, w);
    }
    Tensor out = Tensor::zeros(t.shape());
    const double* tv = t.data();
    double* ov = out.data();
    for (int64_t b = 0; b < n; ++b)
        for (int64_t ch = 0; ch < c; ++ch) {
            const Lerp* mp = maps.data() + (per_channel ? ch : 0) * w;
            const double* src = tv + (b * c + ch) * plane;
            double* dst = ov + (b * c + ch) * plane;
            for (int64_t y = 0; y < h; ++y) {
                const double* row = src + y * w;
                double* orow = dst + y * w;
                for (int64_t x = 0; x < w; ++x) {
                    const Lerp& L = mp[x];
                    orow[x] = row[L.i0] * (1 - L.f) + row[L.i1] * L.f;
                }
            }
        }
    P ti = t.impl;
    P oi = out.impl;
    detail::track(out, t.requires_grad(),
                  [ti, oi, n, c, h, w, plane, per_channel, maps = std::move(maps)] {
                      if (oi->grad.empty()) return;
                      const double* og = oi->grad.data();
                      double* g = ensure_grad(ti);
                      for (int64_t b = 0; b < n; ++b)
                          for (int64_t ch = 0; ch < c; ++ch) {
                              const Lerp* mp = maps.data() + (per_channel ? ch : 0) * w;
                              const double* go = og + (b * c + ch) * plane;
                              double* gp = g + (b * c + ch) * plane;
                              for (int64_t y = 0; y < h; ++y) {
                                  const double* grow = go + y * w;
                                  double* growi = gp + y * w;
                                  for (int64_t x = 0; x < w; ++x) {
                                      const Lerp& L = mp[x];
                                      growi[L.i0] += grow[x] * (1 - L.f);
                                      growi[L.i1] += grow[x] * L.f;
                                  }
                              }
                          }
                      detail::consume_grad(oi);
                  });
    return out;
}

}  // namespace

Tensor shift_x(const Tensor& t, double dx) { return shift_x_map(t, {dx}, false); }

Tensor shift_channels(const Tensor& t, const std::vector<double>& dx) {
    return shift_x_map(t, dx, true);
}

}  // namespace tio
