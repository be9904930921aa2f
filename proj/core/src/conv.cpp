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

// Zero-padded copy of an NCHW block, or the original when pad == 0.
std::vector<double> pad_zero(const double* src, int64_t nc, int64_t h, int64_t w, int64_t p) {
    int64_t ph = h + 2 * p, pw = w + 2 * p;
    std::vector<double> out(static_cast<size_t>(nc * ph * pw), 0.0);
    for (int64_t bc = 0; bc < nc; ++bc)
        for (int64_t y = 0; y < h; ++y)
            std::copy(src + (bc * h + y) * w, src + (bc * h + y + 1) * w,
                      out.data() + (bc * ph + y + p) * pw + p);
    return out;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding) {
    check(input.defined() && input.ndim() == 4, "conv2d: input must be NCHW");
    check(weight.defined() && weight.ndim() == 4, "conv2d: weight must be OCKK");
    int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    int64_t o = weight.dim(0), k = weight.dim(2);
    check(weight.dim(1) == c, "conv2d: weight channels " + std::to_string(weight.dim(1)) +
                                  " do not match input channels " + std::to_string(c));
    check(weight.dim(3) == k && (k == 1 || k == 3), "conv2d: kernel must be 1x1 or 3x3");
    check(stride >= 1 && padding >= 0, "conv2d: bad stride/padding");
    if (bias.defined())
        check(bias.ndim() == 1 && bias.dim(0) == o, "conv2d: bias must have O entries");
    int64_t s = stride, p = padding;
    int64_t oh = (h + 2 * p - k) / s + 1, ow = (w + 2 * p - k) / s + 1;
    check(oh >= 1 && ow >= 1, "conv2d: output would be empty");

    int64_t ph = h + 2 * p, pw = w + 2 * p;
    std::vector<double> padded;
    const double* pin = input.data();
    if (p > 0) {
        padded = pad_zero(input.data(), n * c, h, w, p);
        pin = padded.data();
    }

    Tensor out = Tensor::zeros({n, o, oh, ow});
    double* ov = out.data();
    const double* wv = weight.data();
    const double* bv = bias.defined() ? bias.data() : nullptr;
    for (int64_t b = 0; b < n; ++b)
        for (int64_t oc = 0; oc < o; ++oc) {
            double* oplane = ov + (b * o + oc) * oh * ow;
            if (bv) std::fill(oplane, oplane + oh * ow, bv[oc]);
            for (int64_t ic = 0; ic < c; ++ic) {
                const double* iplane = pin + (b * c + ic) * ph * pw;
                const double* wk = wv + (oc * c + ic) * k * k;
                for (int64_t ky = 0; ky < k; ++ky)
                    for (int64_t kx = 0; kx < k; ++kx) {
                        double f = wk[ky * k + kx];
                        for (int64_t oy = 0; oy < oh; ++oy) {
                            const double* src = iplane + (oy * s + ky) * pw + kx;
                            double* dst = oplane + oy * ow;
                            if (s == 1)
                                for (int64_t ox = 0; ox < ow; ++ox) dst[ox] += f * src[ox];
                            else
                                for (int64_t ox = 0; ox < ow; ++ox) dst[ox] += f * src[ox * s];
                        }
                    }
            }
        }

    P ii = input.impl, wi = weight.impl, oi = out.impl;
    P bi = bias.defined() ? bias.impl : nullptr;
    bool tracked = input.requires_grad() || weight.requires_grad() ||
                   (bias.defined() && bias.requires_grad());
    detail::track(out, tracked, [ii, wi, bi, oi, n, c, h, w, o, k, s, p, oh, ow, ph, pw] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        const double* wv2 = wi->data.data();

        if (ii->requires_grad) {
            std::vector<double> pg(static_cast<size_t>(n * c * ph * pw), 0.0);
            for (int64_t b = 0; b < n; ++b)
                for (int64_t ic = 0; ic < c; ++ic) {
                    double* gplane = pg.data() + (b * c + ic) * ph * pw;
                    for (int64_t oc = 0; oc < o; ++oc) {
                        const double* goplane = og + (b * o + oc) * oh * ow;
                        const double* wk = wv2 + (oc * c + ic) * k * k;
                        for (int64_t ky = 0; ky < k; ++ky)
                            for (int64_t kx = 0; kx < k; ++kx) {
                                double f = wk[ky * k + kx];
                                for (int64_t oy = 0; oy < oh; ++oy) {
                                    double* dst = gplane + (oy * s + ky) * pw + kx;
                                    const double* src = goplane + oy * ow;
                                    if (s == 1)
                                        for (int64_t ox = 0; ox < ow; ++ox)
                                            dst[ox] += f * src[ox];
                                    else
                                        for (int64_t ox = 0; ox < ow; ++ox)
                                            dst[ox * s] += f * src[ox];
                                }
                            }
                    }
                }
            double* gi = ensure_grad(ii);
            for (int64_t bc = 0; bc < n * c; ++bc)
                for (int64_t y = 0; y < h; ++y) {
                    const double* src = pg.data() + (bc * ph + y + p) * pw + p;
                    double* dst = gi + (bc * h + y) * w;
                    for (int64_t x = 0; x < w; ++x) dst[x] += src[x];
                }
        }

        if (wi->requires_grad || (bi && bi->requires_grad)) {
            std::vector<double> padded2;
            const double* pin2 = ii->data.data();
            if (p > 0) {
                padded2 = pad_zero(ii->data.data(), n * c, h, w, p);
                pin2 = padded2.data();
            }
            if (wi->requires_grad) {
                double* gw = ensure_grad(wi);
                for (int64_t oc = 0; oc < o; ++oc)
                    for (int64_t ic = 0; ic < c; ++ic)
                        for (int64_t ky = 0; ky < k; ++ky)
                            for (int64_t kx = 0; kx < k; ++kx) {
                                double acc = 0.0;
                                for (int64_t b = 0; b < n; ++b) {
                                    const double* goplane = og + (b * o + oc) * oh * ow;
                                    const double* iplane = pin2 + (b * c + ic) * ph * pw;
                                    for (int64_t oy = 0; oy < oh; ++oy) {
                                        const double* src = iplane + (oy * s + ky) * pw + kx;
                                        const double* go = goplane + oy * ow;
                                        if (s == 1)
                                            for (int64_t ox = 0; ox < ow; ++ox)
                                                acc += go[ox] * src[ox];
                                        else
                                            for (int64_t ox = 0; ox < ow; ++ox)
                                                acc += go[ox] * src[ox * s];
                                    }
                                }
                                gw[((oc * c + ic) * k + ky) * k + kx] += acc;
                            }
            }
            if (bi && bi->requires_grad) {
                double* gb = ensure_grad(bi);
                for (int64_t oc = 0; oc < o; ++oc) {
                    double acc = 0.0;
                    for (int64_t b = 0; b < n; ++b) {
                        const double* goplane = og + (b * o + oc) * oh * ow;
                        for (int64_t i = 0; i < oh * ow; ++i) acc += goplane[i];
                    }
                    gb[oc] += acc;
                }
            }
        }
        detail::consume_grad(oi);
    });
    return out;
}

}  // namespace tio
