#include "tio/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tio {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

using P = std::shared_ptr<TensorImpl>;

static double* ensure_grad(const P& t) {
    if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0);
    return t->grad.data();
}

// ---- Tensor ----

Tensor Tensor::zeros(const Shape& s) {
    for (int64_t d : s) check(d > 0, "tensor dims must be positive, got " + shape_str(s));
    Tensor t;
    t.impl = std::make_shared<TensorImpl>();
    t.impl->shape = s;
    t.impl->data.assign(static_cast<size_t>(shape_numel(s)), 0.0);
    return t;
}

Tensor Tensor::full(const Shape& s, double v) {
    Tensor t = zeros(s);
    std::fill(t.impl->data.begin(), t.impl->data.end(), v);
    return t;
}

Tensor Tensor::from(const Shape& s, std::vector<double> values) {
    check(shape_numel(s) == static_cast<int64_t>(values.size()),
          "Tensor::from: " + shape_str(s) + " does not match value count " +
              std::to_string(values.size()));
    Tensor t;
    t.impl = std::make_shared<TensorImpl>();
    t.impl->shape = s;
    t.impl->data = std::move(values);
    return t;
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

Tensor Tensor::randn(const Shape& s, Rng& rng, double stddev) {
    Tensor t = zeros(s);
    for (double& v : t.impl->data) v = rng.normal(0.0, stddev);
    return t;
}

Tensor Tensor::uniform(const Shape& s, Rng& rng, double lo, double hi) {
    Tensor t = zeros(s);
    for (double& v : t.impl->data) v = rng.uniform(lo, hi);
    return t;
}

double Tensor::item() const {
    check(defined() && numel() == 1, "item(): tensor is not scalar");
    return impl->data[0];
}

std::vector<double>& Tensor::grad() {
    ensure_grad(impl);
    return impl->grad;
}

void Tensor::zero_grad() {
    if (impl && !impl->grad.empty()) std::fill(impl->grad.begin(), impl->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    Tensor t;
    t.impl = std::make_shared<TensorImpl>();
    t.impl->shape = impl->shape;
    t.impl->data = impl->data;
    return t;
}

Tensor Tensor::clone() const {
    Tensor t = detach();
    t.impl->requires_grad = impl->requires_grad;
    return t;
}

// ---- Tape ----

namespace {
thread_local Tape* g_active_tape = nullptr;
thread_local int g_nograd_depth = 0;
}  // namespace

Tape::Tape() {
    check(g_active_tape == nullptr, "a tape is already active; one tape per training step");
    g_active_tape = this;
}

Tape::~Tape() { g_active_tape = nullptr; }

bool Tape::recording() { return g_active_tape != nullptr && g_nograd_depth == 0; }

void Tape::record(std::function<void()> step) {
    if (recording()) g_active_tape->ops_.push_back(std::move(step));
}

void Tape::backward(const Tensor& loss) {
    check(loss.defined(), "backward: undefined tensor");
    check(loss.numel() == 1, "backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (!loss.impl->requires_grad) return;
    ensure_grad(loss.impl)[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

NoGrad::NoGrad() { ++g_nograd_depth; }
NoGrad::~NoGrad() { --g_nograd_depth; }

namespace detail {

void acc_grad(const P& t, const std::vector<double>& src) {
    double* g = ensure_grad(t);
    for (size_t i = 0; i < src.size(); ++i) g[i] += src[i];
}

void track(Tensor& out, bool any_input_tracked, std::function<void()> bw) {
    if (Tape::recording() && any_input_tracked) {
        out.impl->requires_grad = true;
        Tape::record(std::move(bw));
    }
}

void consume_grad(const P& t) { std::vector<double>().swap(t->grad); }

}  // namespace detail

// ---- elementwise ----

namespace {

struct EwPlan {
    Shape oshape;
    int64_t n;       // output elements
    size_t sa, sb;   // input strides: 0 for a scalar operand, 1 otherwise
};

EwPlan ew_plan(const Tensor& a, const Tensor& b, const char* op) {
    check(a.defined() && b.defined(), std::string(op) + ": undefined operand");
    bool as = a.numel() == 1, bs = b.numel() == 1;
    check(as || bs || a.shape() == b.shape(),
          std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()) + " are neither equal nor scalar");
    EwPlan p;
    p.oshape = (as && !bs) ? b.shape() : a.shape();
    p.n = std::max(a.numel(), b.numel());
    p.sa = as ? 0 : 1;
    p.sb = bs ? 0 : 1;
    return p;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    EwPlan p = ew_plan(a, b, "add");
    Tensor out = Tensor::zeros(p.oshape);
    const double* av = a.data();
    const double* bv = b.data();
    double* ov = out.data();
    for (int64_t i = 0; i < p.n; ++i) ov[i] = av[i * p.sa] + bv[i * p.sb];
    P ai = a.impl, bi = b.impl, oi = out.impl;
    detail::track(out, a.requires_grad() || b.requires_grad(), [ai, bi, oi, p] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        if (ai->requires_grad) {
            double* ga = ensure_grad(ai);
            for (int64_t i = 0; i < p.n; ++i) ga[i * p.sa] += og[i];
        }
        if (bi->requires_grad) {
            double* gb = ensure_grad(bi);
            for (int64_t i = 0; i < p.n; ++i) gb[i * p.sb] += og[i];
        }
        detail::consume_grad(oi);
    });
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    EwPlan p = ew_plan(a, b, "sub");
    Tensor out = Tensor::zeros(p.oshape);
    const double* av = a.data();
    const double* bv = b.data();
    double* ov = out.data();
    for (int64_t i = 0; i < p.n; ++i) ov[i] = av[i * p.sa] - bv[i * p.sb];
    P ai = a.impl, bi = b.impl, oi = out.impl;
    detail::track(out, a.requires_grad() || b.requires_grad(), [ai, bi, oi, p] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        if (ai->requires_grad) {
            double* ga = ensure_grad(ai);
            for (int64_t i = 0; i < p.n; ++i) ga[i * p.sa] += og[i];
        }
        if (bi->requires_grad) {
            double* gb = ensure_grad(bi);
            for (int64_t i = 0; i < p.n; ++i) gb[i * p.sb] -= og[i];
        }
        detail::consume_grad(oi);
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    EwPlan p = ew_plan(a, b, "mul");
    Tensor out = Tensor::zeros(p.oshape);
    const double* av = a.data();
    const double* bv = b.data();
    double* ov = out.data();
    for (int64_t i = 0; i < p.n; ++i) ov[i] = av[i * p.sa] * bv[i * p.sb];
    P ai = a.impl, bi = b.impl, oi = out.impl;
    detail::track(out, a.requires_grad() || b.requires_grad(), [ai, bi, oi, p] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        const double* av2 = ai->data.data();
        const double* bv2 = bi->data.data();
        if (ai->requires_grad) {
            double* ga = ensure_grad(ai);
            for (int64_t i = 0; i < p.n; ++i) ga[i * p.sa] += og[i] * bv2[i * p.sb];
        }
        if (bi->requires_grad) {
            double* gb = ensure_grad(bi);
            for (int64_t i = 0; i < p.n; ++i) gb[i * p.sb] += og[i] * av2[i * p.sa];
        }
        detail::consume_grad(oi);
    });
    return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
    EwPlan p = ew_plan(a, b, "div");
    Tensor out = Tensor::zeros(p.oshape);
    const double* av = a.data();
    const double* bv = b.data();
    double* ov = out.data();
    for (int64_t i = 0; i < p.n; ++i) ov[i] = av[i * p.sa] / bv[i * p.sb];
    P ai = a.impl, bi = b.impl, oi = out.impl;
    detail::track(out, a.requires_grad() || b.requires_grad(), [ai, bi, oi, p] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        const double* av2 = ai->data.data();
        const double* bv2 = bi->data.data();
        if (ai->requires_grad) {
            double* ga = ensure_grad(ai);
            for (int64_t i = 0; i < p.n; ++i) ga[i * p.sa] += og[i] / bv2[i * p.sb];
        }
        if (bi->requires_grad) {
            double* gb = ensure_grad(bi);
            for (int64_t i = 0; i < p.n; ++i) {
                double bb = bv2[i * p.sb];
                gb[i * p.sb] -= og[i] * av2[i * p.sa] / (bb * bb);
            }
        }
        detail::consume_grad(oi);
    });
    return out;
}

Tensor add(const Tensor& a, double s) { return add(a, Tensor::scalar(s)); }
Tensor sub(double s, const Tensor& a) { return sub(Tensor::scalar(s), a); }
Tensor mul(const Tensor& a, double s) { return mul(a, Tensor::scalar(s)); }
Tensor neg(const Tensor& a) { return mul(a, -1.0); }

namespace {

// Unary elementwise op: out[i] = f(a[i]), da[i] = df(a[i], out[i]) * og[i].
template <class F, class DF>
Tensor unary_ew(const Tensor& a, F f, DF df, const char* op) {
    check(a.defined(), std::string(op) + ": undefined operand");
    Tensor out = Tensor::zeros(a.shape());
    const double* av = a.data();
    double* ov = out.data();
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) ov[i] = f(av[i]);
    P ai = a.impl, oi = out.impl;
    detail::track(out, a.requires_grad(), [ai, oi, df, n] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        const double* av2 = ai->data.data();
        const double* ov2 = oi->data.data();
        double* ga = ensure_grad(ai);
        for (int64_t i = 0; i < n; ++i) ga[i] += og[i] * df(av2[i], ov2[i]);
        detail::consume_grad(oi);
    });
    return out;
}

}  // namespace

Tensor abs(const Tensor& a) {
    return unary_ew(
        a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }, "abs");
}

Tensor exp(const Tensor& a) {
    return unary_ew(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; }, "exp");
}

Tensor log(const Tensor& a) {
    return unary_ew(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; },
        "log");
}

Tensor sqrt_safe(const Tensor& a, double eps) {
    return unary_ew(
        a, [](double x) { return std::sqrt(x > 0.0 ? x : 0.0); },
        [eps](double x, double y) { return x > eps ? 0.5 / y : 0.0; }, "sqrt_safe");
}

Tensor min(const Tensor& a, const Tensor& b) {
    EwPlan p = ew_plan(a, b, "min");
    Tensor out = Tensor::zeros(p.oshape);
    const double* av = a.data();
    const double* bv = b.data();
    double* ov = out.data();
    for (int64_t i = 0; i < p.n; ++i) ov[i] = std::min(av[i * p.sa], bv[i * p.sb]);
    P ai = a.impl, bi = b.impl, oi = out.impl;
    detail::track(out, a.requires_grad() || b.requires_grad(), [ai, bi, oi, p] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        const double* av2 = ai->data.data();
        const double* bv2 = bi->data.data();
        // Ties route to the first operand.
        if (ai->requires_grad) {
            double* ga = ensure_grad(ai);
            for (int64_t i = 0; i < p.n; ++i)
                if (av2[i * p.sa] <= bv2[i * p.sb]) ga[i * p.sa] += og[i];
        }
        if (bi->requires_grad) {
            double* gb = ensure_grad(bi);
            for (int64_t i = 0; i < p.n; ++i)
                if (av2[i * p.sa] > bv2[i * p.sb]) gb[i * p.sb] += og[i];
        }
        detail::consume_grad(oi);
    });
    return out;
}

Tensor min(const Tensor& a, double s) {
    return unary_ew(
        a, [s](double x) { return std::min(x, s); },
        [s](double x, double) { return x <= s ? 1.0 : 0.0; }, "min");
}

Tensor max(const Tensor& a, double s) {
    return unary_ew(
        a, [s](double x) { return std::max(x, s); },
        [s](double x, double) { return x >= s ? 1.0 : 0.0; }, "max");
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    check(lo <= hi, "clamp: lo > hi");
    return unary_ew(
        a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; }, "clamp");
}

Tensor elu(const Tensor& a) {
    return unary_ew(
        a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
        [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; }, "elu");
}

Tensor sigmoid(const Tensor& a) {
    return unary_ew(
        a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

// ---- reductions ----

Tensor reduce_sum(const Tensor& a) {
    check(a.defined() && a.numel() > 0, "reduce_sum: empty tensor");
    double s = 0.0;
    const double* av = a.data();
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) s += av[i];
    Tensor out = Tensor::scalar(s);
    P ai = a.impl, oi = out.impl;
    detail::track(out, a.requires_grad(), [ai, oi, n] {
        if (oi->grad.empty()) return;
        double g = oi->grad[0];
        double* ga = ensure_grad(ai);
        for (int64_t i = 0; i < n; ++i) ga[i] += g;
        detail::consume_grad(oi);
    });
    return out;
}

Tensor reduce_mean(const Tensor& a) {
    check(a.defined() && a.numel() > 0, "reduce_mean: empty tensor");
    return mul(reduce_sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor reduce_max(const Tensor& a) {
    check(a.defined() && a.numel() > 0, "reduce_max: empty tensor");
    const double* av = a.data();
    int64_t n = a.numel();
    int64_t arg = 0;
    for (int64_t i = 1; i < n; ++i)
        if (av[i] > av[arg]) arg = i;
    Tensor out = Tensor::scalar(av[arg]);
    P ai = a.impl, oi = out.impl;
    detail::track(out, a.requires_grad(), [ai, oi, arg] {
        if (oi->grad.empty()) return;
        ensure_grad(ai)[arg] += oi->grad[0];
        detail::consume_grad(oi);
    });
    return out;
}

namespace {

struct AxisPlan {
    int64_t outer, mid, inner;  // a viewed as outer x mid x inner, reduce over mid
    Shape oshape;
};

AxisPlan axis_plan(const Tensor& a, int axis, const char* op) {
    check(a.defined() && a.numel() > 0, std::string(op) + ": empty tensor");
    check(axis >= 0 && axis < a.ndim(), std::string(op) + ": axis out of range");
    AxisPlan p;
    p.outer = 1;
    p.inner = 1;
    for (int i = 0; i < axis; ++i) p.outer *= a.dim(i);
    p.mid = a.dim(axis);
    for (int i = axis + 1; i < a.ndim(); ++i) p.inner *= a.dim(i);
    p.oshape = a.shape();
    p.oshape[static_cast<size_t>(axis)] = 1;
    return p;
}

}  // namespace

Tensor reduce_sum_axis(const Tensor& a, int axis) {
    AxisPlan p = axis_plan(a, axis, "reduce_sum_axis");
    Tensor out = Tensor::zeros(p.oshape);
    const double* av = a.data();
    double* ov = out.data();
    for (int64_t o = 0; o < p.outer; ++o)
        for (int64_t m = 0; m < p.mid; ++m) {
            const double* src = av + (o * p.mid + m) * p.inner;
            double* dst = ov + o * p.inner;
            for (int64_t i = 0; i < p.inner; ++i) dst[i] += src[i];
        }
    P ai = a.impl, oi = out.impl;
    detail::track(out, a.requires_grad(), [ai, oi, p] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        double* ga = ensure_grad(ai);
        for (int64_t o = 0; o < p.outer; ++o)
            for (int64_t m = 0; m < p.mid; ++m) {
                double* dst = ga + (o * p.mid + m) * p.inner;
                const double* src = og + o * p.inner;
                for (int64_t i = 0; i < p.inner; ++i) dst[i] += src[i];
            }
        detail::consume_grad(oi);
    });
    return out;
}

Tensor reduce_mean_axis(const Tensor& a, int axis) {
    AxisPlan p = axis_plan(a, axis, "reduce_mean_axis");
    return mul(reduce_sum_axis(a, axis), 1.0 / static_cast<double>(p.mid));
}

Tensor reduce_max_axis(const Tensor& a, int axis) {
    AxisPlan p = axis_plan(a, axis, "reduce_max_axis");
    Tensor out = Tensor::zeros(p.oshape);
    std::vector<int64_t> argmax(static_cast<size_t>(p.outer * p.inner));
    const double* av = a.data();
    double* ov = out.data();
    for (int64_t o = 0; o < p.outer; ++o)
        for (int64_t i = 0; i < p.inner; ++i) {
            int64_t best = 0;
            double bv = av[o * p.mid * p.inner + i];
            for (int64_t m = 1; m < p.mid; ++m) {
                double v = av[(o * p.mid + m) * p.inner + i];
                if (v > bv) {
                    bv = v;
                    best = m;
                }
            }
            ov[o * p.inner + i] = bv;
            argmax[static_cast<size_t>(o * p.inner + i)] = best;
        }
    P ai = a.impl, oi = out.impl;
    detail::track(out, a.requires_grad(), [ai, oi, p, argmax] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        double* ga = ensure_grad(ai);
        for (int64_t o = 0; o < p.outer; ++o)
            for (int64_t i = 0; i < p.inner; ++i) {
                int64_t m = argmax[static_cast<size_t>(o * p.inner + i)];
                ga[(o * p.mid + m) * p.inner + i] += og[o * p.inner + i];
            }
        detail::consume_grad(oi);
    });
    return out;
}

// ---- structural ops ----

namespace {

void check_nchw(const Tensor& t, const char* op) {
    check(t.defined() && t.ndim() == 4,
          std::string(op) + ": expected a 4-d NCHW tensor");
}

}  // namespace

Tensor reshape(const Tensor& t, const Shape& s) {
    check(t.defined(), "reshape: undefined tensor");
    check(shape_numel(s) == t.numel(),
          "reshape: " + shape_str(t.shape()) + " to " + shape_str(s) + " changes element count");
    Tensor out = Tensor::from(s, t.impl->data);
    P ti = t.impl, oi = out.impl;
    detail::track(out, t.requires_grad(), [ti, oi] {
        if (oi->grad.empty()) return;
        detail::acc_grad(ti, oi->grad);
        detail::consume_grad(oi);
    });
    return out;
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    check(!parts.empty(), "concat_channels: no inputs");
    check_nchw(parts[0], "concat_channels");
    int64_t n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
    int64_t ctotal = 0;
    bool tracked = false;
    for (const Tensor& t : parts) {
        check_nchw(t, "concat_channels");
        check(t.dim(0) == n && t.dim(2) == h && t.dim(3) == w,
              "concat_channels: mismatched N/H/W");
        ctotal += t.dim(1);
        tracked = tracked || t.requires_grad();
    }
    Tensor out = Tensor::zeros({n, ctotal, h, w});
    double* ov = out.data();
    int64_t plane = h * w;
    int64_t coff = 0;
    for (const Tensor& t : parts) {
        int64_t c = t.dim(1);
        const double* tv = t.data();
        for (int64_t b = 0; b < n; ++b)
            std::copy(tv + b * c * plane, tv + (b + 1) * c * plane,
                      ov + (b * ctotal + coff) * plane);
        coff += c;
    }
    std::vector<P> impls;
    for (const Tensor& t : parts) impls.push_back(t.impl);
    P oi = out.impl;
    detail::track(out, tracked, [impls, oi, n, ctotal, plane] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        int64_t coff2 = 0;
        for (const P& ti : impls) {
            int64_t c = ti->shape[1];
            if (ti->requires_grad) {
                double* g = ensure_grad(ti);
                for (int64_t b = 0; b < n; ++b) {
                    const double* src = og + (b * ctotal + coff2) * plane;
                    double* dst = g + b * c * plane;
                    for (int64_t i = 0; i < c * plane; ++i) dst[i] += src[i];
                }
            }
            coff2 += c;
        }
        detail::consume_grad(oi);
    });
    return out;
}

Tensor broadcast_channel(const Tensor& m, int64_t channels) {
    check_nchw(m, "broadcast_channel");
    check(m.dim(1) == 1, "broadcast_channel: input must have one channel");
    check(channels >= 1, "broadcast_channel: channel count must be positive");
    int64_t n = m.dim(0), h = m.dim(2), w = m.dim(3), plane = h * w;
    Tensor out = Tensor::zeros({n, channels, h, w});
    const double* mv = m.data();
    double* ov = out.data();
    for (int64_t b = 0; b < n; ++b)
        for (int64_t c = 0; c < channels; ++c)
            std::copy(mv + b * plane, mv + (b + 1) * plane, ov + (b * channels + c) * plane);
    P mi = m.impl, oi = out.impl;
    detail::track(out, m.requires_grad(), [mi, oi, n, channels, plane] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        double* g = ensure_grad(mi);
        for (int64_t b = 0; b < n; ++b)
            for (int64_t c = 0; c < channels; ++c) {
                const double* src = og + (b * channels + c) * plane;
                double* dst = g + b * plane;
                for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
            }
        detail::consume_grad(oi);
    });
    return out;
}

Tensor scale_channels(const Tensor& t, const Tensor& s) {
    check_nchw(t, "scale_channels");
    check_nchw(s, "scale_channels");
    int64_t n = t.dim(0), c = t.dim(1), plane = t.dim(2) * t.dim(3);
    check(s.dim(1) == c && s.dim(2) == 1 && s.dim(3) == 1 &&
              (s.dim(0) == n || s.dim(0) == 1),
          "scale_channels: scale must be {N|1} x C x 1 x 1 with matching C");
    int64_t sb = (s.dim(0) == n) ? 1 : 0;  // batch stride selector for s
    Tensor out = Tensor::zeros(t.shape());
    const double* tv = t.data();
    const double* sv = s.data();
    double* ov = out.data();
    for (int64_t b = 0; b < n; ++b)
        for (int64_t ch = 0; ch < c; ++ch) {
            double f = sv[(b * sb) * c + ch];
            const double* src = tv + (b * c + ch) * plane;
            double* dst = ov + (b * c + ch) * plane;
            for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] * f;
        }
    P ti = t.impl, si = s.impl, oi = out.impl;
    detail::track(out, t.requires_grad() || s.requires_grad(), [ti, si, oi, n, c, plane, sb] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        const double* tv2 = ti->data.data();
        const double* sv2 = si->data.data();
        if (ti->requires_grad) {
            double* g = ensure_grad(ti);
            for (int64_t b = 0; b < n; ++b)
                for (int64_t ch = 0; ch < c; ++ch) {
                    double f = sv2[(b * sb) * c + ch];
                    const double* src = og + (b * c + ch) * plane;
                    double* dst = g + (b * c + ch) * plane;
                    for (int64_t i = 0; i < plane; ++i) dst[i] += src[i] * f;
                }
        }
        if (si->requires_grad) {
            double* g = ensure_grad(si);
            for (int64_t b = 0; b < n; ++b)
                for (int64_t ch = 0; ch < c; ++ch) {
                    const double* go = og + (b * c + ch) * plane;
                    const double* tvv = tv2 + (b * c + ch) * plane;
                    double acc = 0.0;
                    for (int64_t i = 0; i < plane; ++i) acc += go[i] * tvv[i];
                    g[(b * sb) * c + ch] += acc;
                }
        }
        detail::consume_grad(oi);
    });
    return out;
}

Tensor replicate_pad(const Tensor& t, int pad) {
    check_nchw(t, "replicate_pad");
    check(pad >= 0, "replicate_pad: negative pad");
    int64_t n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
    int64_t oh = h + 2 * pad, ow = w + 2 * pad;
    Tensor out = Tensor::zeros({n, c, oh, ow});
    const double* tv = t.data();
    double* ov = out.data();
    for (int64_t bc = 0; bc < n * c; ++bc) {
        const double* src = tv + bc * h * w;
        double* dst = ov + bc * oh * ow;
        for (int64_t y = 0; y < oh; ++y) {
            int64_t sy = std::clamp<int64_t>(y - pad, 0, h - 1);
            for (int64_t x = 0; x < ow; ++x) {
                int64_t sx = std::clamp<int64_t>(x - pad, 0, w - 1);
                dst[y * ow + x] = src[sy * w + sx];
            }
        }
    }
    P ti = t.impl, oi = out.impl;
    detail::track(out, t.requires_grad(), [ti, oi, n, c, h, w, oh, ow, pad] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        double* g = ensure_grad(ti);
        for (int64_t bc = 0; bc < n * c; ++bc) {
            const double* go = og + bc * oh * ow;
            double* dst = g + bc * h * w;
            for (int64_t y = 0; y < oh; ++y) {
                int64_t sy = std::clamp<int64_t>(y - pad, 0, h - 1);
                for (int64_t x = 0; x < ow; ++x) {
                    int64_t sx = std::clamp<int64_t>(x - pad, 0, w - 1);
                    dst[sy * w + sx] += go[y * ow + x];
                }
            }
        }
        detail::consume_grad(oi);
    });
    return out;
}

Tensor forward_diff_x(const Tensor& t) {
    check_nchw(t, "forward_diff_x");
    check(t.dim(3) >= 2, "forward_diff_x: width must be at least 2");
    int64_t n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3), ow = w - 1;
    Tensor out = Tensor::zeros({n, c, h, ow});
    const double* tv = t.data();
    double* ov = out.data();
    for (int64_t r = 0; r < n * c * h; ++r) {
        const double* src = tv + r * w;
        double* dst = ov + r * ow;
        for (int64_t x = 0; x < ow; ++x) dst[x] = src[x + 1] - src[x];
    }
    P ti = t.impl, oi = out.impl;
    detail::track(out, t.requires_grad(), [ti, oi, n, c, h, w, ow] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        double* g = ensure_grad(ti);
        for (int64_t r = 0; r < n * c * h; ++r) {
            const double* go = og + r * ow;
            double* dst = g + r * w;
            for (int64_t x = 0; x < ow; ++x) {
                dst[x + 1] += go[x];
                dst[x] -= go[x];
            }
        }
        detail::consume_grad(oi);
    });
    return out;
}

Tensor forward_diff_y(const Tensor& t) {
    check_nchw(t, "forward_diff_y");
    check(t.dim(2) >= 2, "forward_diff_y: height must be at least 2");
    int64_t n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3), ohh = h - 1;
    Tensor out = Tensor::zeros({n, c, ohh, w});
    const double* tv = t.data();
    double* ov = out.data();
    for (int64_t bc = 0; bc < n * c; ++bc)
        for (int64_t y = 0; y < ohh; ++y) {
            const double* s0 = tv + (bc * h + y) * w;
            const double* s1 = tv + (bc * h + y + 1) * w;
            double* dst = ov + (bc * ohh + y) * w;
            for (int64_t x = 0; x < w; ++x) dst[x] = s1[x] - s0[x];
        }
    P ti = t.impl, oi = out.impl;
    detail::track(out, t.requires_grad(), [ti, oi, n, c, h, w, ohh] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        double* g = ensure_grad(ti);
        for (int64_t bc = 0; bc < n * c; ++bc)
            for (int64_t y = 0; y < ohh; ++y) {
                const double* go = og + (bc * ohh + y) * w;
                double* d0 = g + (bc * h + y) * w;
                double* d1 = g + (bc * h + y + 1) * w;
                for (int64_t x = 0; x < w; ++x) {
                    d1[x] += go[x];
                    d0[x] -= go[x];
                }
            }
        detail::consume_grad(oi);
    });
    return out;
}

Tensor global_avg_pool(const Tensor& t) {
    check_nchw(t, "global_avg_pool");
    int64_t n = t.dim(0), c = t.dim(1), plane = t.dim(2) * t.dim(3);
    Tensor out = Tensor::zeros({n, c, 1, 1});
    const double* tv = t.data();
    double* ov = out.data();
    double inv = 1.0 / static_cast<double>(plane);
    for (int64_t bc = 0; bc < n * c; ++bc) {
        const double* src = tv + bc * plane;
        double acc = 0.0;
        for (int64_t i = 0; i < plane; ++i) acc += src[i];
        ov[bc] = acc * inv;
    }
    P ti = t.impl, oi = out.impl;
    detail::track(out, t.requires_grad(), [ti, oi, n, c, plane, inv] {
        if (oi->grad.empty()) return;
        const double* og = oi->grad.data();
        double* g = ensure_grad(ti);
        for (int64_t bc = 0; bc < n * c; ++bc) {
            double gv = og[bc] * inv;
            double* dst = g + bc * plane;
            for (int64_t i = 0; i < plane; ++i) dst[i] += gv;
        }
        detail::consume_grad(oi);
    });
    return out;
}

}  // namespace tio
