#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "tio/common.hpp"

namespace tio {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a gradient is accumulated
    bool requires_grad = false;
};

// Value-semantic handle to a shared buffer. Tensors are immutable once
// created except for their grad buffers and optimizer parameter updates,
// which happen outside any recording scope.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& s);
    static Tensor full(const Shape& s, double v);
    static Tensor from(const Shape& s, std::vector<double> values);
    static Tensor scalar(double v);
    static Tensor randn(const Shape& s, Rng& rng, double stddev = 1.0);
    static Tensor uniform(const Shape& s, Rng& rng, double lo, double hi);

    bool defined() const { return impl != nullptr; }
    const Shape& shape() const { return impl->shape; }
    int ndim() const { return static_cast<int>(impl->shape.size()); }
    int64_t dim(int i) const { return impl->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(impl->data.size()); }

    double* data() { return impl->data.data(); }
    const double* data() const { return impl->data.data(); }
    std::vector<double>& vec() { return impl->data; }
    const std::vector<double>& vec() const { return impl->data; }
    double item() const;

    bool requires_grad() const { return impl && impl->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        impl->requires_grad = v;
        return *this;
    }

    // Grad buffer, allocated zero-filled on first access.
    std::vector<double>& grad();
    bool has_grad() const { return impl && !impl->grad.empty(); }
    void zero_grad();

    Tensor detach() const;  // copies data, drops graph participation
    Tensor clone() const;

    std::shared_ptr<TensorImpl> impl;
};

// Ordered record of executed operations. Exactly one tape may be active;
// backward replays it in reverse exactly once per call. Gradients of
// intermediate tensors are consumed during the walk, so repeated backward
// calls accumulate cleanly into leaf gradients.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void backward(const Tensor& loss);
    size_t n_ops() const { return ops_.size(); }

    static bool recording();
    static void record(std::function<void()> step);

private:
    std::vector<std::function<void()>> ops_;
};

// Suppresses recording while alive. Nestable.
struct NoGrad {
    NoGrad();
    ~NoGrad();
    NoGrad(const NoGrad&) = delete;
};

namespace detail {
// Accumulate src into t's grad buffer, allocating it on first use.
void acc_grad(const std::shared_ptr<TensorImpl>& t, const std::vector<double>& src);
// Mark out as tracked and register the backward step if recording.
void track(Tensor& out, bool any_input_tracked, std::function<void()> bw);
// Release an intermediate tensor's grad after its producer consumed it.
void consume_grad(const std::shared_ptr<TensorImpl>& t);
}  // namespace detail

// ---- elementwise (same shape, or scalar tensor on either side) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double s);
Tensor sub(double s, const Tensor& a);
Tensor mul(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
// sqrt with guarded backward: derivative treated as 0 where x < eps.
Tensor sqrt_safe(const Tensor& a, double eps = 1e-24);
Tensor min(const Tensor& a, const Tensor& b);
Tensor min(const Tensor& a, double s);
Tensor max(const Tensor& a, double s);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor elu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double s) { return add(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add(a, -s); }
inline Tensor operator-(double s, const Tensor& a) { return sub(s, a); }
inline Tensor operator*(const Tensor& a, double s) { return mul(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- reductions ----
Tensor reduce_sum(const Tensor& a);
Tensor reduce_mean(const Tensor& a);
Tensor reduce_max(const Tensor& a);
// Axis variants keep the reduced axis with extent 1.
Tensor reduce_sum_axis(const Tensor& a, int axis);
Tensor reduce_mean_axis(const Tensor& a, int axis);
Tensor reduce_max_axis(const Tensor& a, int axis);

// ---- structural ops ----
Tensor reshape(const Tensor& t, const Shape& s);  // same numel, shared-graph copy
Tensor concat_channels(const std::vector<Tensor>& parts);
// N x 1 x H x W -> N x C x H x W
Tensor broadcast_channel(const Tensor& m, int64_t channels);
// t: N x C x H x W, s: {N or 1} x C x 1 x 1, broadcast multiply over H, W
Tensor scale_channels(const Tensor& t, const Tensor& s);
Tensor replicate_pad(const Tensor& t, int pad);
Tensor forward_diff_x(const Tensor& t);  // t[..., x+1] - t[..., x], width W-1
Tensor forward_diff_y(const Tensor& t);
Tensor global_avg_pool(const Tensor& t);  // N x C x H x W -> N x C x 1 x 1

// ---- convolution / pooling / sampling ----
// input N x C x H x W, weight O x C x K x K with K in {1, 3}, optional bias O.
// Zero padding.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding);
Tensor softmax_channel(const Tensor& t);
// img N x C x H x W, xs/ys N x OH x OW; border-clamped bilinear lookup.
Tensor bilinear_sample(const Tensor& img, const Tensor& xs, const Tensor& ys);
Tensor maxpool3x3(const Tensor& t);  // stride 1, edge-replicated, same size
Tensor avgpool3x3(const Tensor& t);  // stride 1, edge-replicated, same size
Tensor avgpool2x2(const Tensor& t);  // stride 2; H, W must be even
// Half-pixel-center bilinear resize (mirror-equivariant).
Tensor resize_bilinear(const Tensor& t, int64_t oh, int64_t ow);
inline Tensor upsample2x(const Tensor& t) {
    return resize_bilinear(t, 2 * t.dim(2), 2 * t.dim(3));
}
// out[..., x] = in[..., x - dx], border-clamped linear interpolation.
Tensor shift_x(const Tensor& t, double dx);
// Per-channel horizontal shift: out[:, c, :, x] = in[:, c, :, x - dx[c]].
Tensor shift_channels(const Tensor& t, const std::vector<double>& dx);

}  // namespace tio
