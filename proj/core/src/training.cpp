#include "tio/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tio/masks.hpp"
#include "tio/warp.hpp"

namespace tio {

void StageSchedule::validate() const {
    check(0 <= e1 && e1 <= e2 && e2 <= total_epochs, "StageSchedule: need 0 <= e1 <= e2 <= total");
    check(lr_base > 0.0, "StageSchedule: lr_base must be positive");
    check(revisit_factor > 0.0 && revisit_factor <= 1.0,
          "StageSchedule: revisit factor must lie in (0, 1]");
}

ParamClass param_class(const std::string& name) {
    auto starts = [&](const char* p) { return name.rfind(p, 0) == 0; };
    if (starts("encoder/")) return ParamClass::encoder;
    if (starts("agg_blocks/")) {
        if (name.find("/fuse_") != std::string::npos) return ParamClass::agg_shared;
        if (name.find("/aux_") != std::string::npos) return ParamClass::agg_aux;
        if (name.find("/final_") != std::string::npos) return ParamClass::agg_final;
        throw std::invalid_argument("param_class: unknown aggregation parameter " + name);
    }
    if (starts("decoder_block/")) return ParamClass::decoder_block;
    if (starts("mfm/")) return ParamClass::mfm;
    if (starts("out_mono/")) return ParamClass::out_mono;
    if (starts("out_stereo/")) return ParamClass::out_stereo;
    throw std::invalid_argument("param_class: unknown parameter " + name);
}

int first_step(ParamClass c) {
    switch (c) {
        case ParamClass::encoder:
        case ParamClass::agg_shared:
        case ParamClass::agg_aux:
        case ParamClass::decoder_block:
        case ParamClass::out_mono:
            return 1;
        case ParamClass::mfm:
        case ParamClass::out_stereo:
            return 2;
        case ParamClass::agg_final:
            return 3;
    }
    throw std::logic_error("first_step: unreachable");
}

bool class_in_step(ParamClass c, int step) {
    switch (step) {
        case 1:  // everything on the monocular path; matching and stereo head untouched
            return c != ParamClass::mfm && c != ParamClass::out_stereo;
        case 2:  // the full decoder side; the encoder is frozen
            return c != ParamClass::encoder;
        case 3:  // aggregation, decoder block, and the mono output layer
            return c == ParamClass::agg_shared || c == ParamClass::agg_aux ||
                   c == ParamClass::agg_final || c == ParamClass::decoder_block ||
                   c == ParamClass::out_mono;
        default:
            throw std::invalid_argument("class_in_step: step must be 1, 2, or 3");
    }
}

std::vector<int> active_steps(int epoch, const StageSchedule& s) {
    s.validate();
    check(epoch >= 0, "active_steps: negative epoch");
    std::vector<int> steps = {1};
    if (epoch >= s.e1) steps.push_back(2);
    if (epoch >= s.e2) steps.push_back(3);
    return steps;
}

double learning_rate(int epoch, int step, ParamClass c, const StageSchedule& s) {
    s.validate();
    check(step >= 1 && step <= 3, "learning_rate: step must be 1, 2, or 3");
    check(class_in_step(c, step), "learning_rate: class is not optimized at this step");
    int enable = step == 1 ? 0 : step == 2 ? s.e1 : s.e2;
    check(epoch >= enable, "learning_rate: step not yet enabled at this epoch");
    double lr = s.lr_base;
    for (int halve : s.lr_halving_epochs)
        if (halve > enable && epoch >= halve) lr *= 0.5;
    if (first_step(c) < step) lr *= s.revisit_factor;
    return lr;
}

Adam::Adam(std::vector<Param> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    check(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0 && cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0,
          "Adam: betas must lie in [0, 1)");
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(static_cast<size_t>(params_[i].tensor.numel()), 0.0);
        v_[i].assign(static_cast<size_t>(params_[i].tensor.numel()), 0.0);
    }
}

void Adam::step(const std::vector<double>& lr) {
    check(lr.size() == params_.size(), "Adam: one learning rate per parameter required");
    ++t_;
    double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i].tensor;
        if (!p.has_grad()) continue;
        const std::vector<double>& g = p.grad();
        double* w = p.data();
        for (size_t j = 0; j < g.size(); ++j) {
            m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g[j];
            v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            double mh = m_[i][j] / c1;
            double vh = v_[i][j] / c2;
            w[j] -= lr[i] * mh / (std::sqrt(vh) + cfg_.eps);
        }
    }
}

namespace {

Tensor mirror_data(const Tensor& t) {
    Tensor out = Tensor::zeros(t.shape());
    int64_t w = t.dim(t.ndim() - 1);
    int64_t rows = t.numel() / w;
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t x = 0; x < w; ++x)
            out.data()[r * w + x] = t.data()[r * w + (w - 1 - x)];
    return out;
}

Tensor crop_data(const Tensor& t, int64_t y0, int64_t x0, int64_t ch, int64_t cw) {
    int64_t n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
    check(y0 >= 0 && x0 >= 0 && y0 + ch <= h && x0 + cw <= w, "augment: crop out of bounds");
    Tensor out = Tensor::zeros({n, c, ch, cw});
    for (int64_t b = 0; b < n; ++b)
        for (int64_t k = 0; k < c; ++k)
            for (int64_t y = 0; y < ch; ++y)
                for (int64_t x = 0; x < cw; ++x)
                    out.data()[((b * c + k) * ch + y) * cw + x] =
                        t.data()[((b * c + k) * h + y0 + y) * w + x0 + x];
    return out;
}

Tensor binarize(const Tensor& t) {
    Tensor out = Tensor::zeros(t.shape());
    for (int64_t i = 0; i < t.numel(); ++i) out.data()[i] = t.data()[i] > 0.999 ? 1.0 : 0.0;
    return out;
}

void clamp01(Tensor& t) {
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = std::clamp(t.data()[i], 0.0, 1.0);
}

}  // namespace

StereoSample augment(const StereoSample& s, const AugmentConfig& cfg, Rng& rng) {
    if (!cfg.enabled) return s;
    check(cfg.scale_min > 0.0 && cfg.scale_max >= cfg.scale_min, "augment: bad scale range");
    NoGrad ng;
    int64_t h = s.left.dim(2), w = s.left.dim(3);
    double sc = cfg.scale_min + (cfg.scale_max - cfg.scale_min) * rng.uniform();
    int64_t nh = std::max<int64_t>(2, std::llround(static_cast<double>(h) * sc));
    int64_t nw = std::max<int64_t>(2, std::llround(static_cast<double>(w) * sc));
    double sx = static_cast<double>(nw) / static_cast<double>(w);

    StereoSample out;
    out.rig = s.rig;
    out.rig.focal_x *= sx;  // keeps depth = baseline * focal / disparity unchanged
    out.left = resize_bilinear(s.left, nh, nw);
    out.right = resize_bilinear(s.right, nh, nw);
    out.disparity_left = mul(resize_bilinear(s.disparity_left, nh, nw), sx);
    out.disparity_right = mul(resize_bilinear(s.disparity_right, nh, nw), sx);
    out.validity_left = binarize(resize_bilinear(s.validity_left, nh, nw));
    out.validity_right = binarize(resize_bilinear(s.validity_right, nh, nw));

    if (cfg.crop_h > 0 && cfg.crop_w > 0) {
        check(cfg.crop_h <= nh && cfg.crop_w <= nw, "augment: crop larger than scaled image");
        int64_t y0 = rng.randint(0, nh - cfg.crop_h);
        int64_t x0 = rng.randint(0, nw - cfg.crop_w);
        for (Tensor* t : {&out.left, &out.right, &out.disparity_left, &out.disparity_right,
                          &out.validity_left, &out.validity_right})
            *t = crop_data(*t, y0, x0, cfg.crop_h, cfg.crop_w);
    }

    if (cfg.flip && rng.coin()) {
        // Mirroring both views swaps their roles in the rectified geometry.
        StereoSample flipped;
        flipped.rig = out.rig;
        flipped.left = mirror_data(out.right);
        flipped.right = mirror_data(out.left);
        flipped.disparity_left = mirror_data(out.disparity_right);
        flipped.disparity_right = mirror_data(out.disparity_left);
        flipped.validity_left = mirror_data(out.validity_right);
        flipped.validity_right = mirror_data(out.validity_left);
        out = flipped;
    }

    if (cfg.jitter && cfg.jitter_strength > 0.0) {
        int64_t plane = out.left.dim(2) * out.left.dim(3);
        for (int64_t c = 0; c < 3; ++c) {
            double bright = 1.0 + cfg.jitter_strength * (2.0 * rng.uniform() - 1.0);
            double contrast = 1.0 + cfg.jitter_strength * (2.0 * rng.uniform() - 1.0);
            for (Tensor* t : {&out.left, &out.right}) {
                double* v = t->data() + c * plane;
                for (int64_t i = 0; i < plane; ++i)
                    v[i] = ((v[i] - 0.5) * contrast + 0.5) * bright;
            }
        }
        clamp01(out.left);
        clamp01(out.right);
    }
    return out;
}

namespace {

std::vector<Param> step_params(TioDepthNet& net, int step) {
    std::vector<Param> out;
    for (const Param& p : net.parameters())
        if (class_in_step(param_class(p.name), step)) out.push_back(p);
    return out;
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg, TioDepthNet& net)
    : cfg_(cfg),
      net_(net),
      feat_(splitmix64(cfg.seed ^ 0xfea7u), 3),
      opt1_(step_params(net, 1)),
      opt2_(step_params(net, 2)),
      opt3_(step_params(net, 3)) {
    cfg_.schedule.validate();
    cfg_.weights.validate();
    check(cfg_.batch >= 1, "Trainer: batch must be at least 1");
}

std::vector<double> Trainer::rates(const Adam& opt, int epoch, int step) const {
    std::vector<double> lr;
    lr.reserve(opt.params().size());
    for (const Param& p : opt.params())
        lr.push_back(learning_rate(epoch, step, param_class(p.name), cfg_.schedule));
    return lr;
}

void Trainer::set_trainable(int step) {
    for (Param& p : net_.parameters())
        p.tensor.set_requires_grad(class_in_step(param_class(p.name), step));
}

void Trainer::clear_grads() {
    for (Param& p : net_.parameters()) p.tensor.zero_grad();
}

double Trainer::step1_update(const Tensor& left, const Tensor& right, int epoch) {
    set_trainable(1);
    const DisparityLevels& lv = net_.levels();
    Tape tape;
    auto pass = [&](const Tensor& img, const Tensor& other, View v) {
        Tensor p = softmax_channel(net_.forward_mono(img, Branch::auxiliary));
        Tensor rec = discrete_reconstruct(p, other, lv, v).img;
        Tensor rec_loss = mono_reconstruction_loss(rec, img, feat_, cfg_.weights.beta);
        Tensor smo = smoothness_loss(expected_disparity(p, lv), img, cfg_.weights.gamma);
        return mono_total_loss(rec_loss, smo, cfg_.weights);
    };
    Tensor loss = mul(add(pass(right, left, View::right), pass(left, right, View::left)), 0.5);
    tape.backward(loss);
    opt1_.step(rates(opt1_, epoch, 1));
    clear_grads();
    return loss.data()[0];
}

double Trainer::step2_update(const Tensor& left, const Tensor& right, const CameraRig& rig,
                             int epoch) {
    set_trainable(2);
    const DisparityLevels& lv = net_.levels();
    const LossWeights& wt = cfg_.weights;

    struct Teacher {
        Tensor target, p_a, d_a, m_out;
    };
    auto teacher = [&](const Tensor& img, const Tensor& other, View v) {
        NoGrad ng;
        Tensor p = softmax_channel(net_.forward_mono(img, Branch::auxiliary));
        Tensor d = expected_disparity(p, lv);
        Tensor filler = continuous_reconstruct(other, disparity_to_depth(d, rig), rig, v).img;
        Tensor m_occ = v == View::left ? occlusion_mask(d) : opposite_occlusion_mask(d);
        Tensor m_out = v == View::left ? out_of_view_mask(d) : opposite_out_of_view_mask(d);
        return Teacher{composite_target(img, filler, m_occ), p, d, m_out};
    };
    Teacher tl = teacher(left, right, View::left);
    Teacher tr = teacher(right, left, View::right);

    Tape tape;
    StereoForward sf = net_.forward_stereo(left, right);
    auto pass = [&](const Tensor& logits, const std::array<Tensor, 3>& attn, const Teacher& t,
                    const Tensor& img, const Tensor& other, View v) {
        Tensor p = softmax_channel(logits);
        Tensor rec = discrete_reconstruct(p, other, lv, v).img;
        Tensor rec_loss = stereo_reconstruction_loss(rec, t.target, wt.alpha);
        Tensor d = expected_disparity(p, lv);
        Tensor smo = smoothness_loss(d, img, wt.gamma);
        Tensor cos = cost_volume_loss({attn[0], attn[1], attn[2]}, t.p_a, wt.t1);
        Tensor gui = guidance_loss(t.d_a, d, t.m_out);
        return stereo_total_loss(rec_loss, smo, cos, gui, wt);
    };
    Tensor loss = mul(add(pass(sf.logits_left, sf.attn_left, tl, left, right, View::left),
                          pass(sf.logits_right, sf.attn_right, tr, right, left, View::right)),
                      0.5);
    tape.backward(loss);
    opt2_.step(rates(opt2_, epoch, 2));
    clear_grads();
    return loss.data()[0];
}

double Trainer::step3_update(const Tensor& left, const Tensor& right, const CameraRig& rig,
                             int epoch) {
    set_trainable(3);
    const DisparityLevels& lv = net_.levels();
    Tensor ph_l, ph_r;
    {
        NoGrad ng;
        StereoForward sf = net_.forward_stereo(left, right);
        auto build = [&](const Tensor& logits_s, const Tensor& img, View v) {
            Tensor p_s = softmax_channel(logits_s);
            Tensor p_a = softmax_channel(net_.forward_mono(img, Branch::auxiliary));
            Tensor d_a = expected_disparity(p_a, lv);
            Tensor depth_s = disparity_to_depth(expected_disparity(p_s, lv), rig);
            // The occlusion geometry of the opposite view, from the auxiliary
            // mono disparity; edges from the stereo depth.
            Tensor m_opp = v == View::left ? opposite_occlusion_mask(d_a) : occlusion_mask(d_a);
            Tensor m_hoe = half_object_edge_map(depth_s, m_opp, cfg_.weights.t2);
            return hybrid_volume(p_s, p_a, m_hoe);
        };
        ph_l = build(sf.logits_left, left, View::left);
        ph_r = build(sf.logits_right, right, View::right);
    }
    Tape tape;
    Tensor pm_l = softmax_channel(net_.forward_mono(left, Branch::final_branch));
    Tensor pm_r = softmax_channel(net_.forward_mono(right, Branch::final_branch));
    Tensor loss = mul(add(distill_loss(ph_l, pm_l), distill_loss(ph_r, pm_r)), 0.5);
    tape.backward(loss);
    opt3_.step(rates(opt3_, epoch, 3));
    clear_grads();
    return loss.data()[0];
}

EpochStats Trainer::run_epoch(int count, const SampleProvider& get, const CameraRig& rig,
                              int epoch) {
    check(count > 0, "run_epoch: empty dataset");
    std::vector<int> order(static_cast<size_t>(count));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(splitmix64(cfg_.seed ^ (0xc0ffeeull + 0x9e3779b9ull * static_cast<uint64_t>(epoch))));
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

    std::vector<int> steps = active_steps(epoch, cfg_.schedule);
    EpochStats st;
    double sum1 = 0.0, sum2 = 0.0, sum3 = 0.0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg_.batch)) {
        size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg_.batch));
        std::vector<Tensor> lefts, rights;
        for (size_t i = start; i < stop; ++i) {
            Rng aug_rng(splitmix64(cfg_.seed ^ (0xa46ull + 0x9e3779b9ull * static_cast<uint64_t>(epoch)) ^
                                   (0x85ebca6bull * static_cast<uint64_t>(order[i] + 1))));
            StereoSample s = augment(get(order[i]), cfg_.aug, aug_rng);
            lefts.push_back(s.left);
            rights.push_back(s.right);
        }
        Tensor left = stack_batch(lefts);
        Tensor right = stack_batch(rights);
        for (int step : steps) {
            if (step == 1) sum1 += step1_update(left, right, epoch);
            if (step == 2) sum2 += step2_update(left, right, rig, epoch);
            if (step == 3) sum3 += step3_update(left, right, rig, epoch);
        }
        ++st.batches;
    }
    double nb = static_cast<double>(st.batches);
    st.step1 = sum1 / nb;
    st.step2 = std::count(steps.begin(), steps.end(), 2) ? sum2 / nb : 0.0;
    st.step3 = std::count(steps.begin(), steps.end(), 3) ? sum3 / nb : 0.0;
    return st;
}

EpochStats Trainer::run_epoch(const SyntheticDataset& data, int epoch) {
    return run_epoch(
        data.size(), [&data](int i) { return data.sample(i); }, data.rig(), epoch);
}

}  // namespace tio
