#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tio/data.hpp"
#include "tio/losses.hpp"
#include "tio/network.hpp"

namespace tio {

// Epoch gates for the three training steps and the learning-rate policy.
struct StageSchedule {
    int e1 = 20;           // step 2 enabled from this epoch
    int e2 = 30;           // step 3 enabled from this epoch
    int total_epochs = 50;
    double lr_base = 1e-4;
    std::vector<int> lr_halving_epochs = {20, 30, 40, 45};
    double revisit_factor = 0.1;
    void validate() const;
};

// Parameter classes with distinct trainability and learning-rate treatment.
enum class ParamClass {
    encoder,
    agg_shared,   // fuse convolutions used by every path
    agg_aux,      // auxiliary decoder branch
    agg_final,    // final decoder branch (distilled mono path)
    decoder_block,
    mfm,
    out_mono,
    out_stereo,
};

ParamClass param_class(const std::string& name);

// The first training step that optimizes the class: classes revisited by a
// later step run at revisit_factor times that step's rate.
int first_step(ParamClass c);

// Whether the given step's optimizer updates the class.
bool class_in_step(ParamClass c, int step);

// {1} before e1, {1,2} in [e1, e2), {1,2,3} from e2 on.
std::vector<int> active_steps(int epoch, const StageSchedule& s);

// Base rate halved at each halving epoch that lies strictly after the step's
// enable epoch, times the revisit factor for classes first trained earlier.
double learning_rate(int epoch, int step, ParamClass c, const StageSchedule& s);

struct AdamConfig {
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adaptive-moment optimizer over a fixed parameter subset. Parameters whose
// gradient is absent in a step are skipped entirely (moments untouched), so
// groups outside the recorded graph stay bit-identical.
class Adam {
  public:
    Adam(std::vector<Param> params, AdamConfig cfg = {});
    void step(const std::vector<double>& lr);  // one rate per parameter
    const std::vector<Param>& params() const { return params_; }

  private:
    std::vector<Param> params_;
    std::vector<std::vector<double>> m_, v_;
    AdamConfig cfg_;
    int64_t t_ = 0;
};

struct AugmentConfig {
    bool enabled = true;
    double scale_min = 0.67;
    double scale_max = 1.5;
    int64_t crop_h = 48;  // 0 = no crop (keep the scaled size)
    int64_t crop_w = 96;
    bool flip = true;
    bool jitter = true;
    double jitter_strength = 0.2;
};

// Random resize (disparity values scale along), random crop, horizontal flip
// (swaps the two views to keep the rectified geometry), and a photometric
// jitter applied identically to both views.
StereoSample augment(const StereoSample& s, const AugmentConfig& cfg, Rng& rng);

struct TrainConfig {
    StageSchedule schedule;
    NetConfig net;
    LossWeights weights;
    AugmentConfig aug;
    int batch = 4;
    int64_t height = 64;
    int64_t width = 128;
    uint64_t seed = 0;
    int train_count = 200;
    int val_count = 40;
    double data_d_min = 2.0;
    double data_d_max = 14.0;
    CameraRig rig{0.54, 100.0};
    std::string data_dir;  // optional: load pre-generated samples instead
    std::string out_dir;   // checkpoints and the CSV log
};

struct EpochStats {
    double step1 = 0.0, step2 = 0.0, step3 = 0.0;  // mean loss per active step
    int batches = 0;
};

// Runs the three-step schedule over a dataset. Each step freezes its
// non-trained classes at graph-recording time, so frozen parameters receive
// no gradient and stay bit-identical through the step's update.
class Trainer {
  public:
    Trainer(const TrainConfig& cfg, TioDepthNet& net);

    double step1_update(const Tensor& left, const Tensor& right, int epoch);
    double step2_update(const Tensor& left, const Tensor& right, const CameraRig& rig,
                        int epoch);
    double step3_update(const Tensor& left, const Tensor& right, const CameraRig& rig,
                        int epoch);

    using SampleProvider = std::function<StereoSample(int)>;

    EpochStats run_epoch(const SyntheticDataset& data, int epoch);
    EpochStats run_epoch(int count, const SampleProvider& get, const CameraRig& rig,
                         int epoch);

  private:
    std::vector<double> rates(const Adam& opt, int epoch, int step) const;
    void set_trainable(int step);
    void clear_grads();

    TrainConfig cfg_;
    TioDepthNet& net_;
    FeatureExtractor feat_;
    Adam opt1_, opt2_, opt3_;
};

}  // namespace tio
