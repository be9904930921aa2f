// Command-line front end: data generation, training, evaluation, inference.
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tio/common.hpp"
#include "tio/config.hpp"
#include "tio/evaluate.hpp"
#include "tio/io.hpp"
#include "tio/png_io.hpp"
#include "tio/training.hpp"

namespace fs = std::filesystem;
using namespace tio;

namespace {

std::string sample_name(const std::string& split, int index) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%04d", split.c_str(), index);
    return buf;
}

struct ManifestEntry {
    std::string id;
    uint64_t seed = 0;
};

std::vector<ManifestEntry> read_manifest(const std::string& dir) {
    std::string path = dir + "/manifest.txt";
    std::ifstream is(path);
    check(is.good(), "cannot open manifest: " + path);
    std::vector<ManifestEntry> entries;
    std::string id;
    uint64_t seed;
    while (is >> id >> seed) entries.push_back({id, seed});
    check(!entries.empty(), "manifest lists no samples: " + path);
    return entries;
}

std::string png_sibling(const std::string& out) {
    if (out.size() > 4 && out.substr(out.size() - 4) == ".bin") {
        return out.substr(0, out.size() - 4) + ".png";
    }
    return out + ".png";
}

void run_gen_data(int count, uint64_t seed, const std::string& out_dir,
                  const std::string& split, int64_t height, int64_t width, double d_min,
                  double d_max, double baseline, double focal_x) {
    fs::create_directories(out_dir);
    SyntheticDataset data(count, seed, split, height, width, CameraRig{baseline, focal_x},
                          d_min, d_max);
    std::ofstream manifest(out_dir + "/manifest.txt");
    check(manifest.good(), "cannot write manifest in " + out_dir);
    for (int i = 0; i < count; ++i) {
        std::string id = sample_name(split, i);
        StereoSample s = data.sample(i);
        write_sample_bundle(out_dir + "/" + id + ".bin", s);
        write_png_rgb8(out_dir + "/" + id + "_left.png", s.left);
        write_png_rgb8(out_dir + "/" + id + "_right.png", s.right);
        manifest << id << " " << data.sample_seed(i) << "\n";
    }
    check(manifest.good(), "manifest write failed in " + out_dir);
    std::cout << "wrote " << count << " samples to " << out_dir << "\n";
}

void append_log_rows(const std::string& path, int epoch, const EpochStats& st,
                     bool truncate) {
    bool fresh = truncate || !fs::exists(path);
    std::ofstream os(path, fresh ? std::ios::trunc : std::ios::app);
    check(os.good(), "cannot open training log: " + path);
    if (fresh) os << "epoch,step,loss,value\n";
    char buf[64];
    auto row = [&](int step, const char* name, double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        os << epoch << ',' << step << ',' << name << ',' << buf << "\n";
    };
    row(1, "mono_total", st.step1);
    if (st.step2 != 0.0) row(2, "stereo_total", st.step2);
    if (st.step3 != 0.0) row(3, "distillation", st.step3);
    check(os.good(), "training log write failed: " + path);
}

void run_train(const std::string& config_path, const std::string& resume) {
    TrainConfig cfg = load_train_config(config_path);
    if (cfg.out_dir.empty()) cfg.out_dir = ".";
    fs::create_directories(cfg.out_dir);
    uint64_t hash = config_hash(cfg);

    int start_epoch = 0;
    TioDepthNet net(cfg.net, cfg.seed);
    if (!resume.empty()) {
        LoadedCheckpoint ckpt = load_checkpoint(resume);
        check(ckpt.config_hash == hash,
              "resume: checkpoint was produced by a different configuration");
        check(ckpt.net.config().widths == cfg.net.widths &&
                  ckpt.net.config().levels == cfg.net.levels,
              "resume: network shape mismatch");
        net = std::move(ckpt.net);
        start_epoch = ckpt.epoch;
        check(start_epoch < cfg.schedule.total_epochs, "resume: run already finished");
        std::cout << "resuming after " << start_epoch << " completed epochs\n";
    }

    Trainer trainer(cfg, net);
    std::string log_path = cfg.out_dir + "/train_log.csv";
    std::string latest = cfg.out_dir + "/checkpoint_latest.bin";

    for (int epoch = start_epoch; epoch < cfg.schedule.total_epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        EpochStats st;
        if (cfg.data_dir.empty()) {
            SyntheticDataset data(cfg.train_count, cfg.seed, "train", cfg.height,
                                  cfg.width, cfg.rig, cfg.data_d_min, cfg.data_d_max);
            st = trainer.run_epoch(data, epoch);
        } else {
            auto entries = read_manifest(cfg.data_dir);
            std::string dir = cfg.data_dir;
            auto get = [&entries, &dir](int i) {
                return read_sample_bundle(dir + "/" + entries[static_cast<size_t>(i)].id +
                                          ".bin");
            };
            st = trainer.run_epoch(static_cast<int>(entries.size()), get, cfg.rig, epoch);
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                          .count();
        append_log_rows(log_path, epoch, st, epoch == 0);
        save_checkpoint(latest, net, cfg.rig, epoch + 1, hash);
        std::printf("epoch %d/%d  step1 %.5f  step2 %.5f  step3 %.5f  (%.1fs)\n", epoch + 1,
                    cfg.schedule.total_epochs, st.step1, st.step2, st.step3, secs);
        std::fflush(stdout);
    }
    save_checkpoint(cfg.out_dir + "/checkpoint_final.bin", net, cfg.rig,
                    cfg.schedule.total_epochs, hash);
    std::cout << "training finished; checkpoints in " << cfg.out_dir << "\n";
}

void run_eval(const std::string& ckpt_path, const std::string& data_dir,
              const std::string& mode, const std::string& csv_out,
              const std::string& branch_name, double cap, bool no_median_scale,
              bool d1_and) {
    LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
    Branch branch = branch_name == "aux" ? Branch::auxiliary : Branch::final_branch;
    EvalOptions opts;
    opts.depth_cap = cap;
    opts.median_scale = !no_median_scale;
    opts.d1_both = d1_and;

    auto entries = read_manifest(data_dir);
    std::vector<MetricsCsvRow> rows;
    std::vector<MetricReport> reports;
    for (const auto& e : entries) {
        StereoSample s = read_sample_bundle(data_dir + "/" + e.id + ".bin");
        MetricReport r = mode == "mono" ? eval_mono_sample(ckpt.net, s, branch, opts)
                                        : eval_stereo_sample(ckpt.net, s, opts);
        reports.push_back(r);
        rows.push_back({e.id, mode, r});
    }
    MetricReport mean = mean_report(reports);
    rows.push_back({"mean", mode, mean});
    write_metrics_csv(csv_out, rows);
    std::printf(
        "%s over %zu samples: abs_rel %.4f  rmse %.4f  a1 %.4f  epe %.4f  d1 %.4f\n",
        mode.c_str(), reports.size(), mean.abs_rel, mean.rmse, mean.a1, mean.epe,
        mean.d1);
}

Tensor load_image(const std::string& path) {
    Tensor t = read_tensor(path);
    if (t.ndim() == 3) {
        Shape s = {1, t.dim(0), t.dim(1), t.dim(2)};
        t = Tensor::from(s, t.vec());
    }
    check(t.ndim() == 4 && t.dim(0) == 1 && t.dim(1) == 3,
          "expected a 3-channel image tensor: " + path);
    return t;
}

void write_depth_outputs(const std::string& out, const Tensor& depth, double cap) {
    write_tensor(out, depth);
    write_png_gray16(png_sibling(out), depth, 0.0, cap);
    std::cout << "wrote " << out << " and " << png_sibling(out) << "\n";
}

void run_infer_mono(const std::string& ckpt_path, const std::string& image,
                    const std::string& out, const std::string& branch_name, double cap) {
    LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
    Branch branch = branch_name == "aux" ? Branch::auxiliary : Branch::final_branch;
    Tensor img = load_image(image);
    Tensor d = predict_mono_disparity(ckpt.net, img, branch);
    write_depth_outputs(out, disparity_to_depth(d, ckpt.rig), cap);
}

void run_infer_stereo(const std::string& ckpt_path, const std::string& left,
                      const std::string& right, const std::string& out, double cap) {
    LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
    Tensor l = load_image(left), r = load_image(right);
    Tensor d = predict_stereo_disparity(ckpt.net, l, r, View::left);
    write_depth_outputs(out, disparity_to_depth(d, ckpt.rig), cap);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-in-one self-supervised depth estimation"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "render synthetic stereo samples");
    int gen_count = 0;
    uint64_t gen_seed = 0;
    std::string gen_out, gen_split = "train";
    int64_t gen_h = 64, gen_w = 128;
    double gen_dmin = 2.0, gen_dmax = 14.0, gen_baseline = 0.54, gen_focal = 100.0;
    gen->add_option("--count", gen_count, "number of samples")->required();
    gen->add_option("--seed", gen_seed, "dataset seed");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--split", gen_split, "split name (train/val/...)");
    gen->add_option("--height", gen_h, "image height");
    gen->add_option("--width", gen_w, "image width");
    gen->add_option("--d-min", gen_dmin, "smallest scene disparity");
    gen->add_option("--d-max", gen_dmax, "largest scene disparity");
    gen->add_option("--baseline", gen_baseline, "rig baseline, meters");
    gen->add_option("--focal-x", gen_focal, "horizontal focal length, pixels");
    gen->callback([&] {
        run_gen_data(gen_count, gen_seed, gen_out, gen_split, gen_h, gen_w, gen_dmin,
                     gen_dmax, gen_baseline, gen_focal);
    });

    auto* train = app.add_subcommand("train", "run the three-step training schedule");
    std::string train_config, train_resume;
    train->add_option("--config", train_config, "key = value config file")->required();
    train->add_option("--resume", train_resume, "checkpoint to continue from");
    train->callback([&] { run_train(train_config, train_resume); });

    auto* ev = app.add_subcommand("eval", "metrics over a generated sample directory");
    std::string ev_ckpt, ev_data, ev_mode, ev_csv, ev_branch = "final";
    double ev_cap = 30.0;
    bool ev_no_median = false, ev_d1_and = false;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    ev->add_option("--data", ev_data, "sample directory from gen-data")->required();
    ev->add_option("--mode", ev_mode, "mono or stereo")
        ->required()
        ->check(CLI::IsMember({"mono", "stereo"}));
    ev->add_option("--csv-out", ev_csv, "per-sample metrics CSV")->required();
    ev->add_option("--branch", ev_branch, "mono branch: final or aux")
        ->check(CLI::IsMember({"final", "aux"}));
    ev->add_option("--cap", ev_cap, "depth clamp ceiling, meters");
    ev->add_flag("--no-median-scale", ev_no_median, "skip median scaling in mono mode");
    ev->add_flag("--d1-and", ev_d1_and, "d1 as conjunction of both thresholds");
    ev->callback([&] {
        run_eval(ev_ckpt, ev_data, ev_mode, ev_csv, ev_branch, ev_cap, ev_no_median,
                 ev_d1_and);
    });

    auto* im = app.add_subcommand("infer-mono", "depth from a single image");
    std::string im_ckpt, im_image, im_out, im_branch = "final";
    double im_cap = 30.0;
    im->add_option("--checkpoint", im_ckpt, "checkpoint file")->required();
    im->add_option("--image", im_image, "image tensor container")->required();
    im->add_option("--out", im_out, "depth container path")->required();
    im->add_option("--branch", im_branch, "final or aux")
        ->check(CLI::IsMember({"final", "aux"}));
    im->add_option("--cap", im_cap, "depth cap for the PNG mapping");
    im->callback([&] { run_infer_mono(im_ckpt, im_image, im_out, im_branch, im_cap); });

    auto* is = app.add_subcommand("infer-stereo", "depth from a rectified pair");
    std::string is_ckpt, is_left, is_right, is_out;
    double is_cap = 30.0;
    is->add_option("--checkpoint", is_ckpt, "checkpoint file")->required();
    is->add_option("--left", is_left, "left image tensor container")->required();
    is->add_option("--right", is_right, "right image tensor container")->required();
    is->add_option("--out", is_out, "depth container path")->required();
    is->add_option("--cap", is_cap, "depth cap for the PNG mapping");
    is->callback([&] { run_infer_stereo(is_ckpt, is_left, is_right, is_out, is_cap); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
