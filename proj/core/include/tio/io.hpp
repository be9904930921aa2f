#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tio/data.hpp"
#include "tio/levels.hpp"
#include "tio/metrics.hpp"
#include "tio/network.hpp"
#include "tio/tensor.hpp"

namespace tio {

// Single-tensor binary container: magic "TIOT", u8 version = 1,
// u8 dtype (0 = f32, 1 = f64), u8 ndim, u64 dims[ndim], little-endian payload.
// Tensors are written as f64; both dtypes are readable.
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

// Ordered named-tensor bundle: magic "TIOB", u8 version = 1, u64 count, then
// per record a u16 name length, the name bytes, and an inline "TIOT" record.
void write_bundle(const std::string& path,
                  const std::vector<std::pair<std::string, Tensor>>& items);
std::vector<std::pair<std::string, Tensor>> read_bundle(const std::string& path);

// A checkpoint bundles every network parameter under its registry name plus
// "levels" (the hypothesis set), "rig" ([baseline, focal_x]),
// "net_config" ([widths x4, in_channels, levels]), and "meta", a text record
// of "epoch=N\nconfig_hash=H\n" stored as one byte per element.
void save_checkpoint(const std::string& path, const TioDepthNet& net, const CameraRig& rig,
                     int epoch, uint64_t config_hash = 0);

struct LoadedCheckpoint {
    TioDepthNet net;
    CameraRig rig;
    int epoch = 0;
    uint64_t config_hash = 0;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

// One stereo sample as a bundle of records: left, right, disparity_left,
// disparity_right, validity_left, validity_right, rig.
void write_sample_bundle(const std::string& path, const StereoSample& s);
StereoSample read_sample_bundle(const std::string& path);

// CSV schema: sample_id, mode, abs_rel, sq_rel, rmse, log_rmse, a1, a2, a3,
// epe, d1, n_pixels. A header line is written; values use round-trip
// precision so parsing them back is exact.
struct MetricsCsvRow {
    std::string sample_id;
    std::string mode;
    MetricReport report;
};
void write_metrics_csv(const std::string& path, const std::vector<MetricsCsvRow>& rows);
std::vector<MetricsCsvRow> read_metrics_csv(const std::string& path);

}  // namespace tio
