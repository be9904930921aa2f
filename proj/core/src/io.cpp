#include "tio/io.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "tio/common.hpp"
#include "tio/metrics.hpp"

namespace tio {

namespace {

constexpr char kTensorMagic[4] = {'T', 'I', 'O', 'T'};
constexpr char kBundleMagic[4] = {'T', 'I', 'O', 'B'};
constexpr uint8_t kVersion = 1;
constexpr uint8_t kDtypeF32 = 0;
constexpr uint8_t kDtypeF64 = 1;

void write_u8(std::ostream& os, uint8_t v) {
    os.put(static_cast<char>(v));
}

void write_u16(std::ostream& os, uint16_t v) {
    for (int i = 0; i < 2; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void write_u64(std::ostream& os, uint64_t v) {
    for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void write_f64(std::ostream& os, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    write_u64(os, bits);
}

uint8_t read_u8(std::istream& is, const char* what) {
    int c = is.get();
    check(c != EOF, std::string("container: truncated while reading ") + what);
    return static_cast<uint8_t>(c);
}

uint16_t read_u16(std::istream& is, const char* what) {
    uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<uint16_t>(read_u8(is, what)) << (8 * i);
    return v;
}

uint64_t read_u64(std::istream& is, const char* what) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(read_u8(is, what)) << (8 * i);
    return v;
}

double read_f64(std::istream& is, const char* what) {
    uint64_t bits = read_u64(is, what);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

float read_f32(std::istream& is, const char* what) {
    uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<uint32_t>(read_u8(is, what)) << (8 * i);
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

void write_tensor_stream(std::ostream& os, const Tensor& t) {
    check(t.defined(), "write_tensor: undefined tensor");
    check(t.ndim() >= 1 && t.ndim() <= 8, "write_tensor: ndim out of range");
    os.write(kTensorMagic, 4);
    write_u8(os, kVersion);
    write_u8(os, kDtypeF64);
    write_u8(os, static_cast<uint8_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) {
        check(t.dim(i) > 0, "write_tensor: nonpositive dimension");
        write_u64(os, static_cast<uint64_t>(t.dim(i)));
    }
    for (double v : t.vec()) write_f64(os, v);
}

Tensor read_tensor_stream(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    check(is.gcount() == 4 && std::memcmp(magic, kTensorMagic, 4) == 0,
          "container: bad tensor magic");
    uint8_t version = read_u8(is, "version");
    check(version == kVersion, "container: unsupported version");
    uint8_t dtype = read_u8(is, "dtype");
    check(dtype == kDtypeF32 || dtype == kDtypeF64, "container: unknown dtype");
    uint8_t ndim = read_u8(is, "ndim");
    check(ndim >= 1 && ndim <= 8, "container: ndim out of range");
    Shape shape(ndim);
    int64_t numel = 1;
    for (int i = 0; i < ndim; ++i) {
        uint64_t d = read_u64(is, "dims");
        check(d > 0 && d <= (1ULL << 32), "container: dimension out of range");
        shape[static_cast<size_t>(i)] = static_cast<int64_t>(d);
        numel *= static_cast<int64_t>(d);
        check(numel <= (1LL << 34), "container: tensor too large");
    }
    std::vector<double> values(static_cast<size_t>(numel));
    for (auto& v : values) {
        v = dtype == kDtypeF64 ? read_f64(is, "payload")
                               : static_cast<double>(read_f32(is, "payload"));
    }
    return Tensor::from(shape, std::move(values));
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    check(os.good(), "cannot open for writing: " + path);
    return os;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    check(is.good(), "cannot open for reading: " + path);
    return is;
}

}  // namespace

void write_tensor(const std::string& path, const Tensor& t) {
    auto os = open_out(path);
    write_tensor_stream(os, t);
    check(os.good(), "write failed: " + path);
}

Tensor read_tensor(const std::string& path) {
    auto is = open_in(path);
    Tensor t = read_tensor_stream(is);
    check(is.get() == EOF, "container: trailing bytes in " + path);
    return t;
}

void write_bundle(const std::string& path,
                  const std::vector<std::pair<std::string, Tensor>>& items) {
    auto os = open_out(path);
    os.write(kBundleMagic, 4);
    write_u8(os, kVersion);
    write_u64(os, items.size());
    for (const auto& [name, t] : items) {
        check(!name.empty() && name.size() <= 0xffff, "bundle: bad record name");
        write_u16(os, static_cast<uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_tensor_stream(os, t);
    }
    check(os.good(), "write failed: " + path);
}

std::vector<std::pair<std::string, Tensor>> read_bundle(const std::string& path) {
    auto is = open_in(path);
    char magic[4];
    is.read(magic, 4);
    check(is.gcount() == 4 && std::memcmp(magic, kBundleMagic, 4) == 0,
          "bundle: bad magic in " + path);
    check(read_u8(is, "version") == kVersion, "bundle: unsupported version");
    uint64_t count = read_u64(is, "count");
    check(count <= 100000, "bundle: implausible record count");
    std::vector<std::pair<std::string, Tensor>> items;
    items.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        uint16_t len = read_u16(is, "name length");
        check(len > 0, "bundle: empty record name");
        std::string name(len, '\0');
        is.read(name.data(), len);
        check(is.gcount() == len, "bundle: truncated record name");
        items.emplace_back(std::move(name), read_tensor_stream(is));
    }
    check(is.get() == EOF, "bundle: trailing bytes in " + path);
    return items;
}

namespace {

Tensor text_record(const std::string& text) {
    std::vector<double> bytes(text.size());
    for (size_t i = 0; i < text.size(); ++i) {
        bytes[i] = static_cast<double>(static_cast<unsigned char>(text[i]));
    }
    return Tensor::from({static_cast<int64_t>(text.size())}, std::move(bytes));
}

std::string record_text(const Tensor& t) {
    std::string out(static_cast<size_t>(t.numel()), '\0');
    for (int64_t i = 0; i < t.numel(); ++i) {
        double v = t.vec()[static_cast<size_t>(i)];
        check(v >= 0.0 && v <= 255.0 && v == std::floor(v), "checkpoint: bad text record");
        out[static_cast<size_t>(i)] = static_cast<char>(static_cast<unsigned char>(v));
    }
    return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const TioDepthNet& net, const CameraRig& rig,
                     int epoch, uint64_t config_hash) {
    std::vector<std::pair<std::string, Tensor>> items;
    const NetConfig& cfg = net.config();
    items.emplace_back("net_config",
                       Tensor::from({6}, {static_cast<double>(cfg.widths[0]),
                                          static_cast<double>(cfg.widths[1]),
                                          static_cast<double>(cfg.widths[2]),
                                          static_cast<double>(cfg.widths[3]),
                                          static_cast<double>(cfg.in_channels),
                                          static_cast<double>(cfg.levels)}));
    items.emplace_back("levels",
                       Tensor::from({net.levels().count()}, net.levels().values));
    items.emplace_back("rig", Tensor::from({2}, {rig.baseline, rig.focal_x}));
    items.emplace_back("meta", text_record("epoch=" + std::to_string(epoch) +
                                           "\nconfig_hash=" + std::to_string(config_hash) +
                                           "\n"));
    for (const auto& p : net.parameters()) items.emplace_back(p.name, p.tensor);
    write_bundle(path, items);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    auto items = read_bundle(path);
    std::map<std::string, Tensor> by_name;
    for (auto& [name, t] : items) {
        check(by_name.emplace(name, t).second, "checkpoint: duplicate record " + name);
    }
    auto take = [&](const std::string& name) {
        auto it = by_name.find(name);
        check(it != by_name.end(), "checkpoint: missing record " + name);
        Tensor t = it->second;
        by_name.erase(it);
        return t;
    };

    Tensor nc = take("net_config");
    check(nc.ndim() == 1 && nc.numel() == 6, "checkpoint: bad net_config record");
    NetConfig cfg;
    for (int i = 0; i < 4; ++i) cfg.widths[static_cast<size_t>(i)] = std::llround(nc.vec()[i]);
    cfg.in_channels = std::llround(nc.vec()[4]);
    cfg.levels = static_cast<int>(std::llround(nc.vec()[5]));

    Tensor lv = take("levels");
    check(lv.ndim() == 1 && lv.numel() == cfg.levels, "checkpoint: bad levels record");
    DisparityLevels levels{lv.vec()};
    cfg.b_min = levels.b_min();
    cfg.b_max = levels.b_max();

    Tensor rig_t = take("rig");
    check(rig_t.ndim() == 1 && rig_t.numel() == 2, "checkpoint: bad rig record");
    CameraRig rig{rig_t.vec()[0], rig_t.vec()[1]};
    validate_rig(rig);

    std::string meta = record_text(take("meta"));
    int epoch = 0;
    uint64_t hash = 0;
    {
        std::stringstream ms(meta);
        std::string line;
        while (std::getline(ms, line)) {
            if (line.rfind("epoch=", 0) == 0) {
                epoch = std::stoi(line.substr(6));
            } else if (line.rfind("config_hash=", 0) == 0) {
                hash = std::stoull(line.substr(12));
            }
        }
    }

    LoadedCheckpoint out{TioDepthNet(cfg, levels, 0), rig, epoch, hash};
    for (auto& p : out.net.parameters()) {
        Tensor stored = take(p.name);
        check(stored.shape() == p.tensor.shape(),
              "checkpoint: shape mismatch for " + p.name);
        p.tensor.vec() = stored.vec();
    }
    if (!by_name.empty()) {
        throw std::runtime_error("checkpoint: unrecognized record " +
                                 by_name.begin()->first);
    }
    return out;
}

void write_sample_bundle(const std::string& path, const StereoSample& s) {
    write_bundle(path, {{"left", s.left},
                        {"right", s.right},
                        {"disparity_left", s.disparity_left},
                        {"disparity_right", s.disparity_right},
                        {"validity_left", s.validity_left},
                        {"validity_right", s.validity_right},
                        {"rig", Tensor::from({2}, {s.rig.baseline, s.rig.focal_x})}});
}

StereoSample read_sample_bundle(const std::string& path) {
    auto items = read_bundle(path);
    check(items.size() == 7, "sample bundle: wrong record count in " + path);
    StereoSample s;
    auto expect = [&](size_t i, const char* name) {
        check(items[i].first == name,
              "sample bundle: unexpected record order in " + path);
        return items[i].second;
    };
    s.left = expect(0, "left");
    s.right = expect(1, "right");
    s.disparity_left = expect(2, "disparity_left");
    s.disparity_right = expect(3, "disparity_right");
    s.validity_left = expect(4, "validity_left");
    s.validity_right = expect(5, "validity_right");
    Tensor rig_t = expect(6, "rig");
    check(rig_t.numel() == 2, "sample bundle: bad rig record in " + path);
    s.rig = CameraRig{rig_t.vec()[0], rig_t.vec()[1]};
    validate_rig(s.rig);
    check(s.left.ndim() == 4 && s.left.dim(0) == 1 && s.left.dim(1) == 3 &&
              s.right.shape() == s.left.shape() &&
              s.disparity_left.ndim() == 4 && s.disparity_left.dim(1) == 1 &&
              s.disparity_left.dim(2) == s.left.dim(2) &&
              s.disparity_left.dim(3) == s.left.dim(3) &&
              s.disparity_right.shape() == s.disparity_left.shape() &&
              s.validity_left.shape() == s.disparity_left.shape() &&
              s.validity_right.shape() == s.disparity_left.shape(),
          "sample bundle: inconsistent shapes in " + path);
    return s;
}

namespace {

constexpr const char* kCsvHeader =
    "sample_id,mode,abs_rel,sq_rel,rmse,log_rmse,a1,a2,a3,epe,d1,n_pixels";

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<MetricsCsvRow>& rows) {
    auto os = open_out(path);
    os << kCsvHeader << "\n";
    for (const auto& r : rows) {
        check(r.sample_id.find(',') == std::string::npos &&
                  r.mode.find(',') == std::string::npos,
              "metrics csv: comma in identifier");
        const MetricReport& m = r.report;
        os << r.sample_id << ',' << r.mode << ',' << fmt_double(m.abs_rel) << ','
           << fmt_double(m.sq_rel) << ',' << fmt_double(m.rmse) << ','
           << fmt_double(m.log_rmse) << ',' << fmt_double(m.a1) << ','
           << fmt_double(m.a2) << ',' << fmt_double(m.a3) << ',' << fmt_double(m.epe)
           << ',' << fmt_double(m.d1) << ',' << m.n_pixels << "\n";
    }
    check(os.good(), "write failed: " + path);
}

std::vector<MetricsCsvRow> read_metrics_csv(const std::string& path) {
    auto is = open_in(path);
    std::string line;
    check(static_cast<bool>(std::getline(is, line)), "metrics csv: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    check(line == kCsvHeader, "metrics csv: unexpected header in " + path);
    std::vector<MetricsCsvRow> rows;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        check(f.size() == 12, "metrics csv: wrong field count in " + path);
        MetricsCsvRow r;
        r.sample_id = f[0];
        r.mode = f[1];
        size_t pos = 0;
        auto num = [&](const std::string& s) {
            double v = std::stod(s, &pos);
            check(pos == s.size(), "metrics csv: bad number '" + s + "'");
            return v;
        };
        r.report.abs_rel = num(f[2]);
        r.report.sq_rel = num(f[3]);
        r.report.rmse = num(f[4]);
        r.report.log_rmse = num(f[5]);
        r.report.a1 = num(f[6]);
        r.report.a2 = num(f[7]);
        r.report.a3 = num(f[8]);
        r.report.epe = num(f[9]);
        r.report.d1 = num(f[10]);
        r.report.n_pixels = static_cast<int64_t>(num(f[11]));
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace tio
