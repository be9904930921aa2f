#include "tio/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "tio/common.hpp"

namespace tio {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double parse_num(const std::string& key, const std::string& v) {
    size_t pos = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    check(pos == v.size() && !v.empty(), "config: bad numeric value for " + key);
    return out;
}

int64_t parse_int(const std::string& key, const std::string& v) {
    double d = parse_num(key, v);
    int64_t i = static_cast<int64_t>(d);
    check(static_cast<double>(i) == d, "config: expected integer for " + key);
    return i;
}

bool parse_bool(const std::string& key, const std::string& v) {
    int64_t i = parse_int(key, v);
    check(i == 0 || i == 1, "config: expected 0 or 1 for " + key);
    return i == 1;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        check(!part.empty(), "config: empty list entry for " + key);
        out.push_back(static_cast<int>(parse_int(key, part)));
    }
    check(!out.empty(), "config: empty list for " + key);
    return out;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
    TrainConfig cfg;
    using Handler = std::function<void(const std::string&, const std::string&)>;
    std::map<std::string, Handler> handlers;
    auto num = [&](const char* key, double* slot) {
        handlers[key] = [slot](const std::string& k, const std::string& v) {
            *slot = parse_num(k, v);
        };
    };
    auto int_slot = [&](const char* key, auto* slot) {
        handlers[key] = [slot](const std::string& k, const std::string& v) {
            *slot = static_cast<std::remove_reference_t<decltype(*slot)>>(parse_int(k, v));
        };
    };
    auto bool_slot = [&](const char* key, bool* slot) {
        handlers[key] = [slot](const std::string& k, const std::string& v) {
            *slot = parse_bool(k, v);
        };
    };
    auto str_slot = [&](const char* key, std::string* slot) {
        handlers[key] = [slot](const std::string&, const std::string& v) { *slot = v; };
    };

    int_slot("epochs", &cfg.schedule.total_epochs);
    int_slot("e1", &cfg.schedule.e1);
    int_slot("e2", &cfg.schedule.e2);
    num("lr", &cfg.schedule.lr_base);
    handlers["lr_halving"] = [&cfg](const std::string& k, const std::string& v) {
        cfg.schedule.lr_halving_epochs = parse_int_list(k, v);
    };
    num("revisit_factor", &cfg.schedule.revisit_factor);

    int_slot("batch", &cfg.batch);
    int_slot("height", &cfg.height);
    int_slot("width", &cfg.width);
    int_slot("seed", &cfg.seed);
    int_slot("train_count", &cfg.train_count);
    int_slot("val_count", &cfg.val_count);
    num("d_min", &cfg.data_d_min);
    num("d_max", &cfg.data_d_max);
    num("baseline", &cfg.rig.baseline);
    num("focal_x", &cfg.rig.focal_x);
    str_slot("data_dir", &cfg.data_dir);
    str_slot("out_dir", &cfg.out_dir);

    int_slot("levels", &cfg.net.levels);
    num("b_min", &cfg.net.b_min);
    num("b_max", &cfg.net.b_max);
    int_slot("in_channels", &cfg.net.in_channels);
    handlers["widths"] = [&cfg](const std::string& k, const std::string& v) {
        auto w = parse_int_list(k, v);
        check(w.size() == 4, "config: widths needs 4 entries");
        for (size_t i = 0; i < 4; ++i) cfg.net.widths[i] = w[i];
    };

    num("lambda1", &cfg.weights.lambda1);
    num("lambda2", &cfg.weights.lambda2);
    num("lambda3", &cfg.weights.lambda3);
    num("lambda4", &cfg.weights.lambda4);
    num("alpha", &cfg.weights.alpha);
    num("beta", &cfg.weights.beta);
    num("gamma", &cfg.weights.gamma);
    num("t1", &cfg.weights.t1);
    num("t2", &cfg.weights.t2);

    bool_slot("augment", &cfg.aug.enabled);
    num("scale_min", &cfg.aug.scale_min);
    num("scale_max", &cfg.aug.scale_max);
    int_slot("crop_h", &cfg.aug.crop_h);
    int_slot("crop_w", &cfg.aug.crop_w);
    bool_slot("flip", &cfg.aug.flip);
    bool_slot("jitter", &cfg.aug.jitter);
    num("jitter_strength", &cfg.aug.jitter_strength);

    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        check(eq != std::string::npos,
              "config: line " + std::to_string(lineno) + " has no '='");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        auto it = handlers.find(key);
        check(it != handlers.end(), "config: unknown key '" + key + "'");
        it->second(key, value);
    }
    cfg.schedule.validate();
    cfg.net.validate();
    cfg.weights.validate();
    return cfg;
}

std::string serialize_train_config(const TrainConfig& cfg) {
    std::stringstream os;
    os << "epochs = " << cfg.schedule.total_epochs << "\n";
    os << "e1 = " << cfg.schedule.e1 << "\n";
    os << "e2 = " << cfg.schedule.e2 << "\n";
    os << "lr = " << fmt(cfg.schedule.lr_base) << "\n";
    os << "lr_halving = ";
    for (size_t i = 0; i < cfg.schedule.lr_halving_epochs.size(); ++i) {
        os << (i ? "," : "") << cfg.schedule.lr_halving_epochs[i];
    }
    os << "\n";
    os << "revisit_factor = " << fmt(cfg.schedule.revisit_factor) << "\n";
    os << "batch = " << cfg.batch << "\n";
    os << "height = " << cfg.height << "\n";
    os << "width = " << cfg.width << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "train_count = " << cfg.train_count << "\n";
    os << "val_count = " << cfg.val_count << "\n";
    os << "d_min = " << fmt(cfg.data_d_min) << "\n";
    os << "d_max = " << fmt(cfg.data_d_max) << "\n";
    os << "baseline = " << fmt(cfg.rig.baseline) << "\n";
    os << "focal_x = " << fmt(cfg.rig.focal_x) << "\n";
    if (!cfg.data_dir.empty()) os << "data_dir = " << cfg.data_dir << "\n";
    if (!cfg.out_dir.empty()) os << "out_dir = " << cfg.out_dir << "\n";
    os << "levels = " << cfg.net.levels << "\n";
    os << "b_min = " << fmt(cfg.net.b_min) << "\n";
    os << "b_max = " << fmt(cfg.net.b_max) << "\n";
    os << "in_channels = " << cfg.net.in_channels << "\n";
    os << "widths = " << cfg.net.widths[0] << "," << cfg.net.widths[1] << ","
       << cfg.net.widths[2] << "," << cfg.net.widths[3] << "\n";
    os << "lambda1 = " << fmt(cfg.weights.lambda1) << "\n";
    os << "lambda2 = " << fmt(cfg.weights.lambda2) << "\n";
    os << "lambda3 = " << fmt(cfg.weights.lambda3) << "\n";
    os << "lambda4 = " << fmt(cfg.weights.lambda4) << "\n";
    os << "alpha = " << fmt(cfg.weights.alpha) << "\n";
    os << "beta = " << fmt(cfg.weights.beta) << "\n";
    os << "gamma = " << fmt(cfg.weights.gamma) << "\n";
    os << "t1 = " << fmt(cfg.weights.t1) << "\n";
    os << "t2 = " << fmt(cfg.weights.t2) << "\n";
    os << "augment = " << (cfg.aug.enabled ? 1 : 0) << "\n";
    os << "scale_min = " << fmt(cfg.aug.scale_min) << "\n";
    os << "scale_max = " << fmt(cfg.aug.scale_max) << "\n";
    os << "crop_h = " << cfg.aug.crop_h << "\n";
    os << "crop_w = " << cfg.aug.crop_w << "\n";
    os << "flip = " << (cfg.aug.flip ? 1 : 0) << "\n";
    os << "jitter = " << (cfg.aug.jitter ? 1 : 0) << "\n";
    os << "jitter_strength = " << fmt(cfg.aug.jitter_strength) << "\n";
    return os.str();
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream is(path);
    check(is.good(), "cannot open config: " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    TrainConfig cfg = parse_train_config(buf.str());
    if (const char* env = std::getenv("TIO_SEED")) {
        cfg.seed = static_cast<uint64_t>(parse_int("TIO_SEED", env));
    }
    return cfg;
}

uint64_t config_hash(const TrainConfig& cfg) {
    uint64_t h = 1469598103934665603ULL;
    for (char c : serialize_train_config(cfg)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace tio
