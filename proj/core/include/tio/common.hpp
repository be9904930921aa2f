#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace tio {

inline void check(bool ok, const std::string& msg) {
    if (!ok) throw std::runtime_error(msg);
}

// Deterministic 64-bit mix, used to derive independent sub-seeds.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    double normal(double mean = 0.0, double stddev = 1.0) {
        std::normal_distribution<double> d(mean, stddev);
        return d(engine_);
    }
    double uniform(double lo = 0.0, double hi = 1.0) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(engine_);
    }
    // Uniform integer in [lo, hi], inclusive.
    int64_t randint(int64_t lo, int64_t hi) {
        std::uniform_int_distribution<int64_t> d(lo, hi);
        return d(engine_);
    }
    bool coin() { return randint(0, 1) == 1; }

    Rng fork(uint64_t stream) {
        return Rng(splitmix64(engine_() ^ splitmix64(stream)));
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace tio
