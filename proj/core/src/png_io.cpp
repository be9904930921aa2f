#include "tio/png_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "tio/common.hpp"

namespace tio {

namespace {

void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void append_chunk(std::vector<uint8_t>& out, const char type[4],
                  const std::vector<uint8_t>& payload) {
    put_u32_be(out, static_cast<uint32_t>(payload.size()));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    uint32_t crc = static_cast<uint32_t>(
        crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start)));
    put_u32_be(out, crc);
}

// scanlines: raw pixel rows without filter bytes; one filter-0 byte is
// prepended per row before zlib compression.
void write_png(const std::string& path, int64_t w, int64_t h, uint8_t bit_depth,
               uint8_t color_type, const std::vector<uint8_t>& rows, size_t row_bytes) {
    check(rows.size() == row_bytes * static_cast<size_t>(h), "png: bad row buffer");
    std::vector<uint8_t> raw;
    raw.reserve(rows.size() + static_cast<size_t>(h));
    for (int64_t y = 0; y < h; ++y) {
        raw.push_back(0);
        const uint8_t* r = rows.data() + static_cast<size_t>(y) * row_bytes;
        raw.insert(raw.end(), r, r + row_bytes);
    }
    uLongf comp_cap = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(comp_cap);
    int rc = compress2(comp.data(), &comp_cap, raw.data(), static_cast<uLong>(raw.size()),
                       Z_BEST_SPEED);
    check(rc == Z_OK, "png: compression failed");
    comp.resize(comp_cap);

    std::vector<uint8_t> file;
    const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    file.insert(file.end(), sig, sig + 8);
    std::vector<uint8_t> ihdr;
    put_u32_be(ihdr, static_cast<uint32_t>(w));
    put_u32_be(ihdr, static_cast<uint32_t>(h));
    ihdr.push_back(bit_depth);
    ihdr.push_back(color_type);
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter
    ihdr.push_back(0);  // interlace
    append_chunk(file, "IHDR", ihdr);
    append_chunk(file, "IDAT", comp);
    append_chunk(file, "IEND", {});

    std::ofstream os(path, std::ios::binary);
    check(os.good(), "cannot open for writing: " + path);
    os.write(reinterpret_cast<const char*>(file.data()),
             static_cast<std::streamsize>(file.size()));
    check(os.good(), "write failed: " + path);
}

}  // namespace

void write_png_rgb8(const std::string& path, const Tensor& img) {
    check(img.defined() && img.ndim() == 4 && img.dim(0) == 1 && img.dim(1) == 3,
          "write_png_rgb8: expected 1x3xHxW image");
    int64_t h = img.dim(2), w = img.dim(3);
    size_t row_bytes = static_cast<size_t>(w) * 3;
    std::vector<uint8_t> rows(row_bytes * static_cast<size_t>(h));
    const double* d = img.data();
    int64_t plane = h * w;
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            for (int64_t c = 0; c < 3; ++c) {
                double v = std::clamp(d[c * plane + y * w + x], 0.0, 1.0);
                rows[static_cast<size_t>(y) * row_bytes + static_cast<size_t>(x) * 3 +
                     static_cast<size_t>(c)] =
                    static_cast<uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    write_png(path, w, h, 8, 2, rows, row_bytes);
}

void write_png_gray16(const std::string& path, const Tensor& map, double lo, double hi) {
    check(map.defined() && map.ndim() == 4 && map.dim(0) == 1 && map.dim(1) == 1,
          "write_png_gray16: expected 1x1xHxW map");
    check(hi > lo, "write_png_gray16: empty value range");
    int64_t h = map.dim(2), w = map.dim(3);
    size_t row_bytes = static_cast<size_t>(w) * 2;
    std::vector<uint8_t> rows(row_bytes * static_cast<size_t>(h));
    const double* d = map.data();
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            double t = (d[y * w + x] - lo) / (hi - lo);
            uint16_t code =
                static_cast<uint16_t>(std::lround(std::clamp(t, 0.0, 1.0) * 65535.0));
            // PNG stores 16-bit samples big-endian.
            rows[static_cast<size_t>(y) * row_bytes + static_cast<size_t>(x) * 2] =
                static_cast<uint8_t>(code >> 8);
            rows[static_cast<size_t>(y) * row_bytes + static_cast<size_t>(x) * 2 + 1] =
                static_cast<uint8_t>(code & 0xff);
        }
    }
    write_png(path, w, h, 16, 0, rows, row_bytes);
}

}  // namespace tio
