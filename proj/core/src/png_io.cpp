#include "spider/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <limits>

#include "spider/errors.hpp"

namespace spider {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

void write_chunk(std::ofstream& f, const char type[4], const std::vector<uint8_t>& data) {
    std::vector<uint8_t> head;
    put_u32(head, uint32_t(data.size()));
    f.write(reinterpret_cast<const char*>(head.data()), 4);
    uint8_t typed[4];
    std::memcpy(typed, type, 4);
    f.write(reinterpret_cast<const char*>(typed), 4);
    if (!data.empty()) f.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
    uLong crc = crc32(0L, typed, 4);
    if (!data.empty()) crc = crc32(crc, data.data(), uInt(data.size()));
    std::vector<uint8_t> tail;
    put_u32(tail, uint32_t(crc));
    f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace

void save_png_gray8(const std::string& path, int width, int height,
                    const std::vector<uint8_t>& pixels) {
    if (width < 1 || height < 1 || pixels.size() != size_t(width) * height)
        throw ValidationError("save_png_gray8: pixel buffer does not match dimensions");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);

    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    f.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<uint8_t> ihdr;
    put_u32(ihdr, uint32_t(width));
    put_u32(ihdr, uint32_t(height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);  // deflate
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // no interlace
    write_chunk(f, "IHDR", ihdr);

    std::vector<uint8_t> raw;
    raw.reserve(size_t(height) * (size_t(width) + 1));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);  // filter type none
        raw.insert(raw.end(), pixels.begin() + size_t(y) * width,
                   pixels.begin() + size_t(y + 1) * width);
    }
    uLongf bound = compressBound(uLong(raw.size()));
    std::vector<uint8_t> idat(bound);
    if (compress2(idat.data(), &bound, raw.data(), uLong(raw.size()), 9) != Z_OK)
        throw IoError("png deflate failed");
    idat.resize(bound);
    write_chunk(f, "IDAT", idat);
    write_chunk(f, "IEND", {});
    if (!f) throw IoError("short write to " + path);
}

namespace {
template <typename T>
std::vector<uint8_t> minmax_impl(const std::vector<T>& values) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (T v : values) {
        lo = std::min(lo, double(v));
        hi = std::max(hi, double(v));
    }
    std::vector<uint8_t> out(values.size(), 0);
    if (hi > lo)
        for (size_t i = 0; i < values.size(); ++i)
            out[i] = uint8_t(0.5 + 255.0 * (double(values[i]) - lo) / (hi - lo));
    return out;
}
}  // namespace

std::vector<uint8_t> gray8_minmax(const std::vector<double>& values) { return minmax_impl(values); }
std::vector<uint8_t> gray8_minmax(const std::vector<float>& values) { return minmax_impl(values); }

}  // namespace spider
