#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace spider {

// 8-bit grayscale PNG (zlib-deflated, filter 0 scanlines).
void save_png_gray8(const std::string& path, int width, int height,
                    const std::vector<uint8_t>& pixels);

// Min-max scale to [0,255]; constant images map to 0.
std::vector<uint8_t> gray8_minmax(const std::vector<double>& values);
std::vector<uint8_t> gray8_minmax(const std::vector<float>& values);

}  // namespace spider
