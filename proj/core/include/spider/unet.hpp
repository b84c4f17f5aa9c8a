#pragma once

#include <array>
#include <string>
#include <vector>

#include "spider/nn.hpp"

namespace spider {

// Small all-convolutional UNet: two 3x3 conv+relu blocks per level,
// average-pool downsampling, nearest-neighbor upsampling + conv, skip
// concatenation, and a final 1x1 head with no activation. Output keeps the
// input spatial size.
struct UNetConfig {
    int depth = 3;
    std::vector<int> channels = {16, 32, 64};  // per level
    int out_channels = 32;                     // feature channels C
    int in_channels = 1;

    void validate() const {
        if (depth < 1 || int(channels.size()) != depth)
            throw ConfigError("unet: channels list must have `depth` entries");
        if (out_channels < 1 || in_channels < 1) throw ConfigError("unet: bad channel counts");
    }
    int divisibility() const { return 1 << (depth - 1); }
};

template <typename T>
struct UNet {
    UNetConfig cfg;
    std::vector<std::array<Conv2dLayer<T>, 2>> enc;
    std::vector<Conv2dLayer<T>> up;
    std::vector<std::array<Conv2dLayer<T>, 2>> dec;
    Conv2dLayer<T> head;

    UNet() = default;
    UNet(ParamStore<T>& store, const UNetConfig& config, Rng& rng,
         const std::string& prefix = "encoder")
        : cfg(config) {
        cfg.validate();
        int in_ch = cfg.in_channels;
        for (int i = 0; i < cfg.depth; ++i) {
            const std::string base = prefix + ".enc" + std::to_string(i);
            enc.push_back({Conv2dLayer<T>(store, base + ".c0", in_ch, cfg.channels[i], 3, rng),
                           Conv2dLayer<T>(store, base + ".c1", cfg.channels[i], cfg.channels[i],
                                          3, rng)});
            in_ch = cfg.channels[i];
        }
        for (int i = cfg.depth - 2; i >= 0; --i) {
            up.push_back(Conv2dLayer<T>(store, prefix + ".up" + std::to_string(i),
                                        cfg.channels[i + 1], cfg.channels[i], 3, rng));
            const std::string base = prefix + ".dec" + std::to_string(i);
            dec.push_back(
                {Conv2dLayer<T>(store, base + ".c0", 2 * cfg.channels[i], cfg.channels[i], 3, rng),
                 Conv2dLayer<T>(store, base + ".c1", cfg.channels[i], cfg.channels[i], 3, rng)});
        }
        head = Conv2dLayer<T>(store, prefix + ".head", cfg.channels[0], cfg.out_channels, 1, rng);
    }

    // image:[1,H,W] normalized radiograph -> features [C,H,W].
    Var<T> encode(Tape<T>& tape, Var<T> image) const {
        const Shape& s = image.shape();
        if (s.size() != 3 || s[0] != cfg.in_channels)
            throw ShapeError("unet: expected [" + std::to_string(cfg.in_channels) +
                             ",H,W] input, got " + shape_str(s));
        if (s[1] % cfg.divisibility() || s[2] % cfg.divisibility())
            throw ShapeError("unet: H and W must be divisible by " +
                             std::to_string(cfg.divisibility()));
        std::vector<Var<T>> skips;
        Var<T> h = image;
        for (int i = 0; i < cfg.depth; ++i) {
            h = relu(enc[size_t(i)][0](tape, h));
            h = relu(enc[size_t(i)][1](tape, h));
            if (i < cfg.depth - 1) {
                skips.push_back(h);
                h = avg_pool2(h);
            }
        }
        for (int d = 0; d < cfg.depth - 1; ++d) {
            const int level = cfg.depth - 2 - d;
            h = upsample_nearest2(h);
            h = relu(up[size_t(d)](tape, h));
            h = concat_channels(skips[size_t(level)], h);
            h = relu(dec[size_t(d)][0](tape, h));
            h = relu(dec[size_t(d)][1](tape, h));
        }
        return head(tape, h);
    }
};

}  // namespace spider
