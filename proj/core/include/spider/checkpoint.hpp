#pragma once

#include <map>
#include <string>
#include <vector>

#include "spider/kv.hpp"
#include "spider/tensor.hpp"

namespace spider {

// SPCKPT 1: ASCII manifest (sorted parameter names with shape and float
// offset) followed by a little-endian f32 payload. Model/geometry settings
// travel in a sidecar `<path>.config` key-value file.
struct CheckpointData {
    struct Entry {
        Shape shape;
        std::vector<float> values;
    };
    std::map<std::string, Entry> params;
    KvMap config;
};

void save_checkpoint(const std::string& path, const CheckpointData& ckpt);
CheckpointData load_checkpoint(const std::string& path);

}  // namespace spider
