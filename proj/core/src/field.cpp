#include "spider/field.hpp"

namespace spider {

DecoderTopology parse_topology(const std::string& s) {
    if (s == "shared") return DecoderTopology::shared;
    if (s == "two_branch") return DecoderTopology::two_branch;
    if (s == "two_stage") return DecoderTopology::two_stage;
    throw ConfigError("unknown decoder topology '" + s + "'");
}

std::string topology_name(DecoderTopology t) {
    switch (t) {
        case DecoderTopology::shared: return "shared";
        case DecoderTopology::two_branch: return "two_branch";
        case DecoderTopology::two_stage: return "two_stage";
    }
    return "?";
}

KvMap ModelConfig::to_kv() const {
    KvMap kv;
    kv.set("encoder.depth", std::to_string(encoder.depth));
    std::string ch;
    for (size_t i = 0; i < encoder.channels.size(); ++i) {
        if (i) ch += ' ';
        ch += std::to_string(encoder.channels[i]);
    }
    kv.set("encoder.channels", ch);
    kv.set("encoder.out_channels", std::to_string(encoder.out_channels));
    kv.set("hash.levels", std::to_string(hash.levels));
    kv.set("hash.features", std::to_string(hash.features));
    kv.set("hash.base_resolution", std::to_string(hash.base_resolution));
    kv.set("hash.max_resolution", std::to_string(hash.max_resolution));
    kv.set("hash.table_size", std::to_string(hash.table_size));
    kv.set("hash.primes", std::to_string(hash.primes[0]) + " " + std::to_string(hash.primes[1]) +
                              " " + std::to_string(hash.primes[2]));
    kv.set("decoder.topology", topology_name(decoder.topology));
    kv.set("decoder.hidden_layers", std::to_string(decoder.hidden_layers));
    kv.set("decoder.width", std::to_string(decoder.width));
    kv.set("decoder.num_classes", std::to_string(decoder.num_classes));
    kv.set("volume.dims", std::to_string(vol_dims.nx) + " " + std::to_string(vol_dims.ny) + " " +
                              std::to_string(vol_dims.nz));
    kv.set("volume.spacing", format_double(vol_spacing.sx) + " " + format_double(vol_spacing.sy) +
                                 " " + format_double(vol_spacing.sz));
    kv.set("drr.nu", std::to_string(drr_nu));
    kv.set("drr.nv", std::to_string(drr_nv));
    return kv;
}

ModelConfig ModelConfig::from_kv(const KvMap& kv) {
    ModelConfig cfg;
    cfg.encoder.depth = int(kv.get_int("encoder.depth", cfg.encoder.depth));
    if (kv.has("encoder.channels")) {
        cfg.encoder.channels.clear();
        for (double d : kv.get_doubles("encoder.channels")) cfg.encoder.channels.push_back(int(d));
    }
    cfg.encoder.out_channels = int(kv.get_int("encoder.out_channels", cfg.encoder.out_channels));
    cfg.hash.levels = int(kv.get_int("hash.levels", cfg.hash.levels));
    cfg.hash.features = int(kv.get_int("hash.features", cfg.hash.features));
    cfg.hash.base_resolution = int(kv.get_int("hash.base_resolution", cfg.hash.base_resolution));
    cfg.hash.max_resolution = int(kv.get_int("hash.max_resolution", cfg.hash.max_resolution));
    cfg.hash.table_size = uint32_t(kv.get_int("hash.table_size", cfg.hash.table_size));
    if (kv.has("hash.primes")) {
        auto p = kv.get_doubles("hash.primes");
        if (p.size() != 3) throw ConfigError("hash.primes: expected 3 values");
        for (int i = 0; i < 3; ++i) cfg.hash.primes[size_t(i)] = uint32_t(p[size_t(i)]);
    }
    cfg.decoder.topology =
        parse_topology(kv.get_string("decoder.topology", topology_name(cfg.decoder.topology)));
    cfg.decoder.hidden_layers =
        int(kv.get_int("decoder.hidden_layers", cfg.decoder.hidden_layers));
    cfg.decoder.width = int(kv.get_int("decoder.width", cfg.decoder.width));
    cfg.decoder.num_classes = int(kv.get_int("decoder.num_classes", cfg.decoder.num_classes));
    if (kv.has("volume.dims")) {
        auto d = kv.get_doubles("volume.dims");
        if (d.size() != 3) throw ConfigError("volume.dims: expected 3 values");
        cfg.vol_dims = {int(d[0]), int(d[1]), int(d[2])};
    }
    if (kv.has("volume.spacing")) {
        auto s = kv.get_doubles("volume.spacing");
        if (s.size() != 3) throw ConfigError("volume.spacing: expected 3 values");
        cfg.vol_spacing = {s[0], s[1], s[2]};
    }
    cfg.drr_nu = int(kv.get_int("drr.nu", cfg.drr_nu));
    cfg.drr_nv = int(kv.get_int("drr.nv", cfg.drr_nv));
    return cfg;
}

}  // namespace spider
