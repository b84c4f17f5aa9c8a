#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "spider/nn.hpp"
#include "spider/volume.hpp"

namespace spider {

// Multi-resolution hash encoding of [0,1]^3 coordinates: L levels of
// learnable tables, trilinear interpolation of the 8 cell-corner features,
// concatenated across levels. Levels whose full vertex lattice fits in the
// table use dense addressing; finer levels use the XOR-of-primes hash.
struct HashEncoderConfig {
    int levels = 11;
    int features = 8;
    int base_resolution = 4;
    int max_resolution = 128;
    uint32_t table_size = 1u << 14;
    std::array<uint32_t, 3> primes = {2654435761u, 805459861u, 3674653429u};

    int output_dim() const { return levels * features; }

    double growth() const {
        if (levels <= 1) return 1.0;
        return std::exp((std::log(double(max_resolution)) - std::log(double(base_resolution))) /
                        double(levels - 1));
    }

    int level_resolution(int level) const {
        double r = double(base_resolution) * std::pow(growth(), double(level));
        return std::max(base_resolution, int(std::floor(r + 0.5)));
    }

    bool level_is_dense(int level) const {
        uint64_t verts = uint64_t(level_resolution(level)) + 1;
        return verts * verts * verts <= table_size;
    }

    void validate() const {
        if (levels < 1 || features < 1) throw ConfigError("hash encoder: bad levels/features");
        if (base_resolution < 1 || max_resolution < base_resolution)
            throw ConfigError("hash encoder: bad resolution range");
        for (int l = 1; l < levels; ++l)
            if (level_resolution(l) <= level_resolution(l - 1))
                throw ConfigError("hash encoder: level resolutions must strictly increase");
    }
};

// XOR-of-primes vertex hash, wrapping uint32 arithmetic.
inline uint32_t hash_index(std::array<uint32_t, 3> vertex, const HashEncoderConfig& cfg) {
    uint32_t h = (vertex[0] * cfg.primes[0]) ^ (vertex[1] * cfg.primes[1]) ^
                 (vertex[2] * cfg.primes[2]);
    return h % cfg.table_size;
}

// Table row of a lattice vertex at `level`: dense row-major addressing when
// the lattice fits, XOR hash otherwise.
inline uint32_t vertex_index(std::array<uint32_t, 3> vertex, int level,
                             const HashEncoderConfig& cfg) {
    if (cfg.level_is_dense(level)) {
        uint32_t n = uint32_t(cfg.level_resolution(level)) + 1;
        return vertex[0] + n * (vertex[1] + n * vertex[2]);
    }
    return hash_index(vertex, cfg);
}

template <typename T>
struct HashEncoder {
    HashEncoderConfig cfg;
    std::vector<Param<T>*> tables;

    HashEncoder() = default;
    HashEncoder(ParamStore<T>& store, const HashEncoderConfig& config, Rng& rng,
                const std::string& prefix = "hash")
        : cfg(config) {
        cfg.validate();
        for (int l = 0; l < cfg.levels; ++l) {
            Param<T>& tab = store.create(prefix + ".level" + std::to_string(l),
                                         Shape{int(cfg.table_size), cfg.features});
            init_uniform(tab, rng, 1e-4);
            tables.push_back(&tab);
        }
    }

    // points in [0,1]^3 (beyond 1e-9 outside is a domain error) -> [B, L*F].
    Var<T> encode(Tape<T>& tape, const std::vector<Vec3>& points) const {
        const int B = int(points.size());
        if (B == 0) throw ShapeError("hash encode: empty point batch");
        for (const Vec3& p : points)
            if (p.x < -1e-9 || p.x > 1 + 1e-9 || p.y < -1e-9 || p.y > 1 + 1e-9 || p.z < -1e-9 ||
                p.z > 1 + 1e-9)
                throw ValidationError("hash encode: point outside [0,1]^3");

        Var<T> out;
        for (int l = 0; l < cfg.levels; ++l) {
            const int res = cfg.level_resolution(l);
            std::array<std::vector<uint32_t>, 8> corner_idx;
            for (auto& v : corner_idx) v.resize(size_t(B));
            std::vector<T> weights(size_t(B) * 8);
            for (int b = 0; b < B; ++b) {
                const Vec3& p = points[size_t(b)];
                const double u[3] = {std::min(1.0, std::max(0.0, p.x)) * res,
                                     std::min(1.0, std::max(0.0, p.y)) * res,
                                     std::min(1.0, std::max(0.0, p.z)) * res};
                uint32_t i0[3];
                double f[3];
                for (int a = 0; a < 3; ++a) {
                    int c = std::min(int(std::floor(u[a])), res - 1);
                    i0[a] = uint32_t(c);
                    f[a] = u[a] - c;
                }
                for (int j = 0; j < 8; ++j) {
                    const uint32_t dx = j & 1, dy = (j >> 1) & 1, dz = (j >> 2) & 1;
                    corner_idx[size_t(j)][size_t(b)] =
                        vertex_index({i0[0] + dx, i0[1] + dy, i0[2] + dz}, l, cfg);
                    const double wx = dx ? f[0] : 1.0 - f[0];
                    const double wy = dy ? f[1] : 1.0 - f[1];
                    const double wz = dz ? f[2] : 1.0 - f[2];
                    weights[size_t(b) * 8 + j] = T(wx * wy * wz);
                }
            }
            Var<T> table = tape.leaf(*tables[size_t(l)]);
            std::array<Var<T>, 8> gathered;
            for (int j = 0; j < 8; ++j)
                gathered[size_t(j)] = gather_rows(table, corner_idx[size_t(j)]);
            Var<T> level_feat = trilinear_blend(gathered, std::move(weights));
            out = (l == 0) ? level_feat : concat_cols(out, level_feat);
        }
        return out;
    }

    // Trilinear weights of one point at one level (test/diagnostic hook).
    static std::array<double, 8> point_weights(Vec3 p, int res) {
        const double u[3] = {std::min(1.0, std::max(0.0, p.x)) * res,
                             std::min(1.0, std::max(0.0, p.y)) * res,
                             std::min(1.0, std::max(0.0, p.z)) * res};
        double f[3];
        for (int a = 0; a < 3; ++a) {
            int c = std::min(int(std::floor(u[a])), res - 1);
            f[a] = u[a] - c;
        }
        std::array<double, 8> w;
        for (int j = 0; j < 8; ++j) {
            const double wx = (j & 1) ? f[0] : 1.0 - f[0];
            const double wy = ((j >> 1) & 1) ? f[1] : 1.0 - f[1];
            const double wz = ((j >> 2) & 1) ? f[2] : 1.0 - f[2];
            w[size_t(j)] = wx * wy * wz;
        }
        return w;
    }
};

}  // namespace spider
