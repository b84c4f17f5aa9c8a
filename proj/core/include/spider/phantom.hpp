#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "spider/kv.hpp"
#include "spider/volume.hpp"

namespace spider {

// Deterministic RNG wrapper. mt19937_64 is bit-exact across platforms; the
// standard distributions are not, so the transforms live here.
class Rng {
  public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t bits() { return engine_(); }
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }  // [0,1)
    double uniform(double a, double b) { return a + (b - a) * uniform(); }
    size_t index(size_t n) { return size_t(engine_() % n); }

    double gaussian();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[engine_() % i]);
    }

  private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

uint64_t mix_seed(uint64_t a, uint64_t b);  // splitmix64 combine

enum class ShapeKind { ellipsoid, box, shell };

struct Primitive {
    ShapeKind shape = ShapeKind::ellipsoid;
    Vec3 center;               // normalized [0,1]^3
    Vec3 radii;                // radii / half-extents, normalized
    double shell_inner = 0.7;  // shells: inner boundary as a fraction of radii
    double intensity = 0.5;
    int label = 1;

    bool contains(Vec3 p) const;
};

struct PhantomJitter {
    double center = 0.0;     // absolute, per axis
    double radii = 0.0;      // relative, per axis
    double intensity = 0.0;  // absolute
};

// Procedural phantom family. One spec plus an instance seed yields one
// subject; the jitter block controls cross-subject variation.
struct PhantomSpec {
    int class_count = 1;  // structural classes, labels 1..class_count
    std::vector<Primitive> primitives;
    double noise_sigma = 0.0;
    long long seed = 0;
    PhantomJitter jitter;

    void validate() const;
    static PhantomSpec from_kv(const KvMap& kv);
    KvMap to_kv() const;
    static PhantomSpec load(const std::string& path);
};

std::pair<VoxelGrid, LabelGrid> generate_phantom(const PhantomSpec& spec, long long instance_seed,
                                                 Dims dims, Spacing spacing = {1.0, 1.0, 1.0});

struct DatasetSplit {
    std::vector<std::string> train, val, test;
    long long master_seed = 0;

    void validate() const;  // pairwise disjoint
    void save(const std::string& path) const;
    static DatasetSplit load(const std::string& path);
};

}  // namespace spider
