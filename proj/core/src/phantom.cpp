#include "spider/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "spider/errors.hpp"

namespace spider {

double Rng::gaussian() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    // Box-Muller; u > 0 guaranteed by the 2^-53 offset.
    double u = (double(engine_() >> 11) + 0.5) * 0x1.0p-53;
    double v = double(engine_() >> 11) * 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u));
    double a = 2.0 * 3.14159265358979323846 * v;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t x = a + 0x9E3779B97F4A7C15ULL * (b + 1);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

bool Primitive::contains(Vec3 p) const {
    Vec3 d = p - center;
    switch (shape) {
        case ShapeKind::box:
            return std::abs(d.x) <= radii.x && std::abs(d.y) <= radii.y && std::abs(d.z) <= radii.z;
        case ShapeKind::ellipsoid: {
            double q = (d.x / radii.x) * (d.x / radii.x) + (d.y / radii.y) * (d.y / radii.y) +
                       (d.z / radii.z) * (d.z / radii.z);
            return q <= 1.0;
        }
        case ShapeKind::shell: {
            double q = std::sqrt((d.x / radii.x) * (d.x / radii.x) +
                                 (d.y / radii.y) * (d.y / radii.y) +
                                 (d.z / radii.z) * (d.z / radii.z));
            return q >= shell_inner && q <= 1.0;
        }
    }
    return false;
}

void PhantomSpec::validate() const {
    if (class_count < 1) throw ValidationError("phantom spec: class_count must be >= 1");
    if (noise_sigma < 0) throw ValidationError("phantom spec: noise_sigma must be >= 0");
    for (size_t i = 0; i < primitives.size(); ++i) {
        const Primitive& p = primitives[i];
        const std::string who = "primitive." + std::to_string(i);
        if (p.label < 1 || p.label > class_count)
            throw ValidationError(who + ": label " + std::to_string(p.label) +
                                  " out of range [1.." + std::to_string(class_count) + "]");
        if (!(p.radii.x > 0 && p.radii.y > 0 && p.radii.z > 0))
            throw ValidationError(who + ": radii must be positive");
        if (p.intensity < 0 || p.intensity > 1)
            throw ValidationError(who + ": intensity outside [0,1]");
        if (p.shape == ShapeKind::shell && !(p.shell_inner >= 0 && p.shell_inner < 1))
            throw ValidationError(who + ": shell_inner must be in [0,1)");
    }
}

namespace {

const char* shape_name(ShapeKind k) {
    switch (k) {
        case ShapeKind::ellipsoid: return "ellipsoid";
        case ShapeKind::box: return "box";
        case ShapeKind::shell: return "spherical-shell";
    }
    return "?";
}

ShapeKind parse_shape(const std::string& s) {
    if (s == "ellipsoid") return ShapeKind::ellipsoid;
    if (s == "box") return ShapeKind::box;
    if (s == "spherical-shell") return ShapeKind::shell;
    throw ConfigError("unknown primitive shape '" + s + "'");
}

Vec3 get_vec3(const KvMap& kv, const std::string& key) {
    auto v = kv.get_doubles(key);
    if (v.size() != 3) throw ConfigError("key " + key + ": expected 3 numbers");
    return {v[0], v[1], v[2]};
}

double clampd(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

}  // namespace

PhantomSpec PhantomSpec::from_kv(const KvMap& kv) {
    PhantomSpec spec;
    spec.class_count = int(kv.get_int("classes", 1));
    spec.noise_sigma = kv.get_double("noise_sigma", 0.0);
    spec.seed = kv.get_int("seed", 0);
    spec.jitter.center = kv.get_double("jitter.center", 0.0);
    spec.jitter.radii = kv.get_double("jitter.radii", 0.0);
    spec.jitter.intensity = kv.get_double("jitter.intensity", 0.0);
    for (int i = 0;; ++i) {
        const std::string base = "primitive." + std::to_string(i) + ".";
        if (!kv.has(base + "shape")) break;
        Primitive p;
        p.shape = parse_shape(kv.get_string(base + "shape"));
        p.center = get_vec3(kv, base + "center");
        p.radii = get_vec3(kv, base + "radii");
        p.shell_inner = kv.get_double(base + "shell_inner", 0.7);
        p.intensity = kv.get_double(base + "intensity");
        p.label = int(kv.get_int(base + "label"));
        spec.primitives.push_back(p);
    }
    spec.validate();
    return spec;
}

KvMap PhantomSpec::to_kv() const {
    KvMap kv;
    kv.set("classes", std::to_string(class_count));
    kv.set("noise_sigma", format_double(noise_sigma));
    kv.set("seed", std::to_string(seed));
    kv.set("jitter.center", format_double(jitter.center));
    kv.set("jitter.radii", format_double(jitter.radii));
    kv.set("jitter.intensity", format_double(jitter.intensity));
    for (size_t i = 0; i < primitives.size(); ++i) {
        const Primitive& p = primitives[i];
        const std::string base = "primitive." + std::to_string(i) + ".";
        kv.set(base + "shape", shape_name(p.shape));
        kv.set(base + "center", format_double(p.center.x) + " " + format_double(p.center.y) + " " +
                                    format_double(p.center.z));
        kv.set(base + "radii", format_double(p.radii.x) + " " + format_double(p.radii.y) + " " +
                                   format_double(p.radii.z));
        if (p.shape == ShapeKind::shell) kv.set(base + "shell_inner", format_double(p.shell_inner));
        kv.set(base + "intensity", format_double(p.intensity));
        kv.set(base + "label", std::to_string(p.label));
    }
    return kv;
}

PhantomSpec PhantomSpec::load(const std::string& path) { return from_kv(KvMap::load(path)); }

std::pair<VoxelGrid, LabelGrid> generate_phantom(const PhantomSpec& spec, long long instance_seed,
                                                 Dims dims, Spacing spacing) {
    spec.validate();
    VoxelGrid vol(dims, spacing);
    LabelGrid lab(dims, spacing, spec.class_count);

    Rng rng(mix_seed(uint64_t(spec.seed), uint64_t(instance_seed)));

    // Instance-level jitter, then clamp each primitive into [0,1]^3.
    std::vector<Primitive> prims = spec.primitives;
    for (Primitive& p : prims) {
        Vec3 jc = {rng.uniform(-spec.jitter.center, spec.jitter.center),
                   rng.uniform(-spec.jitter.center, spec.jitter.center),
                   rng.uniform(-spec.jitter.center, spec.jitter.center)};
        Vec3 jr = {rng.uniform(-spec.jitter.radii, spec.jitter.radii),
                   rng.uniform(-spec.jitter.radii, spec.jitter.radii),
                   rng.uniform(-spec.jitter.radii, spec.jitter.radii)};
        double ji = rng.uniform(-spec.jitter.intensity, spec.jitter.intensity);
        p.center = p.center + jc;
        p.radii = {p.radii.x * (1.0 + jr.x), p.radii.y * (1.0 + jr.y), p.radii.z * (1.0 + jr.z)};
        p.intensity = clampd(p.intensity + ji, 0.0, 1.0);
        p.radii = {clampd(p.radii.x, 1e-6, 0.5), clampd(p.radii.y, 1e-6, 0.5),
                   clampd(p.radii.z, 1e-6, 0.5)};
        p.center = {clampd(p.center.x, p.radii.x, 1.0 - p.radii.x),
                    clampd(p.center.y, p.radii.y, 1.0 - p.radii.y),
                    clampd(p.center.z, p.radii.z, 1.0 - p.radii.z)};
    }

    // Paint in list order; later primitives overwrite earlier ones.
    for (const Primitive& p : prims) {
        int i0 = std::max(0, int(std::floor((p.center.x - p.radii.x) * dims.nx - 0.5)));
        int i1 = std::min(dims.nx - 1, int(std::ceil((p.center.x + p.radii.x) * dims.nx)));
        int j0 = std::max(0, int(std::floor((p.center.y - p.radii.y) * dims.ny - 0.5)));
        int j1 = std::min(dims.ny - 1, int(std::ceil((p.center.y + p.radii.y) * dims.ny)));
        int k0 = std::max(0, int(std::floor((p.center.z - p.radii.z) * dims.nz - 0.5)));
        int k1 = std::min(dims.nz - 1, int(std::ceil((p.center.z + p.radii.z) * dims.nz)));
        for (int k = k0; k <= k1; ++k)
            for (int j = j0; j <= j1; ++j)
                for (int i = i0; i <= i1; ++i) {
                    if (p.contains(normalized_coord(i, j, k, dims))) {
                        vol.at(i, j, k) = float(p.intensity);
                        lab.at(i, j, k) = uint16_t(p.label);
                    }
                }
    }

    if (spec.noise_sigma > 0) {
        for (size_t v = 0; v < vol.values.size(); ++v) {
            double noisy = double(vol.values[v]) + spec.noise_sigma * rng.gaussian();
            vol.values[v] = float(clampd(noisy, 0.0, 1.0));
        }
    }
    return {std::move(vol), std::move(lab)};
}

void DatasetSplit::validate() const {
    auto overlap = [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
        for (const auto& x : a)
            for (const auto& y : b)
                if (x == y) return true;
        return false;
    };
    if (overlap(train, val) || overlap(train, test) || overlap(val, test))
        throw ValidationError("dataset split lists are not disjoint");
}

namespace {
std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ' ';
        out += v[i];
    }
    return out;
}
std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ' ' || c == '\t') {
            if (!cur.empty()) out.push_back(cur), cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}
}  // namespace

void DatasetSplit::save(const std::string& path) const {
    KvMap kv;
    kv.set("master_seed", std::to_string(master_seed));
    kv.set("train", join(train));
    kv.set("val", join(val));
    kv.set("test", join(test));
    kv.save(path);
}

DatasetSplit DatasetSplit::load(const std::string& path) {
    KvMap kv = KvMap::load(path);
    DatasetSplit s;
    s.master_seed = kv.get_int("master_seed", 0);
    s.train = split_words(kv.get_string("train", ""));
    s.val = split_words(kv.get_string("val", ""));
    s.test = split_words(kv.get_string("test", ""));
    s.validate();
    return s;
}

}  // namespace spider
