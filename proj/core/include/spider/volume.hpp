#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace spider {

struct Dims {
    int nx = 0, ny = 0, nz = 0;
    size_t count() const { return size_t(nx) * ny * nz; }
    bool operator==(const Dims&) const = default;
};

struct Spacing {
    double sx = 1.0, sy = 1.0, sz = 1.0;
    bool operator==(const Spacing&) const = default;
};

struct Vec3 {
    double x = 0, y = 0, z = 0;
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
double norm(Vec3 a);
Vec3 normalized(Vec3 a);

// Dense scalar field over a voxel lattice. Values are normalized attenuation
// in [0,1]. Storage order is x fastest, then y, then z:
//   index(i,j,k) = i + nx*(j + ny*k)
struct VoxelGrid {
    Dims dims;
    Spacing spacing;
    std::vector<float> values;

    VoxelGrid() = default;
    VoxelGrid(Dims d, Spacing s);

    size_t index(int i, int j, int k) const;
    std::array<int, 3> coords(size_t index) const;
    float& at(int i, int j, int k) { return values[index(i, j, k)]; }
    float at(int i, int j, int k) const { return values[index(i, j, k)]; }

    // Physical extent of the volume box in millimeters.
    Vec3 extent_mm() const { return {dims.nx * spacing.sx, dims.ny * spacing.sy, dims.nz * spacing.sz}; }

    void validate() const;  // dims >= 2, spacing > 0, values finite in [0,1]
};

// Per-voxel class labels, 0 = background, 1..class_count = structures.
struct LabelGrid {
    Dims dims;
    Spacing spacing;
    int class_count = 1;  // number of structural (non-background) classes
    std::vector<uint16_t> labels;

    LabelGrid() = default;
    LabelGrid(Dims d, Spacing s, int classes);

    size_t index(int i, int j, int k) const;
    uint16_t& at(int i, int j, int k) { return labels[index(i, j, k)]; }
    uint16_t at(int i, int j, int k) const { return labels[index(i, j, k)]; }

    void validate() const;
};

// Voxel center (i,j,k) -> normalized coordinates ((i+.5)/nx, (j+.5)/ny, (k+.5)/nz).
Vec3 normalized_coord(int i, int j, int k, Dims dims);
// Inverse map: nearest voxel of a normalized point (components clamped to the grid).
std::array<int, 3> nearest_voxel(Vec3 p, Dims dims);

// SPVOL v1 container. Header is ASCII:
//   SPVOL 1
//   dims nx ny nz
//   spacing sx sy sz
//   dtype f32|u16
//   <blank line>
// followed by a raw little-endian payload of exactly nx*ny*nz elements.
void save_volume(const std::string& path, const VoxelGrid& grid);
void save_volume(const std::string& path, const LabelGrid& grid);
VoxelGrid load_volume(const std::string& path);
LabelGrid load_labels(const std::string& path);

}  // namespace spider
