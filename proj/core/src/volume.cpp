#include "spider/volume.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "spider/errors.hpp"
#include "spider/kv.hpp"

namespace spider {

double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

Vec3 normalized(Vec3 a) {
    double n = norm(a);
    if (n == 0.0) throw GeometryError("cannot normalize zero vector");
    return {a.x / n, a.y / n, a.z / n};
}

static void check_dims(Dims d) {
    if (d.nx < 2 || d.ny < 2 || d.nz < 2)
        throw ValidationError("grid dims must be >= 2 per axis, got " + std::to_string(d.nx) + "x" +
                              std::to_string(d.ny) + "x" + std::to_string(d.nz));
}

static void check_spacing(Spacing s) {
    if (!(s.sx > 0) || !(s.sy > 0) || !(s.sz > 0))
        throw ValidationError("voxel spacing must be positive");
}

VoxelGrid::VoxelGrid(Dims d, Spacing s) : dims(d), spacing(s), values(d.count(), 0.0f) {
    check_dims(d);
    check_spacing(s);
}

size_t VoxelGrid::index(int i, int j, int k) const {
    return size_t(i) + size_t(dims.nx) * (size_t(j) + size_t(dims.ny) * size_t(k));
}

std::array<int, 3> VoxelGrid::coords(size_t index) const {
    int i = int(index % dims.nx);
    int j = int((index / dims.nx) % dims.ny);
    int k = int(index / (size_t(dims.nx) * dims.ny));
    return {i, j, k};
}

void VoxelGrid::validate() const {
    check_dims(dims);
    check_spacing(spacing);
    if (values.size() != dims.count())
        throw ValidationError("value count does not match dims");
    for (float v : values)
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
            throw ValidationError("voxel value outside [0,1]");
}

LabelGrid::LabelGrid(Dims d, Spacing s, int classes)
    : dims(d), spacing(s), class_count(classes), labels(d.count(), 0) {
    check_dims(d);
    check_spacing(s);
    if (classes < 1) throw ValidationError("class count must be >= 1");
}

size_t LabelGrid::index(int i, int j, int k) const {
    return size_t(i) + size_t(dims.nx) * (size_t(j) + size_t(dims.ny) * size_t(k));
}

void LabelGrid::validate() const {
    check_dims(dims);
    if (class_count < 1) throw ValidationError("class count must be >= 1");
    if (labels.size() != dims.count())
        throw ValidationError("label count does not match dims");
    for (uint16_t l : labels)
        if (l > class_count)
            throw ValidationError("label " + std::to_string(l) + " exceeds class count " +
                                  std::to_string(class_count));
}

Vec3 normalized_coord(int i, int j, int k, Dims dims) {
    if (i < 0 || i >= dims.nx || j < 0 || j >= dims.ny || k < 0 || k >= dims.nz)
        throw ValidationError("voxel index out of range");
    return {(i + 0.5) / dims.nx, (j + 0.5) / dims.ny, (k + 0.5) / dims.nz};
}

std::array<int, 3> nearest_voxel(Vec3 p, Dims dims) {
    auto clamp_axis = [](double c, int n) {
        int i = int(std::floor(c * n));
        if (i < 0) i = 0;
        if (i >= n) i = n - 1;
        return i;
    };
    return {clamp_axis(p.x, dims.nx), clamp_axis(p.y, dims.ny), clamp_axis(p.z, dims.nz)};
}

// --- SPVOL v1 ---

namespace {

void write_header(std::ostream& f, Dims d, Spacing s, const char* dtype) {
    f << "SPVOL 1\n";
    f << "dims " << d.nx << ' ' << d.ny << ' ' << d.nz << '\n';
    f << "spacing " << format_double(s.sx) << ' ' << format_double(s.sy) << ' '
      << format_double(s.sz) << '\n';
    f << "dtype " << dtype << '\n';
    f << '\n';
}

struct Header {
    Dims dims;
    Spacing spacing;
    std::string dtype;
};

Header read_header(std::istream& f, const std::string& path) {
    std::string line;
    if (!std::getline(f, line) || line != "SPVOL 1") {
        if (line.rfind("SPVOL", 0) == 0)
            throw FormatError(path + ": unsupported SPVOL version: '" + line + "'");
        throw FormatError(path + ": not an SPVOL file");
    }
    Header h;
    if (!std::getline(f, line)) throw FormatError(path + ": truncated header");
    if (std::sscanf(line.c_str(), "dims %d %d %d", &h.dims.nx, &h.dims.ny, &h.dims.nz) != 3)
        throw FormatError(path + ": malformed dims line: '" + line + "'");
    if (!std::getline(f, line)) throw FormatError(path + ": truncated header");
    if (std::sscanf(line.c_str(), "spacing %lf %lf %lf", &h.spacing.sx, &h.spacing.sy,
                    &h.spacing.sz) != 3)
        throw FormatError(path + ": malformed spacing line: '" + line + "'");
    if (!std::getline(f, line) || line.rfind("dtype ", 0) != 0)
        throw FormatError(path + ": malformed dtype line");
    h.dtype = line.substr(6);
    if (h.dtype != "f32" && h.dtype != "u16")
        throw FormatError(path + ": unsupported dtype '" + h.dtype + "'");
    if (!std::getline(f, line) || !line.empty())
        throw FormatError(path + ": expected blank line before payload");
    if (h.dims.nx <= 0 || h.dims.ny <= 0 || h.dims.nz <= 0)
        throw FormatError(path + ": non-positive dims");
    return h;
}

template <typename T>
void read_payload(std::istream& f, const std::string& path, std::vector<T>& out, size_t n) {
    out.resize(n);
    f.read(reinterpret_cast<char*>(out.data()), std::streamsize(n * sizeof(T)));
    if (size_t(f.gcount()) != n * sizeof(T))
        throw FormatError(path + ": payload shorter than dims imply");
    char extra;
    if (f.read(&extra, 1))
        throw FormatError(path + ": payload longer than dims imply");
}

}  // namespace

void save_volume(const std::string& path, const VoxelGrid& grid) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    write_header(f, grid.dims, grid.spacing, "f32");
    f.write(reinterpret_cast<const char*>(grid.values.data()),
            std::streamsize(grid.values.size() * sizeof(float)));
    if (!f) throw IoError("short write to " + path);
}

void save_volume(const std::string& path, const LabelGrid& grid) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    write_header(f, grid.dims, grid.spacing, "u16");
    f.write(reinterpret_cast<const char*>(grid.labels.data()),
            std::streamsize(grid.labels.size() * sizeof(uint16_t)));
    if (!f) throw IoError("short write to " + path);
}

VoxelGrid load_volume(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    Header h = read_header(f, path);
    if (h.dtype != "f32") throw FormatError(path + ": expected dtype f32, found " + h.dtype);
    VoxelGrid g;
    g.dims = h.dims;
    g.spacing = h.spacing;
    read_payload(f, path, g.values, h.dims.count());
    return g;
}

LabelGrid load_labels(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    Header h = read_header(f, path);
    if (h.dtype != "u16") throw FormatError(path + ": expected dtype u16, found " + h.dtype);
    LabelGrid g;
    g.dims = h.dims;
    g.spacing = h.spacing;
    read_payload(f, path, g.labels, h.dims.count());
    uint16_t maxl = 0;
    for (uint16_t l : g.labels) maxl = std::max(maxl, l);
    g.class_count = std::max<int>(1, maxl);
    return g;
}

}  // namespace spider
