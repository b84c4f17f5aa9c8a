#include "spider/mesh.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "spider/errors.hpp"
#include "spider/kv.hpp"

namespace spider {

namespace {

double triangle_area(Vec3 a, Vec3 b, Vec3 c) { return 0.5 * norm(cross(b - a, c - a)); }

}  // namespace

void SurfaceMesh::validate() const {
    for (const auto& t : triangles) {
        for (int idx : t)
            if (idx < 0 || size_t(idx) >= vertices.size())
                throw ValidationError("mesh: triangle index out of range");
        if (triangle_area(vertices[size_t(t[0])], vertices[size_t(t[1])],
                          vertices[size_t(t[2])]) <= 1e-12)
            throw ValidationError("mesh: degenerate triangle");
    }
}

size_t SurfaceMesh::unique_edge_count() const {
    std::set<std::pair<int, int>> edges;
    for (const auto& t : triangles)
        for (int e = 0; e < 3; ++e) {
            int a = t[size_t(e)], b = t[size_t((e + 1) % 3)];
            edges.insert({std::min(a, b), std::max(a, b)});
        }
    return edges.size();
}

SurfaceMesh marching_cubes(const VoxelGrid& grid, double iso) {
    const Dims d = grid.dims;
    if (d.nx < 2 || d.ny < 2 || d.nz < 2) throw ValidationError("marching_cubes: dims must be >= 2");

    // Bourke corner layout: 0..3 bottom ring (z), 4..7 top ring (z+1).
    static const int corner_off[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                         {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
    static const int edge_corners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                            {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

    SurfaceMesh mesh;
    std::map<std::pair<size_t, size_t>, int> edge_vertex;  // welding

    auto center = [&](int i, int j, int k) -> Vec3 {
        return {(i + 0.5) * grid.spacing.sx, (j + 0.5) * grid.spacing.sy,
                (k + 0.5) * grid.spacing.sz};
    };

    for (int k = 0; k + 1 < d.nz; ++k)
        for (int j = 0; j + 1 < d.ny; ++j)
            for (int i = 0; i + 1 < d.nx; ++i) {
                double val[8];
                size_t vid[8];
                for (int c = 0; c < 8; ++c) {
                    const int ci = i + corner_off[c][0], cj = j + corner_off[c][1],
                              ck = k + corner_off[c][2];
                    vid[c] = grid.index(ci, cj, ck);
                    val[c] = double(grid.values[vid[c]]);
                }
                int cube = 0;
                for (int c = 0; c < 8; ++c)
                    if (val[c] < iso) cube |= 1 << c;
                if (kMcEdgeTable[cube] == 0) continue;

                int everts[12];
                for (int e = 0; e < 12; ++e) {
                    if (!(kMcEdgeTable[cube] & (1 << e))) continue;
                    const int c0 = edge_corners[e][0], c1 = edge_corners[e][1];
                    auto key = std::minmax(vid[c0], vid[c1]);
                    auto it = edge_vertex.find({key.first, key.second});
                    if (it != edge_vertex.end()) {
                        everts[e] = it->second;
                        continue;
                    }
                    double denom = val[c1] - val[c0];
                    double t = std::abs(denom) < 1e-12 ? 0.5 : (iso - val[c0]) / denom;
                    t = std::min(1.0, std::max(0.0, t));
                    Vec3 p0 = center(i + corner_off[c0][0], j + corner_off[c0][1],
                                     k + corner_off[c0][2]);
                    Vec3 p1 = center(i + corner_off[c1][0], j + corner_off[c1][1],
                                     k + corner_off[c1][2]);
                    Vec3 p = p0 + t * (p1 - p0);
                    everts[e] = int(mesh.vertices.size());
                    mesh.vertices.push_back(p);
                    edge_vertex[{key.first, key.second}] = everts[e];
                }
                for (int t = 0; kMcTriTable[cube][t] != -1; t += 3) {
                    std::array<int, 3> tri = {everts[kMcTriTable[cube][t]],
                                              everts[kMcTriTable[cube][t + 1]],
                                              everts[kMcTriTable[cube][t + 2]]};
                    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) continue;
                    if (triangle_area(mesh.vertices[size_t(tri[0])], mesh.vertices[size_t(tri[1])],
                                      mesh.vertices[size_t(tri[2])]) <= 1e-12)
                        continue;
                    mesh.triangles.push_back(tri);
                }
            }
    return mesh;
}

SurfaceMesh marching_cubes_mask(const LabelGrid& grid, int cls) {
    VoxelGrid mask;
    mask.dims = grid.dims;
    mask.spacing = grid.spacing;
    mask.values.resize(grid.labels.size());
    for (size_t i = 0; i < grid.labels.size(); ++i)
        mask.values[i] = grid.labels[i] == cls ? 1.0f : 0.0f;
    return marching_cubes(mask, 0.5);
}

SurfaceMesh laplacian_smooth(const SurfaceMesh& mesh, int iterations, double factor) {
    if (iterations < 0) throw ValidationError("laplacian_smooth: negative iteration count");
    std::vector<std::set<int>> ring(mesh.vertices.size());
    for (const auto& t : mesh.triangles)
        for (int e = 0; e < 3; ++e) {
            ring[size_t(t[size_t(e)])].insert(t[size_t((e + 1) % 3)]);
            ring[size_t(t[size_t((e + 1) % 3)])].insert(t[size_t(e)]);
        }
    SurfaceMesh out = mesh;
    std::vector<Vec3> next(out.vertices.size());
    for (int it = 0; it < iterations; ++it) {
        for (size_t v = 0; v < out.vertices.size(); ++v) {
            if (ring[v].empty()) {
                next[v] = out.vertices[v];
                continue;
            }
            Vec3 avg{0, 0, 0};
            for (int n : ring[v]) avg = avg + out.vertices[size_t(n)];
            avg = (1.0 / double(ring[v].size())) * avg;
            next[v] = out.vertices[v] + factor * (avg - out.vertices[v]);
        }
        out.vertices.swap(next);
    }
    return out;
}

void save_obj(const std::string& path, const SurfaceMesh& mesh) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    for (const Vec3& v : mesh.vertices)
        f << "v " << format_double(v.x) << ' ' << format_double(v.y) << ' ' << format_double(v.z)
          << '\n';
    for (const auto& t : mesh.triangles)
        f << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    if (!f) throw IoError("short write to " + path);
}

}  // namespace spider
