#pragma once

#include <array>
#include <string>
#include <vector>

#include "spider/volume.hpp"

namespace spider {

extern const int kMcEdgeTable[256];
extern const int kMcTriTable[256][16];

struct SurfaceMesh {
    std::vector<Vec3> vertices;  // mm
    std::vector<std::array<int, 3>> triangles;

    void validate() const;  // index range + no degenerate triangles
    size_t unique_edge_count() const;
};

// Standard 256-case marching cubes over cells spanned by adjacent voxel
// centers. Shared edge vertices are welded, zero-area triangles dropped.
SurfaceMesh marching_cubes(const VoxelGrid& grid, double iso);
// Binary mask of one label class, extracted at iso 0.5.
SurfaceMesh marching_cubes_mask(const LabelGrid& grid, int cls);

// Uniform-weight Laplacian smoothing: each vertex moves toward the average
// of its 1-ring by `factor`, `iterations` times. Topology is untouched.
SurfaceMesh laplacian_smooth(const SurfaceMesh& mesh, int iterations = 10, double factor = 0.5);

void save_obj(const std::string& path, const SurfaceMesh& mesh);

}  // namespace spider
