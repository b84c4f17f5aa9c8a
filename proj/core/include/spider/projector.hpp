#pragma once

#include <functional>
#include <string>
#include <vector>

#include "spider/geometry.hpp"
#include "spider/volume.hpp"

namespace spider {

// Log-domain detector image p(u,v) = -log(I/I0), in attenuation * mm.
// Stored u fastest: value(iu,iv) = log_values[iu + nu*iv].
struct Projection {
    ViewPose pose;
    DetectorSpec detector;
    std::vector<double> log_values;

    double& at(int iu, int iv) { return log_values[size_t(iu) + size_t(detector.nu) * iv]; }
    double at(int iu, int iv) const { return log_values[size_t(iu) + size_t(detector.nu) * iv]; }
    void validate() const;
};

// Line-integral accumulator in the volume lattice; values are unbounded
// (unlike VoxelGrid, which is normalized to [0,1]).
struct VolumeAccumulator {
    Dims dims;
    Spacing spacing;
    std::vector<double> values;
};

// Exact-intersection-length (Siddon-style) parallel projection:
// p(u,v) = sum over crossed voxels of mu * intersection_length_mm.
Projection project_parallel(const VoxelGrid& grid, const ViewPose& pose, const DetectorSpec& det);

// Beer-Lambert intensity image I = I0 * exp(-p).
std::vector<double> attenuate(const Projection& p, double i0);

struct PixelCoord {
    double u = 0, v = 0;
};

// Continuous detector pixel coordinates of a 3D point (mm). Out-of-detector
// points return out-of-range coordinates; callers clamp or skip.
PixelCoord project_point(const ViewPose& pose, const DetectorSpec& det, Vec3 x_mm);

// Exact adjoint of project_parallel (same intersection weights, transposed).
VolumeAccumulator backproject(const Projection& p, Dims dims, Spacing spacing);

// Classical two-view baseline: ramp-filter each projection along u in the
// frequency domain, backproject with per-voxel footprint normalization,
// scale by pi/n_views, clamp to [0,1].
VoxelGrid fbp_two_view(const Projection& p_pa, const Projection& p_lat, Dims dims, Spacing spacing);
VoxelGrid fbp_multi_view(const std::vector<Projection>& projections, Dims dims, Spacing spacing);

struct NullSpaceWitness {
    VoxelGrid x;
    VoxelGrid x_prime;
    double max_projection_diff = 0;  // ||A(x - x')||_inf
    double max_volume_diff = 0;      // ||x - x'||_inf
};

// Constructive witness of biplanar underdetermination: two distinct volumes
// with identical projections under both poses. Assembles the system matrix
// densely by probing project_parallel with unit basis volumes, so dims must
// stay small (<= 6 per axis).
NullSpaceWitness null_space_witness(Dims dims, Spacing spacing, const ViewPose& pose_a,
                                    const DetectorSpec& det_a, const ViewPose& pose_b,
                                    const DetectorSpec& det_b, uint64_t seed);

// Per-image min-max scaling of a log projection to [0,1] (encoder input).
std::vector<float> normalize_drr(const Projection& p);

// Projections serialize as SPVOL v1 with nz = 1 and spacing (pitch_u, pitch_v, 1).
void save_projection(const std::string& path, const Projection& p);
// Loads image + detector spec; the pose is not stored and must be supplied.
Projection load_projection(const std::string& path, const ViewPose& pose);

// Visits (voxel_index, intersection_length_mm) along one ray. Exposed for
// oracle tests.
void traverse_ray(Vec3 point_mm, Vec3 dir_unit, Dims dims, Spacing spacing,
                  const std::function<void(size_t, double)>& visit);

// Position (mm) of the center of detector pixel (iu, iv).
Vec3 detector_pixel_center(const ViewPose& pose, const DetectorSpec& det, int iu, int iv);

}  // namespace spider
