#pragma once

#include <string>
#include <vector>

#include "spider/volume.hpp"

namespace spider {

// Parallel-beam acquisition pose. (u_axis, v_axis, ray_direction) form a
// right-handed orthonormal triad; detector_origin is the 3D position of the
// center of detector pixel (0,0) in volume coordinates (mm).
struct ViewPose {
    std::string view_id = "custom";  // "pa", "lat" or "custom"
    Vec3 ray_direction;
    Vec3 detector_u_axis;
    Vec3 detector_v_axis;
    Vec3 detector_origin;

    void validate() const;  // orthonormal right-handed triad
};

struct DetectorSpec {
    int nu = 128, nv = 128;
    double pitch_u = 1.0, pitch_v = 1.0;  // mm per pixel

    void validate() const;
};

// Canonical poses for a given volume geometry. The detector is centered on
// the volume and the pitch makes the volume footprint fill it exactly.
// pa looks along -y (u = +x, v = +z); lat is pa rotated 90 degrees about z
// (ray +x, u = +y, v = +z).
ViewPose make_pa_pose(Dims dims, Spacing spacing, const DetectorSpec& det);
ViewPose make_lat_pose(Dims dims, Spacing spacing, const DetectorSpec& det);
// Pose rotated by `angle_rad` about the volume's vertical (z) axis, with pa
// as the zero-angle reference. Used by the multi-view FBP self-test.
ViewPose make_rotated_pose(Dims dims, Spacing spacing, const DetectorSpec& det, double angle_rad);

DetectorSpec default_detector(Dims dims, Spacing spacing, int nu, int nv, const ViewPose& pose);
// Detector pitch that makes the volume footprint fill nu x nv exactly for
// the canonical pa/lat poses.
DetectorSpec footprint_detector_pa(Dims dims, Spacing spacing, int nu, int nv);
DetectorSpec footprint_detector_lat(Dims dims, Spacing spacing, int nu, int nv);

}  // namespace spider
