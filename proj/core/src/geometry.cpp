#include "spider/geometry.hpp"

#include <cmath>

#include "spider/errors.hpp"

namespace spider {

void ViewPose::validate() const {
    const double tol = 1e-10;
    auto unit = [&](Vec3 v, const char* name) {
        if (std::abs(norm(v) - 1.0) > tol)
            throw GeometryError(std::string("pose ") + view_id + ": " + name + " is not unit length");
    };
    unit(ray_direction, "ray_direction");
    unit(detector_u_axis, "detector_u_axis");
    unit(detector_v_axis, "detector_v_axis");
    if (std::abs(dot(ray_direction, detector_u_axis)) > tol ||
        std::abs(dot(ray_direction, detector_v_axis)) > tol ||
        std::abs(dot(detector_u_axis, detector_v_axis)) > tol)
        throw GeometryError("pose " + view_id + ": axes are not mutually orthogonal");
    Vec3 c = cross(detector_u_axis, detector_v_axis);
    if (norm(c - ray_direction) > 1e-9)
        throw GeometryError("pose " + view_id + ": triad is not right-handed");
}

void DetectorSpec::validate() const {
    if (nu < 2 || nv < 2) throw GeometryError("detector needs at least 2x2 pixels");
    if (!(pitch_u > 0) || !(pitch_v > 0)) throw GeometryError("detector pitch must be positive");
}

namespace {

Vec3 volume_center(Dims d, Spacing s) {
    return {0.5 * d.nx * s.sx, 0.5 * d.ny * s.sy, 0.5 * d.nz * s.sz};
}

ViewPose centered_pose(const std::string& id, Vec3 ray, Vec3 u, Vec3 v, Dims dims, Spacing spacing,
                       const DetectorSpec& det) {
    ViewPose pose;
    pose.view_id = id;
    pose.ray_direction = ray;
    pose.detector_u_axis = u;
    pose.detector_v_axis = v;
    Vec3 c = volume_center(dims, spacing);
    pose.detector_origin = c - (0.5 * (det.nu - 1) * det.pitch_u) * u -
                           (0.5 * (det.nv - 1) * det.pitch_v) * v;
    pose.validate();
    return pose;
}

}  // namespace

ViewPose make_pa_pose(Dims dims, Spacing spacing, const DetectorSpec& det) {
    return centered_pose("pa", {0, -1, 0}, {1, 0, 0}, {0, 0, 1}, dims, spacing, det);
}

ViewPose make_lat_pose(Dims dims, Spacing spacing, const DetectorSpec& det) {
    return centered_pose("lat", {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, dims, spacing, det);
}

ViewPose make_rotated_pose(Dims dims, Spacing spacing, const DetectorSpec& det, double angle_rad) {
    double c = std::cos(angle_rad), s = std::sin(angle_rad);
    auto rotz = [&](Vec3 v) { return Vec3{c * v.x - s * v.y, s * v.x + c * v.y, v.z}; };
    return centered_pose("custom", rotz({0, -1, 0}), rotz({1, 0, 0}), {0, 0, 1}, dims, spacing,
                         det);
}

DetectorSpec default_detector(Dims dims, Spacing spacing, int nu, int nv, const ViewPose& pose) {
    // Footprint of the volume box on the detector axes.
    Vec3 e = {dims.nx * spacing.sx, dims.ny * spacing.sy, dims.nz * spacing.sz};
    auto span = [&](Vec3 axis) {
        return std::abs(axis.x) * e.x + std::abs(axis.y) * e.y + std::abs(axis.z) * e.z;
    };
    DetectorSpec det;
    det.nu = nu;
    det.nv = nv;
    det.pitch_u = span(pose.detector_u_axis) / nu;
    det.pitch_v = span(pose.detector_v_axis) / nv;
    det.validate();
    return det;
}

DetectorSpec footprint_detector_pa(Dims dims, Spacing spacing, int nu, int nv) {
    DetectorSpec det;
    det.nu = nu;
    det.nv = nv;
    det.pitch_u = dims.nx * spacing.sx / nu;
    det.pitch_v = dims.nz * spacing.sz / nv;
    det.validate();
    return det;
}

DetectorSpec footprint_detector_lat(Dims dims, Spacing spacing, int nu, int nv) {
    DetectorSpec det;
    det.nu = nu;
    det.nv = nv;
    det.pitch_u = dims.ny * spacing.sy / nu;
    det.pitch_v = dims.nz * spacing.sz / nv;
    det.validate();
    return det;
}

}  // namespace spider
