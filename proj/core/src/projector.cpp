#include "spider/projector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spider/errors.hpp"
#include "spider/phantom.hpp"

namespace spider {

void Projection::validate() const {
    pose.validate();
    detector.validate();
    if (log_values.size() != size_t(detector.nu) * detector.nv)
        throw ShapeError("projection value count does not match detector");
    for (double v : log_values)
        if (!std::isfinite(v)) throw ValidationError("non-finite projection value");
}

void traverse_ray(Vec3 p0, Vec3 dir, Dims dims, Spacing spacing,
                  const std::function<void(size_t, double)>& visit) {
    const double ex = dims.nx * spacing.sx;
    const double ey = dims.ny * spacing.sy;
    const double ez = dims.nz * spacing.sz;
    const double inf = std::numeric_limits<double>::infinity();

    // Entry/exit of the volume box along the ray.
    double tmin = -inf, tmax = inf;
    const double p[3] = {p0.x, p0.y, p0.z};
    const double d[3] = {dir.x, dir.y, dir.z};
    const double e[3] = {ex, ey, ez};
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-14) {
            if (p[a] < 0.0 || p[a] > e[a]) return;
        } else {
            double t0 = (0.0 - p[a]) / d[a];
            double t1 = (e[a] - p[a]) / d[a];
            if (t0 > t1) std::swap(t0, t1);
            tmin = std::max(tmin, t0);
            tmax = std::min(tmax, t1);
        }
    }
    if (!(tmax > tmin)) return;

    const double s[3] = {spacing.sx, spacing.sy, spacing.sz};
    const int n[3] = {dims.nx, dims.ny, dims.nz};
    int idx[3];
    double tnext[3], tdelta[3];
    int step[3];
    for (int a = 0; a < 3; ++a) {
        double pos = p[a] + tmin * d[a];
        int i = int(std::floor(pos / s[a]));
        if (i < 0) i = 0;
        if (i >= n[a]) i = n[a] - 1;
        idx[a] = i;
        if (d[a] > 1e-14) {
            step[a] = 1;
            tdelta[a] = s[a] / d[a];
            tnext[a] = ((i + 1) * s[a] - p[a]) / d[a];
        } else if (d[a] < -1e-14) {
            step[a] = -1;
            tdelta[a] = -s[a] / d[a];
            tnext[a] = (i * s[a] - p[a]) / d[a];
        } else {
            step[a] = 0;
            tdelta[a] = inf;
            tnext[a] = inf;
        }
    }

    double t = tmin;
    while (t < tmax - 1e-12) {
        double tn = std::min(std::min(tnext[0], tnext[1]), std::min(tnext[2], tmax));
        double len = tn - t;
        if (len > 0) {
            size_t flat = size_t(idx[0]) + size_t(n[0]) * (size_t(idx[1]) + size_t(n[1]) * idx[2]);
            visit(flat, len);
        }
        bool out = false;
        for (int a = 0; a < 3; ++a) {
            if (tnext[a] <= tn) {
                idx[a] += step[a];
                tnext[a] += tdelta[a];
                if (idx[a] < 0 || idx[a] >= n[a]) out = true;
            }
        }
        t = tn;
        if (out) break;
    }
}

Vec3 detector_pixel_center(const ViewPose& pose, const DetectorSpec& det, int iu, int iv) {
    return pose.detector_origin + (iu * det.pitch_u) * pose.detector_u_axis +
           (iv * det.pitch_v) * pose.detector_v_axis;
}

Projection project_parallel(const VoxelGrid& grid, const ViewPose& pose, const DetectorSpec& det) {
    pose.validate();
    det.validate();
    if (grid.values.size() != grid.dims.count()) throw ShapeError("grid value count mismatch");

    Projection proj;
    proj.pose = pose;
    proj.detector = det;
    proj.log_values.assign(size_t(det.nu) * det.nv, 0.0);

    const float* mu = grid.values.data();
    double* out = proj.log_values.data();
    const int nu = det.nu, nv = det.nv;

#pragma omp parallel for schedule(static)
    for (int iv = 0; iv < nv; ++iv) {
        for (int iu = 0; iu < nu; ++iu) {
            Vec3 p0 = detector_pixel_center(pose, det, iu, iv);
            double acc = 0.0;
            traverse_ray(p0, pose.ray_direction, grid.dims, grid.spacing,
                         [&](size_t vi, double len) { acc += double(mu[vi]) * len; });
            out[size_t(iu) + size_t(nu) * iv] = acc;
        }
    }
    return proj;
}

std::vector<double> attenuate(const Projection& p, double i0) {
    if (!(i0 > 0)) throw ValidationError("incident intensity must be positive");
    std::vector<double> out(p.log_values.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = i0 * std::exp(-p.log_values[i]);
    return out;
}

PixelCoord project_point(const ViewPose& pose, const DetectorSpec& det, Vec3 x_mm) {
    Vec3 d = x_mm - pose.detector_origin;
    return {dot(d, pose.detector_u_axis) / det.pitch_u, dot(d, pose.detector_v_axis) / det.pitch_v};
}

VolumeAccumulator backproject(const Projection& p, Dims dims, Spacing spacing) {
    p.pose.validate();
    p.detector.validate();
    if (p.log_values.size() != size_t(p.detector.nu) * p.detector.nv)
        throw GeometryError("projection/detector size mismatch");

    VolumeAccumulator acc;
    acc.dims = dims;
    acc.spacing = spacing;
    acc.values.assign(dims.count(), 0.0);

    // Serial scatter keeps the accumulation order fixed.
    for (int iv = 0; iv < p.detector.nv; ++iv) {
        for (int iu = 0; iu < p.detector.nu; ++iu) {
            double w = p.at(iu, iv);
            Vec3 p0 = detector_pixel_center(p.pose, p.detector, iu, iv);
            traverse_ray(p0, p.pose.ray_direction, dims, spacing,
                         [&](size_t vi, double len) { acc.values[vi] += w * len; });
        }
    }
    return acc;
}

namespace {

// Frequency-domain |w| filtering of each detector row, zero-padded to the
// next power of two >= 2*nu to avoid circular wrap.
std::vector<double> ramp_filter_rows(const std::vector<double>& img, int nu, int nv, double pitch) {
    int pad = 1;
    while (pad < 2 * nu) pad <<= 1;
    std::vector<double> fre(pad), fim(pad);
    std::vector<double> out(img.size());
    const double two_pi = 2.0 * 3.14159265358979323846;

    for (int row = 0; row < nv; ++row) {
        const double* src = img.data() + size_t(row) * nu;
        for (int k = 0; k < pad; ++k) {
            double sr = 0, si = 0;
            for (int t = 0; t < nu; ++t) {
                double ang = -two_pi * double(k) * double(t) / pad;
                sr += src[t] * std::cos(ang);
                si += src[t] * std::sin(ang);
            }
            double freq = double(std::min(k, pad - k)) / (double(pad) * pitch);
            fre[k] = sr * freq;
            fim[k] = si * freq;
        }
        for (int t = 0; t < nu; ++t) {
            double sr = 0;
            for (int k = 0; k < pad; ++k) {
                double ang = two_pi * double(k) * double(t) / pad;
                sr += fre[k] * std::cos(ang) - fim[k] * std::sin(ang);
            }
            out[size_t(row) * nu + t] = sr / pad;
        }
    }
    return out;
}

}  // namespace

VoxelGrid fbp_multi_view(const std::vector<Projection>& projections, Dims dims, Spacing spacing) {
    if (projections.empty()) throw GeometryError("fbp needs at least one projection");
    std::vector<double> recon(dims.count(), 0.0);
    const double view_weight = 3.14159265358979323846 / double(projections.size());

    for (const Projection& p : projections) {
        p.pose.validate();
        std::vector<double> filtered =
            ramp_filter_rows(p.log_values, p.detector.nu, p.detector.nv, p.detector.pitch_u);
        // Weighted backprojection with per-voxel footprint normalization:
        // value = (A^T q) / (A^T 1), the length-weighted mean of q over the
        // rays crossing each voxel.
        std::vector<double> num(dims.count(), 0.0), den(dims.count(), 0.0);
        for (int iv = 0; iv < p.detector.nv; ++iv) {
            for (int iu = 0; iu < p.detector.nu; ++iu) {
                double q = filtered[size_t(iu) + size_t(p.detector.nu) * iv];
                Vec3 p0 = detector_pixel_center(p.pose, p.detector, iu, iv);
                traverse_ray(p0, p.pose.ray_direction, dims, spacing, [&](size_t vi, double len) {
                    num[vi] += q * len;
                    den[vi] += len;
                });
            }
        }
        for (size_t i = 0; i < recon.size(); ++i)
            if (den[i] > 0) recon[i] += view_weight * num[i] / den[i];
    }

    VoxelGrid out(dims, spacing);
    for (size_t i = 0; i < recon.size(); ++i)
        out.values[i] = float(std::min(1.0, std::max(0.0, recon[i])));
    return out;
}

VoxelGrid fbp_two_view(const Projection& p_pa, const Projection& p_lat, Dims dims,
                       Spacing spacing) {
    if (std::abs(dot(p_pa.pose.ray_direction, p_lat.pose.ray_direction)) > 1e-9)
        throw GeometryError("fbp_two_view requires orthogonal poses");
    return fbp_multi_view({p_pa, p_lat}, dims, spacing);
}

NullSpaceWitness null_space_witness(Dims dims, Spacing spacing, const ViewPose& pose_a,
                                    const DetectorSpec& det_a, const ViewPose& pose_b,
                                    const DetectorSpec& det_b, uint64_t seed) {
    if (dims.nx > 6 || dims.ny > 6 || dims.nz > 6)
        throw ConfigError("null_space_witness: dims must be <= 6 per axis");
    const size_t n = dims.count();
    const size_t m = size_t(det_a.nu) * det_a.nv + size_t(det_b.nu) * det_b.nv;
    if (m >= n)
        throw ValidationError("null_space_witness: M >= N, no guaranteed null space");

    // Column-probe the combined operator with unit basis volumes.
    std::vector<std::vector<double>> rows(m, std::vector<double>(n, 0.0));
    VoxelGrid basis(dims, spacing);
    for (size_t col = 0; col < n; ++col) {
        std::fill(basis.values.begin(), basis.values.end(), 0.0f);
        basis.values[col] = 1.0f;
        Projection ya = project_parallel(basis, pose_a, det_a);
        Projection yb = project_parallel(basis, pose_b, det_b);
        for (size_t r = 0; r < ya.log_values.size(); ++r) rows[r][col] = ya.log_values[r];
        for (size_t r = 0; r < yb.log_values.size(); ++r)
            rows[ya.log_values.size() + r][col] = yb.log_values[r];
    }

    // Orthonormalize the rows (modified Gram-Schmidt), then remove the row
    // span from a random vector. Two passes keep the residual orthogonal to
    // working precision.
    std::vector<std::vector<double>> q;
    for (auto& row : rows) {
        std::vector<double> v = row;
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& u : q) {
                double c = 0;
                for (size_t i = 0; i < n; ++i) c += u[i] * v[i];
                for (size_t i = 0; i < n; ++i) v[i] -= c * u[i];
            }
        double nv = 0;
        for (double x : v) nv += x * x;
        nv = std::sqrt(nv);
        if (nv > 1e-10) {
            for (double& x : v) x /= nv;
            q.push_back(std::move(v));
        }
    }

    Rng rng(seed);
    std::vector<double> x(n), null_vec(n);
    for (size_t i = 0; i < n; ++i) x[i] = rng.uniform(0.3, 0.7);
    null_vec = x;
    for (int pass = 0; pass < 2; ++pass)
        for (const auto& u : q) {
            double c = 0;
            for (size_t i = 0; i < n; ++i) c += u[i] * null_vec[i];
            for (size_t i = 0; i < n; ++i) null_vec[i] -= c * u[i];
        }
    double maxabs = 0;
    for (double v : null_vec) maxabs = std::max(maxabs, std::abs(v));
    if (maxabs < 1e-9)
        throw ValidationError("null_space_witness: residual vanished, no witness found");
    const double target_amp = 0.25;
    for (double& v : null_vec) v *= target_amp / maxabs;

    NullSpaceWitness w;
    w.x = VoxelGrid(dims, spacing);
    w.x_prime = VoxelGrid(dims, spacing);
    for (size_t i = 0; i < n; ++i) {
        w.x.values[i] = float(x[i]);
        w.x_prime.values[i] = float(x[i] + null_vec[i]);
    }
    w.max_volume_diff = 0;
    for (size_t i = 0; i < n; ++i)
        w.max_volume_diff =
            std::max(w.max_volume_diff, std::abs(double(w.x.values[i]) - w.x_prime.values[i]));

    auto proj_diff = [&](const ViewPose& pose, const DetectorSpec& det) {
        Projection pa = project_parallel(w.x, pose, det);
        Projection pb = project_parallel(w.x_prime, pose, det);
        double md = 0;
        for (size_t i = 0; i < pa.log_values.size(); ++i)
            md = std::max(md, std::abs(pa.log_values[i] - pb.log_values[i]));
        return md;
    };
    w.max_projection_diff = std::max(proj_diff(pose_a, det_a), proj_diff(pose_b, det_b));
    return w;
}

std::vector<float> normalize_drr(const Projection& p) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : p.log_values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<float> out(p.log_values.size(), 0.0f);
    if (hi > lo)
        for (size_t i = 0; i < out.size(); ++i)
            out[i] = float((p.log_values[i] - lo) / (hi - lo));
    return out;
}

void save_projection(const std::string& path, const Projection& p) {
    VoxelGrid img;
    img.dims = {p.detector.nu, p.detector.nv, 1};
    img.spacing = {p.detector.pitch_u, p.detector.pitch_v, 1.0};
    img.values.resize(p.log_values.size());
    for (size_t i = 0; i < p.log_values.size(); ++i) img.values[i] = float(p.log_values[i]);
    save_volume(path, img);
}

Projection load_projection(const std::string& path, const ViewPose& pose) {
    VoxelGrid img = load_volume(path);
    if (img.dims.nz != 1) throw FormatError(path + ": projections must have nz = 1");
    Projection p;
    p.pose = pose;
    p.detector.nu = img.dims.nx;
    p.detector.nv = img.dims.ny;
    p.detector.pitch_u = img.spacing.sx;
    p.detector.pitch_v = img.spacing.sy;
    p.log_values.assign(img.values.begin(), img.values.end());
    return p;
}

}  // namespace spider
