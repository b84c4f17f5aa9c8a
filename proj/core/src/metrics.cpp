#include "spider/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "spider/errors.hpp"
#include "spider/kv.hpp"

namespace spider {

double psnr(const VoxelGrid& a, const VoxelGrid& b, double data_range) {
    if (a.dims != b.dims) throw ShapeError("psnr: dimension mismatch");
    if (!(data_range > 0)) throw ValidationError("psnr: data range must be positive");
    double mse = 0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        double d = double(a.values[i]) - double(b.values[i]);
        mse += d * d;
    }
    mse /= double(a.values.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(data_range * data_range / mse);
}

namespace {

// scipy-style 'reflect' boundary (edge sample repeated).
inline int reflect_index(int i, int n) {
    if (i < 0) return -i - 1;
    if (i >= n) return 2 * n - i - 1;
    return i;
}

// Separable Gaussian filtering of an nx-by-ny slice.
void gaussian_filter_2d(const std::vector<double>& in, std::vector<double>& out, int nx, int ny,
                        const std::vector<double>& kernel) {
    const int r = int(kernel.size() / 2);
    std::vector<double> tmp(in.size());
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            double acc = 0;
            for (int t = -r; t <= r; ++t)
                acc += kernel[size_t(t + r)] * in[size_t(reflect_index(i + t, nx)) + size_t(nx) * j];
            tmp[size_t(i) + size_t(nx) * j] = acc;
        }
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            double acc = 0;
            for (int t = -r; t <= r; ++t)
                acc += kernel[size_t(t + r)] * tmp[size_t(i) + size_t(nx) * reflect_index(j + t, ny)];
            out[size_t(i) + size_t(nx) * j] = acc;
        }
}

double ssim_slice(const std::vector<double>& x, const std::vector<double>& y, int nx, int ny,
                  int win, double sigma, double data_range) {
    const int r = (win - 1) / 2;
    std::vector<double> kernel(static_cast<size_t>(win), 0.0);
    double ksum = 0;
    for (int t = -r; t <= r; ++t) {
        kernel[size_t(t + r)] = std::exp(-0.5 * double(t) * t / (sigma * sigma));
        ksum += kernel[size_t(t + r)];
    }
    for (double& k : kernel) k /= ksum;

    const size_t n = x.size();
    std::vector<double> xx(n), yy(n), xy(n), ux(n), uy(n), uxx(n), uyy(n), uxy(n);
    for (size_t i = 0; i < n; ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    gaussian_filter_2d(x, ux, nx, ny, kernel);
    gaussian_filter_2d(y, uy, nx, ny, kernel);
    gaussian_filter_2d(xx, uxx, nx, ny, kernel);
    gaussian_filter_2d(yy, uyy, nx, ny, kernel);
    gaussian_filter_2d(xy, uxy, nx, ny, kernel);

    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);
    double acc = 0;
    size_t count = 0;
    for (int j = r; j < ny - r; ++j)
        for (int i = r; i < nx - r; ++i) {
            const size_t idx = size_t(i) + size_t(nx) * j;
            const double vx = uxx[idx] - ux[idx] * ux[idx];
            const double vy = uyy[idx] - uy[idx] * uy[idx];
            const double cxy = uxy[idx] - ux[idx] * uy[idx];
            const double s = ((2 * ux[idx] * uy[idx] + c1) * (2 * cxy + c2)) /
                             ((ux[idx] * ux[idx] + uy[idx] * uy[idx] + c1) * (vx + vy + c2));
            acc += s;
            ++count;
        }
    return count ? acc / double(count) : 1.0;
}

}  // namespace

double ssim(const VoxelGrid& a, const VoxelGrid& b, double data_range) {
    if (a.dims != b.dims) throw ShapeError("ssim: dimension mismatch");
    const int nx = a.dims.nx, ny = a.dims.ny, nz = a.dims.nz;
    int win = 11;
    if (std::min(nx, ny) < win) {
        win = std::min(nx, ny);
        if (win % 2 == 0) --win;
        std::fprintf(stderr, "ssim: window shrunk to %d for %dx%d slices\n", win, nx, ny);
    }
    const size_t slice = size_t(nx) * ny;
    std::vector<double> xs(slice), ys(slice);
    double acc = 0;
    for (int k = 0; k < nz; ++k) {
        for (size_t i = 0; i < slice; ++i) {
            xs[i] = double(a.values[size_t(k) * slice + i]);
            ys[i] = double(b.values[size_t(k) * slice + i]);
        }
        acc += ssim_slice(xs, ys, nx, ny, win, 1.5, data_range);
    }
    return acc / double(nz);
}

double dice_metric(const LabelGrid& pred, const LabelGrid& truth, int cls) {
    if (pred.dims != truth.dims) throw ShapeError("dice: dimension mismatch");
    size_t na = 0, nb = 0, inter = 0;
    for (size_t i = 0; i < pred.labels.size(); ++i) {
        const bool pa = pred.labels[i] == cls;
        const bool pb = truth.labels[i] == cls;
        na += pa;
        nb += pb;
        inter += pa && pb;
    }
    if (na + nb == 0) return 1.0;  // both empty: perfect agreement by convention
    return 2.0 * double(inter) / double(na + nb);
}

std::vector<Vec3> boundary_voxels(const LabelGrid& grid, int cls) {
    std::vector<Vec3> out;
    const Dims d = grid.dims;
    auto is_cls = [&](int i, int j, int k) {
        if (i < 0 || i >= d.nx || j < 0 || j >= d.ny || k < 0 || k >= d.nz) return false;
        return grid.at(i, j, k) == cls;
    };
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i) {
                if (!is_cls(i, j, k)) continue;
                if (!is_cls(i - 1, j, k) || !is_cls(i + 1, j, k) || !is_cls(i, j - 1, k) ||
                    !is_cls(i, j + 1, k) || !is_cls(i, j, k - 1) || !is_cls(i, j, k + 1)) {
                    out.push_back({(i + 0.5) * grid.spacing.sx, (j + 0.5) * grid.spacing.sy,
                                   (k + 0.5) * grid.spacing.sz});
                }
            }
    return out;
}

namespace {

// Minimal 3D kd-tree for nearest-neighbor queries.
class KdTree3 {
  public:
    explicit KdTree3(std::vector<Vec3> pts) : pts_(std::move(pts)) {
        idx_.resize(pts_.size());
        for (size_t i = 0; i < idx_.size(); ++i) idx_[i] = int(i);
        root_ = build(0, int(idx_.size()), 0);
    }

    double nearest_dist(Vec3 q) const {
        double best = std::numeric_limits<double>::infinity();
        search(root_, q, 0, best);
        return std::sqrt(best);
    }

  private:
    struct Node {
        int point = -1, left = -1, right = -1;
    };

    static double axis_val(Vec3 p, int a) { return a == 0 ? p.x : (a == 1 ? p.y : p.z); }

    int build(int lo, int hi, int depth) {
        if (lo >= hi) return -1;
        const int axis = depth % 3;
        const int mid = (lo + hi) / 2;
        std::nth_element(idx_.begin() + lo, idx_.begin() + mid, idx_.begin() + hi,
                         [&](int a, int b) {
                             return axis_val(pts_[size_t(a)], axis) <
                                    axis_val(pts_[size_t(b)], axis);
                         });
        Node n;
        n.point = idx_[size_t(mid)];
        const int self = int(nodes_.size());
        nodes_.push_back(n);
        nodes_[size_t(self)].left = build(lo, mid, depth + 1);
        nodes_[size_t(self)].right = build(mid + 1, hi, depth + 1);
        return self;
    }

    void search(int node, Vec3 q, int depth, double& best) const {
        if (node < 0) return;
        const Node& n = nodes_[size_t(node)];
        const Vec3 p = pts_[size_t(n.point)];
        const double d2 = dot(q - p, q - p);
        if (d2 < best) best = d2;
        const int axis = depth % 3;
        const double delta = axis_val(q, axis) - axis_val(p, axis);
        const int near = delta < 0 ? n.left : n.right;
        const int far = delta < 0 ? n.right : n.left;
        search(near, q, depth + 1, best);
        if (delta * delta < best) search(far, q, depth + 1, best);
    }

    std::vector<Vec3> pts_;
    std::vector<int> idx_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

double percentile95(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    // nearest-rank: ceil(0.95*n) - 1
    size_t idx = size_t(std::ceil(0.95 * double(v.size())));
    idx = std::min(v.size(), std::max<size_t>(1, idx)) - 1;
    return v[idx];
}

double grid_diagonal(const LabelGrid& g) {
    Vec3 e = {g.dims.nx * g.spacing.sx, g.dims.ny * g.spacing.sy, g.dims.nz * g.spacing.sz};
    return norm(e);
}

}  // namespace

std::vector<double> nn_distances(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    KdTree3 tree(to);
    std::vector<double> out(from.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < (long long)from.size(); ++i)
        out[size_t(i)] = tree.nearest_dist(from[size_t(i)]);
    return out;
}

double hd95(const LabelGrid& pred, const LabelGrid& truth, int cls) {
    if (pred.dims != truth.dims) throw ShapeError("hd95: dimension mismatch");
    auto sa = boundary_voxels(pred, cls);
    auto sb = boundary_voxels(truth, cls);
    if (sa.empty() && sb.empty())
        std::fprintf(stderr, "hd95: class %d empty in both grids, returning diagonal\n", cls);
    if (sa.empty() || sb.empty()) return grid_diagonal(pred);
    return std::max(percentile95(nn_distances(sa, sb)), percentile95(nn_distances(sb, sa)));
}

double chamfer(const LabelGrid& pred, const LabelGrid& truth, int cls) {
    if (pred.dims != truth.dims) throw ShapeError("chamfer: dimension mismatch");
    auto sa = boundary_voxels(pred, cls);
    auto sb = boundary_voxels(truth, cls);
    if (sa.empty() && sb.empty())
        std::fprintf(stderr, "chamfer: class %d empty in both grids, returning diagonal\n", cls);
    if (sa.empty() || sb.empty()) return grid_diagonal(pred);
    auto mean_of = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return s / double(v.size());
    };
    return 0.5 * (mean_of(nn_distances(sa, sb)) + mean_of(nn_distances(sb, sa)));
}

std::string MetricsReport::csv_header() {
    return "subject,method,psnr_db,ssim,mean_dice,mean_hd95_mm,mean_chamfer_mm,per_class_dice,"
           "per_class_hd95_mm,per_class_chamfer_mm";
}

namespace {
std::string join_semi(const std::vector<double>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ';';
        out += format_double(v[i]);
    }
    return out;
}
}  // namespace

std::string MetricsReport::csv_row() const {
    std::string out = subject + "," + method + "," + format_double(psnr_db) + "," +
                      format_double(ssim_val) + "," + format_double(mean_dice) + "," +
                      format_double(mean_hd95) + "," + format_double(mean_chamfer) + "," +
                      join_semi(dice_per_class) + "," + join_semi(hd95_per_class) + "," +
                      join_semi(chamfer_per_class);
    return out;
}

MetricsReport evaluate_reconstruction(const VoxelGrid& pred_vol, const LabelGrid& pred_lab,
                                      const VoxelGrid& true_vol, const LabelGrid& true_lab) {
    MetricsReport r;
    r.psnr_db = psnr(pred_vol, true_vol);
    r.ssim_val = ssim(pred_vol, true_vol);
    const int classes = true_lab.class_count;
    for (int c = 1; c <= classes; ++c) {
        r.dice_per_class.push_back(dice_metric(pred_lab, true_lab, c));
        r.hd95_per_class.push_back(hd95(pred_lab, true_lab, c));
        r.chamfer_per_class.push_back(chamfer(pred_lab, true_lab, c));
    }
    auto mean_of = [](const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        double s = 0;
        for (double x : v) s += x;
        return s / double(v.size());
    };
    r.mean_dice = mean_of(r.dice_per_class);
    r.mean_hd95 = mean_of(r.hd95_per_class);
    r.mean_chamfer = mean_of(r.chamfer_per_class);
    return r;
}

}  // namespace spider
