#pragma once

#include <string>
#include <vector>

#include "spider/volume.hpp"

namespace spider {

// 10*log10(range^2 / MSE); identical volumes return +infinity.
double psnr(const VoxelGrid& a, const VoxelGrid& b, double data_range = 1.0);

// Slice-wise (along z) SSIM with an 11x11 Gaussian window (sigma 1.5),
// K1 = 0.01, K2 = 0.03, reflect-padded filtering, window-cropped mean,
// averaged over slices. Slices smaller than the window shrink it (with a
// warning on stderr).
double ssim(const VoxelGrid& a, const VoxelGrid& b, double data_range = 1.0);

// 2|A∩B| / (|A|+|B|) for one class; both masks empty -> 1.0.
double dice_metric(const LabelGrid& pred, const LabelGrid& truth, int cls);

// Surface voxels: 6-connected boundary against the complement (the outside
// of the grid counts as complement). Distances are between voxel centers in
// mm. Empty-side sentinel: the grid diagonal.
std::vector<Vec3> boundary_voxels(const LabelGrid& grid, int cls);

// max of the two directed 95th-percentile nearest-neighbor distances.
double hd95(const LabelGrid& pred, const LabelGrid& truth, int cls);
// mean of the two directed mean nearest-neighbor distances.
double chamfer(const LabelGrid& pred, const LabelGrid& truth, int cls);

// Directed nearest-neighbor distances from each point of `from` to `to`.
std::vector<double> nn_distances(const std::vector<Vec3>& from, const std::vector<Vec3>& to);

struct MetricsReport {
    std::string subject, method;
    double psnr_db = 0;
    double ssim_val = 0;
    std::vector<double> dice_per_class;     // classes 1..C
    std::vector<double> hd95_per_class;     // mm
    std::vector<double> chamfer_per_class;  // mm
    double mean_dice = 0, mean_hd95 = 0, mean_chamfer = 0;

    static std::string csv_header();
    std::string csv_row() const;
};

MetricsReport evaluate_reconstruction(const VoxelGrid& pred_vol, const LabelGrid& pred_lab,
                                      const VoxelGrid& true_vol, const LabelGrid& true_lab);

}  // namespace spider
