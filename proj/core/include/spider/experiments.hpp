#pragma once

#include <string>
#include <vector>

#include "spider/metrics.hpp"
#include "spider/trainer.hpp"

namespace spider {

// One trained arm of an ablation: train on data.train, reconstruct every
// held-out subject at its native dims, aggregate metrics.
struct ArmMetrics {
    std::string arm;
    uint64_t seed = 0;
    double psnr = 0, ssim = 0, mean_dice = 0, mean_hd95 = 0, mean_chamfer = 0;
    std::vector<double> per_subject_psnr, per_subject_dice;
};

// Trains (or reuses a cached run from `out_dir`) and evaluates one arm.
// Artifacts land in `<out_dir>/<arm>_s<seed>/`: model.ckpt, runlog.csv,
// metrics.kv. A finished metrics.kv short-circuits the run.
ArmMetrics run_arm(const Dataset& data, const TrainConfig& cfg, const std::string& arm,
                   uint64_t seed, const std::string& out_dir, bool reuse_cached = true);

struct ExperimentConfig {
    TrainConfig base;
    int seeds = 3;
    uint64_t first_seed = 1;
    bool reuse_cached = true;
};

// Decoder-topology ablation: shared vs two_branch vs two_stage.
std::vector<ArmMetrics> run_decoder_ablation(const Dataset& data, const ExperimentConfig& exp,
                                             const std::string& out_dir);

// Incremental structural supervision: no segmentation loss, then class sets
// {1}, {1,2}, ..., {1..C} joined into the loss.
std::vector<ArmMetrics> run_structure_ablation(const Dataset& data, const ExperimentConfig& exp,
                                               const std::string& out_dir);

std::string ablation_csv(const std::vector<ArmMetrics>& arms);

double median(std::vector<double> values);

}  // namespace spider
