#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spider/checkpoint.hpp"
#include "spider/field.hpp"
#include "spider/losses.hpp"
#include "spider/projector.hpp"

namespace spider {

enum class Precision { f32, f64 };
Precision parse_precision(const std::string& s);
std::string precision_name(Precision p);

struct SubjectData {
    std::string id;
    VoxelGrid volume;
    LabelGrid labels;
    Projection drr_pa, drr_lat;
};

struct Dataset {
    std::vector<SubjectData> train, val, test;
};

// Loads `<id>_intensity/_labels/_pa/_lat.spvol` for every id in split.txt.
Dataset load_dataset(const std::string& dir);
SubjectData load_subject(const std::string& dir, const std::string& id);

struct FreezeMask {
    bool freeze_encoder = false;
    bool freeze_decoder = false;
    bool freeze_hash = false;
    bool intensity_only = false;  // optimize only the intensity loss

    bool frozen(const std::string& param_name) const {
        if (freeze_encoder && param_name.rfind("encoder.", 0) == 0) return true;
        if (freeze_decoder && param_name.rfind("decoder.", 0) == 0) return true;
        if (freeze_hash && param_name.rfind("hash.", 0) == 0) return true;
        return false;
    }
};

enum class SampleMode { uniform, class_balanced };

struct TrainConfig {
    ModelConfig model;
    double lambda_int = 1.0;
    double lambda_seg = 0.3;
    int epochs = 500;
    int points_per_step = 4096;
    uint64_t seed = 0;
    double dice_epsilon = 1e-6;
    Precision precision = Precision::f32;
    SgdConfig sgd;
    FreezeMask freeze;
    std::vector<int> classes_included;  // empty = all structural classes
    SampleMode sampling = SampleMode::uniform;
    int val_points = 2048;
    int workers = 1;

    KvMap to_kv() const;
};

struct EpochLog {
    int epoch = 0;
    double lr = 0;
    double train_total = 0, train_int = 0, train_seg = 0;
    double val_int = -1, val_seg = -1;  // -1 when no validation set
    double wall_ms = 0;                 // excluded from the deterministic CSV
};

struct RunLog {
    KvMap config_echo;
    std::vector<EpochLog> epochs;

    std::string csv() const;  // deterministic fields only
    void save_csv(const std::string& path) const;
    void save_timing_csv(const std::string& path) const;
    void save_config(const std::string& path) const;
};

struct TrainResult {
    CheckpointData checkpoint;
    RunLog log;
};

// Full training loop. `init` (optional) warm-starts the parameters; the
// model architecture always comes from cfg.model.
TrainResult train(const Dataset& data, const TrainConfig& cfg,
                  const CheckpointData* init = nullptr);

// Dense field evaluation from a checkpoint (model config restored from the
// checkpoint sidecar).
std::pair<VoxelGrid, LabelGrid> reconstruct_volume(const CheckpointData& ckpt,
                                                   const Projection& drr_pa,
                                                   const Projection& drr_lat, Dims out_dims,
                                                   Precision precision, int workers = 1);

// Mean intensity loss of a checkpointed model over all voxels of a subject.
double eval_intensity_loss(const CheckpointData& ckpt, const SubjectData& subject,
                           Precision precision, int workers = 1);

struct TransferResult {
    LabelGrid segmentation;
    VoxelGrid intensity;
    CheckpointData checkpoint;
    RunLog log;
};

// Out-of-domain transfer: warm-start from `pretrained`, freeze the decoder
// (or the encoder for the comparison arm), fit only the intensity loss on
// the single new subject (its ground-truth volume is the target), and return
// the jointly emitted segmentation.
TransferResult frozen_transfer(const CheckpointData& pretrained, const SubjectData& subject,
                               const std::string& freeze_what, int epochs, uint64_t seed,
                               Precision precision, int workers = 1);

void set_num_workers(int n);

}  // namespace spider
