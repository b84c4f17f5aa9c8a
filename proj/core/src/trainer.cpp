#include "spider/trainer.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "spider/errors.hpp"

namespace spider {

Precision parse_precision(const std::string& s) {
    if (s == "f32") return Precision::f32;
    if (s == "f64") return Precision::f64;
    throw ConfigError("unknown precision '" + s + "' (expected f32|f64)");
}

std::string precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

void set_num_workers(int n) {
    if (n < 1) throw ConfigError("workers must be >= 1");
    omp_set_num_threads(n);
}

SubjectData load_subject(const std::string& dir, const std::string& id) {
    SubjectData s;
    s.id = id;
    s.volume = load_volume(dir + "/" + id + "_intensity.spvol");
    s.labels = load_labels(dir + "/" + id + "_labels.spvol");
    if (s.labels.dims != s.volume.dims)
        throw ValidationError(id + ": label grid dims do not match the volume");
    // Rebuild canonical poses from the stored volume geometry.
    Projection pa_probe = load_projection(dir + "/" + id + "_pa.spvol", ViewPose{});
    Projection lat_probe = load_projection(dir + "/" + id + "_lat.spvol", ViewPose{});
    s.drr_pa = pa_probe;
    s.drr_pa.pose = make_pa_pose(s.volume.dims, s.volume.spacing, pa_probe.detector);
    s.drr_lat = lat_probe;
    s.drr_lat.pose = make_lat_pose(s.volume.dims, s.volume.spacing, lat_probe.detector);
    return s;
}

Dataset load_dataset(const std::string& dir) {
    DatasetSplit split = DatasetSplit::load(dir + "/split.txt");
    Dataset ds;
    for (const auto& id : split.train) ds.train.push_back(load_subject(dir, id));
    for (const auto& id : split.val) ds.val.push_back(load_subject(dir, id));
    for (const auto& id : split.test) ds.test.push_back(load_subject(dir, id));
    int classes = 1;
    for (const auto* lst : {&ds.train, &ds.val, &ds.test})
        for (const auto& s : *lst) classes = std::max(classes, s.labels.class_count);
    for (auto* lst : {&ds.train, &ds.val, &ds.test})
        for (auto& s : *lst) s.labels.class_count = classes;
    return ds;
}

KvMap TrainConfig::to_kv() const {
    KvMap kv = model.to_kv();
    kv.set("train.lambda_int", format_double(lambda_int));
    kv.set("train.lambda_seg", format_double(lambda_seg));
    kv.set("train.epochs", std::to_string(epochs));
    kv.set("train.points_per_step", std::to_string(points_per_step));
    kv.set("train.seed", std::to_string(seed));
    kv.set("train.dice_epsilon", format_double(dice_epsilon));
    kv.set("train.precision", precision_name(precision));
    kv.set("train.base_lr", format_double(sgd.base_lr));
    kv.set("train.decay_factor", format_double(sgd.decay_factor));
    kv.set("train.decay_every", std::to_string(sgd.decay_every));
    kv.set("train.freeze_encoder", freeze.freeze_encoder ? "1" : "0");
    kv.set("train.freeze_decoder", freeze.freeze_decoder ? "1" : "0");
    kv.set("train.freeze_hash", freeze.freeze_hash ? "1" : "0");
    kv.set("train.intensity_only", freeze.intensity_only ? "1" : "0");
    std::string inc;
    for (size_t i = 0; i < classes_included.size(); ++i) {
        if (i) inc += ' ';
        inc += std::to_string(classes_included[i]);
    }
    kv.set("train.classes_included", inc);
    kv.set("train.sampling",
           sampling == SampleMode::uniform ? "uniform" : "class_balanced");
    kv.set("train.val_points", std::to_string(val_points));
    kv.set("train.workers", std::to_string(workers));
    return kv;
}

std::string RunLog::csv() const {
    std::string out = "epoch,lr,train_total,train_int,train_seg,val_int,val_seg\n";
    for (const EpochLog& e : epochs) {
        out += std::to_string(e.epoch) + "," + format_double(e.lr) + "," +
               format_double(e.train_total) + "," + format_double(e.train_int) + "," +
               format_double(e.train_seg) + ",";
        out += e.val_int < 0 ? "" : format_double(e.val_int);
        out += ",";
        out += e.val_seg < 0 ? "" : format_double(e.val_seg);
        out += "\n";
    }
    return out;
}

void RunLog::save_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << csv();
}

void RunLog::save_timing_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << "epoch,wall_ms\n";
    for (const EpochLog& e : epochs)
        f << e.epoch << "," << format_double(e.wall_ms) << "\n";
}

void RunLog::save_config(const std::string& path) const { config_echo.save(path); }

namespace {

struct SubjectPrep {
    const SubjectData* subject = nullptr;
    std::vector<int> labels;  // after classes_included remap
    std::vector<std::vector<size_t>> class_voxels;
};

template <typename T>
struct PrepT {
    std::vector<T> drr_pa, drr_lat;
};

std::vector<int> remap_labels(const LabelGrid& grid, const std::vector<int>& included) {
    std::vector<int> out(grid.labels.size());
    if (included.empty()) {
        for (size_t i = 0; i < out.size(); ++i) out[i] = grid.labels[i];
        return out;
    }
    std::vector<char> keep(size_t(grid.class_count) + 1, 0);
    keep[0] = 1;
    for (int c : included) {
        if (c < 1 || c > grid.class_count)
            throw ConfigError("classes_included: class " + std::to_string(c) + " out of range");
        keep[size_t(c)] = 1;
    }
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = keep[grid.labels[i]] ? grid.labels[i] : 0;
    return out;
}

template <typename T>
TrainResult train_impl(const Dataset& data, const TrainConfig& cfg, const CheckpointData* init) {
    set_num_workers(cfg.workers);
    if (data.train.empty()) throw ConfigError("train: no training subjects");
    const int C = cfg.model.decoder.num_classes;
    for (const SubjectData& s : data.train) {
        if (s.labels.class_count + 1 != C)
            throw ConfigError("train: phantom has " + std::to_string(s.labels.class_count) +
                              " structural classes but the decoder expects " +
                              std::to_string(C - 1) + " (plus background)");
        if (s.volume.dims != cfg.model.vol_dims)
            throw ConfigError("train: subject " + s.id + " dims do not match model config");
    }

    FieldModel<T> model(cfg.model, cfg.seed);
    if (init) model.params.load(*init);

    std::vector<SubjectPrep> preps;
    std::vector<PrepT<T>> tprep;
    auto prep_subject = [&](const SubjectData& s) {
        SubjectPrep p;
        p.subject = &s;
        p.labels = remap_labels(s.labels, cfg.classes_included);
        if (cfg.sampling == SampleMode::class_balanced) {
            p.class_voxels.resize(size_t(C));
            for (size_t v = 0; v < p.labels.size(); ++v)
                p.class_voxels[size_t(p.labels[v])].push_back(v);
        }
        preps.push_back(std::move(p));
        PrepT<T> tp;
        std::vector<float> na = normalize_drr(s.drr_pa), nb = normalize_drr(s.drr_lat);
        tp.drr_pa.assign(na.begin(), na.end());
        tp.drr_lat.assign(nb.begin(), nb.end());
        tprep.push_back(std::move(tp));
    };
    for (const SubjectData& s : data.train) prep_subject(s);
    const size_t n_train = data.train.size();
    for (const SubjectData& s : data.val) prep_subject(s);

    Rng rng(mix_seed(cfg.seed, 0x51a111));
    Rng val_rng(mix_seed(cfg.seed, 0xa11da7));
    // Fixed validation point sets.
    std::vector<std::vector<size_t>> val_pts(data.val.size());
    for (size_t v = 0; v < data.val.size(); ++v) {
        const size_t count = data.val[v].volume.values.size();
        for (int i = 0; i < cfg.val_points; ++i) val_pts[v].push_back(val_rng.index(count));
    }

    const double lam_seg = cfg.freeze.intensity_only ? 0.0 : cfg.lambda_seg;
    auto frozen = [&](const std::string& name) { return cfg.freeze.frozen(name); };

    struct StepLosses {
        double total, l_int, l_seg;
    };
    auto run_step = [&](size_t prep_idx, const std::vector<size_t>& voxel_ids, bool update)
        -> StepLosses {
        const SubjectPrep& p = preps[prep_idx];
        const PrepT<T>& tp = tprep[prep_idx];
        const VoxelGrid& vol = p.subject->volume;
        const size_t B = voxel_ids.size();
        std::vector<Vec3> pts(B);
        std::vector<T> target_i(B);
        std::vector<int> target_c(B);
        for (size_t i = 0; i < B; ++i) {
            auto c = vol.coords(voxel_ids[i]);
            pts[i] = normalized_coord(c[0], c[1], c[2], vol.dims);
            target_i[i] = T(vol.values[voxel_ids[i]]);
            target_c[i] = p.labels[voxel_ids[i]];
        }
        Tape<T> tape;
        if (!update) tape.set_grad_enabled(false);
        auto out = model.forward(tape, tp.drr_pa, tp.drr_lat, pts);
        Var<T> ti = tape.constant(Shape{int(B), 1}, target_i.data());
        Var<T> l_int = loss_intensity(out.intensity, ti);
        Var<T> probs = softmax_rows(out.logits);
        Var<T> onehot = tape.constant(Shape{int(B), C}, one_hot<T>(target_c, C));
        Var<T> l_seg = loss_dice(probs, onehot, cfg.dice_epsilon);
        Var<T> total = loss_total(l_int, l_seg, cfg.lambda_int, lam_seg);
        if (update) tape.backward(total);
        return {double(total.value()[0]), double(l_int.value()[0]), double(l_seg.value()[0])};
    };

    RunLog log;
    log.config_echo = cfg.to_kv();

    std::vector<size_t> order(n_train);
    for (size_t i = 0; i < n_train; ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = effective_lr(cfg.sgd, epoch);
        rng.shuffle(order);
        double acc_total = 0, acc_int = 0, acc_seg = 0;
        for (size_t s : order) {
            const size_t count = preps[s].subject->volume.values.size();
            std::vector<size_t> ids(size_t(cfg.points_per_step));
            if (cfg.sampling == SampleMode::uniform) {
                for (auto& id : ids) id = rng.index(count);
            } else {
                for (size_t i = 0; i < ids.size(); ++i) {
                    const auto& bucket = preps[s].class_voxels[i % size_t(C)];
                    ids[i] = bucket.empty() ? rng.index(count)
                                            : bucket[rng.index(bucket.size())];
                }
            }
            StepLosses sl = run_step(s, ids, true);
            sgd_step(model.params, lr, frozen);
            model.params.zero_grad();
            acc_total += sl.total;
            acc_int += sl.l_int;
            acc_seg += sl.l_seg;
        }
        EpochLog el;
        el.epoch = epoch;
        el.lr = lr;
        el.train_total = acc_total / double(n_train);
        el.train_int = acc_int / double(n_train);
        el.train_seg = acc_seg / double(n_train);
        if (!data.val.empty()) {
            double vi = 0, vs = 0;
            for (size_t v = 0; v < data.val.size(); ++v) {
                StepLosses sl = run_step(n_train + v, val_pts[v], false);
                vi += sl.l_int;
                vs += sl.l_seg;
            }
            el.val_int = vi / double(data.val.size());
            el.val_seg = vs / double(data.val.size());
        }
        el.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                               t0)
                         .count();
        log.epochs.push_back(el);
    }

    TrainResult res;
    res.checkpoint = model.params.to_checkpoint();
    res.checkpoint.config = cfg.model.to_kv();
    res.log = std::move(log);
    return res;
}

template <typename T>
std::pair<VoxelGrid, LabelGrid> reconstruct_impl(const CheckpointData& ckpt,
                                                 const Projection& drr_pa,
                                                 const Projection& drr_lat, Dims out_dims,
                                                 uint64_t seed) {
    ModelConfig mc = ModelConfig::from_kv(ckpt.config);
    if (drr_pa.detector.nu != mc.drr_nu || drr_pa.detector.nv != mc.drr_nv ||
        drr_lat.detector.nu != mc.drr_nu || drr_lat.detector.nv != mc.drr_nv)
        throw ConfigError("reconstruct: projection resolution does not match the checkpoint");
    FieldModel<T> model(mc, seed);
    model.params.load(ckpt);
    std::vector<float> na = normalize_drr(drr_pa), nb = normalize_drr(drr_lat);
    std::vector<T> ta(na.begin(), na.end()), tb(nb.begin(), nb.end());
    // Keep the physical extent of the training volume.
    Vec3 extent = {mc.vol_dims.nx * mc.vol_spacing.sx, mc.vol_dims.ny * mc.vol_spacing.sy,
                   mc.vol_dims.nz * mc.vol_spacing.sz};
    Spacing sp = {extent.x / out_dims.nx, extent.y / out_dims.ny, extent.z / out_dims.nz};
    return model.reconstruct(ta, tb, out_dims, sp);
}

template <typename T>
double eval_loss_impl(const CheckpointData& ckpt, const SubjectData& subject) {
    ModelConfig mc = ModelConfig::from_kv(ckpt.config);
    FieldModel<T> model(mc, 0);
    model.params.load(ckpt);
    std::vector<float> na = normalize_drr(subject.drr_pa), nb = normalize_drr(subject.drr_lat);
    std::vector<T> ta(na.begin(), na.end()), tb(nb.begin(), nb.end());

    Tape<T> enc_tape;
    enc_tape.set_grad_enabled(false);
    Var<T> fpa = model.encoder.encode(enc_tape, model.image_leaf(enc_tape, ta));
    Var<T> flat = model.encoder.encode(enc_tape, model.image_leaf(enc_tape, tb));
    const Shape fshape = fpa.shape();
    std::vector<T> fpa_v = fpa.value(), flat_v = flat.value();

    const VoxelGrid& vol = subject.volume;
    const size_t n = vol.values.size();
    double acc = 0;
    size_t done = 0;
    while (done < n) {
        const size_t m = std::min<size_t>(8192, n - done);
        std::vector<Vec3> pts(m);
        for (size_t i = 0; i < m; ++i) {
            auto c = vol.coords(done + i);
            pts[i] = normalized_coord(c[0], c[1], c[2], vol.dims);
        }
        Tape<T> tape;
        tape.set_grad_enabled(false);
        Var<T> fa = tape.constant(fshape, fpa_v.data());
        Var<T> fl = tape.constant(fshape, flat_v.data());
        Var<T> f = model.sample_point_features(tape, fa, fl, pts);
        auto out = model.decoder.forward(tape, f);
        const auto& iv = out.intensity.value();
        for (size_t i = 0; i < m; ++i)
            acc += std::abs(double(iv[i]) - double(vol.values[done + i]));
        done += m;
    }
    return acc / double(n);
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& cfg, const CheckpointData* init) {
    return cfg.precision == Precision::f64 ? train_impl<double>(data, cfg, init)
                                           : train_impl<float>(data, cfg, init);
}

std::pair<VoxelGrid, LabelGrid> reconstruct_volume(const CheckpointData& ckpt,
                                                   const Projection& drr_pa,
                                                   const Projection& drr_lat, Dims out_dims,
                                                   Precision precision, int workers) {
    set_num_workers(workers);
    return precision == Precision::f64
               ? reconstruct_impl<double>(ckpt, drr_pa, drr_lat, out_dims, 0)
               : reconstruct_impl<float>(ckpt, drr_pa, drr_lat, out_dims, 0);
}

double eval_intensity_loss(const CheckpointData& ckpt, const SubjectData& subject,
                           Precision precision, int workers) {
    set_num_workers(workers);
    return precision == Precision::f64 ? eval_loss_impl<double>(ckpt, subject)
                                       : eval_loss_impl<float>(ckpt, subject);
}

TransferResult frozen_transfer(const CheckpointData& pretrained, const SubjectData& subject,
                               const std::string& freeze_what, int epochs, uint64_t seed,
                               Precision precision, int workers) {
    TrainConfig cfg;
    cfg.model = ModelConfig::from_kv(pretrained.config);
    if (subject.volume.dims != cfg.model.vol_dims)
        throw ConfigError("transfer: subject dims do not match the pretrained model");
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.precision = precision;
    cfg.workers = workers;
    cfg.freeze.intensity_only = true;
    if (freeze_what == "decoder")
        cfg.freeze.freeze_decoder = true;
    else if (freeze_what == "encoder")
        cfg.freeze.freeze_encoder = true;
    else
        throw ConfigError("transfer: freeze must be 'decoder' or 'encoder'");

    Dataset single;
    single.train.push_back(subject);
    TrainResult tr = train(single, cfg, &pretrained);

    TransferResult out;
    out.checkpoint = std::move(tr.checkpoint);
    out.log = std::move(tr.log);
    auto rec = reconstruct_volume(out.checkpoint, subject.drr_pa, subject.drr_lat,
                                  subject.volume.dims, precision, workers);
    out.intensity = std::move(rec.first);
    out.segmentation = std::move(rec.second);
    return out;
}

}  // namespace spider
