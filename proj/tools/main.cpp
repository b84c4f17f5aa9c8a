// spider-recon: operator CLI for the biplanar X-ray reconstruction pipeline.
// Exit codes: 0 ok, 2 usage, 3 I/O, 4 config/validation.

#include <zlib.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "spider/experiments.hpp"
#include "spider/mesh.hpp"
#include "spider/metrics.hpp"
#include "spider/phantom.hpp"
#include "spider/png_io.hpp"
#include "spider/projector.hpp"
#include "spider/trainer.hpp"

namespace fs = std::filesystem;
using namespace spider;

namespace {

int run_args(std::vector<std::string> args);  // forward (replay recurses)

uint32_t file_crc32(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    uLong crc = crc32(0L, Z_NULL, 0);
    char buf[65536];
    while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
        crc = crc32(crc, reinterpret_cast<const Bytef*>(buf), uInt(f.gcount()));
        if (f.eof()) break;
    }
    return uint32_t(crc);
}

std::string crc_hex(uint32_t crc) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%08x", crc);
    return buf;
}

// Run manifest: command, argv, resolved config, input checksums. Written
// before any heavy work so a run can be replayed exactly.
struct Manifest {
    KvMap kv;
    int next_input = 0;
    int next_output = 0;
    std::string path;

    Manifest(const std::string& manifest_path, const std::string& command,
             const std::vector<std::string>& argv) {
        path = manifest_path;
        kv.set("command", command);
        for (size_t i = 0; i < argv.size(); ++i) kv.set("argv." + std::to_string(i), argv[i]);
    }
    void add_config(const KvMap& cfg) {
        for (const auto& k : cfg.keys()) kv.set("config." + k, cfg.get_string(k));
    }
    void add_input(const std::string& p) {
        kv.set("input." + std::to_string(next_input) + ".path", p);
        kv.set("input." + std::to_string(next_input) + ".crc32", crc_hex(file_crc32(p)));
        ++next_input;
    }
    void write() const { kv.save(path); }

    void note_output(KvMap& out_kv, const std::string& p) {
        out_kv.set("output." + std::to_string(next_output) + ".path", p);
        out_kv.set("output." + std::to_string(next_output) + ".crc32", crc_hex(file_crc32(p)));
        ++next_output;
    }
};

Dims parse_dims(const std::string& s) {
    int a = 0, b = 0, c = 0;
    if (std::sscanf(s.c_str(), "%dx%dx%d", &a, &b, &c) == 3) return {a, b, c};
    if (std::sscanf(s.c_str(), "%d", &a) == 1) return {a, a, a};
    throw ConfigError("cannot parse dims '" + s + "' (use N or NXxNYxNZ)");
}

std::pair<int, int> parse_geometry(const std::string& s) {
    int nu = 0, nv = 0;
    if (std::sscanf(s.c_str(), "%dx%d", &nu, &nv) == 2) return {nu, nv};
    if (std::sscanf(s.c_str(), "%d", &nu) == 1) return {nu, nu};
    throw ConfigError("cannot parse geometry '" + s + "' (use NUxNV)");
}

void save_mid_slices(const std::string& prefix, const VoxelGrid& g) {
    const Dims d = g.dims;
    std::vector<float> xy(size_t(d.nx) * d.ny), xz(size_t(d.nx) * d.nz),
        yz(size_t(d.ny) * d.nz);
    for (int j = 0; j < d.ny; ++j)
        for (int i = 0; i < d.nx; ++i) xy[size_t(i) + size_t(d.nx) * j] = g.at(i, j, d.nz / 2);
    for (int k = 0; k < d.nz; ++k)
        for (int i = 0; i < d.nx; ++i) xz[size_t(i) + size_t(d.nx) * k] = g.at(i, d.ny / 2, k);
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j) yz[size_t(j) + size_t(d.ny) * k] = g.at(d.nx / 2, j, k);
    save_png_gray8(prefix + "_mid_xy.png", d.nx, d.ny, gray8_minmax(xy));
    save_png_gray8(prefix + "_mid_xz.png", d.nx, d.nz, gray8_minmax(xz));
    save_png_gray8(prefix + "_mid_yz.png", d.ny, d.nz, gray8_minmax(yz));
}

std::vector<int> parse_class_list(const std::string& s) {
    std::vector<int> out;
    std::string cur;
    for (char c : s + ",") {
        if (c == ',' || c == ' ') {
            if (!cur.empty()) out.push_back(std::stoi(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    return out;
}

// Shared knobs for train-like commands, with `flag > config file > default`
// precedence.
struct TrainOpts {
    std::string config_path;
    double lambda_int = 1.0, lambda_seg = 0.3;
    int epochs = 500, points = 4096, val_points = 2048;
    uint64_t seed = 0;
    double lr = 1e-3, decay_factor = 0.5;
    int decay_every = 100;
    std::string decoder = "shared", freeze = "none", precision = "f32", classes_included;
    std::string sampling = "uniform";
    int workers = 1;

    CLI::Option *o_lambda_int = nullptr, *o_lambda_seg = nullptr, *o_epochs = nullptr,
                *o_points = nullptr, *o_val_points = nullptr, *o_seed = nullptr, *o_lr = nullptr,
                *o_decay_factor = nullptr, *o_decay_every = nullptr, *o_decoder = nullptr,
                *o_freeze = nullptr, *o_precision = nullptr, *o_classes = nullptr,
                *o_sampling = nullptr, *o_workers = nullptr;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key = value config file");
        o_lambda_int = cmd->add_option("--lambda-int", lambda_int, "intensity loss weight");
        o_lambda_seg = cmd->add_option("--lambda-seg", lambda_seg, "segmentation loss weight");
        o_epochs = cmd->add_option("--epochs", epochs, "training epochs");
        o_points = cmd->add_option("--points", points, "points per step");
        o_val_points = cmd->add_option("--val-points", val_points, "validation points");
        o_seed = cmd->add_option("--seed", seed, "RNG seed");
        o_lr = cmd->add_option("--lr", lr, "base learning rate");
        o_decay_factor = cmd->add_option("--lr-decay", decay_factor, "lr decay factor");
        o_decay_every = cmd->add_option("--lr-decay-every", decay_every, "epochs per decay");
        o_decoder = cmd->add_option("--decoder", decoder, "shared|two_branch|two_stage");
        o_freeze = cmd->add_option("--freeze", freeze, "encoder|decoder|none");
        o_precision = cmd->add_option("--precision", precision, "f32|f64");
        o_classes = cmd->add_option("--classes-included", classes_included,
                                    "comma list; other classes map to background in the loss");
        o_sampling = cmd->add_option("--sampling", sampling, "uniform|class_balanced");
        o_workers = cmd->add_option("--workers", workers, "worker thread cap");
    }

    // Apply config-file values for options not set on the command line.
    void resolve() {
        if (config_path.empty()) return;
        KvMap kv = KvMap::load(config_path);
        auto num = [&](CLI::Option* o, const char* key, double& tgt) {
            if (!o->count() && kv.has(key)) tgt = kv.get_double(key);
        };
        auto inum = [&](CLI::Option* o, const char* key, int& tgt) {
            if (!o->count() && kv.has(key)) tgt = int(kv.get_int(key));
        };
        auto str = [&](CLI::Option* o, const char* key, std::string& tgt) {
            if (!o->count() && kv.has(key)) tgt = kv.get_string(key);
        };
        num(o_lambda_int, "lambda-int", lambda_int);
        num(o_lambda_seg, "lambda-seg", lambda_seg);
        inum(o_epochs, "epochs", epochs);
        inum(o_points, "points", points);
        inum(o_val_points, "val-points", val_points);
        if (!o_seed->count() && kv.has("seed")) seed = uint64_t(kv.get_int("seed"));
        num(o_lr, "lr", lr);
        num(o_decay_factor, "lr-decay", decay_factor);
        inum(o_decay_every, "lr-decay-every", decay_every);
        str(o_decoder, "decoder", decoder);
        str(o_freeze, "freeze", freeze);
        str(o_precision, "precision", precision);
        str(o_classes, "classes-included", classes_included);
        str(o_sampling, "sampling", sampling);
        inum(o_workers, "workers", workers);
    }

    TrainConfig to_config(const Dataset& data) const {
        if (data.train.empty()) throw ConfigError("training set is empty");
        const SubjectData& first = data.train.front();
        TrainConfig cfg;
        cfg.model.vol_dims = first.volume.dims;
        cfg.model.vol_spacing = first.volume.spacing;
        cfg.model.drr_nu = first.drr_pa.detector.nu;
        cfg.model.drr_nv = first.drr_pa.detector.nv;
        cfg.model.decoder.num_classes = first.labels.class_count + 1;
        cfg.model.decoder.topology = parse_topology(decoder);
        cfg.lambda_int = lambda_int;
        cfg.lambda_seg = lambda_seg;
        cfg.epochs = epochs;
        cfg.points_per_step = points;
        cfg.val_points = val_points;
        cfg.seed = seed;
        cfg.sgd.base_lr = lr;
        cfg.sgd.decay_factor = decay_factor;
        cfg.sgd.decay_every = decay_every;
        cfg.precision = parse_precision(precision);
        cfg.workers = workers;
        if (freeze == "encoder")
            cfg.freeze.freeze_encoder = true;
        else if (freeze == "decoder")
            cfg.freeze.freeze_decoder = true;
        else if (freeze != "none")
            throw ConfigError("--freeze must be encoder|decoder|none");
        if (!classes_included.empty()) cfg.classes_included = parse_class_list(classes_included);
        if (sampling == "class_balanced")
            cfg.sampling = SampleMode::class_balanced;
        else if (sampling != "uniform")
            throw ConfigError("--sampling must be uniform|class_balanced");
        return cfg;
    }
};

std::string subject_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p%03d", i);
    return buf;
}

int cmd_phantom(const std::vector<std::string>& argv, const std::string& spec_path, int count,
                const std::string& dims_s, long long seed, const std::string& out, int val_count,
                int test_count) {
    fs::create_directories(out);
    Dims dims = parse_dims(dims_s);
    PhantomSpec spec = PhantomSpec::load(spec_path);

    if (val_count < 0 || test_count < 0) {
        int hold = count >= 6 ? std::max(1, count / 6) : 0;
        if (val_count < 0) val_count = hold;
        if (test_count < 0) test_count = hold;
    }
    if (val_count + test_count >= count && count > 0 && val_count + test_count > 0)
        throw ConfigError("val+test counts must leave at least one training subject");

    Manifest man(out + "/manifest.txt", "phantom", argv);
    man.add_input(spec_path);
    KvMap cfg;
    cfg.set("count", std::to_string(count));
    cfg.set("dims", std::to_string(dims.nx) + "x" + std::to_string(dims.ny) + "x" +
                        std::to_string(dims.nz));
    cfg.set("seed", std::to_string(seed));
    cfg.set("val", std::to_string(val_count));
    cfg.set("test", std::to_string(test_count));
    man.add_config(cfg);
    man.write();

    DatasetSplit split;
    split.master_seed = seed;
    KvMap outputs;
    for (int i = 0; i < count; ++i) {
        auto [vol, lab] = generate_phantom(spec, seed + i, dims);
        const std::string id = subject_name(i);
        save_volume(out + "/" + id + "_intensity.spvol", vol);
        save_volume(out + "/" + id + "_labels.spvol", lab);
        man.note_output(outputs, out + "/" + id + "_intensity.spvol");
        man.note_output(outputs, out + "/" + id + "_labels.spvol");
        if (i < count - val_count - test_count)
            split.train.push_back(id);
        else if (i < count - test_count)
            split.val.push_back(id);
        else
            split.test.push_back(id);
    }
    split.save(out + "/split.txt");
    spec.to_kv().save(out + "/phantom_spec.txt");
    man.note_output(outputs, out + "/split.txt");
    outputs.save(out + "/outputs.txt");
    std::printf("wrote %d phantom pairs to %s (train %zu / val %zu / test %zu)\n", count,
                out.c_str(), split.train.size(), split.val.size(), split.test.size());
    return 0;
}

int cmd_simulate(const std::vector<std::string>& argv, const std::string& volumes,
                 const std::string& geometry, std::string out) {
    if (out.empty()) out = volumes;
    fs::create_directories(out);
    auto [nu, nv] = parse_geometry(geometry);
    DatasetSplit split = DatasetSplit::load(volumes + "/split.txt");

    Manifest man(out + "/simulate_manifest.txt", "simulate", argv);
    man.add_input(volumes + "/split.txt");
    KvMap cfg;
    cfg.set("geometry", std::to_string(nu) + "x" + std::to_string(nv));
    man.add_config(cfg);
    man.write();

    KvMap outputs;
    std::vector<std::string> ids;
    for (const auto* lst : {&split.train, &split.val, &split.test})
        for (const auto& id : *lst) ids.push_back(id);
    for (const auto& id : ids) {
        VoxelGrid vol = load_volume(volumes + "/" + id + "_intensity.spvol");
        DetectorSpec det_pa = footprint_detector_pa(vol.dims, vol.spacing, nu, nv);
        DetectorSpec det_lat = footprint_detector_lat(vol.dims, vol.spacing, nu, nv);
        Projection pa = project_parallel(vol, make_pa_pose(vol.dims, vol.spacing, det_pa), det_pa);
        Projection lat =
            project_parallel(vol, make_lat_pose(vol.dims, vol.spacing, det_lat), det_lat);
        save_projection(out + "/" + id + "_pa.spvol", pa);
        save_projection(out + "/" + id + "_lat.spvol", lat);
        std::vector<float> na = normalize_drr(pa), nb = normalize_drr(lat);
        save_png_gray8(out + "/" + id + "_pa.png", nu, nv, gray8_minmax(na));
        save_png_gray8(out + "/" + id + "_lat.png", nu, nv, gray8_minmax(nb));
        man.note_output(outputs, out + "/" + id + "_pa.spvol");
        man.note_output(outputs, out + "/" + id + "_lat.spvol");
    }
    if (out != volumes) split.save(out + "/split.txt");
    outputs.save(out + "/simulate_outputs.txt");
    std::printf("simulated %zu subjects at %dx%d\n", ids.size(), nu, nv);
    return 0;
}

int cmd_train(const std::vector<std::string>& argv, const std::string& data,
              const std::string& out, TrainOpts& opts) {
    opts.resolve();
    Dataset ds = load_dataset(data);
    TrainConfig cfg = opts.to_config(ds);

    Manifest man(out + ".manifest", "train", argv);
    man.add_input(data + "/split.txt");
    for (const SubjectData& s : ds.train) man.add_input(data + "/" + s.id + "_intensity.spvol");
    man.add_config(cfg.to_kv());
    man.write();

    TrainResult tr = train(ds, cfg);
    save_checkpoint(out, tr.checkpoint);
    tr.log.save_csv(out + ".runlog.csv");
    tr.log.save_timing_csv(out + ".runlog.timing.csv");
    tr.log.save_config(out + ".runlog.config.txt");
    KvMap outputs;
    man.note_output(outputs, out);
    man.note_output(outputs, out + ".runlog.csv");
    outputs.save(out + ".outputs");
    const EpochLog& last = tr.log.epochs.back();
    std::printf("trained %d epochs; final train loss %.6f (int %.6f, seg %.6f)\n", cfg.epochs,
                last.train_total, last.train_int, last.train_seg);
    return 0;
}

int cmd_reconstruct(const std::vector<std::string>& argv, const std::string& ckpt_path,
                    const std::string& pa_path, const std::string& lat_path,
                    const std::string& dims_s, const std::string& out,
                    const std::string& precision, int workers) {
    Dims dims = parse_dims(dims_s);
    Manifest man(out + ".manifest", "reconstruct", argv);
    man.add_input(ckpt_path);
    man.add_input(pa_path);
    man.add_input(lat_path);
    man.write();

    CheckpointData ckpt = load_checkpoint(ckpt_path);
    ModelConfig mc = ModelConfig::from_kv(ckpt.config);
    Projection pa = load_projection(pa_path, ViewPose{});
    Projection lat = load_projection(lat_path, ViewPose{});
    pa.pose = make_pa_pose(mc.vol_dims, mc.vol_spacing, pa.detector);
    lat.pose = make_lat_pose(mc.vol_dims, mc.vol_spacing, lat.detector);
    auto [vol, lab] = reconstruct_volume(ckpt, pa, lat, dims, parse_precision(precision), workers);
    save_volume(out + "_intensity.spvol", vol);
    save_volume(out + "_labels.spvol", lab);
    save_mid_slices(out, vol);
    KvMap outputs;
    man.note_output(outputs, out + "_intensity.spvol");
    man.note_output(outputs, out + "_labels.spvol");
    outputs.save(out + ".outputs");
    std::printf("reconstructed %dx%dx%d volume -> %s_intensity.spvol\n", dims.nx, dims.ny,
                dims.nz, out.c_str());
    return 0;
}

int cmd_eval(const std::vector<std::string>& argv, const std::string& pred,
             const std::string& truth, const std::string& out, bool mesh) {
    Manifest man(out.empty() ? pred + ".eval.manifest" : out + ".manifest", "eval", argv);
    man.add_input(pred + "_intensity.spvol");
    man.add_input(truth + "_intensity.spvol");
    man.write();

    VoxelGrid pv = load_volume(pred + "_intensity.spvol");
    LabelGrid pl = load_labels(pred + "_labels.spvol");
    VoxelGrid tv = load_volume(truth + "_intensity.spvol");
    LabelGrid tl = load_labels(truth + "_labels.spvol");
    pl.class_count = tl.class_count = std::max(pl.class_count, tl.class_count);
    MetricsReport r = evaluate_reconstruction(pv, pl, tv, tl);
    r.subject = fs::path(pred).filename().string();
    r.method = "field";
    std::string csv = MetricsReport::csv_header() + "\n" + r.csv_row() + "\n";
    if (out.empty() || out == "-") {
        std::fputs(csv.c_str(), stdout);
    } else {
        std::ofstream f(out, std::ios::binary);
        if (!f) throw IoError("cannot write " + out);
        f << csv;
    }
    if (mesh) {
        for (int c = 1; c <= pl.class_count; ++c) {
            SurfaceMesh m = laplacian_smooth(marching_cubes_mask(pl, c));
            save_obj(pred + "_class" + std::to_string(c) + ".obj", m);
        }
    }
    return 0;
}

int cmd_fbp(const std::vector<std::string>& argv, const std::string& pa_path,
            const std::string& lat_path, const std::string& dims_s, const std::string& out) {
    Dims dims = parse_dims(dims_s);
    Manifest man(out + ".manifest", "baseline-fbp", argv);
    man.add_input(pa_path);
    man.add_input(lat_path);
    man.write();

    // Reconstruct into the physical extent implied by the detectors.
    Projection pa = load_projection(pa_path, ViewPose{});
    Projection lat = load_projection(lat_path, ViewPose{});
    Vec3 extent = {pa.detector.nu * pa.detector.pitch_u, lat.detector.nu * lat.detector.pitch_u,
                   pa.detector.nv * pa.detector.pitch_v};
    Spacing sp = {extent.x / dims.nx, extent.y / dims.ny, extent.z / dims.nz};
    pa.pose = make_pa_pose(dims, sp, pa.detector);
    lat.pose = make_lat_pose(dims, sp, lat.detector);
    VoxelGrid vol = fbp_two_view(pa, lat, dims, sp);
    save_volume(out + "_intensity.spvol", vol);
    save_mid_slices(out, vol);
    KvMap outputs;
    man.note_output(outputs, out + "_intensity.spvol");
    outputs.save(out + ".outputs");
    std::printf("fbp baseline -> %s_intensity.spvol\n", out.c_str());
    return 0;
}

int cmd_ablate(const std::vector<std::string>& argv, const std::string& which,
               const std::string& data, const std::string& out, TrainOpts& opts, int seeds,
               uint64_t first_seed) {
    opts.resolve();
    fs::create_directories(out);
    Dataset ds = load_dataset(data);
    ExperimentConfig exp;
    exp.base = opts.to_config(ds);
    exp.seeds = seeds;
    exp.first_seed = first_seed;

    Manifest man(out + "/manifest.txt", "ablate", argv);
    man.add_input(data + "/split.txt");
    KvMap cfg = exp.base.to_kv();
    cfg.set("ablate.which", which);
    cfg.set("ablate.seeds", std::to_string(seeds));
    cfg.set("ablate.first_seed", std::to_string(first_seed));
    man.add_config(cfg);
    man.write();

    std::vector<ArmMetrics> arms;
    if (which == "decoders")
        arms = run_decoder_ablation(ds, exp, out);
    else if (which == "structures")
        arms = run_structure_ablation(ds, exp, out);
    else
        throw ConfigError("ablate: expected 'decoders' or 'structures'");
    std::ofstream f(out + "/ablation.csv", std::ios::binary);
    if (!f) throw IoError("cannot write " + out + "/ablation.csv");
    f << ablation_csv(arms);
    std::printf("%s ablation finished; %zu arms -> %s/ablation.csv\n", which.c_str(), arms.size(),
                out.c_str());
    return 0;
}

int cmd_transfer(const std::vector<std::string>& argv, const std::string& ckpt_path,
                 const std::string& data, const std::string& subject_id,
                 const std::string& freeze, int epochs, uint64_t seed,
                 const std::string& precision, int workers, const std::string& out) {
    fs::create_directories(out);
    Manifest man(out + "/manifest.txt", "transfer", argv);
    man.add_input(ckpt_path);
    man.add_input(data + "/" + subject_id + "_intensity.spvol");
    KvMap cfg;
    cfg.set("freeze", freeze);
    cfg.set("epochs", std::to_string(epochs));
    cfg.set("seed", std::to_string(seed));
    cfg.set("precision", precision);
    man.add_config(cfg);
    man.write();

    CheckpointData ckpt = load_checkpoint(ckpt_path);
    SubjectData subject = load_subject(data, subject_id);
    TransferResult tr = frozen_transfer(ckpt, subject, freeze, epochs, seed,
                                        parse_precision(precision), workers);
    const std::string prefix = out + "/transfer_" + freeze;
    save_volume(prefix + "_intensity.spvol", tr.intensity);
    save_volume(prefix + "_labels.spvol", tr.segmentation);
    save_checkpoint(prefix + ".ckpt", tr.checkpoint);
    tr.log.save_csv(prefix + ".runlog.csv");

    LabelGrid truth = subject.labels;
    double mean_dice = 0;
    for (int c = 1; c <= truth.class_count; ++c)
        mean_dice += dice_metric(tr.segmentation, truth, c);
    mean_dice /= double(truth.class_count);
    KvMap result;
    result.set("freeze", freeze);
    result.set("mean_dice", format_double(mean_dice));
    result.save(prefix + ".metrics.kv");
    std::printf("transfer (freeze %s): mean dice %.4f -> %s_labels.spvol\n", freeze.c_str(),
                mean_dice, prefix.c_str());
    return 0;
}

int cmd_replay(const std::string& manifest_path) {
    KvMap man = KvMap::load(manifest_path);
    std::vector<std::string> args;
    for (int i = 0; man.has("argv." + std::to_string(i)); ++i)
        args.push_back(man.get_string("argv." + std::to_string(i)));
    if (args.empty()) throw ConfigError("manifest has no argv record");
    std::fprintf(stderr, "replaying: %s\n", args[0].c_str());
    return run_args(args);
}

int run_args(std::vector<std::string> argv_in) {
    CLI::App app{"biplanar X-ray volume reconstruction with joint intensity and "
                 "segmentation supervision"};
    app.require_subcommand(1);

    // phantom
    auto* c_ph = app.add_subcommand("phantom", "generate a procedural phantom population");
    std::string ph_spec, ph_dims = "64", ph_out;
    int ph_count = 1, ph_val = -1, ph_test = -1;
    long long ph_seed = 0;
    c_ph->add_option("--spec", ph_spec, "phantom spec file")->required();
    c_ph->add_option("--count", ph_count, "number of subjects")->required();
    c_ph->add_option("--dims", ph_dims, "grid dims (N or NXxNYxNZ)");
    c_ph->add_option("--seed", ph_seed, "master seed");
    c_ph->add_option("--val", ph_val, "validation subject count");
    c_ph->add_option("--test", ph_test, "test subject count");
    c_ph->add_option("--out", ph_out, "output directory")->required();

    // simulate
    auto* c_sim = app.add_subcommand("simulate", "simulate biplanar radiographs");
    std::string sim_vols, sim_geom = "128x128", sim_out;
    c_sim->add_option("--volumes", sim_vols, "phantom directory")->required();
    c_sim->add_option("--geometry", sim_geom, "detector pixels NUxNV");
    c_sim->add_option("--out", sim_out, "output directory (default: same as --volumes)");

    // train
    auto* c_tr = app.add_subcommand("train", "train the implicit field");
    std::string tr_data, tr_out;
    TrainOpts tr_opts;
    c_tr->add_option("--data", tr_data, "dataset directory")->required();
    c_tr->add_option("--out", tr_out, "checkpoint output path")->required();
    tr_opts.attach(c_tr);

    // reconstruct
    auto* c_rc = app.add_subcommand("reconstruct", "evaluate the field densely");
    std::string rc_ckpt, rc_pa, rc_lat, rc_dims = "64", rc_out, rc_prec = "f32";
    int rc_workers = 1;
    c_rc->add_option("--ckpt", rc_ckpt)->required();
    c_rc->add_option("--pa", rc_pa)->required();
    c_rc->add_option("--lat", rc_lat)->required();
    c_rc->add_option("--dims", rc_dims);
    c_rc->add_option("--out", rc_out, "output prefix")->required();
    c_rc->add_option("--precision", rc_prec);
    c_rc->add_option("--workers", rc_workers);

    // eval
    auto* c_ev = app.add_subcommand("eval", "quantitative metrics");
    std::string ev_pred, ev_truth, ev_out;
    bool ev_mesh = false;
    c_ev->add_option("--pred", ev_pred, "prediction prefix")->required();
    c_ev->add_option("--truth", ev_truth, "ground truth prefix")->required();
    c_ev->add_option("--out", ev_out, "CSV path (default stdout)");
    c_ev->add_flag("--mesh", ev_mesh, "emit smoothed per-class OBJ meshes");

    // baseline-fbp
    auto* c_fbp = app.add_subcommand("baseline-fbp", "two-view filtered backprojection");
    std::string fbp_pa, fbp_lat, fbp_dims = "64", fbp_out;
    c_fbp->add_option("--pa", fbp_pa)->required();
    c_fbp->add_option("--lat", fbp_lat)->required();
    c_fbp->add_option("--dims", fbp_dims);
    c_fbp->add_option("--out", fbp_out, "output prefix")->required();

    // ablate
    auto* c_ab = app.add_subcommand("ablate", "run an ablation suite");
    std::string ab_which, ab_data, ab_out;
    int ab_seeds = 3;
    uint64_t ab_first_seed = 1;
    TrainOpts ab_opts;
    c_ab->add_option("which", ab_which, "decoders|structures")->required();
    c_ab->add_option("--data", ab_data)->required();
    c_ab->add_option("--out", ab_out)->required();
    c_ab->add_option("--seeds", ab_seeds, "seeds per arm");
    c_ab->add_option("--first-seed", ab_first_seed);
    ab_opts.attach(c_ab);

    // transfer
    auto* c_tf = app.add_subcommand("transfer", "frozen-weight transfer to a new subject");
    std::string tf_ckpt, tf_data, tf_subject, tf_freeze = "decoder", tf_prec = "f64", tf_out;
    int tf_epochs = 300, tf_workers = 1;
    uint64_t tf_seed = 0;
    c_tf->add_option("--ckpt", tf_ckpt)->required();
    c_tf->add_option("--data", tf_data, "directory holding the out-of-domain subject")->required();
    c_tf->add_option("--subject", tf_subject)->required();
    c_tf->add_option("--freeze", tf_freeze, "decoder|encoder");
    c_tf->add_option("--epochs", tf_epochs);
    c_tf->add_option("--seed", tf_seed);
    c_tf->add_option("--precision", tf_prec);
    c_tf->add_option("--workers", tf_workers);
    c_tf->add_option("--out", tf_out)->required();

    // replay
    auto* c_rp = app.add_subcommand("replay", "re-execute a recorded run manifest");
    std::string rp_manifest;
    c_rp->add_option("manifest", rp_manifest)->required();

    std::vector<const char*> cargs;
    cargs.push_back("spider-recon");
    for (const auto& a : argv_in) cargs.push_back(a.c_str());
    try {
        app.parse(int(cargs.size()), cargs.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints message to stderr
        return 2;
    }

    try {
        if (c_ph->parsed())
            return cmd_phantom(argv_in, ph_spec, ph_count, ph_dims, ph_seed, ph_out, ph_val,
                               ph_test);
        if (c_sim->parsed()) return cmd_simulate(argv_in, sim_vols, sim_geom, sim_out);
        if (c_tr->parsed()) return cmd_train(argv_in, tr_data, tr_out, tr_opts);
        if (c_rc->parsed())
            return cmd_reconstruct(argv_in, rc_ckpt, rc_pa, rc_lat, rc_dims, rc_out, rc_prec,
                                   rc_workers);
        if (c_ev->parsed()) return cmd_eval(argv_in, ev_pred, ev_truth, ev_out, ev_mesh);
        if (c_fbp->parsed()) return cmd_fbp(argv_in, fbp_pa, fbp_lat, fbp_dims, fbp_out);
        if (c_ab->parsed())
            return cmd_ablate(argv_in, ab_which, ab_data, ab_out, ab_opts, ab_seeds,
                              ab_first_seed);
        if (c_tf->parsed())
            return cmd_transfer(argv_in, tf_ckpt, tf_data, tf_subject, tf_freeze, tf_epochs,
                                tf_seed, tf_prec, tf_workers, tf_out);
        if (c_rp->parsed()) return cmd_replay(rp_manifest);
    } catch (const IoError& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return 3;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 4;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.push_back(argv[i]);
    return run_args(std::move(args));
}
