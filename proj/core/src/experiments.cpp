#include "spider/experiments.hpp"

#include <algorithm>
#include <filesystem>

#include "spider/errors.hpp"

namespace spider {

namespace fs = std::filesystem;

double median(std::vector<double> values) {
    if (values.empty()) throw ValidationError("median of empty list");
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
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

std::vector<double> split_semi(const std::string& s) {
    std::vector<double> out;
    std::string cur;
    for (char c : s + ";") {
        if (c == ';') {
            if (!cur.empty()) out.push_back(std::stod(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    return out;
}

}  // namespace

ArmMetrics run_arm(const Dataset& data, const TrainConfig& cfg, const std::string& arm,
                   uint64_t seed, const std::string& out_dir, bool reuse_cached) {
    const std::string dir = out_dir + "/" + arm + "_s" + std::to_string(seed);
    fs::create_directories(dir);
    const std::string metrics_path = dir + "/metrics.kv";

    if (reuse_cached && fs::exists(metrics_path)) {
        KvMap kv = KvMap::load(metrics_path);
        ArmMetrics m;
        m.arm = arm;
        m.seed = seed;
        m.psnr = kv.get_double("psnr");
        m.ssim = kv.get_double("ssim");
        m.mean_dice = kv.get_double("mean_dice");
        m.mean_hd95 = kv.get_double("mean_hd95");
        m.mean_chamfer = kv.get_double("mean_chamfer");
        m.per_subject_psnr = split_semi(kv.get_string("per_subject_psnr"));
        m.per_subject_dice = split_semi(kv.get_string("per_subject_dice"));
        return m;
    }

    TrainConfig run_cfg = cfg;
    run_cfg.seed = seed;
    TrainResult tr = train(data, run_cfg);
    save_checkpoint(dir + "/model.ckpt", tr.checkpoint);
    tr.log.save_csv(dir + "/runlog.csv");
    tr.log.save_timing_csv(dir + "/runlog.timing.csv");
    tr.log.save_config(dir + "/runlog.config.txt");

    ArmMetrics m;
    m.arm = arm;
    m.seed = seed;
    double ssim_acc = 0, hd_acc = 0, cd_acc = 0;
    for (const SubjectData& s : data.test) {
        auto rec = reconstruct_volume(tr.checkpoint, s.drr_pa, s.drr_lat, s.volume.dims,
                                      run_cfg.precision, run_cfg.workers);
        MetricsReport r = evaluate_reconstruction(rec.first, rec.second, s.volume, s.labels);
        m.per_subject_psnr.push_back(r.psnr_db);
        m.per_subject_dice.push_back(r.mean_dice);
        ssim_acc += r.ssim_val;
        hd_acc += r.mean_hd95;
        cd_acc += r.mean_chamfer;
    }
    const double nt = double(std::max<size_t>(1, data.test.size()));
    for (double v : m.per_subject_psnr) m.psnr += v;
    for (double v : m.per_subject_dice) m.mean_dice += v;
    m.psnr /= nt;
    m.mean_dice /= nt;
    m.ssim = ssim_acc / nt;
    m.mean_hd95 = hd_acc / nt;
    m.mean_chamfer = cd_acc / nt;

    KvMap kv;
    kv.set("arm", arm);
    kv.set("seed", std::to_string(seed));
    kv.set("psnr", format_double(m.psnr));
    kv.set("ssim", format_double(m.ssim));
    kv.set("mean_dice", format_double(m.mean_dice));
    kv.set("mean_hd95", format_double(m.mean_hd95));
    kv.set("mean_chamfer", format_double(m.mean_chamfer));
    kv.set("per_subject_psnr", join_semi(m.per_subject_psnr));
    kv.set("per_subject_dice", join_semi(m.per_subject_dice));
    kv.save(metrics_path);
    return m;
}

std::vector<ArmMetrics> run_decoder_ablation(const Dataset& data, const ExperimentConfig& exp,
                                             const std::string& out_dir) {
    std::vector<ArmMetrics> out;
    for (DecoderTopology topo :
         {DecoderTopology::shared, DecoderTopology::two_branch, DecoderTopology::two_stage}) {
        TrainConfig cfg = exp.base;
        cfg.model.decoder.topology = topo;
        for (int s = 0; s < exp.seeds; ++s)
            out.push_back(run_arm(data, cfg, topology_name(topo), exp.first_seed + uint64_t(s),
                                  out_dir, exp.reuse_cached));
    }
    return out;
}

std::vector<ArmMetrics> run_structure_ablation(const Dataset& data, const ExperimentConfig& exp,
                                               const std::string& out_dir) {
    std::vector<ArmMetrics> out;
    const int structural = exp.base.model.decoder.num_classes - 1;
    for (int upto = 0; upto <= structural; ++upto) {
        TrainConfig cfg = exp.base;
        std::string arm;
        if (upto == 0) {
            cfg.lambda_seg = 0.0;
            arm = "no_seg";
        } else {
            cfg.classes_included.clear();
            for (int c = 1; c <= upto; ++c) cfg.classes_included.push_back(c);
            arm = "seg_1to" + std::to_string(upto);
        }
        for (int s = 0; s < exp.seeds; ++s)
            out.push_back(
                run_arm(data, cfg, arm, exp.first_seed + uint64_t(s), out_dir, exp.reuse_cached));
    }
    return out;
}

std::string ablation_csv(const std::vector<ArmMetrics>& arms) {
    std::string out = "arm,seed,psnr_db,ssim,mean_dice,mean_hd95_mm,mean_chamfer_mm\n";
    for (const ArmMetrics& m : arms)
        out += m.arm + "," + std::to_string(m.seed) + "," + format_double(m.psnr) + "," +
               format_double(m.ssim) + "," + format_double(m.mean_dice) + "," +
               format_double(m.mean_hd95) + "," + format_double(m.mean_chamfer) + "\n";
    return out;
}

}  // namespace spider
