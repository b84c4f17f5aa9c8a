#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spider/geometry.hpp"
#include "spider/hash_encoder.hpp"
#include "spider/projector.hpp"
#include "spider/unet.hpp"

namespace spider {

enum class DecoderTopology { shared, two_branch, two_stage };

DecoderTopology parse_topology(const std::string& s);
std::string topology_name(DecoderTopology t);

struct DecoderConfig {
    DecoderTopology topology = DecoderTopology::shared;
    int hidden_layers = 4;
    int width = 128;
    int num_classes = 4;  // softmax channels, background included as class 0

    void validate() const {
        if (hidden_layers < 1 || width < 1 || num_classes < 2)
            throw ConfigError("decoder: bad hidden/width/classes");
    }
};

// Decoder head over sampled point features.
//  shared:     one MLP emitting [intensity | C logits] (C+1 channels);
//  two_branch: two identical MLPs, one for intensity, one for logits;
//  two_stage:  intensity MLP first, then a second MLP over its last hidden
//              activation concatenated with the predicted intensity.
template <typename T>
struct Decoder {
    DecoderConfig cfg;
    Mlp<T> main;
    std::optional<Mlp<T>> second;

    Decoder() = default;
    Decoder(ParamStore<T>& store, const DecoderConfig& config, int in_dim, Rng& rng,
            const std::string& prefix = "decoder")
        : cfg(config) {
        cfg.validate();
        const int C = cfg.num_classes;
        switch (cfg.topology) {
            case DecoderTopology::shared:
                main = Mlp<T>(store, prefix + ".main", in_dim, cfg.width, cfg.hidden_layers,
                              C + 1, rng);
                break;
            case DecoderTopology::two_branch:
                main = Mlp<T>(store, prefix + ".main", in_dim, cfg.width, cfg.hidden_layers, 1,
                              rng);
                second = Mlp<T>(store, prefix + ".seg", in_dim, cfg.width, cfg.hidden_layers, C,
                                rng);
                break;
            case DecoderTopology::two_stage:
                main = Mlp<T>(store, prefix + ".main", in_dim, cfg.width, cfg.hidden_layers, 1,
                              rng);
                second = Mlp<T>(store, prefix + ".seg", cfg.width + 1, cfg.width,
                                cfg.hidden_layers, C, rng);
                break;
        }
    }

    struct Output {
        Var<T> intensity;  // [B,1]
        Var<T> logits;     // [B,C]
    };

    Output forward(Tape<T>& tape, Var<T> features) const {
        const int C = cfg.num_classes;
        switch (cfg.topology) {
            case DecoderTopology::shared: {
                auto r = main.forward(tape, features);
                return {slice_cols(r.output, 0, 1), slice_cols(r.output, 1, C + 1)};
            }
            case DecoderTopology::two_branch: {
                auto ri = main.forward(tape, features);
                auto rs = second->forward(tape, features);
                return {ri.output, rs.output};
            }
            case DecoderTopology::two_stage: {
                auto ri = main.forward(tape, features);
                Var<T> seg_in = concat_cols(ri.last_hidden, ri.output);
                auto rs = second->forward(tape, seg_in);
                return {ri.output, rs.output};
            }
        }
        throw ConfigError("decoder: unknown topology");
    }
};

// Per-point field output in plain values.
struct FieldOutput {
    double intensity = 0;
    std::vector<double> logits;
    std::vector<double> probabilities;
    int predicted_class = 0;
};

// Acquisition geometry binding the field to the two detector planes.
struct FieldGeometry {
    Dims vol_dims;
    Spacing vol_spacing;
    DetectorSpec det_pa, det_lat;
    ViewPose pose_pa, pose_lat;

    static FieldGeometry make(Dims dims, Spacing spacing, int nu, int nv) {
        FieldGeometry g;
        g.vol_dims = dims;
        g.vol_spacing = spacing;
        g.det_pa = footprint_detector_pa(dims, spacing, nu, nv);
        g.det_lat = footprint_detector_lat(dims, spacing, nu, nv);
        g.pose_pa = make_pa_pose(dims, spacing, g.det_pa);
        g.pose_lat = make_lat_pose(dims, spacing, g.det_lat);
        return g;
    }

    Vec3 to_mm(Vec3 normalized) const {
        Vec3 e = {vol_dims.nx * vol_spacing.sx, vol_dims.ny * vol_spacing.sy,
                  vol_dims.nz * vol_spacing.sz};
        return {normalized.x * e.x, normalized.y * e.y, normalized.z * e.z};
    }
};

struct ModelConfig {
    UNetConfig encoder;
    HashEncoderConfig hash;
    DecoderConfig decoder;
    Dims vol_dims = {64, 64, 64};
    Spacing vol_spacing = {1, 1, 1};
    int drr_nu = 128, drr_nv = 128;

    int feature_dim() const { return 2 * encoder.out_channels + hash.output_dim(); }

    KvMap to_kv() const;
    static ModelConfig from_kv(const KvMap& kv);
};

// The image-conditioned implicit field: shared-weight view encoder, hash
// coordinate encoding, projection-guided feature sampling and the decoder.
template <typename T>
struct FieldModel {
    ModelConfig cfg;
    ParamStore<T> params;
    UNet<T> encoder;
    HashEncoder<T> hash;
    Decoder<T> decoder;
    FieldGeometry geom;

    explicit FieldModel(const ModelConfig& config, uint64_t init_seed) : cfg(config) {
        Rng rng(mix_seed(init_seed, 0x5eedf1e1d));
        encoder = UNet<T>(params, cfg.encoder, rng, "encoder");
        hash = HashEncoder<T>(params, cfg.hash, rng, "hash");
        decoder = Decoder<T>(params, cfg.decoder, cfg.feature_dim(), rng, "decoder");
        geom = FieldGeometry::make(cfg.vol_dims, cfg.vol_spacing, cfg.drr_nu, cfg.drr_nv);
    }

    Var<T> image_leaf(Tape<T>& tape, const std::vector<T>& drr) const {
        if (drr.size() != size_t(cfg.drr_nu) * cfg.drr_nv)
            throw ShapeError("drr size does not match configured detector");
        return tape.constant(Shape{1, cfg.drr_nv, cfg.drr_nu}, drr.data());
    }

    // View-conditioned per-point features: concat(bilinear(F_pa, P_pa(x)),
    // bilinear(F_lat, P_lat(x)), hash(x)).
    Var<T> sample_point_features(Tape<T>& tape, Var<T> fmap_pa, Var<T> fmap_lat,
                                 const std::vector<Vec3>& pts_norm) const {
        std::vector<SampleCoord> uv_pa(pts_norm.size()), uv_lat(pts_norm.size());
        for (size_t i = 0; i < pts_norm.size(); ++i) {
            Vec3 mm = geom.to_mm(pts_norm[i]);
            PixelCoord a = project_point(geom.pose_pa, geom.det_pa, mm);
            PixelCoord b = project_point(geom.pose_lat, geom.det_lat, mm);
            uv_pa[i] = {a.u, a.v};
            uv_lat[i] = {b.u, b.v};
        }
        Var<T> f_pa = bilinear_sample_2d(fmap_pa, uv_pa);
        Var<T> f_lat = bilinear_sample_2d(fmap_lat, uv_lat);
        Var<T> h = hash.encode(tape, pts_norm);
        return concat_cols(concat_cols(f_pa, f_lat), h);
    }

    struct PointBatch {
        Var<T> intensity;  // [B,1]
        Var<T> logits;     // [B,C]
    };

    PointBatch forward(Tape<T>& tape, const std::vector<T>& drr_pa, const std::vector<T>& drr_lat,
                       const std::vector<Vec3>& pts_norm) const {
        Var<T> fmap_pa = encoder.encode(tape, image_leaf(tape, drr_pa));
        Var<T> fmap_lat = encoder.encode(tape, image_leaf(tape, drr_lat));
        Var<T> f = sample_point_features(tape, fmap_pa, fmap_lat, pts_norm);
        auto out = decoder.forward(tape, f);
        return {out.intensity, out.logits};
    }

    // Dense inference. Encodes the two views once, then evaluates the field
    // at every voxel center of `out_dims` in chunks. Intensity is clamped to
    // [0,1]; labels are the softmax argmax.
    std::pair<VoxelGrid, LabelGrid> reconstruct(const std::vector<T>& drr_pa,
                                                const std::vector<T>& drr_lat, Dims out_dims,
                                                Spacing out_spacing, int chunk = 8192,
                                                size_t* eval_count = nullptr) const {
        Tape<T> enc_tape;
        enc_tape.set_grad_enabled(false);
        Var<T> fpa = encoder.encode(enc_tape, image_leaf(enc_tape, drr_pa));
        Var<T> flat = encoder.encode(enc_tape, image_leaf(enc_tape, drr_lat));
        const Shape fshape = fpa.shape();
        std::vector<T> fpa_v = fpa.value(), flat_v = flat.value();

        VoxelGrid vol(out_dims, out_spacing);
        LabelGrid lab(out_dims, out_spacing, cfg.decoder.num_classes - 1);
        const size_t n = out_dims.count();
        size_t done = 0;
        while (done < n) {
            const size_t m = std::min(size_t(chunk), n - done);
            std::vector<Vec3> pts(m);
            for (size_t i = 0; i < m; ++i) {
                auto c = vol.coords(done + i);
                pts[i] = normalized_coord(c[0], c[1], c[2], out_dims);
            }
            Tape<T> tape;
            tape.set_grad_enabled(false);
            Var<T> fa = tape.constant(fshape, fpa_v.data());
            Var<T> fl = tape.constant(fshape, flat_v.data());
            Var<T> f = sample_point_features(tape, fa, fl, pts);
            auto out = decoder.forward(tape, f);
            Var<T> probs = softmax_rows(out.logits);
            const auto& iv = out.intensity.value();
            std::vector<int> cls = argmax_rows(probs.value(), cfg.decoder.num_classes);
            for (size_t i = 0; i < m; ++i) {
                vol.values[done + i] = float(std::min(T(1), std::max(T(0), iv[i])));
                lab.labels[done + i] = uint16_t(cls[i]);
            }
            if (eval_count) *eval_count += m;
            done += m;
        }
        return {std::move(vol), std::move(lab)};
    }

    // Single-point evaluation (diagnostics / spot checks).
    FieldOutput evaluate_point(const std::vector<T>& drr_pa, const std::vector<T>& drr_lat,
                               Vec3 p_norm) const {
        Tape<T> tape;
        tape.set_grad_enabled(false);
        Var<T> fpa = encoder.encode(tape, image_leaf(tape, drr_pa));
        Var<T> flat = encoder.encode(tape, image_leaf(tape, drr_lat));
        Var<T> f = sample_point_features(tape, fpa, flat, {p_norm});
        auto out = decoder.forward(tape, f);
        Var<T> probs = softmax_rows(out.logits);
        FieldOutput fo;
        fo.intensity = double(out.intensity.value()[0]);
        for (T v : out.logits.value()) fo.logits.push_back(double(v));
        for (T v : probs.value()) fo.probabilities.push_back(double(v));
        fo.predicted_class = argmax_rows(probs.value(), cfg.decoder.num_classes)[0];
        return fo;
    }
};

}  // namespace spider
