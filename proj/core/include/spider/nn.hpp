#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "spider/checkpoint.hpp"
#include "spider/phantom.hpp"
#include "spider/tensor.hpp"

namespace spider {

// Owns named parameters with stable addresses.
template <typename T>
class ParamStore {
  public:
    Param<T>& create(const std::string& name, Shape shape) {
        if (find(name)) throw ConfigError("duplicate parameter name: " + name);
        auto p = std::make_unique<Param<T>>();
        p->name = name;
        p->shape = std::move(shape);
        p->value.assign(shape_count(p->shape), T(0));
        p->grad.assign(p->value.size(), T(0));
        params_.push_back(std::move(p));
        return *params_.back();
    }

    Param<T>* find(const std::string& name) {
        for (auto& p : params_)
            if (p->name == name) return p.get();
        return nullptr;
    }

    std::vector<Param<T>*> all() {
        std::vector<Param<T>*> out;
        for (auto& p : params_) out.push_back(p.get());
        return out;
    }

    void zero_grad() {
        for (auto& p : params_) p->zero_grad();
    }

    CheckpointData::Entry to_entry(const Param<T>& p) const {
        CheckpointData::Entry e;
        e.shape = p.shape;
        e.values.assign(p.value.begin(), p.value.end());
        return e;
    }

    CheckpointData to_checkpoint() const {
        CheckpointData ckpt;
        for (const auto& p : params_) ckpt.params.emplace(p->name, to_entry(*p));
        return ckpt;
    }

    void load(const CheckpointData& ckpt) {
        for (auto& p : params_) {
            auto it = ckpt.params.find(p->name);
            if (it == ckpt.params.end())
                throw ConfigError("checkpoint missing parameter " + p->name);
            if (it->second.shape != p->shape)
                throw ConfigError("checkpoint shape mismatch for " + p->name + ": expected " +
                                  shape_str(p->shape) + ", found " + shape_str(it->second.shape));
            for (size_t i = 0; i < p->value.size(); ++i) p->value[i] = T(it->second.values[i]);
        }
    }

  private:
    std::vector<std::unique_ptr<Param<T>>> params_;
};

// lr = base * factor^(epoch / every)
struct SgdConfig {
    double base_lr = 1e-3;
    double decay_factor = 0.5;
    int decay_every = 100;
};

inline double effective_lr(const SgdConfig& cfg, int epoch) {
    double lr = cfg.base_lr;
    for (int k = 0; k < epoch / cfg.decay_every; ++k) lr *= cfg.decay_factor;
    if (!(lr > 0)) throw ConfigError("effective learning rate must be positive");
    return lr;
}

// p <- p - lr * grad for trainable params not matched by `frozen`.
template <typename T>
void sgd_step(ParamStore<T>& store, double lr,
              const std::function<bool(const std::string&)>& frozen = nullptr) {
    if (!(lr > 0)) throw ConfigError("sgd_step: learning rate must be positive");
    const T tlr = T(lr);
    for (Param<T>* p : store.all()) {
        if (!p->trainable) continue;
        if (frozen && frozen(p->name)) continue;
        for (size_t i = 0; i < p->value.size(); ++i) p->value[i] -= tlr * p->grad[i];
    }
}

inline double xavier_bound(int fan_in, int fan_out) {
    return std::sqrt(6.0 / double(fan_in + fan_out));
}

template <typename T>
void init_uniform(Param<T>& p, Rng& rng, double bound) {
    for (T& v : p.value) v = T(rng.uniform(-bound, bound));
}

// ---- layers ----

template <typename T>
struct Conv2dLayer {
    Param<T>* w = nullptr;
    Param<T>* b = nullptr;
    int in_ch = 0, out_ch = 0, k = 3;

    Conv2dLayer() = default;
    Conv2dLayer(ParamStore<T>& store, const std::string& name, int in, int out, int kernel,
                Rng& rng)
        : in_ch(in), out_ch(out), k(kernel) {
        w = &store.create(name + ".w", Shape{out, in, kernel, kernel});
        b = &store.create(name + ".b", Shape{out});
        init_uniform(*w, rng, xavier_bound(in * kernel * kernel, out * kernel * kernel));
    }

    Var<T> operator()(Tape<T>& tape, Var<T> x) const {
        return conv2d(x, tape.leaf(*w), tape.leaf(*b));
    }
};

template <typename T>
struct LinearLayer {
    Param<T>* w = nullptr;
    Param<T>* b = nullptr;
    int in_dim = 0, out_dim = 0;

    LinearLayer() = default;
    LinearLayer(ParamStore<T>& store, const std::string& name, int in, int out, Rng& rng)
        : in_dim(in), out_dim(out) {
        w = &store.create(name + ".w", Shape{in, out});
        b = &store.create(name + ".b", Shape{out});
        init_uniform(*w, rng, xavier_bound(in, out));
    }

    Var<T> operator()(Tape<T>& tape, Var<T> x) const {
        return linear(x, tape.leaf(*w), tape.leaf(*b));
    }
};

// Plain MLP: `hidden_layers` relu-activated layers of `width`, then a linear
// output head. forward() also exposes the last hidden activation (the
// two-stage decoder consumes it).
template <typename T>
struct Mlp {
    std::vector<LinearLayer<T>> hidden;
    LinearLayer<T> out;

    Mlp() = default;
    Mlp(ParamStore<T>& store, const std::string& name, int in_dim, int width, int hidden_layers,
        int out_dim, Rng& rng) {
        int d = in_dim;
        for (int i = 0; i < hidden_layers; ++i) {
            hidden.emplace_back(store, name + ".h" + std::to_string(i), d, width, rng);
            d = width;
        }
        out = LinearLayer<T>(store, name + ".out", d, out_dim, rng);
    }

    struct Result {
        Var<T> output;
        Var<T> last_hidden;
    };

    Result forward(Tape<T>& tape, Var<T> x) const {
        Var<T> h = x;
        for (const auto& layer : hidden) h = relu(layer(tape, h));
        return {out(tape, h), h};
    }
};

}  // namespace spider
