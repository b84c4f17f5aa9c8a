#pragma once

#include "spider/tensor.hpp"

namespace spider {

// Mean absolute error over sampled points.
template <typename T>
Var<T> loss_intensity(Var<T> pred, Var<T> truth) {
    if (shape_count(pred.shape()) == 0) throw ValidationError("loss_intensity: empty batch");
    detail::require_same_shape("loss_intensity", pred, truth);
    return mean(vabs(sub(pred, truth)));
}

// Global soft Dice loss: 1 - (2*sum_c sum_x p*y + eps) / (sum_c sum_x (p+y) + eps),
// summed over all classes and points in the batch.
template <typename T>
Var<T> loss_dice(Var<T> probs, Var<T> onehot, double eps) {
    detail::require_same_shape("loss_dice", probs, onehot);
    const Shape& s = probs.shape();
    if (s.size() != 2) throw ShapeError("loss_dice: expected [B,C]");
    if (!(eps > 0)) throw ConfigError("loss_dice: epsilon must be positive");
    const int B = s[0], C = s[1];
    const auto& pv = probs.value();
    const auto& yv = onehot.value();
    for (int b = 0; b < B; ++b) {
        T rowsum = T(0);
        int ones = 0;
        for (int c = 0; c < C; ++c) {
            rowsum += pv[size_t(b) * C + c];
            const T y = yv[size_t(b) * C + c];
            if (y == T(1))
                ++ones;
            else if (y != T(0))
                throw ValidationError("loss_dice: target row " + std::to_string(b) +
                                      " is not one-hot");
        }
        if (std::abs(double(rowsum) - 1.0) > 1e-5)
            throw ValidationError("loss_dice: probability row " + std::to_string(b) +
                                  " does not sum to 1");
        if (ones != 1)
            throw ValidationError("loss_dice: target row " + std::to_string(b) +
                                  " is not one-hot");
    }
    Var<T> inter = sum(mul(probs, onehot));
    Var<T> total = add(sum(probs), sum(onehot));
    Var<T> ratio = vdiv(affine(inter, 2.0, eps), affine(total, 1.0, eps));
    return affine(ratio, -1.0, 1.0);
}

// lambda_int * L_int + lambda_seg * L_seg.
template <typename T>
Var<T> loss_total(Var<T> l_int, Var<T> l_seg, double lambda_int, double lambda_seg) {
    return add(affine(l_int, lambda_int, 0.0), affine(l_seg, lambda_seg, 0.0));
}

// One-hot rows from integer labels (constant tensor helper).
template <typename T>
std::vector<T> one_hot(const std::vector<int>& labels, int num_classes) {
    std::vector<T> out(labels.size() * size_t(num_classes), T(0));
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw ValidationError("one_hot: label " + std::to_string(labels[i]) +
                                  " outside [0," + std::to_string(num_classes) + ")");
        out[i * size_t(num_classes) + size_t(labels[i])] = T(1);
    }
    return out;
}

}  // namespace spider
