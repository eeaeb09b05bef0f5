#pragma once

#include <cmath>

#include "daa/nn/autograd.hpp"

namespace daa::nn {

/// Mean smooth-L1 (Huber with transition `beta`) between pred and target.
/// The per-element derivative is clip(d / beta, -1, 1), so each sample
/// contributes at most 1/N in magnitude.
template <class T>
Var<T> smooth_l1(const Var<T>& pred, const Tensor<T>& target, T beta = T{1}) {
    if (pred.shape() != target.shape())
        throw DimensionError("smooth_l1 shape mismatch " + to_string(pred.shape()) + " vs " +
                             to_string(target.shape()));
    if (!(beta > T{0})) throw RangeError("smooth_l1 beta must be positive");
    const std::size_t n = pred.numel();
    T acc{0};
    for (std::size_t i = 0; i < n; ++i) {
        const T d = pred.value()[i] - target[i];
        const T a = std::abs(d);
        acc += a < beta ? T{0.5} * d * d / beta : a - T{0.5} * beta;
    }
    const T inv_n = T{1} / static_cast<T>(n);
    return Var<T>::from_op("smooth_l1", Tensor<T>::scalar(acc * inv_n), {pred},
                           [target, beta, inv_n](Node<T>& self) {
        auto& pn = *self.inputs[0];
        const T g = self.grad[0] * inv_n;
        for (std::size_t i = 0; i < pn.value.numel(); ++i) {
            const T d = pn.value[i] - target[i];
            T slope = d / beta;
            if (slope > T{1}) slope = T{1};
            if (slope < T{-1}) slope = T{-1};
            pn.grad[i] += g * slope;
        }
    });
}

}  // namespace daa::nn
