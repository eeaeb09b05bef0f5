#pragma once

// Differentiable tensor ops. Every op validates shapes eagerly and records a
// hand-written backward closure when at least one input requires gradients.

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "daa/nn/autograd.hpp"
#include "daa/nn/parallel.hpp"

namespace daa::nn {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using CMatMap = Eigen::Map<const RowMat<T>>;
template <class T>
using StridedCMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <class T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw DimensionError(msg);
}

struct ConvGeometry {
    std::size_t channels, height, width, kernel, stride, pad, out_h, out_w;

    std::size_t patch() const { return channels * kernel * kernel; }
    std::size_t pixels() const { return out_h * out_w; }

    static ConvGeometry make(std::size_t c, std::size_t h, std::size_t w, std::size_t k,
                             std::size_t stride, std::size_t pad) {
        if (stride < 1) throw DimensionError("conv2d stride must be >= 1");
        if (k > h + 2 * pad || k > w + 2 * pad)
            throw DimensionError("conv2d kernel " + std::to_string(k) + " larger than padded input " +
                                 std::to_string(h + 2 * pad) + "x" + std::to_string(w + 2 * pad));
        return {c, h, w, k, stride, pad, (h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1};
    }
};

// cols has shape (C*k*k) x (out_h*out_w); rows ordered (c, ky, kx).
template <class T>
void im2col(const T* img, const ConvGeometry& g, T* cols) {
    const std::size_t P = g.pixels();
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t ky = 0; ky < g.kernel; ++ky)
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * P;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
                    T* dst = row + oy * g.out_w;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
                        std::fill(dst, dst + g.out_w, T{0});
                        continue;
                    }
                    const T* src = img + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                        static_cast<std::ptrdiff_t>(g.pad);
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width))
                                      ? T{0}
                                      : src[ix];
                    }
                }
            }
}

template <class T>
void col2im_add(const T* cols, const ConvGeometry& g, T* img) {
    const std::size_t P = g.pixels();
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t ky = 0; ky < g.kernel; ++ky)
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                const T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * P;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
                    T* dst = img + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                        static_cast<std::ptrdiff_t>(g.pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width))
                            dst[ix] += row[oy * g.out_w + ox];
                    }
                }
            }
}

template <class T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
    auto d = dst.data();
    auto s = src.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace detail

// ---------------------------------------------------------------- convolution

/// 2-D convolution over N x C_in x H x W with square kernels. `bias` may be an
/// undefined Var.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t stride,
              std::size_t padding) {
    using namespace detail;
    require(x.shape().size() == 4, "conv2d input must be N x C x H x W, got " + to_string(x.shape()));
    require(weight.shape().size() == 4 && weight.shape()[2] == weight.shape()[3],
            "conv2d weight must be C_out x C_in x k x k, got " + to_string(weight.shape()));
    const auto N = x.shape()[0], C = x.shape()[1];
    const auto O = weight.shape()[0], k = weight.shape()[2];
    require(weight.shape()[1] == C, "conv2d channel mismatch: input has " + std::to_string(C) +
                                        " channels, weight expects " + std::to_string(weight.shape()[1]));
    const bool has_bias = bias.defined();
    if (has_bias) require(bias.shape() == Shape{O}, "conv2d bias must have shape [" + std::to_string(O) + "]");
    const auto g = ConvGeometry::make(C, x.shape()[2], x.shape()[3], k, stride, padding);
    const std::size_t Kc = g.patch(), P = g.pixels();

    const bool keep_cols = weight.requires_grad();
    auto cols = std::make_shared<std::vector<T>>(keep_cols ? N * Kc * P : 0);
    Tensor<T> out(Shape{N, O, g.out_h, g.out_w});
    const T* xin = x.value().data().data();
    const T* win = weight.value().data().data();
    const T* bin = has_bias ? bias.value().data().data() : nullptr;
    T* yout = out.data().data();
    parallel_for(N, [&](std::size_t n) {
        std::vector<T> scratch;
        T* c = nullptr;
        if (keep_cols) {
            c = cols->data() + n * Kc * P;
        } else {
            scratch.resize(Kc * P);
            c = scratch.data();
        }
        im2col(xin + n * C * g.height * g.width, g, c);
        MatMap<T> Y(yout + n * O * P, O, P);
        Y.noalias() = CMatMap<T>(win, O, Kc) * CMatMap<T>(c, Kc, P);
        if (bin)
            for (std::size_t o = 0; o < O; ++o) Y.row(o).array() += bin[o];
    });

    std::vector<Var<T>> inputs{x, weight};
    if (has_bias) inputs.push_back(bias);
    return Var<T>::from_op(
        "conv2d", std::move(out), std::move(inputs), [g, N, O, Kc, P, cols, has_bias](Node<T>& self) {
            auto& xn = *self.inputs[0];
            auto& wn = *self.inputs[1];
            const T* dy = self.grad.data().data();
            const T* w = wn.value.data().data();
            if (wn.requires_grad) {
                std::vector<T> partial(N * O * Kc);
                parallel_for(N, [&](std::size_t n) {
                    MatMap<T>(partial.data() + n * O * Kc, O, Kc).noalias() =
                        CMatMap<T>(dy + n * O * P, O, P) *
                        CMatMap<T>(cols->data() + n * Kc * P, Kc, P).transpose();
                });
                T* dw = wn.grad.data().data();
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t i = 0; i < O * Kc; ++i) dw[i] += partial[n * O * Kc + i];
            }
            if (has_bias && self.inputs[2]->requires_grad) {
                T* db = self.inputs[2]->grad.data().data();
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t o = 0; o < O; ++o) {
                        const T* r = dy + (n * O + o) * P;
                        T acc{0};
                        for (std::size_t p = 0; p < P; ++p) acc += r[p];
                        db[o] += acc;
                    }
            }
            if (xn.requires_grad) {
                T* dx = xn.grad.data().data();
                parallel_for(N, [&](std::size_t n) {
                    std::vector<T> dcols(Kc * P);
                    MatMap<T>(dcols.data(), Kc, P).noalias() =
                        CMatMap<T>(w, O, Kc).transpose() * CMatMap<T>(dy + n * O * P, O, P);
                    col2im_add(dcols.data(), g, dx + n * g.channels * g.height * g.width);
                });
            }
        });
}

/// Per-input-channel convolution contributions without bias:
/// out[n, c] = conv(x[n, c], weight[:, c]). Summing over c reproduces conv2d.
/// Shape N x C_in x C_out x H' x W'.
template <class T>
Var<T> conv2d_split(const Var<T>& x, const Var<T>& weight, std::size_t stride, std::size_t padding) {
    using namespace detail;
    require(x.shape().size() == 4, "conv2d_split input must be N x C x H x W");
    require(weight.shape().size() == 4 && weight.shape()[2] == weight.shape()[3],
            "conv2d_split weight must be C_out x C_in x k x k");
    const auto N = x.shape()[0], C = x.shape()[1];
    const auto O = weight.shape()[0], k = weight.shape()[2];
    require(weight.shape()[1] == C, "conv2d_split channel mismatch");
    const auto g = ConvGeometry::make(C, x.shape()[2], x.shape()[3], k, stride, padding);
    const std::size_t kk = k * k, Kc = g.patch(), P = g.pixels();

    auto cols = std::make_shared<std::vector<T>>(N * Kc * P);
    Tensor<T> out(Shape{N, C, O, g.out_h, g.out_w});
    const T* xin = x.value().data().data();
    const T* win = weight.value().data().data();
    T* yout = out.data().data();
    parallel_for(N, [&](std::size_t n) {
        T* c = cols->data() + n * Kc * P;
        im2col(xin + n * C * g.height * g.width, g, c);
        for (std::size_t ch = 0; ch < C; ++ch) {
            MatMap<T>(yout + (n * C + ch) * O * P, O, P).noalias() =
                StridedCMap<T>(win + ch * kk, O, kk, Eigen::OuterStride<>(C * kk)) *
                CMatMap<T>(c + ch * kk * P, kk, P);
        }
    });

    return Var<T>::from_op(
        "conv2d_split", std::move(out), {x, weight}, [g, N, C, O, kk, Kc, P, cols](Node<T>& self) {
            auto& xn = *self.inputs[0];
            auto& wn = *self.inputs[1];
            const T* dy = self.grad.data().data();
            const T* w = wn.value.data().data();
            if (wn.requires_grad) {
                std::vector<T> partial(N * O * Kc, T{0});
                parallel_for(N, [&](std::size_t n) {
                    for (std::size_t ch = 0; ch < C; ++ch)
                        StridedMap<T>(partial.data() + n * O * Kc + ch * kk, O, kk,
                                      Eigen::OuterStride<>(Kc))
                            .noalias() = CMatMap<T>(dy + (n * C + ch) * O * P, O, P) *
                                         CMatMap<T>(cols->data() + n * Kc * P + ch * kk * P, kk, P)
                                             .transpose();
                });
                T* dw = wn.grad.data().data();
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t i = 0; i < O * Kc; ++i) dw[i] += partial[n * O * Kc + i];
            }
            if (xn.requires_grad) {
                T* dx = xn.grad.data().data();
                parallel_for(N, [&](std::size_t n) {
                    std::vector<T> dcols(Kc * P);
                    for (std::size_t ch = 0; ch < C; ++ch)
                        MatMap<T>(dcols.data() + ch * kk * P, kk, P).noalias() =
                            StridedCMap<T>(w + ch * kk, O, kk, Eigen::OuterStride<>(C * kk)).transpose() *
                            CMatMap<T>(dy + (n * C + ch) * O * P, O, P);
                    col2im_add(dcols.data(), g, dx + n * g.channels * g.height * g.width);
                });
            }
        });
}

// ------------------------------------------------------------------- dense

/// y = x W^T + b for x of shape N x D_in.
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
    using namespace detail;
    require(x.shape().size() == 2, "linear input must be N x D_in, got " + to_string(x.shape()));
    require(weight.shape().size() == 2, "linear weight must be D_out x D_in");
    const auto N = x.shape()[0], Din = x.shape()[1], Dout = weight.shape()[0];
    require(weight.shape()[1] == Din, "linear inner dimension mismatch: input " + std::to_string(Din) +
                                          ", weight " + std::to_string(weight.shape()[1]));
    require(bias.shape() == Shape{Dout}, "linear bias must have shape [" + std::to_string(Dout) + "]");
    Tensor<T> out(Shape{N, Dout});
    MatMap<T> Y(out.data().data(), N, Dout);
    Y.noalias() = CMatMap<T>(x.value().data().data(), N, Din) *
                  CMatMap<T>(weight.value().data().data(), Dout, Din).transpose();
    const T* b = bias.value().data().data();
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t j = 0; j < Dout; ++j) Y(n, j) += b[j];
    return Var<T>::from_op("linear", std::move(out), {x, weight, bias}, [N, Din, Dout](Node<T>& self) {
        auto& xn = *self.inputs[0];
        auto& wn = *self.inputs[1];
        auto& bn = *self.inputs[2];
        CMatMap<T> dY(self.grad.data().data(), N, Dout);
        if (xn.requires_grad)
            MatMap<T>(xn.grad.data().data(), N, Din).noalias() +=
                dY * CMatMap<T>(wn.value.data().data(), Dout, Din);
        if (wn.requires_grad) {
            RowMat<T> dw = dY.transpose() * CMatMap<T>(xn.value.data().data(), N, Din);
            MatMap<T>(wn.grad.data().data(), Dout, Din) += dw;
        }
        if (bn.requires_grad) {
            T* db = bn.grad.data().data();
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t j = 0; j < Dout; ++j) db[j] += dY(n, j);
        }
    });
}

// --------------------------------------------------------------- pointwise

template <class T>
Var<T> relu(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) v = v > T{0} ? v : T{0};
    return Var<T>::from_op("relu", std::move(out), {x}, [](Node<T>& self) {
        auto& xn = *self.inputs[0];
        auto dx = xn.grad.data();
        auto xv = xn.value.data();
        auto dy = self.grad.data();
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (xv[i] > T{0}) dx[i] += dy[i];
    });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    detail::require(a.shape() == b.shape(), "add shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    Tensor<T> out = a.value();
    auto bv = b.value().data();
    for (std::size_t i = 0; i < bv.size(); ++i) out[i] += bv[i];
    return Var<T>::from_op("add", std::move(out), {a, b}, [](Node<T>& self) {
        for (auto& in : self.inputs)
            if (in->requires_grad) detail::add_into(in->grad, self.grad);
    });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    detail::require(a.shape() == b.shape(), "sub shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    Tensor<T> out = a.value();
    auto bv = b.value().data();
    for (std::size_t i = 0; i < bv.size(); ++i) out[i] -= bv[i];
    return Var<T>::from_op("sub", std::move(out), {a, b}, [](Node<T>& self) {
        if (self.inputs[0]->requires_grad) detail::add_into(self.inputs[0]->grad, self.grad);
        if (self.inputs[1]->requires_grad) {
            auto d = self.inputs[1]->grad.data();
            auto g = self.grad.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
        }
    });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    detail::require(a.shape() == b.shape(), "mul shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    Tensor<T> out = a.value();
    auto bv = b.value().data();
    for (std::size_t i = 0; i < bv.size(); ++i) out[i] *= bv[i];
    return Var<T>::from_op("mul", std::move(out), {a, b}, [](Node<T>& self) {
        auto g = self.grad.data();
        auto& an = *self.inputs[0];
        auto& bn = *self.inputs[1];
        if (an.requires_grad) {
            auto d = an.grad.data();
            auto o = bn.value.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * o[i];
        }
        if (bn.requires_grad) {
            auto d = bn.grad.data();
            auto o = an.value.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * o[i];
        }
    });
}

/// y = alpha * x + beta
template <class T>
Var<T> affine_scalar(const Var<T>& x, T alpha, T beta) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) v = alpha * v + beta;
    return Var<T>::from_op("affine_scalar", std::move(out), {x}, [alpha](Node<T>& self) {
        auto d = self.inputs[0]->grad.data();
        auto g = self.grad.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += alpha * g[i];
    });
}

template <class T>
Var<T> neg(const Var<T>& x) {
    return affine_scalar(x, T{-1}, T{0});
}

// -------------------------------------------------------------- reductions

template <class T>
Var<T> sum(const Var<T>& x) {
    T acc{0};
    for (auto v : x.value().data()) acc += v;
    return Var<T>::from_op("sum", Tensor<T>::scalar(acc), {x}, [](Node<T>& self) {
        const T g = self.grad[0];
        for (auto& d : self.inputs[0]->grad.data()) d += g;
    });
}

template <class T>
Var<T> mean(const Var<T>& x) {
    const auto n = static_cast<T>(x.numel());
    T acc{0};
    for (auto v : x.value().data()) acc += v;
    return Var<T>::from_op("mean", Tensor<T>::scalar(acc / n), {x}, [n](Node<T>& self) {
        const T g = self.grad[0] / n;
        for (auto& d : self.inputs[0]->grad.data()) d += g;
    });
}

/// Views x as G contiguous groups of `group_size` values; returns the G means
/// with the given output shape.
template <class T>
Var<T> group_mean(const Var<T>& x, std::size_t group_size, Shape out_shape) {
    detail::require(group_size > 0 && x.numel() % group_size == 0 && numel(out_shape) * group_size == x.numel(),
                    "group_mean: " + to_string(x.shape()) + " is not " + to_string(out_shape) + " groups of " +
                        std::to_string(group_size));
    const std::size_t G = x.numel() / group_size;
    Tensor<T> out(std::move(out_shape));
    const T* xv = x.value().data().data();
    for (std::size_t g = 0; g < G; ++g) {
        T acc{0};
        for (std::size_t m = 0; m < group_size; ++m) acc += xv[g * group_size + m];
        out[g] = acc / static_cast<T>(group_size);
    }
    return Var<T>::from_op("group_mean", std::move(out), {x}, [G, group_size](Node<T>& self) {
        T* dx = self.inputs[0]->grad.data().data();
        for (std::size_t g = 0; g < G; ++g) {
            const T d = self.grad[g] / static_cast<T>(group_size);
            for (std::size_t m = 0; m < group_size; ++m) dx[g * group_size + m] += d;
        }
    });
}

/// group_mean(relu(x)) in one pass, without materializing relu(x).
template <class T>
Var<T> relu_group_mean(const Var<T>& x, std::size_t group_size, Shape out_shape) {
    detail::require(group_size > 0 && x.numel() % group_size == 0 && numel(out_shape) * group_size == x.numel(),
                    "relu_group_mean: " + to_string(x.shape()) + " is not " + to_string(out_shape) + " groups of " +
                        std::to_string(group_size));
    const std::size_t G = x.numel() / group_size;
    Tensor<T> out(std::move(out_shape));
    const T* xv = x.value().data().data();
    for (std::size_t g = 0; g < G; ++g) {
        T acc{0};
        for (std::size_t m = 0; m < group_size; ++m) acc += std::max(xv[g * group_size + m], T{0});
        out[g] = acc / static_cast<T>(group_size);
    }
    return Var<T>::from_op("relu_group_mean", std::move(out), {x}, [G, group_size](Node<T>& self) {
        const T* xv = self.inputs[0]->value.data().data();
        T* dx = self.inputs[0]->grad.data().data();
        for (std::size_t g = 0; g < G; ++g) {
            const T d = self.grad[g] / static_cast<T>(group_size);
            for (std::size_t m = 0; m < group_size; ++m)
                dx[g * group_size + m] += xv[g * group_size + m] > T{0} ? d : T{0};
        }
    });
}

/// Per-group sqrt(population variance + eps).
template <class T>
Var<T> group_std(const Var<T>& x, std::size_t group_size, T eps, Shape out_shape) {
    detail::require(group_size > 0 && x.numel() % group_size == 0 && numel(out_shape) * group_size == x.numel(),
                    "group_std: " + to_string(x.shape()) + " is not " + to_string(out_shape) + " groups of " +
                        std::to_string(group_size));
    if (!(eps >= T{0})) throw RangeError("group_std: eps must be non-negative");
    const std::size_t G = x.numel() / group_size;
    Tensor<T> out(std::move(out_shape));
    auto mu = std::make_shared<std::vector<T>>(G);
    const T* xv = x.value().data().data();
    for (std::size_t g = 0; g < G; ++g) {
        T acc{0};
        for (std::size_t m = 0; m < group_size; ++m) acc += xv[g * group_size + m];
        const T mean = acc / static_cast<T>(group_size);
        T var{0};
        for (std::size_t m = 0; m < group_size; ++m) {
            const T d = xv[g * group_size + m] - mean;
            var += d * d;
        }
        (*mu)[g] = mean;
        out[g] = std::sqrt(var / static_cast<T>(group_size) + eps);
    }
    return Var<T>::from_op("group_std", std::move(out), {x}, [G, group_size, mu](Node<T>& self) {
        auto& xn = *self.inputs[0];
        T* dx = xn.grad.data().data();
        const T* xv = xn.value.data().data();
        for (std::size_t g = 0; g < G; ++g) {
            const T sigma = self.value[g];
            if (sigma == T{0}) continue;  // eps = 0 on a constant group; subgradient 0
            const T scale = self.grad[g] / (static_cast<T>(group_size) * sigma);
            for (std::size_t m = 0; m < group_size; ++m)
                dx[g * group_size + m] += scale * (xv[g * group_size + m] - (*mu)[g]);
        }
    });
}

/// (x - mu_g) / sigma_g over G contiguous groups.
template <class T>
Var<T> standardize(const Var<T>& x, const Var<T>& mu, const Var<T>& sigma) {
    const std::size_t G = mu.numel();
    detail::require(sigma.numel() == G && G > 0 && x.numel() % G == 0,
                    "standardize: statistics do not tile input " + to_string(x.shape()));
    const std::size_t M = x.numel() / G;
    Tensor<T> out(x.shape());
    const T* xv = x.value().data().data();
    for (std::size_t g = 0; g < G; ++g) {
        const T m = mu.value()[g], s = sigma.value()[g];
        for (std::size_t i = 0; i < M; ++i) out[g * M + i] = (xv[g * M + i] - m) / s;
    }
    return Var<T>::from_op("standardize", std::move(out), {x, mu, sigma}, [G, M](Node<T>& self) {
        auto& xn = *self.inputs[0];
        auto& mn = *self.inputs[1];
        auto& sn = *self.inputs[2];
        const T* dy = self.grad.data().data();
        const T* y = self.value.data().data();
        for (std::size_t g = 0; g < G; ++g) {
            const T s = sn.value[g];
            T gsum{0}, gy{0};
            for (std::size_t i = 0; i < M; ++i) {
                gsum += dy[g * M + i];
                gy += dy[g * M + i] * y[g * M + i];
            }
            if (xn.requires_grad)
                for (std::size_t i = 0; i < M; ++i) xn.grad[g * M + i] += dy[g * M + i] / s;
            if (mn.requires_grad) mn.grad[g] -= gsum / s;
            if (sn.requires_grad) sn.grad[g] -= gy / s;
        }
    });
}

/// x[g, :] * scale[g] + shift[g] over G contiguous groups.
template <class T>
Var<T> group_affine(const Var<T>& x, const Var<T>& scale, const Var<T>& shift) {
    const std::size_t G = scale.numel();
    detail::require(shift.numel() == G && G > 0 && x.numel() % G == 0,
                    "group_affine: coefficients do not tile input " + to_string(x.shape()));
    const std::size_t M = x.numel() / G;
    Tensor<T> out(x.shape());
    const T* xv = x.value().data().data();
    for (std::size_t g = 0; g < G; ++g) {
        const T a = scale.value()[g], b = shift.value()[g];
        for (std::size_t i = 0; i < M; ++i) out[g * M + i] = xv[g * M + i] * a + b;
    }
    return Var<T>::from_op("group_affine", std::move(out), {x, scale, shift}, [G, M](Node<T>& self) {
        auto& xn = *self.inputs[0];
        auto& an = *self.inputs[1];
        auto& bn = *self.inputs[2];
        const T* dy = self.grad.data().data();
        const T* xv = xn.value.data().data();
        for (std::size_t g = 0; g < G; ++g) {
            T gx{0}, gs{0};
            for (std::size_t i = 0; i < M; ++i) {
                gs += dy[g * M + i];
                gx += dy[g * M + i] * xv[g * M + i];
            }
            if (xn.requires_grad) {
                const T a = an.value[g];
                for (std::size_t i = 0; i < M; ++i) xn.grad[g * M + i] += dy[g * M + i] * a;
            }
            if (an.requires_grad) an.grad[g] += gx;
            if (bn.requires_grad) bn.grad[g] += gs;
        }
    });
}

/// Spatial mean of N x C x h x w -> N x C.
template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
    detail::require(x.shape().size() == 4, "global_avg_pool expects N x C x h x w, got " + to_string(x.shape()));
    const auto& s = x.shape();
    return group_mean(x, s[2] * s[3], Shape{s[0], s[1]});
}

/// Mean over the last axis of an N x K matrix.
template <class T>
Var<T> row_mean(const Var<T>& x) {
    detail::require(x.shape().size() == 2, "row_mean expects N x K");
    return group_mean(x, x.shape()[1], Shape{x.shape()[0]});
}

// ------------------------------------------------------------------ layout

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
    Tensor<T> out = x.value().reshaped(std::move(shape));
    return Var<T>::from_op("reshape", std::move(out), {x}, [](Node<T>& self) {
        detail::add_into(self.inputs[0]->grad, self.grad);
    });
}

/// Rows of x along axis 0, in the given order.
template <class T>
Var<T> take_rows(const Var<T>& x, std::vector<std::size_t> rows) {
    detail::require(x.shape().size() >= 1 && !rows.empty(), "take_rows needs a non-empty index list");
    const std::size_t R = x.shape()[0], W = x.numel() / R;
    Shape s = x.shape();
    s[0] = rows.size();
    Tensor<T> out(s);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= R) throw RangeError("take_rows index " + std::to_string(rows[i]) + " out of range " + std::to_string(R));
        std::copy_n(x.value().data().begin() + rows[i] * W, W, out.data().begin() + i * W);
    }
    return Var<T>::from_op("take_rows", std::move(out), {x}, [rows = std::move(rows), W](Node<T>& self) {
        auto d = self.inputs[0]->grad.data();
        auto g = self.grad.data();
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < W; ++j) d[rows[i] * W + j] += g[i * W + j];
    });
}

/// Column j of an R x D matrix, as a length-R vector.
template <class T>
Var<T> column(const Var<T>& x, std::size_t j) {
    detail::require(x.shape().size() == 2 && j < x.shape()[1], "column index out of range");
    const auto R = x.shape()[0], D = x.shape()[1];
    Tensor<T> out(Shape{R});
    for (std::size_t r = 0; r < R; ++r) out[r] = x.value()[r * D + j];
    return Var<T>::from_op("column", std::move(out), {x}, [R, D, j](Node<T>& self) {
        for (std::size_t r = 0; r < R; ++r) self.inputs[0]->grad[r * D + j] += self.grad[r];
    });
}

/// Stacks same-shaped tensors along a new leading axis.
template <class T>
Var<T> stack(const std::vector<Var<T>>& parts) {
    detail::require(!parts.empty(), "stack of zero tensors");
    const Shape inner = parts.front().shape();
    const std::size_t W = numel(inner);
    Shape s{parts.size()};
    s.insert(s.end(), inner.begin(), inner.end());
    Tensor<T> out(s);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        detail::require(parts[i].shape() == inner, "stack shape mismatch at " + std::to_string(i));
        std::copy_n(parts[i].value().data().begin(), W, out.data().begin() + i * W);
    }
    return Var<T>::from_op("stack", std::move(out), parts, [W](Node<T>& self) {
        for (std::size_t i = 0; i < self.inputs.size(); ++i) {
            auto& in = *self.inputs[i];
            if (!in.requires_grad) continue;
            for (std::size_t j = 0; j < W; ++j) in.grad[j] += self.grad[i * W + j];
        }
    });
}

/// Broadcasts a single-element tensor to `shape`.
template <class T>
Var<T> expand_scalar(const Var<T>& x, Shape shape) {
    detail::require(x.numel() == 1, "expand_scalar expects a single element");
    Tensor<T> out(std::move(shape), x.value()[0]);
    return Var<T>::from_op("expand_scalar", std::move(out), {x}, [](Node<T>& self) {
        T acc{0};
        for (auto v : self.grad.data()) acc += v;
        self.inputs[0]->grad[0] += acc;
    });
}

/// Broadcasts a length-C vector to R x C by repeating rows.
template <class T>
Var<T> repeat_rows(const Var<T>& x, std::size_t rows) {
    const std::size_t C = x.numel();
    Tensor<T> out(Shape{rows, C});
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.value().data().begin(), C, out.data().begin() + r * C);
    return Var<T>::from_op("repeat_rows", std::move(out), {x}, [rows, C](Node<T>& self) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < C; ++c) self.inputs[0]->grad[c] += self.grad[r * C + c];
    });
}

// ------------------------------------------------------------ style mixing

template <class T>
struct MixTerm {
    Var<T> coef;   // K x R
    Var<T> basis;  // B x R x M, B in {1, N}
};

/// out[n, k, :] = sum_terms coef[k, :] . basis[n or 0, :, :] + base[n, :]
/// Shape N x K x M. This is the linear part of applying one convolution to K
/// feature maps that differ only by per-channel affine coefficients.
template <class T>
Var<T> mix_styles(const std::vector<MixTerm<T>>& terms, const Var<T>& base) {
    using namespace detail;
    require(!terms.empty(), "mix_styles needs at least one term");
    require(base.shape().size() == 2, "mix_styles base must be N x M");
    const std::size_t N = base.shape()[0], M = base.shape()[1];
    const std::size_t K = terms.front().coef.shape().at(0);
    struct Dims {
        std::size_t R, B;
    };
    std::vector<Dims> dims;
    for (const auto& t : terms) {
        require(t.coef.shape().size() == 2 && t.coef.shape()[0] == K, "mix_styles coef must be K x R");
        require(t.basis.shape().size() == 3 && t.basis.shape()[1] == t.coef.shape()[1] && t.basis.shape()[2] == M,
                "mix_styles basis must be B x R x M matching coef " + to_string(t.coef.shape()) + ", got " +
                    to_string(t.basis.shape()));
        require(t.basis.shape()[0] == 1 || t.basis.shape()[0] == N, "mix_styles basis batch must be 1 or N");
        dims.push_back({t.coef.shape()[1], t.basis.shape()[0]});
    }
    Tensor<T> out(Shape{N, K, M});
    T* y = out.data().data();
    const T* b = base.value().data().data();
    parallel_for(N, [&](std::size_t n) {
        MatMap<T> Y(y + n * K * M, K, M);
        Y.rowwise() = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b + n * M, M);
        for (std::size_t t = 0; t < terms.size(); ++t) {
            const auto [R, B] = dims[t];
            const std::size_t src = B == 1 ? 0 : n;
            Y.noalias() += CMatMap<T>(terms[t].coef.value().data().data(), K, R) *
                           CMatMap<T>(terms[t].basis.value().data().data() + src * R * M, R, M);
        }
    });

    std::vector<Var<T>> inputs;
    for (const auto& t : terms) {
        inputs.push_back(t.coef);
        inputs.push_back(t.basis);
    }
    inputs.push_back(base);
    return Var<T>::from_op("mix_styles", std::move(out), std::move(inputs),
                           [dims, N, K, M](Node<T>& self) {
        const T* dy = self.grad.data().data();
        auto& bn = *self.inputs.back();
        if (bn.requires_grad) {
            T* db = bn.grad.data().data();
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t k = 0; k < K; ++k)
                    for (std::size_t m = 0; m < M; ++m) db[n * M + m] += dy[(n * K + k) * M + m];
        }
        for (std::size_t t = 0; t < dims.size(); ++t) {
            auto& cn = *self.inputs[2 * t];
            auto& sn = *self.inputs[2 * t + 1];
            const auto [R, B] = dims[t];
            if (cn.requires_grad) {
                std::vector<T> partial(N * K * R);
                parallel_for(N, [&](std::size_t n) {
                    const std::size_t src = B == 1 ? 0 : n;
                    MatMap<T>(partial.data() + n * K * R, K, R).noalias() =
                        CMatMap<T>(dy + n * K * M, K, M) *
                        CMatMap<T>(sn.value.data().data() + src * R * M, R, M).transpose();
                });
                T* dc = cn.grad.data().data();
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t i = 0; i < K * R; ++i) dc[i] += partial[n * K * R + i];
            }
            if (sn.requires_grad) {
                std::vector<T> partial(N * R * M);
                parallel_for(N, [&](std::size_t n) {
                    MatMap<T>(partial.data() + n * R * M, R, M).noalias() =
                        CMatMap<T>(cn.value.data().data(), K, R).transpose() * CMatMap<T>(dy + n * K * M, K, M);
                });
                T* ds = sn.grad.data().data();
                for (std::size_t n = 0; n < N; ++n) {
                    const std::size_t dst = B == 1 ? 0 : n;
                    for (std::size_t i = 0; i < R * M; ++i) ds[dst * R * M + i] += partial[n * R * M + i];
                }
            }
        }
    });
}

}  // namespace daa::nn
