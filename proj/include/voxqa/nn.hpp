#pragma once

// Convolution, batch normalization, losses, optimizers and the
// finite-difference gradient checker on top of the tensor graph.
//
// conv and conv_transpose share three low-level kernels; the transposed
// convolution forward IS the conv input-gradient kernel with the channel
// roles swapped, which makes <conv(x),y> == <x, conv_transpose(y)> hold by
// construction up to rounding.

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "voxqa/rng.hpp"
#include "voxqa/tensor.hpp"

namespace voxqa::nn {

namespace detail {

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
    return a > 0 ? (a + b - 1) / b : -((-a) / b);
}
inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    return a >= 0 ? a / b : -((-a + b - 1) / b);
}

// Geometry of a (normalized, 3 spatial axes) convolution. 2D tensors are
// mapped onto this with a leading size-1 axis.
struct ConvGeom {
    std::int64_t n = 1, ci = 1, co = 1;
    std::int64_t in[3] = {1, 1, 1};
    std::int64_t k[3] = {1, 1, 1};
    std::int64_t out[3] = {1, 1, 1};
    std::int64_t s[3] = {1, 1, 1};
    std::int64_t p[3] = {0, 0, 0};

    std::int64_t in_sp() const { return in[0] * in[1] * in[2]; }
    std::int64_t out_sp() const { return out[0] * out[1] * out[2]; }
    std::int64_t k_sp() const { return k[0] * k[1] * k[2]; }
};

// y[n,co,o] = b[co] + sum_{ci,k} x[n,ci,o*s-p+k] * w[co,ci,k]
// With accumulate=true, adds into y instead of overwriting (bias ignored).
template <typename T>
void conv_forward_kernel(const ConvGeom& g, const T* x, const T* w, const T* b, T* y,
                         bool accumulate = false) {
    const std::int64_t osp = g.out_sp(), isp = g.in_sp(), ksp = g.k_sp();
#pragma omp parallel for schedule(static)
    for (std::int64_t nc = 0; nc < g.n * g.co; ++nc) {
        const std::int64_t n = nc / g.co, co = nc % g.co;
        T* ybase = y + nc * osp;
        if (!accumulate) {
            const T bias = b ? b[co] : T(0);
            for (std::int64_t i = 0; i < osp; ++i) ybase[i] = bias;
        }
        for (std::int64_t ci = 0; ci < g.ci; ++ci) {
            const T* xc = x + (n * g.ci + ci) * isp;
            const T* wc = w + (co * g.ci + ci) * ksp;
            for (std::int64_t kd = 0; kd < g.k[0]; ++kd)
                for (std::int64_t kh = 0; kh < g.k[1]; ++kh)
                    for (std::int64_t kw = 0; kw < g.k[2]; ++kw) {
                        const T wv = wc[(kd * g.k[1] + kh) * g.k[2] + kw];
                        const std::int64_t off = kw - g.p[2];
                        const std::int64_t lo =
                            std::max<std::int64_t>(0, ceil_div(-off, g.s[2]));
                        const std::int64_t hi = std::min<std::int64_t>(
                            g.out[2], floor_div(g.in[2] - 1 - off, g.s[2]) + 1);
                        if (lo >= hi) continue;
                        for (std::int64_t od = 0; od < g.out[0]; ++od) {
                            const std::int64_t id = od * g.s[0] - g.p[0] + kd;
                            if (id < 0 || id >= g.in[0]) continue;
                            for (std::int64_t oh = 0; oh < g.out[1]; ++oh) {
                                const std::int64_t ih = oh * g.s[1] - g.p[1] + kh;
                                if (ih < 0 || ih >= g.in[1]) continue;
                                const T* xrow = xc + (id * g.in[1] + ih) * g.in[2];
                                T* yrow = ybase + (od * g.out[1] + oh) * g.out[2];
                                if (g.s[2] == 1) {
                                    const T* xs = xrow + off;
                                    for (std::int64_t ow = lo; ow < hi; ++ow)
                                        yrow[ow] += wv * xs[ow];
                                } else {
                                    for (std::int64_t ow = lo; ow < hi; ++ow)
                                        yrow[ow] += wv * xrow[ow * g.s[2] + off];
                                }
                            }
                        }
                    }
        }
    }
}

// gx[n,ci,i] += sum_{co,k} gy[n,co,o] * w[co,ci,k], i = o*s-p+k.
// Also the forward pass of conv_transpose (see conv_transpose below).
// Parallel over (n,ci): each thread owns one input-channel slice.
template <typename T>
void conv_input_grad_kernel(const ConvGeom& g, const T* gy, const T* w, T* gx) {
    const std::int64_t osp = g.out_sp(), isp = g.in_sp(), ksp = g.k_sp();
#pragma omp parallel for schedule(static)
    for (std::int64_t nc = 0; nc < g.n * g.ci; ++nc) {
        const std::int64_t n = nc / g.ci, ci = nc % g.ci;
        T* gxc = gx + nc * isp;
        for (std::int64_t co = 0; co < g.co; ++co) {
            const T* gyc = gy + (n * g.co + co) * osp;
            const T* wc = w + (co * g.ci + ci) * ksp;
            for (std::int64_t kd = 0; kd < g.k[0]; ++kd)
                for (std::int64_t kh = 0; kh < g.k[1]; ++kh)
                    for (std::int64_t kw = 0; kw < g.k[2]; ++kw) {
                        const T wv = wc[(kd * g.k[1] + kh) * g.k[2] + kw];
                        const std::int64_t off = kw - g.p[2];
                        const std::int64_t lo =
                            std::max<std::int64_t>(0, ceil_div(-off, g.s[2]));
                        const std::int64_t hi = std::min<std::int64_t>(
                            g.out[2], floor_div(g.in[2] - 1 - off, g.s[2]) + 1);
                        if (lo >= hi) continue;
                        for (std::int64_t od = 0; od < g.out[0]; ++od) {
                            const std::int64_t id = od * g.s[0] - g.p[0] + kd;
                            if (id < 0 || id >= g.in[0]) continue;
                            for (std::int64_t oh = 0; oh < g.out[1]; ++oh) {
                                const std::int64_t ih = oh * g.s[1] - g.p[1] + kh;
                                if (ih < 0 || ih >= g.in[1]) continue;
                                T* gxrow = gxc + (id * g.in[1] + ih) * g.in[2];
                                const T* gyrow = gyc + (od * g.out[1] + oh) * g.out[2];
                                if (g.s[2] == 1) {
                                    T* gxs = gxrow + off;
                                    for (std::int64_t ow = lo; ow < hi; ++ow)
                                        gxs[ow] += wv * gyrow[ow];
                                } else {
                                    for (std::int64_t ow = lo; ow < hi; ++ow)
                                        gxrow[ow * g.s[2] + off] += wv * gyrow[ow];
                                }
                            }
                        }
                    }
        }
    }
}

// gw[co,ci,k] += sum_{n,o} gy[n,co,o] * x[n,ci,o*s-p+k];  gb[co] += sum gy.
// Parallel over co: each thread owns one output-channel slice of gw/gb.
template <typename T>
void conv_weight_grad_kernel(const ConvGeom& g, const T* x, const T* gy, T* gw, T* gb) {
    const std::int64_t osp = g.out_sp(), isp = g.in_sp(), ksp = g.k_sp();
#pragma omp parallel for schedule(static)
    for (std::int64_t co = 0; co < g.co; ++co) {
        if (gb) {
            T acc = 0;
            for (std::int64_t n = 0; n < g.n; ++n) {
                const T* gyc = gy + (n * g.co + co) * osp;
                for (std::int64_t i = 0; i < osp; ++i) acc += gyc[i];
            }
            gb[co] += acc;
        }
        for (std::int64_t ci = 0; ci < g.ci; ++ci) {
            T* gwc = gw + (co * g.ci + ci) * ksp;
            for (std::int64_t kd = 0; kd < g.k[0]; ++kd)
                for (std::int64_t kh = 0; kh < g.k[1]; ++kh)
                    for (std::int64_t kw = 0; kw < g.k[2]; ++kw) {
                        const std::int64_t off = kw - g.p[2];
                        const std::int64_t lo =
                            std::max<std::int64_t>(0, ceil_div(-off, g.s[2]));
                        const std::int64_t hi = std::min<std::int64_t>(
                            g.out[2], floor_div(g.in[2] - 1 - off, g.s[2]) + 1);
                        if (lo >= hi) continue;
                        T acc = 0;
                        for (std::int64_t n = 0; n < g.n; ++n) {
                            const T* xc = x + (n * g.ci + ci) * isp;
                            const T* gyc = gy + (n * g.co + co) * osp;
                            for (std::int64_t od = 0; od < g.out[0]; ++od) {
                                const std::int64_t id = od * g.s[0] - g.p[0] + kd;
                                if (id < 0 || id >= g.in[0]) continue;
                                for (std::int64_t oh = 0; oh < g.out[1]; ++oh) {
                                    const std::int64_t ih = oh * g.s[1] - g.p[1] + kh;
                                    if (ih < 0 || ih >= g.in[1]) continue;
                                    const T* xrow = xc + (id * g.in[1] + ih) * g.in[2];
                                    const T* gyrow = gyc + (od * g.out[1] + oh) * g.out[2];
                                    if (g.s[2] == 1) {
                                        const T* xs = xrow + off;
                                        for (std::int64_t ow = lo; ow < hi; ++ow)
                                            acc += gyrow[ow] * xs[ow];
                                    } else {
                                        for (std::int64_t ow = lo; ow < hi; ++ow)
                                            acc += gyrow[ow] * xrow[ow * g.s[2] + off];
                                    }
                                }
                            }
                        }
                        gwc[(kd * g.k[1] + kh) * g.k[2] + kw] += acc;
                    }
        }
    }
}

// weight-grad target may be null when only the bias needs gradients
template <typename T>
void conv_weight_grad_kernel_sel(const ConvGeom& g, const T* x, const T* gy, T* gw, T* gb) {
    if (gw) {
        conv_weight_grad_kernel(g, x, gy, gw, gb);
    } else if (gb) {
        const std::int64_t osp = g.out_sp();
        for (std::int64_t n = 0; n < g.n; ++n)
            for (std::int64_t co = 0; co < g.co; ++co) {
                T acc = 0;
                const T* gyc = gy + (n * g.co + co) * osp;
                for (std::int64_t i = 0; i < osp; ++i) acc += gyc[i];
                gb[co] += acc;
            }
    }
}

inline int spatial_rank(const Shape& s) {
    if (s.size() != 4 && s.size() != 5)
        throw ShapeError("conv: tensor must be (N,C,H,W) or (N,C,D,H,W), got " + shape_str(s));
    return static_cast<int>(s.size()) - 2;
}

} // namespace detail

// Standard cross-correlation. x: (N,C,spatial), w: (OC,IC,kernel),
// b: per-OC bias or an invalid tensor for none. Same stride/padding on
// every spatial axis. Output spatial size: floor((in + 2p - k)/s) + 1.
template <typename T>
Tensor<T> conv(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
               std::int64_t stride, std::int64_t padding) {
    const int rank = detail::spatial_rank(x.shape());
    if (static_cast<int>(w.ndim()) - 2 != rank)
        throw ShapeError("conv: weight rank does not match input rank");
    if (w.shape()[1] != x.shape()[1])
        throw ShapeError("conv: input channels " + std::to_string(x.shape()[1]) +
                         " vs weight in-channels " + std::to_string(w.shape()[1]));
    if (stride < 1) throw ValueError("conv: stride must be >= 1");
    if (padding < 0) throw ValueError("conv: padding must be >= 0");
    if (b.valid() && (b.ndim() != 1 || b.shape()[0] != w.shape()[0]))
        throw ShapeError("conv: bias shape must be (OC)");

    detail::ConvGeom g;
    g.n = static_cast<std::int64_t>(x.shape()[0]);
    g.ci = static_cast<std::int64_t>(x.shape()[1]);
    g.co = static_cast<std::int64_t>(w.shape()[0]);
    Shape out_shape = x.shape();
    out_shape[1] = w.shape()[0];
    for (int a = 0; a < rank; ++a) {
        const int ax = 3 - rank + a;
        g.in[ax] = static_cast<std::int64_t>(x.shape()[2 + a]);
        g.k[ax] = static_cast<std::int64_t>(w.shape()[2 + a]);
        g.s[ax] = stride;
        g.p[ax] = padding;
        if (g.in[ax] + 2 * padding < g.k[ax])
            throw ShapeError("conv: kernel larger than padded input");
        const std::int64_t o = (g.in[ax] + 2 * padding - g.k[ax]) / stride + 1;
        g.out[ax] = o;
        out_shape[2 + a] = static_cast<std::size_t>(o);
    }

    std::vector<T> y(static_cast<std::size_t>(g.n * g.co * g.out_sp()));
    detail::conv_forward_kernel(g, x.data(), w.data(), b.valid() ? b.data() : nullptr, y.data());

    std::vector<std::shared_ptr<detail::Node<T>>> parents = {x.node(), w.node()};
    if (b.valid()) parents.push_back(b.node());
    const bool has_bias = b.valid();
    return Tensor<T>::make_op(std::move(out_shape), std::move(y), std::move(parents),
        [g, has_bias](detail::Node<T>& self) {
            auto& px = *self.parents[0];
            auto& pw = *self.parents[1];
            const T* gy = self.grad.data();
            if (px.requires_grad)
                detail::conv_input_grad_kernel(g, gy, pw.values.data(), px.ensure_grad().data());
            T* gb = nullptr;
            if (has_bias && self.parents[2]->requires_grad)
                gb = self.parents[2]->ensure_grad().data();
            if (pw.requires_grad || gb)
                detail::conv_weight_grad_kernel_sel(g, px.values.data(), gy,
                                                    pw.requires_grad ? pw.ensure_grad().data()
                                                                     : nullptr,
                                                    gb);
        });
}

// Transposed convolution (adjoint of conv with the same geometry).
// x: (N,C,spatial), w: (IC,OC,kernel). Output spatial: (in-1)*s - 2p + k.
template <typename T>
Tensor<T> conv_transpose(const Tensor<T>& x, const Tensor<T>& w,
                         std::int64_t stride, std::int64_t padding = 0) {
    const int rank = detail::spatial_rank(x.shape());
    if (static_cast<int>(w.ndim()) - 2 != rank)
        throw ShapeError("conv_transpose: weight rank does not match input rank");
    if (w.shape()[0] != x.shape()[1])
        throw ShapeError("conv_transpose: input channels " + std::to_string(x.shape()[1]) +
                         " vs weight in-channels " + std::to_string(w.shape()[0]));
    if (stride < 1) throw ValueError("conv_transpose: stride must be >= 1");
    if (padding < 0) throw ValueError("conv_transpose: padding must be >= 0");

    // geometry of the adjoint convolution: its "input" is this op's output
    detail::ConvGeom g;
    g.n = static_cast<std::int64_t>(x.shape()[0]);
    g.co = static_cast<std::int64_t>(x.shape()[1]); // kernel's out-ch = our in-ch
    g.ci = static_cast<std::int64_t>(w.shape()[1]); // kernel's in-ch = our out-ch
    Shape out_shape = x.shape();
    out_shape[1] = w.shape()[1];
    for (int a = 0; a < rank; ++a) {
        const int ax = 3 - rank + a;
        g.out[ax] = static_cast<std::int64_t>(x.shape()[2 + a]);
        g.k[ax] = static_cast<std::int64_t>(w.shape()[2 + a]);
        g.s[ax] = stride;
        g.p[ax] = padding;
        const std::int64_t o = (g.out[ax] - 1) * stride - 2 * padding + g.k[ax];
        if (o < 1) throw ShapeError("conv_transpose: output size would be empty");
        g.in[ax] = o;
        out_shape[2 + a] = static_cast<std::size_t>(o);
    }

    std::vector<T> y(static_cast<std::size_t>(g.n * g.ci * g.in_sp()), T(0));
    detail::conv_input_grad_kernel(g, x.data(), w.data(), y.data());

    return Tensor<T>::make_op(std::move(out_shape), std::move(y), {x.node(), w.node()},
        [g](detail::Node<T>& self) {
            auto& px = *self.parents[0];
            auto& pw = *self.parents[1];
            if (px.requires_grad)
                detail::conv_forward_kernel(g, self.grad.data(), pw.values.data(),
                                            static_cast<const T*>(nullptr),
                                            px.ensure_grad().data(), /*accumulate=*/true);
            if (pw.requires_grad)
                detail::conv_weight_grad_kernel(g, self.grad.data(), px.values.data(),
                                                pw.ensure_grad().data(),
                                                static_cast<T*>(nullptr));
        });
}

namespace detail {
inline std::size_t channel_count(const Shape& s) {
    if (s.size() < 2) throw ShapeError("expected (N,C,...) tensor");
    return s[1];
}
} // namespace detail

// Batch normalization, training mode: normalizes with biased batch statistics
// over (N, spatial) per channel. batch_mean/batch_var are written out so the
// caller can maintain running statistics.
template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                           T eps, std::vector<T>* batch_mean, std::vector<T>* batch_var) {
    const std::size_t c = detail::channel_count(x.shape());
    if (gamma.size() != c || beta.size() != c)
        throw ShapeError("batch_norm: scale/shift must have one value per channel");
    const std::size_t n = x.shape()[0];
    std::size_t sp = 1;
    for (std::size_t i = 2; i < x.ndim(); ++i) sp *= x.shape()[i];
    const std::size_t m = n * sp;

    std::vector<T> mean(c, T(0)), var(c, T(0)), invstd(c, T(0));
    const T* px = x.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        T acc = 0;
        for (std::size_t b = 0; b < n; ++b) {
            const T* xc = px + (b * c + ch) * sp;
            for (std::size_t i = 0; i < sp; ++i) acc += xc[i];
        }
        mean[ch] = acc / static_cast<T>(m);
        T vacc = 0;
        for (std::size_t b = 0; b < n; ++b) {
            const T* xc = px + (b * c + ch) * sp;
            for (std::size_t i = 0; i < sp; ++i) {
                const T d = xc[i] - mean[ch];
                vacc += d * d;
            }
        }
        var[ch] = vacc / static_cast<T>(m);
        invstd[ch] = T(1) / std::sqrt(var[ch] + eps);
    }
    if (batch_mean) *batch_mean = mean;
    if (batch_var) *batch_var = var;

    std::vector<T> xhat(x.size());
    std::vector<T> out(x.size());
    const T* pg = gamma.data();
    const T* pb = beta.data();
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* xc = px + (b * c + ch) * sp;
            T* hc = xhat.data() + (b * c + ch) * sp;
            T* oc = out.data() + (b * c + ch) * sp;
            const T mu = mean[ch], is = invstd[ch], ga = pg[ch], be = pb[ch];
            for (std::size_t i = 0; i < sp; ++i) {
                hc[i] = (xc[i] - mu) * is;
                oc[i] = ga * hc[i] + be;
            }
        }

    return Tensor<T>::make_op(x.shape(), std::move(out), {x.node(), gamma.node(), beta.node()},
        [n, c, sp, m, xhat = std::move(xhat), invstd = std::move(invstd)](detail::Node<T>& self) {
            auto& px_ = *self.parents[0];
            auto& pg_ = *self.parents[1];
            auto& pb_ = *self.parents[2];
            const auto& gy = self.grad;
            const T* gam = pg_.values.data();
            for (std::size_t ch = 0; ch < c; ++ch) {
                // channel-wise sums needed by every term
                T sum_gy = 0, sum_gy_xhat = 0;
                for (std::size_t b = 0; b < n; ++b) {
                    const std::size_t base = (b * c + ch) * sp;
                    for (std::size_t i = 0; i < sp; ++i) {
                        sum_gy += gy[base + i];
                        sum_gy_xhat += gy[base + i] * xhat[base + i];
                    }
                }
                if (pb_.requires_grad) pb_.ensure_grad()[ch] += sum_gy;
                if (pg_.requires_grad) pg_.ensure_grad()[ch] += sum_gy_xhat;
                if (px_.requires_grad) {
                    auto& gx = px_.ensure_grad();
                    const T is = invstd[ch], ga = gam[ch];
                    const T mg = sum_gy / static_cast<T>(m);
                    const T mgx = sum_gy_xhat / static_cast<T>(m);
                    for (std::size_t b = 0; b < n; ++b) {
                        const std::size_t base = (b * c + ch) * sp;
                        for (std::size_t i = 0; i < sp; ++i)
                            gx[base + i] += ga * is * (gy[base + i] - mg - xhat[base + i] * mgx);
                    }
                }
            }
        });
}

// Batch normalization, eval mode: per-channel affine using running stats.
template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          const std::vector<T>& mean, const std::vector<T>& var, T eps) {
    const std::size_t c = detail::channel_count(x.shape());
    if (gamma.size() != c || beta.size() != c || mean.size() != c || var.size() != c)
        throw ShapeError("batch_norm_eval: per-channel shapes mismatch");
    const std::size_t n = x.shape()[0];
    std::size_t sp = 1;
    for (std::size_t i = 2; i < x.ndim(); ++i) sp *= x.shape()[i];

    std::vector<T> invstd(c);
    for (std::size_t ch = 0; ch < c; ++ch) invstd[ch] = T(1) / std::sqrt(var[ch] + eps);

    std::vector<T> out(x.size());
    const T* px = x.data();
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* xc = px + (b * c + ch) * sp;
            T* oc = out.data() + (b * c + ch) * sp;
            const T mu = mean[ch], is = invstd[ch];
            const T ga = gamma.data()[ch], be = beta.data()[ch];
            for (std::size_t i = 0; i < sp; ++i) oc[i] = ga * (xc[i] - mu) * is + be;
        }

    return Tensor<T>::make_op(x.shape(), std::move(out), {x.node(), gamma.node(), beta.node()},
        [n, c, sp, mean, invstd](detail::Node<T>& self) {
            auto& px_ = *self.parents[0];
            auto& pg_ = *self.parents[1];
            auto& pb_ = *self.parents[2];
            const auto& gy = self.grad;
            const T* gam = pg_.values.data();
            for (std::size_t ch = 0; ch < c; ++ch) {
                T sum_gy = 0, sum_gy_xhat = 0;
                for (std::size_t b = 0; b < n; ++b) {
                    const std::size_t base = (b * c + ch) * sp;
                    for (std::size_t i = 0; i < sp; ++i) {
                        sum_gy += gy[base + i];
                        sum_gy_xhat += gy[base + i] * (px_.values[base + i] - mean[ch]) * invstd[ch];
                    }
                }
                if (pb_.requires_grad) pb_.ensure_grad()[ch] += sum_gy;
                if (pg_.requires_grad) pg_.ensure_grad()[ch] += sum_gy_xhat;
                if (px_.requires_grad) {
                    auto& gx = px_.ensure_grad();
                    const T k = gam[ch] * invstd[ch];
                    for (std::size_t b = 0; b < n; ++b) {
                        const std::size_t base = (b * c + ch) * sp;
                        for (std::size_t i = 0; i < sp; ++i) gx[base + i] += k * gy[base + i];
                    }
                }
            }
        });
}

// Mean voxel-wise -log p(target). probs: (N,K,spatial) channel probabilities,
// labels: flat (N*spatial) class ids. p is clamped below at `eps`.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& probs, const std::vector<std::uint8_t>& labels,
                        T eps = T(1e-12)) {
    const std::size_t k = detail::channel_count(probs.shape());
    const std::size_t n = probs.shape()[0];
    std::size_t sp = 1;
    for (std::size_t i = 2; i < probs.ndim(); ++i) sp *= probs.shape()[i];
    if (labels.size() != n * sp)
        throw ShapeError("cross_entropy: label count " + std::to_string(labels.size()) +
                         " != voxel count " + std::to_string(n * sp));
    const std::size_t vox = n * sp;
    const T* pp = probs.data();
    T acc = 0;
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t v = 0; v < sp; ++v) {
            const std::uint8_t t = labels[b * sp + v];
            if (t >= k) throw ValueError("cross_entropy: label " + std::to_string(t) +
                                         " out of range for " + std::to_string(k) + " classes");
            const T p = pp[(b * k + t) * sp + v];
            acc -= std::log(p > eps ? p : eps);
        }
    acc /= static_cast<T>(vox);

    return Tensor<T>::make_op({1}, {acc}, {probs.node()},
        [k, n, sp, vox, labels, eps](detail::Node<T>& self) {
            auto& p_ = *self.parents[0];
            if (!p_.requires_grad) return;
            auto& gx = p_.ensure_grad();
            const T g = self.grad[0] / static_cast<T>(vox);
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t v = 0; v < sp; ++v) {
                    const std::uint8_t t = labels[b * sp + v];
                    const std::size_t i = (b * k + t) * sp + v;
                    const T p = p_.values[i];
                    if (p > eps) gx[i] -= g / p;
                }
        });
}

enum class DiceMode { Multiclass, Binary };

// Soft Dice loss: 1 - mean_c (2*sum(p*q) + eps) / (sum p + sum q + eps),
// pooled over batch and spatial dims. Multiclass averages the foreground
// classes 1..K-1; Binary uses channel 1 (the positive/error class) only.
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& probs, const Tensor<T>& target_one_hot, DiceMode mode,
                    T eps = T(1e-5)) {
    if (probs.shape() != target_one_hot.shape())
        throw ShapeError("dice_loss: probs shape " + shape_str(probs.shape()) +
                         " != target shape " + shape_str(target_one_hot.shape()));
    const std::size_t k = detail::channel_count(probs.shape());
    if (k < 2) throw ShapeError("dice_loss: need at least 2 channels");
    const std::size_t n = probs.shape()[0];
    std::size_t sp = 1;
    for (std::size_t i = 2; i < probs.ndim(); ++i) sp *= probs.shape()[i];

    std::size_t c_lo = 1;
    std::size_t c_hi = (mode == DiceMode::Binary) ? 2 : k;
    const std::size_t nclasses = c_hi - c_lo;

    const T* pp = probs.data();
    const T* pq = target_one_hot.data();
    std::vector<T> num(k, T(0)), den(k, T(0));
    T loss_acc = 0;
    for (std::size_t c = c_lo; c < c_hi; ++c) {
        T sp_sum = 0, sq_sum = 0, spq = 0;
        for (std::size_t b = 0; b < n; ++b) {
            const std::size_t base = (b * k + c) * sp;
            for (std::size_t i = 0; i < sp; ++i) {
                sp_sum += pp[base + i];
                sq_sum += pq[base + i];
                spq += pp[base + i] * pq[base + i];
            }
        }
        num[c] = 2 * spq + eps;
        den[c] = sp_sum + sq_sum + eps;
        loss_acc += num[c] / den[c];
    }
    const T loss = T(1) - loss_acc / static_cast<T>(nclasses);

    return Tensor<T>::make_op({1}, {loss}, {probs.node(), target_one_hot.node()},
        [k, n, sp, c_lo, c_hi, nclasses, num, den](detail::Node<T>& self) {
            auto& p_ = *self.parents[0];
            auto& q_ = *self.parents[1];
            if (!p_.requires_grad) return; // targets are constants
            (void)q_;
            auto& gx = p_.ensure_grad();
            const T g = self.grad[0] / static_cast<T>(nclasses);
            const T* pq2 = q_.values.data();
            for (std::size_t c = c_lo; c < c_hi; ++c) {
                const T d = den[c], nm = num[c];
                const T inv_d2 = T(1) / (d * d);
                for (std::size_t b = 0; b < n; ++b) {
                    const std::size_t base = (b * k + c) * sp;
                    for (std::size_t i = 0; i < sp; ++i) {
                        // dD/dp = (2q*den - num) / den^2 ; dL/dp = -g * dD/dp
                        gx[base + i] -= g * (2 * pq2[base + i] * d - nm) * inv_d2;
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// parameters and optimizers

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    bool trainable = true;
};

template <typename T>
void zero_grads(std::vector<Parameter<T>>& params) {
    for (auto& p : params) p.value.zero_grad();
}

template <typename T>
class AdamOptimizer {
public:
    explicit AdamOptimizer(T lr = T(1e-3), T beta1 = T(0.9), T beta2 = T(0.999),
                           T eps = T(1e-8))
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::vector<Parameter<T>>& params) {
        if (m_.empty()) {
            m_.resize(params.size());
            v_.resize(params.size());
            for (std::size_t i = 0; i < params.size(); ++i) {
                m_[i].assign(params[i].value.size(), T(0));
                v_[i].assign(params[i].value.size(), T(0));
            }
        }
        if (m_.size() != params.size())
            throw ValueError("optimizer: parameter list changed size");
        ++t_;
        const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
        const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (!params[i].trainable) continue;
            auto& val = params[i].value.values();
            if (m_[i].size() != val.size())
                throw ValueError("optimizer: moment shape mismatch for " + params[i].name);
            const auto& g = params[i].value.grad();
            for (std::size_t j = 0; j < val.size(); ++j) {
                m_[i][j] = beta1_ * m_[i][j] + (T(1) - beta1_) * g[j];
                v_[i][j] = beta2_ * v_[i][j] + (T(1) - beta2_) * g[j] * g[j];
                const T mhat = m_[i][j] / bc1;
                const T vhat = v_[i][j] / bc2;
                val[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    std::int64_t step_count() const { return t_; }
    T learning_rate() const { return lr_; }
    void set_learning_rate(T lr) { lr_ = lr; }

private:
    T lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

template <typename T>
class SgdOptimizer {
public:
    explicit SgdOptimizer(T lr = T(1e-2)) : lr_(lr) {}

    void step(std::vector<Parameter<T>>& params) {
        ++t_;
        for (auto& p : params) {
            if (!p.trainable) continue;
            auto& val = p.value.values();
            const auto& g = p.value.grad();
            for (std::size_t j = 0; j < val.size(); ++j) val[j] -= lr_ * g[j];
        }
    }

    std::int64_t step_count() const { return t_; }
    T learning_rate() const { return lr_; }

private:
    T lr_;
    std::int64_t t_ = 0;
};

// fan-in-scaled Gaussian (He) init for conv weights; biases stay zero
template <typename T>
Tensor<T> he_normal(const Shape& shape, Rng& rng) {
    std::size_t fan_in = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.normal() * std);
    return Tensor<T>::from_values(shape, std::move(v));
}

// ---------------------------------------------------------------------------
// finite-difference gradient checking

template <typename T>
struct GradCheckResult {
    T max_rel_err = T(0);
    std::string worst; // "param[index]"
    bool ok(T tol) const { return max_rel_err < tol; }
};

// Central differences (f(x+h) - f(x-h)) / 2h for every element of every
// trainable parameter, compared against one analytic backward pass.
// `forward` must rebuild the graph from the parameters' current values.
template <typename T>
GradCheckResult<T> grad_check(const std::function<Tensor<T>()>& forward,
                              std::vector<Parameter<T>>& params,
                              T h_scale = std::is_same_v<T, double> ? T(1e-5) : T(5e-3)) {
    zero_grads(params);
    Tensor<T> loss = forward();
    backward(loss);
    std::vector<std::vector<T>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) analytic.push_back(p.value.grad());

    GradCheckResult<T> res;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        if (!params[pi].trainable) continue;
        auto& vals = params[pi].value.values();
        for (std::size_t j = 0; j < vals.size(); ++j) {
            const T x0 = vals[j];
            const T h = h_scale * std::max(T(1), std::abs(x0));
            vals[j] = x0 + h;
            const T fp = forward().item();
            vals[j] = x0 - h;
            const T fm = forward().item();
            vals[j] = x0;
            const T numeric = (fp - fm) / (2 * h);
            const T a = analytic[pi][j];
            const T denom = std::max({T(1), std::abs(a), std::abs(numeric)});
            const T rel = std::abs(a - numeric) / denom;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = params[pi].name + "[" + std::to_string(j) + "]";
            }
        }
    }
    return res;
}

} // namespace voxqa::nn
