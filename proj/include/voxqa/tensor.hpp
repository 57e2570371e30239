#pragma once

// Minimal dynamic-graph autodiff tensor. Each op records a backprop closure
// on its output node; backward() walks the graph in reverse topological
// order and accumulates into leaf gradients. float is the training scalar,
// double is used by the finite-difference checks.
//
// Determinism contract: every kernel computes each output element as one
// sequential reduction in a fixed order, so results are bitwise reproducible
// for a given seed, with or without OpenMP.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "voxqa/errors.hpp"

namespace voxqa::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad; // empty until first needed, then values.size()
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    std::size_t size() const { return values.size(); }

    std::vector<T>& ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), T(0));
        return grad;
    }
};

// Thread-local switch used by inference paths to skip taping.
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

} // namespace detail

struct NoGradGuard {
    NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

template <typename T>
class Tensor {
public:
    using Node = detail::Node<T>;

    Tensor() = default;

    static Tensor zeros(Shape shape) { return filled(std::move(shape), T(0)); }

    static Tensor filled(Shape shape, T v) {
        Tensor t;
        t.n_ = std::make_shared<Node>();
        t.n_->shape = std::move(shape);
        t.n_->values.assign(shape_numel(t.n_->shape), v);
        return t;
    }

    static Tensor from_values(Shape shape, std::vector<T> values) {
        if (shape_numel(shape) != values.size())
            throw ShapeError("tensor: values length " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
        Tensor t;
        t.n_ = std::make_shared<Node>();
        t.n_->shape = std::move(shape);
        t.n_->values = std::move(values);
        return t;
    }

    static Tensor scalar(T v) { return filled({1}, v); }

    bool valid() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    std::size_t size() const { return n_->values.size(); }
    std::size_t ndim() const { return n_->shape.size(); }

    std::vector<T>& values() { return n_->values; }
    const std::vector<T>& values() const { return n_->values; }
    T* data() { return n_->values.data(); }
    const T* data() const { return n_->values.data(); }

    T item() const {
        if (size() != 1) throw ShapeError("item: tensor is not scalar");
        return n_->values[0];
    }

    bool requires_grad() const { return n_->requires_grad; }
    Tensor& set_requires_grad(bool b) {
        n_->requires_grad = b;
        return *this;
    }

    std::vector<T>& grad() { return n_->ensure_grad(); }
    const std::vector<T>& grad() const {
        const_cast<Node*>(n_.get())->ensure_grad();
        return n_->grad;
    }
    void zero_grad() {
        auto& g = n_->ensure_grad();
        std::fill(g.begin(), g.end(), T(0));
    }

    std::shared_ptr<Node> node() const { return n_; }

    // Internal: wrap an op result. Parents are recorded and the closure kept
    // only while grad mode is on and some parent needs gradients.
    static Tensor make_op(Shape shape, std::vector<T> values,
                          std::vector<std::shared_ptr<Node>> parents,
                          std::function<void(Node&)> backprop) {
        Tensor t = from_values(std::move(shape), std::move(values));
        bool needs = false;
        if (grad_enabled()) {
            for (const auto& p : parents)
                if (p->requires_grad) { needs = true; break; }
        }
        if (needs) {
            t.n_->requires_grad = true;
            t.n_->parents = std::move(parents);
            t.n_->backprop = std::move(backprop);
        }
        return t;
    }

private:
    std::shared_ptr<Node> n_;
};

// ---------------------------------------------------------------------------
// backward

template <typename T>
void backward(Tensor<T> loss) {
    if (!loss.valid()) throw ValueError("backward: empty tensor");
    if (loss.size() != 1) throw ValueError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    auto root = loss.node();
    if (!root->backprop && root->parents.empty())
        throw ValueError("backward: no recorded computation leads to this loss (forward pass missing?)");

    // post-order DFS -> reverse topological order
    std::vector<detail::Node<T>*> order;
    std::unordered_set<detail::Node<T>*> seen;
    std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            detail::Node<T>* p = node->parents[idx++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backprop) {
            (*it)->ensure_grad();
            (*it)->backprop(**it);
        }
    }
}

// ---------------------------------------------------------------------------
// elementwise and structural ops

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<T> out(a.size());
    const T* pa = a.data();
    const T* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
    return Tensor<T>::make_op(a.shape(), std::move(out), {a.node(), b.node()},
        [](detail::Node<T>& self) {
            const auto& g = self.grad;
            for (int k = 0; k < 2; ++k) {
                auto& p = *self.parents[k];
                if (!p.requires_grad) continue;
                auto& pg = p.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
            }
        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    std::vector<T> out(x.size());
    const T* px = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] > T(0) ? px[i] : T(0);
    return Tensor<T>::make_op(x.shape(), std::move(out), {x.node()},
        [](detail::Node<T>& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            auto& pg = p.ensure_grad();
            for (std::size_t i = 0; i < self.values.size(); ++i)
                if (p.values[i] > T(0)) pg[i] += self.grad[i];
        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
    std::vector<T> out(x.size());
    const T* px = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] * factor;
    return Tensor<T>::make_op(x.shape(), std::move(out), {x.node()},
        [factor](detail::Node<T>& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            auto& pg = p.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pg[i] += factor * self.grad[i];
        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mul: shape mismatch");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return Tensor<T>::make_op(a.shape(), std::move(out), {a.node(), b.node()},
        [](detail::Node<T>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) {
                auto& g = pa.ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pb.values[i];
            }
            if (pb.requires_grad) {
                auto& g = pb.ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pa.values[i];
            }
        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T acc = 0;
    const T* px = x.data();
    for (std::size_t i = 0; i < x.size(); ++i) acc += px[i];
    return Tensor<T>::make_op({1}, {acc}, {x.node()},
        [](detail::Node<T>& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            auto& pg = p.ensure_grad();
            const T g = self.grad[0];
            for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g;
        });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

// softmax over dim 1 of (N, C, spatial...)
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
    if (x.ndim() < 2) throw ShapeError("softmax_channels: need at least (N,C) dims");
    const std::size_t n = x.shape()[0];
    const std::size_t c = x.shape()[1];
    std::size_t sp = 1;
    for (std::size_t i = 2; i < x.ndim(); ++i) sp *= x.shape()[i];

    std::vector<T> out(x.size());
    const T* px = x.data();
    for (std::size_t b = 0; b < n; ++b) {
        const std::size_t base = b * c * sp;
        for (std::size_t v = 0; v < sp; ++v) {
            T mx = px[base + v];
            for (std::size_t ch = 1; ch < c; ++ch) mx = std::max(mx, px[base + ch * sp + v]);
            T denom = 0;
            for (std::size_t ch = 0; ch < c; ++ch) {
                const T e = std::exp(px[base + ch * sp + v] - mx);
                out[base + ch * sp + v] = e;
                denom += e;
            }
            const T inv = T(1) / denom;
            for (std::size_t ch = 0; ch < c; ++ch) out[base + ch * sp + v] *= inv;
        }
    }
    return Tensor<T>::make_op(x.shape(), std::move(out), {x.node()},
        [n, c, sp](detail::Node<T>& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            auto& pg = p.ensure_grad();
            const auto& y = self.values;
            const auto& gy = self.grad;
            for (std::size_t b = 0; b < n; ++b) {
                const std::size_t base = b * c * sp;
                for (std::size_t v = 0; v < sp; ++v) {
                    T dot = 0;
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const std::size_t i = base + ch * sp + v;
                        dot += gy[i] * y[i];
                    }
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const std::size_t i = base + ch * sp + v;
                        pg[i] += y[i] * (gy[i] - dot);
                    }
                }
            }
        });
}

// concat along dim 1; all inputs share every other dim
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw ValueError("concat_channels: no inputs");
    const Shape& s0 = xs[0].shape();
    if (s0.size() < 2) throw ShapeError("concat_channels: need at least (N,C) dims");
    std::size_t sp = 1;
    for (std::size_t i = 2; i < s0.size(); ++i) sp *= s0[i];
    const std::size_t n = s0[0];
    std::size_t ctot = 0;
    for (const auto& x : xs) {
        if (x.ndim() != s0.size() || x.shape()[0] != n)
            throw ShapeError("concat_channels: rank/batch mismatch");
        for (std::size_t i = 2; i < s0.size(); ++i)
            if (x.shape()[i] != s0[i]) throw ShapeError("concat_channels: spatial mismatch");
        ctot += x.shape()[1];
    }
    Shape out_shape = s0;
    out_shape[1] = ctot;
    std::vector<T> out(n * ctot * sp);
    std::vector<std::shared_ptr<detail::Node<T>>> parents;
    std::vector<std::size_t> coffs;
    std::size_t coff = 0;
    for (const auto& x : xs) {
        const std::size_t cx = x.shape()[1];
        const T* px = x.data();
        for (std::size_t b = 0; b < n; ++b)
            std::copy(px + b * cx * sp, px + (b + 1) * cx * sp,
                      out.begin() + static_cast<std::ptrdiff_t>(b * ctot * sp + coff * sp));
        parents.push_back(x.node());
        coffs.push_back(coff);
        coff += cx;
    }
    return Tensor<T>::make_op(std::move(out_shape), std::move(out), std::move(parents),
        [n, sp, ctot, coffs](detail::Node<T>& self) {
            for (std::size_t k = 0; k < self.parents.size(); ++k) {
                auto& p = *self.parents[k];
                if (!p.requires_grad) continue;
                auto& pg = p.ensure_grad();
                const std::size_t cx = p.shape[1];
                for (std::size_t b = 0; b < n; ++b) {
                    const T* src = self.grad.data() + b * ctot * sp + coffs[k] * sp;
                    T* dst = pg.data() + b * cx * sp;
                    for (std::size_t i = 0; i < cx * sp; ++i) dst[i] += src[i];
                }
            }
        });
}

// crop spatial dims of (N, C, spatial...) to [lo, hi) per spatial axis
template <typename T>
Tensor<T> crop_spatial(const Tensor<T>& x, const std::vector<std::size_t>& lo,
                       const std::vector<std::size_t>& hi) {
    const std::size_t rank = x.ndim() - 2;
    if (lo.size() != rank || hi.size() != rank)
        throw ShapeError("crop_spatial: bounds rank mismatch");
    // normalize to 3 spatial axes (leading size-1) to share the copy loop
    std::size_t in_sp[3] = {1, 1, 1};
    std::size_t l[3] = {0, 0, 0}, h[3] = {1, 1, 1};
    for (std::size_t i = 0; i < rank; ++i) {
        in_sp[3 - rank + i] = x.shape()[2 + i];
        l[3 - rank + i] = lo[i];
        h[3 - rank + i] = hi[i];
        if (lo[i] >= hi[i] || hi[i] > x.shape()[2 + i])
            throw ShapeError("crop_spatial: bounds out of range");
    }
    const std::size_t n = x.shape()[0], c = x.shape()[1];
    Shape out_shape = x.shape();
    for (std::size_t i = 0; i < rank; ++i) out_shape[2 + i] = hi[i] - lo[i];
    const std::size_t od = h[0] - l[0], oh = h[1] - l[1], ow = h[2] - l[2];
    std::vector<T> out(n * c * od * oh * ow);
    const T* px = x.data();
    std::size_t w = 0;
    for (std::size_t bc = 0; bc < n * c; ++bc) {
        const T* src = px + bc * in_sp[0] * in_sp[1] * in_sp[2];
        for (std::size_t z = l[0]; z < h[0]; ++z)
            for (std::size_t y = l[1]; y < h[1]; ++y) {
                const T* row = src + (z * in_sp[1] + y) * in_sp[2] + l[2];
                std::copy(row, row + ow, out.begin() + static_cast<std::ptrdiff_t>(w));
                w += ow;
            }
    }
    std::size_t isp0 = in_sp[0], isp1 = in_sp[1], isp2 = in_sp[2];
    std::size_t l0 = l[0], l1 = l[1], l2 = l[2];
    return Tensor<T>::make_op(std::move(out_shape), std::move(out), {x.node()},
        [n, c, isp0, isp1, isp2, l0, l1, l2, od, oh, ow](detail::Node<T>& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            auto& pg = p.ensure_grad();
            std::size_t r = 0;
            for (std::size_t bc = 0; bc < n * c; ++bc) {
                T* dst = pg.data() + bc * isp0 * isp1 * isp2;
                for (std::size_t z = 0; z < od; ++z)
                    for (std::size_t y = 0; y < oh; ++y) {
                        T* row = dst + ((z + l0) * isp1 + (y + l1)) * isp2 + l2;
                        for (std::size_t xx = 0; xx < ow; ++xx) row[xx] += self.grad[r++];
                    }
            }
        });
}

// zero-pad spatial dims, `before`/`after` voxels per spatial axis
template <typename T>
Tensor<T> pad_spatial(const Tensor<T>& x, const std::vector<std::size_t>& before,
                      const std::vector<std::size_t>& after) {
    const std::size_t rank = x.ndim() - 2;
    if (before.size() != rank || after.size() != rank)
        throw ShapeError("pad_spatial: bounds rank mismatch");
    Shape out_shape = x.shape();
    for (std::size_t i = 0; i < rank; ++i) out_shape[2 + i] += before[i] + after[i];
    std::size_t in_sp[3] = {1, 1, 1}, out_sp[3] = {1, 1, 1}, b3[3] = {0, 0, 0};
    for (std::size_t i = 0; i < rank; ++i) {
        in_sp[3 - rank + i] = x.shape()[2 + i];
        out_sp[3 - rank + i] = out_shape[2 + i];
        b3[3 - rank + i] = before[i];
    }
    const std::size_t n = x.shape()[0], c = x.shape()[1];
    std::vector<T> out(n * c * out_sp[0] * out_sp[1] * out_sp[2], T(0));
    const T* px = x.data();
    for (std::size_t bc = 0; bc < n * c; ++bc) {
        T* dst = out.data() + bc * out_sp[0] * out_sp[1] * out_sp[2];
        const T* src = px + bc * in_sp[0] * in_sp[1] * in_sp[2];
        for (std::size_t z = 0; z < in_sp[0]; ++z)
            for (std::size_t y = 0; y < in_sp[1]; ++y) {
                const T* srow = src + (z * in_sp[1] + y) * in_sp[2];
                T* drow = dst + ((z + b3[0]) * out_sp[1] + (y + b3[1])) * out_sp[2] + b3[2];
                std::copy(srow, srow + in_sp[2], drow);
            }
    }
    std::size_t isp0 = in_sp[0], isp1 = in_sp[1], isp2 = in_sp[2];
    std::size_t osp1 = out_sp[1], osp2 = out_sp[2], osp0 = out_sp[0];
    std::size_t b0 = b3[0], b1 = b3[1], b2 = b3[2];
    return Tensor<T>::make_op(std::move(out_shape), std::move(out), {x.node()},
        [n, c, isp0, isp1, isp2, osp0, osp1, osp2, b0, b1, b2](detail::Node<T>& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            auto& pg = p.ensure_grad();
            std::size_t r = 0;
            for (std::size_t bc = 0; bc < n * c; ++bc) {
                const T* gsrc = self.grad.data() + bc * osp0 * osp1 * osp2;
                for (std::size_t z = 0; z < isp0; ++z)
                    for (std::size_t y = 0; y < isp1; ++y) {
                        const T* grow = gsrc + ((z + b0) * osp1 + (y + b1)) * osp2 + b2;
                        for (std::size_t xx = 0; xx < isp2; ++xx) pg[r++] += grow[xx];
                    }
            }
        });
}

template <typename T>
bool all_finite(const Tensor<T>& x) {
    for (const T v : x.values())
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace voxqa::nn
