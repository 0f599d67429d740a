#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "tra/graph.hpp"
#include "tra/kernels.hpp"
#include "tra/tensor.hpp"

// Differentiable primitives. Every op validates shapes, computes the forward
// result through the kernel layer, and (when a graph is supplied and some
// input requires grad) records a backward closure on the tape. Passing
// g == nullptr runs forward-only.
namespace tra::ops {

template <class T>
bool track(const Graph<T>* g, std::initializer_list<Tensor<T>> inputs) {
    if (!g) return false;
    for (const auto& t : inputs) {
        if (t.defined() && t.requires_grad()) return true;
    }
    return false;
}

template <class T>
void check_rank(const Tensor<T>& t, std::int64_t rank, const char* who, const char* role) {
    require<ShapeError>(t.rank() == rank, who, ": ", role, " must be rank ", rank, ", got ",
                        shape_str(t.shape()));
}

// Floor-division output extent (a 7x7 stride-2 stem on an even input needs
// it); a window that cannot fit at all is rejected.
inline std::int64_t conv_extent(std::int64_t in, std::int64_t k, std::int64_t stride,
                                std::int64_t pad, const char* who, const char* dim) {
    require<ShapeError>(k >= 1 && stride >= 1 && pad >= 0, who, ": bad kernel/stride/padding on ",
                        dim);
    const std::int64_t span = in + 2 * pad - k;
    require<ShapeError>(span >= 0, who, ": window of ", k, " larger than padded input ",
                        in + 2 * pad, " along ", dim);
    return span / stride + 1;
}

// ---- im2col -----------------------------------------------------------------

// col is [Cin*kh*kw, OH*OW] for one sample.
template <class T>
void im2col(const T* x, std::int64_t cin, std::int64_t h, std::int64_t w, std::int64_t kh,
            std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t oh,
            std::int64_t ow, T* col) {
    for (std::int64_t c = 0; c < cin; ++c) {
        for (std::int64_t r = 0; r < kh; ++r) {
            for (std::int64_t s = 0; s < kw; ++s) {
                T* dst = col + ((c * kh + r) * kw + s) * (oh * ow);
                const T* src = x + c * h * w;
                for (std::int64_t i = 0; i < oh; ++i) {
                    const std::int64_t yi = i * stride + r - pad;
                    if (yi < 0 || yi >= h) {
                        for (std::int64_t j = 0; j < ow; ++j) dst[i * ow + j] = T(0);
                        continue;
                    }
                    for (std::int64_t j = 0; j < ow; ++j) {
                        const std::int64_t xj = j * stride + s - pad;
                        dst[i * ow + j] = (xj < 0 || xj >= w) ? T(0) : src[yi * w + xj];
                    }
                }
            }
        }
    }
}

template <class T>
void col2im_acc(const T* col, std::int64_t cin, std::int64_t h, std::int64_t w, std::int64_t kh,
                std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t oh,
                std::int64_t ow, T* x) {
    for (std::int64_t c = 0; c < cin; ++c) {
        for (std::int64_t r = 0; r < kh; ++r) {
            for (std::int64_t s = 0; s < kw; ++s) {
                const T* src = col + ((c * kh + r) * kw + s) * (oh * ow);
                T* dst = x + c * h * w;
                for (std::int64_t i = 0; i < oh; ++i) {
                    const std::int64_t yi = i * stride + r - pad;
                    if (yi < 0 || yi >= h) continue;
                    for (std::int64_t j = 0; j < ow; ++j) {
                        const std::int64_t xj = j * stride + s - pad;
                        if (xj >= 0 && xj < w) dst[yi * w + xj] += src[i * ow + j];
                    }
                }
            }
        }
    }
}

// ---- convolution ------------------------------------------------------------

// Cross-correlation of x[N,Cin,H,W] with weight[Cout,Cin,kh,kw]; bias may be
// an undefined tensor for bias-free layers.
template <class T>
Tensor<T> conv2d(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::int64_t stride, std::int64_t padding) {
    check_rank(x, 4, "conv2d", "input");
    check_rank(weight, 4, "conv2d", "weight");
    require<ShapeError>(x.dim(1) == weight.dim(1), "conv2d: input channels (dim 1) ", x.dim(1),
                        " do not match weight channels ", weight.dim(1));
    if (bias.defined()) {
        require<ShapeError>(bias.rank() == 1 && bias.dim(0) == weight.dim(0),
                            "conv2d: bias shape ", shape_str(bias.shape()),
                            " does not match output channels ", weight.dim(0));
    }
    const std::int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::int64_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    const std::int64_t oh = conv_extent(h, kh, stride, padding, "conv2d", "height (dim 2)");
    const std::int64_t ow = conv_extent(w, kw, stride, padding, "conv2d", "width (dim 3)");
    const std::int64_t k = cin * kh * kw;
    const std::int64_t ohw = oh * ow;

    Tensor<T> y = Tensor<T>::zeros({n, cout, oh, ow});
    std::vector<T> col(static_cast<std::size_t>(k * ohw));
    for (std::int64_t i = 0; i < n; ++i) {
        im2col(x.data() + i * cin * h * w, cin, h, w, kh, kw, stride, padding, oh, ow, col.data());
        kern::gemm_nn(cout, ohw, k, weight.data(), col.data(), y.data() + i * cout * ohw);
    }
    if (bias.defined()) {
        for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t c = 0; c < cout; ++c) {
                T* row = y.data() + (i * cout + c) * ohw;
                const T b = bias.data()[c];
                for (std::int64_t j = 0; j < ohw; ++j) row[j] += b;
            }
        }
    }

    if (track(g, {x, weight, bias})) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, wc = weight, bc = bias, yc = y;
        g->record("conv2d", {x, weight, bias}, y,
                  [xc, wc, bc, yc, stride, padding, n, cin, h, w, cout, kh, kw, oh, ow, k,
                   ohw]() mutable {
                      const T* dy = yc.grad().data();
                      std::vector<T> col(static_cast<std::size_t>(k * ohw));
                      std::vector<T> dcol;
                      const bool need_dx = xc.requires_grad();
                      const bool need_dw = wc.requires_grad();
                      if (need_dx) dcol.resize(static_cast<std::size_t>(k * ohw));
                      T* dw = need_dw ? wc.grad().data() : nullptr;
                      T* dx = need_dx ? xc.grad().data() : nullptr;
                      for (std::int64_t i = 0; i < n; ++i) {
                          const T* dyi = dy + i * cout * ohw;
                          if (need_dw) {
                              im2col(xc.data() + i * cin * h * w, cin, h, w, kh, kw, stride,
                                     padding, oh, ow, col.data());
                              kern::gemm_nt(cout, k, ohw, dyi, col.data(), dw, true);
                          }
                          if (need_dx) {
                              kern::gemm_tn(k, ohw, cout, wc.data(), dyi, dcol.data());
                              col2im_acc(dcol.data(), cin, h, w, kh, kw, stride, padding, oh, ow,
                                         dx + i * cin * h * w);
                          }
                      }
                      if (bc.defined() && bc.requires_grad()) {
                          T* db = bc.grad().data();
                          for (std::int64_t i = 0; i < n; ++i) {
                              for (std::int64_t c = 0; c < cout; ++c) {
                                  db[c] += kern::sum(dy + (i * cout + c) * ohw, ohw);
                              }
                          }
                      }
                  });
    }
    return y;
}

// ---- fully connected ----------------------------------------------------------

// y[N,Dout] = x[N,Din] * weight[Dout,Din]^T (+ bias)
template <class T>
Tensor<T> fully_connected(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& weight,
                          const Tensor<T>& bias) {
    check_rank(x, 2, "fully_connected", "input");
    check_rank(weight, 2, "fully_connected", "weight");
    require<ShapeError>(x.dim(1) == weight.dim(1), "fully_connected: input features (dim 1) ",
                        x.dim(1), " do not match weight features ", weight.dim(1));
    if (bias.defined()) {
        require<ShapeError>(bias.rank() == 1 && bias.dim(0) == weight.dim(0),
                            "fully_connected: bias shape ", shape_str(bias.shape()),
                            " does not match output features ", weight.dim(0));
    }
    const std::int64_t n = x.dim(0), din = x.dim(1), dout = weight.dim(0);

    Tensor<T> y = Tensor<T>::zeros({n, dout});
    kern::gemm_nt(n, dout, din, x.data(), weight.data(), y.data());
    if (bias.defined()) {
        for (std::int64_t i = 0; i < n; ++i) {
            kern::axpy(T(1), bias.data(), y.data() + i * dout, dout);
        }
    }

    if (track(g, {x, weight, bias})) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, wc = weight, bc = bias, yc = y;
        g->record("fully_connected", {x, weight, bias}, y, [xc, wc, bc, yc, n, din, dout]() mutable {
            const T* dy = yc.grad().data();
            if (xc.requires_grad()) kern::gemm_nn(n, din, dout, dy, wc.data(), xc.grad_data(), true);
            if (wc.requires_grad()) kern::gemm_tn(dout, din, n, dy, xc.data(), wc.grad_data(), true);
            if (bc.defined() && bc.requires_grad()) {
                T* db = bc.grad_data();
                for (std::int64_t i = 0; i < n; ++i) kern::axpy(T(1), dy + i * dout, db, dout);
            }
        });
    }
    return y;
}

// ---- pointwise ---------------------------------------------------------------

template <class T>
Tensor<T> relu(Graph<T>* g, const Tensor<T>& x) {
    Tensor<T> y = Tensor<T>::zeros(x.shape());
    kern::relu(x.data(), y.data(), x.size());
    if (track(g, {x})) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, yc = y;
        g->record("relu", {x}, y, [xc, yc]() mutable {
            kern::relu_backward(xc.data(), yc.grad().data(), xc.grad_data(), xc.size());
        });
    }
    return y;
}

template <class T>
Tensor<T> sigmoid(Graph<T>* g, const Tensor<T>& x) {
    Tensor<T> y = Tensor<T>::zeros(x.shape());
    kern::sigmoid(x.data(), y.data(), x.size());
    if (track(g, {x})) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, yc = y;
        g->record("sigmoid", {x}, y, [xc, yc]() mutable {
            const T* s = yc.data();
            const T* dy = yc.grad().data();
            T* dx = xc.grad_data();
            for (std::int64_t i = 0; i < xc.size(); ++i) dx[i] += dy[i] * s[i] * (T(1) - s[i]);
        });
    }
    return y;
}

// ---- broadcast elementwise -----------------------------------------------------

// Broadcasting is limited to expanding size-1 channel/spatial dims of 4-d
// operands (enough for channel weights [N,C,1,1] and spatial maps [N,1,H,W]);
// anything else must match exactly.
template <class T>
inline Shape broadcast_shape(const Tensor<T>& a, const Tensor<T>& b, const char* who) {
    if (a.shape() == b.shape()) return a.shape();
    require<ShapeError>(a.rank() == 4 && b.rank() == 4, who, ": shapes ", shape_str(a.shape()),
                        " and ", shape_str(b.shape()),
                        " differ and are not 4-d broadcast candidates");
    require<ShapeError>(a.dim(0) == b.dim(0), who, ": batch (dim 0) mismatch ", a.dim(0), " vs ",
                        b.dim(0));
    Shape out(4);
    out[0] = a.dim(0);
    for (int d = 1; d < 4; ++d) {
        const std::int64_t ad = a.dim(d), bd = b.dim(d);
        require<ShapeError>(ad == bd || ad == 1 || bd == 1, who, ": dim ", d, " not broadcastable (",
                            ad, " vs ", bd, ")");
        out[static_cast<std::size_t>(d)] = std::max(ad, bd);
    }
    return out;
}

namespace detail {

struct BcastPlan {
    std::array<std::int64_t, 4> out;
    std::array<std::int64_t, 4> sa;
    std::array<std::int64_t, 4> sb;
};

template <class T>
BcastPlan bcast_plan(const Tensor<T>& a, const Tensor<T>& b, const Shape& out) {
    BcastPlan p{};
    std::array<std::int64_t, 4> da{}, db{};
    for (int d = 0; d < 4; ++d) {
        p.out[static_cast<std::size_t>(d)] = out[static_cast<std::size_t>(d)];
        da[static_cast<std::size_t>(d)] = a.dim(d);
        db[static_cast<std::size_t>(d)] = b.dim(d);
    }
    std::array<std::int64_t, 4> ca{1, 1, 1, 1}, cb{1, 1, 1, 1};
    for (int d = 2; d >= 0; --d) {
        ca[static_cast<std::size_t>(d)] = ca[static_cast<std::size_t>(d + 1)] * da[static_cast<std::size_t>(d + 1)];
        cb[static_cast<std::size_t>(d)] = cb[static_cast<std::size_t>(d + 1)] * db[static_cast<std::size_t>(d + 1)];
    }
    for (int d = 0; d < 4; ++d) {
        p.sa[static_cast<std::size_t>(d)] = da[static_cast<std::size_t>(d)] == 1 ? 0 : ca[static_cast<std::size_t>(d)];
        p.sb[static_cast<std::size_t>(d)] = db[static_cast<std::size_t>(d)] == 1 ? 0 : cb[static_cast<std::size_t>(d)];
    }
    return p;
}

// Applies fn(out_index, a_index, b_index) over the broadcast iteration space.
template <class F>
void bcast_foreach(const BcastPlan& p, F&& fn) {
    std::int64_t o = 0;
    for (std::int64_t i0 = 0; i0 < p.out[0]; ++i0)
        for (std::int64_t i1 = 0; i1 < p.out[1]; ++i1)
            for (std::int64_t i2 = 0; i2 < p.out[2]; ++i2) {
                const std::int64_t base_a = i0 * p.sa[0] + i1 * p.sa[1] + i2 * p.sa[2];
                const std::int64_t base_b = i0 * p.sb[0] + i1 * p.sb[1] + i2 * p.sb[2];
                for (std::int64_t i3 = 0; i3 < p.out[3]; ++i3, ++o) {
                    fn(o, base_a + i3 * p.sa[3], base_b + i3 * p.sb[3]);
                }
            }
}

} // namespace detail

template <class T>
Tensor<T> elementwise_add(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b) {
    const Shape out_shape = broadcast_shape(a, b, "elementwise_add");
    Tensor<T> y = Tensor<T>::zeros(out_shape);
    const bool same = a.shape() == b.shape();
    if (same) {
        kern::add(a.data(), b.data(), y.data(), y.size());
    } else {
        const auto plan = detail::bcast_plan(a, b, out_shape);
        const T* pa = a.data();
        const T* pb = b.data();
        T* py = y.data();
        detail::bcast_foreach(plan, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
            py[o] = pa[ia] + pb[ib];
        });
    }
    if (track(g, {a, b})) {
        y.set_requires_grad(true);
        Tensor<T> ac = a, bc = b, yc = y;
        g->record("elementwise_add", {a, b}, y, [ac, bc, yc, same]() mutable {
            const T* dy = yc.grad().data();
            if (same) {
                if (ac.requires_grad()) kern::axpy(T(1), dy, ac.grad_data(), ac.size());
                if (bc.requires_grad()) kern::axpy(T(1), dy, bc.grad_data(), bc.size());
                return;
            }
            const auto plan = detail::bcast_plan(ac, bc, yc.shape());
            T* da = ac.requires_grad() ? ac.grad_data() : nullptr;
            T* db = bc.requires_grad() ? bc.grad_data() : nullptr;
            detail::bcast_foreach(plan, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
                if (da) da[ia] += dy[o];
                if (db) db[ib] += dy[o];
            });
        });
    }
    return y;
}

template <class T>
Tensor<T> elementwise_mul(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b) {
    const Shape out_shape = broadcast_shape(a, b, "elementwise_mul");
    Tensor<T> y = Tensor<T>::zeros(out_shape);
    const bool same = a.shape() == b.shape();
    if (same) {
        kern::mul(a.data(), b.data(), y.data(), y.size());
    } else {
        const auto plan = detail::bcast_plan(a, b, out_shape);
        const T* pa = a.data();
        const T* pb = b.data();
        T* py = y.data();
        detail::bcast_foreach(plan, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
            py[o] = pa[ia] * pb[ib];
        });
    }
    if (track(g, {a, b})) {
        y.set_requires_grad(true);
        Tensor<T> ac = a, bc = b, yc = y;
        g->record("elementwise_mul", {a, b}, y, [ac, bc, yc, same]() mutable {
            const T* dy = yc.grad().data();
            if (same) {
                if (ac.requires_grad()) kern::mul_acc(dy, bc.data(), ac.grad_data(), ac.size());
                if (bc.requires_grad()) kern::mul_acc(dy, ac.data(), bc.grad_data(), bc.size());
                return;
            }
            const auto plan = detail::bcast_plan(ac, bc, yc.shape());
            const T* pa = ac.data();
            const T* pb = bc.data();
            T* da = ac.requires_grad() ? ac.grad_data() : nullptr;
            T* db = bc.requires_grad() ? bc.grad_data() : nullptr;
            detail::bcast_foreach(plan, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
                if (da) da[ia] += dy[o] * pb[ib];
                if (db) db[ib] += dy[o] * pa[ia];
            });
        });
    }
    return y;
}

// ---- pooling -----------------------------------------------------------------

template <class T>
Tensor<T> global_avg_pool(Graph<T>* g, const Tensor<T>& x) {
    check_rank(x, 4, "global_avg_pool", "input");
    const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    require<ShapeError>(hw >= 1, "global_avg_pool: empty spatial extent");
    Tensor<T> y = Tensor<T>::zeros({n, c, 1, 1});
    for (std::int64_t i = 0; i < n * c; ++i) y.data()[i] = kern::sum(x.data() + i * hw, hw) / T(hw);
    if (track(g, {x})) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, yc = y;
        g->record("global_avg_pool", {x}, y, [xc, yc, n, c, hw]() mutable {
            const T* dy = yc.grad().data();
            T* dx = xc.grad_data();
            for (std::int64_t i = 0; i < n * c; ++i) {
                const T v = dy[i] / T(hw);
                T* row = dx + i * hw;
                for (std::int64_t j = 0; j < hw; ++j) row[j] += v;
            }
        });
    }
    return y;
}

template <class T>
Tensor<T> global_max_pool(Graph<T>* g, const Tensor<T>& x) {
    check_rank(x, 4, "global_max_pool", "input");
    const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    require<ShapeError>(hw >= 1, "global_max_pool: empty spatial extent");
    Tensor<T> y = Tensor<T>::zeros({n, c, 1, 1});
    std::vector<std::int64_t> argmax(static_cast<std::size_t>(n * c));
    for (std::int64_t i = 0; i < n * c; ++i) {
        const T* row = x.data() + i * hw;
        T best = row[0];
        std::int64_t bi = 0;
        for (std::int64_t j = 1; j < hw; ++j) {
            if (row[j] > best) { // ties keep the first (row-major) position
                best = row[j];
                bi = j;
            }
        }
        y.data()[i] = best;
        argmax[static_cast<std::size_t>(i)] = bi;
    }
    if (track(g, {x})) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, yc = y;
        g->record("global_max_pool", {x}, y, [xc, yc, argmax, n, c, hw]() mutable {
            const T* dy = yc.grad().data();
            T* dx = xc.grad_data();
            for (std::int64_t i = 0; i < n * c; ++i)
                dx[i * hw + argmax[static_cast<std::size_t>(i)]] += dy[i];
        });
    }
    return y;
}

namespace detail {

template <class T, bool kMax>
Tensor<T> pool2d(Graph<T>* g, const Tensor<T>& x, std::int64_t k, std::int64_t stride,
                 const char* who) {
    check_rank(x, 4, who, "input");
    const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::int64_t oh = conv_extent(h, k, stride, 0, who, "height (dim 2)");
    const std::int64_t ow = conv_extent(w, k, stride, 0, who, "width (dim 3)");
    Tensor<T> y = Tensor<T>::zeros({n, c, oh, ow});
    std::vector<std::int64_t> argmax;
    if constexpr (kMax) argmax.resize(static_cast<std::size_t>(y.size()));
    T* py = y.data();
    std::int64_t o = 0;
    for (std::int64_t nc = 0; nc < n * c; ++nc) {
        const T* plane = x.data() + nc * h * w;
        for (std::int64_t i = 0; i < oh; ++i) {
            for (std::int64_t j = 0; j < ow; ++j, ++o) {
                if constexpr (kMax) {
                    T best = plane[(i * stride) * w + j * stride];
                    std::int64_t bi = (i * stride) * w + j * stride;
                    for (std::int64_t r = 0; r < k; ++r) {
                        for (std::int64_t s = 0; s < k; ++s) {
                            const std::int64_t idx = (i * stride + r) * w + (j * stride + s);
                            if (plane[idx] > best) {
                                best = plane[idx];
                                bi = idx;
                            }
                        }
                    }
                    py[o] = best;
                    argmax[static_cast<std::size_t>(o)] = nc * h * w + bi;
                } else {
                    T acc = T(0);
                    for (std::int64_t r = 0; r < k; ++r) {
                        for (std::int64_t s = 0; s < k; ++s) {
                            acc += plane[(i * stride + r) * w + (j * stride + s)];
                        }
                    }
                    py[o] = acc / T(k * k);
                }
            }
        }
    }
    if (track(g, {x})) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, yc = y;
        if constexpr (kMax) {
            g->record(who, {x}, y, [xc, yc, argmax]() mutable {
                const T* dy = yc.grad().data();
                T* dx = xc.grad_data();
                for (std::int64_t i = 0; i < yc.size(); ++i)
                    dx[argmax[static_cast<std::size_t>(i)]] += dy[i];
            });
        } else {
            g->record(who, {x}, y, [xc, yc, k, stride, n, c, h, w, oh, ow]() mutable {
                const T* dy = yc.grad().data();
                T* dx = xc.grad_data();
                const T inv = T(1) / T(k * k);
                std::int64_t o = 0;
                for (std::int64_t nc = 0; nc < n * c; ++nc) {
                    T* plane = dx + nc * h * w;
                    for (std::int64_t i = 0; i < oh; ++i)
                        for (std::int64_t j = 0; j < ow; ++j, ++o) {
                            const T v = dy[o] * inv;
                            for (std::int64_t r = 0; r < k; ++r)
                                for (std::int64_t s = 0; s < k; ++s)
                                    plane[(i * stride + r) * w + (j * stride + s)] += v;
                        }
                }
            });
        }
    }
    return y;
}

} // namespace detail

template <class T>
Tensor<T> max_pool2d(Graph<T>* g, const Tensor<T>& x, std::int64_t k, std::int64_t stride) {
    return detail::pool2d<T, true>(g, x, k, stride, "max_pool2d");
}

template <class T>
Tensor<T> avg_pool2d(Graph<T>* g, const Tensor<T>& x, std::int64_t k, std::int64_t stride) {
    return detail::pool2d<T, false>(g, x, k, stride, "avg_pool2d");
}

// ---- channel squeeze (for spatial attention) -----------------------------------

template <class T>
Tensor<T> channel_mean(Graph<T>* g, const Tensor<T>& x) {
    check_rank(x, 4, "channel_mean", "input");
    const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor<T> y = Tensor<T>::zeros({n, 1, x.dim(2), x.dim(3)});
    for (std::int64_t i = 0; i < n; ++i) {
        T* dst = y.data() + i * hw;
        for (std::int64_t ch = 0; ch < c; ++ch)
            kern::axpy(T(1), x.data() + (i * c + ch) * hw, dst, hw);
        kern::scale(dst, T(1) / T(c), dst, hw);
    }
    if (track(g, {x})) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, yc = y;
        g->record("channel_mean", {x}, y, [xc, yc, n, c, hw]() mutable {
            const T* dy = yc.grad().data();
            T* dx = xc.grad_data();
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t ch = 0; ch < c; ++ch)
                    kern::axpy(T(1) / T(c), dy + i * hw, dx + (i * c + ch) * hw, hw);
        });
    }
    return y;
}

template <class T>
Tensor<T> channel_max(Graph<T>* g, const Tensor<T>& x) {
    check_rank(x, 4, "channel_max", "input");
    const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor<T> y = Tensor<T>::zeros({n, 1, x.dim(2), x.dim(3)});
    std::vector<std::int64_t> argc(static_cast<std::size_t>(n * hw));
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < hw; ++j) {
            T best = x.data()[(i * c) * hw + j];
            std::int64_t bc = 0;
            for (std::int64_t ch = 1; ch < c; ++ch) {
                const T v = x.data()[(i * c + ch) * hw + j];
                if (v > best) { // ties keep the lowest channel
                    best = v;
                    bc = ch;
                }
            }
            y.data()[i * hw + j] = best;
            argc[static_cast<std::size_t>(i * hw + j)] = bc;
        }
    }
    if (track(g, {x})) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, yc = y;
        g->record("channel_max", {x}, y, [xc, yc, argc, n, c, hw]() mutable {
            const T* dy = yc.grad().data();
            T* dx = xc.grad_data();
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t j = 0; j < hw; ++j)
                    dx[(i * c + argc[static_cast<std::size_t>(i * hw + j)]) * hw + j] += dy[i * hw + j];
        });
    }
    return y;
}

// ---- structure ops -------------------------------------------------------------

template <class T>
Tensor<T> upsample2x_nearest(Graph<T>* g, const Tensor<T>& x) {
    check_rank(x, 4, "upsample2x_nearest", "input");
    const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> y = Tensor<T>::zeros({n, c, 2 * h, 2 * w});
    for (std::int64_t nc = 0; nc < n * c; ++nc) {
        const T* src = x.data() + nc * h * w;
        T* dst = y.data() + nc * 4 * h * w;
        for (std::int64_t i = 0; i < h; ++i) {
            for (std::int64_t j = 0; j < w; ++j) {
                const T v = src[i * w + j];
                dst[(2 * i) * 2 * w + 2 * j] = v;
                dst[(2 * i) * 2 * w + 2 * j + 1] = v;
                dst[(2 * i + 1) * 2 * w + 2 * j] = v;
                dst[(2 * i + 1) * 2 * w + 2 * j + 1] = v;
            }
        }
    }
    if (track(g, {x})) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, yc = y;
        g->record("upsample2x_nearest", {x}, y, [xc, yc, n, c, h, w]() mutable {
            const T* dy = yc.grad().data();
            T* dx = xc.grad_data();
            for (std::int64_t nc = 0; nc < n * c; ++nc) {
                const T* src = dy + nc * 4 * h * w;
                T* dst = dx + nc * h * w;
                for (std::int64_t i = 0; i < h; ++i)
                    for (std::int64_t j = 0; j < w; ++j)
                        dst[i * w + j] += src[(2 * i) * 2 * w + 2 * j] +
                                          src[(2 * i) * 2 * w + 2 * j + 1] +
                                          src[(2 * i + 1) * 2 * w + 2 * j] +
                                          src[(2 * i + 1) * 2 * w + 2 * j + 1];
            }
        });
    }
    return y;
}

template <class T>
Tensor<T> reshape(Graph<T>* g, const Tensor<T>& x, Shape shape) {
    require<ShapeError>(tra::numel(shape) == x.size(), "reshape: cannot view ",
                        shape_str(x.shape()), " as ", shape_str(shape));
    Tensor<T> y = Tensor<T>::from(std::move(shape), std::vector<T>(x.values().begin(), x.values().end()));
    if (track(g, {x})) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, yc = y;
        g->record("reshape", {x}, y, [xc, yc]() mutable {
            kern::axpy(T(1), yc.grad().data(), xc.grad_data(), xc.size());
        });
    }
    return y;
}

template <class T>
Tensor<T> concat_channels(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b) {
    check_rank(a, 4, "concat_channels", "lhs");
    check_rank(b, 4, "concat_channels", "rhs");
    require<ShapeError>(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
                        "concat_channels: incompatible shapes ", shape_str(a.shape()), " vs ",
                        shape_str(b.shape()));
    const std::int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
    Tensor<T> y = Tensor<T>::zeros({n, ca + cb, a.dim(2), a.dim(3)});
    for (std::int64_t i = 0; i < n; ++i) {
        std::copy_n(a.data() + i * ca * hw, ca * hw, y.data() + i * (ca + cb) * hw);
        std::copy_n(b.data() + i * cb * hw, cb * hw, y.data() + (i * (ca + cb) + ca) * hw);
    }
    if (track(g, {a, b})) {
        y.set_requires_grad(true);
        Tensor<T> ac = a, bc = b, yc = y;
        g->record("concat_channels", {a, b}, y, [ac, bc, yc, n, ca, cb, hw]() mutable {
            const T* dy = yc.grad().data();
            for (std::int64_t i = 0; i < n; ++i) {
                if (ac.requires_grad())
                    kern::axpy(T(1), dy + i * (ca + cb) * hw, ac.grad_data() + i * ca * hw, ca * hw);
                if (bc.requires_grad())
                    kern::axpy(T(1), dy + (i * (ca + cb) + ca) * hw, bc.grad_data() + i * cb * hw,
                               cb * hw);
            }
        });
    }
    return y;
}

template <class T>
Tensor<T> reduce_sum(Graph<T>* g, const Tensor<T>& x) {
    Tensor<T> y = Tensor<T>::scalar(kern::sum(x.data(), x.size()));
    if (track(g, {x})) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, yc = y;
        g->record("reduce_sum", {x}, y, [xc, yc]() mutable {
            const T v = yc.grad()[0];
            T* dx = xc.grad_data();
            for (std::int64_t i = 0; i < xc.size(); ++i) dx[i] += v;
        });
    }
    return y;
}

// ---- masking -------------------------------------------------------------------

// y[n,c,i,j] = mask[i,j] * x[n,c,i,j]; the H×W mask is expanded over N and C.
template <class T>
Tensor<T> mul_grid_mask(Graph<T>* g, const Tensor<T>& x, const std::vector<std::uint8_t>& grid,
                        std::int64_t mh, std::int64_t mw) {
    check_rank(x, 4, "mul_grid_mask", "input");
    require<ShapeError>(x.dim(2) == mh && x.dim(3) == mw, "mul_grid_mask: mask resolution ", mh,
                        "x", mw, " does not match feature ", x.dim(2), "x", x.dim(3));
    const std::int64_t planes = x.dim(0) * x.dim(1), hw = mh * mw;
    Tensor<T> y = Tensor<T>::zeros(x.shape());
    for (std::int64_t p = 0; p < planes; ++p) {
        const T* src = x.data() + p * hw;
        T* dst = y.data() + p * hw;
        for (std::int64_t i = 0; i < hw; ++i) dst[i] = grid[static_cast<std::size_t>(i)] ? src[i] : T(0);
    }
    if (track(g, {x})) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, yc = y;
        g->record("mul_grid_mask", {x}, y, [xc, yc, grid, planes, hw]() mutable {
            const T* dy = yc.grad().data();
            T* dx = xc.grad_data();
            for (std::int64_t p = 0; p < planes; ++p)
                for (std::int64_t i = 0; i < hw; ++i)
                    if (grid[static_cast<std::size_t>(i)]) dx[p * hw + i] += dy[p * hw + i];
        });
    }
    return y;
}

// Per-sample horizontal band keep: rows [begin[n], end[n]) survive, the rest
// become zero. This is the batched form of hard-mask multiplication.
template <class T>
Tensor<T> keep_row_bands(Graph<T>* g, const Tensor<T>& x, std::vector<std::int64_t> begin,
                         std::vector<std::int64_t> end) {
    check_rank(x, 4, "keep_row_bands", "input");
    const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    require<ShapeError>(static_cast<std::int64_t>(begin.size()) == n &&
                            static_cast<std::int64_t>(end.size()) == n,
                        "keep_row_bands: band count does not match batch");
    for (std::int64_t i = 0; i < n; ++i) {
        require<ShapeError>(0 <= begin[static_cast<std::size_t>(i)] &&
                                begin[static_cast<std::size_t>(i)] <= end[static_cast<std::size_t>(i)] &&
                                end[static_cast<std::size_t>(i)] <= h,
                            "keep_row_bands: band [", begin[static_cast<std::size_t>(i)], ",",
                            end[static_cast<std::size_t>(i)], ") out of range for height ", h);
    }
    Tensor<T> y = Tensor<T>::zeros(x.shape());
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t b = begin[static_cast<std::size_t>(i)], e = end[static_cast<std::size_t>(i)];
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const T* src = x.data() + (i * c + ch) * h * w;
            T* dst = y.data() + (i * c + ch) * h * w;
            std::copy_n(src + b * w, (e - b) * w, dst + b * w);
        }
    }
    if (track(g, {x})) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, yc = y;
        g->record("keep_row_bands", {x}, y, [xc, yc, begin, end, n, c, h, w]() mutable {
            const T* dy = yc.grad().data();
            T* dx = xc.grad_data();
            for (std::int64_t i = 0; i < n; ++i) {
                const std::int64_t b = begin[static_cast<std::size_t>(i)], e = end[static_cast<std::size_t>(i)];
                for (std::int64_t ch = 0; ch < c; ++ch) {
                    const std::int64_t off = (i * c + ch) * h * w + b * w;
                    kern::axpy(T(1), dy + off, dx + off, (e - b) * w);
                }
            }
        });
    }
    return y;
}

// ---- loss ------------------------------------------------------------------------

// Numerically stable binary cross-entropy on logits, averaged over all
// entries: max(z,0) - z*y + log(1+exp(-|z|)).
template <class T>
Tensor<T> bce_with_logits_mean(Graph<T>* g, const Tensor<T>& logits, const Tensor<T>& labels) {
    require<ShapeError>(logits.shape() == labels.shape(), "bce_with_logits: logits ",
                        shape_str(logits.shape()), " vs labels ", shape_str(labels.shape()));
    const std::int64_t n = logits.size();
    require<ShapeError>(n >= 1, "bce_with_logits: empty input");
    const T* z = logits.data();
    const T* y = labels.data();
    T acc = T(0);
    for (std::int64_t i = 0; i < n; ++i) {
        require<ShapeError>(y[i] == T(0) || y[i] == T(1), "bce_with_logits: label ", y[i],
                            " at index ", i, " outside {0,1}");
        const T zi = z[i];
        acc += std::max(zi, T(0)) - zi * y[i] + std::log1p(std::exp(-std::abs(zi)));
    }
    Tensor<T> out = Tensor<T>::scalar(acc / T(n));
    if (track(g, {logits})) {
        out.set_requires_grad(true);
        Tensor<T> lc = logits, yc = labels, oc = out;
        g->record("bce_with_logits_mean", {logits}, out, [lc, yc, oc, n]() mutable {
            const T d = oc.grad()[0] / T(n);
            const T* z = lc.data();
            const T* y = yc.data();
            T* dz = lc.grad_data();
            for (std::int64_t i = 0; i < n; ++i) {
                T s;
                kern::sigmoid(z + i, &s, 1);
                dz[i] += d * (s - y[i]);
            }
        });
    }
    return out;
}

} // namespace tra::ops
