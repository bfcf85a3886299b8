#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "motra/autodiff.hpp"

namespace motra {

// Named-parameter registry. Insertion order is the canonical parameter order
// for checkpoints and optimizers; names use dotted prefixes per module group
// (e.g. "motion_enc.stem.w") so trainer stages can freeze by prefix.
template <typename T>
class ParamRegistryT {
  public:
    VarT<T> create(const std::string& name, TensorT<T> init) {
        if (by_name_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        VarT<T> v = VarT<T>::leaf(std::move(init), true);
        names_.push_back(name);
        by_name_.emplace(name, v);
        return v;
    }

    const std::vector<std::string>& names() const { return names_; }
    VarT<T>& at(const std::string& name) {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }
    const VarT<T>& at(const std::string& name) const {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }
    bool contains(const std::string& name) const { return by_name_.count(name) > 0; }
    std::size_t size() const { return names_.size(); }

    std::vector<std::string> names_with_prefix(const std::string& prefix) const {
        std::vector<std::string> out;
        for (const auto& n : names_)
            if (n.rfind(prefix, 0) == 0) out.push_back(n);
        return out;
    }

    void set_requires_grad(const std::vector<std::string>& names, bool rg) {
        for (const auto& n : names) at(n).set_requires_grad(rg);
    }
    void set_requires_grad_all(bool rg) {
        for (const auto& n : names_) at(n).set_requires_grad(rg);
    }
    void zero_grad_all() {
        for (const auto& n : names_) at(n).zero_grad();
    }

  private:
    std::vector<std::string> names_;
    std::map<std::string, VarT<T>> by_name_;
};

using ParamRegistry = ParamRegistryT<float>;

namespace nn {

namespace detail {
template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowMap = Eigen::Map<RowMat<T>>;
template <typename T>
using CRowMap = Eigen::Map<const RowMat<T>>;

// Gather conv patches: x (C,H,W) -> col (C*kh*kw, OH*OW). Out-of-image taps
// read as zero (zero padding).
template <typename T>
void im2col(const TensorT<T>& x, int kh, int kw, int stride, int pad, int oh, int ow,
            TensorT<T>& col) {
    int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    col.zero();
    T* cd = col.data();
    const T* xd = x.data();
    for (int ic = 0; ic < c; ++ic) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                T* crow = cd + ((ic * kh + ky) * kw + kx) * (oh * ow);
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    const T* xrow = xd + (ic * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= w) continue;
                        crow[oy * ow + ox] = xrow[ix];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_accum(const TensorT<T>& col, int c, int h, int w, int kh, int kw, int stride,
                  int pad, int oh, int ow, TensorT<T>& gx) {
    const T* cd = col.data();
    T* xd = gx.data();
    for (int ic = 0; ic < c; ++ic) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const T* crow = cd + ((ic * kh + ky) * kw + kx) * (oh * ow);
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    T* xrow = xd + (ic * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= w) continue;
                        xrow[ix] += crow[oy * ow + ox];
                    }
                }
            }
        }
    }
}
}  // namespace detail

// 2D convolution: x (C,H,W), w (O,C,kh,kw), b (O) -> (O,OH,OW).
template <typename T>
VarT<T> conv2d(const VarT<T>& x, const VarT<T>& w, const VarT<T>& b, int stride, int pad) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 3 || ws.size() != 4) throw ShapeError("conv2d: expected (C,H,W), (O,C,kh,kw)");
    if (ws[1] != xs[0])
        throw ShapeError("conv2d: input channels " + std::to_string(xs[0]) +
                         " != weight channels " + std::to_string(ws[1]));
    int c = xs[0], h = xs[1], wd = xs[2];
    int oc = ws[0], kh = ws[2], kw = ws[3];
    int oh = (h + 2 * pad - kh) / stride + 1;
    int ow = (wd + 2 * pad - kw) / stride + 1;
    if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: output dims non-positive");
    int K = c * kh * kw, N = oh * ow;

    TensorT<T> y({oc, oh, ow});
    const bool pointwise = (kh == 1 && kw == 1 && stride == 1 && pad == 0);
    {
        detail::CRowMap<T> Wm(w.val().data(), oc, K);
        detail::RowMap<T> Ym(y.data(), oc, N);
        if (pointwise) {
            detail::CRowMap<T> Xm(x.val().data(), K, N);
            Ym.noalias() = Wm * Xm;
        } else {
            TensorT<T> col({K, N});
            detail::im2col(x.val(), kh, kw, stride, pad, oh, ow, col);
            detail::CRowMap<T> Cm(col.data(), K, N);
            Ym.noalias() = Wm * Cm;
        }
        for (int o = 0; o < oc; ++o) Ym.row(o).array() += b.val()[o];
    }

    auto* px = x.node().get();
    auto* pw = w.node().get();
    auto* pb = b.node().get();
    auto bw = [px, pw, pb, c, h, wd, oc, kh, kw, stride, pad, oh, ow, K, N,
               pointwise](NodeT<T>& n) {
        detail::CRowMap<T> Gy(n.grad.data(), oc, N);
        if (pb->requires_grad) {
            auto& gb = pb->ensure_grad();
            for (int o = 0; o < oc; ++o) gb[o] += Gy.row(o).sum();
        }
        if (pw->requires_grad) {
            auto& gw = pw->ensure_grad();
            detail::RowMap<T> Gw(gw.data(), oc, K);
            if (pointwise) {
                detail::CRowMap<T> Xm(px->value.data(), K, N);
                Gw.noalias() += Gy * Xm.transpose();
            } else {
                TensorT<T> col({K, N});
                detail::im2col(px->value, kh, kw, stride, pad, oh, ow, col);
                detail::CRowMap<T> Cm(col.data(), K, N);
                Gw.noalias() += Gy * Cm.transpose();
            }
        }
        if (px->requires_grad) {
            auto& gx = px->ensure_grad();
            detail::CRowMap<T> Wm(pw->value.data(), oc, K);
            if (pointwise) {
                detail::RowMap<T> Gx(gx.data(), K, N);
                Gx.noalias() += Wm.transpose() * Gy;
            } else {
                TensorT<T> gcol({K, N});
                detail::RowMap<T> Gc(gcol.data(), K, N);
                Gc.noalias() = Wm.transpose() * Gy;
                detail::col2im_accum(gcol, c, h, wd, kh, kw, stride, pad, oh, ow, gx);
            }
        }
    };
    return ag::make_op<T>(std::move(y), {x, w, b}, bw);
}

// Fully connected: x (N), w (O,N), b (O) -> (O).
template <typename T>
VarT<T> linear(const VarT<T>& x, const VarT<T>& w, const VarT<T>& b) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 1 || ws.size() != 2 || ws[1] != xs[0] || b.shape()[0] != ws[0])
        throw ShapeError("linear: shape mismatch");
    int o = ws[0], in = ws[1];
    TensorT<T> y({o});
    detail::CRowMap<T> Wm(w.val().data(), o, in);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> Xv(x.val().data(), in);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> Yv(y.data(), o);
    Yv.noalias() = Wm * Xv;
    for (int i = 0; i < o; ++i) y[i] += b.val()[i];

    auto* px = x.node().get();
    auto* pw = w.node().get();
    auto* pb = b.node().get();
    return ag::make_op<T>(std::move(y), {x, w, b}, [px, pw, pb, o, in](NodeT<T>& n) {
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> Gy(n.grad.data(), o);
        if (pb->requires_grad) {
            auto& gb = pb->ensure_grad();
            for (int i = 0; i < o; ++i) gb[i] += n.grad[i];
        }
        if (pw->requires_grad) {
            auto& gw = pw->ensure_grad();
            detail::RowMap<T> Gw(gw.data(), o, in);
            Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> Xv(px->value.data(), in);
            Gw.noalias() += Gy * Xv.transpose();
        }
        if (px->requires_grad) {
            auto& gx = px->ensure_grad();
            detail::CRowMap<T> Wm(pw->value.data(), o, in);
            Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> Gx(gx.data(), in);
            Gx.noalias() += Wm.transpose() * Gy;
        }
    });
}

template <typename T>
VarT<T> global_avg_pool(const VarT<T>& x) {
    const auto& s = x.shape();
    if (s.size() != 3) throw ShapeError("global_avg_pool expects (C,H,W)");
    int c = s[0], hw = s[1] * s[2];
    TensorT<T> y({c});
    for (int k = 0; k < c; ++k) {
        T acc = T(0);
        for (int i = 0; i < hw; ++i) acc += x.val()[k * hw + i];
        y[k] = acc / T(hw);
    }
    auto* px = x.node().get();
    return ag::make_op<T>(std::move(y), {x}, [px, c, hw](NodeT<T>& n) {
        auto& g = px->ensure_grad();
        for (int k = 0; k < c; ++k) {
            T s = n.grad[k] / T(hw);
            for (int i = 0; i < hw; ++i) g[k * hw + i] += s;
        }
    });
}

// 2x2 average pooling; spatial dims must be even.
template <typename T>
VarT<T> avg_pool2(const VarT<T>& x) {
    const auto& s = x.shape();
    if (s.size() != 3 || s[1] % 2 || s[2] % 2) throw ShapeError("avg_pool2: odd spatial dims");
    int c = s[0], h = s[1], w = s[2], oh = h / 2, ow = w / 2;
    TensorT<T> y({c, oh, ow});
    for (int k = 0; k < c; ++k)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                y.at(k, oy, ox) = (x.val().at(k, 2 * oy, 2 * ox) + x.val().at(k, 2 * oy, 2 * ox + 1) +
                                   x.val().at(k, 2 * oy + 1, 2 * ox) +
                                   x.val().at(k, 2 * oy + 1, 2 * ox + 1)) *
                                  T(0.25);
    auto* px = x.node().get();
    return ag::make_op<T>(std::move(y), {x}, [px, c, oh, ow](NodeT<T>& n) {
        auto& g = px->ensure_grad();
        for (int k = 0; k < c; ++k)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    T s = n.grad[(k * oh + oy) * ow + ox] * T(0.25);
                    g.at(k, 2 * oy, 2 * ox) += s;
                    g.at(k, 2 * oy, 2 * ox + 1) += s;
                    g.at(k, 2 * oy + 1, 2 * ox) += s;
                    g.at(k, 2 * oy + 1, 2 * ox + 1) += s;
                }
    });
}

// Bilinear resize with texel-center alignment (coordinate 0 -> first texel
// center, 1 -> last texel center). Constant inputs stay constant.
template <typename T>
VarT<T> bilinear_resize(const VarT<T>& x, int oh, int ow) {
    const auto& s = x.shape();
    if (s.size() != 3) throw ShapeError("bilinear_resize expects (C,H,W)");
    int c = s[0], h = s[1], w = s[2];
    if (oh == h && ow == w) return x;
    TensorT<T> y({c, oh, ow});
    double sy = oh > 1 ? double(h - 1) / double(oh - 1) : 0.0;
    double sx = ow > 1 ? double(w - 1) / double(ow - 1) : 0.0;
    std::vector<int> x0(ow), y0(oh);
    std::vector<T> fx(ow), fy(oh);
    for (int i = 0; i < oh; ++i) {
        double v = i * sy;
        int v0 = std::min(static_cast<int>(v), h > 1 ? h - 2 : 0);
        y0[i] = v0;
        fy[i] = static_cast<T>(v - v0);
    }
    for (int j = 0; j < ow; ++j) {
        double v = j * sx;
        int v0 = std::min(static_cast<int>(v), w > 1 ? w - 2 : 0);
        x0[j] = v0;
        fx[j] = static_cast<T>(v - v0);
    }
    for (int k = 0; k < c; ++k)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                int yy = y0[i], xx = x0[j];
                int y1 = h > 1 ? yy + 1 : yy, x1 = w > 1 ? xx + 1 : xx;
                T a = x.val().at(k, yy, xx), bb = x.val().at(k, yy, x1);
                T cc = x.val().at(k, y1, xx), d = x.val().at(k, y1, x1);
                T wy = fy[i], wx = fx[j];
                y.at(k, i, j) = (T(1) - wy) * ((T(1) - wx) * a + wx * bb) +
                                wy * ((T(1) - wx) * cc + wx * d);
            }
    auto* px = x.node().get();
    return ag::make_op<T>(std::move(y), {x},
                          [px, c, h, w, oh, ow, x0, y0, fx, fy](NodeT<T>& n) {
        auto& g = px->ensure_grad();
        for (int k = 0; k < c; ++k)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    int yy = y0[i], xx = x0[j];
                    int y1 = h > 1 ? yy + 1 : yy, x1 = w > 1 ? xx + 1 : xx;
                    T wy = fy[i], wx = fx[j];
                    T gv = n.grad[(k * oh + i) * ow + j];
                    g.at(k, yy, xx) += gv * (T(1) - wy) * (T(1) - wx);
                    g.at(k, yy, x1) += gv * (T(1) - wy) * wx;
                    g.at(k, y1, xx) += gv * wy * (T(1) - wx);
                    g.at(k, y1, x1) += gv * wy * wx;
                }
    });
}

// ---- Layers --------------------------------------------------------------

enum class Init { He, Xavier, Zero };

template <typename T>
struct Conv2dT {
    VarT<T> w, b;
    int stride = 1, pad = 1;

    Conv2dT() = default;
    Conv2dT(ParamRegistryT<T>& reg, Rng& rng, const std::string& name, int in_ch, int out_ch,
            int k, int stride_, int pad_, Init init = Init::He)
        : stride(stride_), pad(pad_) {
        TensorT<T> wt({out_ch, in_ch, k, k});
        if (init == Init::He) {
            T std = static_cast<T>(std::sqrt(2.0 / (in_ch * k * k)));
            wt = random_normal<T>(rng, {out_ch, in_ch, k, k}, T(0), std);
        } else if (init == Init::Xavier) {
            T lim = static_cast<T>(std::sqrt(6.0 / (in_ch * k * k + out_ch * k * k)));
            wt = random_uniform<T>(rng, {out_ch, in_ch, k, k}, -lim, lim);
        }
        w = reg.create(name + ".w", std::move(wt));
        b = reg.create(name + ".b", TensorT<T>({out_ch}));
    }

    VarT<T> operator()(const VarT<T>& x) const { return conv2d(x, w, b, stride, pad); }
};

template <typename T>
struct LinearT {
    VarT<T> w, b;

    LinearT() = default;
    LinearT(ParamRegistryT<T>& reg, Rng& rng, const std::string& name, int in_dim, int out_dim,
            Init init = Init::Xavier) {
        TensorT<T> wt({out_dim, in_dim});
        if (init == Init::Xavier) {
            T lim = static_cast<T>(std::sqrt(6.0 / (in_dim + out_dim)));
            wt = random_uniform<T>(rng, {out_dim, in_dim}, -lim, lim);
        } else if (init == Init::He) {
            T std = static_cast<T>(std::sqrt(2.0 / in_dim));
            wt = random_normal<T>(rng, {out_dim, in_dim}, T(0), std);
        }
        w = reg.create(name + ".w", std::move(wt));
        b = reg.create(name + ".b", TensorT<T>({out_dim}));
    }

    VarT<T> operator()(const VarT<T>& x) const { return linear(x, w, b); }
};

// Plain residual block; the second conv is zero-initialized so a fresh block
// is the identity map.
template <typename T>
struct ResBlockT {
    Conv2dT<T> c1, c2;

    ResBlockT() = default;
    ResBlockT(ParamRegistryT<T>& reg, Rng& rng, const std::string& name, int ch)
        : c1(reg, rng, name + ".c1", ch, ch, 3, 1, 1, Init::He),
          c2(reg, rng, name + ".c2", ch, ch, 3, 1, 1, Init::Zero) {}

    VarT<T> operator()(const VarT<T>& x) const {
        return ag::add(x, c2(ag::leaky_relu(c1(x))));
    }
};

// Residual block with feature-wise affine modulation from a conditioning
// vector: h -> h * (1 + s) + t where (s, t) = W c.
template <typename T>
struct ModResBlockT {
    Conv2dT<T> c1, c2;
    LinearT<T> mod;
    int ch = 0;

    ModResBlockT() = default;
    ModResBlockT(ParamRegistryT<T>& reg, Rng& rng, const std::string& name, int ch_, int cond_dim)
        : c1(reg, rng, name + ".c1", ch_, ch_, 3, 1, 1, Init::He),
          c2(reg, rng, name + ".c2", ch_, ch_, 3, 1, 1, Init::Zero),
          mod(reg, rng, name + ".mod", cond_dim, 2 * ch_, Init::Xavier),
          ch(ch_) {}

    VarT<T> operator()(const VarT<T>& x, const VarT<T>& cond) const {
        VarT<T> st = mod(cond);
        VarT<T> s = ag::slice_dim0(st, 0, ch);
        VarT<T> t = ag::slice_dim0(st, ch, 2 * ch);
        VarT<T> h = c1(x);
        h = ag::add_cvec(ag::mul_cvec(h, ag::add_scalar(s, T(1))), t);
        return ag::add(x, c2(ag::leaky_relu(h)));
    }
};

}  // namespace nn
}  // namespace motra
