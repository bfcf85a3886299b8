#pragma once

#include "motra/autodiff.hpp"
#include "motra/types.hpp"

namespace motra {

// Differentiable bilinear grid sampling.
//
// Conventions (shared by both branches and by every oracle in the tests):
//  - grid is (2,H,W); channel 0 is x (width axis), channel 1 is y.
//  - coordinates are normalized to [-1,1] with texel-center alignment:
//    -1 maps to the center of the first texel, +1 to the center of the last.
//  - out-of-range coordinates clamp to the border; the grid gradient is zero
//    in the clamped region.
template <typename T>
VarT<T> bilinear_sample(const VarT<T>& source, const VarT<T>& grid) {
    const auto& ss = source.shape();
    const auto& gs = grid.shape();
    if (ss.size() != 3) throw ShapeError("bilinear_sample: source must be (C,h,w)");
    if (gs.size() != 3 || gs[0] != 2) throw ShapeError("bilinear_sample: grid must be (2,H,W)");
    if (!grid.val().all_finite()) throw NumericError("bilinear_sample: non-finite grid");
    int c = ss[0], sh = ss[1], sw = ss[2];
    int oh = gs[1], ow = gs[2], n = oh * ow;

    TensorT<T> y({c, oh, ow});
    const T* gd = grid.val().data();
    const T* sd = source.val().data();
    for (int i = 0; i < n; ++i) {
        T gx = gd[i], gy = gd[n + i];
        T x = (gx + T(1)) * T(0.5) * T(sw - 1);
        T yc = (gy + T(1)) * T(0.5) * T(sh - 1);
        T xcl = std::min(std::max(x, T(0)), T(sw - 1));
        T ycl = std::min(std::max(yc, T(0)), T(sh - 1));
        int x0 = sw > 1 ? std::min(static_cast<int>(xcl), sw - 2) : 0;
        int y0 = sh > 1 ? std::min(static_cast<int>(ycl), sh - 2) : 0;
        int x1 = sw > 1 ? x0 + 1 : 0;
        int y1 = sh > 1 ? y0 + 1 : 0;
        T fx = xcl - T(x0), fy = ycl - T(y0);
        for (int k = 0; k < c; ++k) {
            const T* sp = sd + k * sh * sw;
            T a = sp[y0 * sw + x0], b = sp[y0 * sw + x1];
            T cc = sp[y1 * sw + x0], d = sp[y1 * sw + x1];
            y[k * n + i] = (T(1) - fy) * ((T(1) - fx) * a + fx * b) +
                           fy * ((T(1) - fx) * cc + fx * d);
        }
    }

    auto* psrc = source.node().get();
    auto* pgrid = grid.node().get();
    auto bw = [psrc, pgrid, c, sh, sw, oh, ow, n](NodeT<T>& node) {
        const T* gd = pgrid->value.data();
        const T* sd = psrc->value.data();
        T* gsrc = psrc->requires_grad ? psrc->ensure_grad().data() : nullptr;
        T* ggrid = pgrid->requires_grad ? pgrid->ensure_grad().data() : nullptr;
        for (int i = 0; i < n; ++i) {
            T gx = gd[i], gy = gd[n + i];
            T x = (gx + T(1)) * T(0.5) * T(sw - 1);
            T yc = (gy + T(1)) * T(0.5) * T(sh - 1);
            bool in_x = (x > T(0) && x < T(sw - 1));
            bool in_y = (yc > T(0) && yc < T(sh - 1));
            T xcl = std::min(std::max(x, T(0)), T(sw - 1));
            T ycl = std::min(std::max(yc, T(0)), T(sh - 1));
            int x0 = sw > 1 ? std::min(static_cast<int>(xcl), sw - 2) : 0;
            int y0 = sh > 1 ? std::min(static_cast<int>(ycl), sh - 2) : 0;
            int x1 = sw > 1 ? x0 + 1 : 0;
            int y1 = sh > 1 ? y0 + 1 : 0;
            T fx = xcl - T(x0), fy = ycl - T(y0);
            T dx_acc = T(0), dy_acc = T(0);
            for (int k = 0; k < c; ++k) {
                T gv = node.grad[k * n + i];
                if (gv == T(0)) continue;
                const T* sp = sd + k * sh * sw;
                T a = sp[y0 * sw + x0], b = sp[y0 * sw + x1];
                T cc = sp[y1 * sw + x0], d = sp[y1 * sw + x1];
                if (gsrc) {
                    T* gp = gsrc + k * sh * sw;
                    gp[y0 * sw + x0] += gv * (T(1) - fy) * (T(1) - fx);
                    gp[y0 * sw + x1] += gv * (T(1) - fy) * fx;
                    gp[y1 * sw + x0] += gv * fy * (T(1) - fx);
                    gp[y1 * sw + x1] += gv * fy * fx;
                }
                if (ggrid) {
                    dx_acc += gv * ((T(1) - fy) * (b - a) + fy * (d - cc));
                    dy_acc += gv * ((T(1) - fx) * (cc - a) + fx * (d - b));
                }
            }
            if (ggrid) {
                if (in_x) ggrid[i] += dx_acc * T(0.5) * T(sw - 1);
                if (in_y) ggrid[n + i] += dy_acc * T(0.5) * T(sh - 1);
            }
        }
    };
    return ag::make_op<T>(std::move(y), {source, grid}, bw);
}

// Identity sampling grid at a given resolution, normalized to [-1,1].
template <typename T>
TensorT<T> identity_grid(int h, int w) {
    TensorT<T> g({2, h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            g.at(0, i, j) = w > 1 ? T(-1) + T(2) * T(j) / T(w - 1) : T(0);
            g.at(1, i, j) = h > 1 ? T(-1) + T(2) * T(i) / T(h - 1) : T(0);
        }
    return g;
}

// Per-pixel softmax over 25 part channels; channel 0 is background.
template <typename T>
VarT<T> softmax_parts(const VarT<T>& logits) {
    if (logits.shape().size() != 3 || logits.shape()[0] != kNumScoreChannels)
        throw ShapeError("softmax_parts expects (25,h,w)");
    return ag::softmax_ch(logits);
}

inline Tensor softmax_parts(const Tensor& logits) {
    return softmax_parts(Var::leaf(logits)).val();
}

// IUVMap -> one-hot encoding: u_parts[k] = u where part==k+1 else 0 (same
// for v); score is the exact one-hot over 25 channels.
inline OneHotIUV iuv_to_onehot(const IUVMap& m) {
    m.validate();
    int h = m.height(), w = m.width(), hw = h * w;
    OneHotIUV out;
    out.u_parts = Tensor({kNumParts, h, w});
    out.v_parts = Tensor({kNumParts, h, w});
    out.score = Tensor({kNumScoreChannels, h, w});
    for (int i = 0; i < hw; ++i) {
        int p = m.part[static_cast<std::size_t>(i)];
        out.score[p * hw + i] = 1.0f;
        if (p > 0) {
            out.u_parts[(p - 1) * hw + i] = m.u[i];
            out.v_parts[(p - 1) * hw + i] = m.v[i];
        }
    }
    return out;
}

// Inverse of iuv_to_onehot for exact one-hot scores: picks the argmax score
// channel and reads UV off the winning part plane.
inline IUVMap onehot_to_iuv(const OneHotIUV& oh) {
    int h = oh.height(), w = oh.width(), hw = h * w;
    IUVMap m(h, w);
    for (int i = 0; i < hw; ++i) {
        int best = 0;
        float bv = oh.score[i];
        for (int k = 1; k < kNumScoreChannels; ++k) {
            float v = oh.score[k * hw + i];
            if (v > bv) {
                bv = v;
                best = k;
            }
        }
        m.part[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(best);
        if (best > 0) {
            m.u[i] = oh.u_parts[(best - 1) * hw + i];
            m.v[i] = oh.v_parts[(best - 1) * hw + i];
        }
    }
    return m;
}

// Channel concatenation [u_parts, v_parts, score] used as network input
// (73 channels per IUV map).
template <typename T>
VarT<T> onehot_channels(const OneHotIUV& oh) {
    int h = oh.height(), w = oh.width();
    TensorT<T> t({2 * kNumParts + kNumScoreChannels, h, w});
    int hw = h * w;
    for (int i = 0; i < kNumParts * hw; ++i) t[i] = static_cast<T>(oh.u_parts[i]);
    for (int i = 0; i < kNumParts * hw; ++i)
        t[kNumParts * hw + i] = static_cast<T>(oh.v_parts[i]);
    for (int i = 0; i < kNumScoreChannels * hw; ++i)
        t[2 * kNumParts * hw + i] = static_cast<T>(oh.score[i]);
    return ag::constant(std::move(t));
}

}  // namespace motra
