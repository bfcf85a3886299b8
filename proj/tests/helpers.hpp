#pragma once

// Shared test utilities: deterministic RNG wrappers, a central-difference
// gradient checker and brute-force oracles kept independent of the library
// implementation paths they verify.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "motra/autodiff.hpp"
#include "motra/nn.hpp"
#include "motra/tensor.hpp"

namespace testutil {

using motra::Rng;
using motra::TensorD;
using motra::TensorT;
using motra::VarD;
using motra::VarT;

inline Rng rng(std::uint64_t seed) { return motra::make_rng(seed, 0x7E57ULL); }

// ---------------------------------------------------------------------------
// Gradient checking (float64, central differences).

struct GradCheck {
    double max_rel_err = 0.0;
    int checked = 0;
};

inline double rel_err(double a, double n) {
    double denom = std::max({std::abs(a), std::abs(n), 1e-6});
    return std::abs(a - n) / denom;
}

// f rebuilds the scalar graph from the same leaf Vars on every call.
inline GradCheck grad_check(const std::function<VarD()>& f, std::vector<VarD> inputs,
                            double h = 1e-4, int max_coords = 25) {
    for (auto& v : inputs) v.zero_grad();
    VarD loss = f();
    loss.backward();
    std::vector<TensorD> analytic;
    for (auto& v : inputs) analytic.push_back(v.grad());

    GradCheck out;
    for (std::size_t vi = 0; vi < inputs.size(); ++vi) {
        VarD& v = inputs[vi];
        int n = v.val().size();
        int stride = std::max(1, n / max_coords);
        for (int i = 0; i < n; i += stride) {
            double orig = v.val()[i];
            v.val_mut()[i] = orig + h;
            double fp = f().val()[0];
            v.val_mut()[i] = orig - h;
            double fm = f().val()[0];
            v.val_mut()[i] = orig;
            double numeric = (fp - fm) / (2.0 * h);
            out.max_rel_err = std::max(out.max_rel_err, rel_err(analytic[vi][i], numeric));
            ++out.checked;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Brute-force oracles (double precision, straight loops).

// Border-clamped bilinear lookup with texel-center alignment, normalized
// [-1,1] coordinates.
inline double oracle_bilinear(const TensorD& src, int ch, double gx, double gy) {
    int h = src.dim(1), w = src.dim(2);
    double x = (gx + 1.0) * 0.5 * (w - 1);
    double y = (gy + 1.0) * 0.5 * (h - 1);
    x = std::min(std::max(x, 0.0), static_cast<double>(w - 1));
    y = std::min(std::max(y, 0.0), static_cast<double>(h - 1));
    int x0 = w > 1 ? std::min(static_cast<int>(x), w - 2) : 0;
    int y0 = h > 1 ? std::min(static_cast<int>(y), h - 2) : 0;
    int x1 = w > 1 ? x0 + 1 : 0, y1 = h > 1 ? y0 + 1 : 0;
    double fx = x - x0, fy = y - y0;
    auto at = [&](int yy, int xx) { return src[(ch * h + yy) * w + xx]; };
    return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
           fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

// Per-pixel softmax over channel axis of a (C,H,W) tensor.
inline TensorD oracle_softmax(const TensorD& logits) {
    int c = logits.dim(0), hw = logits.dim(1) * logits.dim(2);
    TensorD out(logits.shape());
    for (int i = 0; i < hw; ++i) {
        double z = 0.0;
        for (int k = 0; k < c; ++k) z += std::exp(logits[k * hw + i]);
        for (int k = 0; k < c; ++k) out[k * hw + i] = std::exp(logits[k * hw + i]) / z;
    }
    return out;
}

// Warp(z, f) * o + z_prev * (1 - o) evaluated per pixel via oracle_bilinear.
inline TensorD oracle_warp_fuse(const TensorD& z, const TensorD& flow, const TensorD& occ,
                                const TensorD& z_prev) {
    int c = z.dim(0), h = z.dim(1), w = z.dim(2);
    TensorD out(z.shape());
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double idx = w > 1 ? -1.0 + 2.0 * j / (w - 1) : 0.0;
            double idy = h > 1 ? -1.0 + 2.0 * i / (h - 1) : 0.0;
            double gx = idx + flow[(0 * h + i) * w + j];
            double gy = idy + flow[(1 * h + i) * w + j];
            double o = occ[i * w + j];
            for (int k = 0; k < c; ++k)
                out[(k * h + i) * w + j] = oracle_bilinear(z, k, gx, gy) * o +
                                           z_prev[(k * h + i) * w + j] * (1.0 - o);
        }
    return out;
}

// Explicit 24-term weighted sum (score channels 1..24).
inline TensorD oracle_fuse_parts(const std::vector<TensorD>& parts, const TensorD& score) {
    int c = parts[0].dim(0), h = parts[0].dim(1), w = parts[0].dim(2);
    TensorD out({c, h, w});
    for (int k = 0; k < 24; ++k)
        for (int ch = 0; ch < c; ++ch)
            for (int i = 0; i < h * w; ++i)
                out[ch * h * w + i] += score[(k + 1) * h * w + i] * parts[k][ch * h * w + i];
    return out;
}

// Per-patch affine least squares via QR, mean of squared residuals.
inline double oracle_affine_reg(const TensorD& flow, int k = 5) {
    int c = flow.dim(0), h = flow.dim(1), w = flow.dim(2);
    if (h < k || w < k) return 0.0;
    int kk = k * k;
    Eigen::MatrixXd X(kk, 3);
    for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
            X(dy * k + dx, 0) = dx;
            X(dy * k + dx, 1) = dy;
            X(dy * k + dx, 2) = 1.0;
        }
    double acc = 0.0;
    long n = 0;
    for (int ch = 0; ch < c; ++ch)
        for (int py = 0; py + k <= h; ++py)
            for (int px = 0; px + k <= w; ++px) {
                Eigen::VectorXd p(kk);
                for (int dy = 0; dy < k; ++dy)
                    for (int dx = 0; dx < k; ++dx)
                        p[dy * k + dx] = flow[(ch * h + py + dy) * w + px + dx];
                Eigen::VectorXd coef = X.colPivHouseholderQr().solve(p);
                Eigen::VectorXd r = p - X * coef;
                acc += r.squaredNorm();
                n += kk;
            }
    return acc / static_cast<double>(n);
}

// Mean absolute forward difference over both axes and channels.
inline double oracle_tv(const TensorD& flow) {
    int c = flow.dim(0), h = flow.dim(1), w = flow.dim(2);
    double acc = 0.0;
    long n = 0;
    for (int k = 0; k < c; ++k)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (x + 1 < w) {
                    acc += std::abs(flow[(k * h + y) * w + x + 1] - flow[(k * h + y) * w + x]);
                    ++n;
                }
                if (y + 1 < h) {
                    acc += std::abs(flow[(k * h + y + 1) * w + x] - flow[(k * h + y) * w + x]);
                    ++n;
                }
            }
    return n ? acc / static_cast<double>(n) : 0.0;
}

// Independent align-corners bilinear resize.
inline TensorD oracle_resize(const TensorD& src, int oh, int ow) {
    int c = src.dim(0), h = src.dim(1), w = src.dim(2);
    TensorD out({c, oh, ow});
    for (int k = 0; k < c; ++k)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                double gy = oh > 1 ? -1.0 + 2.0 * i / (oh - 1) : 0.0;
                double gx = ow > 1 ? -1.0 + 2.0 * j / (ow - 1) : 0.0;
                out[(k * oh + i) * ow + j] = oracle_bilinear(src, k, gx, gy);
            }
    (void)h;
    (void)w;
    return out;
}

inline double oracle_consistency(const std::vector<TensorD>& flows) {
    double total = 0.0;
    for (std::size_t i = 1; i < flows.size(); ++i) {
        TensorD up = oracle_resize(flows[0], flows[i].dim(1), flows[i].dim(2));
        double acc = 0.0;
        for (int j = 0; j < up.size(); ++j) acc += std::abs(flows[i][j] - up[j]);
        total += acc / up.size();
    }
    return total;
}

inline double oracle_mean(const TensorD& t) {
    double acc = 0.0;
    for (int i = 0; i < t.size(); ++i) acc += t[i];
    return acc / t.size();
}

inline double oracle_lsgan_d(const TensorD& d_real, const TensorD& d_fake) {
    double a = 0.0, b = 0.0;
    for (int i = 0; i < d_real.size(); ++i) a += (d_real[i] - 1.0) * (d_real[i] - 1.0);
    for (int i = 0; i < d_fake.size(); ++i) b += d_fake[i] * d_fake[i];
    return 0.5 * a / d_real.size() + 0.5 * b / d_fake.size();
}

inline double oracle_lsgan_g(const TensorD& d_fake) {
    double a = 0.0;
    for (int i = 0; i < d_fake.size(); ++i) a += (d_fake[i] - 1.0) * (d_fake[i] - 1.0);
    return 0.5 * a / d_fake.size();
}

// Randomize every registered parameter; used when tests need a
// non-degenerate network (zero-initialized heads included).
template <typename T>
void randomize_params(motra::ParamRegistryT<T>& reg, std::uint64_t seed, T scale = T(0.1)) {
    Rng r = motra::make_rng(seed, 0xAAAULL);
    std::normal_distribution<double> dist(0.0, static_cast<double>(scale));
    for (const auto& name : reg.names()) {
        auto& t = reg.at(name).val_mut();
        for (int i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(r));
    }
}

}  // namespace testutil
