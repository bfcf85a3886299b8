#pragma once

#include <Eigen/Dense>
#include <iostream>

#include "motra/feature_extractor.hpp"
#include "motra/sampling.hpp"

namespace motra {

// Loss weights; defaults are the reference values (motion 5.0/0.01/1.0/5.0,
// IUV 5.0/1.0, reconstruction 10.0/1.0). All norms are mean-reduced over
// elements; every hand-computed expected value in the tests assumes this
// single reduction convention.
template <typename T>
struct LossWeightsT {
    T cor = T(5.0);
    T reg = T(0.01);
    T tv = T(1.0);
    T con = T(5.0);
    T uv = T(5.0);
    T ce = T(1.0);
    T p = T(10.0);
    T l1 = T(1.0);
};

using LossWeights = LossWeightsT<float>;

// Mean absolute forward difference over both spatial axes and both flow
// channels; flows with no valid differences give 0.
template <typename T>
VarT<T> tv_loss(const VarT<T>& flow) {
    const auto& s = flow.shape();
    if (s.size() != 3) throw ShapeError("tv_loss expects (2,h,w)");
    int c = s[0], h = s[1], w = s[2];
    long count = static_cast<long>(c) * (static_cast<long>(h) * (w - 1) + static_cast<long>(h - 1) * w);
    if (count == 0) return ag::scalar<T>(T(0));
    T acc = T(0);
    const auto& f = flow.val();
    for (int k = 0; k < c; ++k)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (x + 1 < w) acc += std::abs(f.at(k, y, x + 1) - f.at(k, y, x));
                if (y + 1 < h) acc += std::abs(f.at(k, y + 1, x) - f.at(k, y, x));
            }
    T value = acc / static_cast<T>(count);
    auto* pf = flow.node().get();
    return ag::make_op<T>(TensorT<T>({1}, value), {flow}, [pf, c, h, w, count](NodeT<T>& n) {
        auto& g = pf->ensure_grad();
        T scale = n.grad[0] / static_cast<T>(count);
        const auto& f = pf->value;
        for (int k = 0; k < c; ++k)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    if (x + 1 < w) {
                        T d = f.at(k, y, x + 1) - f.at(k, y, x);
                        T sgn = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
                        g.at(k, y, x + 1) += scale * sgn;
                        g.at(k, y, x) -= scale * sgn;
                    }
                    if (y + 1 < h) {
                        T d = f.at(k, y + 1, x) - f.at(k, y, x);
                        T sgn = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
                        g.at(k, y + 1, x) += scale * sgn;
                        g.at(k, y, x) -= scale * sgn;
                    }
                }
    });
}

// Multi-scale flow consistency: the coarsest flow, upsampled, acts as a soft
// label for every higher level. No gradient reaches the coarsest flow.
template <typename T>
VarT<T> consistency_loss(const std::vector<VarT<T>>& flows_coarsest_first) {
    if (flows_coarsest_first.empty()) throw ShapeError("consistency_loss: empty pyramid");
    if (flows_coarsest_first.size() == 1) {
        std::cerr << "[motra] warning: consistency_loss on single-level pyramid -> 0\n";
        return ag::scalar<T>(T(0));
    }
    const VarT<T>& lowest = flows_coarsest_first[0];
    VarT<T> total = ag::scalar<T>(T(0));
    for (std::size_t i = 1; i < flows_coarsest_first.size(); ++i) {
        const VarT<T>& f = flows_coarsest_first[i];
        VarT<T> up = nn::bilinear_resize(ag::detach(lowest), f.shape()[1], f.shape()[2]);
        total = ag::add(total, ag::mean(ag::abs(ag::sub(f, up))));
    }
    return total;
}

// Local affine residual: every k x k patch of the flow is projected onto its
// best-fit affine model; the loss is the mean squared residual. The
// projection matrix P = I - X(X^T X)^{-1} X^T is fixed by the patch
// coordinates, so backward is one more application of P.
template <typename T>
VarT<T> affine_reg(const VarT<T>& flow, int k = 5) {
    const auto& s = flow.shape();
    if (s.size() != 3) throw ShapeError("affine_reg expects (2,h,w)");
    int c = s[0], h = s[1], w = s[2];
    if (h < k || w < k) {
        std::cerr << "[motra] warning: affine_reg on resolution below patch size -> 0\n";
        return ag::scalar<T>(T(0));
    }
    const int kk = k * k;
    // hat-matrix complement in double precision
    Eigen::MatrixXd X(kk, 3);
    for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
            int r = dy * k + dx;
            X(r, 0) = dx;
            X(r, 1) = dy;
            X(r, 2) = 1.0;
        }
    Eigen::MatrixXd H = X * (X.transpose() * X).inverse() * X.transpose();
    Eigen::MatrixXd Pd = Eigen::MatrixXd::Identity(kk, kk) - H;
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> P = Pd.cast<T>();

    int nh = h - k + 1, nw = w - k + 1;
    TensorT<T> res({c, nh * nw, kk});
    Eigen::Matrix<T, Eigen::Dynamic, 1> patch(kk), proj(kk);
    const auto& f = flow.val();
    for (int ch = 0; ch < c; ++ch)
        for (int py = 0; py < nh; ++py)
            for (int px = 0; px < nw; ++px) {
                for (int dy = 0; dy < k; ++dy)
                    for (int dx = 0; dx < k; ++dx)
                        patch[dy * k + dx] = f.at(ch, py + dy, px + dx);
                proj.noalias() = P * patch;
                T* out = res.data() + (static_cast<long>(ch) * nh * nw + py * nw + px) * kk;
                for (int r = 0; r < kk; ++r) out[r] = proj[r];
            }

    auto* pf = flow.node().get();
    VarT<T> residuals = ag::make_op<T>(
        std::move(res), {flow}, [pf, P, c, h, w, k, nh, nw, kk](NodeT<T>& n) {
            auto& g = pf->ensure_grad();
            Eigen::Matrix<T, Eigen::Dynamic, 1> gr(kk), gp(kk);
            for (int ch = 0; ch < c; ++ch)
                for (int py = 0; py < nh; ++py)
                    for (int px = 0; px < nw; ++px) {
                        const T* src = n.grad.data() +
                                       (static_cast<long>(ch) * nh * nw + py * nw + px) * kk;
                        for (int r = 0; r < kk; ++r) gr[r] = src[r];
                        gp.noalias() = P.transpose() * gr;
                        for (int dy = 0; dy < k; ++dy)
                            for (int dx = 0; dx < k; ++dx)
                                g.at(ch, py + dy, px + dx) += gp[dy * k + dx];
                    }
        });
    return ag::mean(ag::square(residuals));
}

// Perceptual correctness: 1 - cosine similarity between the flow-warped
// source feature and the target feature, averaged over valid locations.
// The extractor tap closest in resolution to the flow is used; zero-norm
// feature vectors are excluded from the average.
template <typename T>
VarT<T> perceptual_correctness(const VarT<T>& flow, const VarT<T>& src_img,
                               const VarT<T>& tgt_img, const FeatureFnT<T>& fx) {
    const auto& fs = flow.shape();
    if (fs.size() != 3 || fs[0] != 2) throw ShapeError("perceptual_correctness expects flow (2,h,w)");
    if (!src_img.val().same_shape(tgt_img.val()))
        throw ShapeError("perceptual_correctness: src/tgt size mismatch");
    int fh = fs[1], fw = fs[2];

    std::vector<VarT<T>> src_taps = fx.taps(ag::detach(src_img));
    std::vector<VarT<T>> tgt_taps = fx.taps(ag::detach(tgt_img));
    std::size_t best = 0;
    int best_diff = std::numeric_limits<int>::max();
    for (std::size_t i = 0; i < src_taps.size(); ++i) {
        int d = std::abs(src_taps[i].shape()[1] - fh);
        if (d < best_diff) {
            best_diff = d;
            best = i;
        }
    }
    VarT<T> fsrc = nn::bilinear_resize(src_taps[best], fh, fw);
    VarT<T> ftgt = nn::bilinear_resize(tgt_taps[best], fh, fw);

    VarT<T> grid = ag::add(ag::constant(identity_grid<T>(fh, fw)), flow);
    VarT<T> warped = bilinear_sample(fsrc, grid);

    VarT<T> dot = ag::sum_ch(ag::mul(warped, ftgt));
    VarT<T> na = ag::sqrt_guard(ag::sum_ch(ag::square(warped)));
    VarT<T> nb = ag::sqrt_guard(ag::sum_ch(ag::square(ftgt)));
    VarT<T> denom = ag::add_scalar(ag::mul(na, nb), T(1e-12));
    VarT<T> cos_map = ag::div(dot, denom);

    // validity mask from the value path only
    TensorT<T> maskt({1, fh, fw});
    long valid = 0;
    for (int i = 0; i < fh * fw; ++i) {
        bool ok = na.val()[i] > T(1e-8) && nb.val()[i] > T(1e-8);
        maskt[i] = ok ? T(1) : T(0);
        valid += ok ? 1 : 0;
    }
    if (valid == 0) return ag::scalar<T>(T(0));
    VarT<T> deficit = ag::sub(ag::constant(TensorT<T>({1, fh, fw}, T(1))), cos_map);
    VarT<T> masked = ag::mul(deficit, ag::constant(std::move(maskt)));
    return ag::mul_scalar(ag::sum(masked), T(1) / static_cast<T>(valid));
}

// Weighted sum of the four motion terms.
template <typename T>
VarT<T> motion_loss(const VarT<T>& correctness, const VarT<T>& regularization,
                    const VarT<T>& tv, const VarT<T>& consistency,
                    const LossWeightsT<T>& w) {
    VarT<T> out = ag::mul_scalar(correctness, w.cor);
    out = ag::add(out, ag::mul_scalar(regularization, w.reg));
    out = ag::add(out, ag::mul_scalar(tv, w.tv));
    out = ag::add(out, ag::mul_scalar(consistency, w.con));
    return out;
}

template <typename T>
struct IuvLossParts {
    VarT<T> uv_term;  // unweighted
    VarT<T> ce_term;  // unweighted
    VarT<T> total;    // lambda_uv * uv + lambda_ce * ce
};

// Masked UV regression plus 25-way cross entropy. The L1 mask is the
// PREDICTED score map; gradients flow through the mask factor unless
// detach_mask is set.
template <typename T>
IuvLossParts<T> iuv_loss_parts(const VarT<T>& u_hat, const VarT<T>& v_hat, const VarT<T>& s_hat,
                               const OneHotIUV& gt, const LossWeightsT<T>& w,
                               bool detach_mask = false) {
    const auto& us = u_hat.shape();
    if (us.size() != 3 || us[0] != kNumParts) throw ShapeError("iuv_loss: u_hat must be (24,h,w)");
    if (!u_hat.val().same_shape(v_hat.val())) throw ShapeError("iuv_loss: u/v shape mismatch");
    if (s_hat.shape()[0] != kNumScoreChannels) throw ShapeError("iuv_loss: s_hat must be (25,h,w)");
    int h = us[1], wd = us[2];
    if (gt.height() != h || gt.width() != wd) throw ShapeError("iuv_loss: gt resolution mismatch");
    T inv_hw = T(1) / static_cast<T>(h * wd);

    VarT<T> mask = ag::slice_dim0(s_hat, 1, kNumScoreChannels);
    if (detach_mask) mask = ag::detach(mask);
    VarT<T> ugt = ag::constant(gt.u_parts.template cast<T>());
    VarT<T> vgt = ag::constant(gt.v_parts.template cast<T>());
    VarT<T> term_u = ag::mul_scalar(ag::sum(ag::mul(mask, ag::abs(ag::sub(ugt, u_hat)))), inv_hw);
    VarT<T> term_v = ag::mul_scalar(ag::sum(ag::mul(mask, ag::abs(ag::sub(vgt, v_hat)))), inv_hw);
    VarT<T> uv_term = ag::add(term_u, term_v);

    VarT<T> sgt = ag::constant(gt.score.template cast<T>());
    VarT<T> logp = ag::log(ag::clamp(s_hat, T(1e-12), T(2)));
    VarT<T> ce = ag::neg(ag::mean(ag::sum_ch(ag::mul(sgt, logp))));

    IuvLossParts<T> out;
    out.uv_term = uv_term;
    out.ce_term = ce;
    out.total = ag::add(ag::mul_scalar(uv_term, w.uv), ag::mul_scalar(ce, w.ce));
    return out;
}

template <typename T>
VarT<T> iuv_loss(const VarT<T>& u_hat, const VarT<T>& v_hat, const VarT<T>& s_hat,
                 const OneHotIUV& gt, const LossWeightsT<T>& w, bool detach_mask = false) {
    return iuv_loss_parts(u_hat, v_hat, s_hat, gt, w, detach_mask).total;
}

template <typename T>
struct RecLossParts {
    VarT<T> perceptual;  // unweighted
    VarT<T> l1;          // unweighted
    VarT<T> total;       // lambda_p * perceptual + lambda_1 * l1
};

// Image pyramid perceptual loss + L1 reconstruction. Each pyramid level is a
// factor-2 downsampling of the previous one; each tap contributes the RMS of
// the feature difference (the mean-reduced L2 norm).
template <typename T>
RecLossParts<T> pyramid_perceptual_rec_parts(const VarT<T>& pred, const VarT<T>& gt,
                                             const FeatureFnT<T>& fx, const LossWeightsT<T>& w,
                                             int n_scales = 3) {
    if (!pred.val().same_shape(gt.val())) throw ShapeError("pyramid_perceptual_rec: size mismatch");
    VarT<T> l1 = ag::mean(ag::abs(ag::sub(gt, pred)));
    VarT<T> perc = ag::scalar<T>(T(0));
    VarT<T> p = pred;
    VarT<T> g = ag::detach(gt);
    for (int l = 0; l < n_scales; ++l) {
        std::vector<VarT<T>> tp = fx.taps(p);
        std::vector<VarT<T>> tg = fx.taps(g);
        for (std::size_t i = 0; i < tp.size(); ++i) {
            VarT<T> diff = ag::sub(tp[i], tg[i]);
            perc = ag::add(perc, ag::sqrt_guard(ag::mean(ag::square(diff))));
        }
        if (l + 1 < n_scales) {
            if (p.shape()[1] < 2 || p.shape()[2] < 2 || p.shape()[1] % 2 || p.shape()[2] % 2)
                break;
            p = nn::avg_pool2(p);
            g = nn::avg_pool2(g);
        }
    }
    RecLossParts<T> out;
    out.perceptual = perc;
    out.l1 = l1;
    out.total = ag::add(ag::mul_scalar(perc, w.p), ag::mul_scalar(l1, w.l1));
    return out;
}

template <typename T>
VarT<T> pyramid_perceptual_rec(const VarT<T>& pred, const VarT<T>& gt, const FeatureFnT<T>& fx,
                               const LossWeightsT<T>& w, int n_scales = 3) {
    return pyramid_perceptual_rec_parts(pred, gt, fx, w, n_scales).total;
}

// Standard binary cross entropy, mean reduced, predictions clamped to
// [eps, 1-eps] with eps = 1e-6.
template <typename T>
VarT<T> mask_bce(const VarT<T>& pred, const VarT<T>& gt) {
    if (!pred.val().same_shape(gt.val())) throw ShapeError("mask_bce: size mismatch");
    const T eps = T(1e-6);
    VarT<T> p = ag::clamp(pred, eps, T(1) - eps);
    VarT<T> ones = ag::constant(TensorT<T>(pred.shape(), T(1)));
    VarT<T> gtc = ag::detach(gt);
    VarT<T> pos = ag::mul(gtc, ag::log(p));
    VarT<T> neg_ = ag::mul(ag::sub(ones, gtc), ag::log(ag::sub(ones, p)));
    return ag::neg(ag::mean(ag::add(pos, neg_)));
}

// LSGAN split into the two optimization roles: the caller passes a detached
// fake map to the discriminator loss.
template <typename T>
VarT<T> lsgan_d_loss(const VarT<T>& d_real, const VarT<T>& d_fake_detached) {
    VarT<T> ones = ag::constant(TensorT<T>(d_real.shape(), T(1)));
    VarT<T> a = ag::mul_scalar(ag::mean(ag::square(ag::sub(d_real, ones))), T(0.5));
    VarT<T> b = ag::mul_scalar(ag::mean(ag::square(d_fake_detached)), T(0.5));
    return ag::add(a, b);
}

template <typename T>
VarT<T> lsgan_g_loss(const VarT<T>& d_fake) {
    VarT<T> ones = ag::constant(TensorT<T>(d_fake.shape(), T(1)));
    return ag::mul_scalar(ag::mean(ag::square(ag::sub(d_fake, ones))), T(0.5));
}

}  // namespace motra
