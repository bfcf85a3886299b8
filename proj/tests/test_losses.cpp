#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "motra/losses.hpp"

using namespace motra;
using namespace testutil;

namespace {
using WD = LossWeightsT<double>;
using FXD = RandomConvFeaturesT<double>;

OneHotIUV random_gt_iuv(Rng& r, int h, int w) {
    std::uniform_int_distribution<int> part(0, 24);
    std::uniform_real_distribution<float> uv(0.0f, 1.0f);
    IUVMap m(h, w);
    for (int i = 0; i < h * w; ++i) {
        int p = part(r);
        m.part[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(p);
        if (p > 0) {
            m.u[i] = uv(r);
            m.v[i] = uv(r);
        }
    }
    return iuv_to_onehot(m);
}
}  // namespace

// ---- tv_loss ---------------------------------------------------------------

TEST_CASE("tv_loss: constant flow -> 0") {
    auto l = tv_loss(VarD::leaf(TensorD({2, 4, 4}, 0.37)));
    CHECK(l.val()[0] == doctest::Approx(0.0));
}

TEST_CASE("tv_loss: 1x2 flow with values 0 and 1 in one channel -> 0.5") {
    TensorD f({2, 1, 2}, 0.0);
    f.at(0, 0, 1) = 1.0;
    CHECK(tv_loss(VarD::leaf(f)).val()[0] == doctest::Approx(0.5));
}

TEST_CASE("tv_loss: homogeneous of degree 1") {
    auto r = rng(31);
    TensorD f = random_uniform<double>(r, {2, 5, 5}, -1.0, 1.0);
    TensorD f2 = f;
    for (int i = 0; i < f2.size(); ++i) f2[i] *= 2.0;
    CHECK(tv_loss(VarD::leaf(f2)).val()[0] ==
          doctest::Approx(2.0 * tv_loss(VarD::leaf(f)).val()[0]).epsilon(1e-9));
}

TEST_CASE("tv_loss: matches oracle on random flows") {
    auto r = rng(32);
    for (int cs = 0; cs < 100; ++cs) {
        TensorD f = random_uniform<double>(r, {2, 4, 6}, -1.0, 1.0);
        CHECK(tv_loss(VarD::leaf(f)).val()[0] == doctest::Approx(oracle_tv(f)).epsilon(1e-9));
    }
}

// ---- consistency_loss -------------------------------------------------------

TEST_CASE("consistency_loss: equal constant flows -> 0") {
    std::vector<VarD> flows = {VarD::leaf(TensorD({2, 2, 2}, 0.2)),
                               VarD::leaf(TensorD({2, 4, 4}, 0.2)),
                               VarD::leaf(TensorD({2, 8, 8}, 0.2))};
    CHECK(consistency_loss(flows).val()[0] == doctest::Approx(0.0));
}

TEST_CASE("consistency_loss: lowest 0, higher constant (0.2, 0) -> 0.1") {
    TensorD hi({2, 4, 4}, 0.0);
    for (int i = 0; i < 16; ++i) hi[i] = 0.2;  // x channel only
    std::vector<VarD> flows = {VarD::leaf(TensorD({2, 2, 2}, 0.0)), VarD::leaf(hi)};
    CHECK(consistency_loss(flows).val()[0] == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("consistency_loss: no gradient reaches the lowest level") {
    auto r = rng(33);
    VarD low = VarD::leaf(random_uniform<double>(r, {2, 2, 2}, -0.3, 0.3), true);
    VarD hi = VarD::leaf(random_uniform<double>(r, {2, 4, 4}, -0.3, 0.3), true);
    low.zero_grad();
    hi.zero_grad();
    consistency_loss<double>({low, hi}).backward();
    for (int i = 0; i < low.grad().size(); ++i) CHECK(low.grad()[i] == 0.0);
    double hi_abs = 0.0;
    for (int i = 0; i < hi.grad().size(); ++i) hi_abs += std::abs(hi.grad()[i]);
    CHECK(hi_abs > 0.0);
}

TEST_CASE("consistency_loss: matches oracle on random pyramids") {
    auto r = rng(34);
    for (int cs = 0; cs < 100; ++cs) {
        std::vector<TensorD> flows = {random_uniform<double>(r, {2, 2, 2}, -0.5, 0.5),
                                      random_uniform<double>(r, {2, 4, 4}, -0.5, 0.5),
                                      random_uniform<double>(r, {2, 8, 8}, -0.5, 0.5)};
        std::vector<VarD> vars;
        for (auto& f : flows) vars.push_back(VarD::leaf(f));
        CHECK(consistency_loss(vars).val()[0] ==
              doctest::Approx(oracle_consistency(flows)).epsilon(1e-9));
    }
}

// ---- affine_reg -------------------------------------------------------------

TEST_CASE("affine_reg: globally affine flow -> 0") {
    TensorD f({2, 8, 8});
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            f.at(0, y, x) = 0.03 * x - 0.01 * y + 0.2;
            f.at(1, y, x) = -0.02 * x + 0.05 * y - 0.1;
        }
    CHECK(affine_reg(VarD::leaf(f)).val()[0] == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("affine_reg: random flow is strictly positive") {
    auto r = rng(35);
    TensorD f = random_uniform<double>(r, {2, 8, 8}, -1.0, 1.0);
    CHECK(affine_reg(VarD::leaf(f)).val()[0] > 0.0);
}

TEST_CASE("affine_reg: equals explicit per-patch least squares") {
    auto r = rng(36);
    for (int cs = 0; cs < 100; ++cs) {
        TensorD f = random_uniform<double>(r, {2, 7, 6}, -1.0, 1.0);
        CHECK(affine_reg(VarD::leaf(f)).val()[0] ==
              doctest::Approx(oracle_affine_reg(f)).epsilon(1e-6));
    }
}

TEST_CASE("affine_reg: resolution below patch size -> 0 with warning") {
    CHECK(affine_reg(VarD::leaf(TensorD({2, 3, 3}, 0.5))).val()[0] == doctest::Approx(0.0));
}

// ---- perceptual_correctness -------------------------------------------------

TEST_CASE("perceptual_correctness: src==tgt with zero flow -> 0") {
    auto r = rng(37);
    FXD fx(42);
    TensorD img = random_uniform<double>(r, {3, 8, 8}, 0.0, 1.0);
    VarD src = VarD::leaf(img), tgt = VarD::leaf(img);
    VarD flow = VarD::leaf(TensorD({2, 8, 8}, 0.0));
    CHECK(perceptual_correctness(flow, src, tgt, fx).val()[0] ==
          doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("perceptual_correctness: bounded in [0,2]") {
    auto r = rng(38);
    FXD fx(42);
    for (int cs = 0; cs < 20; ++cs) {
        VarD src = VarD::leaf(random_uniform<double>(r, {3, 8, 8}, 0.0, 1.0));
        VarD tgt = VarD::leaf(random_uniform<double>(r, {3, 8, 8}, 0.0, 1.0));
        VarD flow = VarD::leaf(random_uniform<double>(r, {2, 8, 8}, -0.5, 0.5));
        double v = perceptual_correctness(flow, src, tgt, fx).val()[0];
        CHECK(v >= 0.0);
        CHECK(v <= 2.0);
    }
}

TEST_CASE("perceptual_correctness: matching shift beats zero flow") {
    auto r = rng(39);
    FXD fx(42);
    const int n = 16, k = 4;  // shift by 4 pixels
    TensorD tgt_t = random_uniform<double>(r, {3, n, n}, 0.0, 1.0);
    // src is tgt shifted right by k: src(x) = tgt(x - k) => tgt(x) = src(x + k)
    TensorD src_t({3, n, n}, 0.5);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                if (x + k < n) src_t.at(c, y, x + k) = tgt_t.at(c, y, x);
    VarD src = VarD::leaf(src_t), tgt = VarD::leaf(tgt_t);
    // gather semantics: out(x) = src(x + f); f = +k pixels in normalized units
    TensorD flow_t({2, n, n}, 0.0);
    for (int i = 0; i < n * n; ++i) flow_t[i] = 2.0 * k / (n - 1);
    double with_shift = perceptual_correctness(VarD::leaf(flow_t), src, tgt, fx).val()[0];
    double with_zero =
        perceptual_correctness(VarD::leaf(TensorD({2, n, n}, 0.0)), src, tgt, fx).val()[0];
    CHECK(with_shift < with_zero);
}

// ---- motion_loss ------------------------------------------------------------

TEST_CASE("motion_loss: zero sub-losses -> 0; unit sub-losses -> 11.01") {
    WD w;
    auto zero = ag::scalar<double>(0.0);
    CHECK(motion_loss(zero, zero, zero, zero, w).val()[0] == doctest::Approx(0.0));
    auto one = ag::scalar<double>(1.0);
    CHECK(motion_loss(one, one, one, one, w).val()[0] == doctest::Approx(11.01).epsilon(1e-12));
}

TEST_CASE("motion_loss: linear in the lambda weights") {
    auto r = rng(40);
    std::uniform_real_distribution<double> d(0.1, 2.0);
    double c = d(r), g = d(r), t = d(r), n = d(r);
    WD w;
    double base = motion_loss(ag::scalar(c), ag::scalar(g), ag::scalar(t), ag::scalar(n), w).val()[0];
    WD w2 = w;
    w2.tv *= 2.0;
    double doubled =
        motion_loss(ag::scalar(c), ag::scalar(g), ag::scalar(t), ag::scalar(n), w2).val()[0];
    CHECK(doubled - base == doctest::Approx(w.tv * t).epsilon(1e-9));
    WD w3 = w;
    w3.cor *= 3.0;
    w3.reg *= 3.0;
    w3.tv *= 3.0;
    w3.con *= 3.0;
    double tripled =
        motion_loss(ag::scalar(c), ag::scalar(g), ag::scalar(t), ag::scalar(n), w3).val()[0];
    CHECK(tripled == doctest::Approx(3.0 * base).epsilon(1e-9));
}

// ---- iuv_loss ---------------------------------------------------------------

TEST_CASE("iuv_loss: exact UV prediction zeroes the UV term regardless of scores") {
    auto r = rng(41);
    OneHotIUV gt = random_gt_iuv(r, 4, 4);
    VarD u = VarD::leaf(gt.u_parts.cast<double>());
    VarD v = VarD::leaf(gt.v_parts.cast<double>());
    VarD s = VarD::leaf(oracle_softmax(random_uniform<double>(r, {25, 4, 4}, -1.0, 1.0)));
    WD w;
    auto parts = iuv_loss_parts(u, v, s, gt, w);
    CHECK(parts.uv_term.val()[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("iuv_loss: one-hot scores with U,V off by 0.1 on one part") {
    // part 5 occupies 3 of 16 pixels; U and V each off by 0.1 there
    IUVMap m(4, 4);
    for (int i : {1, 6, 11}) {
        m.part[static_cast<std::size_t>(i)] = 5;
        m.u[i] = 0.5f;
        m.v[i] = 0.5f;
    }
    OneHotIUV gt = iuv_to_onehot(m);
    TensorD u = gt.u_parts.cast<double>();
    TensorD v = gt.v_parts.cast<double>();
    for (int i : {1, 6, 11}) {
        u[(5 - 1) * 16 + i] += 0.1;
        v[(5 - 1) * 16 + i] += 0.1;
    }
    VarD s = VarD::leaf(gt.score.cast<double>());  // perfect one-hot prediction
    WD w;
    auto parts = iuv_loss_parts(VarD::leaf(u), VarD::leaf(v), s, gt, w);
    double frac = 3.0 / 16.0;
    CHECK(parts.uv_term.val()[0] == doctest::Approx(2.0 * 0.1 * frac).epsilon(1e-9));
    CHECK(parts.total.val()[0] ==
          doctest::Approx(w.uv * 2.0 * 0.1 * frac + w.ce * parts.ce_term.val()[0]).epsilon(1e-9));
}

TEST_CASE("iuv_loss: uniform scores give CE = log 25") {
    auto r = rng(42);
    OneHotIUV gt = random_gt_iuv(r, 3, 3);
    VarD u = VarD::leaf(gt.u_parts.cast<double>());
    VarD v = VarD::leaf(gt.v_parts.cast<double>());
    VarD s = VarD::leaf(TensorD({25, 3, 3}, 1.0 / 25.0));
    WD w;
    auto parts = iuv_loss_parts(u, v, s, gt, w);
    CHECK(parts.ce_term.val()[0] == doctest::Approx(std::log(25.0)).epsilon(1e-9));
}

TEST_CASE("iuv_loss: linear in lambda weights") {
    auto r = rng(43);
    OneHotIUV gt = random_gt_iuv(r, 4, 4);
    VarD u = VarD::leaf(random_uniform<double>(r, {24, 4, 4}, 0.0, 1.0));
    VarD v = VarD::leaf(random_uniform<double>(r, {24, 4, 4}, 0.0, 1.0));
    VarD s = VarD::leaf(oracle_softmax(random_uniform<double>(r, {25, 4, 4}, -1.0, 1.0)));
    WD w;
    double base = iuv_loss(u, v, s, gt, w).val()[0];
    WD w2 = w;
    w2.uv *= 2.0;
    w2.ce *= 2.0;
    CHECK(iuv_loss(u, v, s, gt, w2).val()[0] == doctest::Approx(2.0 * base).epsilon(1e-9));
}

TEST_CASE("iuv_loss: detach switch stops gradients through the mask factor") {
    auto r = rng(44);
    OneHotIUV gt = random_gt_iuv(r, 4, 4);
    WD w;
    w.ce = 0.0;  // isolate the UV term
    VarD u = VarD::leaf(random_uniform<double>(r, {24, 4, 4}, 0.1, 0.9));
    VarD v = VarD::leaf(random_uniform<double>(r, {24, 4, 4}, 0.1, 0.9));
    VarD slog = VarD::leaf(random_uniform<double>(r, {25, 4, 4}, -1.0, 1.0), true);
    slog.zero_grad();
    iuv_loss(u, v, ag::softmax_ch(slog), gt, w, /*detach_mask=*/true).backward();
    for (int i = 0; i < slog.grad().size(); ++i) CHECK(slog.grad()[i] == 0.0);
    slog.zero_grad();
    iuv_loss(u, v, ag::softmax_ch(slog), gt, w, /*detach_mask=*/false).backward();
    double total = 0.0;
    for (int i = 0; i < slog.grad().size(); ++i) total += std::abs(slog.grad()[i]);
    CHECK(total > 0.0);
}

// ---- pyramid_perceptual_rec ---------------------------------------------------

TEST_CASE("rec: pred == gt -> 0") {
    auto r = rng(45);
    FXD fx(7);
    TensorD img = random_uniform<double>(r, {3, 8, 8}, 0.0, 1.0);
    WD w;
    CHECK(pyramid_perceptual_rec(VarD::leaf(img), VarD::leaf(img), fx, w).val()[0] ==
          doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("rec: uniform +0.1 offset gives L1 term exactly 0.1") {
    auto r = rng(46);
    FXD fx(7);
    TensorD gt = random_uniform<double>(r, {3, 8, 8}, 0.0, 0.5);
    TensorD pred = gt;
    for (int i = 0; i < pred.size(); ++i) pred[i] += 0.1;
    WD w;
    auto parts = pyramid_perceptual_rec_parts(VarD::leaf(pred), VarD::leaf(gt), fx, w);
    CHECK(parts.l1.val()[0] == doctest::Approx(0.1).epsilon(1e-9));
    // with the reference weights the weighted L1 contribution is 1.0 * 0.1
    CHECK(parts.total.val()[0] ==
          doctest::Approx(10.0 * parts.perceptual.val()[0] + 0.1).epsilon(1e-9));
}

TEST_CASE("rec: loss decreases monotonically when pred interpolates toward gt") {
    auto r = rng(47);
    FXD fx(7);
    WD w;
    TensorD gt = random_uniform<double>(r, {3, 8, 8}, 0.0, 1.0);
    TensorD start = random_uniform<double>(r, {3, 8, 8}, 0.0, 1.0);
    double prev = std::numeric_limits<double>::infinity();
    for (int s = 0; s <= 4; ++s) {
        double a = s / 4.0;
        TensorD p({3, 8, 8});
        for (int i = 0; i < p.size(); ++i) p[i] = (1 - a) * start[i] + a * gt[i];
        double v = pyramid_perceptual_rec(VarD::leaf(p), VarD::leaf(gt), fx, w).val()[0];
        CHECK(v < prev + 1e-12);
        prev = v;
    }
    CHECK(prev == doctest::Approx(0.0).epsilon(1e-9));
}

// ---- mask_bce -----------------------------------------------------------------

TEST_CASE("mask_bce: exact binary prediction ~ 0") {
    auto r = rng(48);
    std::uniform_int_distribution<int> bit(0, 1);
    TensorD gt({1, 4, 4});
    for (int i = 0; i < 16; ++i) gt[i] = bit(r);
    CHECK(mask_bce(VarD::leaf(gt), VarD::leaf(gt)).val()[0] <= 1e-5);
}

TEST_CASE("mask_bce: pred 0.5 everywhere -> ln 2") {
    auto r = rng(49);
    std::uniform_int_distribution<int> bit(0, 1);
    TensorD gt({1, 5, 5});
    for (int i = 0; i < 25; ++i) gt[i] = bit(r);
    CHECK(mask_bce(VarD::leaf(TensorD({1, 5, 5}, 0.5)), VarD::leaf(gt)).val()[0] ==
          doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("mask_bce: increasing pred where gt=1 decreases the loss") {
    TensorD gt({1, 2, 2}, 1.0);
    TensorD p({1, 2, 2}, 0.6);
    double before = mask_bce(VarD::leaf(p), VarD::leaf(gt)).val()[0];
    TensorD p2({1, 2, 2}, 0.7);
    CHECK(mask_bce(VarD::leaf(p2), VarD::leaf(gt)).val()[0] < before);
    // gradient sign check
    VarD pv = VarD::leaf(p, true);
    pv.zero_grad();
    mask_bce(pv, VarD::leaf(gt)).backward();
    for (int i = 0; i < 4; ++i) CHECK(pv.grad()[i] < 0.0);
}

// ---- lsgan --------------------------------------------------------------------

TEST_CASE("lsgan: fixed points from the objective") {
    TensorD ones({1, 3, 3}, 1.0), zeros({1, 3, 3}, 0.0);
    CHECK(lsgan_d_loss(VarD::leaf(ones), VarD::leaf(zeros)).val()[0] == doctest::Approx(0.0));
    CHECK(lsgan_g_loss(VarD::leaf(zeros)).val()[0] == doctest::Approx(0.5));
    CHECK(lsgan_d_loss(VarD::leaf(zeros), VarD::leaf(ones)).val()[0] == doctest::Approx(1.0));
    CHECK(lsgan_g_loss(VarD::leaf(ones)).val()[0] == doctest::Approx(0.0));
}

TEST_CASE("lsgan: matches quadratic-form oracle on random maps") {
    auto r = rng(50);
    for (int cs = 0; cs < 100; ++cs) {
        TensorD dr = random_uniform<double>(r, {1, 4, 4}, -2.0, 2.0);
        TensorD df = random_uniform<double>(r, {1, 4, 4}, -2.0, 2.0);
        CHECK(lsgan_d_loss(VarD::leaf(dr), VarD::leaf(df)).val()[0] ==
              doctest::Approx(oracle_lsgan_d(dr, df)).epsilon(1e-9));
        CHECK(lsgan_g_loss(VarD::leaf(df)).val()[0] ==
              doctest::Approx(oracle_lsgan_g(df)).epsilon(1e-9));
    }
}

// ---- non-negativity and gradient checks across all losses ---------------------

TEST_CASE("all losses: non-negative and finite on random inputs") {
    auto r = rng(51);
    FXD fx(7);
    WD w;
    for (int cs = 0; cs < 10; ++cs) {
        TensorD f = random_uniform<double>(r, {2, 8, 8}, -0.5, 0.5);
        CHECK(tv_loss(VarD::leaf(f)).val()[0] >= 0.0);
        CHECK(affine_reg(VarD::leaf(f)).val()[0] >= 0.0);
        TensorD img = random_uniform<double>(r, {3, 8, 8}, 0.0, 1.0);
        TensorD img2 = random_uniform<double>(r, {3, 8, 8}, 0.0, 1.0);
        CHECK(perceptual_correctness(VarD::leaf(f), VarD::leaf(img), VarD::leaf(img2), fx).val()[0] >= 0.0);
        double rec = pyramid_perceptual_rec(VarD::leaf(img), VarD::leaf(img2), fx, w).val()[0];
        CHECK(rec >= 0.0);
        CHECK(std::isfinite(rec));
        OneHotIUV gt = random_gt_iuv(r, 4, 4);
        VarD u = VarD::leaf(random_uniform<double>(r, {24, 4, 4}, 0.0, 1.0));
        VarD v = VarD::leaf(random_uniform<double>(r, {24, 4, 4}, 0.0, 1.0));
        VarD s = VarD::leaf(oracle_softmax(random_uniform<double>(r, {25, 4, 4}, -1.0, 1.0)));
        CHECK(iuv_loss(u, v, s, gt, w).val()[0] >= 0.0);
    }
}

TEST_CASE("loss gradients match finite differences on random 4x4 instances") {
    auto r = rng(52);
    FXD fx(7);
    WD w;
    double worst = 0.0;

    for (int cs = 0; cs < 20; ++cs) {
        // tv
        VarD f = VarD::leaf(random_uniform<double>(r, {2, 4, 4}, -0.5, 0.5), true);
        worst = std::max(worst, grad_check([&]() { return tv_loss(f); }, {f}).max_rel_err);
        // consistency (higher level)
        VarD low = VarD::leaf(random_uniform<double>(r, {2, 2, 2}, -0.3, 0.3));
        VarD hi = VarD::leaf(random_uniform<double>(r, {2, 4, 4}, -0.3, 0.3), true);
        worst = std::max(worst,
                         grad_check([&]() { return consistency_loss<double>({low, hi}); }, {hi})
                             .max_rel_err);
        // affine (5x5 min size)
        VarD fa = VarD::leaf(random_uniform<double>(r, {2, 5, 5}, -0.5, 0.5), true);
        worst = std::max(worst, grad_check([&]() { return affine_reg(fa); }, {fa}).max_rel_err);
        // correctness w.r.t. flow
        VarD src = VarD::leaf(random_uniform<double>(r, {3, 4, 4}, 0.1, 0.9));
        VarD tgt = VarD::leaf(random_uniform<double>(r, {3, 4, 4}, 0.1, 0.9));
        VarD fc = VarD::leaf(random_uniform<double>(r, {2, 4, 4}, -0.25, 0.25), true);
        worst = std::max(
            worst,
            grad_check([&]() { return perceptual_correctness(fc, src, tgt, fx); }, {fc}, 1e-5)
                .max_rel_err);
        // iuv w.r.t. u, v and score logits
        OneHotIUV gt = random_gt_iuv(r, 4, 4);
        VarD u = VarD::leaf(random_uniform<double>(r, {24, 4, 4}, 0.1, 0.9), true);
        VarD v = VarD::leaf(random_uniform<double>(r, {24, 4, 4}, 0.1, 0.9), true);
        VarD slog = VarD::leaf(random_uniform<double>(r, {25, 4, 4}, -1.0, 1.0), true);
        worst = std::max(
            worst, grad_check([&]() { return iuv_loss(u, v, ag::softmax_ch(slog), gt, w); },
                              {u, v, slog})
                       .max_rel_err);
        // rec w.r.t. pred
        VarD gtv = VarD::leaf(random_uniform<double>(r, {3, 4, 4}, 0.0, 1.0));
        VarD pred = VarD::leaf(random_uniform<double>(r, {3, 4, 4}, 0.0, 1.0), true);
        worst = std::max(
            worst,
            grad_check([&]() { return pyramid_perceptual_rec(pred, gtv, fx, w, 2); }, {pred})
                .max_rel_err);
        // bce w.r.t. pred (inside the clamp)
        VarD gm = VarD::leaf(random_uniform<double>(r, {1, 4, 4}, 0.0, 1.0));
        VarD pm = VarD::leaf(random_uniform<double>(r, {1, 4, 4}, 0.05, 0.95), true);
        worst = std::max(worst, grad_check([&]() { return mask_bce(pm, gm); }, {pm}).max_rel_err);
        // lsgan
        VarD dr = VarD::leaf(random_uniform<double>(r, {1, 4, 4}, -1.0, 1.0), true);
        VarD df = VarD::leaf(random_uniform<double>(r, {1, 4, 4}, -1.0, 1.0), true);
        worst = std::max(worst,
                         grad_check([&]() { return lsgan_d_loss(dr, ag::detach(df)); }, {dr})
                             .max_rel_err);
        worst = std::max(worst, grad_check([&]() { return lsgan_g_loss(df); }, {df}).max_rel_err);
    }
    CHECK(worst < 1e-3);
}
