#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "motra/model.hpp"

using namespace motra;
using namespace testutil;

namespace {

RunConfig tiny_cfg() {
    RunConfig c;
    c.working_res = 16;
    c.output_res = 32;
    c.flow_scales = {4, 8, 16};
    c.base_channels = 4;
    c.warp_channels = 4;
    c.blender_channels = 6;
    c.atlas_res = 4;
    c.atlas_channels = 3;
    c.alpha_len = 12;
    c.rho_len = 10;
    c.batch_size = 1;
    return c;
}

template <typename T>
OneHotIUV random_onehot(Rng& r, int n) {
    std::uniform_int_distribution<int> part(0, 24);
    std::uniform_real_distribution<float> uv(0.0f, 1.0f);
    IUVMap m(n, n);
    for (int i = 0; i < n * n; ++i) {
        int p = part(r);
        m.part[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(p);
        if (p > 0) {
            m.u[i] = uv(r);
            m.v[i] = uv(r);
        }
    }
    return iuv_to_onehot(m);
}

// random score map that is a valid softmax output
TensorD random_scores(Rng& r, int h, int w) {
    return oracle_softmax(random_uniform<double>(r, {25, h, w}, -1.5, 1.5));
}

}  // namespace

TEST_CASE("encode_shared: zeroing the trunk changes both codes, app head only app_code") {
    RunConfig cfg = tiny_cfg();
    ModelT<float> model(cfg, 21);
    randomize_params(model.params(), 555, 0.3f);
    auto r = rng(80);
    Tensor img = random_uniform<float>(r, {3, 16, 16}, 0.0f, 1.0f);
    OneHotIUV ps = random_onehot<float>(r, 16);
    auto [app0, geo0] = model.texture_branch().encode_shared(Var::leaf(img), ps);

    // zero the app head: only app_code may change
    ModelT<float> m2(cfg, 21);
    randomize_params(m2.params(), 555, 0.3f);
    for (const auto& n : m2.group_params("tex_enc"))
        if (n.rfind("tex_enc.app_head", 0) == 0) m2.params().at(n).val_mut().zero();
    auto [app1, geo1] = m2.texture_branch().encode_shared(Var::leaf(img), ps);
    bool app_changed = false;
    for (int i = 0; i < app0.val().size(); ++i)
        if (app0.val()[i] != app1.val()[i]) app_changed = true;
    CHECK(app_changed);
    for (int i = 0; i < geo0.val().size(); ++i) CHECK(geo0.val()[i] == geo1.val()[i]);

    // zero the shared trunk: both codes change
    ModelT<float> m3(cfg, 21);
    randomize_params(m3.params(), 555, 0.3f);
    for (const auto& n : m3.group_params("tex_enc"))
        if (n.rfind("tex_enc.stem", 0) == 0 || n.rfind("tex_enc.down", 0) == 0)
            m3.params().at(n).val_mut().zero();
    auto [app2, geo2] = m3.texture_branch().encode_shared(Var::leaf(img), ps);
    bool both_changed_app = false, both_changed_geo = false;
    for (int i = 0; i < app0.val().size(); ++i)
        if (app0.val()[i] != app2.val()[i]) both_changed_app = true;
    for (int i = 0; i < geo0.val().size(); ++i)
        if (geo0.val()[i] != geo2.val()[i]) both_changed_geo = true;
    CHECK(both_changed_app);
    CHECK(both_changed_geo);
}

TEST_CASE("encode_shared: determinism and code shapes per config") {
    RunConfig cfg = tiny_cfg();
    ModelT<float> model(cfg, 22);
    auto r = rng(81);
    Tensor img = random_uniform<float>(r, {3, 16, 16}, 0.0f, 1.0f);
    OneHotIUV ps = random_onehot<float>(r, 16);
    auto [a1, g1] = model.texture_branch().encode_shared(Var::leaf(img), ps);
    auto [a2, g2] = model.texture_branch().encode_shared(Var::leaf(img), ps);
    CHECK(a1.shape() == std::vector<int>{4 * cfg.base_channels, 4, 4});
    CHECK(g1.shape() == std::vector<int>{4 * cfg.base_channels, 4, 4});
    for (int i = 0; i < a1.val().size(); ++i) CHECK(a1.val()[i] == a2.val()[i]);
    for (int i = 0; i < g1.val().size(); ++i) CHECK(g1.val()[i] == g2.val()[i]);
}

TEST_CASE("translate_atlas: shape, conditioning non-degeneracy and alpha gradient") {
    RunConfig cfg = tiny_cfg();
    ModelT<double> model(cfg, 23);
    randomize_params(model.params(), 777, 0.2);
    auto r = rng(82);
    TensorD img = random_uniform<double>(r, {3, 16, 16}, 0.0, 1.0);
    OneHotIUV ps = random_onehot<double>(r, 16);
    auto [app, geo] = model.texture_branch().encode_shared(VarD::leaf(img), ps);

    VarD alpha = VarD::leaf(random_uniform<double>(r, {12}, -1.0, 1.0), true);
    VarD atlas = model.texture_branch().translate_atlas(app, alpha);
    CHECK(atlas.shape() == std::vector<int>{24, 3, 4, 4});

    VarD alpha2 = VarD::leaf(random_uniform<double>(r, {12}, -1.0, 1.0));
    VarD atlas2 = model.texture_branch().translate_atlas(app, alpha2);
    bool differs = false;
    for (int i = 0; i < atlas.val().size(); ++i)
        if (atlas.val()[i] != atlas2.val()[i]) differs = true;
    CHECK(differs);

    auto f = [&]() {
        return ag::mean(ag::square(model.texture_branch().translate_atlas(app, alpha)));
    };
    CHECK(grad_check(f, {alpha}).max_rel_err < 1e-3);

    VarD bad = VarD::leaf(TensorD({7}, 0.0));
    CHECK_THROWS_AS(model.texture_branch().translate_atlas(app, bad), ShapeError);
}

TEST_CASE("translate_iuv: softmax scores, sigmoid ranges, determinism") {
    RunConfig cfg = tiny_cfg();
    ModelT<float> model(cfg, 24);
    randomize_params(model.params(), 888, 0.3f);
    auto r = rng(83);
    Tensor img = random_uniform<float>(r, {3, 16, 16}, 0.0f, 1.0f);
    OneHotIUV ps = random_onehot<float>(r, 16);
    auto [app, geo] = model.texture_branch().encode_shared(Var::leaf(img), ps);
    Var rho = Var::leaf(random_uniform<float>(r, {10}, -1.0f, 1.0f));
    auto [u, v, s] = model.texture_branch().translate_iuv(geo, rho);
    CHECK(u.shape() == std::vector<int>{24, 16, 16});
    CHECK(s.shape() == std::vector<int>{25, 16, 16});
    CHECK(u.val().min() >= 0.0f);
    CHECK(u.val().max() <= 1.0f);
    CHECK(v.val().min() >= 0.0f);
    CHECK(v.val().max() <= 1.0f);
    int hw = 16 * 16;
    for (int i = 0; i < hw; ++i) {
        float sum = 0.0f;
        for (int k = 0; k < 25; ++k) sum += s.val()[k * hw + i];
        CHECK(sum == doctest::Approx(1.0f).epsilon(1e-5));
    }
    auto [u2, v2, s2] = model.texture_branch().translate_iuv(geo, rho);
    for (int i = 0; i < u.val().size(); ++i) CHECK(u.val()[i] == u2.val()[i]);
}

TEST_CASE("sample_atlas: constant part value is preserved for any UV") {
    auto r = rng(84);
    TensorD atlas({24, 2, 3, 3}, 0.0);
    for (int i = 0; i < 2 * 9; ++i) atlas[7 * 2 * 9 + i] = 0.3;  // part 7 constant
    VarD u = VarD::leaf(random_uniform<double>(r, {24, 4, 4}, 0.0, 1.0));
    VarD v = VarD::leaf(random_uniform<double>(r, {24, 4, 4}, 0.0, 1.0));
    auto parts = sample_atlas(VarD::leaf(atlas), u, v);
    REQUIRE(parts.size() == 24);
    for (int i = 0; i < parts[7].val().size(); ++i)
        CHECK(parts[7].val()[i] == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("sample_atlas: UV at texel centers returns exact atlas texels") {
    auto r = rng(85);
    TensorD atlas = random_uniform<double>(r, {24, 2, 3, 3}, -1.0, 1.0);
    // a 3x3 UV map hitting the 3x3 texel centers of part k=2
    TensorD u({24, 3, 3}, 0.0), v({24, 3, 3}, 0.0);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            u[(2 * 3 + i) * 3 + j] = j / 2.0;
            v[(2 * 3 + i) * 3 + j] = i / 2.0;
        }
    auto parts = sample_atlas(VarD::leaf(atlas), VarD::leaf(u), VarD::leaf(v));
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 9; ++i)
            CHECK(parts[2].val()[c * 9 + i] ==
                  doctest::Approx(atlas[(2 * 2 + c) * 9 + i]).epsilon(1e-12));
}

TEST_CASE("sample_atlas: matches hand-rolled gather on random instances") {
    auto r = rng(86);
    for (int cs = 0; cs < 100; ++cs) {
        TensorD atlas = random_uniform<double>(r, {24, 2, 2, 2}, -1.0, 1.0);
        TensorD u = random_uniform<double>(r, {24, 3, 3}, 0.0, 1.0);
        TensorD v = random_uniform<double>(r, {24, 3, 3}, 0.0, 1.0);
        auto parts = sample_atlas(VarD::leaf(atlas), VarD::leaf(u), VarD::leaf(v));
        for (int k = 0; k < 24; ++k) {
            TensorD part_tex({2, 2, 2});
            for (int i = 0; i < 8; ++i) part_tex[i] = atlas[k * 8 + i];
            for (int c = 0; c < 2; ++c)
                for (int i = 0; i < 9; ++i) {
                    double gx = 2.0 * u[k * 9 + i] - 1.0;
                    double gy = 2.0 * v[k * 9 + i] - 1.0;
                    CHECK(parts[k].val()[c * 9 + i] ==
                          doctest::Approx(oracle_bilinear(part_tex, c, gx, gy)).epsilon(1e-9));
                }
        }
    }
}

TEST_CASE("fuse_parts: one-hot score selects a single part") {
    auto r = rng(87);
    std::vector<VarD> parts;
    for (int k = 0; k < 24; ++k)
        parts.push_back(VarD::leaf(random_uniform<double>(r, {3, 4, 4}, -1.0, 1.0)));
    TensorD score({25, 4, 4}, 0.0);
    for (int i = 0; i < 16; ++i) score[(7 + 1) * 16 + i] = 1.0;  // select part index 7
    auto out = fuse_parts(parts, VarD::leaf(score));
    for (int i = 0; i < out.val().size(); ++i)
        CHECK(out.val()[i] == doctest::Approx(parts[7].val()[i]).epsilon(1e-12));
}

TEST_CASE("fuse_parts: uniform foreground score averages the parts") {
    auto r = rng(88);
    std::vector<VarD> parts;
    for (int k = 0; k < 24; ++k)
        parts.push_back(VarD::leaf(random_uniform<double>(r, {2, 3, 3}, -1.0, 1.0)));
    TensorD score({25, 3, 3}, 0.0);
    for (int k = 1; k < 25; ++k)
        for (int i = 0; i < 9; ++i) score[k * 9 + i] = 1.0 / 24.0;
    auto out = fuse_parts(parts, VarD::leaf(score));
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 9; ++i) {
            double mean = 0.0;
            for (int k = 0; k < 24; ++k) mean += parts[k].val()[c * 9 + i];
            mean /= 24.0;
            CHECK(out.val()[c * 9 + i] == doctest::Approx(mean).epsilon(1e-9));
        }
}

TEST_CASE("fuse_parts: equals the explicit 24-term summation") {
    auto r = rng(89);
    for (int cs = 0; cs < 100; ++cs) {
        std::vector<TensorD> parts_t;
        std::vector<VarD> parts;
        for (int k = 0; k < 24; ++k) {
            parts_t.push_back(random_uniform<double>(r, {2, 3, 3}, -1.0, 1.0));
            parts.push_back(VarD::leaf(parts_t.back()));
        }
        TensorD score = random_scores(r, 3, 3);
        auto out = fuse_parts(parts, VarD::leaf(score));
        TensorD want = oracle_fuse_parts(parts_t, score);
        for (int i = 0; i < want.size(); ++i)
            CHECK(out.val()[i] == doctest::Approx(want[i]).epsilon(1e-9));
    }
}

TEST_CASE("fuse_parts: linear in parts and scores") {
    auto r = rng(90);
    std::vector<TensorD> parts_t;
    std::vector<VarD> parts, parts_scaled;
    for (int k = 0; k < 24; ++k) {
        parts_t.push_back(random_uniform<double>(r, {2, 3, 3}, -1.0, 1.0));
        parts.push_back(VarD::leaf(parts_t.back()));
        TensorD sc = parts_t.back();
        for (int i = 0; i < sc.size(); ++i) sc[i] *= 3.0;
        parts_scaled.push_back(VarD::leaf(sc));
    }
    TensorD s1 = random_scores(r, 3, 3), s2 = random_scores(r, 3, 3);
    auto base = fuse_parts(parts, VarD::leaf(s1));
    auto scaled = fuse_parts(parts_scaled, VarD::leaf(s1));
    for (int i = 0; i < base.val().size(); ++i)
        CHECK(scaled.val()[i] == doctest::Approx(3.0 * base.val()[i]).epsilon(1e-9));
    TensorD ssum({25, 3, 3});
    for (int i = 0; i < ssum.size(); ++i) ssum[i] = s1[i] + s2[i];
    auto a = fuse_parts(parts, VarD::leaf(s1));
    auto b = fuse_parts(parts, VarD::leaf(s2));
    auto ab = fuse_parts(parts, VarD::leaf(ssum));
    for (int i = 0; i < ab.val().size(); ++i)
        CHECK(ab.val()[i] == doctest::Approx(a.val()[i] + b.val()[i]).epsilon(1e-9));
}

TEST_CASE("fuse_parts: background channel is excluded") {
    auto r = rng(91);
    std::vector<VarD> parts;
    for (int k = 0; k < 24; ++k)
        parts.push_back(VarD::leaf(random_uniform<double>(r, {2, 3, 3}, -1.0, 1.0)));
    TensorD score = random_scores(r, 3, 3);
    auto base = fuse_parts(parts, VarD::leaf(score));
    TensorD perturbed = score;
    for (int i = 0; i < 9; ++i) perturbed[i] += 0.37;  // channel 0 only
    auto same = fuse_parts(parts, VarD::leaf(perturbed));
    for (int i = 0; i < base.val().size(); ++i) CHECK(same.val()[i] == base.val()[i]);
}

TEST_CASE("render_geo: ranges, zero-input bias image, determinism") {
    RunConfig cfg = tiny_cfg();
    ModelT<float> model(cfg, 25);
    randomize_params(model.params(), 999, 0.3f);
    auto r = rng(92);
    Tensor zg = random_uniform<float>(r, {cfg.atlas_channels, 16, 16}, -1.0f, 1.0f);
    auto [img, mask] = model.texture_branch().render_geo(Var::leaf(zg));
    CHECK(img.shape() == std::vector<int>{3, 32, 32});
    CHECK(mask.shape() == std::vector<int>{1, 32, 32});
    CHECK(img.val().min() >= 0.0f);
    CHECK(img.val().max() <= 1.0f);
    auto [img2, mask2] = model.texture_branch().render_geo(Var::leaf(zg));
    for (int i = 0; i < img.val().size(); ++i) CHECK(img.val()[i] == img2.val()[i]);

    // zero input: sigmoid(bias) per channel, constant over space
    Tensor zeros({cfg.atlas_channels, 16, 16});
    auto [img0, mask0] = model.texture_branch().render_geo(Var::leaf(zeros));
    const Tensor& bias = model.params().at("geo_head.img.b").val();
    for (int c = 0; c < 3; ++c) {
        float want = 1.0f / (1.0f + std::exp(-bias[c]));
        for (int i = 0; i < 32 * 32; ++i)
            CHECK(img0.val()[c * 32 * 32 + i] == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("texture mapping chain is differentiable end to end") {
    RunConfig cfg = tiny_cfg();
    ModelT<double> model(cfg, 26);
    randomize_params(model.params(), 1111, 0.2);
    auto r = rng(93);
    VarD atlas = VarD::leaf(random_uniform<double>(r, {24, 3, 4, 4}, -1.0, 1.0), true);
    VarD u = VarD::leaf(random_uniform<double>(r, {24, 6, 6}, 0.15, 0.85), true);
    VarD v = VarD::leaf(random_uniform<double>(r, {24, 6, 6}, 0.15, 0.85), true);
    VarD slog = VarD::leaf(random_uniform<double>(r, {25, 6, 6}, -1.0, 1.0), true);
    auto f = [&]() {
        auto parts = sample_atlas(atlas, u, v);
        auto zg = fuse_parts(parts, ag::softmax_ch(slog));
        auto up = nn::bilinear_resize(zg, 12, 12);
        return ag::mean(ag::square(up));
    };
    auto res = grad_check(f, {atlas, u, v, slog}, 1e-5, 15);
    CHECK(res.max_rel_err < 1e-3);
}

TEST_CASE("blender: shapes, determinism, gradient w.r.t. the coarse image") {
    RunConfig cfg = tiny_cfg();
    ModelT<double> model(cfg, 27);
    randomize_params(model.params(), 2222, 0.2);
    auto r = rng(94);
    VarD zg = VarD::leaf(random_uniform<double>(r, {cfg.atlas_channels, 16, 16}, -1.0, 1.0));
    VarD za = VarD::leaf(random_uniform<double>(r, {cfg.warp_channels, 16, 16}, -1.0, 1.0));
    VarD coarse = VarD::leaf(random_uniform<double>(r, {3, 32, 32}, 0.0, 1.0), true);
    auto out = model.blender_net().forward(zg, za, coarse);
    CHECK(out.image.shape() == std::vector<int>{3, 32, 32});
    CHECK(out.mask.shape() == std::vector<int>{1, 32, 32});
    auto out2 = model.blender_net().forward(zg, za, coarse);
    for (int i = 0; i < out.image.val().size(); ++i)
        CHECK(out.image.val()[i] == out2.image.val()[i]);

    auto f = [&]() {
        auto o = model.blender_net().forward(zg, za, coarse);
        return ag::mean(ag::square(o.image));
    };
    CHECK(grad_check(f, {coarse}, 1e-5, 16).max_rel_err < 1e-3);
}

TEST_CASE("blender: with super-resolution disabled input and output sizes match") {
    RunConfig cfg = tiny_cfg();
    cfg.super_resolution = false;
    cfg.output_res = cfg.working_res;
    ModelT<float> model(cfg, 28);
    auto r = rng(95);
    Var zg = Var::leaf(random_uniform<float>(r, {cfg.atlas_channels, 16, 16}, -1.0f, 1.0f));
    Var za = Var::leaf(random_uniform<float>(r, {cfg.warp_channels, 16, 16}, -1.0f, 1.0f));
    Var coarse = Var::leaf(random_uniform<float>(r, {3, 16, 16}, 0.0f, 1.0f));
    auto out = model.blender_net().forward(zg, za, coarse);
    CHECK(out.image.shape() == std::vector<int>{3, 16, 16});
    CHECK(out.mask.shape() == std::vector<int>{1, 16, 16});
}

TEST_CASE("full model forward: shapes and ranges at the tiny config") {
    RunConfig cfg = tiny_cfg();
    ModelT<float> model(cfg, 29);
    randomize_params(model.params(), 3333, 0.2f);
    auto r = rng(96);
    Tensor img = random_uniform<float>(r, {3, 16, 16}, 0.0f, 1.0f);
    OneHotIUV ps = random_onehot<float>(r, 16);
    OneHotIUV pd = random_onehot<float>(r, 16);
    auto out = model.forward(Var::leaf(img), ps, pd);
    CHECK(out.blend.image.shape() == std::vector<int>{3, 32, 32});
    CHECK(out.blend.mask.shape() == std::vector<int>{1, 32, 32});
    CHECK(out.tex.atlas.shape() == std::vector<int>{24, 3, 4, 4});
    CHECK(out.blend.image.val().min() >= 0.0f);
    CHECK(out.blend.image.val().max() <= 1.0f);
}
