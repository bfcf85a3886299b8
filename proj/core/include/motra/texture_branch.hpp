#pragma once

#include "motra/config.hpp"
#include "motra/nn.hpp"
#include "motra/sampling.hpp"

namespace motra {

// Samples the per-part neural texture atlas at the translated UV
// coordinates: for part k the grid is built from (U^(k), V^(k)) rescaled
// from [0,1] to the atlas extent (texel-center alignment). Returns the 24
// gathered feature maps R^(k).
template <typename T>
std::vector<VarT<T>> sample_atlas(const VarT<T>& atlas, const VarT<T>& u_hat,
                                  const VarT<T>& v_hat) {
    const auto& as = atlas.shape();
    if (as.size() != 4 || as[0] != kNumParts)
        throw ShapeError("sample_atlas: atlas must be (24,c,ha,wa)");
    const auto& us = u_hat.shape();
    if (us.size() != 3 || us[0] != kNumParts) throw ShapeError("sample_atlas: UV must be (24,h,w)");
    if (!u_hat.val().same_shape(v_hat.val())) throw ShapeError("sample_atlas: u/v shape mismatch");
    int c = as[1], ha = as[2], wa = as[3];

    std::vector<VarT<T>> parts;
    parts.reserve(kNumParts);
    for (int k = 0; k < kNumParts; ++k) {
        VarT<T> part_tex = ag::reshape(ag::slice_dim0(atlas, k, k + 1), {c, ha, wa});
        VarT<T> uk = ag::slice_dim0(u_hat, k, k + 1);
        VarT<T> vk = ag::slice_dim0(v_hat, k, k + 1);
        // [0,1] -> [-1,1] normalized sampling coordinates
        VarT<T> gx = ag::add_scalar(ag::mul_scalar(uk, T(2)), T(-1));
        VarT<T> gy = ag::add_scalar(ag::mul_scalar(vk, T(2)), T(-1));
        VarT<T> grid = ag::concat_ch<T>({gx, gy});
        parts.push_back(bilinear_sample(part_tex, grid));
    }
    return parts;
}

// Soft part fusion: z_geo = sum_{k=1..24} S^(k) * R^(k). Score channel 0
// (background) is excluded and the remaining channels are used as-is, with
// no renormalization.
template <typename T>
VarT<T> fuse_parts(const std::vector<VarT<T>>& parts, const VarT<T>& score) {
    if (parts.size() != static_cast<std::size_t>(kNumParts))
        throw ShapeError("fuse_parts: expected 24 part feature maps");
    if (score.shape()[0] != kNumScoreChannels)
        throw ShapeError("fuse_parts: score must be (25,h,w)");
    VarT<T> acc;
    for (int k = 0; k < kNumParts; ++k) {
        VarT<T> sk = ag::slice_dim0(score, k + 1, k + 2);
        VarT<T> term = ag::mul_spatial(parts[static_cast<std::size_t>(k)], sk);
        acc = k == 0 ? term : ag::add(acc, term);
    }
    return acc;
}

template <typename T>
struct TexOutT {
    VarT<T> app_code;  // shared-trunk appearance code
    VarT<T> geo_code;  // shared-trunk geometry code
    VarT<T> atlas;     // (24, c, ha, wa)
    VarT<T> u_hat;     // (24, h, w) sigmoid
    VarT<T> v_hat;     // (24, h, w) sigmoid
    VarT<T> s_hat;     // (25, h, w) softmax
    VarT<T> z_geo;     // (c, h, w)
    VarT<T> image;     // (3, output_res, output_res)
    VarT<T> mask;      // (1, output_res, output_res)
};

// 2.5D geometry branch: a shared encoder over [I_s, onehot(P_s)] with two
// separate head convs, two conditioned translation networks (feature-wise
// affine modulation from alpha / rho), differentiable texture mapping, and
// single-conv render heads.
template <typename T>
class TextureBranchT {
  public:
    TextureBranchT() = default;

    TextureBranchT(ParamRegistryT<T>& reg, Rng& rng, const RunConfig& cfg) {
        working_res_ = cfg.working_res;
        output_res_ = cfg.output_res;
        atlas_res_ = cfg.atlas_res;
        atlas_ch_ = cfg.atlas_channels;
        int w = cfg.base_channels;
        code_ch_ = 4 * w;
        const int in_ch = 3 + 2 * kNumParts + kNumScoreChannels;  // 76

        stem_ = nn::Conv2dT<T>(reg, rng, "tex_enc.stem", in_ch, w, 1, 1, 0);
        down1_ = nn::Conv2dT<T>(reg, rng, "tex_enc.down1", w, 2 * w, 3, 2, 1);
        down2_ = nn::Conv2dT<T>(reg, rng, "tex_enc.down2", 2 * w, 4 * w, 3, 2, 1);
        app_head_ = nn::Conv2dT<T>(reg, rng, "tex_enc.app_head", 4 * w, code_ch_, 3, 1, 1);
        geo_head_ = nn::Conv2dT<T>(reg, rng, "tex_enc.geo_head", 4 * w, code_ch_, 3, 1, 1);

        for (int i = 0; i < 3; ++i)
            app_blocks_.emplace_back(reg, rng, "tex_app.res" + std::to_string(i), code_ch_,
                                     cfg.alpha_len);
        atlas_out_ = nn::Conv2dT<T>(reg, rng, "tex_app.out", code_ch_, kNumParts * atlas_ch_, 1, 1, 0);

        for (int i = 0; i < 3; ++i)
            geo_blocks_.emplace_back(reg, rng, "tex_geo.res" + std::to_string(i), code_ch_,
                                     cfg.rho_len);
        geo_up1_ = nn::Conv2dT<T>(reg, rng, "tex_geo.up1", code_ch_, 2 * w, 3, 1, 1);
        geo_up2_ = nn::Conv2dT<T>(reg, rng, "tex_geo.up2", 2 * w, w, 3, 1, 1);
        u_head_ = nn::Conv2dT<T>(reg, rng, "tex_geo.u", w, kNumParts, 3, 1, 1);
        v_head_ = nn::Conv2dT<T>(reg, rng, "tex_geo.v", w, kNumParts, 3, 1, 1);
        s_head_ = nn::Conv2dT<T>(reg, rng, "tex_geo.s", w, kNumScoreChannels, 3, 1, 1);

        render_img_ = nn::Conv2dT<T>(reg, rng, "geo_head.img", atlas_ch_, 3, 3, 1, 1);
        render_mask_ = nn::Conv2dT<T>(reg, rng, "geo_head.mask", atlas_ch_, 1, 3, 1, 1);
    }

    // Shared trunk with two separate final conv layers.
    std::pair<VarT<T>, VarT<T>> encode_shared(const VarT<T>& src_img,
                                              const OneHotIUV& p_src) const {
        const auto& s = src_img.shape();
        if (p_src.height() != s[1] || p_src.width() != s[2])
            throw ShapeError("texture encoder: image/IUV size mismatch");
        VarT<T> x = ag::concat_ch<T>({src_img, onehot_channels<T>(p_src)});
        VarT<T> h = ag::leaky_relu(stem_(x));
        h = ag::leaky_relu(down1_(h));
        h = ag::leaky_relu(down2_(h));
        return {ag::leaky_relu(app_head_(h)), ag::leaky_relu(geo_head_(h))};
    }

    // Conditioned texture atlas translation -> (24, c, ha, wa).
    VarT<T> translate_atlas(const VarT<T>& app_code, const VarT<T>& alpha) const {
        VarT<T> h = app_code;
        for (const auto& blk : app_blocks_) h = blk(h, alpha);
        if (h.shape()[1] != atlas_res_ || h.shape()[2] != atlas_res_)
            h = nn::bilinear_resize(h, atlas_res_, atlas_res_);
        VarT<T> flat = atlas_out_(h);  // (24*c, ha, wa)
        return ag::reshape(flat, {kNumParts, atlas_ch_, atlas_res_, atlas_res_});
    }

    // Conditioned IUV translation -> sigmoid U/V and softmax score at the
    // working resolution.
    std::tuple<VarT<T>, VarT<T>, VarT<T>> translate_iuv(const VarT<T>& geo_code,
                                                        const VarT<T>& rho) const {
        VarT<T> h = geo_code;
        for (const auto& blk : geo_blocks_) h = blk(h, rho);
        h = nn::bilinear_resize(h, h.shape()[1] * 2, h.shape()[2] * 2);
        h = ag::leaky_relu(geo_up1_(h));
        h = nn::bilinear_resize(h, working_res_, working_res_);
        h = ag::leaky_relu(geo_up2_(h));
        VarT<T> u = ag::sigmoid(u_head_(h));
        VarT<T> v = ag::sigmoid(v_head_(h));
        VarT<T> sc = softmax_parts(s_head_(h));
        return {u, v, sc};
    }

    // Coarse render: upsample the fused feature to the output resolution and
    // decode with one conv per head.
    std::pair<VarT<T>, VarT<T>> render_geo(const VarT<T>& z_geo) const {
        VarT<T> h = nn::bilinear_resize(z_geo, output_res_, output_res_);
        return {ag::sigmoid(render_img_(h)), ag::sigmoid(render_mask_(h))};
    }

    TexOutT<T> forward(const VarT<T>& src_img, const OneHotIUV& p_src, const VarT<T>& alpha,
                       const VarT<T>& rho) const {
        TexOutT<T> out;
        auto [app_code, geo_code] = encode_shared(src_img, p_src);
        out.app_code = app_code;
        out.geo_code = geo_code;
        out.atlas = translate_atlas(app_code, alpha);
        auto [u, v, sc] = translate_iuv(geo_code, rho);
        out.u_hat = u;
        out.v_hat = v;
        out.s_hat = sc;
        std::vector<VarT<T>> parts = sample_atlas(out.atlas, u, v);
        out.z_geo = fuse_parts(parts, sc);
        auto [img, mask] = render_geo(out.z_geo);
        out.image = img;
        out.mask = mask;
        return out;
    }

    int atlas_channels() const { return atlas_ch_; }
    int atlas_res() const { return atlas_res_; }

  private:
    int working_res_ = 0, output_res_ = 0, atlas_res_ = 0, atlas_ch_ = 0, code_ch_ = 0;

    nn::Conv2dT<T> stem_, down1_, down2_, app_head_, geo_head_;
    std::vector<nn::ModResBlockT<T>> app_blocks_, geo_blocks_;
    nn::Conv2dT<T> atlas_out_;
    nn::Conv2dT<T> geo_up1_, geo_up2_, u_head_, v_head_, s_head_;
    nn::Conv2dT<T> render_img_, render_mask_;
};

}  // namespace motra
