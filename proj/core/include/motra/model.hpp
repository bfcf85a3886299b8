#pragma once

#include "motra/blender.hpp"
#include "motra/texture_branch.hpp"
#include "motra/warp_branch.hpp"

namespace motra {

// Patch discriminator with residual blocks; raw (unbounded) scores for the
// least-squares GAN objective.
template <typename T>
class DiscriminatorT {
  public:
    DiscriminatorT() = default;

    DiscriminatorT(ParamRegistryT<T>& reg, Rng& rng, const RunConfig& cfg) {
        int w = cfg.base_channels;
        d1_ = nn::Conv2dT<T>(reg, rng, "disc.d1", 3, w, 3, 2, 1);
        r1_ = nn::ResBlockT<T>(reg, rng, "disc.r1", w);
        d2_ = nn::Conv2dT<T>(reg, rng, "disc.d2", w, 2 * w, 3, 2, 1);
        r2_ = nn::ResBlockT<T>(reg, rng, "disc.r2", 2 * w);
        d3_ = nn::Conv2dT<T>(reg, rng, "disc.d3", 2 * w, 2 * w, 3, 2, 1);
        head_ = nn::Conv2dT<T>(reg, rng, "disc.head", 2 * w, 1, 3, 1, 1);
    }

    VarT<T> forward(const VarT<T>& img) const {
        VarT<T> h = ag::leaky_relu(d1_(img));
        h = r1_(h);
        h = ag::leaky_relu(d2_(h));
        h = r2_(h);
        h = ag::leaky_relu(d3_(h));
        return head_(h);
    }

  private:
    nn::Conv2dT<T> d1_, d2_, d3_, head_;
    nn::ResBlockT<T> r1_, r2_;
};

template <typename T>
struct FullForwardT {
    MotionOutT<T> motion;
    WarpOutT<T> warp;
    TexOutT<T> tex;
    BlendOutT<T> blend;
};

// The complete generator stack plus discriminator, built over one named
// parameter registry. Parameter name prefixes define the freezable module
// groups used by the stage schedule.
template <typename T>
class ModelT {
  public:
    ModelT(const RunConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng = make_rng(seed, 0x0DE1ULL);
        motion_ = MotionNetT<T>(reg_, rng, cfg_);
        warp_ = WarpBranchT<T>(reg_, rng, cfg_);
        tex_ = TextureBranchT<T>(reg_, rng, cfg_);
        blender_ = BlenderNetT<T>(reg_, rng, cfg_);
        disc_ = DiscriminatorT<T>(reg_, rng, cfg_);
    }

    const RunConfig& config() const { return cfg_; }
    ParamRegistryT<T>& params() { return reg_; }
    const ParamRegistryT<T>& params() const { return reg_; }

    const MotionNetT<T>& motion_net() const { return motion_; }
    const WarpBranchT<T>& warp_branch() const { return warp_; }
    const TextureBranchT<T>& texture_branch() const { return tex_; }
    const BlenderNetT<T>& blender_net() const { return blender_; }
    const DiscriminatorT<T>& discriminator() const { return disc_; }

    // Module groups addressable by the stage schedule. "generator" groups
    // exclude "disc".
    static const std::vector<std::string>& group_names() {
        static const std::vector<std::string> g = {"motion_enc", "motion_dec", "warp_enc",
                                                   "warp_gen",   "tex_enc",    "tex_app",
                                                   "tex_geo",    "geo_head",   "blender",
                                                   "disc"};
        return g;
    }

    std::vector<std::string> group_params(const std::string& group) const {
        return reg_.names_with_prefix(group + ".");
    }

    FullForwardT<T> forward(const VarT<T>& src_img, const OneHotIUV& p_src,
                            const OneHotIUV& p_drv) const {
        FullForwardT<T> out;
        out.motion = motion_.forward(src_img, p_src, p_drv);
        out.warp = warp_.forward(src_img, out.motion.flows, out.motion.occs);
        out.tex = tex_.forward(src_img, p_src, out.motion.alpha, out.motion.rho);
        out.blend = blender_.forward(out.tex.z_geo, out.warp.z_app, out.warp.image);
        return out;
    }

  private:
    RunConfig cfg_;
    ParamRegistryT<T> reg_;
    MotionNetT<T> motion_;
    WarpBranchT<T> warp_;
    TextureBranchT<T> tex_;
    BlenderNetT<T> blender_;
    DiscriminatorT<T> disc_;
};

using Model = ModelT<float>;

// Plain-tensor helpers for preparing network inputs from stored frames.
inline Tensor image_to_working_res(const Tensor& img, int working_res) {
    Tensor t = img;
    while (t.dim(1) > working_res) t = nn::avg_pool2(Var::leaf(t)).val();
    if (t.dim(1) != working_res)
        t = nn::bilinear_resize(Var::leaf(t), working_res, working_res).val();
    return t;
}

// Nearest-neighbor IUV downsampling keeps part indices and UVs exact.
inline IUVMap iuv_to_working_res(const IUVMap& m, int working_res) {
    int h = m.height(), w = m.width();
    if (h == working_res && w == working_res) return m;
    IUVMap out(working_res, working_res);
    for (int y = 0; y < working_res; ++y)
        for (int x = 0; x < working_res; ++x) {
            int sy = std::min(h - 1, y * h / working_res + h / (2 * working_res));
            int sx = std::min(w - 1, x * w / working_res + w / (2 * working_res));
            out.part_at(y, x) = m.part_at(sy, sx);
            out.u[y * working_res + x] = m.u[sy * w + sx];
            out.v[y * working_res + x] = m.v[sy * w + sx];
        }
    return out;
}

}  // namespace motra
