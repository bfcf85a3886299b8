#pragma once

#include "motra/config.hpp"
#include "motra/motion_net.hpp"

namespace motra {

// Occlusion-gated warp fusion: Warp(z, f) * o + z_prev * (1 - o), with
// Warp(z, f) = bilinear_sample(z, identity + f). All inputs share one
// resolution; the output is a per-pixel convex combination of the warped
// feature and the carried feature.
template <typename T>
VarT<T> warp_fuse(const VarT<T>& z, const VarT<T>& flow, const VarT<T>& occ,
                  const VarT<T>& z_prev) {
    const auto& zs = z.shape();
    const auto& fs = flow.shape();
    const auto& os = occ.shape();
    if (fs.size() != 3 || fs[0] != 2 || fs[1] != zs[1] || fs[2] != zs[2])
        throw ShapeError("warp_fuse: flow resolution mismatch");
    if (os.size() != 3 || os[0] != 1 || os[1] != zs[1] || os[2] != zs[2])
        throw ShapeError("warp_fuse: occlusion resolution mismatch");
    if (!z_prev.val().same_shape(z.val())) throw ShapeError("warp_fuse: z_prev shape mismatch");
    VarT<T> grid = ag::add(ag::constant(identity_grid<T>(zs[1], zs[2])), flow);
    VarT<T> warped = bilinear_sample(z, grid);
    VarT<T> inv_occ = ag::sub(ag::constant(TensorT<T>(os, T(1))), occ);
    return ag::add(ag::mul_spatial(warped, occ), ag::mul_spatial(z_prev, inv_occ));
}

template <typename T>
VarT<T> warp_only(const VarT<T>& z, const VarT<T>& flow) {
    VarT<T> grid = ag::add(ag::constant(identity_grid<T>(z.shape()[1], z.shape()[2])), flow);
    return bilinear_sample(z, grid);
}

template <typename T>
struct WarpOutT {
    std::vector<VarT<T>> source_pyramid;  // coarsest first
    VarT<T> z_app;                        // finest fused feature
    VarT<T> image;                        // (3, output_res, output_res)
    VarT<T> mask;                         // (1, output_res, output_res)
};

// 2D appearance branch. The source encoder emits one feature map per flow
// scale (uniform channel width so gated fusion can blend across levels);
// warped features are fused coarsest-to-finest and decoded by a head of two
// residual blocks, upsampling stages to the output resolution and two
// sigmoid prediction heads.
//
// Recursion base case: the coarsest fused feature is the plain warp of the
// coarsest source feature (the coarsest occlusion map is unused by this
// branch).
template <typename T>
class WarpBranchT {
  public:
    WarpBranchT() = default;

    WarpBranchT(ParamRegistryT<T>& reg, Rng& rng, const RunConfig& cfg) {
        scales_ = cfg.flow_scales;
        working_res_ = cfg.working_res;
        output_res_ = cfg.output_res;
        channels_ = cfg.warp_channels;
        int c = channels_;

        stem_ = nn::Conv2dT<T>(reg, rng, "warp_enc.stem", 3, c, 3, 1, 1);
        int n_down = 0;
        for (int r = working_res_; r > scales_.front(); r /= 2) ++n_down;
        for (int i = 0; i < n_down; ++i)
            downs_.emplace_back(reg, rng, "warp_enc.down" + std::to_string(i), c, c, 3, 2, 1);
        for (std::size_t i = 0; i < scales_.size(); ++i)
            level_convs_.emplace_back(reg, rng, "warp_enc.level" + std::to_string(i), c, c, 3, 1, 1);

        res1_ = nn::ResBlockT<T>(reg, rng, "warp_gen.res1", c);
        res2_ = nn::ResBlockT<T>(reg, rng, "warp_gen.res2", c);
        int n_up = 0;
        for (int r = working_res_; r < output_res_; r *= 2) ++n_up;
        for (int i = 0; i < n_up; ++i)
            ups_.emplace_back(reg, rng, "warp_gen.up" + std::to_string(i), c, c, 3, 1, 1);
        img_head_ = nn::Conv2dT<T>(reg, rng, "warp_gen.img", c, 3, 3, 1, 1);
        mask_head_ = nn::Conv2dT<T>(reg, rng, "warp_gen.mask", c, 1, 3, 1, 1);
    }

    // Multi-scale source features, coarsest first, resolutions matching the
    // flow pyramid level-by-level.
    std::vector<VarT<T>> encode_source(const VarT<T>& src_img) const {
        if (src_img.shape()[1] != working_res_ || src_img.shape()[2] != working_res_)
            throw ShapeError("warp encoder: source resolution != working_res");
        // trunk from fine to coarse, then per-level refinement convs
        std::vector<VarT<T>> trunk;  // finest first
        VarT<T> h = ag::leaky_relu(stem_(src_img));
        trunk.push_back(h);
        for (const auto& d : downs_) {
            h = ag::leaky_relu(d(h));
            trunk.push_back(h);
        }
        std::vector<VarT<T>> out;
        for (std::size_t i = 0; i < scales_.size(); ++i) {
            int scale = scales_[i];
            int step = 0;
            for (int r = working_res_; r > scale; r /= 2) ++step;
            out.push_back(ag::leaky_relu(level_convs_[i](trunk[static_cast<std::size_t>(step)])));
        }
        return out;  // indexed like scales_, coarsest first
    }

    WarpOutT<T> forward(const VarT<T>& src_img, const std::vector<VarT<T>>& flows,
                        const std::vector<VarT<T>>& occs) const {
        if (flows.size() != scales_.size() || occs.size() != scales_.size())
            throw ShapeError("warp branch: pyramid level count mismatch");
        WarpOutT<T> out;
        out.source_pyramid = encode_source(src_img);
        VarT<T> fused = warp_only(out.source_pyramid[0], flows[0]);
        for (std::size_t i = 1; i < scales_.size(); ++i) {
            VarT<T> carried = nn::bilinear_resize(fused, scales_[i], scales_[i]);
            fused = warp_fuse(out.source_pyramid[i], flows[i], occs[i], carried);
        }
        out.z_app = fused;

        VarT<T> h = res2_(res1_(fused));
        for (const auto& up : ups_) {
            h = nn::bilinear_resize(h, h.shape()[1] * 2, h.shape()[2] * 2);
            h = ag::leaky_relu(up(h));
        }
        out.image = ag::sigmoid(img_head_(h));
        out.mask = ag::sigmoid(mask_head_(h));
        return out;
    }

    int channels() const { return channels_; }

  private:
    std::vector<int> scales_;
    int working_res_ = 0, output_res_ = 0, channels_ = 0;

    nn::Conv2dT<T> stem_;
    std::vector<nn::Conv2dT<T>> downs_, level_convs_, ups_;
    nn::ResBlockT<T> res1_, res2_;
    nn::Conv2dT<T> img_head_, mask_head_;
};

}  // namespace motra
