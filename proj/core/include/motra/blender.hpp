#pragma once

#include "motra/config.hpp"
#include "motra/nn.hpp"

namespace motra {

template <typename T>
struct BlendOutT {
    VarT<T> image;  // (3, output_res, output_res)
    VarT<T> mask;   // (1, output_res, output_res)
};

// Final fusion of the two branch features and the coarse warped image.
// Inputs are aligned to the working resolution (the coarse image is
// average-pooled down when it arrives at the output resolution), the trunk
// runs two residual blocks, and an optional learned 2x super-resolution
// stage lifts the result to the output resolution. Channel concatenation
// order is fixed: [z_geo, z_app, coarse_app].
template <typename T>
class BlenderNetT {
  public:
    BlenderNetT() = default;

    BlenderNetT(ParamRegistryT<T>& reg, Rng& rng, const RunConfig& cfg) {
        working_res_ = cfg.working_res;
        output_res_ = cfg.output_res;
        super_resolution_ = cfg.super_resolution;
        int c = cfg.blender_channels;
        int in_ch = cfg.atlas_channels + cfg.warp_channels + 3;
        fuse_ = nn::Conv2dT<T>(reg, rng, "blender.fuse", in_ch, c, 3, 1, 1);
        res1_ = nn::ResBlockT<T>(reg, rng, "blender.res1", c);
        res2_ = nn::ResBlockT<T>(reg, rng, "blender.res2", c);
        if (super_resolution_)
            sr_ = nn::Conv2dT<T>(reg, rng, "blender.sr", c, c, 3, 1, 1);
        img_head_ = nn::Conv2dT<T>(reg, rng, "blender.img", c, 3, 3, 1, 1);
        mask_head_ = nn::Conv2dT<T>(reg, rng, "blender.mask", c, 1, 3, 1, 1);
    }

    BlendOutT<T> forward(const VarT<T>& z_geo, const VarT<T>& z_app,
                         const VarT<T>& coarse_app) const {
        if (z_geo.shape()[1] != working_res_ || z_app.shape()[1] != working_res_)
            throw ShapeError("blender: branch features must be at working resolution");
        VarT<T> coarse = coarse_app;
        while (coarse.shape()[1] > working_res_) coarse = nn::avg_pool2(coarse);
        if (coarse.shape()[1] != working_res_)
            throw ShapeError("blender: coarse image resolution not alignable to working_res");
        VarT<T> h = ag::leaky_relu(fuse_(ag::concat_ch<T>({z_geo, z_app, coarse})));
        h = res2_(res1_(h));
        if (super_resolution_) {
            h = nn::bilinear_resize(h, output_res_, output_res_);
            h = ag::leaky_relu(sr_(h));
        }
        BlendOutT<T> out;
        out.image = ag::sigmoid(img_head_(h));
        out.mask = ag::sigmoid(mask_head_(h));
        return out;
    }

  private:
    int working_res_ = 0, output_res_ = 0;
    bool super_resolution_ = true;

    nn::Conv2dT<T> fuse_;
    nn::ResBlockT<T> res1_, res2_;
    nn::Conv2dT<T> sr_, img_head_, mask_head_;
};

}  // namespace motra
