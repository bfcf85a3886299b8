#pragma once

#include "motra/config.hpp"
#include "motra/nn.hpp"
#include "motra/sampling.hpp"

namespace motra {

// Input channel count of the motion network: the source image concatenated
// with the one-hot encodings of the source and driving IUV maps,
// 3 + 2*(24+24+25) = 149.
inline constexpr int kMotionInputChannels = 3 + 2 * (2 * kNumParts + kNumScoreChannels);

template <typename T>
struct MotionOutT {
    VarT<T> alpha;                // (alpha_len)
    VarT<T> rho;                  // (rho_len)
    std::vector<VarT<T>> flows;   // coarsest first, (2,s,s) per scale
    std::vector<VarT<T>> occs;    // (1,s,s) per scale, sigmoid range
};

// Assembles the motion input in the fixed order [I_s, onehot(P_s), onehot(P_d)].
template <typename T>
VarT<T> motion_input(const VarT<T>& src_img, const OneHotIUV& p_src, const OneHotIUV& p_drv) {
    const auto& s = src_img.shape();
    if (p_src.height() != s[1] || p_src.width() != s[2] || p_drv.height() != s[1] ||
        p_drv.width() != s[2])
        throw ShapeError("motion_input: spatial size mismatch between image and IUV maps");
    return ag::concat_ch<T>({src_img, onehot_channels<T>(p_src), onehot_channels<T>(p_drv)});
}

// Flow/occlusion estimator. Encoder: a full-resolution stem plus four
// stride-2 blocks, global average pooling and two linear heads for the
// translation signals. Decoder: one refinement stage per configured flow
// scale; each stage consumes the matching encoder skip, the upsampled
// previous stage features and the upsampled previous flow, and emits a
// residual flow (zero-initialized heads, so the untrained network predicts
// the identity warp) and a sigmoid occlusion map.
template <typename T>
class MotionNetT {
  public:
    MotionNetT() = default;

    MotionNetT(ParamRegistryT<T>& reg, Rng& rng, const RunConfig& cfg) {
        scales_ = cfg.flow_scales;
        working_res_ = cfg.working_res;
        int w = cfg.base_channels;
        enc_ch_ = {w, 2 * w, 3 * w, 4 * w, 4 * w};

        stem1_ = nn::Conv2dT<T>(reg, rng, "motion_enc.stem1", kMotionInputChannels, w, 1, 1, 0);
        stem2_ = nn::Conv2dT<T>(reg, rng, "motion_enc.stem2", w, w, 3, 1, 1);
        down1_ = nn::Conv2dT<T>(reg, rng, "motion_enc.down1", w, 2 * w, 3, 2, 1);
        down2_ = nn::Conv2dT<T>(reg, rng, "motion_enc.down2", 2 * w, 3 * w, 3, 2, 1);
        down3_ = nn::Conv2dT<T>(reg, rng, "motion_enc.down3", 3 * w, 4 * w, 3, 2, 1);
        down4_ = nn::Conv2dT<T>(reg, rng, "motion_enc.down4", 4 * w, 4 * w, 3, 2, 1);
        alpha_head_ = nn::LinearT<T>(reg, rng, "motion_enc.alpha", 4 * w, cfg.alpha_len);
        rho_head_ = nn::LinearT<T>(reg, rng, "motion_enc.rho", 4 * w, cfg.rho_len);

        // decoder stages, coarsest first
        int n_levels = static_cast<int>(scales_.size());
        for (int i = 0; i < n_levels; ++i) {
            int scale = scales_[static_cast<std::size_t>(i)];
            int skip_ch = skip_channels(scale);
            int stage_ch = skip_ch;
            int in_ch = skip_ch;
            if (i == 0) {
                in_ch += enc_channel_below(scale);  // upsampled deeper encoder feature
            } else {
                in_ch += stage_ch_[static_cast<std::size_t>(i - 1)] + 2;  // prev stage + prev flow
            }
            std::string p = "motion_dec.l" + std::to_string(i);
            dec_a_.emplace_back(reg, rng, p + ".a", in_ch, stage_ch, 3, 1, 1);
            dec_b_.emplace_back(reg, rng, p + ".b", stage_ch, stage_ch, 3, 1, 1);
            flow_heads_.emplace_back(reg, rng, p + ".flow", stage_ch, 2, 3, 1, 1, nn::Init::Zero);
            occ_heads_.emplace_back(reg, rng, p + ".occ", stage_ch, 1, 3, 1, 1, nn::Init::Zero);
            stage_ch_.push_back(stage_ch);
        }
    }

    MotionOutT<T> forward(const VarT<T>& src_img, const OneHotIUV& p_src,
                          const OneHotIUV& p_drv) const {
        return forward(motion_input(src_img, p_src, p_drv));
    }

    MotionOutT<T> forward(const VarT<T>& x149) const {
        if (x149.shape()[0] != kMotionInputChannels)
            throw ShapeError("motion net: expected " + std::to_string(kMotionInputChannels) +
                             " input channels, got " + std::to_string(x149.shape()[0]));
        if (x149.shape()[1] != working_res_)
            throw ShapeError("motion net: input resolution != configured working_res");
        MotionOutT<T> out;
        auto [alpha, rho, feats] = encode(x149);
        out.alpha = alpha;
        out.rho = rho;

        VarT<T> prev_stage, prev_flow;
        for (std::size_t i = 0; i < scales_.size(); ++i) {
            int scale = scales_[i];
            VarT<T> skip = feats.at(scale);
            std::vector<VarT<T>> ins{skip};
            if (i == 0) {
                ins.push_back(nn::bilinear_resize(feats.at(scale / 2), scale, scale));
            } else {
                ins.push_back(nn::bilinear_resize(prev_stage, scale, scale));
                ins.push_back(nn::bilinear_resize(prev_flow, scale, scale));
            }
            VarT<T> h = ag::leaky_relu(dec_a_[i](ag::concat_ch(ins)));
            h = ag::leaky_relu(dec_b_[i](h));
            VarT<T> delta = flow_heads_[i](h);
            VarT<T> flow = i == 0 ? delta
                                  : ag::add(nn::bilinear_resize(prev_flow, scale, scale), delta);
            VarT<T> occ = ag::sigmoid(occ_heads_[i](h));
            out.flows.push_back(flow);
            out.occs.push_back(occ);
            prev_stage = h;
            prev_flow = flow;
        }
        return out;
    }

    // Encoder-only path for stages that need just the translation signals.
    std::pair<VarT<T>, VarT<T>> encode_signals(const VarT<T>& x149) const {
        auto [alpha, rho, feats] = encode(x149);
        (void)feats;
        return {alpha, rho};
    }

    const std::vector<int>& scales() const { return scales_; }

  private:
    // encoder features keyed by resolution
    std::tuple<VarT<T>, VarT<T>, std::map<int, VarT<T>>> encode(const VarT<T>& x) const {
        std::map<int, VarT<T>> feats;
        int res = working_res_;
        VarT<T> h = ag::leaky_relu(stem2_(ag::leaky_relu(stem1_(x))));
        feats[res] = h;
        h = ag::leaky_relu(down1_(h));
        feats[res / 2] = h;
        h = ag::leaky_relu(down2_(h));
        feats[res / 4] = h;
        h = ag::leaky_relu(down3_(h));
        feats[res / 8] = h;
        h = ag::leaky_relu(down4_(h));
        feats[res / 16] = h;
        VarT<T> pooled = nn::global_avg_pool(h);
        return {alpha_head_(pooled), rho_head_(pooled), std::move(feats)};
    }

    int skip_channels(int scale) const {
        int step = 0;
        int r = working_res_;
        while (r > scale) {
            r /= 2;
            ++step;
        }
        return enc_ch_[static_cast<std::size_t>(std::min(step, 4))];
    }
    int enc_channel_below(int scale) const { return skip_channels(scale / 2); }

    std::vector<int> scales_;
    std::vector<int> enc_ch_;
    std::vector<int> stage_ch_;
    int working_res_ = 0;

    nn::Conv2dT<T> stem1_, stem2_, down1_, down2_, down3_, down4_;
    nn::LinearT<T> alpha_head_, rho_head_;
    std::vector<nn::Conv2dT<T>> dec_a_, dec_b_, flow_heads_, occ_heads_;
};

// Bilinear flow upsampling. Flows live in normalized coordinates, so no
// magnitude rescale is needed; requesting a smaller resolution is an error.
template <typename T>
VarT<T> upsample_flow(const VarT<T>& flow, int target_h, int target_w) {
    const auto& s = flow.shape();
    if (s.size() != 3 || s[0] != 2) throw ShapeError("upsample_flow expects (2,h,w)");
    if (target_h < s[1] || target_w < s[2])
        throw ShapeError("upsample_flow: target resolution below source resolution");
    return nn::bilinear_resize(flow, target_h, target_w);
}

inline FlowField upsample_flow(const FlowField& f, int target_h, int target_w) {
    return FlowField(upsample_flow(Var::leaf(f.flow), target_h, target_w).val());
}

}  // namespace motra
