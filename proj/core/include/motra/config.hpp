#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motra/common.hpp"

namespace motra {

// Flat run configuration. Every key is documented in README.md; unknown keys
// are rejected. Defaults follow the reference settings: 128->256 resolution,
// flow scales {32,64,128}, latent lengths 384/256, Adam lr 2e-4, batch 8 and
// the loss weights 5.0/0.01/1.0/5.0 (motion), 5.0/1.0 (IUV), 10.0/1.0
// (reconstruction).
struct RunConfig {
    int working_res = 128;
    int output_res = 256;
    std::vector<int> flow_scales = {32, 64, 128};
    int alpha_len = 384;
    int rho_len = 256;
    int atlas_res = 32;
    int atlas_channels = 16;
    int base_channels = 32;
    int warp_channels = 32;
    int blender_channels = 48;
    bool super_resolution = true;

    int batch_size = 8;
    float lr = 2e-4f;
    float adam_beta1 = 0.9f;
    float adam_beta2 = 0.999f;
    float adam_eps = 1e-8f;
    std::uint64_t seed = 0;
    double iter_scale = 1.0;  // scales the 100k/100k/200k/200k schedule
    int stages = 4;           // 4 = multi-stage, 1 = end-to-end single stage

    float lambda_cor = 5.0f;
    float lambda_reg = 0.01f;
    float lambda_tv = 1.0f;
    float lambda_con = 5.0f;
    float lambda_uv = 5.0f;
    float lambda_ce = 1.0f;
    float lambda_p = 10.0f;
    float lambda_1 = 1.0f;
    bool uv_mask_detach = false;
    bool enable_correctness = true;
    bool enable_affine_reg = true;
    bool enable_adv = true;
    int rec_scales = 3;

    std::uint64_t fx_seed = 1234;     // perceptual feature stack seed
    std::uint64_t embed_seed = 99;    // metric embedding seed
    int embed_dim = 64;

    int eval_pairs = 50;  // cross-video pairs

    // Applies one "key = value" assignment; throws ConfigError on unknown
    // keys or unparsable values.
    void set(const std::string& key, const std::string& value);

    // Parses a config file of "key = value" lines ('#' comments allowed)
    // on top of the current values.
    void load_file(const std::string& path);

    void validate() const;

    std::string describe() const;

    static const std::vector<std::string>& known_keys();
};

}  // namespace motra
