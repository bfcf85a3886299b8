#pragma once

#include <cstdint>
#include <vector>

#include "motra/tensor.hpp"

namespace motra {

// DensePose-style conventions used throughout: 24 body parts, part index 0
// is background, continuous UV in [0,1] per part.
inline constexpr int kNumParts = 24;
inline constexpr int kNumScoreChannels = kNumParts + 1;

// RGB image, (3,H,W), values in [0,1].
struct Image {
    Tensor data;

    Image() = default;
    explicit Image(Tensor t) : data(std::move(t)) { validate(); }
    Image(int h, int w) : data(Tensor({3, h, w})) {}

    int height() const { return data.dim(1); }
    int width() const { return data.dim(2); }

    void validate() const {
        if (data.ndim() != 3 || data.dim(0) != 3 || data.dim(1) <= 0 || data.dim(2) <= 0)
            throw ShapeError("Image must be (3,H,W) with positive dims");
        if (!data.all_finite()) throw NumericError("Image contains non-finite values");
        if (data.min() < 0.0f || data.max() > 1.0f)
            throw DataError("Image values outside [0,1]");
    }
};

// Per-pixel body-part index + continuous surface coordinates.
struct IUVMap {
    std::vector<std::uint8_t> part;  // H*W, values 0..24 (0 = background)
    Tensor u;                        // (H,W) in [0,1]
    Tensor v;                        // (H,W) in [0,1]

    IUVMap() = default;
    IUVMap(int h, int w)
        : part(static_cast<std::size_t>(h) * w, 0), u(Tensor({h, w})), v(Tensor({h, w})) {}

    int height() const { return u.dim(0); }
    int width() const { return u.dim(1); }
    std::uint8_t part_at(int y, int x) const {
        return part[static_cast<std::size_t>(y) * width() + x];
    }
    std::uint8_t& part_at(int y, int x) {
        return part[static_cast<std::size_t>(y) * width() + x];
    }

    void validate() const {
        int h = height(), w = width();
        if (h <= 0 || w <= 0) throw ShapeError("IUVMap dims must be positive");
        if (part.size() != static_cast<std::size_t>(h) * w || !u.same_shape(v))
            throw ShapeError("IUVMap field shapes disagree");
        for (std::size_t i = 0; i < part.size(); ++i) {
            if (part[i] > kNumParts) throw DataError("IUVMap part index out of range 0..24");
            float uu = u[static_cast<int>(i)], vv = v[static_cast<int>(i)];
            if (!(uu >= 0.0f && uu <= 1.0f && vv >= 0.0f && vv <= 1.0f))
                throw DataError("IUVMap u/v outside [0,1]");
            if (part[i] == 0 && (uu != 0.0f || vv != 0.0f))
                throw DataError("IUVMap background pixels must carry u=v=0");
        }
    }
};

// One-hot expansion of an IUVMap: per-part U/V planes plus a 25-channel
// score map (channel 0 = background).
struct OneHotIUV {
    Tensor u_parts;  // (24,H,W)
    Tensor v_parts;  // (24,H,W)
    Tensor score;    // (25,H,W)

    int height() const { return score.dim(1); }
    int width() const { return score.dim(2); }
};

// Dense displacement field in normalized [-1,1] image coordinates,
// channel 0 = x displacement, channel 1 = y displacement.
struct FlowField {
    Tensor flow;  // (2,h,w)

    FlowField() = default;
    explicit FlowField(Tensor t) : flow(std::move(t)) {
        if (flow.ndim() != 3 || flow.dim(0) != 2) throw ShapeError("FlowField must be (2,h,w)");
    }
    int height() const { return flow.dim(1); }
    int width() const { return flow.dim(2); }
};

struct OcclusionMap {
    Tensor values;  // (1,h,w) in [0,1]
};

struct FeatureMap {
    Tensor data;  // (c,h,w)
};

struct Mask {
    Tensor values;  // (1,H,W) in [0,1]
};

struct Keypoint {
    float x = 0.0f;
    float y = 0.0f;
    bool present = false;
};

using KeypointSet = std::vector<Keypoint>;

// One training/eval example. Spatial dims of all fields agree; keypoints are
// in pixel coordinates of the stored frames.
struct SampleRecord {
    Image source_image;
    IUVMap source_iuv;
    IUVMap driving_iuv;
    Image target_image;
    Mask fg_mask;
    KeypointSet keypoints;
};

}  // namespace motra
