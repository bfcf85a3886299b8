#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motra/types.hpp"

namespace motra {

// A 2D articulated stick puppet rendered with analytically exact IUV maps.
// Each part is an oriented rectangle (a "bone" with width); the part-local
// coordinates (v along the bone, u across it) are written directly into the
// IUV map, so the generated annotation is exact by construction.
struct PuppetPart {
    int dp_index = 1;       // target body-part index 1..24, injective across parts
    int parent = -1;        // slot index of the parent part (-1 = root); must precede
    float attach_t = 0.0f;  // attachment position along the parent bone in [0,1]
    float length = 32.0f;   // px
    float width = 12.0f;    // px
    float angle0 = 0.0f;    // rest angle relative to parent direction (radians)
    float angle_range = 0.0f;  // oscillation amplitude around angle0 (radians)
    float color[3] = {0.8f, 0.8f, 0.8f};
    int z = 0;  // draw order, higher draws on top
};

struct PuppetSpec {
    int canvas = 128;
    float root_x = 0.5f;   // root pivot, normalized canvas coordinates
    float root_y = 0.60f;
    float sway_amp = 0.02f;  // root translation amplitude, normalized
    float background[3] = {0.82f, 0.84f, 0.86f};
    std::vector<PuppetPart> parts;

    // 6-part humanoid mapped to part indices {1,2,3,4,9,10}: torso, head,
    // two arms, two legs. Small enough to train in minutes while still
    // exercising multi-part fusion and self-occlusion.
    static PuppetSpec default_spec(int canvas = 128);

    static PuppetSpec from_file(const std::string& path);

    void validate() const;
};

// World-space placement of one bone at one frame.
struct BonePose {
    float x0 = 0.0f, y0 = 0.0f;  // bone start, px
    float angle = 0.0f;          // world angle, radians, y-down coordinates
    float length = 0.0f, width = 0.0f;
};

struct PuppetPose {
    std::vector<BonePose> bones;  // one per part, slot order
};

// Pose at frame t under the deterministic motion program derived from seed.
PuppetPose puppet_pose(const PuppetSpec& spec, std::uint64_t seed, int n_frames, int t);

// Forward map: part-local (u across, v along) -> pixel coordinates.
inline void puppet_forward_map(const BonePose& b, float u, float v, float& px, float& py) {
    float lx = v * b.length;
    float ly = (u - 0.5f) * b.width;
    float c = std::cos(b.angle), s = std::sin(b.angle);
    px = b.x0 + c * lx - s * ly;
    py = b.y0 + s * lx + c * ly;
}

// Deterministic sequence of per-frame records: record t carries frame 0 as
// the source and frame t as the driving/target side.
std::vector<SampleRecord> synth_sequence(const PuppetSpec& spec, std::uint64_t seed, int n_frames);

}  // namespace motra
