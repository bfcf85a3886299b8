#include "motra/puppet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace motra {

namespace {
constexpr float kPi = std::numbers::pi_v<float>;
}

PuppetSpec PuppetSpec::default_spec(int canvas) {
    PuppetSpec s;
    s.canvas = canvas;
    float u = static_cast<float>(canvas) / 128.0f;  // scale from the 128px reference layout
    auto part = [&](int dp, int parent, float attach, float len, float wid, float a0,
                    float range, float r, float g, float b, int z) {
        PuppetPart p;
        p.dp_index = dp;
        p.parent = parent;
        p.attach_t = attach;
        p.length = len * u;
        p.width = wid * u;
        p.angle0 = a0;
        p.angle_range = range;
        p.color[0] = r;
        p.color[1] = g;
        p.color[2] = b;
        p.z = z;
        return p;
    };
    // slot 0: torso points straight up from the root pivot
    s.parts.push_back(part(1, -1, 0.0f, 44.0f, 24.0f, -kPi / 2, 0.06f, 0.20f, 0.45f, 0.80f, 2));
    // slot 1: head continues upward from the torso top
    s.parts.push_back(part(2, 0, 1.0f, 16.0f, 16.0f, 0.0f, 0.15f, 0.92f, 0.76f, 0.55f, 4));
    // slots 2,3: arms hang from the shoulders, swinging
    s.parts.push_back(part(3, 0, 0.88f, 34.0f, 10.0f, kPi - 0.45f, 0.45f, 0.85f, 0.25f, 0.25f, 3));
    s.parts.push_back(part(4, 0, 0.88f, 34.0f, 10.0f, -kPi + 0.45f, 0.45f, 0.25f, 0.70f, 0.30f, 3));
    // slots 4,5: legs from the hip, stepping
    s.parts.push_back(part(9, 0, 0.0f, 40.0f, 12.0f, kPi - 0.18f, 0.30f, 0.80f, 0.60f, 0.20f, 1));
    s.parts.push_back(part(10, 0, 0.0f, 40.0f, 12.0f, -kPi + 0.18f, 0.30f, 0.45f, 0.30f, 0.65f, 1));
    return s;
}

PuppetSpec PuppetSpec::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open puppet spec: " + path);
    PuppetSpec s;
    s.parts.clear();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        auto fail = [&](const std::string& what) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + what);
        };
        if (key == "canvas") {
            if (!(ls >> s.canvas)) fail("expected 'canvas <int>'");
        } else if (key == "root") {
            if (!(ls >> s.root_x >> s.root_y)) fail("expected 'root <x> <y>'");
        } else if (key == "sway_amp") {
            if (!(ls >> s.sway_amp)) fail("expected 'sway_amp <float>'");
        } else if (key == "background") {
            if (!(ls >> s.background[0] >> s.background[1] >> s.background[2]))
                fail("expected 'background <r> <g> <b>'");
        } else if (key == "part") {
            PuppetPart p;
            if (!(ls >> p.dp_index >> p.parent >> p.attach_t >> p.length >> p.width >>
                  p.angle0 >> p.angle_range >> p.color[0] >> p.color[1] >> p.color[2]))
                fail("expected 'part <dp> <parent> <attach> <len> <width> <angle0> <range> <r> <g> <b> [z]'");
            if (!(ls >> p.z)) p.z = static_cast<int>(s.parts.size());
            s.parts.push_back(p);
        } else {
            fail("unknown directive '" + key + "'");
        }
    }
    return s;
}

void PuppetSpec::validate() const {
    if (canvas < 16) throw DataError("puppet spec: canvas must be >= 16");
    if (parts.empty() || parts.size() > static_cast<std::size_t>(kNumParts))
        throw DataError("puppet spec: need 1..24 parts");
    std::set<int> used;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const auto& p = parts[i];
        if (p.dp_index < 1 || p.dp_index > kNumParts)
            throw DataError("puppet spec: dp_index must be in 1..24");
        if (!used.insert(p.dp_index).second)
            throw DataError("puppet spec: dp_index values must be injective");
        if (p.parent >= static_cast<int>(i))
            throw DataError("puppet spec: parent must precede its child (acyclic chain)");
        if (p.parent < -1) throw DataError("puppet spec: bad parent slot");
        if (p.length <= 0.0f || p.width <= 0.0f)
            throw DataError("puppet spec: part dimensions must be positive");
        if (p.attach_t < 0.0f || p.attach_t > 1.0f)
            throw DataError("puppet spec: attach_t must be in [0,1]");
    }
}

namespace {

struct MotionProgram {
    std::vector<float> phase;  // per part
    std::vector<float> freq;
    float sway_phase = 0.0f;
    float sway_freq = 1.0f;
};

MotionProgram make_motion(const PuppetSpec& spec, std::uint64_t seed) {
    Rng rng = make_rng(seed, 0x50555050ULL);
    std::uniform_real_distribution<float> phase_d(0.0f, 2.0f * kPi);
    std::uniform_int_distribution<int> freq_d(1, 2);
    MotionProgram mp;
    for (std::size_t i = 0; i < spec.parts.size(); ++i) {
        mp.phase.push_back(phase_d(rng));
        mp.freq.push_back(static_cast<float>(freq_d(rng)));
    }
    mp.sway_phase = phase_d(rng);
    mp.sway_freq = static_cast<float>(freq_d(rng));
    return mp;
}

PuppetPose pose_at(const PuppetSpec& spec, const MotionProgram& mp, int n_frames, int t) {
    PuppetPose pose;
    pose.bones.resize(spec.parts.size());
    float tt = n_frames > 1 ? static_cast<float>(t) / static_cast<float>(n_frames) : 0.0f;
    float sway = spec.sway_amp * std::sin(2.0f * kPi * (mp.sway_freq * tt) + mp.sway_phase);
    float rx = (spec.root_x + sway) * static_cast<float>(spec.canvas);
    float ry = spec.root_y * static_cast<float>(spec.canvas);
    for (std::size_t i = 0; i < spec.parts.size(); ++i) {
        const auto& p = spec.parts[i];
        float osc = p.angle_range * std::sin(2.0f * kPi * (mp.freq[i] * tt) + mp.phase[i]);
        BonePose b;
        b.length = p.length;
        b.width = p.width;
        if (p.parent < 0) {
            b.x0 = rx;
            b.y0 = ry;
            b.angle = p.angle0 + osc;
        } else {
            const BonePose& par = pose.bones[static_cast<std::size_t>(p.parent)];
            b.x0 = par.x0 + std::cos(par.angle) * par.length * p.attach_t;
            b.y0 = par.y0 + std::sin(par.angle) * par.length * p.attach_t;
            b.angle = par.angle + p.angle0 + osc;
        }
        pose.bones[i] = b;
    }
    return pose;
}

// Per-part surface pattern: a UV checkerboard over the base color so the
// texture branch has spatial structure to learn.
float shade(float base, float u, float v) {
    int cell = (static_cast<int>(u * 4.0f) + static_cast<int>(v * 4.0f)) & 1;
    float s = base * (cell ? 1.0f : 0.62f);
    return std::min(std::max(s, 0.0f), 1.0f);
}

}  // namespace

PuppetPose puppet_pose(const PuppetSpec& spec, std::uint64_t seed, int n_frames, int t) {
    spec.validate();
    return pose_at(spec, make_motion(spec, seed), n_frames, t);
}

std::vector<SampleRecord> synth_sequence(const PuppetSpec& spec, std::uint64_t seed, int n_frames) {
    spec.validate();
    if (n_frames < 2) throw DataError("synth_sequence: n_frames must be >= 2");
    MotionProgram mp = make_motion(spec, seed);
    int n = spec.canvas;

    // z-sorted draw order, stable on slot index
    std::vector<std::size_t> order(spec.parts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return spec.parts[a].z < spec.parts[b].z;
    });

    auto render = [&](int t) {
        PuppetPose pose = pose_at(spec, mp, n_frames, t);
        Image img(n, n);
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < n * n; ++i) img.data[c * n * n + i] = spec.background[c];
        IUVMap iuv(n, n);
        Mask mask{Tensor({1, n, n})};
        for (std::size_t oi : order) {
            const auto& part = spec.parts[oi];
            const BonePose& b = pose.bones[oi];
            float c = std::cos(b.angle), s = std::sin(b.angle);
            // bounding box of the rotated rectangle
            float hw = b.width * 0.5f;
            float xs[4], ys[4];
            int idx = 0;
            for (float lv : {0.0f, b.length})
                for (float lu : {-hw, hw}) {
                    xs[idx] = b.x0 + c * lv - s * lu;
                    ys[idx] = b.y0 + s * lv + c * lu;
                    ++idx;
                }
            int x_lo = std::max(0, static_cast<int>(std::floor(*std::min_element(xs, xs + 4))) - 1);
            int x_hi = std::min(n - 1, static_cast<int>(std::ceil(*std::max_element(xs, xs + 4))) + 1);
            int y_lo = std::max(0, static_cast<int>(std::floor(*std::min_element(ys, ys + 4))) - 1);
            int y_hi = std::min(n - 1, static_cast<int>(std::ceil(*std::max_element(ys, ys + 4))) + 1);
            for (int y = y_lo; y <= y_hi; ++y)
                for (int x = x_lo; x <= x_hi; ++x) {
                    float px = static_cast<float>(x) + 0.5f - b.x0;
                    float py = static_cast<float>(y) + 0.5f - b.y0;
                    float lx = c * px + s * py;   // along the bone
                    float ly = -s * px + c * py;  // across the bone
                    if (lx < 0.0f || lx > b.length || std::abs(ly) > hw) continue;
                    float v = lx / b.length;
                    float u = ly / b.width + 0.5f;
                    u = std::min(std::max(u, 0.0f), 1.0f);
                    v = std::min(std::max(v, 0.0f), 1.0f);
                    iuv.part_at(y, x) = static_cast<std::uint8_t>(part.dp_index);
                    iuv.u[y * n + x] = u;
                    iuv.v[y * n + x] = v;
                    mask.values[y * n + x] = 1.0f;
                    for (int ch = 0; ch < 3; ++ch)
                        img.data[ch * n * n + y * n + x] = shade(part.color[ch], u, v);
                }
        }
        KeypointSet kps;
        for (std::size_t i = 0; i < spec.parts.size(); ++i) {
            const BonePose& b = pose.bones[i];
            Keypoint k;
            k.x = b.x0 + std::cos(b.angle) * b.length;
            k.y = b.y0 + std::sin(b.angle) * b.length;
            k.present = k.x >= 0.0f && k.x < static_cast<float>(n) && k.y >= 0.0f &&
                        k.y < static_cast<float>(n);
            if (!k.present) {
                k.x = 0.0f;
                k.y = 0.0f;
            }
            kps.push_back(k);
        }
        return std::tuple<Image, IUVMap, Mask, KeypointSet>{std::move(img), std::move(iuv),
                                                            std::move(mask), std::move(kps)};
    };

    auto [img0, iuv0, mask0, kps0] = render(0);
    std::vector<SampleRecord> out;
    out.reserve(static_cast<std::size_t>(n_frames));
    for (int t = 0; t < n_frames; ++t) {
        auto [img, iuv, mask, kps] = render(t);
        SampleRecord r;
        r.source_image = img0;
        r.source_iuv = iuv0;
        r.driving_iuv = std::move(iuv);
        r.target_image = std::move(img);
        r.fg_mask = std::move(mask);
        r.keypoints = std::move(kps);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace motra
