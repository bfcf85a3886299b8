#pragma once

#include <string>
#include <vector>

#include "motra/types.hpp"

namespace motra {

// IUVZ binary format (bit-exact, little-endian):
//   magic "IUVZ" (4 bytes), version u16 = 1, height u32, width u32,
//   then H*W bytes part index, H*W u16 quantized u, H*W u16 quantized v.
// UV quantization is 16-bit fixed point: q = round(x * 65535), so the
// round-trip error is at most 1/131070.
void write_iuvz(const IUVMap& m, const std::string& path);
IUVMap read_iuvz(const std::string& path);

// Binary PPM (P6) / PGM (P5), 8-bit, values scaled by 255 with rounding.
void write_ppm(const Image& img, const std::string& path);
Image read_ppm(const std::string& path);
void write_pgm(const Mask& mask, const std::string& path);
Mask read_pgm(const std::string& path);

// Keypoint text format: one "x y present" line per joint.
void write_keypoints(const KeypointSet& kps, const std::string& path);
KeypointSet read_keypoints(const std::string& path);

// Dataset directory layout: <root>/<split>/<video>/ with per-frame files
// frame_%06d.ppm, iuv_%06d.iuvz, mask_%06d.pgm, kp_%06d.txt.
class Dataset {
  public:
    struct Frame {
        std::string image_path;
        std::string iuv_path;
        std::string mask_path;
        std::string kp_path;
    };
    struct Video {
        std::string name;
        std::vector<Frame> frames;
    };

    // Scans the split directory in filename order. A frame missing any
    // companion file raises DataError. A missing or empty split directory
    // yields an empty dataset.
    static Dataset open(const std::string& root, const std::string& split);

    const std::vector<Video>& videos() const { return videos_; }
    int n_videos() const { return static_cast<int>(videos_.size()); }
    int n_frames(int video) const { return static_cast<int>(videos_[video].frames.size()); }
    bool empty() const { return videos_.empty(); }

    Image load_image(int video, int t) const;
    IUVMap load_iuv(int video, int t) const;
    Mask load_mask(int video, int t) const;
    KeypointSet load_keypoints(int video, int t) const;

    // Self-reconstruction pairing: frame 0 is the source, frames t >= 1 are
    // the driving/target frames of the same video.
    SampleRecord self_pair(int video, int t) const;
    std::vector<std::pair<int, int>> self_pairs() const;

    // Cross-video pairing: source is frame 0 of video_a, driving data comes
    // from frame t of video_b (target image/mask/keypoints are video_b's,
    // kept for estimator-based metrics; there is no pixel ground truth).
    SampleRecord cross_pair(int video_a, int video_b, int t) const;

  private:
    std::vector<Video> videos_;
};

// Writes one video directory worth of frames from generated records.
void write_video_dir(const std::string& dir, const std::vector<SampleRecord>& records);

}  // namespace motra
