#include "motra/iuv_io.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace motra {

namespace {

constexpr char kMagic[4] = {'I', 'U', 'V', 'Z'};
constexpr std::uint16_t kVersion = 1;
constexpr int kMaxDim = 65536;

void put_u16(std::ostream& os, std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    os.write(b, 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

std::uint16_t get_u16(std::istream& is, std::uint64_t offset) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    if (is.gcount() != 2) throw FormatError("IUVZ: truncated file", offset);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is, std::uint64_t offset) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4) throw FormatError("IUVZ: truncated file", offset);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t quantize_unit(float x) {
    float q = std::round(x * 65535.0f);
    if (q < 0.0f) q = 0.0f;
    if (q > 65535.0f) q = 65535.0f;
    return static_cast<std::uint16_t>(q);
}

}  // namespace

void write_iuvz(const IUVMap& m, const std::string& path) {
    if (m.height() <= 0 || m.width() <= 0)
        throw FormatError("IUVZ: dims must be >= 1", 6);
    if (m.height() > kMaxDim || m.width() > kMaxDim)
        throw FormatError("IUVZ: dimension exceeds supported maximum", 6);
    m.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os.write(kMagic, 4);
    put_u16(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(m.height()));
    put_u32(os, static_cast<std::uint32_t>(m.width()));
    std::size_t hw = static_cast<std::size_t>(m.height()) * m.width();
    os.write(reinterpret_cast<const char*>(m.part.data()), static_cast<std::streamsize>(hw));
    for (std::size_t i = 0; i < hw; ++i) put_u16(os, quantize_unit(m.u[static_cast<int>(i)]));
    for (std::size_t i = 0; i < hw; ++i) put_u16(os, quantize_unit(m.v[static_cast<int>(i)]));
    if (!os) throw DataError("write failed: " + path);
}

IUVMap read_iuvz(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("IUVZ: bad magic, expected \"IUVZ\"", 0);
    std::uint16_t version = get_u16(is, 4);
    if (version != kVersion)
        throw FormatError("IUVZ: unsupported version " + std::to_string(version), 4);
    std::uint32_t h = get_u32(is, 6);
    std::uint32_t w = get_u32(is, 10);
    if (h < 1 || w < 1) throw FormatError("IUVZ: dims must be >= 1", 6);
    if (h > kMaxDim || w > kMaxDim)
        throw FormatError("IUVZ: dimension exceeds supported maximum", 6);
    std::size_t hw = static_cast<std::size_t>(h) * w;
    IUVMap m(static_cast<int>(h), static_cast<int>(w));
    is.read(reinterpret_cast<char*>(m.part.data()), static_cast<std::streamsize>(hw));
    if (static_cast<std::size_t>(is.gcount()) != hw)
        throw FormatError("IUVZ: truncated part-index block", 14 + static_cast<std::uint64_t>(is.gcount()));
    for (std::size_t i = 0; i < hw; ++i)
        if (m.part[i] > kNumParts)
            throw FormatError("IUVZ: part index out of range 0..24", 14 + i);
    std::uint64_t base = 14 + hw;
    for (std::size_t i = 0; i < hw; ++i)
        m.u[static_cast<int>(i)] = static_cast<float>(get_u16(is, base + 2 * i)) / 65535.0f;
    base += 2 * hw;
    for (std::size_t i = 0; i < hw; ++i)
        m.v[static_cast<int>(i)] = static_cast<float>(get_u16(is, base + 2 * i)) / 65535.0f;
    // Background pixels quantize to exact zero; enforce the invariant anyway.
    for (std::size_t i = 0; i < hw; ++i)
        if (m.part[i] == 0) {
            m.u[static_cast<int>(i)] = 0.0f;
            m.v[static_cast<int>(i)] = 0.0f;
        }
    return m;
}

namespace {

std::uint8_t to_byte(float v) {
    float q = std::round(std::min(std::max(v, 0.0f), 1.0f) * 255.0f);
    return static_cast<std::uint8_t>(q);
}

void write_pnm(const Tensor& t, int channels, const std::string& path) {
    int h = t.dim(1), w = t.dim(2);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << (channels == 3 ? "P6" : "P5") << "\n" << w << " " << h << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * channels);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                row[static_cast<std::size_t>(x) * channels + c] = to_byte(t.at(c, y, x));
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw DataError("write failed: " + path);
}

int pnm_token(std::istream& is, const std::string& path) {
    // skips whitespace and '#' comments
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = is.get();
    }
    if (c == EOF) throw DataError("unexpected EOF in header: " + path);
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = is.get();
    }
    return v;
}

Tensor read_pnm(const std::string& path, int channels) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    char m0 = static_cast<char>(is.get()), m1 = static_cast<char>(is.get());
    const char expect = channels == 3 ? '6' : '5';
    if (m0 != 'P' || m1 != expect)
        throw DataError(std::string("expected P") + expect + " file: " + path);
    int w = pnm_token(is, path);
    int h = pnm_token(is, path);
    int maxval = pnm_token(is, path);
    if (w <= 0 || h <= 0 || maxval != 255)
        throw DataError("unsupported PNM header in " + path);
    Tensor t({channels, h, w});
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * channels);
    for (int y = 0; y < h; ++y) {
        is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (static_cast<std::size_t>(is.gcount()) != row.size())
            throw DataError("truncated pixel data: " + path);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                t.at(c, y, x) = static_cast<float>(row[static_cast<std::size_t>(x) * channels + c]) / 255.0f;
    }
    return t;
}

}  // namespace

void write_ppm(const Image& img, const std::string& path) { write_pnm(img.data, 3, path); }
Image read_ppm(const std::string& path) { return Image(read_pnm(path, 3)); }
void write_pgm(const Mask& mask, const std::string& path) { write_pnm(mask.values, 1, path); }
Mask read_pgm(const std::string& path) { return Mask{read_pnm(path, 1)}; }

void write_keypoints(const KeypointSet& kps, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open for writing: " + path);
    for (const auto& k : kps)
        os << k.x << " " << k.y << " " << (k.present ? 1 : 0) << "\n";
    if (!os) throw DataError("write failed: " + path);
}

KeypointSet read_keypoints(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open: " + path);
    KeypointSet out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        Keypoint k;
        int present = 0;
        if (!(ls >> k.x >> k.y >> present))
            throw DataError("bad keypoint line in " + path + ": '" + line + "'");
        k.present = present != 0;
        out.push_back(k);
    }
    return out;
}

Dataset Dataset::open(const std::string& root, const std::string& split) {
    Dataset ds;
    fs::path dir = fs::path(root) / split;
    if (!fs::exists(dir)) return ds;
    std::vector<fs::path> video_dirs;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) video_dirs.push_back(e.path());
    std::sort(video_dirs.begin(), video_dirs.end());
    for (const auto& vdir : video_dirs) {
        Video video;
        video.name = vdir.filename().string();
        std::vector<fs::path> frames;
        for (const auto& e : fs::directory_iterator(vdir)) {
            std::string name = e.path().filename().string();
            if (name.rfind("frame_", 0) == 0 && e.path().extension() == ".ppm")
                frames.push_back(e.path());
        }
        std::sort(frames.begin(), frames.end());
        for (const auto& fpath : frames) {
            std::string stem = fpath.stem().string();  // frame_XXXXXX
            std::string idx = stem.substr(6);
            Frame f;
            f.image_path = fpath.string();
            f.iuv_path = (vdir / ("iuv_" + idx + ".iuvz")).string();
            f.mask_path = (vdir / ("mask_" + idx + ".pgm")).string();
            f.kp_path = (vdir / ("kp_" + idx + ".txt")).string();
            for (const std::string& p : {f.iuv_path, f.mask_path, f.kp_path})
                if (!fs::exists(p))
                    throw DataError("frame " + fpath.string() + " is missing companion file " + p);
            video.frames.push_back(std::move(f));
        }
        if (!video.frames.empty()) ds.videos_.push_back(std::move(video));
    }
    return ds;
}

Image Dataset::load_image(int video, int t) const {
    return read_ppm(videos_[video].frames[t].image_path);
}
IUVMap Dataset::load_iuv(int video, int t) const {
    return read_iuvz(videos_[video].frames[t].iuv_path);
}
Mask Dataset::load_mask(int video, int t) const {
    return read_pgm(videos_[video].frames[t].mask_path);
}
KeypointSet Dataset::load_keypoints(int video, int t) const {
    return read_keypoints(videos_[video].frames[t].kp_path);
}

SampleRecord Dataset::self_pair(int video, int t) const {
    if (t < 1 || t >= n_frames(video)) throw DataError("self_pair: driving index out of range");
    SampleRecord r;
    r.source_image = load_image(video, 0);
    r.source_iuv = load_iuv(video, 0);
    r.driving_iuv = load_iuv(video, t);
    r.target_image = load_image(video, t);
    r.fg_mask = load_mask(video, t);
    r.keypoints = load_keypoints(video, t);
    return r;
}

std::vector<std::pair<int, int>> Dataset::self_pairs() const {
    std::vector<std::pair<int, int>> out;
    for (int v = 0; v < n_videos(); ++v)
        for (int t = 1; t < n_frames(v); ++t) out.emplace_back(v, t);
    return out;
}

SampleRecord Dataset::cross_pair(int video_a, int video_b, int t) const {
    if (t < 0 || t >= n_frames(video_b)) throw DataError("cross_pair: driving index out of range");
    SampleRecord r;
    r.source_image = load_image(video_a, 0);
    r.source_iuv = load_iuv(video_a, 0);
    r.driving_iuv = load_iuv(video_b, t);
    r.target_image = load_image(video_b, t);
    r.fg_mask = load_mask(video_b, t);
    r.keypoints = load_keypoints(video_b, t);
    return r;
}

void write_video_dir(const std::string& dir, const std::vector<SampleRecord>& records) {
    fs::create_directories(dir);
    char buf[32];
    for (std::size_t t = 0; t < records.size(); ++t) {
        std::snprintf(buf, sizeof(buf), "%06zu", t);
        const std::string idx(buf);
        const auto& r = records[t];
        write_ppm(r.target_image, (fs::path(dir) / ("frame_" + idx + ".ppm")).string());
        write_iuvz(r.driving_iuv, (fs::path(dir) / ("iuv_" + idx + ".iuvz")).string());
        write_pgm(r.fg_mask, (fs::path(dir) / ("mask_" + idx + ".pgm")).string());
        write_keypoints(r.keypoints, (fs::path(dir) / ("kp_" + idx + ".txt")).string());
    }
}

}  // namespace motra
