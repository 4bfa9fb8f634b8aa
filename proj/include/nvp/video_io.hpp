#pragma once

// Videos as dense T x H x W x 3 float tensors, frame-directory and NVPV I/O,
// pixel-to-coordinate mapping and batch sampling.

#include "nvp/diff_core.hpp"
#include "nvp/image_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nvp {

struct VideoTensor {
    int T = 0, H = 0, W = 0;
    std::vector<float> data;  // index ((t*H + y)*W + x)*3 + c

    VideoTensor() = default;
    VideoTensor(int t, int h, int w, float fill = 0.0f) : T(t), H(h), W(w) {
        require(t >= 1 && h >= 1 && w >= 1, "VideoTensor: dimensions must be >= 1");
        data.assign(static_cast<std::size_t>(t) * h * w * 3, fill);
    }

    std::size_t pixel_count() const { return static_cast<std::size_t>(T) * H * W; }
    std::size_t frame_size() const { return static_cast<std::size_t>(H) * W * 3; }

    std::size_t index(int t, int y, int x) const {
        return ((static_cast<std::size_t>(t) * H + y) * W + x) * 3;
    }
    float& at(int t, int y, int x, int c) { return data[index(t, y, x) + c]; }
    float at(int t, int y, int x, int c) const { return data[index(t, y, x) + c]; }

    const float* frame(int t) const { return data.data() + static_cast<std::size_t>(t) * frame_size(); }
    float* frame(int t) { return data.data() + static_cast<std::size_t>(t) * frame_size(); }

    bool in_unit_range() const {
        for (float v : data)
            if (!(v >= 0.0f && v <= 1.0f)) return false;
        return true;
    }

    void clamp01() {
        for (float& v : data) v = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
    }
};

// Per-pixel exclusion flags (1 = excluded from training), T*H*W entries.
struct PixelMask {
    int T = 0, H = 0, W = 0;
    std::vector<std::uint8_t> excluded;  // index (t*H + y)*W + x

    PixelMask() = default;
    PixelMask(int t, int h, int w) : T(t), H(h), W(w), excluded(static_cast<std::size_t>(t) * h * w, 0) {}

    bool get(int t, int y, int x) const { return excluded[(static_cast<std::size_t>(t) * H + y) * W + x] != 0; }
    void set(int t, int y, int x, bool v) { excluded[(static_cast<std::size_t>(t) * H + y) * W + x] = v ? 1 : 0; }

    std::size_t count_excluded() const {
        std::size_t n = 0;
        for (auto e : excluded) n += e != 0;
        return n;
    }
};

struct Coordinate {
    double x = 0, y = 0, t = 0;
};

struct PixelBatch {
    std::vector<Coordinate> coords;
    std::vector<std::array<float, 3>> targets;
    std::vector<std::size_t> pixel_index;  // linear t*H*W + y*W + x of each sample

    std::size_t size() const { return coords.size(); }
};

inline std::uint8_t to_byte(float v) {
    if (std::isnan(v)) return 0;
    const double s = std::floor(static_cast<double>(v) * 255.0 + 0.5);
    return static_cast<std::uint8_t>(std::clamp(s, 0.0, 255.0));
}

inline Coordinate pixel_to_coord(int it, int iy, int ix, int T, int H, int W) {
    if (it < 0 || it >= T || iy < 0 || iy >= H || ix < 0 || ix >= W)
        throw std::out_of_range("pixel_to_coord: index (" + std::to_string(it) + "," + std::to_string(iy) + "," +
                                std::to_string(ix) + ") outside " + std::to_string(T) + "x" +
                                std::to_string(H) + "x" + std::to_string(W));
    return {(ix + 0.5) / W, (iy + 0.5) / H, (it + 0.5) / T};
}

// ---------------------------------------------------------------------------
// Frame directories.
// ---------------------------------------------------------------------------
inline std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no image frames in directory: " + dir.string());
    return files;
}

inline VideoTensor load_frames(const std::filesystem::path& dir) {
    const auto files = list_images(dir);
    VideoTensor v;
    for (std::size_t t = 0; t < files.size(); ++t) {
        Image8 img = read_image(files[t]);
        if (t == 0) {
            v = VideoTensor(static_cast<int>(files.size()), img.height, img.width);
        } else if (img.width != v.W || img.height != v.H) {
            throw std::runtime_error("frame " + files[t].string() + " is " + std::to_string(img.width) + "x" +
                                     std::to_string(img.height) + ", expected " + std::to_string(v.W) + "x" +
                                     std::to_string(v.H));
        }
        float* f = v.frame(static_cast<int>(t));
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                for (int c = 0; c < 3; ++c) {
                    const int src = img.channels == 1 ? 0 : c;
                    f[(static_cast<std::size_t>(y) * v.W + x) * 3 + c] = img.at(y, x, src) / 255.0f;
                }
    }
    return v;
}

inline std::string frame_filename(int t, const std::string& ext = ".png") {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%05d", t);
    return std::string(buf) + ext;
}

inline void save_frames(const VideoTensor& v, const std::filesystem::path& dir, const std::string& ext = ".png") {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
    for (int t = 0; t < v.T; ++t) {
        Image8 img(v.W, v.H, 3);
        const float* f = v.frame(t);
        for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = to_byte(f[i]);
        write_image(dir / frame_filename(t, ext), img);
    }
}

// A mask directory holds one image per frame; a pixel is excluded when any
// channel is >= 128.
inline PixelMask load_mask(const std::filesystem::path& dir, int T, int H, int W) {
    const auto files = list_images(dir);
    if (static_cast<int>(files.size()) != T)
        throw std::runtime_error("mask has " + std::to_string(files.size()) + " frames, video has " +
                                 std::to_string(T));
    PixelMask m(T, H, W);
    for (int t = 0; t < T; ++t) {
        Image8 img = read_image(files[t]);
        if (img.width != W || img.height != H)
            throw std::runtime_error("mask frame " + files[t].string() + " dimensions do not match video " +
                                     std::to_string(W) + "x" + std::to_string(H));
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                bool hole = false;
                for (int c = 0; c < img.channels; ++c) hole |= img.at(y, x, c) >= 128;
                m.excluded[(static_cast<std::size_t>(t) * H + y) * W + x] = hole;
            }
    }
    return m;
}

// ---------------------------------------------------------------------------
// NVPV raw container: "NVPV", u8 version, u32 T, H, W (little-endian), then
// T*H*W*3 bytes of interleaved RGB.
// ---------------------------------------------------------------------------
inline constexpr std::uint8_t kNvpvVersion = 1;

inline void write_nvpv(const VideoTensor& v, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write("NVPV", 4);
    out.put(static_cast<char>(kNvpvVersion));
    for (std::uint32_t d : {static_cast<std::uint32_t>(v.T), static_cast<std::uint32_t>(v.H),
                            static_cast<std::uint32_t>(v.W)}) {
        const char le[4] = {static_cast<char>(d & 0xff), static_cast<char>((d >> 8) & 0xff),
                            static_cast<char>((d >> 16) & 0xff), static_cast<char>((d >> 24) & 0xff)};
        out.write(le, 4);
    }
    std::vector<char> bytes(v.data.size());
    for (std::size_t i = 0; i < v.data.size(); ++i) bytes[i] = static_cast<char>(to_byte(v.data[i]));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline VideoTensor read_nvpv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "NVPV") throw std::runtime_error("bad NVPV magic at offset 0: " + path.string());
    const int ver = in.get();
    if (ver != kNvpvVersion) throw std::runtime_error("unsupported NVPV version at offset 4: " + path.string());
    std::uint32_t dims[3];
    for (int i = 0; i < 3; ++i) {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (!in) throw std::runtime_error("truncated NVPV header at offset " + std::to_string(5 + 4 * i));
        dims[i] = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0) throw std::runtime_error("NVPV with zero dimension");
    VideoTensor v(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]));
    std::vector<unsigned char> bytes(v.data.size());
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size())
        throw std::runtime_error("truncated NVPV payload at offset " + std::to_string(17 + in.gcount()));
    for (std::size_t i = 0; i < bytes.size(); ++i) v.data[i] = bytes[i] / 255.0f;
    return v;
}

// Frame directory or NVPV file, chosen by what the path is.
inline VideoTensor load_video(const std::filesystem::path& path) {
    if (std::filesystem::is_directory(path)) return load_frames(path);
    if (std::filesystem::is_regular_file(path)) return read_nvpv(path);
    throw std::runtime_error("input not found: " + path.string());
}

// ---------------------------------------------------------------------------
// Sampling with replacement over the unmasked pixels.
// ---------------------------------------------------------------------------
class PixelSampler {
public:
    PixelSampler(const VideoTensor& v, const PixelMask* mask) : video_(&v) {
        if (mask) {
            require(mask->T == v.T && mask->H == v.H && mask->W == v.W, "mask dimensions do not match video");
            for (std::size_t i = 0; i < mask->excluded.size(); ++i)
                if (!mask->excluded[i]) allowed_.push_back(i);
            if (allowed_.empty()) throw std::runtime_error("mask excludes every pixel of the video");
        }
    }

    std::size_t population() const { return allowed_.empty() ? video_->pixel_count() : allowed_.size(); }

    PixelBatch sample(std::size_t n, Rng& rng) const {
        require(n >= 1, "sample_batch: n must be >= 1");
        const VideoTensor& v = *video_;
        const std::size_t hw = static_cast<std::size_t>(v.H) * v.W;
        PixelBatch b;
        b.coords.resize(n);
        b.targets.resize(n);
        b.pixel_index.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t draw = rng.below(population());
            const std::size_t p = allowed_.empty() ? draw : allowed_[draw];
            const int t = static_cast<int>(p / hw);
            const int y = static_cast<int>((p % hw) / v.W);
            const int x = static_cast<int>(p % v.W);
            b.coords[i] = pixel_to_coord(t, y, x, v.T, v.H, v.W);
            const float* px = v.data.data() + p * 3;
            b.targets[i] = {px[0], px[1], px[2]};
            b.pixel_index[i] = p;
        }
        return b;
    }

private:
    const VideoTensor* video_;
    std::vector<std::size_t> allowed_;
};

inline PixelBatch sample_batch(const VideoTensor& v, std::size_t n, Rng& rng, const PixelMask* mask = nullptr) {
    return PixelSampler(v, mask).sample(n, rng);
}

}  // namespace nvp
