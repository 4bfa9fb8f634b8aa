#pragma once

// Model files and the re-training-free compression pipeline.
//
// NVPM (uncompressed model), little-endian:
//   "NVPM" | u8 version | u8 flags | u32 config_len | config text
//   | u64 param_count | param_count x f32 (canonical parameter order)
//   [flags & 1: u64 iteration | per parameter block: u64 step_count,
//    size x f64 value, size x f64 adam_m, size x f64 adam_v]
// The f64 values in the optimizer section replace the f32 ones on load so a
// 64-bit run resumes exactly.
//
// NVPC (compressed model), little-endian:
//   "NVPC" | u8 version | u32 config_len | config text | u32 grid_count
//   | per grid block: u8 codec | u32 rows | u32 channels
//                     | channels x (f32 scale, f32 offset) | u32 payload_len | payload
//   | u64 dense_count | dense_count x f32 (head weights, canonical order)
//
// Grid blocks follow the canonical order (keyframe levels xy, xt, yt, then the
// sparse grid). Quantized codes are stored channel-planar. Payloads:
//   lossless        zlib stream of the planar bytes
//   image_external  per channel: u32 len | JPEG of the H_l x W_l channel image
//   video_external  per channel: u32 len | MP4 (HEVC) of nt frames of ny x nx,
//                   frames edge-padded to a multiple of 8 and at least 16

#include "nvp/config.hpp"
#include "nvp/image_io.hpp"
#include "nvp/neural_field.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

namespace nvp {

using Bytes = std::vector<std::uint8_t>;

// ---------------------------------------------------------------------------
// Little-endian byte streams
// ---------------------------------------------------------------------------
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        u32(u);
    }
    void f64(double v) {
        std::uint64_t u;
        std::memcpy(&u, &v, 8);
        u64(u);
    }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void str(const std::string& s) { raw(s.data(), s.size()); }
    Bytes take() { return std::move(buf_); }
    std::size_t size() const { return buf_.size(); }

private:
    Bytes buf_;
};

class ByteReader {
public:
    ByteReader(const Bytes& b, std::string what) : b_(b), what_(std::move(what)) {}

    std::size_t offset() const { return pos_; }
    bool at_end() const { return pos_ == b_.size(); }

    void need(std::size_t n) const {
        if (b_.size() - pos_ < n)
            throw std::runtime_error(what_ + ": truncated at byte offset " + std::to_string(pos_) + " (need " +
                                     std::to_string(n) + " more bytes, have " + std::to_string(b_.size() - pos_) + ")");
    }
    std::uint8_t u8() {
        need(1);
        return b_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
        return v;
    }
    float f32() {
        const std::uint32_t u = u32();
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
    double f64() {
        const std::uint64_t u = u64();
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    Bytes bytes(std::size_t n) {
        need(n);
        Bytes out(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return out;
    }
    [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
        throw std::runtime_error(what_ + ": " + msg + " at byte offset " + std::to_string(at));
    }

private:
    const Bytes& b_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline Bytes read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& p, const Bytes& b) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!out) throw std::runtime_error("write failed: " + p.string());
}

// ---------------------------------------------------------------------------
// NVPM
// ---------------------------------------------------------------------------
inline constexpr std::uint8_t kNvpmVersion = 1;
inline constexpr std::uint8_t kNvpmHasOptimizer = 1;

template <class S>
Bytes serialize(NvpModel<S>& m, std::optional<std::int64_t> optimizer_iteration = std::nullopt) {
    ByteWriter w;
    w.str("NVPM");
    w.u8(kNvpmVersion);
    w.u8(optimizer_iteration ? kNvpmHasOptimizer : 0);
    const std::string cfg = to_text(m.config());
    w.u32(static_cast<std::uint32_t>(cfg.size()));
    w.str(cfg);
    const auto params = m.params();
    w.u64(m.parameter_count());
    for (const auto* p : params)
        for (Eigen::Index i = 0; i < p->size(); ++i) w.f32(static_cast<float>(p->value.data()[i]));
    if (optimizer_iteration) {
        w.u64(static_cast<std::uint64_t>(*optimizer_iteration));
        for (const auto* p : params) {
            w.u64(static_cast<std::uint64_t>(p->step_count));
            for (Eigen::Index i = 0; i < p->size(); ++i) w.f64(static_cast<double>(p->value.data()[i]));
            for (Eigen::Index i = 0; i < p->size(); ++i) w.f64(static_cast<double>(p->adam_m.data()[i]));
            for (Eigen::Index i = 0; i < p->size(); ++i) w.f64(static_cast<double>(p->adam_v.data()[i]));
        }
    }
    return w.take();
}

template <class S>
struct LoadedModel {
    NvpModel<S> model;
    std::optional<std::int64_t> iteration;  // set when optimizer state was stored
};

template <class S>
LoadedModel<S> deserialize(const Bytes& bytes) {
    ByteReader r(bytes, "NVPM");
    if (r.str(4 <= bytes.size() ? 4 : bytes.size()) != "NVPM") r.fail("bad magic", 0);
    const std::uint8_t ver = r.u8();
    if (ver != kNvpmVersion) r.fail("unsupported version " + std::to_string(ver), 4);
    const std::uint8_t flags = r.u8();
    const std::uint32_t len = r.u32();
    const std::size_t cfg_at = r.offset();
    ModelConfig cfg;
    try {
        cfg = from_text<ModelConfig>(r.str(len));
    } catch (const std::invalid_argument& e) {
        r.fail(std::string("bad config record (") + e.what() + ")", cfg_at);
    }
    LoadedModel<S> out{NvpModel<S>(cfg), std::nullopt};
    const std::size_t count_at = r.offset();
    const std::uint64_t count = r.u64();
    if (count != out.model.parameter_count())
        r.fail("parameter count " + std::to_string(count) + " does not match config (" +
                   std::to_string(out.model.parameter_count()) + ")",
               count_at);
    auto params = out.model.params();
    for (auto* p : params)
        for (Eigen::Index i = 0; i < p->size(); ++i) p->value.data()[i] = static_cast<S>(r.f32());
    if (flags & kNvpmHasOptimizer) {
        out.iteration = static_cast<std::int64_t>(r.u64());
        for (auto* p : params) {
            p->step_count = static_cast<std::int64_t>(r.u64());
            for (Eigen::Index i = 0; i < p->size(); ++i) p->value.data()[i] = static_cast<S>(r.f64());
            for (Eigen::Index i = 0; i < p->size(); ++i) p->adam_m.data()[i] = static_cast<S>(r.f64());
            for (Eigen::Index i = 0; i < p->size(); ++i) p->adam_v.data()[i] = static_cast<S>(r.f64());
        }
    }
    if (!r.at_end()) r.fail("trailing bytes", r.offset());
    return out;
}

// Bytes before the parameter payload of an NVPM without optimizer state.
inline std::size_t nvpm_header_size(const ModelConfig& cfg) { return 4 + 1 + 1 + 4 + to_text(cfg).size() + 8; }

// ---------------------------------------------------------------------------
// 8-bit quantization, per latent channel
// ---------------------------------------------------------------------------
struct QuantizedGrid {
    std::uint32_t rows = 0;
    std::uint32_t channels = 0;
    std::vector<float> scale, offset;
    Bytes payload;  // channel-planar: payload[c * rows + r]

    std::uint8_t at(std::uint32_t r, std::uint32_t c) const { return payload[static_cast<std::size_t>(c) * rows + r]; }
};

template <class S>
QuantizedGrid quantize_grid(const Matrix<S>& codes) {
    if (!codes.allFinite()) throw std::invalid_argument("quantize_grid: non-finite latent code");
    QuantizedGrid q;
    q.rows = static_cast<std::uint32_t>(codes.rows());
    q.channels = static_cast<std::uint32_t>(codes.cols());
    q.payload.assign(static_cast<std::size_t>(q.rows) * q.channels, 0);
    for (std::uint32_t c = 0; c < q.channels; ++c) {
        const double lo = static_cast<double>(codes.col(c).minCoeff());
        const double hi = static_cast<double>(codes.col(c).maxCoeff());
        const bool degenerate = !(hi > lo);
        const float off = static_cast<float>(lo);
        const float sc = degenerate ? 1.0f : static_cast<float>((hi - lo) / 255.0);
        q.offset.push_back(off);
        q.scale.push_back(sc);
        if (degenerate) continue;
        for (std::uint32_t r = 0; r < q.rows; ++r) {
            const double v = std::nearbyint((static_cast<double>(codes(r, c)) - off) / sc);
            q.payload[static_cast<std::size_t>(c) * q.rows + r] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
    }
    return q;
}

template <class S>
Matrix<S> dequantize_grid(const QuantizedGrid& q) {
    Matrix<S> m(q.rows, q.channels);
    for (std::uint32_t c = 0; c < q.channels; ++c)
        for (std::uint32_t r = 0; r < q.rows; ++r)
            m(r, c) = static_cast<S>(q.offset[c] + q.scale[c] * static_cast<float>(q.at(r, c)));
    return m;
}

// ---------------------------------------------------------------------------
// Lossless byte compression (zlib)
// ---------------------------------------------------------------------------
inline Bytes deflate_bytes(const Bytes& in) {
    uLongf cap = compressBound(static_cast<uLong>(in.size()));
    Bytes out(cap);
    if (compress2(out.data(), &cap, in.data(), static_cast<uLong>(in.size()), 9) != Z_OK)
        throw std::runtime_error("zlib compression failed");
    out.resize(cap);
    return out;
}

inline Bytes inflate_bytes(const Bytes& in, std::size_t expected) {
    Bytes out(expected);
    uLongf len = static_cast<uLongf>(expected);
    if (uncompress(out.data(), &len, in.data(), static_cast<uLong>(in.size())) != Z_OK || len != expected)
        throw std::runtime_error("zlib payload corrupt or wrong length");
    return out;
}

// ---------------------------------------------------------------------------
// External encoder (ffmpeg)
// ---------------------------------------------------------------------------
inline std::string ffmpeg_path() {
    if (const char* p = std::getenv("NVP_FFMPEG"); p && *p) return p;
    return "ffmpeg";
}

inline std::string shell_quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

class TempDir {
public:
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "nvp-XXXXXX").string();
        if (!mkdtemp(tmpl.data())) throw std::runtime_error("cannot create temporary directory");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

struct ToolResult {
    int exit_code = -1;
    std::string output;
};

inline ToolResult run_tool(const std::string& tool, const std::vector<std::string>& args) {
    TempDir td;
    const auto log = td.path() / "out.log";
    std::string cmd = shell_quote(tool);
    for (const auto& a : args) cmd += " " + shell_quote(a);
    cmd += " >" + shell_quote(log.string()) + " 2>&1 </dev/null";
    const int status = std::system(cmd.c_str());
    ToolResult r;
    r.exit_code = status == -1 ? -1 : (WIFEXITED(status) ? WEXITSTATUS(status) : 128);
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
}

inline bool tool_available(const std::string& tool = ffmpeg_path()) {
    return run_tool(tool, {"-hide_banner", "-version"}).exit_code == 0;
}

inline void run_checked(const std::string& tool, const std::vector<std::string>& args) {
    const ToolResult r = run_tool(tool, args);
    if (r.exit_code != 0) {
        std::string cmd = tool;
        for (const auto& a : args) cmd += " " + a;
        throw std::runtime_error("external encoder failed (exit " + std::to_string(r.exit_code) + "): " + cmd +
                                 "\n" + r.output);
    }
}

// ---------------------------------------------------------------------------
// Compressed models
// ---------------------------------------------------------------------------
enum class GridCodec : std::uint8_t { lossless = 0, image_external = 1, video_external = 2 };

inline const char* codec_name(GridCodec c) {
    switch (c) {
        case GridCodec::lossless: return "lossless";
        case GridCodec::image_external: return "image_external";
        case GridCodec::video_external: return "video_external";
    }
    return "?";
}

struct CompressOptions {
    GridCodec keyframes = GridCodec::lossless;  // lossless or image_external
    GridCodec sparse = GridCodec::lossless;     // lossless or video_external
    CodecPreset preset;
    std::string tool = ffmpeg_path();
    bool fallback_to_lossless = false;  // missing tool: warn and use lossless instead of failing
};

struct CompressedModel {
    Bytes bytes;

    std::size_t size_bytes() const { return bytes.size(); }
};

inline constexpr std::uint8_t kNvpcVersion = 1;

inline int padded_extent(int n) { return std::max(16, (n + 7) / 8 * 8); }

namespace detail {

inline Image8 channel_image(const QuantizedGrid& q, std::uint32_t c, int height, int width, int pad_h, int pad_w) {
    Image8 img(pad_w, pad_h, 1);
    for (int y = 0; y < pad_h; ++y)
        for (int x = 0; x < pad_w; ++x) {
            const int sy = std::min(y, height - 1), sx = std::min(x, width - 1);
            img.at(y, x) = q.at(static_cast<std::uint32_t>(sy * width + sx), c);
        }
    return img;
}

inline void append_record(ByteWriter& w, const Bytes& b) {
    w.u32(static_cast<std::uint32_t>(b.size()));
    w.raw(b.data(), b.size());
}

// Keyframe level: one grayscale JPEG per channel, height = rows of axis a.
inline Bytes encode_image_path(const QuantizedGrid& q, int res_a, int res_b, int scale, const std::string& tool) {
    TempDir td;
    ByteWriter w;
    for (std::uint32_t c = 0; c < q.channels; ++c) {
        const auto png = td.path() / ("c" + std::to_string(c) + ".pgm");
        const auto jpg = td.path() / ("c" + std::to_string(c) + ".jpg");
        write_image(png, channel_image(q, c, res_a, res_b, res_a, res_b));
        run_checked(tool, {"-hide_banner", "-loglevel", "error", "-y", "-i", png.string(), "-qscale:v",
                           std::to_string(scale), jpg.string()});
        append_record(w, read_file(jpg));
    }
    return w.take();
}

inline void decode_image_path(ByteReader& r, QuantizedGrid& q, int res_a, int res_b, const std::string& tool) {
    TempDir td;
    for (std::uint32_t c = 0; c < q.channels; ++c) {
        const auto jpg = td.path() / ("c" + std::to_string(c) + ".jpg");
        const auto pgm = td.path() / ("c" + std::to_string(c) + ".pgm");
        write_file(jpg, r.bytes(r.u32()));
        run_checked(tool, {"-hide_banner", "-loglevel", "error", "-y", "-i", jpg.string(), "-pix_fmt", "gray",
                           pgm.string()});
        const Image8 img = read_image(pgm);
        if (img.width != res_b || img.height != res_a)
            throw std::runtime_error("decoded keyframe image has unexpected size");
        for (int y = 0; y < res_a; ++y)
            for (int x = 0; x < res_b; ++x)
                q.payload[static_cast<std::size_t>(c) * q.rows + static_cast<std::size_t>(y) * res_b + x] = img.at(y, x, 0);
    }
}

// Sparse grid: per channel an nt-frame grayscale HEVC stream of ny x nx frames.
inline Bytes encode_video_path(const QuantizedGrid& q, const SparseShape& s, const CodecPreset& p,
                               const std::string& tool) {
    TempDir td;
    ByteWriter w;
    const int ph = padded_extent(s.ny), pw = padded_extent(s.nx);
    const std::size_t slice = static_cast<std::size_t>(s.nx) * s.ny;
    for (std::uint32_t c = 0; c < q.channels; ++c) {
        const auto dir = td.path() / ("c" + std::to_string(c));
        std::filesystem::create_directories(dir);
        for (int t = 0; t < s.nt; ++t) {
            Image8 img(pw, ph, 1);
            for (int y = 0; y < ph; ++y)
                for (int x = 0; x < pw; ++x) {
                    const int sy = std::min(y, s.ny - 1), sx = std::min(x, s.nx - 1);
                    img.at(y, x) = q.payload[static_cast<std::size_t>(c) * q.rows + t * slice +
                                             static_cast<std::size_t>(sy) * s.nx + sx];
                }
            char name[32];
            std::snprintf(name, sizeof name, "f%05d.pgm", t);
            write_image(dir / name, img);
        }
        const auto mp4 = td.path() / ("c" + std::to_string(c) + ".mp4");
        run_checked(tool, {"-hide_banner", "-loglevel", "error", "-y", "-framerate", std::to_string(p.fr), "-i",
                           (dir / "f%05d.pgm").string(), "-c:v", "libx265", "-pix_fmt", "gray", "-x265-params",
                           "bframes=0:log-level=error", "-crf", std::to_string(p.crf), mp4.string()});
        append_record(w, read_file(mp4));
    }
    return w.take();
}

inline void decode_video_path(ByteReader& r, QuantizedGrid& q, const SparseShape& s, const std::string& tool) {
    TempDir td;
    const int ph = padded_extent(s.ny), pw = padded_extent(s.nx);
    const std::size_t slice = static_cast<std::size_t>(s.nx) * s.ny;
    for (std::uint32_t c = 0; c < q.channels; ++c) {
        const auto mp4 = td.path() / ("c" + std::to_string(c) + ".mp4");
        const auto dir = td.path() / ("d" + std::to_string(c));
        std::filesystem::create_directories(dir);
        write_file(mp4, r.bytes(r.u32()));
        run_checked(tool, {"-hide_banner", "-loglevel", "error", "-y", "-i", mp4.string(), "-pix_fmt", "gray",
                           (dir / "f%05d.pgm").string()});
        const auto frames = list_images(dir);
        if (static_cast<int>(frames.size()) != s.nt)
            throw std::runtime_error("decoded sparse stream has " + std::to_string(frames.size()) + " frames, expected " +
                                     std::to_string(s.nt));
        for (int t = 0; t < s.nt; ++t) {
            const Image8 img = read_image(frames[t]);
            if (img.width != pw || img.height != ph) throw std::runtime_error("decoded sparse frame has unexpected size");
            for (int y = 0; y < s.ny; ++y)
                for (int x = 0; x < s.nx; ++x)
                    q.payload[static_cast<std::size_t>(c) * q.rows + t * slice + static_cast<std::size_t>(y) * s.nx + x] =
                        img.at(y, x, 0);
        }
    }
}

}  // namespace detail

template <class S>
CompressedModel compress(NvpModel<S>& m, CompressOptions opt = {}) {
    const bool external = opt.keyframes != GridCodec::lossless || opt.sparse != GridCodec::lossless;
    if (external && !tool_available(opt.tool)) {
        if (!opt.fallback_to_lossless)
            throw std::runtime_error("external encoder '" + opt.tool + "' not found (pass the fallback flag to use the lossless backend)");
        std::cerr << "warning: external encoder '" << opt.tool << "' not found; using lossless backend\n";
        opt.keyframes = opt.sparse = GridCodec::lossless;
    }
    require(opt.keyframes != GridCodec::video_external, "compress: keyframes take the lossless or image path");
    require(opt.sparse != GridCodec::image_external, "compress: the sparse grid takes the lossless or video path");

    ByteWriter w;
    w.str("NVPC");
    w.u8(kNvpcVersion);
    const std::string cfg = to_text(m.config());
    w.u32(static_cast<std::uint32_t>(cfg.size()));
    w.str(cfg);
    const auto grids = m.grid_params();
    w.u32(static_cast<std::uint32_t>(grids.size()));

    std::size_t g = 0;
    const int scales[3] = {opt.preset.scale_xy, opt.preset.scale_xt, opt.preset.scale_yt};
    auto emit = [&](const QuantizedGrid& q, GridCodec codec, const Bytes& payload) {
        w.u8(static_cast<std::uint8_t>(codec));
        w.u32(q.rows);
        w.u32(q.channels);
        for (std::uint32_t c = 0; c < q.channels; ++c) {
            w.f32(q.scale[c]);
            w.f32(q.offset[c]);
        }
        w.u32(static_cast<std::uint32_t>(payload.size()));
        w.raw(payload.data(), payload.size());
    };
    for (std::size_t k = 0; k < m.keyframes().size(); ++k) {
        const auto& kf = m.keyframes()[k];
        for (int l = 0; l < kf.level_count(); ++l, ++g) {
            const QuantizedGrid q = quantize_grid(kf.level(l).value);
            const auto [ra, rb] = kf.resolution(l);
            if (opt.keyframes == GridCodec::image_external)
                emit(q, opt.keyframes, detail::encode_image_path(q, ra, rb, scales[k], opt.tool));
            else
                emit(q, GridCodec::lossless, deflate_bytes(q.payload));
        }
    }
    if (m.config().sparse) {
        const QuantizedGrid q = quantize_grid(m.sparse().codes().value);
        if (opt.sparse == GridCodec::video_external)
            emit(q, opt.sparse, detail::encode_video_path(q, m.sparse().shape(), opt.preset, opt.tool));
        else
            emit(q, GridCodec::lossless, deflate_bytes(q.payload));
        ++g;
    }
    if (g != grids.size()) throw std::logic_error("compress: grid enumeration mismatch");

    std::uint64_t dense_count = 0;
    for (const auto* p : m.dense_params()) dense_count += static_cast<std::uint64_t>(p->size());
    w.u64(dense_count);
    for (const auto* p : m.dense_params())
        for (Eigen::Index i = 0; i < p->size(); ++i) w.f32(static_cast<float>(p->value.data()[i]));
    return {w.take()};
}

struct DecompressInfo {
    std::vector<GridCodec> codecs;
    std::vector<QuantizedGrid> grids;
};

template <class S>
NvpModel<S> decompress(const CompressedModel& c, const std::string& tool = ffmpeg_path(), DecompressInfo* info = nullptr) {
    ByteReader r(c.bytes, "NVPC");
    if (r.str(std::min<std::size_t>(4, c.bytes.size())) != "NVPC") r.fail("bad magic", 0);
    const std::uint8_t ver = r.u8();
    if (ver != kNvpcVersion) r.fail("unsupported version " + std::to_string(ver), 4);
    const std::size_t cfg_at = r.offset() + 4;
    const std::uint32_t len = r.u32();
    ModelConfig cfg;
    try {
        cfg = from_text<ModelConfig>(r.str(len));
    } catch (const std::invalid_argument& e) {
        r.fail(std::string("bad config record (") + e.what() + ")", cfg_at);
    }
    NvpModel<S> m(cfg);
    auto grids = m.grid_params();
    const std::size_t count_at = r.offset();
    if (r.u32() != grids.size()) r.fail("grid count does not match config", count_at);

    // Shape of each grid block, to route external payloads.
    struct Shape {
        int ra = 0, rb = 0;
        bool sparse = false;
    };
    std::vector<Shape> shapes;
    for (const auto& kf : m.keyframes())
        for (int l = 0; l < kf.level_count(); ++l) shapes.push_back({kf.resolution(l)[0], kf.resolution(l)[1], false});
    if (cfg.sparse) shapes.push_back({0, 0, true});

    for (std::size_t g = 0; g < grids.size(); ++g) {
        const std::size_t at = r.offset();
        const auto codec = static_cast<GridCodec>(r.u8());
        QuantizedGrid q;
        q.rows = r.u32();
        q.channels = r.u32();
        if (q.rows != grids[g]->rows() || q.channels != grids[g]->cols())
            r.fail("grid block " + std::to_string(g) + " shape does not match config", at);
        for (std::uint32_t ch = 0; ch < q.channels; ++ch) {
            q.scale.push_back(r.f32());
            q.offset.push_back(r.f32());
        }
        const std::uint32_t plen = r.u32();
        const Bytes payload = r.bytes(plen);
        q.payload.assign(static_cast<std::size_t>(q.rows) * q.channels, 0);
        ByteReader pr(payload, "NVPC grid payload");
        switch (codec) {
            case GridCodec::lossless: q.payload = inflate_bytes(payload, q.payload.size()); break;
            case GridCodec::image_external:
                if (shapes[g].sparse) r.fail("image codec on sparse grid", at);
                detail::decode_image_path(pr, q, shapes[g].ra, shapes[g].rb, tool);
                break;
            case GridCodec::video_external:
                if (!shapes[g].sparse) r.fail("video codec on keyframe grid", at);
                detail::decode_video_path(pr, q, m.sparse().shape(), tool);
                break;
            default: r.fail("unknown codec id " + std::to_string(static_cast<int>(codec)), at);
        }
        grids[g]->value = dequantize_grid<S>(q);
        if (info) {
            info->codecs.push_back(codec);
            info->grids.push_back(std::move(q));
        }
    }
    const std::size_t dense_at = r.offset();
    std::uint64_t expect = 0;
    for (const auto* p : m.dense_params()) expect += static_cast<std::uint64_t>(p->size());
    if (r.u64() != expect) r.fail("head weight count does not match config", dense_at);
    for (auto* p : m.dense_params())
        for (Eigen::Index i = 0; i < p->size(); ++i) p->value.data()[i] = static_cast<S>(r.f32());
    if (!r.at_end()) r.fail("trailing bytes", r.offset());
    return m;
}

// Total compressed size in bits over the pixel count of the encoded video.
inline double bpp(const CompressedModel& c, int T, int H, int W) {
    require(T >= 1 && H >= 1 && W >= 1, "bpp: video dimensions must be positive");
    return 8.0 * static_cast<double>(c.bytes.size()) / (static_cast<double>(T) * H * W);
}

}  // namespace nvp
