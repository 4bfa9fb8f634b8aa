#pragma once

// Configuration records and their `key = value` text form. The same text is
// embedded in model files, so key order here is part of the file formats.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nvp {

struct ModelConfig {
    // Encoded video size; used for desk-scale defaults and decode lattices.
    int video_t = 1, video_h = 1, video_w = 1;

    bool keyframes = true;
    int kf_levels = 16;
    double kf_gamma = 1.35;
    int kf_base = 16;
    int kf_dim = 2;

    bool sparse = true;
    int sparse_nx = 4, sparse_ny = 4, sparse_nt = 4;
    int sparse_dim = 2;
    int window_x = 3, window_y = 3, window_t = 1;
    bool upsample = false;

    bool modulation = true;
    int depth = 3;
    int hidden = 128;
    std::vector<double> sigmas{30.0, 1.0};
    double leaky_slope = 0.01;

    template <class V>
    void visit(V&& v) {
        v("video_t", video_t);
        v("video_h", video_h);
        v("video_w", video_w);
        v("keyframes", keyframes);
        v("kf_levels", kf_levels);
        v("kf_gamma", kf_gamma);
        v("kf_base", kf_base);
        v("kf_dim", kf_dim);
        v("sparse", sparse);
        v("sparse_nx", sparse_nx);
        v("sparse_ny", sparse_ny);
        v("sparse_nt", sparse_nt);
        v("sparse_dim", sparse_dim);
        v("window_x", window_x);
        v("window_y", window_y);
        v("window_t", window_t);
        v("upsample", upsample);
        v("modulation", modulation);
        v("depth", depth);
        v("hidden", hidden);
        v("sigmas", sigmas);
        v("leaky_slope", leaky_slope);
    }

    int keyframe_features() const { return keyframes ? 3 * kf_levels * kf_dim : 0; }
    int sparse_features() const { return sparse ? window_x * window_y * window_t * sparse_dim : 0; }
    int z_dim() const { return keyframe_features() + sparse_features(); }

    void validate() const {
        auto bad = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
        if (video_t < 1 || video_h < 1 || video_w < 1) bad("video dimensions must be >= 1");
        if (!keyframes && !sparse) bad("at least one of keyframes/sparse must be enabled");
        if (keyframes && (kf_levels < 1 || kf_dim < 1 || kf_base < 1 || !(kf_gamma > 1.0)))
            bad("keyframe levels/dim/base must be >= 1 and gamma > 1");
        if (sparse) {
            if (sparse_nx < 1 || sparse_ny < 1 || sparse_nt < 1 || sparse_dim < 1) bad("sparse shape/dim must be >= 1");
            if (window_x < 1 || window_y < 1 || window_t < 1) bad("window must be >= 1");
            if (window_x > sparse_nx || window_y > sparse_ny || window_t > sparse_nt) bad("window exceeds sparse grid");
        }
        if (depth < 2) bad("depth must be >= 2");
        if (hidden < 1) bad("hidden must be >= 1");
        if (static_cast<int>(sigmas.size()) != depth - 1)
            bad("sigmas must list depth-1 = " + std::to_string(depth - 1) + " frequencies");
        for (double s : sigmas)
            if (!(s > 0)) bad("sigmas must be positive");
        if (!(leaky_slope > 0 && leaky_slope < 1)) bad("leaky_slope must be in (0,1)");
    }
};

struct TrainConfig {
    std::int64_t iters = 100000;
    std::int64_t batch = 1245184;
    double lr = 0.01;
    double lr_min = 0.00001;
    double weight_decay = 0.001;
    std::int64_t seed = 0;
    std::int64_t eval_every = 0;        // 0: only at the end
    std::int64_t checkpoint_every = 0;  // 0: no checkpoints
    int workers = 1;
    int chunk = 128;                    // fixed per-chunk gradient reduction unit
    bool timing = true;                 // false: telemetry seconds column written as 0

    template <class V>
    void visit(V&& v) {
        v("iters", iters);
        v("batch", batch);
        v("lr", lr);
        v("lr_min", lr_min);
        v("weight_decay", weight_decay);
        v("seed", seed);
        v("eval_every", eval_every);
        v("checkpoint_every", checkpoint_every);
        v("workers", workers);
        v("chunk", chunk);
        v("timing", timing);
    }

    void validate() const {
        auto bad = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
        if (iters < 1) bad("iters must be >= 1");
        if (batch < 1) bad("batch must be >= 1");
        if (!(lr_min > 0) || !(lr >= lr_min)) bad("need lr >= lr_min > 0");
        if (weight_decay < 0) bad("weight_decay must be >= 0");
        if (workers < 1) bad("workers must be >= 1");
        if (chunk < 1) bad("chunk must be >= 1");
    }
};

// Quality settings of the external codec path, one image quality per keyframe.
struct CodecPreset {
    int scale_xy = 2, scale_xt = 3, scale_yt = 3;
    int fr = 25;
    int crf = 21;

    template <class V>
    void visit(V&& v) {
        v("scale_xy", scale_xy);
        v("scale_xt", scale_xt);
        v("scale_yt", scale_yt);
        v("fr", fr);
        v("crf", crf);
    }
};

inline CodecPreset codec_preset(char size) {
    if (size == 'L' || size == 'l') return {2, 2, 2, 40, 21};
    return {2, 3, 3, 25, 21};
}

// ---------------------------------------------------------------------------
// key = value text
// ---------------------------------------------------------------------------
namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::string format_value(int v) { return std::to_string(v); }
inline std::string format_value(std::int64_t v) { return std::to_string(v); }
inline std::string format_value(bool v) { return v ? "true" : "false"; }
inline std::string format_value(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}
inline std::string format_value(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_value(v[i]);
    return s;
}

inline void parse_value(const std::string& key, const std::string& s, int& out) {
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &pos);
    } catch (...) {
        pos = 0;
    }
    if (pos != s.size() || s.empty()) throw std::invalid_argument("config key '" + key + "': not an integer: " + s);
    out = static_cast<int>(v);
}
inline void parse_value(const std::string& key, const std::string& s, std::int64_t& out) {
    std::size_t pos = 0;
    try {
        out = std::stoll(s, &pos);
    } catch (...) {
        pos = 0;
    }
    if (pos != s.size() || s.empty()) throw std::invalid_argument("config key '" + key + "': not an integer: " + s);
}
inline void parse_value(const std::string& key, const std::string& s, double& out) {
    std::size_t pos = 0;
    try {
        out = std::stod(s, &pos);
    } catch (...) {
        pos = 0;
    }
    if (pos != s.size() || s.empty()) throw std::invalid_argument("config key '" + key + "': not a number: " + s);
}
inline void parse_value(const std::string& key, const std::string& s, bool& out) {
    if (s == "true" || s == "1" || s == "on" || s == "yes")
        out = true;
    else if (s == "false" || s == "0" || s == "off" || s == "no")
        out = false;
    else
        throw std::invalid_argument("config key '" + key + "': not a boolean: " + s);
}
inline void parse_value(const std::string& key, const std::string& s, std::vector<double>& out) {
    out.clear();
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        double d;
        parse_value(key, trim(item), d);
        out.push_back(d);
    }
}

}  // namespace detail

using KeyValues = std::map<std::string, std::string>;

// Parses `key = value` lines; '#' starts a comment. Duplicate keys: last wins.
inline KeyValues parse_key_values(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected 'key = value'");
        kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
    }
    return kv;
}

inline KeyValues read_key_values(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_key_values(ss.str());
}

// Applies matching keys to cfg and removes them from kv.
template <class Config>
void apply_key_values(Config& cfg, KeyValues& kv) {
    cfg.visit([&](const char* key, auto& field) {
        if (auto it = kv.find(key); it != kv.end()) {
            detail::parse_value(key, it->second, field);
            kv.erase(it);
        }
    });
}

inline void reject_unknown(const KeyValues& kv) {
    if (kv.empty()) return;
    std::string keys;
    for (const auto& [k, v] : kv) keys += (keys.empty() ? "" : ", ") + k;
    throw std::invalid_argument("unknown config key(s): " + keys);
}

template <class Config>
std::string to_text(Config cfg) {
    std::string s;
    cfg.visit([&](const char* key, auto& field) { s += std::string(key) + " = " + detail::format_value(field) + "\n"; });
    return s;
}

template <class Config>
Config from_text(const std::string& text) {
    Config cfg;
    KeyValues kv = parse_key_values(text);
    apply_key_values(cfg, kv);
    reject_unknown(kv);
    return cfg;
}

// ---------------------------------------------------------------------------
// Desk-scale defaults.
// ---------------------------------------------------------------------------

// Number of keyframe levels: the full-size 16, cut once the finest level
// covers the largest video axis.
inline int desk_levels(int max_dim, double gamma, int base, int cap = 16) {
    int l = 1;
    while (l < cap && std::floor(std::pow(gamma, l - 1) * base + 1e-9) < max_dim) ++l;
    return l;
}

inline constexpr int kDeskHidden = 32;

// Preset 'S' (C = D = 2) or 'L' (C = D = 4); sparse grid is the video size / 4
// per axis (at least 4 cells), keyframe levels per desk_levels(), hidden width
// kDeskHidden (the single-core budget; the 128 default stays in ModelConfig).
inline ModelConfig desk_model_config(int T, int H, int W, char preset = 'S') {
    ModelConfig c;
    c.video_t = T;
    c.video_h = H;
    c.video_w = W;
    const int dim = (preset == 'L' || preset == 'l') ? 4 : 2;
    c.kf_dim = dim;
    c.sparse_dim = dim;
    c.kf_levels = desk_levels(std::max({T, H, W}), c.kf_gamma, c.kf_base);
    c.sparse_nx = std::max(4, W / 4);
    c.sparse_ny = std::max(4, H / 4);
    c.sparse_nt = std::max(4, T / 4);
    c.hidden = kDeskHidden;
    return c;
}

inline TrainConfig desk_train_config(int T, int H, int W) {
    TrainConfig t;
    t.batch = std::min<std::int64_t>(t.batch, static_cast<std::int64_t>(T) * H * W);
    return t;
}

}  // namespace nvp
