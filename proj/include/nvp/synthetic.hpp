#pragma once

// Deterministic synthetic videos for demos and tests.

#include "nvp/video_io.hpp"

#include <cmath>
#include <numbers>

namespace nvp {

inline VideoTensor constant_video(int T, int H, int W, std::array<float, 3> rgb) {
    VideoTensor v(T, H, W);
    for (int t = 0; t < T; ++t)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                for (int c = 0; c < 3; ++c) v.at(t, y, x, c) = rgb[c];
    return v;
}

// Smooth static color pattern in [0.2, 0.8].
inline float background_value(double x, double y, int c) {
    constexpr double tau = 2.0 * std::numbers::pi;
    const double phase = 0.9 * c;
    return static_cast<float>(0.5 + 0.15 * std::sin(tau * (1.5 * x) + phase) * std::cos(tau * (1.0 * y) - phase) +
                              0.15 * std::cos(tau * (0.5 * x + 0.75 * y) + 2 * phase));
}

inline VideoTensor background_video(int T, int H, int W) {
    VideoTensor v(T, H, W);
    for (int t = 0; t < T; ++t)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const Coordinate p = pixel_to_coord(t, y, x, T, H, W);
                for (int c = 0; c < 3; ++c) v.at(t, y, x, c) = background_value(p.x, p.y, c);
            }
    return v;
}

// Static background plus a 2D sinusoid translating one period across the
// clip. Values stay inside [0.05, 0.95].
inline VideoTensor structured_video(int T, int H, int W) {
    constexpr double tau = 2.0 * std::numbers::pi;
    VideoTensor v(T, H, W);
    for (int t = 0; t < T; ++t)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const Coordinate p = pixel_to_coord(t, y, x, T, H, W);
                const double wave = 0.15 * std::sin(tau * (3.0 * (p.x - 0.33 * p.t) + 2.0 * p.y));
                for (int c = 0; c < 3; ++c)
                    v.at(t, y, x, c) = static_cast<float>(background_value(p.x, p.y, c) + (c == 1 ? -wave : wave));
            }
    return v;
}

struct InpaintingScene {
    VideoTensor observed;    // background with a solid square moving over it
    VideoTensor background;  // clean background
    PixelMask mask;          // the square's pixels
};

// A side x side square moves diagonally across a static background.
inline InpaintingScene moving_square_scene(int T, int H, int W, int side) {
    require(side >= 1 && side < H && side < W, "moving_square_scene: square must fit inside the frame");
    InpaintingScene s{background_video(T, H, W), background_video(T, H, W), PixelMask(T, H, W)};
    for (int t = 0; t < T; ++t) {
        const double f = T > 1 ? static_cast<double>(t) / (T - 1) : 0.0;
        const int y0 = static_cast<int>(std::lround(f * (H - side)));
        const int x0 = static_cast<int>(std::lround(f * (W - side)));
        for (int y = y0; y < y0 + side; ++y)
            for (int x = x0; x < x0 + side; ++x) {
                s.mask.set(t, y, x, true);
                s.observed.at(t, y, x, 0) = 0.95f;
                s.observed.at(t, y, x, 1) = 0.05f;
                s.observed.at(t, y, x, 2) = 0.05f;
            }
    }
    return s;
}

}  // namespace nvp
