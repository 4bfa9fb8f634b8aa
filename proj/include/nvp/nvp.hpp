#pragma once

#include "nvp/baselines.hpp"
#include "nvp/codec.hpp"
#include "nvp/config.hpp"
#include "nvp/diff_core.hpp"
#include "nvp/image_io.hpp"
#include "nvp/latent_grids.hpp"
#include "nvp/metrics.hpp"
#include "nvp/neural_field.hpp"
#include "nvp/synthetic.hpp"
#include "nvp/trainer.hpp"
#include "nvp/video_io.hpp"

#include <cstdio>
#include <filesystem>

namespace nvp {

// Writes each keyframe level channel as a grayscale PNG, min/max normalized
// (a constant channel becomes mid-gray). Returns the written paths.
template <class S>
std::vector<std::filesystem::path> export_keyframes(const NvpModel<S>& m, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> out;
    for (const auto& kf : m.keyframes())
        for (int l = 0; l < kf.level_count(); ++l) {
            const auto [ra, rb] = kf.resolution(l);
            const Matrix<S>& codes = kf.level(l).value;
            for (int c = 0; c < kf.dim(); ++c) {
                const double lo = static_cast<double>(codes.col(c).minCoeff());
                const double hi = static_cast<double>(codes.col(c).maxCoeff());
                Image8 img(rb, ra, 1);
                for (int i = 0; i < ra; ++i)
                    for (int j = 0; j < rb; ++j) {
                        const double v = static_cast<double>(codes(i * rb + j, c));
                        img.at(i, j) = hi > lo ? static_cast<std::uint8_t>(std::lround((v - lo) / (hi - lo) * 255.0))
                                               : std::uint8_t{128};
                    }
                char name[64];
                std::snprintf(name, sizeof name, "kf_%s_l%02d_c%d.png", axis_name(kf.axes()), l, c);
                write_image(dir / name, img);
                out.push_back(dir / name);
            }
        }
    return out;
}

}  // namespace nvp
