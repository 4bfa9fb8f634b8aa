#pragma once

// Frame quality metrics (PSNR, SSIM), per-frame curves and rate-distortion
// tables. CSV floats use 6 significant digits.

#include "nvp/video_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nvp {

inline constexpr double kPsnrCap = 100.0;

inline double mse(std::span<const float> a, std::span<const float> b) {
    require(a.size() == b.size() && !a.empty(), "mse: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

inline double psnr_from_mse(double m) {
    if (m <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(m));
}

inline double psnr(std::span<const float> a, std::span<const float> b) { return psnr_from_mse(mse(a, b)); }

struct FrameShape {
    int H = 0, W = 0;
};

// Mean SSIM over all fully-contained 11x11 Gaussian windows (sigma 1.5) of the
// mean luma (R+G+B)/3. Inputs are interleaved RGB frames of the given shape.
inline double ssim(std::span<const float> a, std::span<const float> b, FrameShape s) {
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    if (s.H < kWin || s.W < kWin)
        throw std::invalid_argument("ssim: frame " + std::to_string(s.W) + "x" + std::to_string(s.H) +
                                    " smaller than 11x11");
    const std::size_t n = static_cast<std::size_t>(s.H) * s.W;
    require(a.size() == n * 3 && b.size() == n * 3, "ssim: frame size mismatch");

    std::vector<double> la(n), lb(n);
    for (std::size_t i = 0; i < n; ++i) {
        la[i] = (static_cast<double>(a[3 * i]) + a[3 * i + 1] + a[3 * i + 2]) / 3.0;
        lb[i] = (static_cast<double>(b[3 * i]) + b[3 * i + 1] + b[3 * i + 2]) / 3.0;
    }
    double g[kWin];
    double gsum = 0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - kWin / 2;
        g[i] = std::exp(-d * d / (2 * kSigma * kSigma));
        gsum += g[i];
    }
    for (double& v : g) v /= gsum;

    // Separable filtering of a, b, a^2, b^2, ab: horizontal pass then vertical.
    const int ow = s.W - kWin + 1, oh = s.H - kWin + 1;
    std::vector<double> h[5];
    for (auto& v : h) v.assign(static_cast<std::size_t>(s.H) * ow, 0.0);
    for (int y = 0; y < s.H; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc[5] = {0, 0, 0, 0, 0};
            for (int k = 0; k < kWin; ++k) {
                const std::size_t i = static_cast<std::size_t>(y) * s.W + x + k;
                const double va = la[i], vb = lb[i];
                acc[0] += g[k] * va;
                acc[1] += g[k] * vb;
                acc[2] += g[k] * va * va;
                acc[3] += g[k] * vb * vb;
                acc[4] += g[k] * va * vb;
            }
            for (int c = 0; c < 5; ++c) h[c][static_cast<std::size_t>(y) * ow + x] = acc[c];
        }
    double total = 0.0;
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double m[5] = {0, 0, 0, 0, 0};
            for (int k = 0; k < kWin; ++k)
                for (int c = 0; c < 5; ++c) m[c] += g[k] * h[c][static_cast<std::size_t>(y + k) * ow + x];
            const double mu_a = m[0], mu_b = m[1];
            const double va = m[2] - mu_a * mu_a, vb = m[3] - mu_b * mu_b, cov = m[4] - mu_a * mu_b;
            total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
        }
    return total / (static_cast<double>(oh) * ow);
}

struct FrameMetrics {
    int frame = 0;
    double psnr = 0.0;
    double ssim = 0.0;  // NaN when the frame is smaller than the SSIM window
};

inline std::span<const float> frame_span(const VideoTensor& v, int t) { return {v.frame(t), v.frame_size()}; }

inline std::vector<FrameMetrics> per_frame_curve(const VideoTensor& recon, const VideoTensor& truth,
                                                 bool with_ssim = true) {
    require(recon.T == truth.T && recon.H == truth.H && recon.W == truth.W,
            "per_frame_curve: reconstruction and ground truth differ in shape");
    const bool ssim_ok = with_ssim && truth.H >= 11 && truth.W >= 11;
    std::vector<FrameMetrics> out;
    for (int t = 0; t < truth.T; ++t) {
        FrameMetrics f;
        f.frame = t;
        f.psnr = psnr(frame_span(recon, t), frame_span(truth, t));
        f.ssim = ssim_ok ? ssim(frame_span(recon, t), frame_span(truth, t), {truth.H, truth.W}) : std::nan("");
        out.push_back(f);
    }
    return out;
}

inline double mean_psnr(const std::vector<FrameMetrics>& curve) {
    require(!curve.empty(), "mean_psnr: empty curve");
    double s = 0;
    for (const auto& f : curve) s += f.psnr;
    return s / static_cast<double>(curve.size());
}

inline double stddev_psnr(const std::vector<FrameMetrics>& curve) {
    const double m = mean_psnr(curve);
    double s = 0;
    for (const auto& f : curve) s += (f.psnr - m) * (f.psnr - m);
    return std::sqrt(s / static_cast<double>(curve.size()));
}

inline std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline void write_curve_csv(std::ostream& os, const std::vector<FrameMetrics>& curve) {
    os << "frame,psnr,ssim\n";
    for (const auto& f : curve) os << f.frame << ',' << fmt6(f.psnr) << ',' << fmt6(f.ssim) << '\n';
}

struct RdPoint {
    double bpp = 0, psnr = 0, ssim = 0;
    std::string label;
};

// Sorted by BPP ascending (stable for ties).
inline std::vector<RdPoint> rd_sorted(std::vector<RdPoint> pts) {
    require(!pts.empty(), "rd_table: need at least one point");
    std::stable_sort(pts.begin(), pts.end(), [](const RdPoint& a, const RdPoint& b) { return a.bpp < b.bpp; });
    return pts;
}

inline std::string rd_table(const std::vector<RdPoint>& pts) {
    std::string s = "bpp,psnr,ssim,label\n";
    for (const auto& p : rd_sorted(pts)) s += fmt6(p.bpp) + "," + fmt6(p.psnr) + "," + fmt6(p.ssim) + "," + p.label + "\n";
    return s;
}

}  // namespace nvp
