#include "nvp/nvp.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace nvp;

namespace {

std::vector<float> random_frame(int H, int W, Rng& rng) {
    std::vector<float> f(static_cast<std::size_t>(H) * W * 3);
    for (auto& v : f) v = static_cast<float>(rng.uniform());
    return f;
}

// Direct 2D-window SSIM on luma, no separable filtering.
double ssim_direct(const std::vector<float>& a, const std::vector<float>& b, int H, int W) {
    const int k = 11;
    double g[11][11], gs = 0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            const double di = i - 5, dj = j - 5;
            g[i][j] = std::exp(-(di * di + dj * dj) / (2 * 1.5 * 1.5));
            gs += g[i][j];
        }
    auto luma = [&](const std::vector<float>& f, int y, int x) {
        const std::size_t p = (static_cast<std::size_t>(y) * W + x) * 3;
        return (static_cast<double>(f[p]) + f[p + 1] + f[p + 2]) / 3.0;
    };
    double total = 0;
    int count = 0;
    for (int y = 0; y + k <= H; ++y)
        for (int x = 0; x + k <= W; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j) {
                    const double w = g[i][j] / gs, va = luma(a, y + i, x + j), vb = luma(b, y + i, x + j);
                    ma += w * va;
                    mb += w * vb;
                    saa += w * va * va;
                    sbb += w * vb * vb;
                    sab += w * va * vb;
                }
            const double c1 = 1e-4, c2 = 9e-4;
            total += ((2 * ma * mb + c1) * (2 * (sab - ma * mb) + c2)) /
                     ((ma * ma + mb * mb + c1) * (saa - ma * ma + sbb - mb * mb + c2));
            ++count;
        }
    return total / count;
}

}  // namespace

TEST(Psnr, Examples) {
    std::vector<float> a(12, 0.5f), b = a;
    EXPECT_EQ(psnr(a, b), kPsnrCap);
    for (auto& v : b) v += 0.1f;
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-5);
    std::vector<float> z(12, 0.0f), o(12, 1.0f);
    EXPECT_NEAR(psnr(z, o), 0.0, 1e-12);
    EXPECT_THROW(psnr(z, std::vector<float>(11)), std::invalid_argument);
}

TEST(Ssim, IdenticalIsOne) {
    Rng rng(1);
    const auto a = random_frame(16, 20, rng);
    EXPECT_NEAR(ssim(a, a, {16, 20}), 1.0, 1e-12);
}

TEST(Ssim, CheckerboardVersusInverseIsNegative) {
    const int H = 16, W = 16;
    std::vector<float> a(H * W * 3), b(H * W * 3);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) {
                const float v = (x + y) % 2 ? 1.0f : 0.0f;
                a[(y * W + x) * 3 + c] = v;
                b[(y * W + x) * 3 + c] = 1.0f - v;
            }
    EXPECT_LT(ssim(a, b, {H, W}), 0.0);
}

TEST(Ssim, MatchesDirectWindowReference) {
    Rng rng(2);
    const auto a = random_frame(17, 23, rng), b = random_frame(17, 23, rng);
    EXPECT_NEAR(ssim(a, b, {17, 23}), ssim_direct(a, b, 17, 23), 1e-6);
    auto c = a;
    for (auto& v : c) v = std::clamp(v + static_cast<float>(rng.normal() * 0.05), 0.0f, 1.0f);
    EXPECT_NEAR(ssim(a, c, {17, 23}), ssim_direct(a, c, 17, 23), 1e-6);
}

TEST(Ssim, SmallFrameThrows) {
    std::vector<float> a(10 * 10 * 3, 0.5f);
    EXPECT_THROW(ssim(a, a, {10, 10}), std::invalid_argument);
}

TEST(Curve, CorruptedFrameDips) {
    VideoTensor truth = structured_video(5, 16, 16), recon = truth;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) recon.at(2, y, x, 0) += 0.1f;
    const auto curve = per_frame_curve(recon, truth);
    ASSERT_EQ(curve.size(), 5u);
    for (int t = 0; t < 5; ++t) {
        if (t == 2) {
            EXPECT_LT(curve[t].psnr, 30.0);
            EXPECT_LT(curve[t].ssim, 1.0);
        } else {
            EXPECT_EQ(curve[t].psnr, kPsnrCap);
            EXPECT_NEAR(curve[t].ssim, 1.0, 1e-12);
        }
    }
    EXPECT_GT(stddev_psnr(curve), 0.0);
}

TEST(Curve, CsvFormat) {
    std::vector<FrameMetrics> c{{0, 31.25, 0.5}, {1, 1.0 / 3.0, std::nan("")}};
    std::ostringstream os;
    write_curve_csv(os, c);
    EXPECT_EQ(os.str(), "frame,psnr,ssim\n0,31.25,0.5\n1,0.333333,nan\n");
}

TEST(Curve, SmallVideoHasNoSsim) {
    VideoTensor v = constant_video(2, 8, 8, {0.1f, 0.2f, 0.3f});
    const auto c = per_frame_curve(v, v);
    EXPECT_TRUE(std::isnan(c[0].ssim));
}

TEST(Rd, SortedAndTable) {
    std::vector<RdPoint> p{{2.0, 30, 0.9, "b"}, {0.5, 25, 0.8, "a"}, {2.0, 31, 0.91, "c"}};
    const auto s = rd_sorted(p);
    EXPECT_EQ(s[0].label, "a");
    EXPECT_EQ(s[1].label, "b");
    EXPECT_EQ(s[2].label, "c");
    EXPECT_EQ(rd_table(p), "bpp,psnr,ssim,label\n0.5,25,0.8,a\n2,30,0.9,b\n2,31,0.91,c\n");
    EXPECT_THROW(rd_sorted({}), std::invalid_argument);
}
