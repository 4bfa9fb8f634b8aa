#include "nvp/nvp.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace nvp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("nvp_video_io_" + name);
    fs::remove_all(p);
    return p;
}

VideoTensor random_byte_video(int T, int H, int W, std::uint64_t seed) {
    Rng rng(seed);
    VideoTensor v(T, H, W);
    for (auto& x : v.data) x = static_cast<float>(rng.below(256)) / 255.0f;
    return v;
}

}  // namespace

TEST(Frames, BlackFrame) {
    const fs::path dir = scratch("black");
    save_frames(VideoTensor(1, 2, 2), dir);
    const VideoTensor v = load_frames(dir);
    EXPECT_EQ(v.T, 1);
    EXPECT_EQ(v.H, 2);
    EXPECT_EQ(v.W, 2);
    for (float x : v.data) EXPECT_EQ(x, 0.0f);
}

TEST(Frames, ByteMapping) {
    const fs::path dir = scratch("bytes");
    fs::create_directories(dir);
    Image8 img(2, 1, 3);
    img.at(0, 0, 0) = 255;
    img.at(0, 1, 0) = 128;
    write_image(dir / "a.png", img);
    const VideoTensor v = load_frames(dir);
    EXPECT_EQ(v.at(0, 0, 0, 0), 1.0f);
    EXPECT_NEAR(v.at(0, 0, 1, 0), 128.0 / 255.0, 1e-7);
}

TEST(Frames, GrayscaleExpandsToRgb) {
    const fs::path dir = scratch("gray");
    fs::create_directories(dir);
    Image8 img(3, 2, 1);
    img.at(1, 2) = 51;
    write_image(dir / "f.pgm", img);
    const VideoTensor v = load_frames(dir);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(v.at(0, 1, 2, c), 0.2, 1e-7);
}

TEST(Frames, MismatchedFrameSizeNamesFile) {
    const fs::path dir = scratch("mismatch");
    fs::create_directories(dir);
    write_image(dir / "a.png", Image8(4, 4, 3));
    write_image(dir / "b.png", Image8(5, 4, 3));
    try {
        load_frames(dir);
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("b.png"), std::string::npos);
    }
}

TEST(Frames, RoundtripPngAndPpm) {
    const VideoTensor v = random_byte_video(3, 5, 7, 1);
    for (const std::string ext : {".png", ".ppm"}) {
        const fs::path dir = scratch("rt" + ext.substr(1));
        save_frames(v, dir, ext);
        const VideoTensor back = load_frames(dir);
        EXPECT_EQ(back.data, v.data) << ext;
    }
}

TEST(Frames, MissingDirectoryNamesPath) {
    try {
        load_video("/nonexistent/frames_dir");
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/frames_dir"), std::string::npos);
    }
}

TEST(ToByte, RoundingRule) {
    EXPECT_EQ(to_byte(1.0f), 255);
    EXPECT_EQ(to_byte(0.5f), 128);
    EXPECT_EQ(to_byte(0.0f), 0);
    EXPECT_EQ(to_byte(-3.0f), 0);
    EXPECT_EQ(to_byte(7.0f), 255);
    for (int b = 0; b < 256; ++b) EXPECT_EQ(to_byte(static_cast<float>(b) / 255.0f), b);
}

TEST(Nvpv, RoundtripIsExact) {
    const VideoTensor v = random_byte_video(4, 3, 6, 2);
    const fs::path f = scratch("v.nvpv");
    write_nvpv(v, f);
    EXPECT_EQ(fs::file_size(f), 17u + 4 * 3 * 6 * 3);
    EXPECT_EQ(read_nvpv(f).data, v.data);
    EXPECT_EQ(load_video(f).data, v.data);
}

TEST(Nvpv, TruncatedNamesOffset) {
    const VideoTensor v = random_byte_video(2, 2, 2, 3);
    const fs::path f = scratch("t.nvpv");
    write_nvpv(v, f);
    fs::resize_file(f, 20);
    try {
        read_nvpv(f);
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("offset 20"), std::string::npos) << e.what();
    }
    fs::resize_file(f, 10);
    try {
        read_nvpv(f);
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("offset 9"), std::string::npos) << e.what();
    }
}

TEST(Coordinates, CenterOfCell) {
    const Coordinate a = pixel_to_coord(0, 0, 0, 2, 2, 2);
    EXPECT_EQ(a.x, 0.25);
    EXPECT_EQ(a.y, 0.25);
    EXPECT_EQ(a.t, 0.25);
    const Coordinate b = pixel_to_coord(1, 1, 1, 2, 2, 2);
    EXPECT_EQ(b.x, 0.75);
    EXPECT_EQ(b.y, 0.75);
    EXPECT_EQ(b.t, 0.75);
    EXPECT_EQ(pixel_to_coord(0, 0, 0, 1, 1, 1920).x, 0.5 / 1920);
    EXPECT_THROW(pixel_to_coord(2, 0, 0, 2, 2, 2), std::out_of_range);
}

TEST(Sampler, SinglePixelVideo) {
    VideoTensor v(1, 1, 1);
    v.data = {0.1f, 0.2f, 0.3f};
    Rng rng(1);
    const PixelBatch b = sample_batch(v, 4, rng);
    ASSERT_EQ(b.size(), 4u);
    for (const auto& t : b.targets) EXPECT_EQ(t, (std::array<float, 3>{0.1f, 0.2f, 0.3f}));
}

TEST(Sampler, SameSeedSameBatch) {
    const VideoTensor v = random_byte_video(3, 8, 8, 4);
    Rng a(5, 9), b(5, 9);
    const PixelBatch x = sample_batch(v, 100, a), y = sample_batch(v, 100, b);
    EXPECT_EQ(x.pixel_index, y.pixel_index);
}

TEST(Sampler, MaskHidesLeftHalf) {
    const VideoTensor v = random_byte_video(2, 6, 10, 6);
    PixelMask m(2, 6, 10);
    for (int t = 0; t < 2; ++t)
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 5; ++x) m.set(t, y, x, true);
    Rng rng(7);
    const PixelBatch b = sample_batch(v, 10000, rng, &m);
    for (const auto& c : b.coords) ASSERT_GT(c.x, 0.5);
}

TEST(Sampler, TargetsMatchPixels) {
    const VideoTensor v = random_byte_video(2, 3, 4, 8);
    Rng rng(1);
    const PixelBatch b = sample_batch(v, 50, rng);
    for (std::size_t i = 0; i < b.size(); ++i) {
        const std::size_t p = b.pixel_index[i];
        for (int c = 0; c < 3; ++c) EXPECT_EQ(b.targets[i][c], v.data[p * 3 + c]);
    }
}

TEST(Sampler, AllMaskedThrows) {
    const VideoTensor v(1, 2, 2);
    PixelMask m(1, 2, 2);
    std::fill(m.excluded.begin(), m.excluded.end(), 1);
    EXPECT_THROW(PixelSampler(v, &m), std::runtime_error);
}

TEST(Mask, LoadThresholdAndDims) {
    const fs::path dir = scratch("mask");
    fs::create_directories(dir);
    Image8 img(3, 2, 1);
    img.at(0, 1) = 255;
    img.at(1, 2) = 127;
    write_image(dir / "m0.png", img);
    const PixelMask m = load_mask(dir, 1, 2, 3);
    EXPECT_TRUE(m.get(0, 0, 1));
    EXPECT_FALSE(m.get(0, 1, 2));
    EXPECT_EQ(m.count_excluded(), 1u);
    EXPECT_THROW(load_mask(dir, 1, 3, 3), std::runtime_error);
    EXPECT_THROW(load_mask(dir, 2, 2, 3), std::runtime_error);
}
