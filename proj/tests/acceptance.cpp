// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Thresholds are pinned below.

#include "gradcheck.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

using namespace nvp;
using namespace nvp::testing;

namespace {

constexpr double kGradTol = 1e-4;
constexpr int kGradConfigs = 100;
constexpr double kGradSeconds = 120;
constexpr double kAdjointTol = 1e-10;
constexpr double kConstantPsnr = 50, kConstantSeconds = 60;
constexpr int kConstantIters = 2000;
constexpr double kStructuredPsnr = 35, kStructuredSeconds = 600;
constexpr int kStructuredIters = 10000, kStructuredBatch = 8192;
constexpr int kAblationIters = 5000;
constexpr double kCompressionDrop = 0.5, kBppTol = 1e-9;
constexpr int kInpaintIters = 3000;
constexpr double kInpaintPsnr = 30;
constexpr double kFrameStd = 2.0;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(const char* name, bool pass, const std::string& detail) {
    std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
    if (!pass) ++failures;
}

void report_skip(const char* name, const std::string& why) { std::cout << "SKIP " << name << ": " << why << std::endl; }

std::string f3(double v) {
    char b[64];
    std::snprintf(b, sizeof b, "%.3f", v);
    return b;
}

std::string g3(double v) {
    char b[64];
    std::snprintf(b, sizeof b, "%.3g", v);
    return b;
}

TrainConfig structured_train(int iters, std::int64_t seed) {
    TrainConfig t = desk_train_config(16, 64, 64);
    t.iters = iters;
    t.batch = kStructuredBatch;
    t.seed = seed;
    t.workers = 1;
    t.timing = false;
    return t;
}

// Elementwise ops against central differences of sum(U .* op(X)).
GradCheck check_ops(Rng& rng) {
    GradCheck gc;
    const Matrix<double> U3 = random_matrix(6, 3, rng);
    Matrix<double> X = random_matrix(6, 4, rng), W = random_matrix(3, 4, rng), b = random_matrix(3, 1, rng);
    auto lin = [&] { return weighted_sum(linear_forward(X, W, b), U3); };
    const LinearGrads<double> lg = linear_backward(X, W, U3);
    for (Eigen::Index i = 0; i < X.size(); ++i) gc.add(lg.dX.data()[i], central_diff(X.data()[i], lin), "linear dX");
    for (Eigen::Index i = 0; i < W.size(); ++i) gc.add(lg.dW.data()[i], central_diff(W.data()[i], lin), "linear dW");
    for (Eigen::Index i = 0; i < b.size(); ++i) gc.add(lg.db.data()[i], central_diff(b.data()[i], lin), "linear db");

    Matrix<double> Z = random_matrix(6, 4, rng, -2, 2);
    for (Eigen::Index i = 0; i < Z.size(); ++i) Z.data()[i] += Z.data()[i] >= 0 ? 0.05 : -0.05;  // keep kinks out of the FD stencil
    const Matrix<double> U = random_matrix(6, 4, rng);
    const double sigma = 7.5, slope = 0.1;
    const Matrix<double> ds = sin_act_backward(Z, sigma, U), dl = leaky_relu_backward(Z, slope, U), dr = relu_backward(Z, U);
    for (Eigen::Index i = 0; i < Z.size(); ++i) {
        gc.add(ds.data()[i], central_diff(Z.data()[i], [&] { return weighted_sum(sin_act(Z, sigma), U); }), "sine");
        gc.add(dl.data()[i], central_diff(Z.data()[i], [&] { return weighted_sum(leaky_relu(Z, slope), U); }), "leaky");
        gc.add(dr.data()[i], central_diff(Z.data()[i], [&] { return weighted_sum(relu(Z), U); }), "relu");
    }
    return gc;
}

void gradient_suite() {
    const auto t0 = Clock::now();
    Rng rng(20240601);
    GradCheck gc = check_ops(rng);
    for (int k = 0; k < kGradConfigs; ++k) {
        const ModelConfig cfg = random_model_config(rng);
        NvpModel<double> m = random_model(cfg, rng);
        gc.merge(check_model_gradients(m, random_coords(5, rng), rng, 8));
    }
    const double sec = since(t0);
    report("gradient suite", gc.max_rel < kGradTol && sec < kGradSeconds,
           std::to_string(kGradConfigs) + " configs, " + std::to_string(gc.checked) + " entries, max rel err " +
               g3(gc.max_rel) + " (< " + g3(kGradTol) + "), " + f3(sec) + " s" +
               (gc.max_rel < kGradTol ? "" : ", worst " + gc.worst));
}

// All levels of a keyframe grid at once.
double keyframe_adjoint(KeyframeGrid<double>& g, const std::vector<Coordinate>& coords, Rng& rng) {
    for (auto& l : g.levels()) {
        l.value = random_matrix(l.rows(), l.cols(), rng);
        l.zero_grad();
    }
    double lhs = 0, scale = 0;
    std::vector<double> e(g.output_size()), v(g.output_size());
    for (const auto& c : coords) {
        for (auto& x : e) x = rng.uniform(-1, 1);
        g.lookup(c.x, c.y, v.data());
        for (std::size_t k = 0; k < e.size(); ++k) {
            lhs += e[k] * v[k];
            scale += std::abs(e[k] * v[k]);
        }
        g.scatter(c.x, c.y, e.data());
    }
    double rhs = 0;
    for (auto& l : g.levels()) rhs += l.grad.cwiseProduct(l.value).sum();
    return std::abs(lhs - rhs) / scale;
}

void adjoint_suite() {
    Rng rng(7);
    const auto coords = random_coords(2000, rng);
    double worst_kf = 0, worst_dense = 0, worst_up = 0;
    for (int trial = 0; trial < 5; ++trial) {
        KeyframeGrid<double> g(AxisPair::xy, 5, 1.35, 3 + trial, 4 + trial, 2);
        worst_kf = std::max(worst_kf, keyframe_adjoint(g, coords, rng));
        for (bool up : {false, true}) {
            SparseGrid3D<double> s({3 + trial, 4, 2 + trial}, 3, {std::min(3, 3 + trial), 2, 2}, up);
            const double err = adjoint_mismatch(
                s.codes(), s.output_size(), [&](const Coordinate& c, double* o) { s.lookup(c, o); },
                [&](const Coordinate& c, const double* e) { s.scatter(c, e); }, coords, rng);
            (up ? worst_up : worst_dense) = std::max(up ? worst_up : worst_dense, err);
        }
    }
    const bool ok = worst_kf < kAdjointTol && worst_dense < kAdjointTol && worst_up < kAdjointTol;
    report("adjoint suite", ok,
           "keyframes " + g3(worst_kf) + ", sparse windowed " + g3(worst_dense) + ", sparse upsampled " + g3(worst_up) +
               " (< " + g3(kAdjointTol) + ")");
}

void constant_overfit() {
    const VideoTensor v = constant_video(8, 32, 32, {0.25f, 0.5f, 0.75f});
    TrainConfig t = desk_train_config(v.T, v.H, v.W);
    t.iters = kConstantIters;
    t.timing = false;
    const auto t0 = Clock::now();
    auto m = init_model<float>(desk_model_config(v.T, v.H, v.W), 1);
    const TrainReport r = train(m, v, t);
    const double sec = since(t0);
    report("constant-video overfit", r.final_psnr() >= kConstantPsnr && sec < kConstantSeconds,
           f3(r.final_psnr()) + " dB after " + std::to_string(kConstantIters) + " iterations (>= " + f3(kConstantPsnr) +
               "), " + f3(sec) + " s (< " + f3(kConstantSeconds) + ")");
}

void level_schedule() {
    KeyframeGrid<float> g(AxisPair::xy, 16, 1.35, 16, 16, 1);
    bool ok = true;
    std::string got;
    for (int l = 0; l < 16; ++l) {
        long double p = 16;
        for (int k = 0; k < l; ++k) p *= 1.35L;
        const int want = static_cast<int>(std::floor(p));
        const auto [ra, rb] = g.resolution(l);
        ok = ok && ra == want && rb == want && g.level(l).rows() == static_cast<Eigen::Index>(want) * want;
        got += (l ? "," : "") + std::to_string(ra);
    }
    report("level schedule", ok, got);
}

void determinism() {
    const VideoTensor v = structured_video(4, 16, 16);
    ModelConfig mc = desk_model_config(v.T, v.H, v.W);
    TrainConfig t = desk_train_config(v.T, v.H, v.W);
    t.iters = 200;
    t.batch = 512;
    t.eval_every = 50;
    t.workers = 1;
    t.timing = false;
    auto run = [&] {
        auto m = init_model<double>(mc, 99);
        const TrainReport r = train(m, v, t);
        std::ostringstream csv;
        write_telemetry_csv(csv, r);
        return std::make_pair(serialize(m), csv.str());
    };
    const auto a = run(), b = run();
    report("determinism", a.first == b.first && a.second == b.second,
           "NVPM " + std::to_string(a.first.size()) + " bytes " + (a.first == b.first ? "identical" : "differ") +
               ", telemetry " + (a.second == b.second ? "identical" : "differs"));
}

void inpainting() {
    const InpaintingScene s = moving_square_scene(16, 64, 64, 16);
    TrainConfig t = structured_train(kInpaintIters, 1);
    TrainOptions opt;
    opt.mask = &s.mask;
    auto m = init_model<float>(desk_model_config(16, 64, 64), 1);
    train(m, s.observed, t, opt);
    VideoTensor rec = reconstruct(m, s.observed);
    rec.clamp01();
    double se = 0;
    std::size_t n = 0;
    for (int tt = 0; tt < 16; ++tt)
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x)
                if (s.mask.get(tt, y, x))
                    for (int c = 0; c < 3; ++c) {
                        const double d = static_cast<double>(rec.at(tt, y, x, c)) - s.background.at(tt, y, x, c);
                        se += d * d;
                        ++n;
                    }
    const double p = psnr_from_mse(se / static_cast<double>(n));
    report("inpainting", p >= kInpaintPsnr,
           "masked-region PSNR vs clean background " + f3(p) + " dB (>= " + f3(kInpaintPsnr) + ") over " +
               std::to_string(n / 3) + " pixels");
}

void ablation(const VideoTensor& v) {
    const ModelConfig full = desk_model_config(v.T, v.H, v.W);
    const char* names[] = {"full", "keyframes", "sparse", "modulation"};
    int wins_final_kf = 0, wins_final_sp = 0, wins_early_mod = 0;
    std::string detail;
    for (std::int64_t seed = 1; seed <= 3; ++seed) {
        double final_psnr[4], early_psnr[4];
        for (int k = 0; k < 4; ++k) {
            const AblationVariant av = ablation_variant(full, names[k]);
            TrainConfig t = structured_train(kAblationIters, seed);
            t.eval_every = kAblationIters / 10;
            auto m = init_model<float>(av.config, static_cast<std::uint64_t>(seed));
            const TrainReport r = train(m, v, t);
            final_psnr[k] = r.final_psnr();
            early_psnr[k] = r.records.front().psnr;
        }
        wins_final_kf += final_psnr[0] > final_psnr[1];
        wins_final_sp += final_psnr[0] > final_psnr[2];
        wins_early_mod += early_psnr[0] > early_psnr[3];
        detail += " | seed " + std::to_string(seed) + ": final full/-kf/-sparse " + f3(final_psnr[0]) + "/" +
                  f3(final_psnr[1]) + "/" + f3(final_psnr[2]) + ", early full/-mod " + f3(early_psnr[0]) + "/" +
                  f3(early_psnr[3]);
    }
    const bool ok = wins_final_kf >= 2 && wins_final_sp >= 2 && wins_early_mod >= 2;
    report("ablation direction", ok,
           "wins over 3 seeds: -keyframes " + std::to_string(wins_final_kf) + ", -sparse " +
               std::to_string(wins_final_sp) + ", -modulation (10%) " + std::to_string(wins_early_mod) + " (need >= 2)" +
               detail);
}

void compression(NvpModel<float>& m, const VideoTensor& v) {
    const CompressedModel cm = compress(m);
    DecompressInfo info;
    const NvpModel<float> back = decompress<float>(cm, ffmpeg_path(), &info);
    auto grids = m.grid_params();
    bool exact = info.grids.size() == grids.size();
    for (std::size_t g = 0; exact && g < grids.size(); ++g) exact = info.grids[g].payload == quantize_grid(grids[g]->value).payload;
    const double before = evaluate(m, v), after = evaluate(back, v);
    const std::filesystem::path path = std::filesystem::temp_directory_path() / "nvp_acceptance.nvpc";
    write_file(path, cm.bytes);
    const double hand = 8.0 * static_cast<double>(std::filesystem::file_size(path)) / (static_cast<double>(v.T) * v.H * v.W);
    std::filesystem::remove(path);
    const double rate = bpp(cm, v.T, v.H, v.W);
    const bool ok = exact && before - after <= kCompressionDrop && std::abs(rate - hand) <= kBppTol;
    report("compression roundtrip", ok,
           std::string("quantized grids ") + (exact ? "recovered exactly" : "MISMATCH") + ", PSNR " + f3(before) +
               " -> " + f3(after) + " dB (drop <= " + f3(kCompressionDrop) + "), bpp " + g3(rate) + " vs file " +
               g3(hand));
}

void rate_distortion(NvpModel<float>& m, const VideoTensor& v) {
    if (!tool_available()) {
        report_skip("rate-distortion monotonicity", "external codec tool not found");
        return;
    }
    struct Preset {
        int scale, crf;
    };
    const Preset presets[] = {{2, 12}, {8, 30}, {24, 46}};
    std::vector<RdPoint> pts;
    for (const auto& p : presets) {
        CompressOptions opt;
        opt.keyframes = GridCodec::image_external;
        opt.sparse = GridCodec::video_external;
        opt.preset.scale_xy = opt.preset.scale_xt = opt.preset.scale_yt = p.scale;
        opt.preset.crf = p.crf;
        const CompressedModel cm = compress(m, opt);
        const NvpModel<float> back = decompress<float>(cm, opt.tool);
        pts.push_back({bpp(cm, v.T, v.H, v.W), evaluate(back, v), 0, "q" + std::to_string(p.scale)});
    }
    const auto sorted = rd_sorted(pts);
    bool ok = true;
    for (std::size_t i = 1; i < sorted.size(); ++i) ok = ok && sorted[i].psnr >= sorted[i - 1].psnr;
    std::string detail;
    for (const auto& p : sorted) detail += (detail.empty() ? "" : ", ") + g3(p.bpp) + " bpp -> " + f3(p.psnr) + " dB";
    report("rate-distortion monotonicity", ok, detail);
}

}  // namespace

int main() {
    std::cout << "acceptance run" << std::endl;
    gradient_suite();
    adjoint_suite();
    level_schedule();
    determinism();
    constant_overfit();

    const VideoTensor video = structured_video(16, 64, 64);
    auto model = init_model<float>(desk_model_config(16, 64, 64), 1);
    const auto t0 = Clock::now();
    train(model, video, structured_train(kStructuredIters, 1));
    const double sec = since(t0);
    const auto curve = per_frame_curve(reconstruct(model, video), video, false);
    const double p = evaluate(model, video);
    report("structured-video overfit", p >= kStructuredPsnr && sec < kStructuredSeconds,
           f3(p) + " dB after " + std::to_string(kStructuredIters) + " iterations (>= " + f3(kStructuredPsnr) + "), " +
               f3(sec) + " s (< " + f3(kStructuredSeconds) + ")");
    report("frame consistency", stddev_psnr(curve) < kFrameStd,
           "per-frame PSNR std " + f3(stddev_psnr(curve)) + " dB (< " + f3(kFrameStd) + ")");
    compression(model, video);
    rate_distortion(model, video);

    inpainting();
    ablation(video);

    std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criteria failed" : "acceptance: all criteria passed")
              << std::endl;
    return failures ? 1 : 0;
}
