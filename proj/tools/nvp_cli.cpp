// nvp: encode videos into latent-grid neural fields, decode, compress and
// evaluate them.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include "nvp/nvp.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace nvp;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Shared training options
// ---------------------------------------------------------------------------
struct TrainArgs {
    std::string input;
    std::string config_file;
    std::vector<std::string> sets;
    std::optional<std::int64_t> iters, seed, batch, eval_every, checkpoint_every;
    std::optional<int> workers;
    std::string preset = "S";
    int precision = 32;
    bool no_timing = false;
    std::string telemetry;
    std::string log;
};

void add_train_options(CLI::App* c, TrainArgs& a) {
    c->add_option("--input", a.input, "frames directory or .nvpv file")->required();
    c->add_option("--config", a.config_file, "key = value file (model and training fields)");
    c->add_option("--set", a.sets, "override one field, KEY=VALUE (repeatable)");
    c->add_option("--iters", a.iters, "training iterations");
    c->add_option("--seed", a.seed, "random seed");
    c->add_option("--batch", a.batch, "pixels per iteration");
    c->add_option("--eval-every", a.eval_every, "evaluate every N iterations (0: end only)");
    c->add_option("--checkpoint-every", a.checkpoint_every, "write a resumable checkpoint every N iterations");
    c->add_option("--workers", a.workers, "worker threads");
    c->add_option("--preset", a.preset, "S (C=D=2) or L (C=D=4)")->check(CLI::IsMember({"S", "L"}));
    c->add_option("--precision", a.precision, "32 or 64 bit arithmetic")->check(CLI::IsMember({32, 64}));
    c->add_flag("--no-timing", a.no_timing, "write 0 in the telemetry seconds column");
    c->add_option("--telemetry", a.telemetry, "telemetry CSV path (default <out>.telemetry.csv)");
    c->add_option("--log", a.log, "run log path (default <out>.log)");
}

struct Resolved {
    ModelConfig model;
    TrainConfig train;
};

Resolved resolve(const TrainArgs& a, const VideoTensor& v) {
    Resolved r{desk_model_config(v.T, v.H, v.W, a.preset[0]), desk_train_config(v.T, v.H, v.W)};
    try {
        KeyValues kv;
        if (!a.config_file.empty()) kv = read_key_values(a.config_file);
        for (const auto& s : a.sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw std::invalid_argument("--set expects KEY=VALUE, got '" + s + "'");
            KeyValues one = parse_key_values(s);
            for (auto& [k, val] : one) kv[k] = val;
        }
        apply_key_values(r.model, kv);
        apply_key_values(r.train, kv);
        reject_unknown(kv);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (a.iters) r.train.iters = *a.iters;
    if (a.seed) r.train.seed = *a.seed;
    if (a.batch) r.train.batch = *a.batch;
    if (a.eval_every) r.train.eval_every = *a.eval_every;
    if (a.checkpoint_every) r.train.checkpoint_every = *a.checkpoint_every;
    if (a.workers) r.train.workers = *a.workers;
    if (a.no_timing) r.train.timing = false;
    r.model.video_t = v.T;
    r.model.video_h = v.H;
    r.model.video_w = v.W;
    try {
        r.model.validate();
        r.train.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return r;
}

class RunLog {
public:
    explicit RunLog(const std::string& path) : out_(path) {
        if (!out_) throw std::runtime_error("cannot write log file " + path);
    }
    void line(const std::string& s) {
        std::cerr << s << "\n";
        out_ << s << "\n";
        out_.flush();
    }
    void config(const Resolved& r, int precision) {
        line("# resolved configuration");
        line("precision = " + std::to_string(precision));
        std::istringstream m(to_text(r.model) + to_text(r.train));
        for (std::string l; std::getline(m, l);) line(l);
    }

private:
    std::ofstream out_;
};

std::string or_default(const std::string& v, const std::string& def) { return v.empty() ? def : v; }

// Loads either model format; NVPC goes through the decompressor.
template <class S>
NvpModel<S> load_any_model(const std::string& path) {
    const Bytes b = read_file(path);
    if (b.size() >= 4 && std::memcmp(b.data(), "NVPC", 4) == 0) return decompress<S>(CompressedModel{b});
    return deserialize<S>(b).model;
}

template <class S>
void write_checkpoint(NvpModel<S>& m, const std::string& path, std::int64_t iteration) {
    write_file(path + ".tmp", serialize(m, iteration));
    fs::rename(path + ".tmp", path);
}

// ---------------------------------------------------------------------------
// encode / inpaint
// ---------------------------------------------------------------------------
struct EncodeArgs {
    TrainArgs t;
    std::string out;
    std::string resume;
    std::string mask_dir;
    std::string recon_out;
};

template <class S>
int run_encode(const EncodeArgs& a, bool inpaint) {
    const VideoTensor video = load_video(a.t.input);
    Resolved r = resolve(a.t, video);
    RunLog log(or_default(a.t.log, a.out + ".log"));
    std::optional<PixelMask> mask;
    if (inpaint) {
        mask = load_mask(a.mask_dir, video.T, video.H, video.W);
        log.line("# mask excludes " + std::to_string(mask->count_excluded()) + " of " +
                 std::to_string(video.pixel_count()) + " pixels");
    }

    NvpModel<S> model;
    TrainOptions opt;
    opt.mask = mask ? &*mask : nullptr;
    if (!a.resume.empty()) {
        auto loaded = deserialize<S>(read_file(a.resume));
        if (!loaded.iteration) throw std::runtime_error(a.resume + " holds no optimizer state; cannot resume");
        model = std::move(loaded.model);
        r.model = model.config();
        opt.start_iteration = *loaded.iteration;
        log.line("# resuming " + a.resume + " at iteration " + std::to_string(opt.start_iteration));
    } else {
        model = init_model<S>(r.model, static_cast<std::uint64_t>(r.train.seed));
    }
    log.config(r, a.t.precision);
    log.line("# parameters = " + std::to_string(model.parameter_count()));

    const std::string ckpt = a.out + ".ckpt";
    opt.on_checkpoint = [&](std::int64_t done) { write_checkpoint(model, ckpt, done); };
    opt.on_eval = [&](const EvalRecord& e) {
        log.line("iter " + std::to_string(e.iteration) + " loss " + fmt6(e.mse) + " psnr " + fmt6(e.psnr));
    };
    const TrainReport rep = train(model, video, r.train, opt);

    write_file(a.out, serialize(model));
    const std::string tele = or_default(a.t.telemetry, a.out + ".telemetry.csv");
    std::ofstream tcsv(tele);
    if (!tcsv) throw std::runtime_error("cannot write " + tele);
    write_telemetry_csv(tcsv, rep);

    if (!a.recon_out.empty()) {
        VideoTensor rec = reconstruct(model, video);
        rec.clamp01();
        save_frames(rec, a.recon_out, ".png");
    }
    std::cout << "final_psnr=" << fmt6(rep.final_psnr()) << " seconds=" << fmt6(rep.train_seconds)
              << " params=" << model.parameter_count() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// decode
// ---------------------------------------------------------------------------
struct DecodeArgs {
    std::string model, out;
    double scale_xy = 1.0, scale_t = 1.0;
    std::vector<double> t_range;
    int precision = 32;
};

template <class S>
int run_decode(const DecodeArgs& a) {
    const NvpModel<S> m = load_any_model<S>(a.model);
    const ModelConfig& c = m.config();
    if (!(a.scale_xy > 0) || !(a.scale_t > 0)) throw UsageError("scales must be positive");
    RenderLattice lat;
    if (a.t_range.size() == 2) {
        lat.t_lo = a.t_range[0];
        lat.t_hi = a.t_range[1];
        if (!(lat.t_lo >= 0 && lat.t_hi <= 1 && lat.t_lo < lat.t_hi)) throw UsageError("--t-range needs 0 <= a < b <= 1");
    }
    lat.H = std::max(1, static_cast<int>(std::lround(c.video_h * a.scale_xy)));
    lat.W = std::max(1, static_cast<int>(std::lround(c.video_w * a.scale_xy)));
    lat.T = std::max(1, static_cast<int>(std::lround(c.video_t * a.scale_t * (lat.t_hi - lat.t_lo))));
    VideoTensor v = render(m, lat);
    v.clamp01();
    save_frames(v, a.out, ".png");
    std::cout << "frames=" << v.T << " height=" << v.H << " width=" << v.W << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// compress / decompress
// ---------------------------------------------------------------------------
struct CompressArgs {
    std::string model, out, backend = "lossless", preset = "S", verify;
    std::optional<int> scale_xy, scale_xt, scale_yt, crf, fr;
    bool fallback = false;
};

int run_compress(const CompressArgs& a) {
    NvpModel<float> m = load_any_model<float>(a.model);
    CompressOptions opt;
    opt.preset = codec_preset(a.preset[0]);
    if (a.scale_xy) opt.preset.scale_xy = *a.scale_xy;
    if (a.scale_xt) opt.preset.scale_xt = *a.scale_xt;
    if (a.scale_yt) opt.preset.scale_yt = *a.scale_yt;
    if (a.crf) opt.preset.crf = *a.crf;
    if (a.fr) opt.preset.fr = *a.fr;
    if (a.backend == "external") {
        opt.keyframes = GridCodec::image_external;
        opt.sparse = GridCodec::video_external;
    }
    opt.fallback_to_lossless = a.fallback;
    std::cerr << "# codec backend = " << a.backend << "\n# " << to_text(opt.preset);
    const CompressedModel cm = compress(m, opt);
    write_file(a.out, cm.bytes);
    const ModelConfig& c = m.config();
    const double rate = bpp(cm, c.video_t, c.video_h, c.video_w);
    std::cerr << "# " << cm.size_bytes() << " bytes\n";
    if (!a.verify.empty()) {
        const VideoTensor truth = load_video(a.verify);
        const NvpModel<float> back = decompress<float>(cm, opt.tool);
        VideoTensor rec = reconstruct(back, truth);
        rec.clamp01();
        const auto curve = per_frame_curve(rec, truth, false);
        std::cout << "bpp,psnr\n" << fmt6(rate) << "," << fmt6(mean_psnr(curve)) << "\n";
    } else {
        std::cout << "bpp=" << fmt6(rate) << "\n";
    }
    return 0;
}

int run_decompress(const std::string& in, const std::string& out) {
    NvpModel<float> m = decompress<float>(CompressedModel{read_file(in)});
    write_file(out, serialize(m));
    return 0;
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------
int run_metrics(const std::string& recon, const std::string& truth, const std::string& csv, bool no_ssim) {
    const VideoTensor r = load_video(recon), t = load_video(truth);
    const auto curve = per_frame_curve(r, t, !no_ssim);
    if (!csv.empty()) {
        std::ofstream os(csv);
        if (!os) throw std::runtime_error("cannot write " + csv);
        write_curve_csv(os, curve);
    }
    double ssim_mean = 0;
    for (const auto& f : curve) ssim_mean += f.ssim;
    ssim_mean /= static_cast<double>(curve.size());
    std::cout << "psnr=" << fmt6(mean_psnr(curve)) << " psnr_std=" << fmt6(stddev_psnr(curve))
              << " ssim=" << fmt6(ssim_mean) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------
struct AblateArgs {
    TrainArgs t;
    std::string out;
    std::vector<std::string> variants{"full", "keyframes", "sparse", "modulation"};
};

template <class S>
int run_ablate(const AblateArgs& a) {
    const VideoTensor video = load_video(a.t.input);
    Resolved r = resolve(a.t, video);
    RunLog log(or_default(a.t.log, a.out + ".log"));
    log.config(r, a.t.precision);
    TrainConfig tc = r.train;
    tc.eval_every = std::max<std::int64_t>(1, tc.iters / 10);

    std::ofstream csv(a.out);
    if (!csv) throw std::runtime_error("cannot write " + a.out);
    csv << "variant,params,final_psnr,early_psnr,sec_per_iter\n";
    for (const auto& name : a.variants) {
        const AblationVariant v = ablation_variant(r.model, name);
        auto model = init_model<S>(v.config, static_cast<std::uint64_t>(tc.seed));
        const TrainReport rep = train(model, video, tc);
        const double early = rep.records.front().psnr;
        const double per_iter = rep.train_seconds / static_cast<double>(tc.iters);
        log.line("# " + name + ": params=" + std::to_string(v.params) + " final=" + fmt6(rep.final_psnr()) +
                 " early=" + fmt6(early));
        csv << name << ',' << v.params << ',' << fmt6(rep.final_psnr()) << ',' << fmt6(early) << ','
            << fmt6(per_iter) << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------
int run_synth(const std::string& kind, const std::string& out, const std::string& mask_out,
              const std::string& background_out, int T, int H, int W) {
    VideoTensor v;
    if (kind == "constant") {
        v = constant_video(T, H, W, {0.25f, 0.5f, 0.75f});
    } else if (kind == "structured") {
        v = structured_video(T, H, W);
    } else if (kind == "square") {
        const InpaintingScene s = moving_square_scene(T, H, W, std::max(1, std::min(H, W) / 4));
        v = s.observed;
        if (!mask_out.empty()) {
            VideoTensor m(T, H, W);
            for (int t = 0; t < T; ++t)
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x)
                        for (int c = 0; c < 3; ++c) m.at(t, y, x, c) = s.mask.get(t, y, x) ? 1.0f : 0.0f;
            save_frames(m, mask_out, ".png");
        }
        if (!background_out.empty()) save_frames(s.background, background_out, ".png");
    } else {
        throw UsageError("unknown --kind " + kind);
    }
    save_frames(v, out, ".png");
    return 0;
}

template <class F>
int with_precision(int precision, F&& f) {
    return precision == 64 ? f(double{}) : f(float{});
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Latent-grid neural video fields: encode, decode, compress, evaluate"};
    app.require_subcommand(1);

    EncodeArgs enc;
    auto* c_enc = app.add_subcommand("encode", "fit a model to a video");
    add_train_options(c_enc, enc.t);
    c_enc->add_option("--out", enc.out, "output model (.nvpm)")->required();
    c_enc->add_option("--resume", enc.resume, "checkpoint to resume from");
    c_enc->add_option("--recon-out", enc.recon_out, "also write the reconstruction frames here");

    EncodeArgs inp;
    auto* c_inp = app.add_subcommand("inpaint", "fit with masked pixels excluded, then decode full frames");
    add_train_options(c_inp, inp.t);
    c_inp->add_option("--out", inp.out, "output model (.nvpm)")->required();
    c_inp->add_option("--mask", inp.mask_dir, "mask frames (white = exclude)")->required();
    c_inp->add_option("--recon-out", inp.recon_out, "reconstruction frames directory")->required();

    DecodeArgs dec;
    auto* c_dec = app.add_subcommand("decode", "render frames from a model");
    c_dec->add_option("--model", dec.model, ".nvpm or .nvpc model")->required();
    c_dec->add_option("--out", dec.out, "output frames directory")->required();
    c_dec->add_option("--scale-xy", dec.scale_xy, "spatial scale factor");
    c_dec->add_option("--scale-t", dec.scale_t, "temporal scale factor");
    c_dec->add_option("--t-range", dec.t_range, "time interval a b within [0,1]")->expected(2);
    c_dec->add_option("--precision", dec.precision, "32 or 64")->check(CLI::IsMember({32, 64}));

    CompressArgs cmp;
    auto* c_cmp = app.add_subcommand("compress", "quantize and encode the latent grids");
    c_cmp->add_option("--model", cmp.model, "input model")->required();
    c_cmp->add_option("--out", cmp.out, "output (.nvpc)")->required();
    c_cmp->add_option("--backend", cmp.backend, "lossless or external")
        ->check(CLI::IsMember({"lossless", "external"}));
    c_cmp->add_option("--preset", cmp.preset, "codec defaults S or L")->check(CLI::IsMember({"S", "L"}));
    c_cmp->add_option("--scale-xy", cmp.scale_xy, "JPEG quality scale for xy keyframes");
    c_cmp->add_option("--scale-xt", cmp.scale_xt, "JPEG quality scale for xt keyframes");
    c_cmp->add_option("--scale-yt", cmp.scale_yt, "JPEG quality scale for yt keyframes");
    c_cmp->add_option("--crf", cmp.crf, "HEVC CRF for the sparse grid");
    c_cmp->add_option("--fr", cmp.fr, "HEVC frame rate for the sparse grid");
    c_cmp->add_flag("--fallback", cmp.fallback, "use the lossless backend if the external tool is missing");
    c_cmp->add_option("--verify", cmp.verify, "ground-truth video; print bpp,psnr as CSV");

    std::string dcm_in, dcm_out;
    auto* c_dcm = app.add_subcommand("decompress", "turn a .nvpc back into a .nvpm");
    c_dcm->add_option("--model", dcm_in, "input (.nvpc)")->required();
    c_dcm->add_option("--out", dcm_out, "output (.nvpm)")->required();

    std::string m_recon, m_truth, m_csv;
    bool m_no_ssim = false;
    auto* c_met = app.add_subcommand("metrics", "per-frame PSNR/SSIM of a reconstruction");
    c_met->add_option("--recon", m_recon, "reconstruction (frames dir or .nvpv)")->required();
    c_met->add_option("--truth", m_truth, "ground truth (frames dir or .nvpv)")->required();
    c_met->add_option("--csv", m_csv, "write frame,psnr,ssim CSV");
    c_met->add_flag("--no-ssim", m_no_ssim, "skip SSIM");

    AblateArgs abl;
    auto* c_abl = app.add_subcommand("ablate", "train matched-parameter variants and compare");
    add_train_options(c_abl, abl.t);
    c_abl->add_option("--out", abl.out, "output CSV")->required();
    c_abl->add_option("--variants", abl.variants, "comma list of full,keyframes,sparse,modulation,concat,upsample")
        ->delimiter(',');

    std::string kf_model, kf_out;
    auto* c_kf = app.add_subcommand("export-keyframes", "write keyframe channels as grayscale images");
    c_kf->add_option("--model", kf_model, "input model")->required();
    c_kf->add_option("--out", kf_out, "output directory")->required();

    std::string s_kind = "structured", s_out, s_mask, s_bg;
    int s_t = 16, s_h = 64, s_w = 64;
    auto* c_syn = app.add_subcommand("synth", "write a synthetic test video");
    c_syn->add_option("--kind", s_kind, "constant, structured or square");
    c_syn->add_option("--out", s_out, "output frames directory")->required();
    c_syn->add_option("--mask-out", s_mask, "square: write the occluder mask here");
    c_syn->add_option("--background-out", s_bg, "square: write the clean background here");
    c_syn->add_option("--frames", s_t, "frame count");
    c_syn->add_option("--height", s_h, "frame height");
    c_syn->add_option("--width", s_w, "frame width");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*c_enc) return with_precision(enc.t.precision, [&](auto s) { return run_encode<decltype(s)>(enc, false); });
        if (*c_inp) return with_precision(inp.t.precision, [&](auto s) { return run_encode<decltype(s)>(inp, true); });
        if (*c_dec) return with_precision(dec.precision, [&](auto s) { return run_decode<decltype(s)>(dec); });
        if (*c_cmp) return run_compress(cmp);
        if (*c_dcm) return run_decompress(dcm_in, dcm_out);
        if (*c_met) return run_metrics(m_recon, m_truth, m_csv, m_no_ssim);
        if (*c_abl) return with_precision(abl.t.precision, [&](auto s) { return run_ablate<decltype(s)>(abl); });
        if (*c_kf) {
            const auto files = export_keyframes(load_any_model<float>(kf_model), kf_out);
            std::cout << "images=" << files.size() << "\n";
            return 0;
        }
        if (*c_syn) return run_synth(s_kind, s_out, s_mask, s_bg, s_t, s_h, s_w);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
