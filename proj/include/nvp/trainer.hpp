#pragma once

// Fitting a coordinate model to a video: initialization, the batched MSE
// objective, the AdamW + cosine loop, evaluation and telemetry.
//
// A "coordinate model" is any type with
//   forward(coords, tape) -> batch x 3, backward_dense(tape, dOut, grads, dz),
//   scatter_latent(coords, dz), dense_params(), params(), touch(), predict().
// NvpModel, SirenModel and FfnModel all qualify.

#include "nvp/baselines.hpp"
#include "nvp/config.hpp"
#include "nvp/diff_core.hpp"
#include "nvp/metrics.hpp"
#include "nvp/neural_field.hpp"
#include "nvp/video_io.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace nvp {

inline constexpr double kGridInitRange = 1e-4;

template <class S>
NvpModel<S> init_model(const ModelConfig& cfg, std::uint64_t seed) {
    NvpModel<S> m(cfg);
    std::uint64_t stream = 1;
    for (auto* p : m.grid_params()) {
        Rng rng(seed, stream++);
        fill_uniform(p->value, -kGridInitRange, kGridInitRange, rng);
    }
    Rng head(seed, 1u << 20);
    if (cfg.modulation)
        m.field().init(head);
    else
        m.plain_head().init(head);
    return m;
}

// Parameter count of the model a config describes.
inline std::size_t parameter_count(const ModelConfig& cfg) {
    NvpModel<float> m(cfg);
    return m.parameter_count();
}

// ---------------------------------------------------------------------------
// Gradient accumulation
// ---------------------------------------------------------------------------

// Loss = mean over batch and channels of (rgb - target)^2. Gradients are
// added to every ParamBlock::grad. The batch is cut into fixed-size chunks;
// chunk results are reduced in chunk order, so the result does not depend on
// the worker count.
template <class Model>
double accumulate_gradients(Model& model, const PixelBatch& batch, int chunk = 128, int workers = 1) {
    using S = typename Model::Scalar;
    const std::size_t n = batch.size();
    require(n >= 1, "accumulate_gradients: empty batch");
    require(chunk >= 1 && workers >= 1, "accumulate_gradients: chunk and workers must be >= 1");
    const std::size_t n_chunks = (n + chunk - 1) / chunk;
    const S scale = static_cast<S>(2.0 / (3.0 * static_cast<double>(n)));

    struct ChunkResult {
        GradBuffer<S> grads;
        Matrix<S> dz;
        double sq_err = 0.0;
    };

    const Model& cmodel = model;
    auto run = [&](std::size_t c, ChunkResult& r) {
        const std::size_t lo = c * chunk, hi = std::min(n, lo + chunk);
        std::span<const Coordinate> coords(batch.coords.data() + lo, hi - lo);
        typename Model::Tape tape;
        Matrix<S> out = cmodel.forward(coords, tape);
        Matrix<S> d_out(out.rows(), 3);
        double se = 0.0;
        for (Eigen::Index i = 0; i < out.rows(); ++i)
            for (int ch = 0; ch < 3; ++ch) {
                const S diff = out(i, ch) - static_cast<S>(batch.targets[lo + i][ch]);
                se += static_cast<double>(diff) * static_cast<double>(diff);
                d_out(i, ch) = scale * diff;
            }
        r.sq_err = se;
        r.grads = make_grad_buffer<S>(cmodel.dense_params());
        cmodel.backward_dense(tape, d_out, r.grads, r.dz);
    };

    auto dense = model.dense_params();
    double total = 0.0;
    auto reduce = [&](std::size_t c, ChunkResult& r) {
        for (std::size_t k = 0; k < dense.size(); ++k) dense[k]->grad += r.grads[k];
        const std::size_t lo = c * chunk, hi = std::min(n, lo + chunk);
        if (r.dz.size() > 0) model.scatter_latent(std::span<const Coordinate>(batch.coords.data() + lo, hi - lo), r.dz);
        total += r.sq_err;
    };

    if (workers == 1 || n_chunks == 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) {
            ChunkResult r;
            run(c, r);
            reduce(c, r);
        }
    } else {
        std::vector<ChunkResult> results(n_chunks);
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t c = next++; c < n_chunks; c = next++) run(c, results[c]);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
        for (std::size_t c = 0; c < n_chunks; ++c) reduce(c, results[c]);
    }
    return total / (3.0 * static_cast<double>(n));
}

template <class Model>
void zero_grads(Model& model) {
    for (auto* p : model.params()) p->zero_grad();
}

// ---------------------------------------------------------------------------
// Rendering and evaluation
// ---------------------------------------------------------------------------
struct RenderLattice {
    int T = 1, H = 1, W = 1;
    double t_lo = 0.0, t_hi = 1.0;
};

// Evaluates the model at cell centres of a T x H x W lattice over
// [0,1] x [0,1] x [t_lo, t_hi]. Output is unclamped.
template <class Model>
VideoTensor render(const Model& model, const RenderLattice& lat, int chunk = 4096) {
    require(lat.T >= 1 && lat.H >= 1 && lat.W >= 1, "render: lattice must be non-empty");
    require(lat.t_lo >= 0.0 && lat.t_hi <= 1.0 && lat.t_lo <= lat.t_hi, "render: time range must lie in [0,1]");
    VideoTensor out(lat.T, lat.H, lat.W);
    const std::size_t n = out.pixel_count();
    const std::size_t hw = static_cast<std::size_t>(lat.H) * lat.W;
    std::vector<Coordinate> coords;
    for (std::size_t lo = 0; lo < n; lo += chunk) {
        const std::size_t hi = std::min(n, lo + chunk);
        coords.clear();
        for (std::size_t p = lo; p < hi; ++p) {
            const int t = static_cast<int>(p / hw), y = static_cast<int>((p % hw) / lat.W), x = static_cast<int>(p % lat.W);
            Coordinate c = pixel_to_coord(t, y, x, lat.T, lat.H, lat.W);
            c.t = lat.t_lo + (lat.t_hi - lat.t_lo) * c.t;
            coords.push_back(c);
        }
        const auto rgb = model.predict(coords);
        for (std::size_t i = 0; i < coords.size(); ++i)
            for (int ch = 0; ch < 3; ++ch)
                out.data[(lo + i) * 3 + ch] = static_cast<float>(rgb(static_cast<Eigen::Index>(i), ch));
    }
    return out;
}

template <class Model>
VideoTensor reconstruct(const Model& model, const VideoTensor& like) {
    return render(model, RenderLattice{like.T, like.H, like.W});
}

// Frame-wise PSNR of the raw model output, averaged over frames.
template <class Model>
double evaluate(const Model& model, const VideoTensor& v) {
    return mean_psnr(per_frame_curve(reconstruct(model, v), v, false));
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------
struct EvalRecord {
    std::int64_t iteration = 0;
    double seconds = 0.0;
    double mse = 0.0;   // training-batch loss at this iteration
    double psnr = 0.0;  // full-video PSNR after this iteration
};

struct TrainReport {
    std::vector<EvalRecord> records;
    double train_seconds = 0.0;

    double final_psnr() const { return records.empty() ? 0.0 : records.back().psnr; }
};

inline void write_telemetry_csv(std::ostream& os, const TrainReport& r) {
    os << "iteration,seconds,mse,psnr\n";
    for (const auto& e : r.records)
        os << e.iteration << ',' << fmt6(e.seconds) << ',' << fmt6(e.mse) << ',' << fmt6(e.psnr) << '\n';
}

struct TrainOptions {
    const PixelMask* mask = nullptr;
    std::int64_t start_iteration = 0;  // resume point; iterations [start, iters) run
    // Called after iteration `it` (1-based count of completed steps).
    std::function<void(std::int64_t)> on_checkpoint;
    std::function<void(const EvalRecord&)> on_eval;
};

template <class Model>
TrainReport train(Model& model, const VideoTensor& video, const TrainConfig& cfg, const TrainOptions& opt = {}) {
    cfg.validate();
    require(opt.start_iteration >= 0 && opt.start_iteration <= cfg.iters, "train: bad start iteration");
    using clock = std::chrono::steady_clock;
    PixelSampler sampler(video, opt.mask);
    auto params = model.params();
    TrainReport report;
    double elapsed = 0.0;

    for (std::int64_t it = opt.start_iteration; it < cfg.iters; ++it) {
        const auto t0 = clock::now();
        Rng rng(static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(it) + 1);
        const PixelBatch batch = sampler.sample(static_cast<std::size_t>(cfg.batch), rng);
        const double loss = accumulate_gradients(model, batch, cfg.chunk, cfg.workers);
        if (!std::isfinite(loss))
            throw std::runtime_error("training diverged: non-finite loss at iteration " + std::to_string(it));
        const double lr = cosine_lr(it, cfg.iters, cfg.lr, cfg.lr_min);
        for (auto* p : params) {
            adamw_step(*p, lr, cfg.weight_decay);
            p->zero_grad();
        }
        model.touch();
        elapsed += std::chrono::duration<double>(clock::now() - t0).count();

        const std::int64_t done = it + 1;
        const bool last = done == cfg.iters;
        if (last || (cfg.eval_every > 0 && done % cfg.eval_every == 0)) {
            EvalRecord rec{done, cfg.timing ? elapsed : 0.0, loss, evaluate(model, video)};
            report.records.push_back(rec);
            if (opt.on_eval) opt.on_eval(rec);
        }
        if (opt.on_checkpoint && cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && !last)
            opt.on_checkpoint(done);
    }
    report.train_seconds = elapsed;
    return report;
}

// ---------------------------------------------------------------------------
// Ablation variants with matched parameter counts
// ---------------------------------------------------------------------------
struct AblationVariant {
    std::string name;
    ModelConfig config;
    std::size_t params = 0;
};

// `component` is one of: full, keyframes, sparse, modulation, concat,
// upsample. The first three remove that component and grow the remaining
// latent dims (C and/or D) to the integer choice closest to the full model's
// parameter count; concat collapses the sparse window to 1x1x1 and upsample
// flips trilinear upsampling, both without rebalancing.
inline AblationVariant ablation_variant(const ModelConfig& full, const std::string& component) {
    const std::size_t target = parameter_count(full);
    AblationVariant v{component, full, 0};
    auto best_of = [&](auto make, int max_k) {
        std::size_t best_diff = static_cast<std::size_t>(-1);
        ModelConfig best = full;
        for (int k = 1; k <= max_k; ++k) {
            ModelConfig c = make(k);
            const std::size_t n = parameter_count(c);
            const std::size_t diff = n > target ? n - target : target - n;
            if (diff < best_diff) {
                best_diff = diff;
                best = c;
            }
            if (n > target) break;
        }
        return best;
    };
    if (component == "full") {
    } else if (component == "keyframes") {
        require(full.sparse, "ablation: removing keyframes needs the sparse grid");
        v.config = best_of([&](int k) { ModelConfig c = full; c.keyframes = false; c.sparse_dim = k; return c; }, 512);
    } else if (component == "sparse") {
        require(full.keyframes, "ablation: removing the sparse grid needs keyframes");
        v.config = best_of([&](int k) { ModelConfig c = full; c.sparse = false; c.kf_dim = k; return c; }, 512);
    } else if (component == "modulation") {
        const int g = std::gcd(full.kf_dim, full.sparse_dim);
        v.config = best_of([&](int k) {
            ModelConfig c = full;
            c.modulation = false;
            c.kf_dim = k * full.kf_dim / g;
            c.sparse_dim = k * full.sparse_dim / g;
            return c;
        }, 512);
    } else if (component == "concat") {
        v.config.window_x = v.config.window_y = v.config.window_t = 1;
    } else if (component == "upsample") {
        v.config.upsample = !full.upsample;
    } else {
        throw std::invalid_argument("unknown ablation variant: " + component);
    }
    v.config.validate();
    v.params = parameter_count(v.config);
    return v;
}

}  // namespace nvp
