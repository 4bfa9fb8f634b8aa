#pragma once

// Learnable positional features.
//
// KeyframeGrid: L levels of 2D code grids for one axis pair. Level l (0-based)
// has floor(gamma^l * base) cells per axis and is read with bilinear
// interpolation; level outputs are concatenated coarse to fine.
//
// SparseGrid3D: one small 3D code grid read through a forward window of
// wx * wy * wt taps anchored at the containing cell, optionally with each tap
// trilinearly interpolated.
//
// All indices are 0-based and clamped to the grid, including the +1
// neighbours, so coordinate 1.0 reads the last code.

#include "nvp/diff_core.hpp"
#include "nvp/video_io.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace nvp {

enum class AxisPair { xy, xt, yt };

inline const char* axis_name(AxisPair a) {
    switch (a) {
        case AxisPair::xy: return "xy";
        case AxisPair::xt: return "xt";
        case AxisPair::yt: return "yt";
    }
    return "?";
}

// The two coordinates a keyframe reads: xy -> (x, y), xt -> (x, t), yt -> (y, t).
inline std::array<double, 2> axis_coords(AxisPair a, const Coordinate& c) {
    switch (a) {
        case AxisPair::xy: return {c.x, c.y};
        case AxisPair::xt: return {c.x, c.t};
        case AxisPair::yt: return {c.y, c.t};
    }
    return {0, 0};
}

inline void check_unit(double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0))
        throw std::out_of_range(std::string(what) + ": coordinate " + std::to_string(v) + " outside [0,1]");
}

inline int clamp_index(long long i, int n) {
    return static_cast<int>(i < 0 ? 0 : (i >= n ? n - 1 : i));
}

// floor(gamma^level * base), guarded against products that are integers in
// exact arithmetic landing just below.
inline int level_resolution(double gamma, int base, int level) {
    const double r = std::floor(std::pow(gamma, level) * base + 1e-9);
    return std::max(1, static_cast<int>(r));
}

template <class S>
class KeyframeGrid {
public:
    KeyframeGrid() = default;

    KeyframeGrid(AxisPair axes, int levels, double gamma, int base_a, int base_b, int dim)
        : axes_(axes), gamma_(gamma), base_a_(base_a), base_b_(base_b), dim_(dim) {
        require(levels >= 1, "KeyframeGrid: levels must be >= 1");
        require(gamma > 1.0, "KeyframeGrid: gamma must be > 1");
        require(base_a >= 1 && base_b >= 1, "KeyframeGrid: base resolution must be >= 1");
        require(dim >= 1, "KeyframeGrid: latent dim must be >= 1");
        for (int l = 0; l < levels; ++l) {
            const int ra = level_resolution(gamma, base_a, l);
            const int rb = level_resolution(gamma, base_b, l);
            res_.push_back({ra, rb});
            levels_.emplace_back(std::string("kf_") + axis_name(axes) + "_l" + std::to_string(l),
                                 static_cast<Eigen::Index>(ra) * rb, dim);
        }
    }

    AxisPair axes() const { return axes_; }
    int level_count() const { return static_cast<int>(levels_.size()); }
    int dim() const { return dim_; }
    double gamma() const { return gamma_; }
    int output_size() const { return level_count() * dim_; }
    std::array<int, 2> resolution(int level) const { return res_.at(level); }

    // Codes of level l: row (i * res_b + j) holds u_ij.
    ParamBlock<S>& level(int l) { return levels_.at(l); }
    const ParamBlock<S>& level(int l) const { return levels_.at(l); }
    std::vector<ParamBlock<S>>& levels() { return levels_; }
    const std::vector<ParamBlock<S>>& levels() const { return levels_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : levels_) n += static_cast<std::size_t>(p.size());
        return n;
    }

    // Writes output_size() values to out.
    void lookup(double a, double b, S* out) const {
        check_unit(a, "keyframe_lookup");
        check_unit(b, "keyframe_lookup");
        for (int l = 0; l < level_count(); ++l) {
            const Taps tp = taps(l, a, b);
            const auto& U = levels_[l].value;
            S* o = out + l * dim_;
            for (int c = 0; c < dim_; ++c) {
                S v = S(0);
                for (int k = 0; k < 4; ++k) v += tp.w[k] * U(tp.row[k], c);
                o[c] = v;
            }
        }
    }

    std::vector<S> lookup(double a, double b) const {
        std::vector<S> out(output_size());
        lookup(a, b, out.data());
        return out;
    }

    // Adds the adjoint of lookup into the level gradients.
    void scatter(double a, double b, const S* upstream) {
        check_unit(a, "keyframe_scatter");
        check_unit(b, "keyframe_scatter");
        for (int l = 0; l < level_count(); ++l) {
            const Taps tp = taps(l, a, b);
            auto& G = levels_[l].grad;
            const S* u = upstream + l * dim_;
            for (int k = 0; k < 4; ++k)
                for (int c = 0; c < dim_; ++c) G(tp.row[k], c) += tp.w[k] * u[c];
        }
    }

private:
    struct Taps {
        std::array<Eigen::Index, 4> row;
        std::array<S, 4> w;
    };

    Taps taps(int l, double a, double b) const {
        const auto [ra, rb] = res_[l];
        const double fa = a * ra, fb = b * rb;
        const double ma = std::floor(fa), mb = std::floor(fb);
        const S ta = static_cast<S>(fa - ma), tb = static_cast<S>(fb - mb);
        const int i0 = clamp_index(static_cast<long long>(ma), ra), i1 = clamp_index(static_cast<long long>(ma) + 1, ra);
        const int j0 = clamp_index(static_cast<long long>(mb), rb), j1 = clamp_index(static_cast<long long>(mb) + 1, rb);
        Taps t;
        t.row = {static_cast<Eigen::Index>(i0) * rb + j0, static_cast<Eigen::Index>(i0) * rb + j1,
                 static_cast<Eigen::Index>(i1) * rb + j0, static_cast<Eigen::Index>(i1) * rb + j1};
        t.w = {(S(1) - ta) * (S(1) - tb), (S(1) - ta) * tb, ta * (S(1) - tb), ta * tb};
        return t;
    }

    AxisPair axes_ = AxisPair::xy;
    double gamma_ = 1.35;
    int base_a_ = 16, base_b_ = 16;
    int dim_ = 1;
    std::vector<std::array<int, 2>> res_;
    std::vector<ParamBlock<S>> levels_;
};

struct SparseShape {
    int nx = 1, ny = 1, nt = 1;  // cells along x, y, t
};

struct Window {
    int wx = 1, wy = 1, wt = 1;
    int taps() const { return wx * wy * wt; }
};

template <class S>
class SparseGrid3D {
public:
    SparseGrid3D() = default;

    SparseGrid3D(SparseShape shape, int dim, Window window, bool upsample)
        : shape_(shape), dim_(dim), window_(window), upsample_(upsample) {
        require(shape.nx >= 1 && shape.ny >= 1 && shape.nt >= 1, "SparseGrid3D: shape must be positive");
        require(dim >= 1, "SparseGrid3D: latent dim must be >= 1");
        require(window.wx >= 1 && window.wy >= 1 && window.wt >= 1, "SparseGrid3D: window must be positive");
        require(window.wx <= shape.nx && window.wy <= shape.ny && window.wt <= shape.nt,
                "SparseGrid3D: window larger than grid");
        codes_ = ParamBlock<S>("sparse_xyt", static_cast<Eigen::Index>(shape.nx) * shape.ny * shape.nt, dim);
    }

    const SparseShape& shape() const { return shape_; }
    const Window& window() const { return window_; }
    int dim() const { return dim_; }
    bool upsample() const { return upsample_; }
    int output_size() const { return window_.taps() * dim_; }
    std::size_t parameter_count() const { return static_cast<std::size_t>(codes_.size()); }

    // Row of code (ix, iy, it): frames-major so one t-slice is contiguous.
    Eigen::Index row(int ix, int iy, int it) const {
        return (static_cast<Eigen::Index>(it) * shape_.ny + iy) * shape_.nx + ix;
    }

    ParamBlock<S>& codes() { return codes_; }
    const ParamBlock<S>& codes() const { return codes_; }

    void lookup(const Coordinate& c, S* out) const {
        check_coord(c, "sparse_lookup");
        visit(c, [&](int tap, const Corner* corners, int count) {
            S* o = out + tap * dim_;
            for (int d = 0; d < dim_; ++d) o[d] = S(0);
            for (int k = 0; k < count; ++k)
                for (int d = 0; d < dim_; ++d) o[d] += corners[k].w * codes_.value(corners[k].row, d);
        });
    }

    std::vector<S> lookup(const Coordinate& c) const {
        std::vector<S> out(output_size());
        lookup(c, out.data());
        return out;
    }

    void scatter(const Coordinate& c, const S* upstream) {
        check_coord(c, "sparse_scatter");
        visit(c, [&](int tap, const Corner* corners, int count) {
            const S* u = upstream + tap * dim_;
            for (int k = 0; k < count; ++k)
                for (int d = 0; d < dim_; ++d) codes_.grad(corners[k].row, d) += corners[k].w * u[d];
        });
    }

private:
    struct Corner {
        Eigen::Index row;
        S w;
    };

    static void check_coord(const Coordinate& c, const char* what) {
        check_unit(c.x, what);
        check_unit(c.y, what);
        check_unit(c.t, what);
    }

    // Calls f(tap_index, corners, corner_count) for every window tap in
    // i-major, then j, then q order.
    template <class F>
    void visit(const Coordinate& c, F&& f) const {
        const auto [nx, ny, nt] = shape_;
        Corner corners[8];
        if (!upsample_) {
            const long long m = static_cast<long long>(std::floor(c.x * nx));
            const long long n = static_cast<long long>(std::floor(c.y * ny));
            const long long k = static_cast<long long>(std::floor(c.t * nt));
            int tap = 0;
            for (int i = 0; i < window_.wx; ++i)
                for (int j = 0; j < window_.wy; ++j)
                    for (int q = 0; q < window_.wt; ++q, ++tap) {
                        corners[0] = {row(clamp_index(m + i, nx), clamp_index(n + j, ny), clamp_index(k + q, nt)), S(1)};
                        f(tap, corners, 1);
                    }
            return;
        }
        const double px0 = c.x * nx - 0.5, py0 = c.y * ny - 0.5, pt0 = c.t * nt - 0.5;
        int tap = 0;
        for (int i = 0; i < window_.wx; ++i)
            for (int j = 0; j < window_.wy; ++j)
                for (int q = 0; q < window_.wt; ++q, ++tap) {
                    const double px = px0 + i, py = py0 + j, pt = pt0 + q;
                    const double fx = std::floor(px), fy = std::floor(py), ft = std::floor(pt);
                    const S ax = static_cast<S>(px - fx), ay = static_cast<S>(py - fy), at = static_cast<S>(pt - ft);
                    const long long bx = static_cast<long long>(fx), by = static_cast<long long>(fy),
                                    bt = static_cast<long long>(ft);
                    int k = 0;
                    for (int dx = 0; dx < 2; ++dx)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dt = 0; dt < 2; ++dt, ++k) {
                                const S w = (dx ? ax : S(1) - ax) * (dy ? ay : S(1) - ay) * (dt ? at : S(1) - at);
                                corners[k] = {row(clamp_index(bx + dx, nx), clamp_index(by + dy, ny),
                                                  clamp_index(bt + dt, nt)),
                                              w};
                            }
                    f(tap, corners, 8);
                }
    }

    SparseShape shape_;
    int dim_ = 1;
    Window window_;
    bool upsample_ = false;
    ParamBlock<S> codes_;
};

}  // namespace nvp
