#pragma once

// Finite-difference and adjoint oracles shared by the unit tests and the
// acceptance runner.

#include "nvp/nvp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace nvp::testing {

inline constexpr double kFdStep = 1e-5;
// Gradients smaller than this are compared on an absolute scale; central
// differences of an O(1) loss carry ~1e-11 rounding noise.
inline constexpr double kRelFloor = 1e-6;

inline double rel_err(double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), kRelFloor});
}

struct GradCheck {
    double max_rel = 0.0;
    std::size_t checked = 0;
    std::string worst;

    void add(double analytic, double numeric, const std::string& where) {
        const double e = rel_err(analytic, numeric);
        ++checked;
        if (e > max_rel || !std::isfinite(e)) {
            max_rel = std::isfinite(e) ? e : INFINITY;
            worst = where + " analytic=" + std::to_string(analytic) + " numeric=" + std::to_string(numeric);
        }
    }
    void merge(const GradCheck& o) {
        checked += o.checked;
        if (o.max_rel > max_rel) {
            max_rel = o.max_rel;
            worst = o.worst;
        }
    }
};

// Central difference of f at one entry of a matrix.
template <class F>
double central_diff(double& entry, F&& f, double h = kFdStep) {
    const double saved = entry;
    entry = saved + h;
    const double up = f();
    entry = saved - h;
    const double down = f();
    entry = saved;
    return (up - down) / (2 * h);
}

inline double weighted_sum(const Matrix<double>& out, const Matrix<double>& w) { return out.cwiseProduct(w).sum(); }

inline std::vector<Coordinate> random_coords(std::size_t n, Rng& rng) {
    std::vector<Coordinate> c(n);
    for (auto& p : c) p = {rng.uniform(), rng.uniform(), rng.uniform()};
    return c;
}

inline Matrix<double> random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -1, double hi = 1) {
    Matrix<double> m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
    return m;
}

// Checks every parameter class of a coordinate model against central
// differences of L = sum(w .* model(coords)). Up to `per_block` entries per
// parameter block are probed (all of them when the block is smaller).
template <class Model>
GradCheck check_model_gradients(Model& m, const std::vector<Coordinate>& coords, Rng& rng, int per_block = 12) {
    const Matrix<double> w = random_matrix(static_cast<Eigen::Index>(coords.size()), 3, rng);
    for (auto* p : m.params()) p->zero_grad();
    typename Model::Tape tape;
    const Matrix<double> out = m.forward(coords, tape);
    auto dense = m.dense_params();
    GradBuffer<double> gb;
    for (auto* p : dense) gb.push_back(Matrix<double>::Zero(p->rows(), p->cols()));
    Matrix<double> dz;
    m.backward_dense(tape, w, gb, dz);
    m.scatter_latent(coords, dz);
    for (std::size_t k = 0; k < dense.size(); ++k) dense[k]->grad += gb[k];

    auto loss = [&] { return weighted_sum(m.predict(coords), w); };
    GradCheck gc;
    for (auto* p : m.params()) {
        const Eigen::Index n = p->size();
        std::vector<Eigen::Index> idx;
        if (n <= per_block) {
            for (Eigen::Index i = 0; i < n; ++i) idx.push_back(i);
        } else {
            for (int k = 0; k < per_block; ++k) idx.push_back(static_cast<Eigen::Index>(rng.below(n)));
        }
        for (Eigen::Index i : idx) {
            const double num = central_diff(p->value.data()[i], loss);
            gc.add(p->grad.data()[i], num, p->name + "[" + std::to_string(i) + "]");
        }
    }
    return gc;
}

// A random small NvpModel configuration exercising every switch.
inline ModelConfig random_model_config(Rng& rng) {
    ModelConfig c;
    c.video_t = 4;
    c.video_h = 6;
    c.video_w = 6;
    const int which = static_cast<int>(rng.below(4));  // 0: both, 1: keyframes only, 2: sparse only, 3: both
    c.keyframes = which != 2;
    c.sparse = which != 1;
    c.kf_levels = 1 + static_cast<int>(rng.below(3));
    c.kf_gamma = 1.2 + rng.uniform() * 0.6;
    c.kf_base = 2 + static_cast<int>(rng.below(4));
    c.kf_dim = 1 + static_cast<int>(rng.below(3));
    c.sparse_nx = 2 + static_cast<int>(rng.below(4));
    c.sparse_ny = 2 + static_cast<int>(rng.below(4));
    c.sparse_nt = 2 + static_cast<int>(rng.below(3));
    c.sparse_dim = 1 + static_cast<int>(rng.below(3));
    c.window_x = 1 + static_cast<int>(rng.below(std::min(3, c.sparse_nx)));
    c.window_y = 1 + static_cast<int>(rng.below(std::min(3, c.sparse_ny)));
    c.window_t = 1 + static_cast<int>(rng.below(std::min(2, c.sparse_nt)));
    c.upsample = rng.below(2) == 1;
    c.modulation = rng.below(4) != 0;
    c.depth = 2 + static_cast<int>(rng.below(3));
    c.hidden = 3 + static_cast<int>(rng.below(8));
    c.sigmas.clear();
    for (int k = 0; k < c.depth - 1; ++k) c.sigmas.push_back(k == 0 ? 1.0 + rng.uniform() * 29.0 : 0.5 + rng.uniform());
    c.leaky_slope = 0.01 + rng.uniform() * 0.2;
    return c;
}

// Model with head initialized normally and grids filled with O(1) values.
inline NvpModel<double> random_model(const ModelConfig& cfg, Rng& rng) {
    NvpModel<double> m = init_model<double>(cfg, rng.next_u64());
    for (auto* p : m.grid_params()) p->value = random_matrix(p->rows(), p->cols(), rng);
    return m;
}

// <scatter(e), G> versus <e, lookup(G)> over many coordinates, for a lookup
// of width `out_width`. Returns the relative mismatch.
template <class Lookup, class Scatter>
double adjoint_mismatch(ParamBlock<double>& grid, int out_width, Lookup&& lookup, Scatter&& scatter,
                        const std::vector<Coordinate>& coords, Rng& rng) {
    grid.value = random_matrix(grid.rows(), grid.cols(), rng);
    grid.zero_grad();
    double lhs_dot = 0.0, scale = 0.0;
    std::vector<double> e(out_width), v(out_width);
    for (const auto& c : coords) {
        for (auto& x : e) x = rng.uniform(-1, 1);
        lookup(c, v.data());
        for (int k = 0; k < out_width; ++k) {
            lhs_dot += e[k] * v[k];
            scale += std::abs(e[k] * v[k]);
        }
        scatter(c, e.data());
    }
    const double rhs_dot = grid.grad.cwiseProduct(grid.value).sum();
    return std::abs(lhs_dot - rhs_dot) / std::max(scale, 1e-300);
}

}  // namespace nvp::testing
