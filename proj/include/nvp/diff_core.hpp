#pragma once

// Minimal numerical kernel: dense matrices, differentiable primitives with
// hand-derived backward passes, AdamW, cosine annealing and a counter-based RNG.
//
// Batched ops use the "samples as rows" convention: an activation matrix has
// one row per sample and one column per feature. A single vector is the
// one-row case.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace nvp {

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

inline void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

template <class S>
bool all_finite(const Matrix<S>& m) {
    return m.allFinite();
}

// One trainable tensor together with its gradient and Adam moments.
template <class S>
struct ParamBlock {
    std::string name;
    Matrix<S> value;
    Matrix<S> grad;
    Matrix<S> adam_m;
    Matrix<S> adam_v;
    std::int64_t step_count = 0;

    ParamBlock() = default;
    ParamBlock(std::string n, Eigen::Index rows, Eigen::Index cols)
        : name(std::move(n)),
          value(Matrix<S>::Zero(rows, cols)),
          grad(Matrix<S>::Zero(rows, cols)),
          adam_m(Matrix<S>::Zero(rows, cols)),
          adam_v(Matrix<S>::Zero(rows, cols)) {}

    Eigen::Index rows() const { return value.rows(); }
    Eigen::Index cols() const { return value.cols(); }
    Eigen::Index size() const { return value.size(); }
    void zero_grad() { grad.setZero(); }
};

// ---------------------------------------------------------------------------
// Rng: counter-based generator. Each draw hashes (seed, stream, counter) with
// the splitmix64 finalizer, so the stream is identical on every platform and
// independent streams can be opened without sharing state.
// ---------------------------------------------------------------------------
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64() {
        std::uint64_t z = seed_ * 0x9E3779B97F4A7C15ull;
        z ^= mix(stream_ + 0xD1B54A32D192ED03ull);
        z += (counter_++) * 0xBF58476D1CE4E5B9ull;
        return mix(z);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Multiply-shift; bias is below n / 2^64.
    std::uint64_t below(std::uint64_t n) {
        require(n > 0, "Rng::below: n must be positive");
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller (one value per call, no caching).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 0x1.0p-60) u1 = 0x1.0p-60;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// Affine map. X: batch x in, W: out x in, b: out x 1. Returns batch x out.
// ---------------------------------------------------------------------------
template <class S>
Matrix<S> linear_forward(const Matrix<S>& X, const Matrix<S>& W, const Matrix<S>& b) {
    require(X.cols() == W.cols(), "linear_forward: input width " + std::to_string(X.cols()) +
                                      " != weight cols " + std::to_string(W.cols()));
    require(b.rows() == W.rows() && b.cols() == 1,
            "linear_forward: bias shape does not match weight rows");
    Matrix<S> Y(X.rows(), W.rows());
    Y.noalias() = X * W.transpose();
    Y.rowwise() += b.col(0).transpose();
    return Y;
}

template <class S>
Vector<S> linear_forward(const Vector<S>& x, const Matrix<S>& W, const Vector<S>& b) {
    require(x.size() == W.cols(), "linear_forward: dim(x) != W.cols");
    require(b.size() == W.rows(), "linear_forward: dim(b) != W.rows");
    return W * x + b;
}

template <class S>
struct LinearGrads {
    Matrix<S> dW;
    Matrix<S> db;
    Matrix<S> dX;
};

template <class S>
LinearGrads<S> linear_backward(const Matrix<S>& X, const Matrix<S>& W, const Matrix<S>& upstream) {
    require(X.cols() == W.cols(), "linear_backward: input width does not match weight");
    require(upstream.rows() == X.rows() && upstream.cols() == W.rows(),
            "linear_backward: upstream shape does not match batch x out");
    LinearGrads<S> g;
    g.dW.noalias() = upstream.transpose() * X;
    g.db = upstream.colwise().sum().transpose();
    g.dX.noalias() = upstream * W;
    return g;
}

// Accumulating variant used on hot paths: adds into dW/db, returns dX only if
// requested.
template <class S>
void linear_backward_into(const Matrix<S>& X, const Matrix<S>& W, const Matrix<S>& upstream,
                          Matrix<S>& dW, Matrix<S>& db, Matrix<S>* dX) {
    require(X.cols() == W.cols() && upstream.cols() == W.rows() && upstream.rows() == X.rows(),
            "linear_backward: shape mismatch");
    dW.noalias() += upstream.transpose() * X;
    db.col(0) += upstream.colwise().sum().transpose();
    if (dX) dX->noalias() = upstream * W;
}

// ---------------------------------------------------------------------------
// sin(sigma * x) and its derivative.
// ---------------------------------------------------------------------------
template <class S>
Matrix<S> sin_act(const Matrix<S>& X, S sigma) {
    require(sigma > S(0), "sin_act: sigma must be positive");
    return (X.array() * sigma).sin().matrix();
}

template <class S>
Matrix<S> sin_act_backward(const Matrix<S>& X, S sigma, const Matrix<S>& upstream) {
    require(X.rows() == upstream.rows() && X.cols() == upstream.cols(),
            "sin_act_backward: shape mismatch");
    return (upstream.array() * sigma * (X.array() * sigma).cos()).matrix();
}

// ---------------------------------------------------------------------------
// LeakyReLU. The derivative at exactly 0 is 1: the forward mask is x >= 0.
// ---------------------------------------------------------------------------
// Branch-free loops; select() and ternaries on data compile to branches.
template <class S>
Matrix<S> leaky_relu(const Matrix<S>& X, S slope) {
    require(slope > S(0) && slope < S(1), "leaky_relu: slope must be in (0,1)");
    Matrix<S> Y(X.rows(), X.cols());
    const S* x = X.data();
    S* y = Y.data();
    for (Eigen::Index i = 0; i < X.size(); ++i) y[i] = std::max(x[i], x[i] * slope);
    return Y;
}

template <class S>
Matrix<S> leaky_relu_backward(const Matrix<S>& X, S slope, const Matrix<S>& upstream) {
    require(X.rows() == upstream.rows() && X.cols() == upstream.cols(),
            "leaky_relu_backward: shape mismatch");
    Matrix<S> D(X.rows(), X.cols());
    const S* x = X.data();
    const S* u = upstream.data();
    S* d = D.data();
    for (Eigen::Index i = 0; i < X.size(); ++i) d[i] = u[i] * (x[i] >= S(0) ? S(1) : slope);
    return D;
}

template <class S>
Matrix<S> relu(const Matrix<S>& X) {
    return X.cwiseMax(S(0));
}

template <class S>
Matrix<S> relu_backward(const Matrix<S>& X, const Matrix<S>& upstream) {
    require(X.rows() == upstream.rows() && X.cols() == upstream.cols(), "relu_backward: shape mismatch");
    Matrix<S> D(X.rows(), X.cols());
    const S* x = X.data();
    const S* u = upstream.data();
    S* d = D.data();
    for (Eigen::Index i = 0; i < X.size(); ++i) d[i] = u[i] * static_cast<S>(x[i] > S(0));
    return D;
}

// ---------------------------------------------------------------------------
// Optimizer and schedule.
// ---------------------------------------------------------------------------
struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Decoupled weight decay (AdamW). The gradient is left untouched; callers zero
// it before the next accumulation.
template <class S>
void adamw_step(ParamBlock<S>& p, double lr, double weight_decay, const AdamParams& hp = {}) {
    require(lr > 0.0, "adamw_step: lr must be positive");
    if (!p.grad.allFinite())
        throw std::runtime_error("adamw_step: non-finite gradient in parameter block '" + p.name + "'");
    p.step_count += 1;
    const S b1 = static_cast<S>(hp.beta1);
    const S b2 = static_cast<S>(hp.beta2);
    const S bc1 = static_cast<S>(1.0 - std::pow(hp.beta1, static_cast<double>(p.step_count)));
    const S bc2 = static_cast<S>(1.0 - std::pow(hp.beta2, static_cast<double>(p.step_count)));
    const S eta = static_cast<S>(lr);
    const S wd = static_cast<S>(weight_decay);
    const S eps = static_cast<S>(hp.eps);

    auto m = p.adam_m.array();
    auto v = p.adam_v.array();
    auto g = p.grad.array();
    m = b1 * m + (S(1) - b1) * g;
    v = b2 * v + (S(1) - b2) * g.square();
    auto w = p.value.array();
    w = w - eta * ((m / bc1) / ((v / bc2).sqrt() + eps) + wd * w);
}

inline double cosine_lr(std::int64_t t, std::int64_t total, double eta, double eta_min) {
    require(total >= 1, "cosine_lr: total iterations must be >= 1");
    require(t >= 0, "cosine_lr: negative iteration");
    if (t > total)
        throw std::out_of_range("cosine_lr: iteration " + std::to_string(t) + " exceeds total " +
                                std::to_string(total));
    require(eta >= eta_min, "cosine_lr: eta < eta_min");
    if (t == 0) return eta;
    if (t == total) return eta_min;
    return eta_min + 0.5 * (eta - eta_min) *
                         (1.0 + std::cos(static_cast<double>(t) / static_cast<double>(total) *
                                         std::numbers::pi));
}

}  // namespace nvp
