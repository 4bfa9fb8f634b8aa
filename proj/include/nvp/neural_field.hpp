#pragma once

// Latent-to-RGB mappings and the full coordinate model.
//
//   ModulatedField  synthesizer on t whose hidden activations are gated by a
//                   LeakyReLU modulator fed with the latent vector z
//   Mlp             plain multilayer perceptron (sine / LeakyReLU / ReLU),
//                   used for the unmodulated head and the baselines
//   NvpModel        keyframes + sparse grid + head
//
// Every head exposes forward(..., tape) and backward(tape, dOut, grads, dX)
// where grads is a buffer parallel to params(). Writing to a caller-owned
// buffer lets the trainer reduce per-chunk gradients in a fixed order.

#include "nvp/config.hpp"
#include "nvp/diff_core.hpp"
#include "nvp/latent_grids.hpp"
#include "nvp/video_io.hpp"

#include <atomic>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nvp {

template <class S>
using GradBuffer = std::vector<Matrix<S>>;

template <class S>
GradBuffer<S> make_grad_buffer(const std::vector<const ParamBlock<S>*>& params) {
    GradBuffer<S> g;
    g.reserve(params.size());
    for (const auto* p : params) g.push_back(Matrix<S>::Zero(p->rows(), p->cols()));
    return g;
}

template <class S>
struct Linear {
    ParamBlock<S> weight;  // out x in
    ParamBlock<S> bias;    // out x 1

    Linear() = default;
    Linear(const std::string& name, int in, int out)
        : weight(name + ".weight", out, in), bias(name + ".bias", out, 1) {}

    int in() const { return static_cast<int>(weight.cols()); }
    int out() const { return static_cast<int>(weight.rows()); }
};

// Identifies the parameter state a tape was recorded against.
struct TapeStamp {
    const void* owner = nullptr;
    std::uint64_t generation = 0;
};

class Versioned {
public:
    // Call after every in-place parameter update; older tapes become stale.
    void touch() { ++generation_; }
    std::uint64_t generation() const { return generation_; }

protected:
    TapeStamp stamp() const { return {this, generation_}; }
    void check(const TapeStamp& s, const char* who) const {
        if (s.owner != this || s.generation != generation_)
            throw std::logic_error(std::string(who) + ": stale or foreign tape");
    }

private:
    std::uint64_t generation_ = 0;
};

// ---------------------------------------------------------------------------
// Init helpers
// ---------------------------------------------------------------------------
template <class S>
void fill_uniform(Matrix<S>& m, double lo, double hi, Rng& rng) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(rng.uniform(lo, hi));
}

template <class S>
void fill_normal(Matrix<S>& m, double stddev, Rng& rng) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(stddev * rng.normal());
}

// Kaiming normal (fan-in) weights, zero bias.
template <class S>
void init_kaiming(Linear<S>& l, Rng& rng) {
    fill_normal(l.weight.value, std::sqrt(2.0 / l.in()), rng);
    l.bias.value.setZero();
}

// SIREN scheme: first layer U(-1/n, 1/n), later layers U(-sqrt(6/n)/sigma, sqrt(6/n)/sigma);
// bias U(-1/sqrt(n), 1/sqrt(n)).
template <class S>
void init_siren(Linear<S>& l, bool first, double sigma, Rng& rng) {
    const double n = l.in();
    const double r = first ? 1.0 / n : std::sqrt(6.0 / n) / sigma;
    fill_uniform(l.weight.value, -r, r, rng);
    const double rb = 1.0 / std::sqrt(n);
    fill_uniform(l.bias.value, -rb, rb, rng);
}

// ---------------------------------------------------------------------------
// ModulatedField
// ---------------------------------------------------------------------------
template <class S>
class ModulatedField : public Versioned {
public:
    struct Tape {
        TapeStamp stamp;
        Matrix<S> z, t;
        std::vector<Matrix<S>> mod_pre, mod_out;  // P_k, z_k
        std::vector<Matrix<S>> syn_pre, syn_sin;  // A_k a_{k-1} + b_k, sin(sigma_k * .)
        std::vector<Matrix<S>> alpha;             // alpha_0 = t, ..., alpha_{K-1}
    };

    ModulatedField() = default;

    ModulatedField(int z_dim, int depth, int hidden, std::vector<double> sigmas, double slope)
        : z_dim_(z_dim), sigmas_(std::move(sigmas)), slope_(slope) {
        require(depth >= 2, "ModulatedField: depth must be >= 2");
        require(z_dim >= 1 && hidden >= 1, "ModulatedField: dimensions must be positive");
        require(static_cast<int>(sigmas_.size()) == depth - 1, "ModulatedField: need depth-1 frequencies");
        for (int k = 0; k < depth; ++k) {
            const int in = k == 0 ? 1 : hidden;
            const int out = k == depth - 1 ? 3 : hidden;
            synth_.emplace_back("synth" + std::to_string(k), in, out);
        }
        for (int k = 0; k < depth - 1; ++k)
            mod_.emplace_back("mod" + std::to_string(k), k == 0 ? z_dim : hidden, hidden);
    }

    int depth() const { return static_cast<int>(synth_.size()); }
    int z_dim() const { return z_dim_; }
    const std::vector<double>& sigmas() const { return sigmas_; }
    std::vector<Linear<S>>& synth() { return synth_; }
    std::vector<Linear<S>>& modulator() { return mod_; }
    const std::vector<Linear<S>>& synth() const { return synth_; }
    const std::vector<Linear<S>>& modulator() const { return mod_; }

    // Modulator first, then synthesizer; weight before bias.
    std::vector<ParamBlock<S>*> params() {
        std::vector<ParamBlock<S>*> p;
        for (auto& l : mod_) p.insert(p.end(), {&l.weight, &l.bias});
        for (auto& l : synth_) p.insert(p.end(), {&l.weight, &l.bias});
        return p;
    }
    std::vector<const ParamBlock<S>*> params() const {
        std::vector<const ParamBlock<S>*> p;
        for (auto& l : mod_) p.insert(p.end(), {&l.weight, &l.bias});
        for (auto& l : synth_) p.insert(p.end(), {&l.weight, &l.bias});
        return p;
    }

    void init(Rng& rng) {
        for (auto& l : mod_) init_kaiming(l, rng);
        for (int k = 0; k < depth(); ++k) {
            const double sigma = k < depth() - 1 ? sigmas_[k] : sigmas_.back();
            init_siren(synth_[k], k == 0, sigma, rng);
        }
    }

    // z: batch x z_dim, t: batch x 1. Returns batch x 3 (unclamped).
    Matrix<S> forward(const Matrix<S>& z, const Matrix<S>& t, Tape& tape) const {
        require(z.cols() == z_dim_, "field_forward: latent width " + std::to_string(z.cols()) + " != z_dim " +
                                        std::to_string(z_dim_));
        require(t.cols() == 1 && t.rows() == z.rows(), "field_forward: t must be batch x 1");
        const int K = depth();
        const S slope = static_cast<S>(slope_);
        tape = Tape{};
        tape.stamp = stamp();
        tape.z = z;
        tape.t = t;
        const Matrix<S>* in = &tape.z;
        for (int k = 0; k < K - 1; ++k) {
            tape.mod_pre.push_back(linear_forward(*in, mod_[k].weight.value, mod_[k].bias.value));
            tape.mod_out.push_back(leaky_relu(tape.mod_pre.back(), slope));
            in = &tape.mod_out.back();
        }
        tape.alpha.push_back(t);
        for (int k = 0; k < K - 1; ++k) {
            tape.syn_pre.push_back(linear_forward(tape.alpha.back(), synth_[k].weight.value, synth_[k].bias.value));
            tape.syn_sin.push_back(sin_act(tape.syn_pre.back(), static_cast<S>(sigmas_[k])));
            tape.alpha.push_back(tape.mod_out[k].cwiseProduct(tape.syn_sin.back()));
        }
        return linear_forward(tape.alpha.back(), synth_[K - 1].weight.value, synth_[K - 1].bias.value);
    }

    // grads parallel to params(); dz (batch x z_dim) written if non-null.
    void backward(const Tape& tape, const Matrix<S>& upstream, GradBuffer<S>& grads, Matrix<S>* dz) const {
        check(tape.stamp, "field_backward");
        const int K = depth();
        require(upstream.rows() == tape.z.rows() && upstream.cols() == 3, "field_backward: upstream must be batch x 3");
        require(grads.size() == static_cast<std::size_t>(4 * K - 2), "field_backward: gradient buffer size");
        const S slope = static_cast<S>(slope_);
        auto gW = [&](bool syn, int k) -> Matrix<S>& { return grads[(syn ? 2 * (K - 1) : 0) + 2 * k]; };
        auto gb = [&](bool syn, int k) -> Matrix<S>& { return grads[(syn ? 2 * (K - 1) : 0) + 2 * k + 1]; };

        Matrix<S> d_alpha;
        linear_backward_into(tape.alpha[K - 1], synth_[K - 1].weight.value, upstream, gW(true, K - 1),
                             gb(true, K - 1), &d_alpha);
        std::vector<Matrix<S>> d_mod(K - 1);
        for (int k = K - 2; k >= 0; --k) {
            d_mod[k] = d_alpha.cwiseProduct(tape.syn_sin[k]);
            const Matrix<S> d_sin = d_alpha.cwiseProduct(tape.mod_out[k]);
            const Matrix<S> d_pre = sin_act_backward(tape.syn_pre[k], static_cast<S>(sigmas_[k]), d_sin);
            linear_backward_into(tape.alpha[k], synth_[k].weight.value, d_pre, gW(true, k), gb(true, k),
                                 k > 0 ? &d_alpha : nullptr);
        }
        Matrix<S> carry;
        for (int k = K - 2; k >= 0; --k) {
            Matrix<S> dzk = d_mod[k];
            if (k < K - 2) dzk += carry;
            const Matrix<S> d_pre = leaky_relu_backward(tape.mod_pre[k], slope, dzk);
            const Matrix<S>& in = k == 0 ? tape.z : tape.mod_out[k - 1];
            linear_backward_into(in, mod_[k].weight.value, d_pre, gW(false, k), gb(false, k),
                                 (k > 0 || dz) ? &carry : nullptr);
        }
        if (dz) *dz = std::move(carry);
    }

private:
    int z_dim_ = 0;
    std::vector<double> sigmas_;
    double slope_ = 0.01;
    std::vector<Linear<S>> synth_;
    std::vector<Linear<S>> mod_;
};

// ---------------------------------------------------------------------------
// Mlp
// ---------------------------------------------------------------------------
enum class Activation { sine, leaky_relu, relu };

template <class S>
class Mlp : public Versioned {
public:
    struct Tape {
        TapeStamp stamp;
        std::vector<Matrix<S>> inputs;  // input of each layer
        std::vector<Matrix<S>> pre;     // pre-activation of each hidden layer
    };

    Mlp() = default;

    // depth linear layers; hidden layers use `act` (sine layers use sigmas[k]).
    Mlp(const std::string& name, int in, int hidden, int out, int depth, Activation act,
        std::vector<double> sigmas = {}, double slope = 0.01)
        : act_(act), sigmas_(std::move(sigmas)), slope_(slope) {
        require(depth >= 1 && in >= 1 && out >= 1 && hidden >= 1, "Mlp: dimensions must be positive");
        if (act == Activation::sine)
            require(static_cast<int>(sigmas_.size()) == depth - 1, "Mlp: sine activation needs depth-1 frequencies");
        for (int k = 0; k < depth; ++k)
            layers_.emplace_back(name + std::to_string(k), k == 0 ? in : hidden, k == depth - 1 ? out : hidden);
    }

    int depth() const { return static_cast<int>(layers_.size()); }
    int in() const { return layers_.front().in(); }
    int out() const { return layers_.back().out(); }
    Activation activation() const { return act_; }
    std::vector<Linear<S>>& layers() { return layers_; }
    const std::vector<Linear<S>>& layers() const { return layers_; }

    std::vector<ParamBlock<S>*> params() {
        std::vector<ParamBlock<S>*> p;
        for (auto& l : layers_) p.insert(p.end(), {&l.weight, &l.bias});
        return p;
    }
    std::vector<const ParamBlock<S>*> params() const {
        std::vector<const ParamBlock<S>*> p;
        for (auto& l : layers_) p.insert(p.end(), {&l.weight, &l.bias});
        return p;
    }

    void init(Rng& rng) {
        for (int k = 0; k < depth(); ++k) {
            if (act_ == Activation::sine) {
                const double sigma = sigmas_.empty() ? 1.0 : sigmas_[std::min<int>(k, static_cast<int>(sigmas_.size()) - 1)];
                init_siren(layers_[k], k == 0, sigma, rng);
            } else {
                init_kaiming(layers_[k], rng);
            }
        }
    }

    Matrix<S> forward(const Matrix<S>& x, Tape& tape) const {
        require(x.cols() == in(), "mlp_forward: input width mismatch");
        tape = Tape{};
        tape.stamp = stamp();
        tape.inputs.push_back(x);
        for (int k = 0; k < depth() - 1; ++k) {
            tape.pre.push_back(linear_forward(tape.inputs.back(), layers_[k].weight.value, layers_[k].bias.value));
            tape.inputs.push_back(activate(tape.pre.back(), k));
        }
        return linear_forward(tape.inputs.back(), layers_.back().weight.value, layers_.back().bias.value);
    }

    void backward(const Tape& tape, const Matrix<S>& upstream, GradBuffer<S>& grads, Matrix<S>* dx) const {
        check(tape.stamp, "mlp_backward");
        require(grads.size() == 2 * layers_.size(), "mlp_backward: gradient buffer size");
        require(upstream.rows() == tape.inputs.front().rows() && upstream.cols() == out(),
                "mlp_backward: upstream shape");
        Matrix<S> d = upstream;
        for (int k = depth() - 1; k >= 0; --k) {
            Matrix<S> d_in;
            linear_backward_into(tape.inputs[k], layers_[k].weight.value, d, grads[2 * k], grads[2 * k + 1],
                                 (k > 0 || dx) ? &d_in : nullptr);
            if (k > 0) {
                d = activate_backward(tape.pre[k - 1], k - 1, d_in);
            } else if (dx) {
                *dx = std::move(d_in);
            }
        }
    }

private:
    Matrix<S> activate(const Matrix<S>& x, int k) const {
        switch (act_) {
            case Activation::sine: return sin_act(x, static_cast<S>(sigmas_[k]));
            case Activation::leaky_relu: return leaky_relu(x, static_cast<S>(slope_));
            case Activation::relu: return relu(x);
        }
        return x;
    }
    Matrix<S> activate_backward(const Matrix<S>& x, int k, const Matrix<S>& up) const {
        switch (act_) {
            case Activation::sine: return sin_act_backward(x, static_cast<S>(sigmas_[k]), up);
            case Activation::leaky_relu: return leaky_relu_backward(x, static_cast<S>(slope_), up);
            case Activation::relu: return relu_backward(x, up);
        }
        return up;
    }

    Activation act_ = Activation::sine;
    std::vector<double> sigmas_;
    double slope_ = 0.01;
    std::vector<Linear<S>> layers_;
};

// ---------------------------------------------------------------------------
// Coordinate batches
// ---------------------------------------------------------------------------
template <class S>
Matrix<S> coords_matrix(std::span<const Coordinate> coords) {
    Matrix<S> m(static_cast<Eigen::Index>(coords.size()), 3);
    for (std::size_t i = 0; i < coords.size(); ++i)
        m.row(static_cast<Eigen::Index>(i)) << static_cast<S>(coords[i].x), static_cast<S>(coords[i].y),
            static_cast<S>(coords[i].t);
    return m;
}

template <class S>
Matrix<S> time_column(std::span<const Coordinate> coords) {
    Matrix<S> m(static_cast<Eigen::Index>(coords.size()), 1);
    for (std::size_t i = 0; i < coords.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = static_cast<S>(coords[i].t);
    return m;
}

// ---------------------------------------------------------------------------
// NvpModel
// ---------------------------------------------------------------------------
template <class S>
class NvpModel {
public:
    using Scalar = S;
    struct Tape {
        typename ModulatedField<S>::Tape field;
        typename Mlp<S>::Tape plain;
        Eigen::Index batch = 0;
    };

    NvpModel() = default;

    explicit NvpModel(const ModelConfig& cfg) : cfg_(cfg) {
        cfg.validate();
        if (cfg.keyframes) {
            const AxisPair pairs[3] = {AxisPair::xy, AxisPair::xt, AxisPair::yt};
            for (AxisPair a : pairs)
                keyframes_.emplace_back(a, cfg.kf_levels, cfg.kf_gamma, cfg.kf_base, cfg.kf_base, cfg.kf_dim);
        }
        if (cfg.sparse)
            sparse_ = SparseGrid3D<S>({cfg.sparse_nx, cfg.sparse_ny, cfg.sparse_nt}, cfg.sparse_dim,
                                      {cfg.window_x, cfg.window_y, cfg.window_t}, cfg.upsample);
        if (cfg.modulation)
            field_ = ModulatedField<S>(cfg.z_dim(), cfg.depth, cfg.hidden, cfg.sigmas, cfg.leaky_slope);
        else
            plain_ = Mlp<S>("head", cfg.z_dim() + 1, cfg.hidden, 3, cfg.depth, Activation::leaky_relu, {},
                            cfg.leaky_slope);
        if (z_dim() != cfg.z_dim()) throw std::logic_error("NvpModel: latent width inconsistent with config");
    }

    const ModelConfig& config() const { return cfg_; }
    int z_dim() const {
        int n = 0;
        for (const auto& k : keyframes_) n += k.output_size();
        if (cfg_.sparse) n += sparse_.output_size();
        return n;
    }

    std::vector<KeyframeGrid<S>>& keyframes() { return keyframes_; }
    const std::vector<KeyframeGrid<S>>& keyframes() const { return keyframes_; }
    SparseGrid3D<S>& sparse() { return sparse_; }
    const SparseGrid3D<S>& sparse() const { return sparse_; }
    ModulatedField<S>& field() { return field_; }
    const ModulatedField<S>& field() const { return field_; }
    Mlp<S>& plain_head() { return plain_; }
    const Mlp<S>& plain_head() const { return plain_; }

    // Canonical order: keyframes xy, xt, yt (levels coarse to fine), sparse
    // grid, then the head. Serialization depends on this order.
    std::vector<ParamBlock<S>*> grid_params() {
        std::vector<ParamBlock<S>*> p;
        for (auto& k : keyframes_)
            for (auto& l : k.levels()) p.push_back(&l);
        if (cfg_.sparse) p.push_back(&sparse_.codes());
        return p;
    }
    std::vector<ParamBlock<S>*> dense_params() { return cfg_.modulation ? field_.params() : plain_.params(); }
    std::vector<const ParamBlock<S>*> dense_params() const {
        return cfg_.modulation ? field_.params() : plain_.params();
    }
    std::vector<ParamBlock<S>*> params() {
        auto p = grid_params();
        auto d = dense_params();
        p.insert(p.end(), d.begin(), d.end());
        return p;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (auto* p : params()) n += static_cast<std::size_t>(p->size());
        return n;
    }

    void touch() {
        field_.touch();
        plain_.touch();
    }

    // Latent vector z = [z_xy, z_xt, z_yt, z_xyt] for each coordinate.
    Matrix<S> encode(std::span<const Coordinate> coords) const {
        Matrix<S> z(static_cast<Eigen::Index>(coords.size()), z_dim());
        for (std::size_t i = 0; i < coords.size(); ++i) {
            S* row = z.row(static_cast<Eigen::Index>(i)).data();
            for (const auto& k : keyframes_) {
                const auto [a, b] = axis_coords(k.axes(), coords[i]);
                k.lookup(a, b, row);
                row += k.output_size();
            }
            if (cfg_.sparse) sparse_.lookup(coords[i], row);
        }
        return z;
    }

    // Adjoint of encode, accumulated into the grid gradients.
    void scatter_latent(std::span<const Coordinate> coords, const Matrix<S>& dz) {
        require(dz.rows() == static_cast<Eigen::Index>(coords.size()) && dz.cols() == z_dim(),
                "scatter_latent: shape mismatch");
        for (std::size_t i = 0; i < coords.size(); ++i) {
            const S* row = dz.row(static_cast<Eigen::Index>(i)).data();
            for (auto& k : keyframes_) {
                const auto [a, b] = axis_coords(k.axes(), coords[i]);
                k.scatter(a, b, row);
                row += k.output_size();
            }
            if (cfg_.sparse) sparse_.scatter(coords[i], row);
        }
    }

    Matrix<S> head_forward(const Matrix<S>& z, const Matrix<S>& t, Tape& tape) const {
        tape.batch = z.rows();
        if (cfg_.modulation) return field_.forward(z, t, tape.field);
        Matrix<S> zt(z.rows(), z.cols() + 1);
        zt << z, t;
        return plain_.forward(zt, tape.plain);
    }

    void head_backward(const Tape& tape, const Matrix<S>& upstream, GradBuffer<S>& grads, Matrix<S>* dz) const {
        if (cfg_.modulation) {
            field_.backward(tape.field, upstream, grads, dz);
            return;
        }
        Matrix<S> dzt;
        plain_.backward(tape.plain, upstream, grads, dz ? &dzt : nullptr);
        if (dz) *dz = dzt.leftCols(dzt.cols() - 1);
    }

    // Full forward; returns batch x 3 RGB (unclamped).
    Matrix<S> forward(std::span<const Coordinate> coords, Tape& tape) const {
        return head_forward(encode(coords), time_column<S>(coords), tape);
    }

    Matrix<S> predict(std::span<const Coordinate> coords) const {
        Tape tape;
        return forward(coords, tape);
    }

    // Thread-safe part of the backward pass: head gradients into `grads`
    // (parallel to dense_params()) and the latent gradient into `dz`.
    void backward_dense(const Tape& tape, const Matrix<S>& upstream, GradBuffer<S>& grads, Matrix<S>& dz) const {
        head_backward(tape, upstream, grads, &dz);
    }

private:
    ModelConfig cfg_;
    std::vector<KeyframeGrid<S>> keyframes_;
    SparseGrid3D<S> sparse_;
    ModulatedField<S> field_;
    Mlp<S> plain_;
};

}  // namespace nvp
