#pragma once

// Coordinate-network baselines on raw (x, y, t): a sinusoidal MLP and a
// random-Fourier-feature MLP. Both plug into the same trainer as NvpModel.

#include "nvp/neural_field.hpp"

#include <numbers>

namespace nvp {

// Sine MLP with frequency omega on every hidden layer.
template <class S>
class SirenModel {
public:
    using Scalar = S;
    using Tape = typename Mlp<S>::Tape;

    SirenModel() = default;
    SirenModel(int depth, int hidden, double omega = 30.0)
        : net_("siren", 3, hidden, 3, depth, Activation::sine, std::vector<double>(depth - 1, omega)) {}

    Mlp<S>& net() { return net_; }
    const Mlp<S>& net() const { return net_; }

    void init(Rng& rng) { net_.init(rng); }
    std::vector<ParamBlock<S>*> grid_params() { return {}; }
    std::vector<ParamBlock<S>*> dense_params() { return net_.params(); }
    std::vector<const ParamBlock<S>*> dense_params() const { return net_.params(); }
    std::vector<ParamBlock<S>*> params() { return net_.params(); }
    void touch() { net_.touch(); }

    Matrix<S> forward(std::span<const Coordinate> coords, Tape& tape) const {
        return net_.forward(coords_matrix<S>(coords), tape);
    }
    Matrix<S> predict(std::span<const Coordinate> coords) const {
        Tape tape;
        return forward(coords, tape);
    }
    void backward_dense(const Tape& tape, const Matrix<S>& up, GradBuffer<S>& grads, Matrix<S>&) const {
        net_.backward(tape, up, grads, nullptr);
    }
    void scatter_latent(std::span<const Coordinate>, const Matrix<S>&) {}

private:
    Mlp<S> net_;
};

// Fixed embedding [sin(2 pi x B), cos(2 pi x B)] with B ~ N(0, scale^2),
// followed by a ReLU MLP.
template <class S>
class FfnModel {
public:
    using Scalar = S;
    using Tape = typename Mlp<S>::Tape;

    FfnModel() = default;
    FfnModel(int features, int depth, int hidden, double scale = 10.0)
        : features_(features), scale_(scale),
          basis_(Matrix<S>::Zero(3, features)),
          net_("ffn", 2 * features, hidden, 3, depth, Activation::relu) {}

    const Matrix<S>& basis() const { return basis_; }
    Matrix<S>& basis() { return basis_; }
    Mlp<S>& net() { return net_; }

    void init(Rng& rng) {
        fill_normal(basis_, scale_, rng);
        net_.init(rng);
    }

    Matrix<S> embed(const Matrix<S>& x) const {
        require(x.cols() == 3, "ffn embed: input must be batch x 3");
        const Matrix<S> proj = (x * basis_) * static_cast<S>(2.0 * std::numbers::pi);
        Matrix<S> e(x.rows(), 2 * features_);
        e.leftCols(features_) = proj.array().sin().matrix();
        e.rightCols(features_) = proj.array().cos().matrix();
        return e;
    }

    std::vector<ParamBlock<S>*> grid_params() { return {}; }
    std::vector<ParamBlock<S>*> dense_params() { return net_.params(); }
    std::vector<const ParamBlock<S>*> dense_params() const { return net_.params(); }
    std::vector<ParamBlock<S>*> params() { return net_.params(); }
    void touch() { net_.touch(); }

    Matrix<S> forward(std::span<const Coordinate> coords, Tape& tape) const {
        return net_.forward(embed(coords_matrix<S>(coords)), tape);
    }
    Matrix<S> predict(std::span<const Coordinate> coords) const {
        Tape tape;
        return forward(coords, tape);
    }
    void backward_dense(const Tape& tape, const Matrix<S>& up, GradBuffer<S>& grads, Matrix<S>&) const {
        net_.backward(tape, up, grads, nullptr);
    }
    void scatter_latent(std::span<const Coordinate>, const Matrix<S>&) {}

private:
    int features_ = 0;
    double scale_ = 10.0;
    Matrix<S> basis_;
    Mlp<S> net_;
};

}  // namespace nvp
