#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace thermsplat::model {

/// Fully connected network with ReLU hidden layers and a logistic scalar output.
///
/// Parameters live in one flat buffer, layer by layer: the weight matrix
/// (out x in, column-major) followed by the bias vector.
class Mlp {
public:
    Mlp() = default;
    /// `widths` = {input, hidden..., 1}. Weights ~ N(0, 1/fan_in), zero biases.
    Mlp(std::vector<int> widths, std::uint64_t seed);

    int input_dim() const { return widths_.front(); }
    const std::vector<int>& widths() const { return widths_; }
    std::size_t parameter_count() const { return params_.size(); }
    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }

    double forward(std::span<const double> input) const;

    /// Intermediates of a batched forward pass; samples are columns.
    struct Tape {
        std::vector<Eigen::MatrixXd> pre;   ///< pre-activations per layer
        std::vector<Eigen::MatrixXd> post;  ///< post[0] = inputs, post[l+1] = activation of layer l
        Eigen::VectorXd output;
    };

    Eigen::VectorXd forward_batch(const Eigen::MatrixXd& inputs, Tape* tape = nullptr) const;

    struct Gradients {
        std::vector<double> params;
        Eigen::MatrixXd inputs;  ///< input_dim x samples
    };

    /// Reverse pass for d(sum_k adjoint_k * output_k).
    Gradients backward_batch(const Tape& tape, const Eigen::VectorXd& output_adjoint) const;
    Gradients backward(std::span<const double> input, double output_adjoint) const;

private:
    std::size_t layer_offset(std::size_t layer) const { return offsets_[layer]; }

    std::vector<int> widths_;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
};

}  // namespace thermsplat::model
