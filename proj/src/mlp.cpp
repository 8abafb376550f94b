#include "thermsplat/mlp.hpp"

#include <cmath>
#include <random>
#include <string>

#include "thermsplat/error.hpp"

namespace thermsplat::model {

namespace {

using MatMap = Eigen::Map<Eigen::MatrixXd>;
using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Mlp::Mlp(std::vector<int> widths, std::uint64_t seed) : widths_(std::move(widths)) {
    if (widths_.size() < 2 || widths_.back() != 1) {
        throw UsageError("MLP widths must list an input size and end with a scalar output");
    }
    for (int w : widths_) {
        if (w < 1) throw UsageError("MLP layer widths must be positive");
    }
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        offsets_.push_back(total);
        total += static_cast<std::size_t>(widths_[l]) * widths_[l + 1] + widths_[l + 1];
    }
    params_.assign(total, 0.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
        const std::size_t n_weights = static_cast<std::size_t>(widths_[l]) * widths_[l + 1];
        for (std::size_t i = 0; i < n_weights; ++i) params_[offsets_[l] + i] = scale * normal(rng);
    }
}

Eigen::VectorXd Mlp::forward_batch(const Eigen::MatrixXd& inputs, Tape* tape) const {
    if (inputs.rows() != input_dim()) {
        throw DataError("MLP input has dimension " + std::to_string(inputs.rows()) + ", expected " +
                        std::to_string(input_dim()));
    }
    const std::size_t layers = widths_.size() - 1;
    Eigen::MatrixXd act = inputs;
    if (tape) {
        tape->pre.clear();
        tape->post.clear();
        tape->post.push_back(inputs);
    }
    for (std::size_t l = 0; l < layers; ++l) {
        const int in = widths_[l];
        const int out = widths_[l + 1];
        ConstMatMap w(params_.data() + offsets_[l], out, in);
        ConstVecMap b(params_.data() + offsets_[l] + static_cast<std::size_t>(out) * in, out);
        Eigen::MatrixXd z = w * act;
        z.colwise() += b;
        if (l + 1 < layers) {
            act = z.cwiseMax(0.0);
        } else {
            act = z.unaryExpr([](double v) { return sigmoid(v); });
        }
        if (tape) {
            tape->pre.push_back(std::move(z));
            tape->post.push_back(act);
        }
    }
    Eigen::VectorXd result = act.row(0).transpose();
    if (tape) tape->output = result;
    return result;
}

double Mlp::forward(std::span<const double> input) const {
    const Eigen::MatrixXd x = ConstVecMap(input.data(), static_cast<Eigen::Index>(input.size()));
    return forward_batch(x)(0);
}

Mlp::Gradients Mlp::backward_batch(const Tape& tape, const Eigen::VectorXd& output_adjoint) const {
    const std::size_t layers = widths_.size() - 1;
    Gradients grads;
    grads.params.assign(params_.size(), 0.0);
    // d loss / d pre-activation of the output layer
    const Eigen::VectorXd& s = tape.output;
    Eigen::MatrixXd dz = (output_adjoint.array() * s.array() * (1.0 - s.array())).matrix().transpose();
    for (std::size_t l = layers; l-- > 0;) {
        const int in = widths_[l];
        const int out = widths_[l + 1];
        ConstMatMap w(params_.data() + offsets_[l], out, in);
        MatMap dw(grads.params.data() + offsets_[l], out, in);
        Eigen::Map<Eigen::VectorXd> db(grads.params.data() + offsets_[l] + static_cast<std::size_t>(out) * in, out);
        dw.noalias() = dz * tape.post[l].transpose();
        db = dz.rowwise().sum();
        Eigen::MatrixXd da = w.transpose() * dz;
        if (l == 0) {
            grads.inputs = std::move(da);
        } else {
            dz = (tape.pre[l - 1].array() > 0.0).select(da, 0.0);
        }
    }
    return grads;
}

Mlp::Gradients Mlp::backward(std::span<const double> input, double output_adjoint) const {
    const Eigen::MatrixXd x = ConstVecMap(input.data(), static_cast<Eigen::Index>(input.size()));
    Tape tape;
    forward_batch(x, &tape);
    return backward_batch(tape, Eigen::VectorXd::Constant(1, output_adjoint));
}

}  // namespace thermsplat::model
