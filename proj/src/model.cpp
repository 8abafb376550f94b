#include "thermsplat/model.hpp"

#include <cmath>
#include <numbers>

#include "thermsplat/error.hpp"

namespace thermsplat::model {

std::string to_string(EmissionMode mode) { return mode == EmissionMode::kMlp ? "mlp" : "fixed"; }

EmissionMode emission_mode_from_string(const std::string& s) {
    if (s == "mlp") return EmissionMode::kMlp;
    if (s == "fixed") return EmissionMode::kFixed;
    throw UsageError("unknown emission mode '" + s + "' (expected mlp or fixed)");
}

namespace {

std::vector<int> mlp_widths(int input, const ModelConfig& cfg) {
    std::vector<int> widths{input};
    for (int l = 0; l < cfg.hidden_layers; ++l) widths.push_back(cfg.hidden_width);
    widths.push_back(1);
    return widths;
}

}  // namespace

// ---------------------------------------------------------------------------
// Emission

EmissionModel::EmissionModel(const ModelConfig& cfg)
    : mode_(cfg.mode),
      gaussian_dim_(cfg.stored_gaussian_embedding_dim()),
      frame_dim_(cfg.frame_embedding_dim) {
    if (mode_ == EmissionMode::kMlp) {
        mlp_ = Mlp(mlp_widths(gaussian_dim_ + frame_dim_, cfg), cfg.seed * 7919 + 11);
    }
}

Eigen::VectorXd EmissionModel::evaluate(std::span<const scene::Gaussian> gaussians,
                                        const Eigen::VectorXd& frame_embedding, Tape* tape) const {
    const auto n = static_cast<Eigen::Index>(gaussians.size());
    Eigen::VectorXd out(n);
    if (mode_ == EmissionMode::kFixed) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (gaussians[i].embedding.size() < 1) throw DataError("fixed emission needs a stored scalar");
            out[i] = scene::logistic(gaussians[i].embedding[0]);
        }
        if (tape) tape->emissions = out;
        return out;
    }
    if (frame_embedding.size() != frame_dim_) {
        throw DataError("frame embedding has dimension " + std::to_string(frame_embedding.size()) +
                        ", expected " + std::to_string(frame_dim_));
    }
    Eigen::MatrixXd inputs(gaussian_dim_ + frame_dim_, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (gaussians[i].embedding.size() != gaussian_dim_) {
            throw DataError("Gaussian " + std::to_string(i) + " has embedding dimension " +
                            std::to_string(gaussians[i].embedding.size()));
        }
        inputs.col(i).head(gaussian_dim_) = gaussians[i].embedding;
        inputs.col(i).tail(frame_dim_) = frame_embedding;
    }
    Mlp::Tape local;
    out = mlp_.forward_batch(inputs, tape ? &tape->mlp : &local);
    if (tape) tape->emissions = out;
    return out;
}

EmissionModel::Gradients EmissionModel::backward(const Tape& tape,
                                                 std::span<const scene::Gaussian> gaussians,
                                                 const Eigen::VectorXd& frame_embedding,
                                                 const Eigen::VectorXd& emission_adjoint) const {
    const auto n = static_cast<Eigen::Index>(gaussians.size());
    Gradients g;
    g.frame_embedding = Eigen::VectorXd::Zero(frame_embedding.size());
    if (mode_ == EmissionMode::kFixed) {
        g.gaussian_embeddings = Eigen::MatrixXd::Zero(1, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double c = tape.emissions[i];
            g.gaussian_embeddings(0, i) = emission_adjoint[i] * c * (1.0 - c);
        }
        return g;
    }
    Mlp::Gradients mg = mlp_.backward_batch(tape.mlp, emission_adjoint);
    g.params = std::move(mg.params);
    g.gaussian_embeddings = mg.inputs.topRows(gaussian_dim_);
    g.frame_embedding = mg.inputs.bottomRows(frame_dim_).rowwise().sum();
    return g;
}

// ---------------------------------------------------------------------------
// Background

BackgroundModel::BackgroundModel(const ModelConfig& cfg)
    : frequencies_(cfg.direction_frequencies), frame_dim_(cfg.frame_embedding_dim) {
    mlp_ = Mlp(mlp_widths(encoding_dim(frequencies_) + frame_dim_, cfg), cfg.seed * 7919 + 23);
}

Eigen::VectorXd BackgroundModel::encode_direction(const Eigen::Vector3d& d, int frequencies) {
    Eigen::VectorXd e(encoding_dim(frequencies));
    e.head<3>() = d;
    int k = 3;
    for (int f = 0; f < frequencies; ++f) {
        const double w = std::ldexp(std::numbers::pi, f);
        for (int a = 0; a < 3; ++a) {
            e[k++] = std::sin(w * d[a]);
            e[k++] = std::cos(w * d[a]);
        }
    }
    return e;
}

Eigen::MatrixXd BackgroundModel::encode_rays(const scene::Camera& cam) const {
    Eigen::MatrixXd rays(encoding_dim(frequencies_), static_cast<Eigen::Index>(cam.width) * cam.height);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            rays.col(static_cast<Eigen::Index>(y) * cam.width + x) =
                encode_direction(cam.pixel_ray_world(x, y), frequencies_);
        }
    }
    return rays;
}

Eigen::VectorXd BackgroundModel::evaluate(const Eigen::MatrixXd& rays,
                                          const Eigen::VectorXd& frame_embedding,
                                          Mlp::Tape* tape) const {
    if (rays.rows() != encoding_dim(frequencies_)) throw DataError("ray encoding has the wrong size");
    if (frame_embedding.size() != frame_dim_) {
        throw DataError("frame embedding has dimension " + std::to_string(frame_embedding.size()) +
                        ", expected " + std::to_string(frame_dim_));
    }
    Eigen::MatrixXd inputs(rays.rows() + frame_dim_, rays.cols());
    inputs.topRows(rays.rows()) = rays;
    inputs.bottomRows(frame_dim_) = frame_embedding.replicate(1, rays.cols());
    return mlp_.forward_batch(inputs, tape);
}

BackgroundModel::Gradients BackgroundModel::backward(const Mlp::Tape& tape,
                                                     const Eigen::VectorXd& background_adjoint) const {
    Mlp::Gradients mg = mlp_.backward_batch(tape, background_adjoint);
    Gradients g;
    g.params = std::move(mg.params);
    g.frame_embedding = mg.inputs.bottomRows(frame_dim_).rowwise().sum();
    return g;
}

}  // namespace thermsplat::model
