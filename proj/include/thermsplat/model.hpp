#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "thermsplat/mlp.hpp"
#include "thermsplat/scene.hpp"

namespace thermsplat::model {

/// How a Gaussian's scalar emission is produced.
enum class EmissionMode {
    kMlp,    ///< c_i(t) = f(e_i, e_t)
    kFixed,  ///< c_i = logistic(e_i[0]); frame embeddings are ignored
};

std::string to_string(EmissionMode mode);
EmissionMode emission_mode_from_string(const std::string& s);

struct ModelConfig {
    EmissionMode mode = EmissionMode::kMlp;
    int gaussian_embedding_dim = 16;
    int frame_embedding_dim = 8;
    int hidden_layers = 2;
    int hidden_width = 32;
    int direction_frequencies = 4;
    std::uint64_t seed = 0;

    /// Switches the MLPs to three hidden layers of width 128.
    void use_large_size() {
        hidden_layers = 3;
        hidden_width = 128;
    }
    /// Embedding width stored on each Gaussian for this mode.
    int stored_gaussian_embedding_dim() const {
        return mode == EmissionMode::kFixed ? 1 : gaussian_embedding_dim;
    }
};

class EmissionModel {
public:
    EmissionModel() = default;
    explicit EmissionModel(const ModelConfig& cfg);

    EmissionMode mode() const { return mode_; }
    Mlp& mlp() { return mlp_; }
    const Mlp& mlp() const { return mlp_; }

    struct Tape {
        Mlp::Tape mlp;
        Eigen::VectorXd emissions;
    };

    /// Scalar emission per Gaussian for the given frame embedding.
    Eigen::VectorXd evaluate(std::span<const scene::Gaussian> gaussians,
                             const Eigen::VectorXd& frame_embedding, Tape* tape = nullptr) const;

    struct Gradients {
        std::vector<double> params;
        Eigen::MatrixXd gaussian_embeddings;  ///< stored dim x n_gaussians
        Eigen::VectorXd frame_embedding;
    };

    Gradients backward(const Tape& tape, std::span<const scene::Gaussian> gaussians,
                       const Eigen::VectorXd& frame_embedding,
                       const Eigen::VectorXd& emission_adjoint) const;

private:
    EmissionMode mode_ = EmissionMode::kMlp;
    int gaussian_dim_ = 0;
    int frame_dim_ = 0;
    Mlp mlp_;
};

/// Background field b(d, e_t) over world-space ray directions.
class BackgroundModel {
public:
    BackgroundModel() = default;
    explicit BackgroundModel(const ModelConfig& cfg);

    Mlp& mlp() { return mlp_; }
    const Mlp& mlp() const { return mlp_; }
    int frequencies() const { return frequencies_; }

    /// Raw direction plus sin/cos at frequencies 2^k * pi, k < frequencies.
    static int encoding_dim(int frequencies) { return 3 + 6 * frequencies; }
    static Eigen::VectorXd encode_direction(const Eigen::Vector3d& d, int frequencies);

    /// Encoded pixel rays of a camera, encoding_dim x (width*height).
    Eigen::MatrixXd encode_rays(const scene::Camera& cam) const;

    Eigen::VectorXd evaluate(const Eigen::MatrixXd& rays, const Eigen::VectorXd& frame_embedding,
                             Mlp::Tape* tape = nullptr) const;

    struct Gradients {
        std::vector<double> params;
        Eigen::VectorXd frame_embedding;
    };

    Gradients backward(const Mlp::Tape& tape, const Eigen::VectorXd& background_adjoint) const;

private:
    int frequencies_ = 4;
    int frame_dim_ = 0;
    Mlp mlp_;
};

}  // namespace thermsplat::model
