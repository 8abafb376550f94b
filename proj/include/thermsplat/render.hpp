#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "thermsplat/imaging.hpp"
#include "thermsplat/model.hpp"
#include "thermsplat/scene.hpp"

namespace thermsplat::render {

using scene::Camera;
using scene::Gaussian;

enum class BackgroundBlend {
    kResidual,     ///< image = (1 - m) * foreground + m * background, m = exp(-sum alpha)
    kStandard,  ///< image = foreground + T_final * background
};

std::string to_string(BackgroundBlend blend);
BackgroundBlend background_blend_from_string(const std::string& s);

struct RenderSettings {
    double near_plane = 0.01;
    double alpha_max = 0.999;
    double alpha_min = 1.0 / 255.0;
    double transmittance_min = 1e-4;
    double dilation = 0.3;  ///< px^2 added to the 2D covariance diagonal
    BackgroundBlend blend = BackgroundBlend::kResidual;
    int threads = 1;
    int output_bit_depth = 16;  ///< bit depth label of rendered frames
};

struct Splat2D {
    Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov2d = Eigen::Matrix2d::Identity();
    double depth = 0.0;
    int gaussian_index = 0;
};

/// Perspective projection with the local affine (EWA) covariance approximation.
/// Returns nothing when the mean lies at or in front of the near plane.
std::optional<Splat2D> project_gaussian(const Gaussian& g, const Camera& cam,
                                        const RenderSettings& settings = {}, int index = 0);

struct RenderOutput {
    imaging::Frame image;       ///< blended intensity
    imaging::Frame foreground;  ///< sum_i T_i alpha_i c_i
    std::vector<double> residual;         ///< m(r) = exp(-sum of composited alpha)
    std::vector<double> background;       ///< background field value per pixel
    std::vector<double> final_transmittance;
    std::vector<int> contrib_count;
};

/// Retained forward state for the reverse pass.
struct RasterState {
    struct Projected {
        int gaussian_index = 0;
        double depth = 0.0;
        Eigen::Vector3d cam_point = Eigen::Vector3d::Zero();
        Eigen::Matrix<double, 2, 3> jacobian = Eigen::Matrix<double, 2, 3>::Zero();
        Eigen::Matrix3d view_cov = Eigen::Matrix3d::Zero();  ///< W Sigma W^T
        Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
        Eigen::Vector3d scale = Eigen::Vector3d::Ones();
        Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
        Eigen::Matrix2d conic = Eigen::Matrix2d::Identity();
        double opacity = 0.0;
        double emission = 0.0;
        double extent_x = 0.0, extent_y = 0.0;
    };
    struct Contribution {
        int splat = 0;  ///< index into `splats`
        double alpha = 0.0;
        double transmittance = 1.0;  ///< T before this splat
        bool clamped = false;
    };

    std::vector<Projected> splats;  ///< depth order
    std::vector<std::uint32_t> pixel_begin;
    std::vector<std::uint32_t> pixel_end;
    std::vector<Contribution> contributions;
    std::uint64_t checksum = 0;
};

/// Rasterizes Gaussians with explicit per-Gaussian emissions and per-pixel background values.
RenderOutput rasterize(std::span<const Gaussian> gaussians, std::span<const double> emissions,
                       std::span<const double> background, const Camera& cam,
                       const RenderSettings& settings, RasterState* state = nullptr);

struct GaussianGradient {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
    Eigen::Vector4d rotation = Eigen::Vector4d::Zero();
    double opacity_logit = 0.0;
};

struct RasterGradients {
    std::vector<GaussianGradient> gaussians;
    std::vector<double> emissions;
    std::vector<double> background;
};

RasterGradients rasterize_backward(const RasterState& state, const RenderOutput& output,
                                   std::span<const Gaussian> gaussians, const Camera& cam,
                                   const RenderSettings& settings,
                                   std::span<const double> image_adjoint,
                                   std::span<const double> residual_adjoint);

/// Forward pass through emission model, background model and rasterizer.
struct RenderResult {
    RenderOutput output;
    RasterState raster;
    model::EmissionModel::Tape emission_tape;
    model::Mlp::Tape background_tape;
};

RenderResult render(std::span<const Gaussian> gaussians, const Camera& cam,
                    const Eigen::VectorXd& frame_embedding, const model::EmissionModel& emission,
                    const model::BackgroundModel& background, const RenderSettings& settings,
                    const Eigen::MatrixXd* encoded_rays = nullptr);

struct SceneGradients {
    std::vector<GaussianGradient> gaussians;
    Eigen::MatrixXd gaussian_embeddings;  ///< stored dim x n_gaussians
    Eigen::VectorXd frame_embedding;
    std::vector<double> emission_params;
    std::vector<double> background_params;
};

SceneGradients render_backward(const RenderResult& forward, std::span<const Gaussian> gaussians,
                               const Camera& cam, const Eigen::VectorXd& frame_embedding,
                               const model::EmissionModel& emission,
                               const model::BackgroundModel& background,
                               const RenderSettings& settings,
                               std::span<const double> image_adjoint,
                               std::span<const double> residual_adjoint);

}  // namespace thermsplat::render
