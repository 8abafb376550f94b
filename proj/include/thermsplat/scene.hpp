#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "thermsplat/imaging.hpp"

namespace thermsplat::scene {

/// Anisotropic 3D Gaussian. `rotation` holds a unit quaternion as (w, x, y, z).
struct Gaussian {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
    Eigen::Vector4d rotation{1.0, 0.0, 0.0, 0.0};
    double opacity_logit = 0.0;
    Eigen::VectorXd embedding;

    double opacity() const;
};

double logistic(double x);
double logit(double p);

/// Rotation matrix of a (not necessarily normalized) quaternion (w, x, y, z).
Eigen::Matrix3d quaternion_to_matrix(const Eigen::Vector4d& q);

/// Gaussians plus the per-frame appearance embeddings.
struct GaussianScene {
    std::vector<Gaussian> gaussians;
    std::vector<Eigen::VectorXd> frame_embeddings;  ///< one per training frame index
    int inference_frame = 0;                        ///< embedding used for novel views

    const Eigen::VectorXd& inference_embedding() const { return frame_embeddings.at(inference_frame); }
    void renormalize_rotations();
};

/// Pinhole camera. x_cam = rotation * x_world + translation; +z looks forward,
/// +y points down the image. Pixel (i, j) has its center at (i + 0.5, j + 0.5).
struct Camera {
    int id = 0;
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
    int width = 1, height = 1;
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    void validate() const;
    Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const { return rotation * world + translation; }
    Eigen::Vector3d center() const { return -(rotation.conjugate() * translation); }
    /// Unit viewing ray through the center of pixel (px, py), in world coordinates.
    Eigen::Vector3d pixel_ray_world(int px, int py) const;
};

/// Camera at `eye` looking at `target` with world +y as up.
Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, double focal, int width,
               int height, int id = 0);

struct SyntheticSceneOptions {
    int width = 64;
    int height = 64;
    double ring_radius = 2.5;
    double focal_per_64px = 60.0;   ///< focal length for a 64 px wide image; scales with width
    double elevation_amplitude = 0.35;  ///< radians
    double min_scale = 0.05;
    double max_scale = 0.12;
    double min_opacity = 0.5;
    double max_opacity = 0.95;
    double background = 0.2;
};

/// Ground truth scene: Gaussians carry no embeddings, emissions are fixed scalars.
struct SyntheticScene {
    std::vector<Gaussian> gaussians;
    std::vector<double> emissions;
    double background = 0.2;
    std::vector<Camera> cameras;
};

SyntheticScene generate_synthetic_scene(int n_gaussians, int n_cameras, std::uint64_t seed,
                                        const SyntheticSceneOptions& options = {});

struct DegradationSpec {
    double gain_amp = 0.0;
    double offset_walk_sigma = 0.0;
    double vignette_strength = 0.0;
    double fpn_sigma = 0.0;
    bool fpn_column = false;
    double blur_sigma = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Per-frame gain g_t and offset o_t used by degrade_sequence.
std::vector<double> degradation_gains(const DegradationSpec& spec, std::size_t n_frames);
std::vector<double> degradation_offsets(const DegradationSpec& spec, std::size_t n_frames);
/// Multiplicative vignetting field V(p), row-major.
std::vector<double> vignette_field(const DegradationSpec& spec, int width, int height);
/// Additive fixed-pattern field, row-major.
std::vector<double> fixed_pattern_field(const DegradationSpec& spec, int width, int height);

/// Separable Gaussian blur with replicated borders. sigma <= 0 returns the input.
std::vector<double> gaussian_blur(std::span<const double> pixels, int width, int height, double sigma);

imaging::Sequence degrade_sequence(const imaging::Sequence& frames, const DegradationSpec& spec);

struct InitOptions {
    int embedding_dim = 16;
    std::uint64_t seed = 0;
    double initial_opacity = 0.1;
    double embedding_std = 0.01;
    double scale_floor = 1e-4;
};

/// One isotropic Gaussian per point sized by the mean distance to its k nearest neighbours.
std::vector<Gaussian> init_from_points(const std::vector<Eigen::Vector3d>& points, int k,
                                       const InitOptions& options = {});

// Text formats.
// cameras.txt: `id fx fy cx cy width height qw qx qy qz tx ty tz` per line.
void write_cameras(const std::vector<Camera>& cameras, const std::filesystem::path& path);
std::vector<Camera> read_cameras(const std::filesystem::path& path);
// points: `x y z` per line.
void write_points(const std::vector<Eigen::Vector3d>& points, const std::filesystem::path& path);
std::vector<Eigen::Vector3d> read_points(const std::filesystem::path& path);

}  // namespace thermsplat::scene
