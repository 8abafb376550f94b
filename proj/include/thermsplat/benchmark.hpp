#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "thermsplat/imaging.hpp"
#include "thermsplat/render.hpp"
#include "thermsplat/scene.hpp"
#include "thermsplat/stabilize.hpp"
#include "thermsplat/train.hpp"

namespace thermsplat::benchmark {

/// Synthetic multiview thermal dataset with controlled sensor degradations.
struct BenchmarkOptions {
    int gaussians = 200;
    int train_views = 20;
    int heldout_views = 4;
    int resolution = 64;
    int bit_depth = 16;
    double point_noise = 0.01;  ///< std of the noise added to true means for the init point cloud
    int inference_frame = 0;    ///< training frame whose inverse LUT maps stabilized renders back
    scene::DegradationSpec degradation = default_degradation();
    stabilize::StabilizeConfig stabilize;
    std::uint64_t seed = 0;

    static scene::DegradationSpec default_degradation();
};

struct Benchmark {
    scene::SyntheticScene truth;
    std::vector<scene::Camera> train_cameras;
    std::vector<scene::Camera> heldout_cameras;
    imaging::Sequence clean_train;
    imaging::Sequence degraded_train;
    std::vector<imaging::Frame> heldout;  ///< clean ground truth
    stabilize::StabilizeResult stabilized;
    std::vector<Eigen::Vector3d> points;
    train::Dataset raw;
    train::Dataset stable;
};

/// Renders a ground-truth scene (fixed emissions, constant background) quantized to `bit_depth`.
imaging::Frame render_ground_truth(const scene::SyntheticScene& truth, const scene::Camera& cam, int bit_depth,
                                   const render::RenderSettings& settings = {});

/// Cameras on the ring are split so that every k-th one is held out, k = total / heldout_views.
Benchmark build_benchmark(const BenchmarkOptions& options);

/// Builds a training dataset from frames and their cameras (frame ids follow sequence order).
train::Dataset make_dataset(const imaging::Sequence& frames, const std::vector<scene::Camera>& cameras);

}  // namespace thermsplat::benchmark
