#include "thermsplat/benchmark.hpp"

#include <random>

#include "thermsplat/error.hpp"

namespace thermsplat::benchmark {

scene::DegradationSpec BenchmarkOptions::default_degradation() {
    scene::DegradationSpec d;
    d.gain_amp = 0.2;
    d.offset_walk_sigma = 0.005;
    d.vignette_strength = 0.1;
    d.fpn_sigma = 0.01;
    return d;
}

imaging::Frame render_ground_truth(const scene::SyntheticScene& truth, const scene::Camera& cam, int bit_depth,
                                   const render::RenderSettings& settings) {
    const std::vector<double> bg(static_cast<std::size_t>(cam.width) * cam.height, truth.background);
    const auto out = render::rasterize(truth.gaussians, truth.emissions, bg, cam, settings);
    std::vector<double> px(out.image.pixels().begin(), out.image.pixels().end());
    for (double& v : px) v = imaging::quantize(v, bit_depth);
    return imaging::Frame(cam.width, cam.height, bit_depth, std::move(px));
}

train::Dataset make_dataset(const imaging::Sequence& frames, const std::vector<scene::Camera>& cameras) {
    if (frames.size() != cameras.size()) {
        throw DataError(std::to_string(frames.size()) + " frames but " + std::to_string(cameras.size()) +
                        " cameras");
    }
    train::Dataset d;
    for (std::size_t t = 0; t < frames.size(); ++t) {
        d.train.push_back({cameras[t], frames[t], static_cast<int>(t)});
    }
    return d;
}

Benchmark build_benchmark(const BenchmarkOptions& o) {
    if (o.train_views < 2) throw UsageError("benchmark needs at least two training views");
    if (o.heldout_views < 0) throw UsageError("heldout_views must be non-negative");
    if (o.inference_frame < 0 || o.inference_frame >= o.train_views) {
        throw UsageError("inference_frame is out of range");
    }
    const int total = o.train_views + o.heldout_views;
    scene::SyntheticSceneOptions so;
    so.width = so.height = o.resolution;
    Benchmark b;
    b.truth = scene::generate_synthetic_scene(o.gaussians, total, o.seed, so);

    const int stride = o.heldout_views > 0 ? total / o.heldout_views : total + 1;
    std::vector<imaging::Frame> clean;
    for (int k = 0; k < total; ++k) {
        const scene::Camera& cam = b.truth.cameras[k];
        imaging::Frame f = render_ground_truth(b.truth, cam, o.bit_depth);
        if (o.heldout_views > 0 && (k + 1) % stride == 0 &&
            static_cast<int>(b.heldout_cameras.size()) < o.heldout_views) {
            b.heldout_cameras.push_back(cam);
            b.heldout.push_back(std::move(f));
        } else {
            b.train_cameras.push_back(cam);
            clean.push_back(std::move(f));
        }
    }
    b.clean_train = imaging::Sequence(std::move(clean));
    scene::DegradationSpec deg = o.degradation;
    deg.seed = o.seed * 7919 + 17;
    b.degraded_train = scene::degrade_sequence(b.clean_train, deg);
    b.stabilized = stabilize::stabilize_sequence(b.degraded_train, o.stabilize);

    std::mt19937_64 rng(o.seed * 7919 + 29);
    std::normal_distribution<double> noise(0.0, o.point_noise);
    for (const auto& g : b.truth.gaussians) {
        b.points.push_back(g.mean + Eigen::Vector3d(noise(rng), noise(rng), noise(rng)));
    }

    b.raw = make_dataset(b.degraded_train, b.train_cameras);
    b.stable = make_dataset(b.stabilized.frames, b.train_cameras);
    for (std::size_t k = 0; k < b.heldout.size(); ++k) {
        b.raw.eval.push_back({b.heldout_cameras[k], b.heldout[k]});
        b.stable.eval.push_back({b.heldout_cameras[k], b.heldout[k]});
    }
    b.stable.eval_lut = imaging::invert_lut(b.stabilized.transforms[o.inference_frame].composed);
    return b;
}

}  // namespace thermsplat::benchmark
