#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <map>

#include "test_support.hpp"
#include "thermsplat/error.hpp"
#include "thermsplat/model.hpp"
#include "thermsplat/render.hpp"

using namespace thermsplat;
using render::BackgroundBlend;
using render::RenderSettings;
using testsupport::front_camera;

namespace {

scene::Gaussian gaussian_at(const Eigen::Vector3d& mean, double scale, double opacity) {
    scene::Gaussian g;
    g.mean = mean;
    g.log_scale.setConstant(std::log(scale));
    g.opacity_logit = scene::logit(opacity);
    return g;
}

}  // namespace

TEST(Projection, IsotropicOnAxis) {
    const auto cam = front_camera(64, 64, 50.0);
    const double z = 3.0, s = 0.2;
    RenderSettings settings;
    settings.dilation = 0.0;
    auto sp = render::project_gaussian(gaussian_at({0, 0, z}, s, 0.5), cam, settings);
    ASSERT_TRUE(sp);
    EXPECT_NEAR(sp->mean2d.x(), cam.cx, 1e-12);
    EXPECT_NEAR(sp->mean2d.y(), cam.cy, 1e-12);
    const double expect = std::pow(cam.fx * s / z, 2);
    EXPECT_NEAR(sp->cov2d(0, 0), expect, 0.01 * expect);
    EXPECT_NEAR(sp->cov2d(1, 1), expect, 0.01 * expect);
    EXPECT_NEAR(sp->cov2d(0, 1), 0.0, 1e-9);
}

TEST(Projection, BehindCameraIsCulled) {
    const auto cam = front_camera(32, 32, 30.0);
    EXPECT_FALSE(render::project_gaussian(gaussian_at({0, 0, -1}, 0.1, 0.5), cam));
    EXPECT_FALSE(render::project_gaussian(gaussian_at({0, 0, 0.005}, 0.1, 0.5), cam));
}

TEST(Projection, FocalScalesExtent) {
    auto cam = front_camera(64, 64, 40.0);
    RenderSettings settings;
    settings.dilation = 0.0;
    auto g = gaussian_at({0.3, -0.2, 2.5}, 0.15, 0.5);
    g.rotation = Eigen::Vector4d(0.9, 0.2, -0.3, 0.1);
    const auto a = render::project_gaussian(g, cam, settings);
    cam.fx *= 2.0;
    const auto b = render::project_gaussian(g, cam, settings);
    EXPECT_NEAR(std::sqrt(b->cov2d(0, 0)), 2.0 * std::sqrt(a->cov2d(0, 0)), 1e-9);
    EXPECT_NEAR(b->cov2d(1, 1), a->cov2d(1, 1), 1e-9);
}

TEST(Rasterize, EmptySceneShowsBackground) {
    const auto cam = front_camera(8, 8, 8.0);
    std::vector<double> bg(64);
    for (int i = 0; i < 64; ++i) bg[i] = i / 64.0;
    const auto out = render::rasterize({}, {}, bg, cam, RenderSettings{});
    for (int i = 0; i < 64; ++i) {
        EXPECT_EQ(out.residual[i], 1.0);
        EXPECT_DOUBLE_EQ(out.image[i], bg[i]);
        EXPECT_EQ(out.contrib_count[i], 0);
    }
}

TEST(Rasterize, TwoCoincidentSplats) {
    // Both splats are centered on pixel (8, 8) with opacity 0.5, so alpha = 0.5 there.
    const auto cam = front_camera(16, 16, 16.0);
    const double z = 2.0;
    const Eigen::Vector3d mean(0.5 * z / cam.fx, 0.5 * z / cam.fy, z);
    std::vector<scene::Gaussian> gs{gaussian_at(mean, 0.05, 0.5), gaussian_at(mean, 0.05, 0.5)};
    const std::vector<double> emissions{1.0, 0.0};
    const std::vector<double> bg(256, 0.0);
    render::RasterState state;
    const auto out = render::rasterize(gs, emissions, bg, cam, RenderSettings{}, &state);
    const std::size_t p = 8 * 16 + 8;
    EXPECT_NEAR(out.foreground[p], 0.5, 1e-12);
    EXPECT_NEAR(out.residual[p], std::exp(-1.0), 1e-12);
    EXPECT_NEAR(out.image[p], 0.31606, 1e-5);

    std::vector<double> adj(256, 0.0);
    adj[p] = 1.0;
    const auto grads = render::rasterize_backward(state, out, gs, cam, RenderSettings{}, adj, {});
    EXPECT_NEAR(grads.emissions[0], (1.0 - std::exp(-1.0)) * 0.5, 1e-12);
    EXPECT_NEAR(grads.emissions[1], (1.0 - std::exp(-1.0)) * 0.25, 1e-12);
}

TEST(Rasterize, OpaqueSplatClampsAlpha) {
    const auto cam = front_camera(16, 16, 16.0);
    const double z = 2.0;
    auto g = gaussian_at({0.5 * z / cam.fx, 0.5 * z / cam.fy, z}, 0.05, 0.5);
    g.opacity_logit = 30.0;
    const std::vector<double> bg(256, 0.0);
    const auto out = render::rasterize(std::span(&g, 1), std::vector<double>{0.7}, bg, cam, RenderSettings{});
    EXPECT_NEAR(out.foreground[8 * 16 + 8], 0.999 * 0.7, 1e-12);
}

TEST(Rasterize, MatchesBruteForceOracle) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto cam = front_camera(24, 20, 22.0);
        const int n = 1 + static_cast<int>(seed % 20);
        auto gs = testsupport::random_gaussians(n, seed, cam.fx, cam.width, 0);
        std::vector<double> emissions(n), bg(cam.width * cam.height);
        std::mt19937_64 rng(seed + 100);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (auto& e : emissions) e = u(rng);
        for (auto& b : bg) b = u(rng);
        for (BackgroundBlend blend : {BackgroundBlend::kResidual, BackgroundBlend::kStandard}) {
            RenderSettings settings;
            settings.blend = blend;
            const auto fast = render::rasterize(gs, emissions, bg, cam, settings);
            const auto slow =
                testsupport::brute_force_render(gs, emissions, bg, cam, blend == BackgroundBlend::kResidual);
            for (std::size_t p = 0; p < bg.size(); ++p) {
                ASSERT_NEAR(fast.image[p], slow.image[p], 1e-5) << "seed " << seed << " pixel " << p;
                ASSERT_NEAR(fast.residual[p], slow.residual[p], 1e-5);
            }
        }
    }
}

TEST(Rasterize, InvariantToInputOrder) {
    const auto cam = front_camera(16, 16, 16.0);
    auto gs = testsupport::random_gaussians(8, 5, cam.fx, 16, 0);
    std::vector<double> emissions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
    const std::vector<double> bg(256, 0.25);
    const auto a = render::rasterize(gs, emissions, bg, cam, RenderSettings{});
    std::reverse(gs.begin(), gs.end());
    std::reverse(emissions.begin(), emissions.end());
    const auto b = render::rasterize(gs, emissions, bg, cam, RenderSettings{});
    for (std::size_t p = 0; p < 256; ++p) EXPECT_NEAR(a.image[p], b.image[p], 1e-15);
}

TEST(Rasterize, CompositingWeightsBounded) {
    const auto cam = front_camera(16, 16, 16.0);
    const auto gs = testsupport::random_gaussians(12, 9, cam.fx, 16, 0, 0.2, 0.4, 0.9, 0.99);
    const std::vector<double> ones(gs.size(), 1.0);
    const std::vector<double> bg(256, 0.0);
    RenderSettings settings;
    settings.blend = BackgroundBlend::kStandard;
    const auto out = render::rasterize(gs, ones, bg, cam, settings);
    for (std::size_t p = 0; p < 256; ++p) {
        EXPECT_GE(out.foreground[p], 0.0);
        EXPECT_LE(out.foreground[p], 1.0);
        EXPECT_GT(out.residual[p], 0.0);
        EXPECT_LE(out.residual[p], 1.0);
    }
}

TEST(Rasterize, NonFiniteParameterNamesGaussian) {
    const auto cam = front_camera(16, 16, 16.0);
    auto gs = testsupport::random_gaussians(4, 2, cam.fx, 16, 0);
    gs[2].log_scale[1] = std::nan("");
    try {
        render::rasterize(gs, std::vector<double>(4, 0.5), std::vector<double>(256, 0.0), cam, {});
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("Gaussian 2"), std::string::npos);
    }
}

TEST(Rasterize, ThreadedMatchesSingleThread) {
    const auto cam = front_camera(32, 32, 30.0);
    const auto gs = testsupport::random_gaussians(20, 4, cam.fx, 32, 0);
    std::vector<double> emissions(20, 0.6), bg(1024, 0.1), adj(1024);
    for (std::size_t i = 0; i < adj.size(); ++i) adj[i] = std::sin(0.37 * i);
    RenderSettings one, many;
    many.threads = 4;
    render::RasterState s1, s4;
    const auto a = render::rasterize(gs, emissions, bg, cam, one, &s1);
    const auto b = render::rasterize(gs, emissions, bg, cam, many, &s4);
    for (std::size_t p = 0; p < 1024; ++p) EXPECT_EQ(a.image[p], b.image[p]);
    EXPECT_EQ(s1.checksum, s4.checksum);
    const auto ga = render::rasterize_backward(s1, a, gs, cam, one, adj, {});
    const auto gb = render::rasterize_backward(s4, b, gs, cam, many, adj, {});
    for (std::size_t i = 0; i < gs.size(); ++i) {
        const double scale = std::max(1.0, ga.gaussians[i].mean.norm());
        EXPECT_LE((ga.gaussians[i].mean - gb.gaussians[i].mean).norm() / scale, 1e-6);
        EXPECT_NEAR(ga.emissions[i], gb.emissions[i], 1e-9);
    }
}

TEST(Rasterize, BackwardDetectsTamperedState) {
    const auto cam = front_camera(16, 16, 16.0);
    const auto gs = testsupport::random_gaussians(6, 3, cam.fx, 16, 0);
    render::RasterState state;
    const std::vector<double> em(6, 0.5), bg(256, 0.0);
    const auto out = render::rasterize(gs, em, bg, cam, {}, &state);
    ASSERT_GT(state.contributions.size(), 2u);
    std::swap(state.splats[0], state.splats[1]);
    EXPECT_THROW(render::rasterize_backward(state, out, gs, cam, {}, std::vector<double>(256, 1.0), {}),
                 DataError);
}

TEST(RenderBackward, ZeroAdjointGivesZeroGradients) {
    const auto cam = front_camera(16, 16, 16.0);
    model::ModelConfig cfg;
    cfg.seed = 3;
    const model::EmissionModel em(cfg);
    const model::BackgroundModel bgm(cfg);
    const auto gs = testsupport::random_gaussians(5, 1, cam.fx, 16, cfg.gaussian_embedding_dim);
    const Eigen::VectorXd ef = Eigen::VectorXd::Constant(cfg.frame_embedding_dim, 0.1);
    const auto fwd = render::render(gs, cam, ef, em, bgm, {});
    const std::vector<double> zero(256, 0.0);
    const auto g = render::render_backward(fwd, gs, cam, ef, em, bgm, {}, zero, zero);
    for (const auto& gg : g.gaussians) {
        EXPECT_EQ(gg.mean.norm() + gg.log_scale.norm() + gg.rotation.norm() + std::abs(gg.opacity_logit), 0.0);
    }
    EXPECT_EQ(g.gaussian_embeddings.norm(), 0.0);
    EXPECT_EQ(g.frame_embedding.norm(), 0.0);
    for (double v : g.emission_params) EXPECT_EQ(v, 0.0);
    for (double v : g.background_params) EXPECT_EQ(v, 0.0);
}

namespace {

// Weighted sum of image and m(r), which exercises both adjoint inputs independently.
void check_full_gradients(BackgroundBlend blend, model::EmissionMode mode, std::uint64_t seed) {
    std::vector<double> wi(256), wm(256);
    for (int p = 0; p < 256; ++p) {
        wi[p] = std::sin(0.13 * p + static_cast<double>(seed));
        wm[p] = 0.5 * std::cos(0.29 * p);
    }
    auto objective = [&](const render::RenderOutput& out) {
        testsupport::Objective o{0.0, wi, wm};
        for (int p = 0; p < 256; ++p) o.value += wi[p] * out.image[p] + wm[p] * out.residual[p];
        return o;
    };
    for (const auto& e : testsupport::full_gradient_errors(blend, mode, seed, objective)) {
        EXPECT_LE(e.relative_error, 1e-3) << e.group << " blend=" << render::to_string(blend) << " seed=" << seed;
    }
}

}  // namespace

TEST(RenderBackward, MatchesFiniteDifferencesResidualBlend) {
    for (std::uint64_t seed : {1, 2, 3}) check_full_gradients(BackgroundBlend::kResidual, model::EmissionMode::kMlp, seed);
}

TEST(RenderBackward, MatchesFiniteDifferencesStandardBlend) {
    for (std::uint64_t seed : {1, 2}) check_full_gradients(BackgroundBlend::kStandard, model::EmissionMode::kMlp, seed);
}

TEST(RenderBackward, MatchesFiniteDifferencesFixedEmission) {
    check_full_gradients(BackgroundBlend::kResidual, model::EmissionMode::kFixed, 4);
}
