// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any criterion fails.
// Usage: acceptance [output-dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <optional>
#include <random>
#include <string>

#include "test_support.hpp"
#include "thermsplat/benchmark.hpp"
#include "thermsplat/diagnostics.hpp"
#include "thermsplat/losses.hpp"
#include "thermsplat/stabilize.hpp"
#include "thermsplat/train.hpp"

using namespace thermsplat;
using imaging::Frame;
using imaging::Sequence;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// 1. Stabilize then invert 100 random 8-bit frames.
Outcome invertibility() {
    const auto t0 = Clock::now();
    std::vector<Frame> frames;
    for (int s = 0; s < 100; ++s) {
        std::mt19937_64 rng(1000 + s);
        std::uniform_int_distribution<int> u(0, 255);
        std::vector<double> px(64 * 64);
        for (double& v : px) v = imaging::level_value(u(rng), 8);
        frames.emplace_back(64, 64, 8, px, s);
    }
    const Sequence seq(frames);
    const auto r = stabilize::stabilize_sequence(seq, {});
    int worst = 0, bad_frames = 0;
    for (std::size_t t = 0; t < seq.size(); ++t) {
        const Frame back = stabilize::invert_frame(r.frames[t], r.transforms[t]);
        int w = 0;
        for (std::size_t i = 0; i < back.size(); ++i) w = std::max(w, std::abs(back.level(i) - seq[t].level(i)));
        worst = std::max(worst, w);
        bad_frames += w > 1;
    }
    const double secs = seconds_since(t0);
    return {worst <= 1 && secs <= 30.0,
            fmt("max error %d/255, %d of 100 frames above 1/255, %.1f s", worst, bad_frames, secs)};
}

// 2. Sinusoidal gain drift on a static synthetic scene.
Outcome drift_suppression(const fs::path& dir) {
    const auto t0 = Clock::now();
    benchmark::BenchmarkOptions bo;
    const auto truth = scene::generate_synthetic_scene(bo.gaussians, 24, bo.seed);
    const Frame clean = benchmark::render_ground_truth(truth, truth.cameras[0], 16);
    std::vector<Frame> frames;
    for (int t = 0; t < 60; ++t) frames.push_back(clean.with_index(t));
    scene::DegradationSpec spec;
    spec.gain_amp = 0.2;
    spec.seed = 11;
    const Sequence degraded = scene::degrade_sequence(Sequence(frames), spec);
    const auto result = stabilize::stabilize_sequence(degraded, {});
    const auto before = diagnostics::mean_intensity_drift(degraded);
    const auto after = diagnostics::mean_intensity_drift(result.frames);
    fs::create_directories(dir);
    diagnostics::write_drift_csv(before, dir / "drift_before.csv");
    diagnostics::write_drift_csv(after, dir / "drift_after.csv");
    stabilize::write_report(degraded, result, dir / "stabilize_report.csv");
    const double ratio = after.sigma / before.sigma;
    const double secs = seconds_since(t0);
    return {ratio <= 0.2 && secs <= 60.0,
            fmt("std before %.5f, after %.5f, ratio %.3f (limit 0.2), %.1f s", before.sigma, after.sigma, ratio, secs)};
}

// 3. BBHE on low-contrast frames.
Outcome bbhe_contract() {
    int range_fail = 0, mean_fail = 0;
    double worst_mean = 0.0, max_input_range = 0.0;
    for (int s = 0; s < 50; ++s) {
        std::mt19937_64 rng(5000 + s);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double mean = 0.4 + 0.2 * u(rng), amp = 0.05 + 0.1 * u(rng);
        const double fx = 1 + 4 * u(rng), fy = 1 + 4 * u(rng), ph = 6.28 * u(rng);
        std::normal_distribution<double> noise(0.0, 0.02);
        std::vector<double> px(64 * 64);
        for (int y = 0; y < 64; ++y) {
            for (int x = 0; x < 64; ++x) {
                const double v = mean + amp * std::sin(fx * x / 64.0 * 6.28 + ph) * std::cos(fy * y / 64.0 * 6.28) + noise(rng);
                px[y * 64 + x] = imaging::quantize(std::clamp(v, 0.0, 1.0), 8);
            }
        }
        const Frame f(64, 64, 8, px);
        const double in_range = diagnostics::dynamic_range_report(f).effective_range;
        max_input_range = std::max(max_input_range, in_range);
        const auto r = stabilize::bbhe(f);
        if (diagnostics::dynamic_range_report(r.frame).effective_range < in_range) ++range_fail;
        const double dm = std::abs(r.frame.mean() - f.mean());
        worst_mean = std::max(worst_mean, dm);
        if (dm > 0.05) ++mean_fail;
    }
    return {range_fail == 0 && mean_fail == 0 && max_input_range < 0.5,
            fmt("range shrank on %d frames, |dmean| max %.4f (limit 0.05), input range max %.3f", range_fail,
                worst_mean, max_input_range)};
}

// 4. Blurred noise has less high-frequency power than raw noise.
Outcome spectrum_trend() {
    int failures = 0;
    for (int s = 0; s < 10; ++s) {
        std::mt19937_64 rng(7000 + s);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<double> px(64 * 64);
        for (double& v : px) v = u(rng);
        const Frame raw(64, 64, 16, px);
        const Frame blurred(64, 64, 16, scene::gaussian_blur(raw.pixels(), 64, 64, 2.0));
        const auto a = diagnostics::radial_power_spectrum(raw);
        const auto b = diagnostics::radial_power_spectrum(blurred);
        const std::size_t n = a.power.size();
        for (std::size_t k = n - n / 4; k < n; ++k) failures += !(b.power[k] < a.power[k]);
    }
    return {failures == 0, fmt("%d top-quartile bins not strictly lower over 10 seeds", failures)};
}

// 5. Renderer against the brute-force oracle plus the two-splat example.
Outcome renderer_correctness() {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto cam = testsupport::front_camera(32, 32, 30.0);
        const int n = 1 + static_cast<int>(seed % 20);
        const auto gs = testsupport::random_gaussians(n, seed, cam.fx, cam.width, 0);
        std::mt19937_64 rng(seed + 100);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<double> emissions(n), bg(cam.width * cam.height);
        for (auto& e : emissions) e = u(rng);
        for (auto& b : bg) b = u(rng);
        const auto fast = render::rasterize(gs, emissions, bg, cam, {});
        const auto slow = testsupport::brute_force_render(gs, emissions, bg, cam, true);
        for (std::size_t p = 0; p < bg.size(); ++p) worst = std::max(worst, std::abs(fast.image.pixels()[p] - slow.image[p]));
    }

    const auto cam = testsupport::front_camera(16, 16, 16.0);
    const double z = 2.0;
    scene::Gaussian g;
    g.mean = {0.5 * z / cam.fx, 0.5 * z / cam.fy, z};
    g.log_scale = Eigen::Vector3d::Constant(std::log(0.05));
    g.opacity_logit = scene::logit(0.5);
    const std::vector<scene::Gaussian> pair{g, g};
    const auto out = render::rasterize(pair, std::vector<double>{1.0, 0.0}, std::vector<double>(256, 0.0), cam, {});
    const std::size_t p = 8 * 16 + 8;
    const bool example = std::abs(out.foreground.pixels()[p] - 0.5) < 1e-9 && std::abs(out.residual[p] - std::exp(-1.0)) < 1e-9 &&
                         std::abs(out.image.pixels()[p] - 0.31606) < 1e-5;
    return {worst <= 1e-5 && example,
            fmt("oracle max |diff| %.2e over 20 scenes; two-splat foreground %.6f, m %.6f, image %.6f", worst,
                out.foreground[p], out.residual[p], out.image[p])};
}

// 6. Finite differences through render and the combined training loss.
Outcome gradient_exactness() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::string worst_group;
    for (std::uint64_t seed : {1, 2, 3}) {
        std::mt19937_64 rng(seed + 40);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<double> px(256);
        for (double& v : px) v = u(rng);
        const Frame target(16, 16, 16, px);
        auto objective = [&](const render::RenderOutput& out) {
            const auto l = train::combined_loss(out.image, target, out.residual, train::LossWeights{}, train::SsimOptions{});
            return testsupport::Objective{l.total, l.image_adjoint, l.residual_adjoint};
        };
        for (const auto& e : testsupport::full_gradient_errors(render::BackgroundBlend::kResidual, model::EmissionMode::kMlp,
                                                               seed, objective)) {
            if (e.relative_error > worst) {
                worst = e.relative_error;
                worst_group = e.group + " seed " + std::to_string(seed);
            }
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-3 && secs <= 120.0,
            fmt("worst relative error %.2e (%s), %.1f s", worst, worst_group.c_str(), secs)};
}

struct PipelineRun {
    std::vector<train::AblationRow> rows;
    std::vector<train::EvalReport> full_reports;
    double full_seconds = 0.0;
};

PipelineRun run_ablation(const benchmark::Benchmark& b, const train::TrainConfig& cfg) {
    PipelineRun run;
    std::vector<train::EvalReport> all;
    train::TrainCallbacks cb;
    cb.on_eval = [&](const train::EvalReport& r) {
        all.push_back(r);
        std::cout << "  eval iter " << r.iteration << " psnr " << r.mean_psnr << std::endl;
    };
    run.rows = train::ablate(b.raw, b.stable, cfg, b.points, cb);
    const std::size_t per = all.size() / 4;
    run.full_reports.assign(all.end() - static_cast<std::ptrdiff_t>(per), all.end());
    run.full_seconds = run.full_reports.back().wall_seconds;
    return run;
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
    fs::create_directories(out);
    std::vector<std::pair<std::string, Outcome>> results;
    auto record = [&](const std::string& name, const std::function<Outcome()>& fn) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::cout << name << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
        results.emplace_back(name, o);
    };

    record("criterion 1 (invertibility)", invertibility);
    record("criterion 2 (drift suppression)", [&] { return drift_suppression(out / "drift_run1"); });
    record("criterion 3 (BBHE contract)", bbhe_contract);
    record("criterion 4 (spectrum diagnostic)", spectrum_trend);
    record("criterion 5 (renderer correctness)", renderer_correctness);
    record("criterion 6 (gradient exactness)", gradient_exactness);

    // Criteria 7 and 8 share one benchmark and one ablation; the full variant is the end-to-end run.
    const benchmark::BenchmarkOptions bo;
    const train::TrainConfig cfg;
    std::optional<benchmark::Benchmark> bench;
    PipelineRun ablation;
    bool trained = false;
    std::string train_error;
    try {
        bench = benchmark::build_benchmark(bo);
        std::cout << "training four ablation variants (" << cfg.iterations << " iterations each)" << std::endl;
        ablation = run_ablation(*bench, cfg);
        train::write_eval_csv(ablation.full_reports, out / "eval_run1.csv");
        train::write_ablation_csv(ablation.rows, out / "ablation.csv");
        trained = true;
    } catch (const std::exception& e) {
        train_error = std::string("exception: ") + e.what();
    }

    record("criterion 7 (end-to-end reconstruction)", [&]() -> Outcome {
        if (!trained) return {false, train_error};
        const auto& last = ablation.full_reports.back();
        return {last.mean_psnr >= 28.0 && last.iteration <= 5000 && ablation.full_seconds <= 900.0,
                fmt("held-out PSNR %.2f dB at iteration %lld (limit 28), training %.0f s", last.mean_psnr,
                    static_cast<long long>(last.iteration), ablation.full_seconds)};
    });

    record("criterion 8 (ablation trend)", [&]() -> Outcome {
        if (!trained) return {false, train_error};
        double base = 0, pre = 0, mlp = 0, full = 0;
        for (const auto& r : ablation.rows) {
            if (r.name == "baseline") base = r.psnr;
            if (r.name == "preprocessing") pre = r.psnr;
            if (r.name == "emission_mlp") mlp = r.psnr;
            if (r.name == "full") full = r.psnr;
        }
        const bool ok = full >= mlp && mlp >= base && full >= pre && pre >= base && full - base >= 2.0;
        return {ok, fmt("baseline %.2f, preprocessing %.2f, emission_mlp %.2f, full %.2f dB (full-baseline %.2f)", base,
                        pre, mlp, full, full - base)};
    });

    record("criterion 9 (determinism)", [&]() -> Outcome {
        if (!trained) return {false, train_error};
        drift_suppression(out / "drift_run2");
        bool drift_same = true;
        for (const char* f : {"drift_before.csv", "drift_after.csv", "stabilize_report.csv"}) {
            drift_same = drift_same && slurp(out / "drift_run1" / f) == slurp(out / "drift_run2" / f);
        }
        std::cout << "  rerunning the full pipeline" << std::endl;
        const auto rerun_bench = benchmark::build_benchmark(bo);
        train::TrainConfig full = cfg;
        full.emission_mode = "mlp";
        const auto r = train::train(rerun_bench.stable, full, train::initialize_gaussians(rerun_bench.points, full));
        train::write_eval_csv(r.reports, out / "eval_run2.csv");
        const bool eval_same = slurp(out / "eval_run1.csv") == slurp(out / "eval_run2.csv");
        return {drift_same && eval_same, fmt("drift CSVs %s, eval CSVs %s", drift_same ? "identical" : "DIFFER",
                                             eval_same ? "identical" : "DIFFER")};
    });

    int failed = 0;
    for (const auto& [name, o] : results) failed += !o.pass;
    std::cout << (results.size() - failed) << " of " << results.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
