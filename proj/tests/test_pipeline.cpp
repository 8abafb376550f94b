#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "test_support.hpp"
#include "thermsplat/benchmark.hpp"
#include "thermsplat/checkpoint.hpp"
#include "thermsplat/cli.hpp"
#include "thermsplat/config.hpp"
#include "thermsplat/error.hpp"
#include "thermsplat/stabilize.hpp"
#include "thermsplat/train.hpp"

using namespace thermsplat;
using imaging::Frame;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("thermsplat_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

benchmark::BenchmarkOptions tiny_benchmark() {
    benchmark::BenchmarkOptions o;
    o.gaussians = 20;
    o.train_views = 4;
    o.heldout_views = 2;
    o.resolution = 16;
    o.seed = 3;
    return o;
}

train::TrainConfig tiny_config() {
    train::TrainConfig c;
    c.iterations = 30;
    c.eval_every = 15;
    c.prune_every = 10;
    c.resolution = 16;
    c.ssim_window = 5;
    c.hidden_width = 8;
    c.gaussian_embedding_dim = 4;
    c.frame_embedding_dim = 3;
    return c;
}

struct CliResult {
    int code;
    std::string out, err;
};

CliResult run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "thermsplat");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

}  // namespace

TEST(KeyValues, ParsesCommentsAndRejectsDuplicates) {
    const auto kv = config::KeyValues::parse("# header\nalpha = 0.5\n\n  # indented comment\nbeta=1\n", "inline");
    EXPECT_EQ(kv.get_double("alpha", 0.0), 0.5);
    EXPECT_EQ(kv.get_int("beta", 0), 1);
    EXPECT_THROW(config::KeyValues::parse("a=1\na=2\n", "inline"), UsageError);
    EXPECT_THROW(config::KeyValues::parse("just words\n", "inline"), UsageError);
    EXPECT_THROW(kv.get_int("alpha", 0), UsageError);
}

TEST(TrainConfig, KeyValueRoundTrip) {
    train::TrainConfig c = tiny_config();
    c.lambda3 = 0.125;
    c.emission_mode = "fixed";
    c.seed = 99;
    const auto back = train::TrainConfig::from(c.to_key_values());
    EXPECT_EQ(back.to_key_values().to_string(), c.to_key_values().to_string());
    const auto kv = c.to_key_values();
    for (const auto& [k, v] : kv.entries()) EXPECT_TRUE(train::TrainConfig::keys().count(k)) << k;
}

TEST(TrainConfig, RejectsBadValues) {
    train::TrainConfig c;
    c.lambda2 = -1;
    EXPECT_THROW(c.validate(), UsageError);
    c = {};
    c.emission_mode = "linear";
    EXPECT_THROW(c.validate(), UsageError);
    config::KeyValues kv;
    kv.set("lamda1", "0.5");
    EXPECT_THROW(train::TrainConfig::from(kv), UsageError);
}

TEST(Train, SingleViewL1DescendsMonotonically) {
    scene::SyntheticScene truth;
    scene::Gaussian g;
    g.mean = {0.0, 0.0, 3.0};
    g.log_scale = Eigen::Vector3d::Constant(std::log(0.3));
    g.opacity_logit = scene::logit(0.9);
    truth.gaussians = {g};
    truth.emissions = {0.8};
    truth.background = 0.1;
    const scene::Camera cam = testsupport::front_camera(16, 16, 16.0);
    train::Dataset data;
    data.train.push_back({cam, benchmark::render_ground_truth(truth, cam, 16), 0});

    train::TrainConfig c = tiny_config();
    c.lambda2 = 0.0;
    c.lambda3 = 0.0;
    c.emission_mode = "fixed";
    c.iterations = 100;
    c.prune_every = 0;
    scene::Gaussian init = g;
    init.log_scale = Eigen::Vector3d::Constant(std::log(0.25));
    init.opacity_logit = scene::logit(0.5);
    init.embedding = Eigen::VectorXd::Zero(1);
    const auto r = train::train(data, c, {init});
    ASSERT_EQ(r.losses.size(), 100u);
    for (std::size_t i = 1; i < r.losses.size(); ++i) EXPECT_LT(r.losses[i], r.losses[i - 1]) << "step " << i;
}

TEST(Train, DeterministicForFixedSeed) {
    const auto b = benchmark::build_benchmark(tiny_benchmark());
    const auto c = tiny_config();
    const auto r1 = train::train(b.stable, c, train::initialize_gaussians(b.points, c));
    const auto r2 = train::train(b.stable, c, train::initialize_gaussians(b.points, c));
    EXPECT_EQ(r1.losses, r2.losses);
    ASSERT_EQ(r1.reports.size(), 2u);
    for (std::size_t k = 0; k < r1.reports.size(); ++k) {
        EXPECT_EQ(r1.reports[k].mean_psnr, r2.reports[k].mean_psnr);
        EXPECT_EQ(r1.reports[k].mean_ssim, r2.reports[k].mean_ssim);
    }
    const fs::path dir = scratch_dir("det");
    train::write_eval_csv(r1.reports, dir / "a.csv");
    train::write_eval_csv(r2.reports, dir / "b.csv");
    EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
}

TEST(Train, ThreadedMatchesSingleThread) {
    const auto b = benchmark::build_benchmark(tiny_benchmark());
    auto c = tiny_config();
    c.iterations = 10;
    const auto r1 = train::train(b.raw, c, train::initialize_gaussians(b.points, c));
    c.threads = 3;
    const auto r3 = train::train(b.raw, c, train::initialize_gaussians(b.points, c));
    ASSERT_EQ(r1.losses.size(), r3.losses.size());
    for (std::size_t i = 0; i < r1.losses.size(); ++i) EXPECT_NEAR(r1.losses[i], r3.losses[i], 1e-9);
}

TEST(Train, PruneRemovesOnlyTransparentGaussians) {
    const auto b = benchmark::build_benchmark(tiny_benchmark());
    const auto c = tiny_config();
    auto init = train::initialize_gaussians(b.points, c);
    for (std::size_t i = 0; i < init.size(); i += 3) init[i].opacity_logit = scene::logit(0.001);
    auto st = train::initial_state(c, init, 4);
    const std::size_t before = st.scene.gaussians.size();
    const std::size_t removed = train::prune(st, 0.005);
    EXPECT_EQ(removed, (before + 2) / 3);
    EXPECT_EQ(st.scene.gaussians.size(), before - removed);
    for (const auto& g : st.scene.gaussians) EXPECT_GE(g.opacity(), 0.005);
    for (const auto& grp : st.adam.groups()) {
        if (!grp.m.empty() && grp.name == "opacity") EXPECT_EQ(grp.m.size(), st.scene.gaussians.size());
    }
}

TEST(Train, EvaluationHasNoHiddenState) {
    const auto b = benchmark::build_benchmark(tiny_benchmark());
    const auto c = tiny_config();
    auto st = train::initial_state(c, train::initialize_gaussians(b.points, c), 4);
    const auto first = train::evaluate(st, b.stable);
    train::render_view(st, b.train_cameras[2]);
    const auto second = train::evaluate(st, b.stable);
    EXPECT_EQ(first.mean_psnr, second.mean_psnr);
}

TEST(Train, NonFiniteParameterAbortsWithIteration) {
    const auto b = benchmark::build_benchmark(tiny_benchmark());
    auto c = tiny_config();
    c.iterations = 5;
    auto init = train::initialize_gaussians(b.points, c);
    init[3].log_scale.x() = std::nan("");
    try {
        train::train(b.raw, c, init);
        FAIL() << "expected divergence";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos) << e.what();
    }
}

TEST(Ablate, FourRowsTwoMetrics) {
    const auto b = benchmark::build_benchmark(tiny_benchmark());
    auto c = tiny_config();
    c.iterations = 5;
    const auto rows = train::ablate(b.raw, b.stable, c, b.points);
    ASSERT_EQ(rows.size(), 4u);
    const fs::path dir = scratch_dir("ablate");
    train::write_ablation_csv(rows, dir / "a.csv");
    std::ifstream in(dir / "a.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "config,psnr,ssim");
    int n = 0;
    while (std::getline(in, line)) {
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 2);
        ++n;
    }
    EXPECT_EQ(n, 4);
}

TEST(Checkpoint, RoundTripPreservesEverything) {
    const auto b = benchmark::build_benchmark(tiny_benchmark());
    auto c = tiny_config();
    c.iterations = 12;
    const auto r = train::train(b.stable, c, train::initialize_gaussians(b.points, c));
    const fs::path dir = scratch_dir("ckpt");
    train::save_checkpoint(r.state, dir / "a.thsp");
    const auto back = train::load_checkpoint(dir / "a.thsp");
    EXPECT_EQ(back.iteration, r.state.iteration);
    EXPECT_EQ(back.config.to_key_values().to_string(), r.state.config.to_key_values().to_string());
    ASSERT_EQ(back.scene.gaussians.size(), r.state.scene.gaussians.size());
    for (std::size_t i = 0; i < back.scene.gaussians.size(); ++i) {
        EXPECT_EQ(back.scene.gaussians[i].mean, r.state.scene.gaussians[i].mean);
        EXPECT_EQ(back.scene.gaussians[i].embedding, r.state.scene.gaussians[i].embedding);
    }
    EXPECT_EQ(train::evaluate(back, b.stable).mean_psnr, train::evaluate(r.state, b.stable).mean_psnr);
    train::save_checkpoint(back, dir / "b.thsp");
    EXPECT_EQ(slurp(dir / "a.thsp"), slurp(dir / "b.thsp"));
}

TEST(Checkpoint, CorruptFilesAreDataErrors) {
    const fs::path dir = scratch_dir("badckpt");
    std::ofstream(dir / "magic.thsp") << "NOPE1234";
    EXPECT_THROW(train::load_checkpoint(dir / "magic.thsp"), DataError);
    EXPECT_THROW(train::load_checkpoint(dir / "missing.thsp"), DataError);

    const auto b = benchmark::build_benchmark(tiny_benchmark());
    auto c = tiny_config();
    const auto st = train::initial_state(c, train::initialize_gaussians(b.points, c), 4);
    train::save_checkpoint(st, dir / "full.thsp");
    const std::string bytes = slurp(dir / "full.thsp");
    std::ofstream(dir / "cut.thsp", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    EXPECT_THROW(train::load_checkpoint(dir / "cut.thsp"), DataError);
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(run_cli({"--help"}).code, 0);
    EXPECT_EQ(run_cli({"--version"}).code, 0);
    EXPECT_EQ(run_cli({}).code, 1);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
    EXPECT_EQ(run_cli({"stabilize", "--in", "/nonexistent/in", "--out", scratch_dir("x").string()}).code, 2);
    const auto bad = run_cli({"stabilize", "--in", "a", "--out", "b", "--alpha", "2"});
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.err.find("alpha"), std::string::npos);
}

TEST(Cli, DiagnoseConstantSequence) {
    const fs::path dir = scratch_dir("cli_diag");
    fs::create_directories(dir / "in");
    for (int t = 0; t < 3; ++t) {
        imaging::save_frame(Frame::filled(8, 8, 8, 0.5), dir / "in" / ("f" + std::to_string(t) + ".png"));
    }
    ASSERT_EQ(run_cli({"diagnose", "--in", (dir / "in").string(), "--out", (dir / "out").string()}).code, 0);
    std::ifstream in(dir / "out" / "drift.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "t,mean,delta");
    int rows = 0;
    while (std::getline(in, line)) {
        EXPECT_EQ(line.substr(line.rfind(',') + 1), "0");
        ++rows;
    }
    EXPECT_EQ(rows, 3);
    EXPECT_TRUE(fs::exists(dir / "out" / "spectrum.csv"));
    EXPECT_TRUE(fs::exists(dir / "out" / "range.csv"));
    EXPECT_TRUE(fs::exists(dir / "out" / "manifest.txt"));
}

TEST(Cli, SynthIsDeterministic) {
    const fs::path dir = scratch_dir("cli_synth");
    for (const char* name : {"a", "b"}) {
        ASSERT_EQ(run_cli({"synth", "--out", (dir / name).string(), "--gaussians", "10", "--train_views", "3",
                       "--heldout_views", "1", "--resolution", "16", "--seed", "4"})
                      .code,
                  0);
    }
    for (const char* f : {"train/frame_0000.png", "train/frame_0002.png", "heldout/frame_0000.png",
                          "train_cameras.txt", "points.txt"}) {
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    }
}

TEST(Cli, StabilizeThenInvertRoundTrips) {
    const fs::path dir = scratch_dir("cli_stab");
    ASSERT_EQ(run_cli({"synth", "--out", (dir / "s").string(), "--gaussians", "10", "--train_views", "5",
                   "--heldout_views", "1", "--resolution", "16", "--bit_depth", "8"})
                  .code,
              0);
    ASSERT_EQ(run_cli({"degrade", "--in", (dir / "s" / "train").string(), "--out", (dir / "d").string(),
                   "--gain_amp", "0.2"})
                  .code,
              0);
    ASSERT_EQ(run_cli({"stabilize", "--in", (dir / "d").string(), "--out", (dir / "st").string()}).code, 0);
    ASSERT_EQ(run_cli({"invert", "--in", (dir / "st").string(), "--out", (dir / "iv").string()}).code, 0);
    const auto orig = imaging::load_sequence(dir / "d");
    const auto back = imaging::load_sequence(dir / "iv");
    ASSERT_EQ(orig.size(), back.size());
    for (std::size_t t = 0; t < orig.size(); ++t) {
        char name[32];
        std::snprintf(name, sizeof name, "lut_%04zu.csv", t);
        const auto lut = imaging::load_lut_csv(dir / "st" / "luts" / name);
        for (std::size_t i = 0; i < orig[t].size(); ++i) {
            const int a = orig[t].level(i), b = back[t].level(i);
            if (std::abs(a - b) > 1) EXPECT_EQ(lut.output_level(a), lut.output_level(b));
        }
    }
}

TEST(Cli, ConfigPrecedenceAndUnknownKeys) {
    const fs::path dir = scratch_dir("cli_cfg");
    fs::create_directories(dir / "in");
    imaging::save_frame(Frame::filled(8, 8, 8, 0.5), dir / "in" / "a.png");
    std::ofstream(dir / "good.cfg") << "alpha=0.5\nbeta=0.3\nlambda1=0.7\n";
    std::ofstream(dir / "bad.cfg") << "alpah=0.5\n";
    ASSERT_EQ(run_cli({"stabilize", "--in", (dir / "in").string(), "--out", (dir / "out").string(), "--config",
                   (dir / "good.cfg").string(), "--beta", "0.4"})
                  .code,
              0);
    const std::string manifest = slurp(dir / "out" / "manifest.txt");
    EXPECT_NE(manifest.find("config.alpha=0.5\n"), std::string::npos);
    EXPECT_NE(manifest.find("config.beta=0.4\n"), std::string::npos);
    EXPECT_EQ(run_cli({"stabilize", "--in", (dir / "in").string(), "--out", (dir / "out2").string(), "--config",
                   (dir / "bad.cfg").string()})
                  .code,
              1);
}

TEST(Cli, TrainEvalAndRenderPath) {
    const fs::path dir = scratch_dir("cli_train");
    const std::string s = (dir / "s").string();
    ASSERT_EQ(run_cli({"synth", "--out", s, "--gaussians", "15", "--train_views", "3", "--heldout_views", "1",
                   "--resolution", "16"})
                  .code,
              0);
    std::ofstream(dir / "train.cfg") << "iterations=8\neval_every=4\nresolution=16\nssim_window=5\nhidden_width=8\n";
    const auto tr = run_cli({"train", "--config", (dir / "train.cfg").string(), "--frames", s + "/train", "--cameras",
                         s + "/train_cameras.txt", "--points", s + "/points.txt", "--out", (dir / "run").string(),
                         "--eval-cameras", s + "/heldout_cameras.txt", "--eval-gt", s + "/heldout"});
    ASSERT_EQ(tr.code, 0) << tr.err;
    EXPECT_TRUE(fs::exists(dir / "run" / "checkpoint.thsp"));
    EXPECT_TRUE(fs::exists(dir / "run" / "eval.csv"));
    const auto ev = run_cli({"eval", "--checkpoint", (dir / "run" / "checkpoint.thsp").string(), "--cameras",
                         s + "/heldout_cameras.txt", "--gt", s + "/heldout", "--out", (dir / "ev").string()});
    ASSERT_EQ(ev.code, 0) << ev.err;
    // The final report of training and a standalone eval score the same checkpoint.
    const std::string a = slurp(dir / "run" / "eval.csv"), b = slurp(dir / "ev" / "eval.csv");
    EXPECT_EQ(a.substr(a.find("\n8,")), b.substr(b.find('\n')));
    const auto rp = run_cli({"render-path", "--checkpoint", (dir / "run" / "checkpoint.thsp").string(), "--cameras",
                         s + "/train_cameras.txt", "--out", (dir / "rp").string()});
    ASSERT_EQ(rp.code, 0) << rp.err;
    EXPECT_TRUE(fs::exists(dir / "rp" / "frame_0002.png"));
}
