#include "thermsplat/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "thermsplat/benchmark.hpp"
#include "thermsplat/checkpoint.hpp"
#include "thermsplat/config.hpp"
#include "thermsplat/diagnostics.hpp"
#include "thermsplat/error.hpp"
#include "thermsplat/imaging.hpp"
#include "thermsplat/scene.hpp"
#include "thermsplat/stabilize.hpp"
#include "thermsplat/train.hpp"

namespace thermsplat::cli {

namespace fs = std::filesystem;
using config::format_double;
using config::KeyValues;

namespace {

// ---------------------------------------------------------------------------
// Config plumbing: defaults < --config file < --<key> flags.

std::set<std::string> all_keys();

struct Keyed {
    explicit Keyed(KeyValues d) : defaults(std::move(d)) {}

    KeyValues defaults;
    std::string config_path;
    std::map<std::string, std::string> flags;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "key=value config file");
        for (const auto& [k, v] : defaults.entries()) {
            app->add_option("--" + k, flags[k], "default " + v);
        }
    }

    KeyValues resolve() const {
        KeyValues kv = defaults;
        if (!config_path.empty()) {
            // One config file may serve every subcommand: keys belonging to other subcommands are
            // accepted and ignored, unknown keys are rejected.
            const KeyValues file = KeyValues::load(config_path);
            file.require_known(all_keys());
            for (const auto& [k, v] : file.entries()) {
                if (defaults.has(k)) kv.set(k, v);
            }
        }
        for (const auto& [k, v] : flags) {
            if (!v.empty()) kv.set(k, v);
        }
        return kv;
    }
};

int env_threads() {
    const char* s = std::getenv("THERMSPLAT_THREADS");
    if (!s || !*s) return 1;
    try {
        const int n = std::stoi(s);
        if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("THERMSPLAT_THREADS must be a positive integer, got '") + s + "'");
}

KeyValues stabilize_defaults() {
    const stabilize::StabilizeConfig c;
    KeyValues kv;
    kv.set("alpha", format_double(c.alpha));
    kv.set("beta", format_double(c.beta));
    kv.set("warmup", std::to_string(c.warmup));
    return kv;
}

stabilize::StabilizeConfig stabilize_from(const KeyValues& kv) {
    stabilize::StabilizeConfig c;
    c.alpha = kv.get_double("alpha", c.alpha);
    c.beta = kv.get_double("beta", c.beta);
    c.warmup = kv.get_int("warmup", c.warmup);
    c.validate();
    return c;
}

KeyValues degradation_defaults(const scene::DegradationSpec& d) {
    KeyValues kv;
    kv.set("gain_amp", format_double(d.gain_amp));
    kv.set("offset_walk_sigma", format_double(d.offset_walk_sigma));
    kv.set("vignette_strength", format_double(d.vignette_strength));
    kv.set("fpn_sigma", format_double(d.fpn_sigma));
    kv.set("fpn_column", d.fpn_column ? "true" : "false");
    kv.set("blur_sigma", format_double(d.blur_sigma));
    kv.set("seed", std::to_string(d.seed));
    return kv;
}

scene::DegradationSpec degradation_from(const KeyValues& kv) {
    scene::DegradationSpec d;
    d.gain_amp = kv.get_double("gain_amp", d.gain_amp);
    d.offset_walk_sigma = kv.get_double("offset_walk_sigma", d.offset_walk_sigma);
    d.vignette_strength = kv.get_double("vignette_strength", d.vignette_strength);
    d.fpn_sigma = kv.get_double("fpn_sigma", d.fpn_sigma);
    d.fpn_column = kv.get_bool("fpn_column", d.fpn_column);
    d.blur_sigma = kv.get_double("blur_sigma", d.blur_sigma);
    d.seed = kv.get_u64("seed", d.seed);
    d.validate();
    return d;
}

KeyValues benchmark_defaults() {
    const benchmark::BenchmarkOptions o;
    KeyValues kv;
    kv.set("gaussians", std::to_string(o.gaussians));
    kv.set("train_views", std::to_string(o.train_views));
    kv.set("heldout_views", std::to_string(o.heldout_views));
    kv.set("resolution", std::to_string(o.resolution));
    kv.set("bit_depth", std::to_string(o.bit_depth));
    kv.set("point_noise", format_double(o.point_noise));
    kv.set("seed", std::to_string(o.seed));
    return kv;
}

benchmark::BenchmarkOptions benchmark_from(const KeyValues& kv) {
    benchmark::BenchmarkOptions o;
    o.gaussians = kv.get_int("gaussians", o.gaussians);
    o.train_views = kv.get_int("train_views", o.train_views);
    o.heldout_views = kv.get_int("heldout_views", o.heldout_views);
    o.resolution = kv.get_int("resolution", o.resolution);
    o.bit_depth = kv.get_int("bit_depth", o.bit_depth);
    o.point_noise = kv.get_double("point_noise", o.point_noise);
    o.seed = kv.get_u64("seed", o.seed);
    o.inference_frame = kv.get_int("inference_frame", o.inference_frame);
    if (o.bit_depth != 8 && o.bit_depth != 16) throw UsageError("bit_depth must be 8 or 16");
    if (o.gaussians < 1 || o.resolution < 8) throw UsageError("gaussians must be >= 1 and resolution >= 8");
    return o;
}

KeyValues without(const KeyValues& kv, const std::string& key) {
    KeyValues out;
    for (const auto& [k, v] : kv.entries()) {
        if (k != key) out.set(k, v);
    }
    return out;
}

KeyValues train_defaults() {
    train::TrainConfig c;
    c.threads = env_threads();
    return c.to_key_values();
}

std::set<std::string> all_keys() {
    std::set<std::string> keys = train::TrainConfig::keys();
    for (const KeyValues& kv : {stabilize_defaults(), degradation_defaults({}), benchmark_defaults()}) {
        for (const auto& [k, v] : kv.entries()) keys.insert(k);
    }
    return keys;
}

// ---------------------------------------------------------------------------
// Manifest and file helpers

struct Manifest {
    std::string subcommand;
    KeyValues resolved;
    std::map<std::string, std::string> inputs;
    std::map<std::string, std::string> outputs;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void write(const fs::path& dir) const {
        std::ofstream out(dir / "manifest.txt");
        if (!out) throw DataError((dir / "manifest.txt").string() + ": cannot open for writing");
        out << "subcommand=" << subcommand << '\n';
        out << "version=" << kVersion << '\n';
        out << "seed=" << resolved.get_string("seed", "none") << '\n';
        for (const auto& [k, v] : inputs) out << "input." << k << '=' << v << '\n';
        for (const auto& [k, v] : outputs) out << "output." << k << '=' << v << '\n';
        for (const auto& [k, v] : resolved.entries()) out << "config." << k << '=' << v << '\n';
        out << std::setprecision(6) << "wall_seconds="
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << '\n';
    }
};

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw DataError(dir.string() + ": cannot create output directory");
}

void require_distinct(const fs::path& in, const fs::path& out) {
    std::error_code ec;
    if (fs::exists(out) && fs::equivalent(in, out, ec)) {
        throw UsageError("output directory must differ from the input directory");
    }
}

std::string numbered(const std::string& stem, std::size_t i, const std::string& ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04zu", i);
    return stem + "_" + buf + ext;
}

std::vector<imaging::MonotoneLut> load_luts(const fs::path& dir, std::size_t count) {
    std::vector<imaging::MonotoneLut> luts;
    for (std::size_t t = 0; t < count; ++t) luts.push_back(imaging::load_lut_csv(dir / numbered("lut", t, ".csv")));
    return luts;
}

std::vector<train::EvalView> load_eval_views(const fs::path& cameras, const fs::path& gt_dir) {
    const auto cams = scene::read_cameras(cameras);
    const auto frames = imaging::load_sequence(gt_dir);
    if (cams.size() != frames.size()) {
        throw DataError(std::to_string(cams.size()) + " held-out cameras but " + std::to_string(frames.size()) +
                        " ground-truth frames");
    }
    std::vector<train::EvalView> views;
    for (std::size_t i = 0; i < cams.size(); ++i) views.push_back({cams[i], frames[i]});
    return views;
}

void write_frames(const std::vector<imaging::Frame>& frames, const std::vector<fs::path>& names, const fs::path& dir) {
    for (std::size_t t = 0; t < frames.size(); ++t) imaging::save_frame(frames[t], dir / names[t].filename());
}

std::vector<fs::path> numbered_names(std::size_t n, const std::string& ext) {
    std::vector<fs::path> out;
    for (std::size_t t = 0; t < n; ++t) out.emplace_back(numbered("frame", t, ext));
    return out;
}

train::TrainCallbacks progress(std::ostream& out, int every) {
    train::TrainCallbacks cb;
    cb.on_step = [&out, every](const train::StepStats& s) {
        if (every > 0 && s.iteration % every == 0) {
            out << "iter " << s.iteration << " loss " << s.loss << " gaussians " << s.gaussians << std::endl;
        }
    };
    cb.on_eval = [&out](const train::EvalReport& r) {
        out << "eval iter " << r.iteration << " psnr " << r.mean_psnr << " ssim " << r.mean_ssim << std::endl;
    };
    return cb;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Thermal Gaussian splatting toolkit: stabilization, diagnostics, training and evaluation."};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    // stabilize
    auto* stab = app.add_subcommand("stabilize", "Align each frame to a running reference CDF, then apply BBHE");
    std::string stab_in, stab_out;
    stab->add_option("--in", stab_in, "input frame directory")->required();
    stab->add_option("--out", stab_out, "output directory")->required();
    Keyed stab_keys{stabilize_defaults()};
    stab_keys.attach(stab);

    // invert
    auto* inv = app.add_subcommand("invert", "Map stabilized frames back through their inverse LUTs");
    std::string inv_in, inv_luts, inv_out;
    inv->add_option("--in", inv_in, "stabilized frame directory")->required();
    inv->add_option("--luts", inv_luts, "directory of lut_NNNN.csv files (default <in>/luts)");
    inv->add_option("--out", inv_out, "output directory")->required();

    // diagnose
    auto* diag = app.add_subcommand("diagnose", "Write drift, spectrum and dynamic-range reports");
    std::string diag_in, diag_out;
    bool diag_hann = false;
    diag->add_option("--in", diag_in, "input frame directory")->required();
    diag->add_option("--out", diag_out, "output directory")->required();
    diag->add_flag("--hann", diag_hann, "apply a Hann window before the FFT");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic multiview thermal scene");
    std::string synth_out, synth_format = "png";
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--format", synth_format, "frame format: png or pgm")->check(CLI::IsMember({"png", "pgm"}));
    Keyed synth_keys{benchmark_defaults()};
    synth_keys.attach(synth);

    // degrade
    auto* deg = app.add_subcommand("degrade", "Apply drift, vignetting, fixed-pattern noise and blur");
    std::string deg_in, deg_out;
    deg->add_option("--in", deg_in, "input frame directory")->required();
    deg->add_option("--out", deg_out, "output directory")->required();
    Keyed deg_keys{degradation_defaults(scene::DegradationSpec{})};
    deg_keys.attach(deg);

    // train
    auto* tr = app.add_subcommand("train", "Optimize a Gaussian scene on posed frames");
    std::string tr_frames, tr_cameras, tr_points, tr_out, tr_eval_cams, tr_eval_gt, tr_eval_lut;
    int tr_log_every = 100;
    tr->add_option("--frames", tr_frames, "training frame directory")->required();
    tr->add_option("--cameras", tr_cameras, "cameras.txt for the training frames")->required();
    tr->add_option("--points", tr_points, "initial point cloud (x y z per line)")->required();
    tr->add_option("--out", tr_out, "output directory")->required();
    tr->add_option("--eval-cameras", tr_eval_cams, "held-out cameras");
    tr->add_option("--eval-gt", tr_eval_gt, "held-out ground-truth frames");
    tr->add_option("--eval-lut", tr_eval_lut, "stabilization LUT of the inference frame; renders pass through its inverse");
    tr->add_option("--log-every", tr_log_every, "progress line interval (0 disables)");
    Keyed tr_keys{train_defaults()};
    tr_keys.attach(tr);

    // eval
    auto* ev = app.add_subcommand("eval", "Score a checkpoint on held-out views");
    std::string ev_ckpt, ev_cameras, ev_gt, ev_lut, ev_out = ".";
    int ev_threads = 0;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    ev->add_option("--cameras", ev_cameras, "held-out cameras")->required();
    ev->add_option("--gt", ev_gt, "ground-truth frame directory")->required();
    ev->add_option("--lut", ev_lut, "stabilization LUT of the inference frame; renders pass through its inverse");
    ev->add_option("--out", ev_out, "output directory (default .)");
    ev->add_option("--threads", ev_threads, "renderer threads (default THERMSPLAT_THREADS or 1)");

    // render-path
    auto* rp = app.add_subcommand("render-path", "Render a checkpoint along a camera path");
    std::string rp_ckpt, rp_cameras, rp_out, rp_lut, rp_format = "png";
    int rp_threads = 0, rp_bits = 16;
    rp->add_option("--checkpoint", rp_ckpt, "checkpoint file")->required();
    rp->add_option("--cameras", rp_cameras, "camera path in cameras.txt format")->required();
    rp->add_option("--out", rp_out, "output directory")->required();
    rp->add_option("--lut", rp_lut, "stabilization LUT of the inference frame; renders pass through its inverse");
    rp->add_option("--format", rp_format, "png or pgm")->check(CLI::IsMember({"png", "pgm"}));
    rp->add_option("--bit-depth", rp_bits, "8 or 16")->check(CLI::IsMember({8, 16}));
    rp->add_option("--threads", rp_threads, "renderer threads (default THERMSPLAT_THREADS or 1)");

    // ablate
    auto* ab = app.add_subcommand("ablate", "Train the four emission/preprocessing configurations");
    std::string ab_raw, ab_stab, ab_luts, ab_cameras, ab_points, ab_eval_cams, ab_eval_gt, ab_out;
    bool ab_synthetic = false;
    int ab_log_every = 0;
    ab->add_flag("--synthetic", ab_synthetic, "build the synthetic benchmark instead of reading data");
    ab->add_option("--raw", ab_raw, "raw training frames");
    ab->add_option("--stabilized", ab_stab, "stabilized training frames");
    ab->add_option("--luts", ab_luts, "stabilization LUTs (default <stabilized>/luts)");
    ab->add_option("--cameras", ab_cameras, "training cameras");
    ab->add_option("--points", ab_points, "initial point cloud");
    ab->add_option("--eval-cameras", ab_eval_cams, "held-out cameras");
    ab->add_option("--eval-gt", ab_eval_gt, "held-out ground truth");
    ab->add_option("--out", ab_out, "output directory")->required();
    ab->add_option("--log-every", ab_log_every, "progress line interval (0 disables)");
    // The degradation seed is derived from the training seed, so it has no key of its own.
    KeyValues ab_defaults = without(degradation_defaults(benchmark::BenchmarkOptions::default_degradation()), "seed");
    ab_defaults.merge(stabilize_defaults());
    ab_defaults.merge(without(benchmark_defaults(), "seed"));
    ab_defaults.merge(train_defaults());
    Keyed ab_keys{ab_defaults};
    ab_keys.attach(ab);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << "run 'thermsplat --help' for usage\n";
        return 1;
    }

    try {
        Manifest m;
        if (*stab) {
            m.subcommand = "stabilize";
            m.resolved = stab_keys.resolve();
            const auto cfg = stabilize_from(m.resolved);
            require_distinct(stab_in, stab_out);
            const auto files = imaging::list_frame_files(stab_in);
            const auto seq = imaging::load_sequence(stab_in);
            const auto result = stabilize::stabilize_sequence(seq, cfg);
            const fs::path dir(stab_out);
            ensure_dir(dir / "luts");
            write_frames(result.frames.frames(), files, dir);
            for (std::size_t t = 0; t < result.transforms.size(); ++t) {
                imaging::save_lut_csv(result.transforms[t].composed, dir / "luts" / numbered("lut", t, ".csv"));
            }
            stabilize::write_report(seq, result, dir / "stabilize_report.csv");
            m.inputs["frames"] = stab_in;
            m.outputs["frames"] = stab_out;
            m.outputs["luts"] = (dir / "luts").string();
            m.outputs["report"] = (dir / "stabilize_report.csv").string();
            m.write(dir);
            out << "stabilized " << seq.size() << " frames into " << stab_out << '\n';
        } else if (*inv) {
            m.subcommand = "invert";
            require_distinct(inv_in, inv_out);
            const fs::path lut_dir = inv_luts.empty() ? fs::path(inv_in) / "luts" : fs::path(inv_luts);
            const auto files = imaging::list_frame_files(inv_in);
            const auto seq = imaging::load_sequence(inv_in);
            const auto luts = load_luts(lut_dir, seq.size());
            ensure_dir(inv_out);
            std::vector<imaging::Frame> frames;
            for (std::size_t t = 0; t < seq.size(); ++t) {
                frames.push_back(imaging::apply_lut(seq[t], imaging::invert_lut(luts[t])));
            }
            write_frames(frames, files, inv_out);
            m.inputs["frames"] = inv_in;
            m.inputs["luts"] = lut_dir.string();
            m.outputs["frames"] = inv_out;
            m.write(inv_out);
            out << "inverted " << seq.size() << " frames into " << inv_out << '\n';
        } else if (*diag) {
            m.subcommand = "diagnose";
            m.resolved.set("hann_window", diag_hann ? "true" : "false");
            const auto seq = imaging::load_sequence(diag_in);
            const fs::path dir(diag_out);
            ensure_dir(dir);
            diagnostics::write_drift_csv(diagnostics::mean_intensity_drift(seq), dir / "drift.csv");
            diagnostics::SpectrumOptions so;
            so.hann_window = diag_hann;
            std::vector<diagnostics::RadialSpectrum> spectra;
            std::vector<diagnostics::RangeReport> ranges;
            for (const auto& f : seq) {
                spectra.push_back(diagnostics::radial_power_spectrum(f, so));
                ranges.push_back(diagnostics::dynamic_range_report(f));
            }
            diagnostics::write_spectrum_csv(spectra, so, dir / "spectrum.csv");
            diagnostics::write_range_csv(ranges, seq.bit_depth(), dir / "range.csv");
            m.inputs["frames"] = diag_in;
            m.outputs["drift"] = (dir / "drift.csv").string();
            m.outputs["spectrum"] = (dir / "spectrum.csv").string();
            m.outputs["range"] = (dir / "range.csv").string();
            m.write(dir);
            out << "wrote diagnostics for " << seq.size() << " frames to " << diag_out << '\n';
        } else if (*synth) {
            m.subcommand = "synth";
            m.resolved = synth_keys.resolve();
            benchmark::BenchmarkOptions bo = benchmark_from(m.resolved);
            bo.degradation = scene::DegradationSpec{};
            const auto b = benchmark::build_benchmark(bo);
            const fs::path dir(synth_out);
            ensure_dir(dir / "train");
            ensure_dir(dir / "heldout");
            const std::string ext = "." + synth_format;
            write_frames(b.clean_train.frames(), numbered_names(b.clean_train.size(), ext), dir / "train");
            write_frames(b.heldout, numbered_names(b.heldout.size(), ext), dir / "heldout");
            scene::write_cameras(b.train_cameras, dir / "train_cameras.txt");
            scene::write_cameras(b.heldout_cameras, dir / "heldout_cameras.txt");
            scene::write_points(b.points, dir / "points.txt");
            m.outputs["train"] = (dir / "train").string();
            m.outputs["heldout"] = (dir / "heldout").string();
            m.outputs["cameras"] = (dir / "train_cameras.txt").string();
            m.outputs["heldout_cameras"] = (dir / "heldout_cameras.txt").string();
            m.outputs["points"] = (dir / "points.txt").string();
            m.write(dir);
            out << "wrote " << b.clean_train.size() << " training and " << b.heldout.size() << " held-out views to "
                << synth_out << '\n';
        } else if (*deg) {
            m.subcommand = "degrade";
            m.resolved = deg_keys.resolve();
            const auto spec = degradation_from(m.resolved);
            require_distinct(deg_in, deg_out);
            const auto files = imaging::list_frame_files(deg_in);
            const auto seq = imaging::load_sequence(deg_in);
            const auto degraded = scene::degrade_sequence(seq, spec);
            ensure_dir(deg_out);
            write_frames(degraded.frames(), files, deg_out);
            m.inputs["frames"] = deg_in;
            m.outputs["frames"] = deg_out;
            m.write(deg_out);
            out << "degraded " << seq.size() << " frames into " << deg_out << '\n';
        } else if (*tr) {
            m.subcommand = "train";
            m.resolved = tr_keys.resolve();
            const auto cfg = train::TrainConfig::from(m.resolved);
            const auto frames = imaging::load_sequence(tr_frames);
            train::Dataset data = benchmark::make_dataset(frames, scene::read_cameras(tr_cameras));
            if (tr_eval_cams.empty() != tr_eval_gt.empty()) {
                throw UsageError("--eval-cameras and --eval-gt must be given together");
            }
            if (!tr_eval_cams.empty()) data.eval = load_eval_views(tr_eval_cams, tr_eval_gt);
            if (!tr_eval_lut.empty()) data.eval_lut = imaging::invert_lut(imaging::load_lut_csv(tr_eval_lut));
            const auto points = scene::read_points(tr_points);
            const fs::path dir(tr_out);
            ensure_dir(dir);
            const auto result =
                train::train(data, cfg, train::initialize_gaussians(points, cfg), progress(out, tr_log_every));
            train::save_checkpoint(result.state, dir / "checkpoint.thsp");
            {
                std::ofstream log(dir / "loss.csv");
                log << "iteration,loss\n" << std::setprecision(10);
                for (std::size_t i = 0; i < result.losses.size(); ++i) log << i << ',' << result.losses[i] << '\n';
            }
            m.inputs["frames"] = tr_frames;
            m.inputs["cameras"] = tr_cameras;
            m.inputs["points"] = tr_points;
            m.outputs["checkpoint"] = (dir / "checkpoint.thsp").string();
            m.outputs["loss"] = (dir / "loss.csv").string();
            if (!data.eval.empty()) {
                train::write_eval_csv(result.reports, dir / "eval.csv");
                m.inputs["eval_cameras"] = tr_eval_cams;
                m.inputs["eval_gt"] = tr_eval_gt;
                m.outputs["eval"] = (dir / "eval.csv").string();
            }
            if (!tr_eval_lut.empty()) m.inputs["eval_lut"] = tr_eval_lut;
            m.write(dir);
            out << "trained " << result.state.iteration << " iterations; checkpoint in " << tr_out << '\n';
        } else if (*ev) {
            m.subcommand = "eval";
            train::TrainState st = train::load_checkpoint(ev_ckpt);
            st.config.threads = ev_threads > 0 ? ev_threads : env_threads();
            m.resolved = st.config.to_key_values();
            train::Dataset data;
            data.eval = load_eval_views(ev_cameras, ev_gt);
            if (!ev_lut.empty()) data.eval_lut = imaging::invert_lut(imaging::load_lut_csv(ev_lut));
            const auto rep = train::evaluate(st, data);
            ensure_dir(ev_out);
            train::write_eval_csv({rep}, fs::path(ev_out) / "eval.csv");
            m.inputs["checkpoint"] = ev_ckpt;
            m.inputs["cameras"] = ev_cameras;
            m.inputs["gt"] = ev_gt;
            m.outputs["eval"] = (fs::path(ev_out) / "eval.csv").string();
            m.write(ev_out);
            out << "mean psnr " << rep.mean_psnr << " ssim " << rep.mean_ssim << '\n';
        } else if (*rp) {
            m.subcommand = "render-path";
            train::TrainState st = train::load_checkpoint(rp_ckpt);
            st.config.threads = rp_threads > 0 ? rp_threads : env_threads();
            m.resolved = st.config.to_key_values();
            const auto cams = scene::read_cameras(rp_cameras);
            std::optional<imaging::MonotoneLut> lut;
            if (!rp_lut.empty()) lut = imaging::invert_lut(imaging::load_lut_csv(rp_lut));
            ensure_dir(rp_out);
            for (std::size_t i = 0; i < cams.size(); ++i) {
                cams[i].validate();
                const auto img = train::render_view(st, cams[i], lut ? &*lut : nullptr);
                const imaging::Frame f(img.width(), img.height(), rp_bits,
                                       std::vector<double>(img.pixels().begin(), img.pixels().end()), static_cast<int>(i));
                imaging::save_frame(f.quantized(), fs::path(rp_out) / numbered("frame", i, "." + rp_format));
            }
            m.inputs["checkpoint"] = rp_ckpt;
            m.inputs["cameras"] = rp_cameras;
            m.outputs["frames"] = rp_out;
            m.write(rp_out);
            out << "rendered " << cams.size() << " views into " << rp_out << '\n';
        } else if (*ab) {
            m.subcommand = "ablate";
            m.resolved = ab_keys.resolve();
            KeyValues train_kv;
            for (const auto& [k, v] : m.resolved.entries()) {
                if (train::TrainConfig::keys().count(k)) train_kv.set(k, v);
            }
            const auto cfg = train::TrainConfig::from(train_kv);
            train::Dataset raw, stable;
            std::vector<Eigen::Vector3d> points;
            if (ab_synthetic) {
                benchmark::BenchmarkOptions bo = benchmark_from(m.resolved);
                bo.degradation = degradation_from(m.resolved);
                bo.stabilize = stabilize_from(m.resolved);
                bo.inference_frame = cfg.inference_frame;
                auto b = benchmark::build_benchmark(bo);
                raw = std::move(b.raw);
                stable = std::move(b.stable);
                points = std::move(b.points);
                m.inputs["data"] = "synthetic";
            } else {
                if (ab_raw.empty() || ab_stab.empty() || ab_cameras.empty() || ab_points.empty() ||
                    ab_eval_cams.empty() || ab_eval_gt.empty()) {
                    throw UsageError(
                        "ablate needs --synthetic or all of --raw --stabilized --cameras --points --eval-cameras --eval-gt");
                }
                const auto cams = scene::read_cameras(ab_cameras);
                raw = benchmark::make_dataset(imaging::load_sequence(ab_raw), cams);
                stable = benchmark::make_dataset(imaging::load_sequence(ab_stab), cams);
                raw.eval = stable.eval = load_eval_views(ab_eval_cams, ab_eval_gt);
                const fs::path lut_dir = ab_luts.empty() ? fs::path(ab_stab) / "luts" : fs::path(ab_luts);
                const auto luts = load_luts(lut_dir, stable.train.size());
                stable.eval_lut = imaging::invert_lut(luts.at(cfg.inference_frame));
                points = scene::read_points(ab_points);
                m.inputs["raw"] = ab_raw;
                m.inputs["stabilized"] = ab_stab;
                m.inputs["luts"] = lut_dir.string();
                m.inputs["cameras"] = ab_cameras;
                m.inputs["points"] = ab_points;
                m.inputs["eval_cameras"] = ab_eval_cams;
                m.inputs["eval_gt"] = ab_eval_gt;
            }
            const auto rows = train::ablate(raw, stable, cfg, points, progress(out, ab_log_every));
            ensure_dir(ab_out);
            train::write_ablation_csv(rows, fs::path(ab_out) / "ablation.csv");
            m.outputs["ablation"] = (fs::path(ab_out) / "ablation.csv").string();
            m.write(ab_out);
            for (const auto& r : rows) out << r.name << " psnr " << r.psnr << " ssim " << r.ssim << '\n';
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

}  // namespace thermsplat::cli
