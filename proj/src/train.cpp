#include "thermsplat/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>

#include "thermsplat/error.hpp"

namespace thermsplat::train {

using config::format_double;

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0) throw UsageError("lambda1..3 must be non-negative");
    if (iterations < 0) throw UsageError("iterations must be non-negative");
    if (eval_every < 0 || prune_every < 0) throw UsageError("eval_every and prune_every must be non-negative");
    if (!(prune_opacity > 0.0 && prune_opacity < 1.0)) throw UsageError("prune_opacity must lie in (0,1)");
    if (resolution < 0) throw UsageError("resolution must be non-negative");
    if (inference_frame < 0) throw UsageError("inference_frame must be non-negative");
    if (ssim_window < 1) throw UsageError("ssim_window must be positive");
    if (!(hssim_epsilon > 0.0 && hssim_epsilon < 1.0)) throw UsageError("hssim_epsilon must lie in (0,1)");
    model::emission_mode_from_string(emission_mode);
    render::background_blend_from_string(background_blend);
    if (gaussian_embedding_dim < 1 || frame_embedding_dim < 1) throw UsageError("embedding dimensions must be positive");
    if (hidden_layers < 0 || hidden_width < 1) throw UsageError("invalid MLP shape");
    if (threads < 1) throw UsageError("threads must be at least 1");
    if (init_neighbors < 1) throw UsageError("init_neighbors must be at least 1");
    if (!(initial_opacity > 0.0 && initial_opacity < 1.0)) throw UsageError("initial_opacity must lie in (0,1)");
    for (double lr : {lr_means, lr_log_scales, lr_rotations, lr_opacity, lr_embeddings, lr_mlp}) {
        if (!(lr >= 0.0)) throw UsageError("learning rates must be non-negative");
    }
    if (mlp_weight_decay < 0) throw UsageError("mlp_weight_decay must be non-negative");
}

model::ModelConfig TrainConfig::model_config() const {
    model::ModelConfig m;
    m.mode = model::emission_mode_from_string(emission_mode);
    m.gaussian_embedding_dim = gaussian_embedding_dim;
    m.frame_embedding_dim = frame_embedding_dim;
    m.hidden_layers = hidden_layers;
    m.hidden_width = hidden_width;
    m.seed = seed;
    if (large_mlp) m.use_large_size();
    return m;
}

render::RenderSettings TrainConfig::render_settings() const {
    render::RenderSettings s;
    s.blend = render::background_blend_from_string(background_blend);
    s.threads = threads;
    return s;
}

SsimOptions TrainConfig::ssim_options() const {
    SsimOptions o;
    o.window = ssim_window;
    o.epsilon = hssim_epsilon;
    return o;
}

const std::set<std::string>& TrainConfig::keys() {
    static const std::set<std::string> k{
        "lambda1", "lambda2", "lambda3", "iterations", "eval_every", "prune_every", "prune_opacity",
        "seed", "resolution", "inference_frame", "ssim_window", "hssim_epsilon", "emission_mode",
        "large_mlp", "gaussian_embedding_dim", "frame_embedding_dim", "hidden_layers", "hidden_width",
        "background_blend", "threads", "init_neighbors", "initial_opacity", "lr_means", "lr_log_scales",
        "lr_rotations", "lr_opacity", "lr_embeddings", "lr_mlp", "mlp_weight_decay"};
    return k;
}

TrainConfig TrainConfig::from(const config::KeyValues& kv) { return from(kv, TrainConfig{}); }

TrainConfig TrainConfig::from(const config::KeyValues& kv, const TrainConfig& d) {
    kv.require_known(keys());
    TrainConfig c;
    c.lambda1 = kv.get_double("lambda1", d.lambda1);
    c.lambda2 = kv.get_double("lambda2", d.lambda2);
    c.lambda3 = kv.get_double("lambda3", d.lambda3);
    c.iterations = kv.get_int("iterations", d.iterations);
    c.eval_every = kv.get_int("eval_every", d.eval_every);
    c.prune_every = kv.get_int("prune_every", d.prune_every);
    c.prune_opacity = kv.get_double("prune_opacity", d.prune_opacity);
    c.seed = kv.get_u64("seed", d.seed);
    c.resolution = kv.get_int("resolution", d.resolution);
    c.inference_frame = kv.get_int("inference_frame", d.inference_frame);
    c.ssim_window = kv.get_int("ssim_window", d.ssim_window);
    c.hssim_epsilon = kv.get_double("hssim_epsilon", d.hssim_epsilon);
    c.emission_mode = kv.get_string("emission_mode", d.emission_mode);
    c.large_mlp = kv.get_bool("large_mlp", d.large_mlp);
    c.gaussian_embedding_dim = kv.get_int("gaussian_embedding_dim", d.gaussian_embedding_dim);
    c.frame_embedding_dim = kv.get_int("frame_embedding_dim", d.frame_embedding_dim);
    c.hidden_layers = kv.get_int("hidden_layers", d.hidden_layers);
    c.hidden_width = kv.get_int("hidden_width", d.hidden_width);
    c.background_blend = kv.get_string("background_blend", d.background_blend);
    c.threads = kv.get_int("threads", d.threads);
    c.init_neighbors = kv.get_int("init_neighbors", d.init_neighbors);
    c.initial_opacity = kv.get_double("initial_opacity", d.initial_opacity);
    c.lr_means = kv.get_double("lr_means", d.lr_means);
    c.lr_log_scales = kv.get_double("lr_log_scales", d.lr_log_scales);
    c.lr_rotations = kv.get_double("lr_rotations", d.lr_rotations);
    c.lr_opacity = kv.get_double("lr_opacity", d.lr_opacity);
    c.lr_embeddings = kv.get_double("lr_embeddings", d.lr_embeddings);
    c.lr_mlp = kv.get_double("lr_mlp", d.lr_mlp);
    c.mlp_weight_decay = kv.get_double("mlp_weight_decay", d.mlp_weight_decay);
    c.validate();
    return c;
}

config::KeyValues TrainConfig::to_key_values() const {
    config::KeyValues kv;
    kv.set("lambda1", format_double(lambda1));
    kv.set("lambda2", format_double(lambda2));
    kv.set("lambda3", format_double(lambda3));
    kv.set("iterations", std::to_string(iterations));
    kv.set("eval_every", std::to_string(eval_every));
    kv.set("prune_every", std::to_string(prune_every));
    kv.set("prune_opacity", format_double(prune_opacity));
    kv.set("seed", std::to_string(seed));
    kv.set("resolution", std::to_string(resolution));
    kv.set("inference_frame", std::to_string(inference_frame));
    kv.set("ssim_window", std::to_string(ssim_window));
    kv.set("hssim_epsilon", format_double(hssim_epsilon));
    kv.set("emission_mode", emission_mode);
    kv.set("large_mlp", large_mlp ? "true" : "false");
    kv.set("gaussian_embedding_dim", std::to_string(gaussian_embedding_dim));
    kv.set("frame_embedding_dim", std::to_string(frame_embedding_dim));
    kv.set("hidden_layers", std::to_string(hidden_layers));
    kv.set("hidden_width", std::to_string(hidden_width));
    kv.set("background_blend", background_blend);
    kv.set("threads", std::to_string(threads));
    kv.set("init_neighbors", std::to_string(init_neighbors));
    kv.set("initial_opacity", format_double(initial_opacity));
    kv.set("lr_means", format_double(lr_means));
    kv.set("lr_log_scales", format_double(lr_log_scales));
    kv.set("lr_rotations", format_double(lr_rotations));
    kv.set("lr_opacity", format_double(lr_opacity));
    kv.set("lr_embeddings", format_double(lr_embeddings));
    kv.set("lr_mlp", format_double(lr_mlp));
    kv.set("mlp_weight_decay", format_double(mlp_weight_decay));
    return kv;
}

// ---------------------------------------------------------------------------
// State

Eigen::VectorXd TrainState::frame_embedding(int frame_id) const {
    if (emission.mode() == model::EmissionMode::kFixed) {
        return Eigen::VectorXd::Zero(config.frame_embedding_dim);
    }
    if (frame_id < 0 || frame_id >= static_cast<int>(scene.frame_embeddings.size())) {
        throw DataError("frame index " + std::to_string(frame_id) + " has no embedding");
    }
    return scene.frame_embeddings[frame_id];
}

Eigen::VectorXd TrainState::inference_embedding() const { return frame_embedding(scene.inference_frame); }

std::vector<scene::Gaussian> initialize_gaussians(const std::vector<Eigen::Vector3d>& points,
                                                  const TrainConfig& cfg) {
    scene::InitOptions opt;
    opt.embedding_dim = cfg.model_config().stored_gaussian_embedding_dim();
    opt.seed = cfg.seed * 7919 + 5;
    opt.initial_opacity = cfg.initial_opacity;
    return scene::init_from_points(points, cfg.init_neighbors, opt);
}

TrainState initial_state(const TrainConfig& cfg, std::vector<scene::Gaussian> init, int frame_count) {
    cfg.validate();
    if (frame_count < 1) throw DataError("training needs at least one frame");
    if (cfg.inference_frame >= frame_count) {
        throw UsageError("inference_frame " + std::to_string(cfg.inference_frame) + " is out of range (" +
                         std::to_string(frame_count) + " training frames)");
    }
    const model::ModelConfig mc = cfg.model_config();
    TrainState st;
    st.config = cfg;
    st.emission = model::EmissionModel(mc);
    st.background = model::BackgroundModel(mc);
    const int dim = mc.stored_gaussian_embedding_dim();
    for (std::size_t i = 0; i < init.size(); ++i) {
        if (init[i].embedding.size() != dim) {
            throw DataError("Gaussian " + std::to_string(i) + " has embedding dimension " +
                            std::to_string(init[i].embedding.size()) + ", expected " + std::to_string(dim));
        }
    }
    st.scene.gaussians = std::move(init);
    st.scene.renormalize_rotations();
    st.scene.inference_frame = cfg.inference_frame;
    std::mt19937_64 rng(cfg.seed * 7919 + 3);
    std::normal_distribution<double> normal(0.0, 0.01);
    st.scene.frame_embeddings.resize(frame_count);
    for (auto& e : st.scene.frame_embeddings) {
        e.resize(cfg.frame_embedding_dim);
        for (int k = 0; k < e.size(); ++k) e[k] = normal(rng);
    }
    st.adam.configure("means", cfg.lr_means);
    st.adam.configure("log_scales", cfg.lr_log_scales);
    st.adam.configure("rotations", cfg.lr_rotations);
    st.adam.configure("opacity", cfg.lr_opacity);
    st.adam.configure("gaussian_embeddings", cfg.lr_embeddings);
    if (mc.mode == model::EmissionMode::kMlp) {
        st.adam.configure("frame_embeddings", cfg.lr_embeddings);
        st.adam.configure("emission_mlp", cfg.lr_mlp, cfg.mlp_weight_decay);
    }
    st.adam.configure("background_mlp", cfg.lr_mlp, cfg.mlp_weight_decay);
    return st;
}

// ---------------------------------------------------------------------------
// Evaluation

imaging::Frame render_view(const TrainState& state, const scene::Camera& cam, const imaging::MonotoneLut* lut) {
    const auto settings = state.config.render_settings();
    const auto r = render::render(state.scene.gaussians, cam, state.inference_embedding(), state.emission,
                                  state.background, settings);
    if (!lut) return r.output.image;
    const int bits = lut->bins() == 256 ? 8 : 16;
    const imaging::Frame relabeled(cam.width, cam.height, bits,
                                   std::vector<double>(r.output.image.pixels().begin(), r.output.image.pixels().end()));
    return imaging::apply_lut(relabeled, *lut);
}

EvalReport evaluate(const TrainState& state, const Dataset& data) {
    EvalReport rep;
    rep.iteration = state.iteration;
    const SsimOptions opt = state.config.ssim_options();
    const imaging::MonotoneLut* lut = data.eval_lut ? &*data.eval_lut : nullptr;
    for (const EvalView& v : data.eval) {
        const imaging::Frame img = render_view(state, v.camera, lut);
        ViewMetrics m;
        m.psnr = psnr(img, v.target);
        m.ssim = ssim(img, v.target, opt);
        rep.views.push_back(m);
        rep.mean_psnr += m.psnr;
        rep.mean_ssim += m.ssim;
    }
    if (!rep.views.empty()) {
        rep.mean_psnr /= static_cast<double>(rep.views.size());
        rep.mean_ssim /= static_cast<double>(rep.views.size());
    }
    return rep;
}

void write_eval_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << "iteration,view,psnr,ssim\n" << std::setprecision(10);
    for (const EvalReport& r : reports) {
        for (std::size_t v = 0; v < r.views.size(); ++v) {
            out << r.iteration << ',' << v << ',' << r.views[v].psnr << ',' << r.views[v].ssim << '\n';
        }
        out << r.iteration << ",mean," << r.mean_psnr << ',' << r.mean_ssim << '\n';
    }
}

// ---------------------------------------------------------------------------
// Optimization

namespace {

void check_dataset(const Dataset& data, const TrainConfig& cfg) {
    if (data.train.empty()) throw DataError("dataset has no training views");
    for (std::size_t i = 0; i < data.train.size(); ++i) {
        const TrainView& v = data.train[i];
        v.camera.validate();
        if (v.target.width() != v.camera.width || v.target.height() != v.camera.height) {
            throw DataError("training view " + std::to_string(i) + ": frame size does not match its camera");
        }
        if (cfg.resolution > 0 && v.target.width() != cfg.resolution) {
            throw DataError("training view " + std::to_string(i) + " is " + std::to_string(v.target.width()) +
                            " px wide, expected resolution " + std::to_string(cfg.resolution));
        }
    }
    for (std::size_t i = 0; i < data.eval.size(); ++i) {
        data.eval[i].camera.validate();
        if (data.eval[i].target.width() != data.eval[i].camera.width ||
            data.eval[i].target.height() != data.eval[i].camera.height) {
            throw DataError("held-out view " + std::to_string(i) + ": frame size does not match its camera");
        }
    }
}

int frame_count(const Dataset& data) {
    int n = 0;
    for (const TrainView& v : data.train) n = std::max(n, v.frame_id + 1);
    return n;
}

}  // namespace

double train_step(TrainState& state, const Dataset& data, std::size_t view,
                  const std::vector<Eigen::MatrixXd>& encoded_rays) {
    const TrainConfig& cfg = state.config;
    const TrainView& tv = data.train.at(view);
    const auto settings = cfg.render_settings();
    auto& gs = state.scene.gaussians;
    const Eigen::VectorXd ef = state.frame_embedding(tv.frame_id);

    const auto fwd = render::render(gs, tv.camera, ef, state.emission, state.background, settings,
                                    encoded_rays.empty() ? nullptr : &encoded_rays.at(view));
    const CombinedLoss loss = combined_loss(fwd.output.image, tv.target, fwd.output.residual,
                                            cfg.loss_weights(), cfg.ssim_options());
    if (!std::isfinite(loss.total)) {
        throw DataError("training diverged: non-finite loss at iteration " + std::to_string(state.iteration));
    }
    const auto grads = render::render_backward(fwd, gs, tv.camera, ef, state.emission, state.background,
                                               settings, loss.image_adjoint, loss.residual_adjoint);

    const std::size_t n = gs.size();
    const int dim = n ? static_cast<int>(gs[0].embedding.size()) : 0;
    std::vector<double> means(3 * n), d_means(3 * n), scales(3 * n), d_scales(3 * n);
    std::vector<double> rots(4 * n), d_rots(4 * n), opac(n), d_opac(n);
    std::vector<double> emb(static_cast<std::size_t>(dim) * n), d_emb(emb.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) {
            means[3 * i + k] = gs[i].mean[k];
            d_means[3 * i + k] = grads.gaussians[i].mean[k];
            scales[3 * i + k] = gs[i].log_scale[k];
            d_scales[3 * i + k] = grads.gaussians[i].log_scale[k];
        }
        for (int k = 0; k < 4; ++k) {
            rots[4 * i + k] = gs[i].rotation[k];
            d_rots[4 * i + k] = grads.gaussians[i].rotation[k];
        }
        opac[i] = gs[i].opacity_logit;
        d_opac[i] = grads.gaussians[i].opacity_logit;
        for (int k = 0; k < dim; ++k) {
            emb[i * dim + k] = gs[i].embedding[k];
            d_emb[i * dim + k] = grads.gaussian_embeddings(k, static_cast<Eigen::Index>(i));
        }
    }

    std::vector<model::ParamGroupView> views{
        {"means", means, d_means},
        {"log_scales", scales, d_scales},
        {"rotations", rots, d_rots},
        {"opacity", opac, d_opac},
        {"gaussian_embeddings", emb, d_emb},
    };
    const bool mlp_mode = state.emission.mode() == model::EmissionMode::kMlp;
    auto& frames = state.scene.frame_embeddings;
    const int fdim = cfg.frame_embedding_dim;
    std::vector<double> fe, d_fe;
    if (mlp_mode) {
        fe.resize(frames.size() * fdim);
        d_fe.assign(fe.size(), 0.0);
        for (std::size_t f = 0; f < frames.size(); ++f) {
            for (int k = 0; k < fdim; ++k) fe[f * fdim + k] = frames[f][k];
        }
        for (int k = 0; k < fdim; ++k) d_fe[static_cast<std::size_t>(tv.frame_id) * fdim + k] = grads.frame_embedding[k];
        views.push_back({"frame_embeddings", fe, d_fe});
        views.push_back({"emission_mlp", state.emission.mlp().parameters(), grads.emission_params});
    }
    views.push_back({"background_mlp", state.background.mlp().parameters(), grads.background_params});
    model::adam_step(state.adam, views);

    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) {
            gs[i].mean[k] = means[3 * i + k];
            gs[i].log_scale[k] = scales[3 * i + k];
        }
        for (int k = 0; k < 4; ++k) gs[i].rotation[k] = rots[4 * i + k];
        gs[i].opacity_logit = opac[i];
        for (int k = 0; k < dim; ++k) gs[i].embedding[k] = emb[i * dim + k];
    }
    if (mlp_mode) {
        for (std::size_t f = 0; f < frames.size(); ++f) {
            for (int k = 0; k < fdim; ++k) frames[f][k] = fe[f * fdim + k];
        }
    }
    state.scene.renormalize_rotations();
    ++state.iteration;
    return loss.total;
}

std::size_t prune(TrainState& state, double threshold) {
    auto& gs = state.scene.gaussians;
    std::vector<bool> keep(gs.size());
    std::size_t removed = 0;
    for (std::size_t i = 0; i < gs.size(); ++i) {
        keep[i] = gs[i].opacity() >= threshold;
        if (!keep[i]) ++removed;
    }
    if (removed == 0) return 0;
    const std::size_t dim = gs.empty() ? 0 : static_cast<std::size_t>(gs[0].embedding.size());
    state.adam.compact("means", keep, 3);
    state.adam.compact("log_scales", keep, 3);
    state.adam.compact("rotations", keep, 4);
    state.adam.compact("opacity", keep, 1);
    state.adam.compact("gaussian_embeddings", keep, dim);
    std::size_t w = 0;
    for (std::size_t i = 0; i < gs.size(); ++i) {
        if (keep[i]) gs[w++] = std::move(gs[i]);
    }
    gs.resize(w);
    return removed;
}

TrainResult train(const Dataset& data, const TrainConfig& cfg, std::vector<scene::Gaussian> init,
                  const TrainCallbacks& callbacks) {
    cfg.validate();
    check_dataset(data, cfg);
    TrainResult result;
    result.state = initial_state(cfg, std::move(init), frame_count(data));
    TrainState& st = result.state;

    std::vector<Eigen::MatrixXd> rays;
    rays.reserve(data.train.size());
    for (const TrainView& v : data.train) rays.push_back(st.background.encode_rays(v.camera));

    const auto start = std::chrono::steady_clock::now();
    auto run_eval = [&]() {
        EvalReport rep = evaluate(st, data);
        rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (callbacks.on_eval) callbacks.on_eval(rep);
        result.reports.push_back(std::move(rep));
    };

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(data.train.size());
    std::size_t cursor = order.size();
    for (int it = 0; it < cfg.iterations; ++it) {
        if (cursor == order.size()) {
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        double loss = 0.0;
        try {
            loss = train_step(st, data, order[cursor++], rays);
        } catch (const DataError& e) {
            const std::string what = e.what();
            if (what.find("iteration") != std::string::npos) throw;
            throw DataError("training aborted at iteration " + std::to_string(st.iteration) + ": " + what);
        }
        result.losses.push_back(loss);
        if (cfg.prune_every > 0 && (it + 1) % cfg.prune_every == 0) prune(st, cfg.prune_opacity);
        if (callbacks.on_step) callbacks.on_step({st.iteration, loss, st.scene.gaussians.size()});
        if (!data.eval.empty() && cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0) run_eval();
    }
    if (!data.eval.empty() && (result.reports.empty() || result.reports.back().iteration != st.iteration)) {
        run_eval();
    }
    return result;
}

// ---------------------------------------------------------------------------
// Ablation

std::vector<AblationRow> ablate(const Dataset& raw, const Dataset& stabilized, const TrainConfig& cfg,
                                const std::vector<Eigen::Vector3d>& points, const TrainCallbacks& callbacks) {
    struct Variant {
        const char* name;
        model::EmissionMode mode;
        bool stabilized;
    };
    const Variant variants[] = {
        {"baseline", model::EmissionMode::kFixed, false},
        {"preprocessing", model::EmissionMode::kFixed, true},
        {"emission_mlp", model::EmissionMode::kMlp, false},
        {"full", model::EmissionMode::kMlp, true},
    };
    std::vector<AblationRow> rows;
    for (const Variant& v : variants) {
        TrainConfig c = cfg;
        c.emission_mode = model::to_string(v.mode);
        const Dataset& data = v.stabilized ? stabilized : raw;
        if (data.eval.empty()) throw DataError("ablation needs held-out views");
        TrainResult r = train(data, c, initialize_gaussians(points, c), callbacks);
        AblationRow row;
        row.name = v.name;
        row.mode = v.mode;
        row.stabilized = v.stabilized;
        row.psnr = r.reports.back().mean_psnr;
        row.ssim = r.reports.back().mean_ssim;
        rows.push_back(row);
    }
    return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << "config,psnr,ssim\n" << std::setprecision(10);
    for (const AblationRow& r : rows) out << r.name << ',' << r.psnr << ',' << r.ssim << '\n';
}

}  // namespace thermsplat::train
