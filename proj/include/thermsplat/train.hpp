#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "thermsplat/adam.hpp"
#include "thermsplat/config.hpp"
#include "thermsplat/imaging.hpp"
#include "thermsplat/losses.hpp"
#include "thermsplat/model.hpp"
#include "thermsplat/render.hpp"
#include "thermsplat/scene.hpp"

namespace thermsplat::train {

struct TrainConfig {
    double lambda1 = 0.8;
    double lambda2 = 0.2;
    double lambda3 = 0.01;
    int iterations = 5000;
    int eval_every = 1000;
    int prune_every = 500;
    double prune_opacity = 0.005;
    std::uint64_t seed = 0;
    int resolution = 64;      ///< expected frame width; 0 accepts any
    int inference_frame = 0;  ///< training frame whose embedding is used for novel views
    int ssim_window = 11;
    double hssim_epsilon = 0.01;

    // Model
    std::string emission_mode = "mlp";
    bool large_mlp = false;
    int gaussian_embedding_dim = 16;
    int frame_embedding_dim = 8;
    int hidden_layers = 2;
    int hidden_width = 32;
    std::string background_blend = "residual";
    int threads = 1;

    // Initialization
    int init_neighbors = 3;
    double initial_opacity = 0.1;

    // Optimizer
    double lr_means = 1.6e-4;
    double lr_log_scales = 5e-3;
    double lr_rotations = 1e-3;
    double lr_opacity = 5e-2;
    double lr_embeddings = 2e-3;
    double lr_mlp = 1e-3;
    double mlp_weight_decay = 1e-6;

    void validate() const;
    model::ModelConfig model_config() const;
    render::RenderSettings render_settings() const;
    LossWeights loss_weights() const { return {lambda1, lambda2, lambda3}; }
    SsimOptions ssim_options() const;

    static TrainConfig from(const config::KeyValues& kv);
    static TrainConfig from(const config::KeyValues& kv, const TrainConfig& defaults);
    config::KeyValues to_key_values() const;
    static const std::set<std::string>& keys();
};

struct TrainView {
    scene::Camera camera;
    imaging::Frame target;
    int frame_id = 0;  ///< index of the per-frame embedding
};

struct EvalView {
    scene::Camera camera;
    imaging::Frame target;  ///< ground truth on the original radiometric scale
};

struct Dataset {
    std::vector<TrainView> train;
    std::vector<EvalView> eval;
    /// Maps rendered intensities back to the original scale before scoring (stabilized data).
    std::optional<imaging::MonotoneLut> eval_lut;
};

/// Everything learnable plus optimizer state.
struct TrainState {
    TrainConfig config;
    scene::GaussianScene scene;
    model::EmissionModel emission;
    model::BackgroundModel background;
    model::AdamState adam;
    std::int64_t iteration = 0;

    /// Frame embedding used when rendering training frame `frame_id` (zero in fixed mode).
    Eigen::VectorXd frame_embedding(int frame_id) const;
    Eigen::VectorXd inference_embedding() const;
};

/// Fresh state: models seeded from the config, Gaussians from `init`, small random frame embeddings.
TrainState initial_state(const TrainConfig& cfg, std::vector<scene::Gaussian> init, int frame_count);

struct ViewMetrics {
    double psnr = 0.0;
    double ssim = 0.0;
};

struct EvalReport {
    std::int64_t iteration = 0;
    std::vector<ViewMetrics> views;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double wall_seconds = 0.0;  ///< not written to the CSV, which stays reproducible
};

/// Novel-view render with the fixed inference embedding, mapped through `lut` when given.
imaging::Frame render_view(const TrainState& state, const scene::Camera& cam,
                           const imaging::MonotoneLut* lut = nullptr);

EvalReport evaluate(const TrainState& state, const Dataset& data);

struct StepStats {
    std::int64_t iteration = 0;
    double loss = 0.0;
    std::size_t gaussians = 0;
};

struct TrainCallbacks {
    std::function<void(const StepStats&)> on_step;
    std::function<void(const EvalReport&)> on_eval;
};

struct TrainResult {
    TrainState state;
    std::vector<EvalReport> reports;
    std::vector<double> losses;
};

/// Runs one optimization step on training view `view`; returns the loss before the update.
double train_step(TrainState& state, const Dataset& data, std::size_t view,
                  const std::vector<Eigen::MatrixXd>& encoded_rays);

/// Removes Gaussians whose opacity is below the threshold. Returns the number removed.
std::size_t prune(TrainState& state, double threshold);

TrainResult train(const Dataset& data, const TrainConfig& cfg, std::vector<scene::Gaussian> init,
                  const TrainCallbacks& callbacks = {});

/// iteration,view,psnr,ssim rows, then one `mean` row per report.
void write_eval_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path);

// Ablation over emission mode x preprocessing.
struct AblationRow {
    std::string name;
    model::EmissionMode mode = model::EmissionMode::kMlp;
    bool stabilized = false;
    double psnr = 0.0;
    double ssim = 0.0;
};

/// Trains baseline (fixed, raw), preprocessing (fixed, stabilized), emission_mlp (mlp, raw) and
/// full (mlp, stabilized) with identical seeds and budgets.
std::vector<AblationRow> ablate(const Dataset& raw, const Dataset& stabilized, const TrainConfig& cfg,
                                const std::vector<Eigen::Vector3d>& points,
                                const TrainCallbacks& callbacks = {});

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path);

/// Point-cloud initialization configured from `cfg` (embedding width follows the emission mode).
std::vector<scene::Gaussian> initialize_gaussians(const std::vector<Eigen::Vector3d>& points,
                                                  const TrainConfig& cfg);

}  // namespace thermsplat::train
