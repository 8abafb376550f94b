#include "thermsplat/render.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <thread>

#include "thermsplat/error.hpp"

namespace thermsplat::render {

std::string to_string(BackgroundBlend blend) {
    return blend == BackgroundBlend::kResidual ? "residual" : "standard";
}

BackgroundBlend background_blend_from_string(const std::string& s) {
    if (s == "residual") return BackgroundBlend::kResidual;
    if (s == "standard") return BackgroundBlend::kStandard;
    throw UsageError("unknown background_blend '" + s + "' (expected residual or standard)");
}

namespace {

using Projected = RasterState::Projected;

bool finite(const Gaussian& g) {
    return g.mean.allFinite() && g.log_scale.allFinite() && g.rotation.allFinite() &&
           std::isfinite(g.opacity_logit) && g.embedding.allFinite();
}

std::optional<Projected> project(const Gaussian& g, const Camera& cam, const RenderSettings& settings,
                                 int index) {
    if (!finite(g)) {
        throw DataError("non-finite parameter in Gaussian " + std::to_string(index));
    }
    const Eigen::Matrix3d w = cam.rotation.toRotationMatrix();
    const Eigen::Vector3d p = w * g.mean + cam.translation;
    if (!(p.z() > settings.near_plane)) return std::nullopt;

    Projected out;
    out.gaussian_index = index;
    out.depth = p.z();
    out.cam_point = p;
    out.rotation = scene::quaternion_to_matrix(g.rotation);
    out.scale = g.log_scale.array().exp();
    const Eigen::Matrix3d world_cov =
        out.rotation * out.scale.array().square().matrix().asDiagonal() * out.rotation.transpose();
    out.view_cov = w * world_cov * w.transpose();

    const double z = p.z();
    const double iz = 1.0 / z;
    out.jacobian << cam.fx * iz, 0.0, -cam.fx * p.x() * iz * iz,
                    0.0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
    out.mean2d = Eigen::Vector2d(cam.fx * p.x() * iz + cam.cx, cam.fy * p.y() * iz + cam.cy);
    Eigen::Matrix2d cov = out.jacobian * out.view_cov * out.jacobian.transpose();
    cov(0, 0) += settings.dilation;
    cov(1, 1) += settings.dilation;
    cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
    const double det = cov.determinant();
    if (!(det > 0.0)) return std::nullopt;
    out.conic = cov.inverse();
    out.opacity = g.opacity();
    out.extent_x = cov(0, 0);  // stashed; converted to extents by the caller
    out.extent_y = cov(1, 1);
    return out;
}

void run_rows(int threads, int rows, const std::function<void(int, int, int)>& fn) {
    const int workers = std::max(1, std::min(threads, rows));
    if (workers == 1) {
        fn(0, 0, rows);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int k = 0; k < workers; ++k) {
        const int begin = rows * k / workers;
        const int end = rows * (k + 1) / workers;
        pool.emplace_back(fn, k, begin, end);
    }
    for (auto& t : pool) t.join();
}

int worker_count(const RenderSettings& settings, int rows) {
    return std::max(1, std::min(settings.threads, rows));
}

std::uint64_t fnv_mix(std::uint64_t h, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xffu;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t contribution_checksum(const RasterState& st) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t p = 0; p < st.pixel_begin.size(); ++p) {
        for (std::uint32_t k = st.pixel_begin[p]; k < st.pixel_end[p]; ++k) {
            h = fnv_mix(h, (static_cast<std::uint64_t>(p) << 32) |
                               static_cast<std::uint32_t>(st.splats[st.contributions[k].splat].gaussian_index));
        }
    }
    return h;
}

}  // namespace

std::optional<Splat2D> project_gaussian(const Gaussian& g, const Camera& cam,
                                        const RenderSettings& settings, int index) {
    auto pr = project(g, cam, settings, index);
    if (!pr) return std::nullopt;
    Splat2D s;
    s.mean2d = pr->mean2d;
    s.cov2d = pr->conic.inverse();
    s.depth = pr->depth;
    s.gaussian_index = index;
    return s;
}

// ---------------------------------------------------------------------------
// Forward

RenderOutput rasterize(std::span<const Gaussian> gaussians, std::span<const double> emissions,
                       std::span<const double> background, const Camera& cam,
                       const RenderSettings& settings, RasterState* state_out) {
    const int w = cam.width;
    const int h = cam.height;
    const std::size_t n_pix = static_cast<std::size_t>(w) * h;
    if (emissions.size() != gaussians.size()) throw DataError("one emission per Gaussian required");
    if (background.size() != n_pix) throw DataError("background must have one value per pixel");

    RasterState local;
    RasterState& st = state_out ? *state_out : local;
    st = RasterState{};

    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        if (!std::isfinite(emissions[i])) {
            throw DataError("non-finite emission for Gaussian " + std::to_string(i));
        }
        auto pr = project(gaussians[i], cam, settings, static_cast<int>(i));
        if (!pr || pr->opacity < settings.alpha_min) continue;
        // Pixels with opacity * G >= alpha_min lie inside this ellipse's bounding box.
        const double level = 2.0 * std::log(pr->opacity / settings.alpha_min);
        pr->extent_x = std::sqrt(level * pr->extent_x) + 1e-9;
        pr->extent_y = std::sqrt(level * pr->extent_y) + 1e-9;
        if (pr->mean2d.x() + pr->extent_x < 0.5 || pr->mean2d.x() - pr->extent_x > w - 0.5 ||
            pr->mean2d.y() + pr->extent_y < 0.5 || pr->mean2d.y() - pr->extent_y > h - 0.5) {
            continue;
        }
        pr->emission = emissions[i];
        st.splats.push_back(*pr);
    }
    std::sort(st.splats.begin(), st.splats.end(), [](const Projected& a, const Projected& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.gaussian_index < b.gaussian_index;
    });

    std::vector<std::vector<int>> rows(h);
    for (int s = 0; s < static_cast<int>(st.splats.size()); ++s) {
        const Projected& sp = st.splats[s];
        const int y0 = std::max(0, static_cast<int>(std::ceil(sp.mean2d.y() - sp.extent_y - 0.5)));
        const int y1 = std::min(h - 1, static_cast<int>(std::floor(sp.mean2d.y() + sp.extent_y - 0.5)));
        for (int y = y0; y <= y1; ++y) rows[y].push_back(s);
    }

    RenderOutput out;
    std::vector<double> image(n_pix), foreground(n_pix);
    out.residual.assign(n_pix, 1.0);
    out.background.assign(background.begin(), background.end());
    out.final_transmittance.assign(n_pix, 1.0);
    out.contrib_count.assign(n_pix, 0);
    st.pixel_begin.assign(n_pix, 0);
    st.pixel_end.assign(n_pix, 0);

    const int workers = worker_count(settings, h);
    std::vector<std::vector<RasterState::Contribution>> lists(workers);
    run_rows(settings.threads, h, [&](int worker, int row_begin, int row_end) {
        auto& list = lists[worker];
        for (int y = row_begin; y < row_end; ++y) {
            const double yc = y + 0.5;
            for (int x = 0; x < w; ++x) {
                const double xc = x + 0.5;
                const std::size_t p = static_cast<std::size_t>(y) * w + x;
                st.pixel_begin[p] = static_cast<std::uint32_t>(list.size());
                double t = 1.0, fg = 0.0, alpha_sum = 0.0;
                int count = 0;
                for (int s : rows[y]) {
                    const Projected& sp = st.splats[s];
                    const double dx = xc - sp.mean2d.x();
                    if (std::abs(dx) > sp.extent_x) continue;
                    const double dy = yc - sp.mean2d.y();
                    const double power = 0.5 * (sp.conic(0, 0) * dx * dx + 2.0 * sp.conic(0, 1) * dx * dy +
                                                sp.conic(1, 1) * dy * dy);
                    const double raw = sp.opacity * std::exp(-power);
                    const bool clamped = raw > settings.alpha_max;
                    const double alpha = clamped ? settings.alpha_max : raw;
                    if (alpha < settings.alpha_min) continue;
                    list.push_back({s, alpha, t, clamped});
                    fg += t * alpha * sp.emission;
                    alpha_sum += alpha;
                    t *= 1.0 - alpha;
                    ++count;
                    if (t < settings.transmittance_min) break;
                }
                st.pixel_end[p] = static_cast<std::uint32_t>(list.size());
                const double m = std::exp(-alpha_sum);
                const double b = background[p];
                double v = settings.blend == BackgroundBlend::kResidual ? (1.0 - m) * fg + m * b : fg + t * b;
                image[p] = std::clamp(v, 0.0, 1.0);
                foreground[p] = std::clamp(fg, 0.0, 1.0);
                out.residual[p] = m;
                out.final_transmittance[p] = t;
                out.contrib_count[p] = count;
            }
        }
    });

    // Concatenate per-worker lists in worker order.
    std::size_t total = 0;
    for (const auto& l : lists) total += l.size();
    st.contributions.reserve(total);
    std::uint32_t offset = 0;
    for (int k = 0; k < workers; ++k) {
        const int row_begin = h * k / workers;
        const int row_end = h * (k + 1) / workers;
        for (std::size_t p = static_cast<std::size_t>(row_begin) * w; p < static_cast<std::size_t>(row_end) * w; ++p) {
            st.pixel_begin[p] += offset;
            st.pixel_end[p] += offset;
        }
        st.contributions.insert(st.contributions.end(), lists[k].begin(), lists[k].end());
        offset += static_cast<std::uint32_t>(lists[k].size());
    }
    st.checksum = contribution_checksum(st);

    out.image = imaging::Frame(w, h, settings.output_bit_depth, std::move(image));
    out.foreground = imaging::Frame(w, h, settings.output_bit_depth, std::move(foreground));
    return out;
}

// ---------------------------------------------------------------------------
// Reverse pass

namespace {

// Per-splat screen-space adjoints.
struct SplatAdjoint {
    double mean_x = 0.0, mean_y = 0.0;
    double conic00 = 0.0, conic01 = 0.0, conic11 = 0.0;  ///< full-matrix gradient entries
    double opacity = 0.0;
    double emission = 0.0;

    SplatAdjoint& operator+=(const SplatAdjoint& o) {
        mean_x += o.mean_x;
        mean_y += o.mean_y;
        conic00 += o.conic00;
        conic01 += o.conic01;
        conic11 += o.conic11;
        opacity += o.opacity;
        emission += o.emission;
        return *this;
    }
};

// d rotation-matrix -> d normalized quaternion (w, x, y, z).
Eigen::Vector4d rotation_matrix_adjoint(const Eigen::Vector4d& qn, const Eigen::Matrix3d& dr) {
    const double w = qn[0], x = qn[1], y = qn[2], z = qn[3];
    Eigen::Vector4d dq;
    dq[0] = 2.0 * (-z * dr(0, 1) + y * dr(0, 2) + z * dr(1, 0) - x * dr(1, 2) - y * dr(2, 0) + x * dr(2, 1));
    dq[1] = 2.0 * (y * dr(0, 1) + z * dr(0, 2) + y * dr(1, 0) - 2.0 * x * dr(1, 1) - w * dr(1, 2) +
                   z * dr(2, 0) + w * dr(2, 1) - 2.0 * x * dr(2, 2));
    dq[2] = 2.0 * (-2.0 * y * dr(0, 0) + x * dr(0, 1) + w * dr(0, 2) + x * dr(1, 0) + z * dr(1, 2) -
                   w * dr(2, 0) + z * dr(2, 1) - 2.0 * y * dr(2, 2));
    dq[3] = 2.0 * (-2.0 * z * dr(0, 0) - w * dr(0, 1) + x * dr(0, 2) + w * dr(1, 0) - 2.0 * z * dr(1, 1) +
                   y * dr(1, 2) + x * dr(2, 0) + y * dr(2, 1));
    return dq;
}

}  // namespace

RasterGradients rasterize_backward(const RasterState& st, const RenderOutput& output,
                                   std::span<const Gaussian> gaussians, const Camera& cam,
                                   const RenderSettings& settings,
                                   std::span<const double> image_adjoint,
                                   std::span<const double> residual_adjoint) {
    const int w = cam.width;
    const int h = cam.height;
    const std::size_t n_pix = static_cast<std::size_t>(w) * h;
    if (image_adjoint.size() != n_pix || (!residual_adjoint.empty() && residual_adjoint.size() != n_pix)) {
        throw DataError("adjoint buffers must have one value per pixel");
    }
    if (contribution_checksum(st) != st.checksum) {
        throw DataError("render backward: composited index list does not match the forward pass");
    }

    const std::size_t n_splats = st.splats.size();
    const int workers = worker_count(settings, h);
    std::vector<std::vector<SplatAdjoint>> partial(workers, std::vector<SplatAdjoint>(n_splats));
    RasterGradients grads;
    grads.background.assign(n_pix, 0.0);
    grads.emissions.assign(gaussians.size(), 0.0);
    grads.gaussians.assign(gaussians.size(), GaussianGradient{});

    const bool residual_mix = settings.blend == BackgroundBlend::kResidual;
    run_rows(settings.threads, h, [&](int worker, int row_begin, int row_end) {
        auto& acc = partial[worker];
        for (int y = row_begin; y < row_end; ++y) {
            const double yc = y + 0.5;
            for (int x = 0; x < w; ++x) {
                const double xc = x + 0.5;
                const std::size_t p = static_cast<std::size_t>(y) * w + x;
                const double g = image_adjoint[p];
                const double gm_extra = residual_adjoint.empty() ? 0.0 : residual_adjoint[p];
                const double m = output.residual[p];
                const double t_final = output.final_transmittance[p];
                const double b = output.background[p];
                // Unclamped foreground, recomputed from the contribution list.
                double fg = 0.0;
                for (std::uint32_t k = st.pixel_begin[p]; k < st.pixel_end[p]; ++k) {
                    const auto& c = st.contributions[k];
                    fg += c.transmittance * c.alpha * st.splats[c.splat].emission;
                }
                double d_fg, d_tfinal = 0.0, d_m;
                if (residual_mix) {
                    d_fg = g * (1.0 - m);
                    grads.background[p] = g * m;
                    d_m = g * (b - fg) + gm_extra;
                } else {
                    d_fg = g;
                    grads.background[p] = g * t_final;
                    d_tfinal = g * b;
                    d_m = gm_extra;
                }
                const double d_sum = -m * d_m;
                if (d_fg == 0.0 && d_sum == 0.0 && d_tfinal == 0.0) continue;

                double suffix = 0.0;  // sum_{j > i} T_j alpha_j c_j
                for (std::uint32_t k = st.pixel_end[p]; k-- > st.pixel_begin[p];) {
                    const auto& c = st.contributions[k];
                    const Projected& sp = st.splats[c.splat];
                    SplatAdjoint& a = acc[c.splat];
                    const double one_minus = 1.0 - c.alpha;
                    a.emission += d_fg * c.transmittance * c.alpha;
                    double d_alpha = d_fg * (c.transmittance * sp.emission - suffix / one_minus) + d_sum;
                    if (!residual_mix) d_alpha -= d_tfinal * t_final / one_minus;
                    suffix += c.transmittance * c.alpha * sp.emission;
                    if (c.clamped) continue;
                    const double gauss = c.alpha / sp.opacity;
                    a.opacity += d_alpha * gauss;
                    const double d_power = -d_alpha * c.alpha;
                    const double dx = xc - sp.mean2d.x();
                    const double dy = yc - sp.mean2d.y();
                    // power = 0.5 * d^T A d, d = pixel - mean
                    a.mean_x -= d_power * (sp.conic(0, 0) * dx + sp.conic(0, 1) * dy);
                    a.mean_y -= d_power * (sp.conic(1, 0) * dx + sp.conic(1, 1) * dy);
                    a.conic00 += d_power * 0.5 * dx * dx;
                    a.conic01 += d_power * 0.5 * dx * dy;
                    a.conic11 += d_power * 0.5 * dy * dy;
                }
            }
        }
    });

    std::vector<SplatAdjoint> total(n_splats);
    for (int k = 0; k < workers; ++k) {
        for (std::size_t s = 0; s < n_splats; ++s) total[s] += partial[k][s];
    }

    const Eigen::Matrix3d wrot = cam.rotation.toRotationMatrix();
    for (std::size_t s = 0; s < n_splats; ++s) {
        const Projected& sp = st.splats[s];
        const SplatAdjoint& a = total[s];
        const int gi = sp.gaussian_index;
        const Gaussian& gauss = gaussians[gi];
        GaussianGradient& gg = grads.gaussians[gi];
        grads.emissions[gi] += a.emission;
        gg.opacity_logit += a.opacity * sp.opacity * (1.0 - sp.opacity);

        // conic = cov^-1  =>  d cov = -A dA A
        Eigen::Matrix2d d_conic;
        d_conic << a.conic00, a.conic01, a.conic01, a.conic11;
        const Eigen::Matrix2d d_cov = -sp.conic * d_conic * sp.conic;

        // cov = J M J^T + dilation I
        const Eigen::Matrix3d d_view_cov = sp.jacobian.transpose() * d_cov * sp.jacobian;
        const Eigen::Matrix<double, 2, 3> d_jac = 2.0 * d_cov * sp.jacobian * sp.view_cov;

        // M = W Sigma W^T
        const Eigen::Matrix3d d_world_cov = wrot.transpose() * d_view_cov * wrot;

        // Sigma = R diag(s^2) R^T
        const Eigen::Vector3d s2 = sp.scale.array().square();
        const Eigen::Matrix3d d_rot = 2.0 * d_world_cov * sp.rotation * s2.asDiagonal();
        const Eigen::Matrix3d rt_d_r = sp.rotation.transpose() * d_world_cov * sp.rotation;
        for (int k = 0; k < 3; ++k) gg.log_scale[k] += 2.0 * s2[k] * rt_d_r(k, k);

        const double qnorm = gauss.rotation.norm();
        const Eigen::Vector4d qn = gauss.rotation / qnorm;
        const Eigen::Vector4d d_qn = rotation_matrix_adjoint(qn, d_rot);
        gg.rotation += (d_qn - qn * qn.dot(d_qn)) / qnorm;

        // Projection of the mean and the Jacobian's dependence on the camera-space point.
        const double px = sp.cam_point.x(), py = sp.cam_point.y(), z = sp.cam_point.z();
        const double iz = 1.0 / z, iz2 = iz * iz, iz3 = iz2 * iz;
        Eigen::Vector3d d_p = Eigen::Vector3d::Zero();
        d_p.x() += a.mean_x * cam.fx * iz;
        d_p.y() += a.mean_y * cam.fy * iz;
        d_p.z() += -a.mean_x * cam.fx * px * iz2 - a.mean_y * cam.fy * py * iz2;
        d_p.x() += d_jac(0, 2) * (-cam.fx * iz2);
        d_p.y() += d_jac(1, 2) * (-cam.fy * iz2);
        d_p.z() += d_jac(0, 0) * (-cam.fx * iz2) + d_jac(0, 2) * (2.0 * cam.fx * px * iz3) +
                   d_jac(1, 1) * (-cam.fy * iz2) + d_jac(1, 2) * (2.0 * cam.fy * py * iz3);
        gg.mean += wrot.transpose() * d_p;
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Full model

RenderResult render(std::span<const Gaussian> gaussians, const Camera& cam,
                    const Eigen::VectorXd& frame_embedding, const model::EmissionModel& emission,
                    const model::BackgroundModel& background, const RenderSettings& settings,
                    const Eigen::MatrixXd* encoded_rays) {
    RenderResult r;
    const Eigen::VectorXd c = emission.evaluate(gaussians, frame_embedding, &r.emission_tape);
    Eigen::MatrixXd rays_local;
    if (!encoded_rays) rays_local = background.encode_rays(cam);
    const Eigen::MatrixXd& rays = encoded_rays ? *encoded_rays : rays_local;
    const Eigen::VectorXd bg = background.evaluate(rays, frame_embedding, &r.background_tape);
    r.output = rasterize(gaussians, std::span<const double>(c.data(), c.size()),
                         std::span<const double>(bg.data(), bg.size()), cam, settings, &r.raster);
    return r;
}

SceneGradients render_backward(const RenderResult& forward, std::span<const Gaussian> gaussians,
                               const Camera& cam, const Eigen::VectorXd& frame_embedding,
                               const model::EmissionModel& emission,
                               const model::BackgroundModel& background,
                               const RenderSettings& settings,
                               std::span<const double> image_adjoint,
                               std::span<const double> residual_adjoint) {
    RasterGradients rg = rasterize_backward(forward.raster, forward.output, gaussians, cam, settings,
                                            image_adjoint, residual_adjoint);
    SceneGradients out;
    out.gaussians = std::move(rg.gaussians);

    const Eigen::Map<const Eigen::VectorXd> d_emission(rg.emissions.data(),
                                                       static_cast<Eigen::Index>(rg.emissions.size()));
    model::EmissionModel::Gradients eg =
        emission.backward(forward.emission_tape, gaussians, frame_embedding, d_emission);
    out.gaussian_embeddings = std::move(eg.gaussian_embeddings);
    out.emission_params = std::move(eg.params);

    const Eigen::Map<const Eigen::VectorXd> d_background(rg.background.data(),
                                                         static_cast<Eigen::Index>(rg.background.size()));
    model::BackgroundModel::Gradients bg = background.backward(forward.background_tape, d_background);
    out.background_params = std::move(bg.params);
    out.frame_embedding = eg.frame_embedding + bg.frame_embedding;
    return out;
}

}  // namespace thermsplat::render
