#include "thermsplat/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "thermsplat/error.hpp"

namespace thermsplat::train {

namespace {

void check_geometry(const imaging::Frame& a, const imaging::Frame& b) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw DataError("image geometry mismatch: " + std::to_string(a.width()) + "x" +
                        std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                        std::to_string(b.height()));
    }
}

std::vector<double> gaussian_kernel(int window, double sigma) {
    std::vector<double> k(window);
    const double c = 0.5 * (window - 1);
    double sum = 0.0;
    for (int i = 0; i < window; ++i) {
        k[i] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable "valid" correlation: out is (w-k+1) x (h-k+1).
std::vector<double> filter_valid(const std::vector<double>& in, int w, int h, const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    const int ow = w - n + 1, oh = h - n + 1;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int a = 0; a < n; ++a) s += k[a] * in[static_cast<std::size_t>(y) * w + x + a];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int a = 0; a < n; ++a) s += k[a] * tmp[static_cast<std::size_t>(y + a) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    return out;
}

// Adjoint of filter_valid.
std::vector<double> filter_valid_transpose(const std::vector<double>& g, int w, int h,
                                           const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    const int ow = w - n + 1, oh = h - n + 1;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h, 0.0);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            const double v = g[static_cast<std::size_t>(y) * ow + x];
            for (int a = 0; a < n; ++a) tmp[static_cast<std::size_t>(y + a) * ow + x] += k[a] * v;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            const double v = tmp[static_cast<std::size_t>(y) * ow + x];
            for (int a = 0; a < n; ++a) out[static_cast<std::size_t>(y) * w + x + a] += k[a] * v;
        }
    }
    return out;
}

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

struct SsimMaps {
    std::vector<double> kernel;
    std::vector<double> mu_x, mu_y, e_xx, e_yy, e_xy;
    std::vector<double> ssim;
};

SsimMaps ssim_maps(const imaging::Frame& x, const imaging::Frame& y, const SsimOptions& options) {
    check_geometry(x, y);
    const int w = x.width(), h = x.height();
    if (options.window < 1 || options.window > std::min(w, h)) {
        throw UsageError("ssim window " + std::to_string(options.window) + " exceeds the image size");
    }
    if (!(options.sigma > 0.0)) throw UsageError("ssim sigma must be positive");
    SsimMaps m;
    m.kernel = gaussian_kernel(options.window, options.sigma);
    std::vector<double> xv(x.pixels().begin(), x.pixels().end());
    std::vector<double> yv(y.pixels().begin(), y.pixels().end());
    std::vector<double> xx(xv.size()), yy(xv.size()), xy(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        xx[i] = xv[i] * xv[i];
        yy[i] = yv[i] * yv[i];
        xy[i] = xv[i] * yv[i];
    }
    m.mu_x = filter_valid(xv, w, h, m.kernel);
    m.mu_y = filter_valid(yv, w, h, m.kernel);
    m.e_xx = filter_valid(xx, w, h, m.kernel);
    m.e_yy = filter_valid(yy, w, h, m.kernel);
    m.e_xy = filter_valid(xy, w, h, m.kernel);
    m.ssim.resize(m.mu_x.size());
    for (std::size_t j = 0; j < m.ssim.size(); ++j) {
        const double mx = m.mu_x[j], my = m.mu_y[j];
        const double vx = m.e_xx[j] - mx * mx, vy = m.e_yy[j] - my * my, cxy = m.e_xy[j] - mx * my;
        m.ssim[j] = ((2 * mx * my + kC1) * (2 * cxy + kC2)) / ((mx * mx + my * my + kC1) * (vx + vy + kC2));
    }
    return m;
}

}  // namespace

LossValue l1_loss(const imaging::Frame& pred, const imaging::Frame& target) {
    check_geometry(pred, target);
    const double n = static_cast<double>(pred.size());
    LossValue out;
    out.adjoint.resize(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        out.value += std::abs(d);
        out.adjoint[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
    }
    out.value /= n;
    return out;
}

LossValue hssim_loss(const imaging::Frame& pred, const imaging::Frame& target, const SsimOptions& options) {
    const SsimMaps m = ssim_maps(pred, target, options);
    const std::size_t nw = m.ssim.size();
    std::vector<double> weight(nw);
    double total_weight = 0.0;
    for (std::size_t j = 0; j < nw; ++j) {
        weight[j] = std::max(options.epsilon, m.mu_y[j]);
        total_weight += weight[j];
    }
    LossValue out;
    double acc = 0.0;
    for (std::size_t j = 0; j < nw; ++j) acc += weight[j] * m.ssim[j];
    out.value = 1.0 - acc / total_weight;

    // Gradients with respect to the pred moments mu_x, E[x^2], E[xy] of each window.
    std::vector<double> g_mu(nw), g_xx(nw), g_xy(nw);
    for (std::size_t j = 0; j < nw; ++j) {
        const double a = -weight[j] / total_weight;
        const double mx = m.mu_x[j], my = m.mu_y[j];
        const double vx = m.e_xx[j] - mx * mx, vy = m.e_yy[j] - my * my, cxy = m.e_xy[j] - mx * my;
        const double a1 = 2 * mx * my + kC1, a2 = 2 * cxy + kC2;
        const double b1 = mx * mx + my * my + kC1, b2 = vx + vy + kC2;
        const double s = m.ssim[j];
        g_mu[j] = a * s * (2 * my / a1 - 2 * mx / b1 - 2 * my / a2 + 2 * mx / b2);
        g_xx[j] = a * (-s / b2);
        g_xy[j] = a * (2 * s / a2);
    }
    const int w = pred.width(), h = pred.height();
    const auto d_mu = filter_valid_transpose(g_mu, w, h, m.kernel);
    const auto d_xx = filter_valid_transpose(g_xx, w, h, m.kernel);
    const auto d_xy = filter_valid_transpose(g_xy, w, h, m.kernel);
    out.adjoint.resize(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        out.adjoint[i] = d_mu[i] + 2.0 * pred[i] * d_xx[i] + target[i] * d_xy[i];
    }
    return out;
}

LossValue alpha_reg(std::span<const double> residual) {
    LossValue out;
    out.adjoint.resize(residual.size());
    if (residual.empty()) return out;
    const double n = static_cast<double>(residual.size());
    for (std::size_t i = 0; i < residual.size(); ++i) {
        const double m = residual[i];
        double h = 0.0;
        if (m > 0.0 && m < 1.0) h = -(m * std::log(m) + (1.0 - m) * std::log1p(-m));
        out.value += h;
        // The derivative diverges at m = 0 and m = 1, so it is evaluated on a clamped m.
        const double mc = std::clamp(m, 1e-6, 1.0 - 1e-6);
        out.adjoint[i] = (std::log1p(-mc) - std::log(mc)) / n;
    }
    out.value /= n;
    return out;
}

double psnr(const imaging::Frame& pred, const imaging::Frame& target) {
    check_geometry(pred, target);
    double mse = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        mse += d * d;
    }
    mse /= static_cast<double>(pred.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const imaging::Frame& a, const imaging::Frame& b, const SsimOptions& options) {
    const SsimMaps m = ssim_maps(a, b, options);
    double s = 0.0;
    for (double v : m.ssim) s += v;
    return s / static_cast<double>(m.ssim.size());
}

CombinedLoss combined_loss(const imaging::Frame& pred, const imaging::Frame& target,
                           std::span<const double> residual, const LossWeights& weights,
                           const SsimOptions& options) {
    if (weights.lambda1 < 0 || weights.lambda2 < 0 || weights.lambda3 < 0) {
        throw UsageError("loss weights must be non-negative");
    }
    check_geometry(pred, target);
    CombinedLoss out;
    out.image_adjoint.assign(pred.size(), 0.0);
    out.residual_adjoint.assign(residual.size(), 0.0);
    if (weights.lambda1 > 0) {
        const LossValue l = l1_loss(pred, target);
        out.l1 = l.value;
        for (std::size_t i = 0; i < pred.size(); ++i) out.image_adjoint[i] += weights.lambda1 * l.adjoint[i];
    }
    if (weights.lambda2 > 0) {
        const LossValue l = hssim_loss(pred, target, options);
        out.hssim = l.value;
        for (std::size_t i = 0; i < pred.size(); ++i) out.image_adjoint[i] += weights.lambda2 * l.adjoint[i];
    }
    if (weights.lambda3 > 0) {
        const LossValue l = alpha_reg(residual);
        out.alpha = l.value;
        for (std::size_t i = 0; i < residual.size(); ++i) out.residual_adjoint[i] = weights.lambda3 * l.adjoint[i];
    }
    out.total = weights.lambda1 * out.l1 + weights.lambda2 * out.hssim + weights.lambda3 * out.alpha;
    return out;
}

}  // namespace thermsplat::train
