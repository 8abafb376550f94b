#pragma once

#include <span>
#include <vector>

#include "thermsplat/imaging.hpp"

namespace thermsplat::train {

/// A scalar loss together with its gradient with respect to the prediction.
struct LossValue {
    double value = 0.0;
    std::vector<double> adjoint;
};

/// Mean absolute error; the subgradient uses sign(0) = 0.
LossValue l1_loss(const imaging::Frame& pred, const imaging::Frame& target);

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double epsilon = 0.01;  ///< floor on heat-aware window weights
};

/// 1 - weighted mean SSIM over valid windows. Each window is weighted by
/// max(epsilon, Gaussian-weighted mean target intensity).
LossValue hssim_loss(const imaging::Frame& pred, const imaging::Frame& target, const SsimOptions& options = {});

/// Mean binary entropy of the residual transmittance map.
LossValue alpha_reg(std::span<const double> residual);

/// 10 log10(1 / MSE); +infinity for identical images.
double psnr(const imaging::Frame& pred, const imaging::Frame& target);

/// Mean SSIM over valid Gaussian windows.
double ssim(const imaging::Frame& a, const imaging::Frame& b, const SsimOptions& options = {});

struct LossWeights {
    double lambda1 = 0.8;
    double lambda2 = 0.2;
    double lambda3 = 0.01;
};

struct CombinedLoss {
    double total = 0.0;
    double l1 = 0.0;
    double hssim = 0.0;
    double alpha = 0.0;
    std::vector<double> image_adjoint;
    std::vector<double> residual_adjoint;
};

/// lambda1 * L1 + lambda2 * HSSIM + lambda3 * alpha_reg. Terms with zero weight are skipped.
CombinedLoss combined_loss(const imaging::Frame& pred, const imaging::Frame& target,
                           std::span<const double> residual, const LossWeights& weights,
                           const SsimOptions& options = {});

}  // namespace thermsplat::train
