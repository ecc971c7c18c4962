#pragma once

#include "smallgs/types.hpp"

#include <span>
#include <vector>

namespace smallgs {

/// Mean squared difference over channels of pixels with mask >= threshold.
/// When `grad` is given it receives d loss / d rendered.
double masked_mse(const PlanarMap& rendered, const PlanarMap& target, const PlanarMap& mask,
                  double threshold = 0.5, PlanarMap* grad = nullptr);

/// Zeroes every pixel whose mask is below threshold.
PlanarMap apply_mask(const PlanarMap& map, const PlanarMap& mask, double threshold = 0.5);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// Channel-averaged SSIM over all positions where the 11x11 Gaussian window
/// fits inside the image (dynamic range 1). `grad_a` receives d ssim / d a.
double ssim(const PlanarMap& a, const PlanarMap& b, PlanarMap* grad_a = nullptr);

/// lambda * sum of |x[i+1] - 2 x[i] + x[i-1]|. `grad` receives d / d x.
double smoothness_loss(std::span<const Vec3> positions, double lambda,
                       std::vector<Vec3>* grad = nullptr);

}  // namespace smallgs
