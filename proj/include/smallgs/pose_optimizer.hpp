#pragma once

#include "smallgs/rasterizer.hpp"
#include "smallgs/types.hpp"

#include <optional>
#include <span>
#include <vector>

namespace smallgs {

enum class LossSpace { kRgb, kFeature };
enum class SsimMode { kChannelAverage, kFirstThree };

struct WindowConfig {
    int window_size = 15;
    int iters = 400;
    double lr_rot = 3e-3;
    double lr_trans = 3e-3;
    /// Learning rates decay exponentially to this fraction at the last step.
    double lr_final_fraction = 0.1;
    double lambda_s = 0.2;
    /// Smoothness weight ramps linearly from 0 to this value.
    double lambda_c_max = 1.0;
    LossSpace loss_space = LossSpace::kRgb;
    SsimMode ssim_mode = SsimMode::kChannelAverage;
    double mask_threshold = 0.5;
    RasterConfig raster;

    void validate() const;
};

struct WindowEstimate {
    int canonical_index = 0;
    /// World-to-camera transforms from the canonical camera frame to each
    /// frame's camera; the first is exactly identity.
    std::vector<Se3Pose> relative_poses;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

struct WindowObjective {
    double total = 0.0;
    double mse = 0.0;
    double smooth = 0.0;
    double ssim = 0.0;
};

/// Window objective at the given poses and smoothness weight.
WindowObjective window_objective(const GaussianScene& scene, std::span<const PlanarMap> targets,
                                 std::span<const PlanarMap> masks, const CameraIntrinsics& k,
                                 const WindowConfig& cfg, std::span<const Se3Pose> poses,
                                 double lambda_c);

/// Jointly optimizes poses 1..b-1 of a window against a frozen scene.
WindowEstimate optimize_window(const GaussianScene& scene, std::span<const PlanarMap> targets,
                               std::span<const PlanarMap> masks, const CameraIntrinsics& k,
                               const WindowConfig& cfg,
                               std::optional<std::span<const Se3Pose>> init = std::nullopt,
                               int canonical_index = 0);

/// Frame ranges [start, end] for a sequence of n frames. Consecutive
/// windows share one frame; a trailing window that would add a single frame
/// is merged into its predecessor.
std::vector<std::pair<int, int>> plan_windows(int n_frames, int window_size);

/// Chains per-window relative poses into camera-to-world poses starting at
/// `origin`. `timestamps[i]` labels global frame i; empty means frame
/// indices.
Trajectory chain_windows(std::span<const WindowEstimate> windows,
                         std::span<const double> timestamps = {},
                         const Se3Pose& origin = Se3Pose::identity());

/// Inverse of chain_windows for a camera-to-world trajectory: relative pose
/// j of a window is inverse(P_j) * P_canonical.
std::vector<WindowEstimate> split_windows(const Trajectory& trajectory, int window_size);

}  // namespace smallgs
