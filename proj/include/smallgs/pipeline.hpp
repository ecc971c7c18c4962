#pragma once

#include "smallgs/config.hpp"
#include "smallgs/io.hpp"
#include "smallgs/pose_optimizer.hpp"
#include "smallgs/scene_init.hpp"

#include <optional>
#include <vector>

namespace smallgs {

struct WindowReport {
    int start = 0;
    int end = 0;
    std::size_t gaussians = 0;
    FitReport fit;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

struct EstimateResult {
    Trajectory trajectory{{TimedPose{}}};
    std::vector<WindowEstimate> windows;
    std::vector<WindowReport> reports;
};

/// Sliding-window estimation over the whole dataset. `init` (camera-to-world,
/// one pose per frame) switches to refinement from those poses.
EstimateResult estimate_sequence(const Dataset& data, const RunConfig& cfg,
                                 const std::optional<Trajectory>& init = std::nullopt);

/// Fits the canonical scene of the window holding `frame` and renders it from
/// `pose`, a camera-to-world pose relative to that window's canonical camera.
PlanarMap render_frame(const Dataset& data, const RunConfig& cfg, int frame, const Se3Pose& pose);

}  // namespace smallgs
