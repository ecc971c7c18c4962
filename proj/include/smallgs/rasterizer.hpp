#pragma once

#include "smallgs/types.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace smallgs {

/// Blending and culling constants. Defaults follow the usual splatting
/// conventions.
struct RasterConfig {
    double alpha_max = 0.99;
    double min_transmittance = 1e-4;
    double lowpass = 0.3;
    double near_plane = 0.01;
    /// Per-Gaussian contributions below this are ignored. The screen-space
    /// extent of a Gaussian is the radius at which its alpha falls to this
    /// value, so tiling never drops a contribution above it.
    double alpha_min = 1e-8;
    int tile_size = 16;
    /// Per-channel background; empty means zero.
    std::vector<double> background;
    /// 0 selects default_thread_count().
    int threads = 0;
};

struct ProjectedGaussian {
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity();
    double depth = 0.0;
    double opacity = 0.0;
    std::vector<double> payload;
    double radius_px = 0.0;
};

/// R diag(s^2) R^T.
Mat3 build_covariance(const Quat& rot, const Vec3& scale);

/// Screen-space footprint of `g` under the world-to-camera `view`, or
/// nullopt when the Gaussian is behind the near plane or off-image.
std::optional<ProjectedGaussian> project_gaussian(const Gaussian3D& g, const Se3Pose& view,
                                                  const CameraIntrinsics& k,
                                                  const RasterConfig& cfg = {});

/// Forward records kept for the backward pass.
struct RenderAux;

struct RenderOutput {
    PlanarMap map;
    PlanarMap alpha;
    std::shared_ptr<const RenderAux> aux;
};

RenderOutput rasterize(const GaussianScene& scene, const Se3Pose& view, const CameraIntrinsics& k,
                       const RasterConfig& cfg = {});

struct SceneGradients {
    std::vector<Vec3> mean;
    std::vector<Vec4> rot;  // with respect to (w, x, y, z)
    std::vector<Vec3> log_scale;
    std::vector<double> opacity_logit;
    std::vector<double> payload;  // size() * payload_dim, row-major
};

struct BackwardResult {
    /// d loss / d xi for view' = exp(xi) * view, xi = (omega, nu).
    Vec6 pose = Vec6::Zero();
    std::optional<SceneGradients> scene;
};

/// Propagates `upstream` (d loss / d map) through the render recorded in
/// `forward`. Scene parameter gradients are only available for unfrozen
/// scenes.
BackwardResult rasterize_backward(const GaussianScene& scene, const Se3Pose& view,
                                  const CameraIntrinsics& k, const RenderOutput& forward,
                                  const PlanarMap& upstream, bool want_scene_gradients = false);

}  // namespace smallgs
