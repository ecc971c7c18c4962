#include "smallgs/pose_optimizer.hpp"

#include "internal.hpp"
#include "smallgs/losses.hpp"

#include <cmath>

namespace smallgs {

void WindowConfig::validate() const {
    if (window_size < 2) throw Error(ErrorCode::kConfig, "window_size: must be >= 2");
    if (iters < 0) throw Error(ErrorCode::kConfig, "iters: must be >= 0");
    if (!(lr_rot > 0.0)) throw Error(ErrorCode::kConfig, "lr_rot: must be > 0");
    if (!(lr_trans > 0.0)) throw Error(ErrorCode::kConfig, "lr_trans: must be > 0");
    if (!(lr_final_fraction > 0.0 && lr_final_fraction <= 1.0)) {
        throw Error(ErrorCode::kConfig, "lr_final_fraction: must lie in (0, 1]");
    }
    if (!(lambda_s >= 0.0)) throw Error(ErrorCode::kConfig, "lambda_s: must be >= 0");
    if (!(lambda_c_max >= 0.0)) throw Error(ErrorCode::kConfig, "lambda_c_max: must be >= 0");
    if (!(mask_threshold >= 0.0 && mask_threshold <= 1.0)) {
        throw Error(ErrorCode::kConfig, "mask_threshold: must lie in [0, 1]");
    }
}

namespace {

struct FrameTerms {
    double mse = 0.0;
    double ssim_loss = 0.0;  // (1 - ssim) / 2
    Vec6 grad = Vec6::Zero();
};

PlanarMap binary_mask(const PlanarMap& mask, double threshold) {
    PlanarMap m(mask.width(), mask.height(), 1, 0.0);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = mask.data()[i] >= threshold ? 1.0 : 0.0;
    return m;
}

PlanarMap ssim_view(const PlanarMap& m, const WindowConfig& cfg) {
    if (cfg.ssim_mode == SsimMode::kFirstThree && m.channels() > 3) return m.channel_slice(0, 3);
    return m;
}

// mse + ssim_weight * (1 - ssim) / 2 for one frame, with the pose gradient.
FrameTerms frame_terms(const GaussianScene& scene, const PlanarMap& target_masked, const PlanarMap& mask01,
                       const CameraIntrinsics& k, const WindowConfig& cfg, const Se3Pose& pose, double ssim_weight,
                       bool want_grad) {
    FrameTerms t;
    const RenderOutput out = rasterize(scene, pose, k, cfg.raster);
    const PlanarMap rendered = apply_mask(out.map, mask01);
    PlanarMap g_mse;
    t.mse = masked_mse(rendered, target_masked, mask01, 0.5, want_grad ? &g_mse : nullptr);

    const bool use_ssim = ssim_weight > 0.0;
    PlanarMap g_ssim;
    if (use_ssim) {
        const double s = ssim(ssim_view(rendered, cfg), ssim_view(target_masked, cfg), want_grad ? &g_ssim : nullptr);
        t.ssim_loss = 0.5 * (1.0 - s);
    }
    if (!want_grad) return t;

    const int c = rendered.channels();
    const int cs = use_ssim ? g_ssim.channels() : 0;
    PlanarMap upstream = std::move(g_mse);
    for (std::size_t p = 0; p < rendered.pixel_count(); ++p) {
        double* u = upstream.data().data() + p * c;
        if (mask01.data()[p] == 0.0) {
            for (int ch = 0; ch < c; ++ch) u[ch] = 0.0;
            continue;
        }
        for (int ch = 0; ch < cs; ++ch) u[ch] += -0.5 * ssim_weight * g_ssim.data()[p * cs + ch];
    }
    t.grad = rasterize_backward(scene, pose, k, out, upstream).pose;
    return t;
}

void check_window_inputs(const GaussianScene& scene, std::span<const PlanarMap> targets,
                         std::span<const PlanarMap> masks, const CameraIntrinsics& k) {
    if (targets.empty()) throw Error(ErrorCode::kInvalidArgument, "window has no frames");
    if (targets.size() != masks.size()) {
        throw Error(ErrorCode::kShapeMismatch, "window has " + std::to_string(targets.size()) + " targets but " +
                                                   std::to_string(masks.size()) + " masks");
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i].width() != k.width || targets[i].height() != k.height ||
            targets[i].channels() != scene.payload_dim()) {
            throw Error(ErrorCode::kShapeMismatch,
                        "target " + std::to_string(i) + " is " + std::to_string(targets[i].width()) + "x" +
                            std::to_string(targets[i].height()) + "x" + std::to_string(targets[i].channels()) +
                            ", expected " + std::to_string(k.width) + "x" + std::to_string(k.height) + "x" +
                            std::to_string(scene.payload_dim()));
        }
        if (masks[i].channels() != 1 || !masks[i].same_dims(targets[i])) {
            throw Error(ErrorCode::kShapeMismatch, "mask " + std::to_string(i) + " does not match its target");
        }
    }
}

Vec3 camera_position(const Se3Pose& view) { return -(view.rotation_matrix().transpose() * view.translation()); }

}  // namespace

WindowObjective window_objective(const GaussianScene& scene, std::span<const PlanarMap> targets,
                                 std::span<const PlanarMap> masks, const CameraIntrinsics& k,
                                 const WindowConfig& cfg, std::span<const Se3Pose> poses, double lambda_c) {
    check_window_inputs(scene, targets, masks, k);
    if (poses.size() != targets.size()) throw Error(ErrorCode::kShapeMismatch, "pose count differs from target count");
    const double b = static_cast<double>(targets.size());
    WindowObjective obj;
    std::vector<Vec3> positions;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const PlanarMap m01 = binary_mask(masks[i], cfg.mask_threshold);
        const FrameTerms t =
            frame_terms(scene, apply_mask(targets[i], m01), m01, k, cfg, poses[i], cfg.lambda_s / b, false);
        obj.mse += t.mse;
        obj.ssim += t.ssim_loss / b;
        positions.push_back(camera_position(poses[i]));
    }
    if (positions.size() >= 3) obj.smooth = smoothness_loss(positions, lambda_c);
    obj.total = obj.mse + obj.smooth + cfg.lambda_s * obj.ssim;
    return obj;
}

WindowEstimate optimize_window(const GaussianScene& scene, std::span<const PlanarMap> targets,
                               std::span<const PlanarMap> masks, const CameraIntrinsics& k, const WindowConfig& cfg,
                               std::optional<std::span<const Se3Pose>> init, int canonical_index) {
    cfg.validate();
    if (!scene.frozen()) throw Error(ErrorCode::kInvalidArgument, "optimize_window: scene must be frozen");
    check_window_inputs(scene, targets, masks, k);
    const int b = static_cast<int>(targets.size());

    std::vector<Se3Pose> poses(b);
    if (init) {
        if (static_cast<int>(init->size()) != b) {
            throw Error(ErrorCode::kShapeMismatch, "optimize_window: " + std::to_string(init->size()) +
                                                       " initial poses for " + std::to_string(b) + " frames");
        }
        for (int i = 1; i < b; ++i) poses[i] = (*init)[i];
    }
    const std::vector<Se3Pose> initial = poses;

    WindowEstimate est;
    est.canonical_index = canonical_index;
    if (b == 1) {
        est.relative_poses = poses;
        return est;
    }

    std::vector<PlanarMap> m01(b), tgt(b);
    for (int i = 0; i < b; ++i) {
        m01[i] = binary_mask(masks[i], cfg.mask_threshold);
        tgt[i] = apply_mask(targets[i], m01[i]);
    }
    const double ssim_weight = cfg.lambda_s / b;

    const int n = (b - 1) * 6;
    std::vector<double> lr(n), grad(n), step(n);
    for (int i = 0; i < b - 1; ++i) {
        for (int a = 0; a < 3; ++a) {
            lr[i * 6 + a] = cfg.lr_rot;
            lr[i * 6 + 3 + a] = cfg.lr_trans;
        }
    }
    detail::Adam adam(n);
    const int iters = cfg.iters;

    // Rotations are parameterized about the scene centroid rather than the
    // camera center, which decorrelates them from translations.
    Vec3 centroid = Vec3::Zero();
    for (const auto& g : scene.gaussians()) centroid += g.mean;
    if (!scene.empty()) centroid /= static_cast<double>(scene.size());
    std::vector<Vec3> pivot(b);
    std::vector<Vec3> positions(b);
    std::vector<Vec3> smooth_grad;

    for (int it = 0; it < iters; ++it) {
        const double frac = iters > 1 ? static_cast<double>(it) / (iters - 1) : 1.0;
        const double lambda_c = cfg.lambda_c_max * frac;
        const double lr_scale = std::pow(cfg.lr_final_fraction, frac);

        double mse = 0.0;
        for (int i = 1; i < b; ++i) {
            const FrameTerms t = frame_terms(scene, tgt[i], m01[i], k, cfg, poses[i], ssim_weight, true);
            mse += t.mse;
            for (int a = 0; a < 6; ++a) grad[(i - 1) * 6 + a] = t.grad[a];
            pivot[i] = poses[i].apply(centroid);
        }
        if (b >= 3 && lambda_c > 0.0) {
            for (int i = 0; i < b; ++i) positions[i] = camera_position(poses[i]);
            smoothness_loss(positions, lambda_c, &smooth_grad);
            // x = -R^T t; under exp(xi) * T, dx/dnu = -R^T and dx/domega = 0.
            for (int i = 1; i < b; ++i) {
                const Vec3 g = -(poses[i].rotation_matrix() * smooth_grad[i]);
                for (int a = 0; a < 3; ++a) grad[(i - 1) * 6 + 3 + a] += g[a];
            }
        }
        // A pivoted increment (omega, nu) equals the plain increment
        // (omega, nu + c x omega).
        for (int i = 1; i < b; ++i) {
            double* g = grad.data() + (i - 1) * 6;
            const Vec3 g_nu(g[3], g[4], g[5]);
            const Vec3 extra = g_nu.cross(pivot[i]);
            for (int a = 0; a < 3; ++a) g[a] += extra[a];
        }
        std::fill(step.begin(), step.end(), 0.0);
        adam.step(step, grad, lr, lr_scale);
        for (int i = 1; i < b; ++i) {
            Vec6 xi;
            for (int a = 0; a < 6; ++a) xi[a] = step[(i - 1) * 6 + a];
            xi.tail<3>() += pivot[i].cross(Vec3(xi.head<3>()));
            poses[i] = poses[i].retract(xi);
        }
        if (it % 50 == 0 || it + 1 == iters) {
            detail::log_json(LogLevel::kDebug, {{"event", "window_iter"},
                                                {"canonical_index", canonical_index},
                                                {"iter", it},
                                                {"mse", mse},
                                                {"lambda_c", lambda_c}});
        }
    }

    const double final_lambda = cfg.lambda_c_max;
    est.initial_loss = window_objective(scene, targets, masks, k, cfg, initial, final_lambda).total;
    est.final_loss = window_objective(scene, targets, masks, k, cfg, poses, final_lambda).total;
    if (est.final_loss > est.initial_loss) {
        detail::warn("window_no_improvement", "optimized poses scored worse than the initialization; keeping it");
        poses = initial;
        est.final_loss = est.initial_loss;
    }
    poses[0] = Se3Pose::identity();
    est.relative_poses = std::move(poses);
    return est;
}

std::vector<std::pair<int, int>> plan_windows(int n_frames, int window_size) {
    if (n_frames < 1) throw Error(ErrorCode::kInvalidArgument, "plan_windows: no frames");
    if (window_size < 2) throw Error(ErrorCode::kInvalidArgument, "plan_windows: window_size must be >= 2");
    std::vector<std::pair<int, int>> out;
    int start = 0;
    for (;;) {
        int end = std::min(start + window_size - 1, n_frames - 1);
        if (n_frames - 1 - end == 1) end = n_frames - 1;
        out.emplace_back(start, end);
        if (end == n_frames - 1) break;
        start = end;
    }
    return out;
}

Trajectory chain_windows(std::span<const WindowEstimate> windows, std::span<const double> timestamps,
                         const Se3Pose& origin) {
    if (windows.empty()) throw Error(ErrorCode::kInvalidArgument, "chain_windows: no windows");
    std::vector<TimedPose> out;
    Se3Pose canonical = origin;
    int expected = windows.front().canonical_index;
    if (expected != 0) throw Error(ErrorCode::kInvalidArgument, "chain_windows: first window must start at frame 0");
    for (std::size_t n = 0; n < windows.size(); ++n) {
        const WindowEstimate& w = windows[n];
        if (w.relative_poses.empty()) throw Error(ErrorCode::kInvalidArgument, "chain_windows: empty window");
        if (w.canonical_index != expected) {
            throw Error(ErrorCode::kInvalidArgument, "chain_windows: window " + std::to_string(n) + " starts at frame " +
                                                         std::to_string(w.canonical_index) + ", expected " +
                                                         std::to_string(expected));
        }
        const std::size_t first = n == 0 ? 0 : 1;
        for (std::size_t j = first; j < w.relative_poses.size(); ++j) {
            const int frame = w.canonical_index + static_cast<int>(j);
            double t = frame;
            if (!timestamps.empty()) {
                if (frame >= static_cast<int>(timestamps.size())) {
                    throw Error(ErrorCode::kShapeMismatch, "chain_windows: fewer timestamps than frames");
                }
                t = timestamps[frame];
            }
            out.push_back({t, canonical * w.relative_poses[j].inverse()});
        }
        canonical = canonical * w.relative_poses.back().inverse();
        expected = w.canonical_index + static_cast<int>(w.relative_poses.size()) - 1;
    }
    return Trajectory(std::move(out));
}

std::vector<WindowEstimate> split_windows(const Trajectory& trajectory, int window_size) {
    std::vector<WindowEstimate> out;
    for (const auto& [start, end] : plan_windows(static_cast<int>(trajectory.size()), window_size)) {
        WindowEstimate w;
        w.canonical_index = start;
        const Se3Pose& pc = trajectory[start].pose;
        for (int j = start; j <= end; ++j) {
            w.relative_poses.push_back(j == start ? Se3Pose::identity() : trajectory[j].pose.inverse() * pc);
        }
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace smallgs
