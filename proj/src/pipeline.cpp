#include "smallgs/pipeline.hpp"

#include "internal.hpp"

#include <chrono>

namespace smallgs {

namespace {

struct WindowInputs {
    int start = 0;
    std::vector<PlanarMap> targets;
    std::vector<PlanarMap> masks;
    PlanarMap canonical_rgb;
};

WindowInputs load_window(const Dataset& data, const RunConfig& cfg, int start, int end) {
    WindowInputs in;
    in.start = start;
    const bool feature = cfg.window.loss_space == LossSpace::kFeature;
    if (feature) {
        if (!data.has_features()) {
            throw Error(ErrorCode::kIo, "loss_space is feature but the dataset has no feat/ directory: " +
                                            (data.root() / "feat").string());
        }
        if (cfg.feature_channels > data.feature_channels()) {
            throw Error(ErrorCode::kConfig, "f = " + std::to_string(cfg.feature_channels) + " exceeds the " +
                                                std::to_string(data.feature_channels()) +
                                                " channels stored in feat/");
        }
        std::vector<PlanarMap> raw;
        for (int i = start; i <= end; ++i) raw.push_back(data.features(i));
        in.targets = std::move(pca_select_channels(raw, cfg.feature_channels).maps);
    } else {
        for (int i = start; i <= end; ++i) in.targets.push_back(data.rgb(i));
    }
    for (int i = start; i <= end; ++i) in.masks.push_back(data.mask(i));
    if (feature && cfg.fit_space == FitSpace::kRgb) in.canonical_rgb = data.rgb(start);
    return in;
}

GaussianScene unfrozen_copy(const GaussianScene& s) {
    return GaussianScene(std::vector<Gaussian3D>(s.gaussians().begin(), s.gaussians().end()), s.payload_dim());
}

GaussianScene canonical_scene(const Dataset& data, const RunConfig& cfg, const WindowInputs& in, FitReport* report) {
    const CameraIntrinsics& k = data.intrinsics();
    const bool rgb_fit = cfg.window.loss_space == LossSpace::kFeature && cfg.fit_space == FitSpace::kRgb;
    const PlanarMap& fit_target = rgb_fit ? in.canonical_rgb : in.targets.front();
    const PlanarMap& mask = in.masks.front();

    GaussianScene scene(1);
    if (cfg.init_source == InitSource::kPointCloud) {
        const auto points = load_pointcloud(data.pointcloud_path(in.start));
        scene = init_gaussians(points, cfg.lift);
        if (scene.payload_dim() != fit_target.channels()) scene = reseed_payloads(scene, fit_target, k);
    } else {
        const auto points = lift_depth(data.depth(in.start), mask, k, fit_target, cfg.lift);
        scene = init_gaussians(points, cfg.lift);
    }
    FitConfig fc = cfg.fit;
    fc.raster = cfg.window.raster;
    GaussianScene fitted = fit_canonical(std::move(scene), fit_target, mask, k, fc, report);
    if (!rgb_fit) return fitted;
    GaussianScene reseeded = reseed_payloads(unfrozen_copy(fitted), in.targets.front(), k);
    reseeded.freeze();
    return reseeded;
}

}  // namespace

EstimateResult estimate_sequence(const Dataset& data, const RunConfig& cfg, const std::optional<Trajectory>& init) {
    cfg.validate();
    const int n = data.frame_count();
    if (init && static_cast<int>(init->size()) != n) {
        throw Error(ErrorCode::kShapeMismatch, "initial trajectory has " + std::to_string(init->size()) +
                                                   " poses but the dataset has " + std::to_string(n) + " frames");
    }
    const auto plan = plan_windows(n, cfg.window.window_size);
    EstimateResult result;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t w = 0; w < plan.size(); ++w) {
        const auto [start, end] = plan[w];
        const WindowInputs in = load_window(data, cfg, start, end);
        WindowReport rep;
        rep.start = start;
        rep.end = end;
        const GaussianScene scene = canonical_scene(data, cfg, in, &rep.fit);
        rep.gaussians = scene.size();

        std::vector<Se3Pose> init_rel;
        if (init) {
            const Se3Pose& pc = (*init)[start].pose;
            for (int j = start; j <= end; ++j) init_rel.push_back((*init)[j].pose.inverse() * pc);
        }
        std::optional<std::span<const Se3Pose>> init_span;
        if (init) init_span = std::span<const Se3Pose>(init_rel);
        WindowEstimate est = optimize_window(scene, in.targets, in.masks, data.intrinsics(), cfg.window, init_span, start);
        rep.initial_loss = est.initial_loss;
        rep.final_loss = est.final_loss;

        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        detail::log_json(LogLevel::kInfo, {{"event", "window_done"},
                                           {"window", w},
                                           {"of", plan.size()},
                                           {"start", start},
                                           {"end", end},
                                           {"gaussians", rep.gaussians},
                                           {"fit_loss", rep.fit.final_loss},
                                           {"initial_loss", rep.initial_loss},
                                           {"final_loss", rep.final_loss},
                                           {"elapsed_s", secs}});
        result.windows.push_back(std::move(est));
        result.reports.push_back(rep);
    }
    result.trajectory = chain_windows(result.windows, data.timestamps());
    return result;
}

PlanarMap render_frame(const Dataset& data, const RunConfig& cfg, int frame, const Se3Pose& pose) {
    cfg.validate();
    if (frame < 0 || frame >= data.frame_count()) {
        throw Error(ErrorCode::kInvalidArgument, "frame " + std::to_string(frame) + " out of range [0, " +
                                                     std::to_string(data.frame_count()) + ")");
    }
    int start = 0, end = 0;
    for (const auto& [s, e] : plan_windows(data.frame_count(), cfg.window.window_size)) {
        if (frame >= s && frame <= e) {
            start = s;
            end = e;
        }
    }
    const WindowInputs in = load_window(data, cfg, start, end);
    const GaussianScene scene = canonical_scene(data, cfg, in, nullptr);
    return rasterize(scene, pose.inverse(), data.intrinsics(), cfg.window.raster).map;
}

}  // namespace smallgs
