#pragma once

#include "smallgs/types.hpp"

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace smallgs {

/// x -> scale * R x + t
struct AlignmentResult {
    Quat rotation = Quat::Identity();
    Vec3 translation = Vec3::Zero();
    double scale = 1.0;

    Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
};

/// Least-squares similarity (or rigid) transform taking est onto gt.
AlignmentResult umeyama_align(std::span<const Vec3> est, std::span<const Vec3> gt, bool with_scale);

inline constexpr double kAssociationMaxDt = 0.02;

/// Index pairs (est, gt) matched by nearest timestamp within max_dt. Each
/// ground-truth pose is used at most once; unmatched poses are dropped with
/// a warning.
std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& est, const Trajectory& gt,
                                                           double max_dt = kAssociationMaxDt);

/// RMSE of aligned position residuals.
double ate(const Trajectory& est, const Trajectory& gt, bool with_scale = true);

struct RpeResult {
    double rot_deg = 0.0;
    double trans = 0.0;
};
RpeResult rpe(const Trajectory& est, const Trajectory& gt, int delta = 1);

/// Mean norm of per-frame velocity differences after the ATE alignment.
double delta_v(const Trajectory& est, const Trajectory& gt, bool with_scale = true);

struct MetricsReport {
    double ate_rmse = 0.0;
    double rpe_rot = 0.0;
    double rpe_trans = 0.0;
    double delta_v = 0.0;
    int n_frames = 0;
    bool with_scale = true;
};

MetricsReport evaluate_trajectories(const Trajectory& est, const Trajectory& gt, bool with_scale = true,
                                    int rpe_delta = 1);
std::string report_to_json(const MetricsReport& r);
std::string report_to_table(const MetricsReport& r);

}  // namespace smallgs
