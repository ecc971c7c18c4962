#include "smallgs/metrics.hpp"

#include "internal.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <cstdio>

namespace smallgs {

AlignmentResult umeyama_align(std::span<const Vec3> est, std::span<const Vec3> gt, bool with_scale) {
    if (est.size() != gt.size()) throw Error(ErrorCode::kShapeMismatch, "umeyama_align: point counts differ");
    if (est.size() < 3) throw Error(ErrorCode::kInvalidArgument, "umeyama_align: need at least 3 point pairs");
    const double n = static_cast<double>(est.size());
    Vec3 me = Vec3::Zero(), mg = Vec3::Zero();
    for (std::size_t i = 0; i < est.size(); ++i) {
        me += est[i];
        mg += gt[i];
    }
    me /= n;
    mg /= n;
    Mat3 cov = Mat3::Zero();
    double var_e = 0.0, var_g = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        const Vec3 de = est[i] - me, dg = gt[i] - mg;
        cov += dg * de.transpose();
        var_e += de.squaredNorm();
        var_g += dg.squaredNorm();
    }
    cov /= n;
    var_e /= n;
    var_g /= n;

    const double extent = std::max({1.0, me.norm(), mg.norm()});
    const double tiny = 1e-24 * extent * extent;
    if (with_scale && (var_e <= tiny || var_g <= tiny)) {
        throw Error(ErrorCode::kDegenerate, "umeyama_align: positions coincide, scale is undefined");
    }

    AlignmentResult r;
    Mat3 rot = Mat3::Identity();
    if (cov.norm() > tiny) {
        const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Mat3 s = Mat3::Identity();
        if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;
        rot = svd.matrixU() * s * svd.matrixV().transpose();
        if (with_scale) r.scale = (svd.singularValues().asDiagonal() * s).trace() / var_e;
    }
    if (!(r.scale > 0.0)) throw Error(ErrorCode::kDegenerate, "umeyama_align: non-positive scale");
    r.rotation = matrix_to_quat(rot);
    r.translation = mg - r.scale * rot * me;
    return r;
}

std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& est, const Trajectory& gt,
                                                           double max_dt) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<bool> used(gt.size(), false);
    std::size_t j = 0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        const double t = est[i].timestamp;
        while (j + 1 < gt.size() && gt[j + 1].timestamp <= t) ++j;
        std::size_t best = j;
        if (j + 1 < gt.size() && std::abs(gt[j + 1].timestamp - t) < std::abs(gt[j].timestamp - t)) best = j + 1;
        if (std::abs(gt[best].timestamp - t) <= max_dt && !used[best]) {
            used[best] = true;
            pairs.emplace_back(i, best);
        }
    }
    const std::size_t dropped = est.size() - pairs.size() + gt.size() - pairs.size();
    if (dropped > 0) {
        detail::warn("association_dropped", std::to_string(est.size() - pairs.size()) + " estimated and " +
                                                std::to_string(gt.size() - pairs.size()) +
                                                " ground-truth poses have no match within " +
                                                std::to_string(max_dt) + " s");
    }
    return pairs;
}

namespace {

struct Paired {
    std::vector<Se3Pose> est, gt;
    std::vector<Vec3> est_pos, gt_pos;
};

Paired pair_up(const Trajectory& est, const Trajectory& gt, std::size_t min_pairs) {
    Paired p;
    for (const auto& [i, j] : associate(est, gt)) {
        p.est.push_back(est[i].pose);
        p.gt.push_back(gt[j].pose);
        p.est_pos.push_back(est[i].pose.translation());
        p.gt_pos.push_back(gt[j].pose.translation());
    }
    if (p.est.size() < min_pairs) {
        throw Error(ErrorCode::kInvalidArgument, "only " + std::to_string(p.est.size()) +
                                                     " timestamp associations, need at least " +
                                                     std::to_string(min_pairs));
    }
    return p;
}

std::vector<Vec3> aligned_positions(const Paired& p, bool with_scale) {
    const AlignmentResult a = umeyama_align(p.est_pos, p.gt_pos, with_scale);
    std::vector<Vec3> out;
    out.reserve(p.est_pos.size());
    for (const auto& x : p.est_pos) out.push_back(a.apply(x));
    return out;
}

}  // namespace

double ate(const Trajectory& est, const Trajectory& gt, bool with_scale) {
    const Paired p = pair_up(est, gt, 3);
    const auto aligned = aligned_positions(p, with_scale);
    double sum = 0.0;
    for (std::size_t i = 0; i < aligned.size(); ++i) sum += (aligned[i] - p.gt_pos[i]).squaredNorm();
    return std::sqrt(sum / static_cast<double>(aligned.size()));
}

RpeResult rpe(const Trajectory& est, const Trajectory& gt, int delta) {
    if (delta < 1) throw Error(ErrorCode::kInvalidArgument, "rpe: delta must be >= 1");
    const Paired p = pair_up(est, gt, static_cast<std::size_t>(delta) + 1);
    double sr = 0.0, st = 0.0;
    const std::size_t n = p.est.size() - delta;
    for (std::size_t i = 0; i < n; ++i) {
        const Se3Pose dg = p.gt[i].inverse() * p.gt[i + delta];
        const Se3Pose de = p.est[i].inverse() * p.est[i + delta];
        const Se3Pose e = dg.inverse() * de;
        const double ang = e.rotation_angle() * 180.0 / M_PI;
        sr += ang * ang;
        st += e.translation().squaredNorm();
    }
    return {std::sqrt(sr / static_cast<double>(n)), std::sqrt(st / static_cast<double>(n))};
}

double delta_v(const Trajectory& est, const Trajectory& gt, bool with_scale) {
    const Paired p = pair_up(est, gt, 3);
    const auto aligned = aligned_positions(p, with_scale);
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < aligned.size(); ++i) {
        const Vec3 ve = aligned[i + 1] - aligned[i];
        const Vec3 vg = p.gt_pos[i + 1] - p.gt_pos[i];
        sum += (ve - vg).norm();
    }
    return sum / static_cast<double>(aligned.size() - 1);
}

MetricsReport evaluate_trajectories(const Trajectory& est, const Trajectory& gt, bool with_scale, int rpe_delta) {
    MetricsReport r;
    r.with_scale = with_scale;
    r.n_frames = static_cast<int>(associate(est, gt).size());
    r.ate_rmse = ate(est, gt, with_scale);
    const RpeResult e = rpe(est, gt, rpe_delta);
    r.rpe_rot = e.rot_deg;
    r.rpe_trans = e.trans;
    r.delta_v = delta_v(est, gt, with_scale);
    return r;
}

std::string report_to_json(const MetricsReport& r) {
    const nlohmann::json j = {{"ate_rmse", r.ate_rmse}, {"rpe_rot", r.rpe_rot},   {"rpe_trans", r.rpe_trans},
                              {"delta_v", r.delta_v},   {"n_frames", r.n_frames}, {"with_scale", r.with_scale}};
    return j.dump(2);
}

std::string report_to_table(const MetricsReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "metric      value\n"
                  "ATE         %.6g\n"
                  "RPE_r (deg) %.6g\n"
                  "RPE_t       %.6g\n"
                  "dv          %.6g\n"
                  "frames      %d (%s alignment)\n",
                  r.ate_rmse, r.rpe_rot, r.rpe_trans, r.delta_v, r.n_frames, r.with_scale ? "sim3" : "se3");
    return buf;
}

}  // namespace smallgs
