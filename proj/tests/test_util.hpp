#pragma once

#include "smallgs/rasterizer.hpp"
#include "smallgs/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace smallgs::tu {

inline Quat random_quat(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Quat q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    return q;
}

inline Se3Pose random_pose(std::mt19937_64& rng, double max_angle, double max_trans) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vec3 axis(u(rng), u(rng), u(rng));
    axis.normalize();
    const double angle = max_angle * std::abs(u(rng));
    Vec3 t(u(rng), u(rng), u(rng));
    return {Quat(Eigen::AngleAxisd(angle, axis)), Vec3(max_trans * t)};
}

/// Random Gaussians in front of an identity camera with intrinsics `k`.
inline GaussianScene random_scene(std::mt19937_64& rng, const CameraIntrinsics& k, int n, int channels,
                                  double opacity_lo = 0.1, double opacity_hi = 0.7,
                                  double size_px_lo = 1.5, double size_px_hi = 4.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GaussianScene scene(channels);
    for (int i = 0; i < n; ++i) {
        Gaussian3D g;
        const double z = 2.0 + 3.0 * u(rng);
        const double px = -0.1 * k.width + 1.2 * k.width * u(rng);
        const double py = -0.1 * k.height + 1.2 * k.height * u(rng);
        g.mean = Vec3((px - k.cx) * z / k.fx, (py - k.cy) * z / k.fy, z);
        g.rot = random_quat(rng);
        for (int j = 0; j < 3; ++j) {
            const double size_px = size_px_lo + (size_px_hi - size_px_lo) * u(rng);
            g.log_scale[j] = std::log(size_px * z / k.fx);
        }
        g.opacity_logit = logit(opacity_lo + (opacity_hi - opacity_lo) * u(rng));
        g.payload.resize(channels);
        for (auto& c : g.payload) c = u(rng);
        scene.add(std::move(g));
    }
    return scene;
}

/// Per-pixel blend over every Gaussian, written independently of the tiled
/// renderer: explicit J W Sigma W^T J^T, global depth sort, no tiles.
inline PlanarMap brute_force_render(const GaussianScene& scene, const Se3Pose& view,
                                    const CameraIntrinsics& k, const RasterConfig& cfg,
                                    PlanarMap* alpha_out = nullptr) {
    struct P {
        double depth, mx, my, ia, ib, ic, opacity;
        const std::vector<double>* payload;
    };
    std::vector<P> ps;
    const Eigen::Matrix4d w = view.matrix();
    for (const auto& g : scene.gaussians()) {
        const Eigen::Vector4d ph = w * Eigen::Vector4d(g.mean.x(), g.mean.y(), g.mean.z(), 1.0);
        const double x = ph.x(), y = ph.y(), z = ph.z();
        if (z <= cfg.near_plane) continue;
        const Eigen::Matrix3d r = g.rot.normalized().toRotationMatrix();
        Eigen::Matrix3d s = Eigen::Matrix3d::Zero();
        for (int j = 0; j < 3; ++j) s(j, j) = std::exp(g.log_scale[j]);
        const Eigen::Matrix3d sigma = r * s * s.transpose() * r.transpose();
        const Eigen::Matrix3d wr = w.topLeftCorner<3, 3>();
        Eigen::Matrix<double, 2, 3> jm;
        jm << k.fx / z, 0, -k.fx * x / (z * z), 0, k.fy / z, -k.fy * y / (z * z);
        Eigen::Matrix2d c2 = jm * wr * sigma * wr.transpose() * jm.transpose();
        c2(0, 0) += cfg.lowpass;
        c2(1, 1) += cfg.lowpass;
        const Eigen::Matrix2d inv = c2.inverse();
        ps.push_back({z, k.fx * x / z + k.cx, k.fy * y / z + k.cy, inv(0, 0), 0.5 * (inv(0, 1) + inv(1, 0)),
                      inv(1, 1), 1.0 / (1.0 + std::exp(-g.opacity_logit)), &g.payload});
    }
    std::stable_sort(ps.begin(), ps.end(), [](const P& a, const P& b) { return a.depth < b.depth; });
    const int ch = scene.payload_dim();
    PlanarMap out(k.width, k.height, ch);
    if (alpha_out) *alpha_out = PlanarMap(k.width, k.height, 1);
    for (int py = 0; py < k.height; ++py) {
        for (int px = 0; px < k.width; ++px) {
            double t = 1.0;
            for (const P& p : ps) {
                const double dx = px - p.mx, dy = py - p.my;
                double a = p.opacity * std::exp(-0.5 * (p.ia * dx * dx + 2 * p.ib * dx * dy + p.ic * dy * dy));
                a = std::min(cfg.alpha_max, a);
                for (int c = 0; c < ch; ++c) out.at(px, py, c) += (*p.payload)[c] * a * t;
                t *= 1.0 - a;
                if (t < cfg.min_transmittance) break;
            }
            for (int c = 0; c < ch; ++c) {
                out.at(px, py, c) += t * (cfg.background.empty() ? 0.0 : cfg.background[c]);
            }
            if (alpha_out) alpha_out->at(px, py, 0) = 1.0 - t;
        }
    }
    return out;
}

inline double mse(const PlanarMap& a, const PlanarMap& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    return s / static_cast<double>(a.size());
}

inline PlanarMap mse_grad(const PlanarMap& a, const PlanarMap& b) {
    PlanarMap g(a.width(), a.height(), a.channels());
    for (std::size_t i = 0; i < a.size(); ++i) g.data()[i] = 2.0 * (a.data()[i] - b.data()[i]) / a.size();
    return g;
}

inline Trajectory from_positions(const std::vector<Vec3>& xs, const std::vector<Quat>& qs = {}) {
    std::vector<TimedPose> ps;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        ps.push_back({i / 30.0, Se3Pose(qs.empty() ? Quat::Identity() : qs[i], xs[i])});
    }
    return Trajectory(ps);
}

inline Trajectory transformed(const Trajectory& t, const Se3Pose& g, double scale = 1.0) {
    std::vector<TimedPose> ps;
    for (const auto& p : t) {
        const Se3Pose q = g * p.pose;
        ps.push_back({p.timestamp, Se3Pose(q.rotation(), Vec3(scale * q.translation()))});
    }
    return Trajectory(ps);
}

inline Trajectory random_trajectory(std::mt19937_64& rng, int n) {
    std::vector<TimedPose> ps;
    Se3Pose p;
    for (int i = 0; i < n; ++i) {
        ps.push_back({0.5 + i / 30.0, p});
        p = p * random_pose(rng, 0.1, 0.3);
    }
    return Trajectory(ps);
}

// Damped Gauss-Newton over (log scale, rotation vector, translation) with a
// finite-difference Jacobian; returns the minimal RMSE.
inline double rmse_by_search(const std::vector<Vec3>& est, const std::vector<Vec3>& gt, bool with_scale) {
    using Vec7 = Eigen::Matrix<double, 7, 1>;
    const int n = static_cast<int>(est.size());
    auto residual = [&](const Vec7& x) {
        Eigen::VectorXd r(3 * n);
        const double s = with_scale ? std::exp(x[0]) : 1.0;
        const Mat3 rot = so3_exp(x.segment<3>(1));
        for (int i = 0; i < n; ++i) r.segment<3>(3 * i) = s * rot * est[i] + x.segment<3>(4) - gt[i];
        return r;
    };
    Vec7 x = Vec7::Zero();
    double lambda = 1e-3;
    for (int it = 0; it < 500; ++it) {
        const Eigen::VectorXd r = residual(x);
        Eigen::MatrixXd j(3 * n, 7);
        for (int a = 0; a < 7; ++a) {
            Vec7 h = Vec7::Zero();
            h[a] = 1e-7;
            j.col(a) = (residual(x + h) - residual(x - h)) / 2e-7;
        }
        Eigen::Matrix<double, 7, 7> a = j.transpose() * j;
        a.diagonal().array() += lambda;
        const Vec7 step = a.ldlt().solve(-j.transpose() * r);
        if (residual(x + step).squaredNorm() < r.squaredNorm()) {
            x += step;
            lambda *= 0.3;
        } else {
            lambda *= 10;
        }
        if (step.norm() < 1e-15) break;
    }
    return std::sqrt(residual(x).squaredNorm() / n);
}

}  // namespace smallgs::tu
