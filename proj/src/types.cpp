#include "smallgs/types.hpp"

#include <algorithm>
#include <cmath>

namespace smallgs {

namespace {

Quat canonical(Quat q) {
    if (!std::isfinite(q.w()) || !std::isfinite(q.x()) || !std::isfinite(q.y()) ||
        !std::isfinite(q.z())) {
        throw Error(ErrorCode::kInvalidArgument, "non-finite quaternion");
    }
    const double n = q.norm();
    if (n < 1e-12) throw Error(ErrorCode::kInvalidArgument, "zero quaternion");
    q.coeffs() /= n;
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    return q;
}

}  // namespace

Mat3 quat_to_matrix(const Quat& q_in) {
    const Quat q = canonical(q_in);
    const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Quat matrix_to_quat(const Mat3& r) { return canonical(Quat(r)); }

Mat3 hat(const Vec3& a) {
    Mat3 m;
    m << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
    return m;
}

Mat3 so3_exp(const Vec3& omega) {
    const double theta = omega.norm();
    const Mat3 k = hat(omega);
    if (theta < 1e-8) return Mat3::Identity() + k + 0.5 * k * k;
    return Mat3::Identity() + std::sin(theta) / theta * k +
           (1.0 - std::cos(theta)) / (theta * theta) * k * k;
}

Vec3 so3_log(const Mat3& r) {
    const Quat q = matrix_to_quat(r);
    const Vec3 v = q.vec();
    const double s = v.norm();
    if (s < 1e-12) return 2.0 * v / q.w();
    const double angle = 2.0 * std::atan2(s, q.w());
    return angle * v / s;
}

Se3Pose::Se3Pose()
    : rotation_(Quat::Identity()), matrix_(Mat3::Identity()), translation_(Vec3::Zero()) {}

Se3Pose::Se3Pose(const Quat& rotation, const Vec3& translation)
    : rotation_(canonical(rotation)), translation_(translation) {
    if (!translation.allFinite()) throw Error(ErrorCode::kInvalidArgument, "non-finite translation");
    matrix_ = quat_to_matrix(rotation_);
}

Se3Pose::Se3Pose(const Mat3& rotation, const Vec3& translation)
    : Se3Pose(Quat(rotation), translation) {}

Se3Pose Se3Pose::exp(const Vec6& xi) {
    const Vec3 omega = xi.head<3>();
    const Vec3 nu = xi.tail<3>();
    const double theta = omega.norm();
    const Mat3 k = hat(omega);
    Mat3 v;
    if (theta < 1e-8) {
        v = Mat3::Identity() + 0.5 * k + k * k / 6.0;
    } else {
        const double t2 = theta * theta;
        v = Mat3::Identity() + (1.0 - std::cos(theta)) / t2 * k +
            (theta - std::sin(theta)) / (t2 * theta) * k * k;
    }
    return {so3_exp(omega), Vec3(v * nu)};
}

Se3Pose Se3Pose::from_matrix(const Mat4& m) {
    return {Mat3(m.topLeftCorner<3, 3>()), Vec3(m.topRightCorner<3, 1>())};
}

Vec6 Se3Pose::log() const {
    const Vec3 omega = so3_log(matrix_);
    const double theta = omega.norm();
    const Mat3 k = hat(omega);
    Mat3 v_inv;
    if (theta < 1e-8) {
        v_inv = Mat3::Identity() - 0.5 * k + k * k / 12.0;
    } else {
        const double half = 0.5 * theta;
        const double coef = (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta);
        v_inv = Mat3::Identity() - 0.5 * k + coef * k * k;
    }
    Vec6 xi;
    xi << omega, v_inv * translation_;
    return xi;
}

Se3Pose Se3Pose::inverse() const {
    return {rotation_.conjugate(), Vec3(-(matrix_.transpose() * translation_))};
}

Mat4 Se3Pose::matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = matrix_;
    m.topRightCorner<3, 1>() = translation_;
    return m;
}

Se3Pose Se3Pose::operator*(const Se3Pose& other) const {
    return {rotation_ * other.rotation_, Vec3(matrix_ * other.translation_ + translation_)};
}

double Se3Pose::rotation_angle() const {
    return 2.0 * std::atan2(rotation_.vec().norm(), std::abs(rotation_.w()));
}

CameraIntrinsics::CameraIntrinsics(double fx_, double fy_, double cx_, double cy_, int width_,
                                   int height_)
    : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(width_), height(height_) {
    validate();
}

void CameraIntrinsics::validate() const {
    if (!(width > 0 && height > 0)) {
        throw Error(ErrorCode::kInvalidArgument, "intrinsics: width and height must be positive");
    }
    if (!(fx > 0.0 && fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
        throw Error(ErrorCode::kInvalidArgument, "intrinsics: focal lengths must be positive");
    }
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
        throw Error(ErrorCode::kInvalidArgument, "intrinsics: principal point outside image");
    }
}

Mat3 CameraIntrinsics::matrix() const {
    Mat3 k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
}

Mat3 Gaussian3D::covariance() const {
    const Mat3 r = quat_to_matrix(rot);
    const Vec3 s2 = (2.0 * log_scale).array().exp();
    return r * s2.asDiagonal() * r.transpose();
}

GaussianScene::GaussianScene(int payload_dim) : payload_dim_(payload_dim) {
    if (payload_dim <= 0) throw Error(ErrorCode::kInvalidArgument, "payload_dim must be positive");
}

GaussianScene::GaussianScene(std::vector<Gaussian3D> gaussians, int payload_dim)
    : GaussianScene(payload_dim) {
    for (const auto& g : gaussians) check_payload(g);
    gaussians_ = std::move(gaussians);
}

void GaussianScene::check_payload(const Gaussian3D& g) const {
    if (static_cast<int>(g.payload.size()) != payload_dim_) {
        throw Error(ErrorCode::kShapeMismatch, "gaussian payload length " +
                                                   std::to_string(g.payload.size()) +
                                                   " != payload_dim " + std::to_string(payload_dim_));
    }
}

void GaussianScene::add(Gaussian3D g) {
    if (frozen_) throw Error(ErrorCode::kFrozenScene, "cannot add to a frozen scene");
    check_payload(g);
    gaussians_.push_back(std::move(g));
}

std::span<Gaussian3D> GaussianScene::mutable_gaussians() {
    if (frozen_) throw Error(ErrorCode::kFrozenScene, "scene is frozen");
    return gaussians_;
}

PlanarMap::PlanarMap(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
    if (width <= 0 || height <= 0 || channels <= 0) {
        throw Error(ErrorCode::kInvalidArgument, "planar map dimensions must be positive");
    }
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

PlanarMap::PlanarMap(int width, int height, int channels, std::vector<double> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    if (width <= 0 || height <= 0 || channels <= 0) {
        throw Error(ErrorCode::kInvalidArgument, "planar map dimensions must be positive");
    }
    if (data_.size() != static_cast<std::size_t>(width) * height * channels) {
        throw Error(ErrorCode::kShapeMismatch, "planar map data length does not match dimensions");
    }
    if (!std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); })) {
        throw Error(ErrorCode::kInvalidArgument, "planar map contains non-finite values");
    }
}

PlanarMap PlanarMap::channel_slice(int first, int count) const {
    if (first < 0 || count <= 0 || first + count > channels_) {
        throw Error(ErrorCode::kInvalidArgument, "channel slice out of range");
    }
    PlanarMap out(width_, height_, count);
    for (std::size_t p = 0; p < pixel_count(); ++p) {
        for (int c = 0; c < count; ++c) out.data_[p * count + c] = data_[p * channels_ + first + c];
    }
    return out;
}

Trajectory::Trajectory(std::vector<TimedPose> poses) : poses_(std::move(poses)) {
    if (poses_.empty()) throw Error(ErrorCode::kInvalidArgument, "trajectory must not be empty");
    for (std::size_t i = 1; i < poses_.size(); ++i) {
        if (!(poses_[i].timestamp > poses_[i - 1].timestamp)) {
            throw Error(ErrorCode::kInvalidArgument,
                        "trajectory timestamps must be strictly increasing (index " +
                            std::to_string(i) + ")");
        }
    }
}

std::vector<Vec3> Trajectory::positions() const {
    std::vector<Vec3> out;
    out.reserve(poses_.size());
    for (const auto& p : poses_) out.push_back(p.pose.translation());
    return out;
}

}  // namespace smallgs
