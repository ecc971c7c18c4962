#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace smallgs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Quat = Eigen::Quaterniond;

enum class ErrorCode {
    kInvalidArgument = 1,
    kShapeMismatch,
    kIo,
    kParse,
    kUnsupportedFormat,
    kDegenerate,
    kFrozenScene,
    kConfig,
    kInternal,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Rotation matrix of a unit quaternion. Throws on a zero or non-finite
/// quaternion; a non-unit input is normalized first.
Mat3 quat_to_matrix(const Quat& q);

/// Unit quaternion of a rotation matrix, canonicalized to w >= 0.
Quat matrix_to_quat(const Mat3& r);

/// Skew-symmetric cross-product matrix: hat(a) * b == a.cross(b).
Mat3 hat(const Vec3& a);

/// Rotation vector exponential / logarithm on SO(3).
Mat3 so3_exp(const Vec3& omega);
Vec3 so3_log(const Mat3& r);

/// Rigid transform x -> R x + t. The rotation is stored scalar-first with
/// w >= 0; construction renormalizes.
class Se3Pose {
public:
    Se3Pose();
    Se3Pose(const Quat& rotation, const Vec3& translation);
    Se3Pose(const Mat3& rotation, const Vec3& translation);

    static Se3Pose identity() { return {}; }
    /// Group exponential of xi = (omega, nu): rotation part first.
    static Se3Pose exp(const Vec6& xi);
    static Se3Pose from_matrix(const Mat4& m);

    Vec6 log() const;

    const Quat& rotation() const { return rotation_; }
    const Mat3& rotation_matrix() const { return matrix_; }
    const Vec3& translation() const { return translation_; }

    Se3Pose inverse() const;
    Vec3 apply(const Vec3& x) const { return matrix_ * x + translation_; }
    Mat4 matrix() const;

    /// (a * b).apply(x) == a.apply(b.apply(x))
    Se3Pose operator*(const Se3Pose& other) const;

    /// Rotation angle in radians, in [0, pi].
    double rotation_angle() const;

    /// exp(xi) * this: left-multiplied tangent increment.
    Se3Pose retract(const Vec6& xi) const { return exp(xi) * *this; }

private:
    Quat rotation_;
    Mat3 matrix_;
    Vec3 translation_;
};

inline Se3Pose compose(const Se3Pose& a, const Se3Pose& b) { return a * b; }
inline Se3Pose inverse(const Se3Pose& p) { return p.inverse(); }
inline Vec3 apply(const Se3Pose& p, const Vec3& x) { return p.apply(x); }

/// Pinhole camera with pixel centers at integer coordinates.
struct CameraIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;

    CameraIntrinsics() = default;
    CameraIntrinsics(double fx, double fy, double cx, double cy, int width, int height);

    void validate() const;
    Mat3 matrix() const;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

struct Gaussian3D {
    Vec3 mean = Vec3::Zero();
    Quat rot = Quat::Identity();
    Vec3 log_scale = Vec3::Zero();
    double opacity_logit = 0.0;
    std::vector<double> payload;

    Vec3 scale() const { return log_scale.array().exp(); }
    double opacity() const { return sigmoid(opacity_logit); }
    Mat3 covariance() const;
};

/// An ordered set of Gaussians sharing one payload dimension. Once frozen
/// the parameters are read-only; the mutating accessors throw.
class GaussianScene {
public:
    explicit GaussianScene(int payload_dim);
    GaussianScene(std::vector<Gaussian3D> gaussians, int payload_dim);

    int payload_dim() const { return payload_dim_; }
    bool frozen() const { return frozen_; }
    std::size_t size() const { return gaussians_.size(); }
    bool empty() const { return gaussians_.empty(); }

    std::span<const Gaussian3D> gaussians() const { return gaussians_; }
    const Gaussian3D& operator[](std::size_t i) const { return gaussians_[i]; }

    void add(Gaussian3D g);
    std::span<Gaussian3D> mutable_gaussians();
    void freeze() { frozen_ = true; }

private:
    void check_payload(const Gaussian3D& g) const;

    std::vector<Gaussian3D> gaussians_;
    int payload_dim_;
    bool frozen_ = false;
};

/// Row-major H x W x C raster of doubles.
class PlanarMap {
public:
    PlanarMap() = default;
    PlanarMap(int width, int height, int channels, double fill = 0.0);
    /// Takes ownership of `data`; throws if its length or any value is bad.
    PlanarMap(int width, int height, int channels, std::vector<double> data);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int x, int y, int c) { return data_[index(x, y, c)]; }
    double at(int x, int y, int c) const { return data_[index(x, y, c)]; }
    double* pixel(int x, int y) { return data_.data() + index(x, y, 0); }
    const double* pixel(int x, int y) const { return data_.data() + index(x, y, 0); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool same_shape(const PlanarMap& o) const {
        return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
    }
    bool same_dims(const PlanarMap& o) const { return width_ == o.width_ && height_ == o.height_; }

    /// Copy of channels [first, first + count).
    PlanarMap channel_slice(int first, int count) const;

private:
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

struct TimedPose {
    double timestamp = 0.0;
    Se3Pose pose;
};

/// Camera-to-world poses with strictly increasing timestamps.
class Trajectory {
public:
    explicit Trajectory(std::vector<TimedPose> poses);

    std::size_t size() const { return poses_.size(); }
    const TimedPose& operator[](std::size_t i) const { return poses_[i]; }
    auto begin() const { return poses_.begin(); }
    auto end() const { return poses_.end(); }
    std::span<const TimedPose> poses() const { return poses_; }

    std::vector<Vec3> positions() const;

private:
    std::vector<TimedPose> poses_;
};

}  // namespace smallgs
