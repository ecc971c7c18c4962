#include "smallgs/types.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace smallgs;

namespace {

Vec3 via_homogeneous(const Se3Pose& p, const Vec3& x) {
    const Eigen::Vector4d h = p.matrix() * Eigen::Vector4d(x.x(), x.y(), x.z(), 1.0);
    return h.head<3>();
}

}  // namespace

TEST(Se3Pose, ComposeIdentityAndInverse) {
    std::mt19937_64 rng(1);
    const Se3Pose p = tu::random_pose(rng, 2.0, 3.0);
    const Se3Pose a = compose(Se3Pose::identity(), p);
    EXPECT_LT((a.matrix() - p.matrix()).norm(), 1e-12);
    const Se3Pose e = compose(p, inverse(p));
    EXPECT_LT(e.rotation_angle(), 1e-9);
    EXPECT_LT(e.translation().norm(), 1e-9);
}

TEST(Se3Pose, ComposeMatchesHomogeneousOracle) {
    const Se3Pose rz90t(Quat(Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitZ())), Vec3(1, 0, 0));
    const Se3Pose rz90(Quat(Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitZ())), Vec3::Zero());
    const Vec3 got = apply(compose(rz90t, rz90), Vec3(1, 0, 0));
    const Eigen::Vector4d oracle = rz90t.matrix() * rz90.matrix() * Eigen::Vector4d(1, 0, 0, 1);
    EXPECT_LT((got - oracle.head<3>()).norm(), 1e-12);
    // Rz90 maps (1,0,0) to (0,1,0); the second Rz90 and +x shift land on the origin.
    EXPECT_LT((got - Vec3(0, 0, 0)).norm(), 1e-12);
}

TEST(Se3Pose, Apply) {
    EXPECT_EQ(apply(Se3Pose::identity(), Vec3(1, 2, 3)), Vec3(1, 2, 3));
    EXPECT_EQ(apply(Se3Pose(Quat::Identity(), Vec3(0, 0, 5)), Vec3::Zero()), Vec3(0, 0, 5));
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n;
    for (int i = 0; i < 100; ++i) {
        const Se3Pose p = tu::random_pose(rng, 3.0, 10.0);
        const Vec3 x(n(rng), n(rng), n(rng));
        EXPECT_LT((apply(p, x) - via_homogeneous(p, x)).norm(), 1e-12);
    }
}

TEST(Se3Pose, Canonicalization) {
    const Se3Pose p(Quat(-0.5, 0.5, 0.5, 0.5), Vec3::Zero());
    EXPECT_GE(p.rotation().w(), 0.0);
    EXPECT_NEAR(p.rotation().norm(), 1.0, 1e-12);
    const Se3Pose q(Quat(2.0, 0.0, 0.0, 0.0), Vec3::Zero());
    EXPECT_NEAR(q.rotation().w(), 1.0, 1e-15);
}

TEST(Se3Pose, InverseTranslation) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 20; ++i) {
        const Se3Pose p = tu::random_pose(rng, 3.0, 5.0);
        const Vec3 expect = -(p.rotation_matrix().transpose() * p.translation());
        EXPECT_LT((p.inverse().translation() - expect).norm(), 1e-12);
    }
}

TEST(Se3Pose, ComposeIsAssociative) {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 100; ++i) {
        const Se3Pose a = tu::random_pose(rng, 3.0, 5.0);
        const Se3Pose b = tu::random_pose(rng, 3.0, 5.0);
        const Se3Pose c = tu::random_pose(rng, 3.0, 5.0);
        const Se3Pose l = (a * b) * c, r = a * (b * c);
        EXPECT_LT((l.inverse() * r).rotation_angle(), 1e-9);
        EXPECT_LT((l.translation() - r.translation()).norm(), 1e-9);
    }
}

TEST(Se3Pose, ExpLogRoundTrip) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 0.5);
    for (int i = 0; i < 50; ++i) {
        Vec6 xi;
        for (int j = 0; j < 6; ++j) xi[j] = n(rng);
        EXPECT_LT((Se3Pose::exp(xi).log() - xi).norm(), 1e-9);
    }
    Vec6 tiny = Vec6::Constant(1e-10);
    EXPECT_LT((Se3Pose::exp(tiny).log() - tiny).norm(), 1e-15);
}

TEST(QuatToMatrix, KnownRotations) {
    EXPECT_LT((quat_to_matrix(Quat::Identity()) - Mat3::Identity()).norm(), 1e-15);
    const double h = std::numbers::pi / 4;
    const Mat3 r = quat_to_matrix(Quat(std::cos(h), std::sin(h), 0, 0));
    const Mat3 oracle = Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitX()).toRotationMatrix();
    EXPECT_LT((r - oracle).norm(), 1e-12);
    EXPECT_THROW(quat_to_matrix(Quat(0, 0, 0, 0)), Error);
}

TEST(QuatToMatrix, OrthonormalAndRoundTrip) {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 100; ++i) {
        const Quat q = tu::random_quat(rng);
        const Mat3 r = quat_to_matrix(q);
        EXPECT_LT((r * r.transpose() - Mat3::Identity()).norm(), 1e-9);
        EXPECT_NEAR(r.determinant(), 1.0, 1e-9);
        const Quat back = matrix_to_quat(r);
        const double err = std::min((back.coeffs() - q.coeffs()).norm(), (back.coeffs() + q.coeffs()).norm());
        EXPECT_LT(err, 1e-9);
    }
}

TEST(CameraIntrinsics, Validation) {
    EXPECT_NO_THROW(CameraIntrinsics(100, 100, 160, 120, 320, 240));
    EXPECT_THROW(CameraIntrinsics(0, 100, 160, 120, 320, 240), Error);
    EXPECT_THROW(CameraIntrinsics(100, 100, 320, 120, 320, 240), Error);
    EXPECT_THROW(CameraIntrinsics(100, 100, 10, -1, 320, 240), Error);
}

TEST(GaussianScene, FrozenIsReadOnly) {
    GaussianScene scene(2);
    Gaussian3D g;
    g.payload = {1.0, 2.0};
    scene.add(g);
    g.payload = {1.0};
    EXPECT_THROW(scene.add(g), Error);
    scene.freeze();
    EXPECT_THROW(scene.mutable_gaussians(), Error);
    g.payload = {0.0, 0.0};
    EXPECT_THROW(scene.add(g), Error);
}

TEST(Gaussian3D, CovarianceIsSymmetricPsd) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n;
    for (int i = 0; i < 50; ++i) {
        Gaussian3D g;
        g.rot = tu::random_quat(rng);
        g.log_scale = Vec3(n(rng), n(rng), n(rng));
        const Mat3 c = g.covariance();
        EXPECT_LT((c - c.transpose()).cwiseAbs().maxCoeff(), 1e-9);
        Eigen::SelfAdjointEigenSolver<Mat3> es(c);
        EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
    }
}

TEST(PlanarMap, RejectsBadData) {
    EXPECT_THROW(PlanarMap(2, 2, 1, std::vector<double>(3)), Error);
    EXPECT_THROW(PlanarMap(1, 1, 1, std::vector<double>{std::nan("")}), Error);
    PlanarMap m(3, 2, 2);
    m.at(2, 1, 1) = 5.0;
    EXPECT_EQ(m.data()[(1 * 3 + 2) * 2 + 1], 5.0);
}

TEST(Trajectory, RequiresIncreasingTimestamps) {
    EXPECT_THROW(Trajectory({}), Error);
    EXPECT_THROW(Trajectory({{1.0, {}}, {1.0, {}}}), Error);
    EXPECT_NO_THROW(Trajectory({{0.0, {}}, {0.5, {}}}));
}
