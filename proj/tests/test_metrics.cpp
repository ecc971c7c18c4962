#include "smallgs/metrics.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace smallgs;

using namespace smallgs::tu;

TEST(Umeyama, IdentityOnEqualSets) {
    const std::vector<Vec3> p = {{0, 0, 0}, {1, 0, 0}, {0, 2, 0}, {0, 0, 3}};
    const AlignmentResult a = umeyama_align(p, p, true);
    EXPECT_NEAR(a.scale, 1.0, 1e-12);
    EXPECT_LT(a.translation.norm(), 1e-12);
    EXPECT_LT(a.rotation.angularDistance(Quat::Identity()), 1e-12);
}

TEST(Umeyama, HandExample) {
    const Mat3 rz = Eigen::AngleAxisd(std::numbers::pi / 6, Vec3::UnitZ()).toRotationMatrix();
    const std::vector<Vec3> est = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}};
    std::vector<Vec3> gt;
    for (const auto& e : est) gt.push_back(2.0 * rz * e + Vec3(1, 2, 3));
    const AlignmentResult a = umeyama_align(est, gt, true);
    EXPECT_NEAR(a.scale, 2.0, 1e-9);
    EXPECT_LT((a.rotation.toRotationMatrix() - rz).norm(), 1e-9);
    EXPECT_LT((a.translation - Vec3(1, 2, 3)).norm(), 1e-9);

    std::vector<Vec3> doubled;
    for (const auto& e : est) doubled.push_back(2.0 * e);
    const AlignmentResult rigid = umeyama_align(est, doubled, false);
    double res = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) res += (rigid.apply(est[i]) - doubled[i]).norm();
    EXPECT_GT(res, 0.1);
    EXPECT_EQ(rigid.scale, 1.0);
}

TEST(Umeyama, RecoversRandomTransforms) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-5, 5), su(0.2, 5.0);
    for (int trial = 0; trial < 100; ++trial) {
        const bool with_scale = trial % 2 == 0;
        const Quat q = tu::random_quat(rng);
        const Vec3 t(u(rng), u(rng), u(rng));
        const double s = with_scale ? su(rng) : 1.0;
        std::vector<Vec3> est, gt;
        for (int i = 0; i < 12; ++i) {
            est.emplace_back(u(rng), u(rng), u(rng));
            gt.push_back(s * (q * est.back()) + t);
        }
        const AlignmentResult a = umeyama_align(est, gt, with_scale);
        EXPECT_NEAR(a.scale, s, 1e-9);
        EXPECT_LT(a.rotation.angularDistance(q), 1e-9);
        EXPECT_LT((a.translation - t).norm(), 1e-9);
    }
}

TEST(Umeyama, Degenerate) {
    const std::vector<Vec3> same(4, Vec3(1, 1, 1));
    const std::vector<Vec3> spread = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    EXPECT_THROW(umeyama_align(same, spread, true), Error);
    EXPECT_THROW(umeyama_align(std::vector<Vec3>(2), std::vector<Vec3>(2), false), Error);
    // Rigid alignment onto a single point is a pure translation.
    const AlignmentResult r = umeyama_align(spread, same, false);
    EXPECT_LT(r.rotation.angularDistance(Quat::Identity()), 1e-15);
    EXPECT_LT((r.translation - Vec3(0.75, 0.75, 0.75)).norm(), 1e-15);
}

TEST(Ate, ZeroCases) {
    std::mt19937_64 rng(2);
    const Trajectory gt = random_trajectory(rng, 20);
    EXPECT_LT(ate(gt, gt), 1e-12);
    const Se3Pose g = tu::random_pose(rng, 3.0, 4.0);
    EXPECT_LT(ate(transformed(gt, g), gt, false), 1e-9);
    EXPECT_LT(ate(transformed(gt, g, 2.5), gt, true), 1e-9);
}

TEST(Ate, MatchesNumericalOracle) {
    const std::vector<Vec3> gt = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0.5}};
    std::vector<Vec3> est = gt;
    est[2] += Vec3(0.1, 0, 0);
    for (bool with_scale : {true, false}) {
        const double oracle = rmse_by_search(est, gt, with_scale);
        EXPECT_GT(oracle, 0.0);
        EXPECT_NEAR(ate(from_positions(est), from_positions(gt), with_scale), oracle, 1e-9);
    }
}

TEST(Ate, InvariantUnderRandomTransforms) {
    std::mt19937_64 rng(3);
    const Trajectory gt = random_trajectory(rng, 25);
    std::vector<Vec3> noisy;
    std::normal_distribution<double> n(0.0, 0.05);
    for (const auto& p : gt) noisy.push_back(p.pose.translation() + Vec3(n(rng), n(rng), n(rng)));
    const Trajectory est = from_positions(noisy);
    std::vector<TimedPose> relabeled;
    for (std::size_t i = 0; i < est.size(); ++i) relabeled.push_back({gt[i].timestamp, est[i].pose});
    const Trajectory e(relabeled);
    const double base_rigid = ate(e, gt, false), base_sim = ate(e, gt, true);
    for (int trial = 0; trial < 10; ++trial) {
        const Se3Pose g = tu::random_pose(rng, 3.0, 10.0);
        EXPECT_NEAR(ate(transformed(e, g), gt, false), base_rigid, 1e-9);
        EXPECT_NEAR(ate(transformed(e, g, 0.3 + trial), gt, true), base_sim, 1e-9);
    }
}

TEST(Rpe, ZeroAndRigidInvariance) {
    std::mt19937_64 rng(4);
    const Trajectory gt = random_trajectory(rng, 15);
    const RpeResult z = rpe(gt, gt);
    EXPECT_LT(z.rot_deg, 1e-12);
    EXPECT_LT(z.trans, 1e-12);
    const RpeResult r = rpe(transformed(gt, tu::random_pose(rng, 3.0, 5.0)), gt, 2);
    EXPECT_LT(r.rot_deg, 1e-9);
    EXPECT_LT(r.trans, 1e-9);
}

TEST(Rpe, OneDegreeYaw) {
    const Quat yaw1(Eigen::AngleAxisd(std::numbers::pi / 180.0, Vec3::UnitZ()));
    const Trajectory gt = from_positions({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}});
    // Same first step; the second step carries an extra 1 degree yaw.
    std::vector<TimedPose> ps = {{0.0, Se3Pose()}, {1 / 30.0, Se3Pose(Quat::Identity(), Vec3(1, 0, 0))},
                                 {2 / 30.0, Se3Pose(yaw1, Vec3(2, 0, 0))}};
    const RpeResult r = rpe(Trajectory(ps), gt);
    // Errors per pair are (0, 1 degree); RMSE over the two pairs.
    EXPECT_NEAR(r.rot_deg, std::sqrt(0.5), 1e-9);
    const RpeResult second = rpe(Trajectory({ps[1], ps[2]}), Trajectory({gt[1], gt[2]}));
    EXPECT_NEAR(second.rot_deg, 1.0, 1e-9);
    EXPECT_NEAR(second.trans, 0.0, 1e-12);
}

TEST(DeltaV, HandExamples) {
    const std::vector<Vec3> zeros(6, Vec3::Zero());
    std::vector<Vec3> alt;
    for (int i = 0; i < 6; ++i) alt.emplace_back(i % 2 == 0 ? 0.01 : -0.01, 0, 0);
    EXPECT_NEAR(delta_v(from_positions(alt), from_positions(zeros), false), 0.02, 1e-12);

    std::mt19937_64 rng(5);
    const Trajectory gt = random_trajectory(rng, 10);
    EXPECT_LT(delta_v(gt, gt), 1e-12);
    EXPECT_LT(delta_v(transformed(gt, Se3Pose(Quat::Identity(), Vec3(3, -1, 2))), gt, false), 1e-12);
}

TEST(DeltaV, MatchesDirectSum) {
    std::mt19937_64 rng(6);
    const Trajectory gt = random_trajectory(rng, 12);
    std::normal_distribution<double> n(0.0, 0.02);
    std::vector<TimedPose> ps;
    for (const auto& p : gt) ps.push_back({p.timestamp, Se3Pose(p.pose.rotation(), p.pose.translation() + Vec3(n(rng), n(rng), n(rng)))});
    const Trajectory est(ps);
    std::vector<Vec3> e, g;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        e.push_back(est[i].pose.translation());
        g.push_back(gt[i].pose.translation());
    }
    const AlignmentResult a = umeyama_align(e, g, true);
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < e.size(); ++i) {
        sum += ((a.apply(e[i + 1]) - a.apply(e[i])) - (g[i + 1] - g[i])).norm();
    }
    EXPECT_NEAR(delta_v(est, gt), sum / (e.size() - 1), 1e-12);
}

TEST(Associate, NearestWithinTolerance) {
    std::vector<TimedPose> a, b;
    for (int i = 0; i < 5; ++i) a.push_back({i * 0.1, Se3Pose()});
    for (double t : {0.005, 0.1, 0.25, 0.31, 0.399}) b.push_back({t, Se3Pose()});
    const auto pairs = associate(Trajectory(a), Trajectory(b));
    const std::vector<std::pair<std::size_t, std::size_t>> want = {{0, 0}, {1, 1}, {3, 3}, {4, 4}};
    EXPECT_EQ(pairs, want);
    EXPECT_THROW(ate(Trajectory(a), Trajectory({b[2]})), Error);
}

TEST(Report, JsonAndTable) {
    std::mt19937_64 rng(7);
    const Trajectory gt = random_trajectory(rng, 8);
    const MetricsReport r = evaluate_trajectories(gt, gt);
    EXPECT_EQ(r.n_frames, 8);
    EXPECT_NE(report_to_json(r).find("\"ate_rmse\""), std::string::npos);
    EXPECT_NE(report_to_table(r).find("ATE"), std::string::npos);
}
