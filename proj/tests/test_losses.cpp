#include "smallgs/losses.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace smallgs;

namespace {

PlanarMap random_map(std::mt19937_64& rng, int w, int h, int c) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PlanarMap m(w, h, c);
    for (auto& v : m.data()) v = u(rng);
    return m;
}

// Direct 11x11 window sum with the 2D Gaussian, no separable filtering.
double ssim_oracle(const PlanarMap& a, const PlanarMap& b) {
    double wsum = 0.0;
    double kern[11][11];
    for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
            kern[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
            wsum += kern[i][j];
        }
    }
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    int count = 0;
    for (int c = 0; c < a.channels(); ++c) {
        for (int y = 0; y + 11 <= a.height(); ++y) {
            for (int x = 0; x + 11 <= a.width(); ++x) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int i = 0; i < 11; ++i) {
                    for (int j = 0; j < 11; ++j) {
                        const double k = kern[i][j] / wsum;
                        const double va = a.at(x + j, y + i, c), vb = b.at(x + j, y + i, c);
                        ma += k * va;
                        mb += k * vb;
                        saa += k * va * va;
                        sbb += k * vb * vb;
                        sab += k * va * vb;
                    }
                }
                const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
                total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
        }
    }
    return total / count;
}

}  // namespace

TEST(MaskedMse, MatchesHandSum) {
    std::mt19937_64 rng(1);
    const PlanarMap a = random_map(rng, 6, 5, 3), b = random_map(rng, 6, 5, 3);
    PlanarMap mask(6, 5, 1, 1.0);
    mask.at(0, 0, 0) = 0.0;
    mask.at(3, 2, 0) = 0.2;
    mask.at(5, 4, 0) = 0.5;
    double sum = 0.0;
    int kept = 0;
    for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 6; ++x) {
            if (mask.at(x, y, 0) < 0.5) continue;
            ++kept;
            for (int c = 0; c < 3; ++c) sum += std::pow(a.at(x, y, c) - b.at(x, y, c), 2);
        }
    }
    PlanarMap g;
    const double loss = masked_mse(a, b, mask, 0.5, &g);
    EXPECT_NEAR(loss, sum / (3.0 * kept), 1e-15);
    EXPECT_EQ(g.at(0, 0, 1), 0.0);
    EXPECT_NEAR(g.at(1, 1, 2), 2.0 * (a.at(1, 1, 2) - b.at(1, 1, 2)) / (3.0 * kept), 1e-15);
}

TEST(MaskedMse, Errors) {
    const PlanarMap a(4, 4, 3), b(4, 3, 3), m0(4, 4, 1, 0.0), m3(4, 4, 3, 1.0);
    EXPECT_THROW(masked_mse(a, b, PlanarMap(4, 4, 1, 1.0)), Error);
    EXPECT_THROW(masked_mse(a, a, m3), Error);
    try {
        masked_mse(a, a, m0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kDegenerate);
    }
}

TEST(Ssim, IdenticalImagesScoreOne) {
    std::mt19937_64 rng(2);
    const PlanarMap a = random_map(rng, 16, 14, 3);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, ConstantImagesClosedForm) {
    const double p = 0.3, q = 0.7, c1 = 1e-4;
    const PlanarMap a(12, 12, 1, p), b(12, 12, 1, q);
    EXPECT_NEAR(ssim(a, b), (2 * p * q + c1) / (p * p + q * q + c1), 1e-12);
}

TEST(Ssim, InvertedCheckerboardIsNegative) {
    PlanarMap a(16, 16, 1), b(16, 16, 1);
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
            a.at(x, y, 0) = (x + y) % 2;
            b.at(x, y, 0) = 1 - (x + y) % 2;
        }
    }
    EXPECT_LT(ssim(a, b), 0.0);
}

TEST(Ssim, MatchesDirectWindowOracle) {
    std::mt19937_64 rng(3);
    const PlanarMap a = random_map(rng, 15, 13, 2), b = random_map(rng, 15, 13, 2);
    EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b), 1e-12);
}

TEST(Ssim, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(4);
    PlanarMap a = random_map(rng, 14, 12, 2);
    const PlanarMap b = random_map(rng, 14, 12, 2);
    PlanarMap g;
    ssim(a, b, &g);
    const double h = 1e-6;
    for (std::size_t i = 0; i < a.size(); i += 7) {
        const double keep = a.data()[i];
        a.data()[i] = keep + h;
        const double up = ssim(a, b);
        a.data()[i] = keep - h;
        const double down = ssim(a, b);
        a.data()[i] = keep;
        EXPECT_NEAR(g.data()[i], (up - down) / (2 * h), 1e-7) << "element " << i;
    }
}

TEST(Ssim, RejectsSmallImages) {
    EXPECT_THROW(ssim(PlanarMap(10, 20, 1), PlanarMap(10, 20, 1)), Error);
}

TEST(Smoothness, Examples) {
    const std::vector<Vec3> line = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    EXPECT_EQ(smoothness_loss(line, 1.0), 0.0);
    const std::vector<Vec3> stop = {{0, 0, 0}, {1, 0, 0}, {1, 0, 0}};
    EXPECT_DOUBLE_EQ(smoothness_loss(stop, 1.0), 1.0);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<Vec3> any;
    for (int i = 0; i < 6; ++i) any.emplace_back(u(rng), u(rng), u(rng));
    EXPECT_EQ(smoothness_loss(any, 0.0), 0.0);
    EXPECT_THROW(smoothness_loss(std::vector<Vec3>(2), 1.0), Error);
}

TEST(Smoothness, ZeroOnConstantVelocity) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 20; ++trial) {
        // Integer-valued steps keep every second difference exactly zero.
        const Vec3 start(std::round(10 * u(rng)), std::round(10 * u(rng)), std::round(10 * u(rng)));
        const Vec3 step(std::round(10 * u(rng)), std::round(10 * u(rng)), std::round(10 * u(rng)));
        std::vector<Vec3> ps;
        for (int i = 0; i < 15; ++i) ps.push_back(start + i * step);
        EXPECT_EQ(smoothness_loss(ps, 1.0), 0.0);
    }
}

TEST(Smoothness, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<Vec3> ps;
    for (int i = 0; i < 7; ++i) ps.emplace_back(u(rng), u(rng), u(rng));
    std::vector<Vec3> g;
    smoothness_loss(ps, 0.7, &g);
    const double h = 1e-6;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        for (int a = 0; a < 3; ++a) {
            const double keep = ps[i][a];
            ps[i][a] = keep + h;
            const double up = smoothness_loss(ps, 0.7);
            ps[i][a] = keep - h;
            const double down = smoothness_loss(ps, 0.7);
            ps[i][a] = keep;
            EXPECT_NEAR(g[i][a], (up - down) / (2 * h), 1e-6);
        }
    }
}
