#pragma once

#include "smallgs/rasterizer.hpp"
#include "smallgs/types.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace smallgs {

struct LiftConfig {
    int pixel_stride = 2;
    double mask_threshold = 0.5;
    double init_opacity = 0.5;
    int scale_knn = 3;

    void validate() const;
};

struct LiftedPoint {
    Vec3 point = Vec3::Zero();
    std::vector<double> payload;
};

/// Unprojects every pixel_stride-th pixel whose mask passes the threshold
/// and whose depth is positive into the camera frame, carrying the payload
/// found at the same pixel.
std::vector<LiftedPoint> lift_depth(const PlanarMap& depth, const PlanarMap& mask,
                                    const CameraIntrinsics& k, const PlanarMap& payload_source,
                                    const LiftConfig& cfg);

/// One isotropic Gaussian per point, sized by the mean distance to its
/// scale_knn nearest neighbours.
GaussianScene init_gaussians(std::span<const LiftedPoint> points, const LiftConfig& cfg);

/// Mean distance from each point to its k nearest neighbours (k-d tree).
std::vector<double> mean_knn_distance(std::span<const Vec3> points, int k);

/// N x (3 + k) float tensor: xyz followed by the payload.
std::vector<LiftedPoint> load_pointcloud(const std::filesystem::path& path);
void save_pointcloud(const std::filesystem::path& path, std::span<const LiftedPoint> points);

struct FitConfig {
    int iters = 300;
    double lr = 0.01;
    double mask_threshold = 0.5;
    RasterConfig raster;
};

struct FitReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<double> losses;
    /// False if any 50-iteration span failed to shrink the loss by 0.1%.
    bool steady_decrease = true;
};

/// Optimizes all Gaussian parameters against `target` rendered from the
/// identity view (masked MSE, Adam) and returns the frozen result.
GaussianScene fit_canonical(GaussianScene scene, const PlanarMap& target, const PlanarMap& mask,
                            const CameraIntrinsics& k, const FitConfig& cfg,
                            FitReport* report = nullptr);

/// Replaces every payload with the bilinear sample of `source` at the
/// Gaussian's projection under the identity view. The scene must not be
/// frozen and `source` fixes the new payload dimension.
GaussianScene reseed_payloads(const GaussianScene& scene, const PlanarMap& source,
                              const CameraIntrinsics& k);

struct PcaResult {
    std::vector<PlanarMap> maps;
    Eigen::MatrixXd basis;             // f x C, rows by descending variance
    Eigen::VectorXd mean;              // C
    Eigen::VectorXd explained_variance;  // f
    /// Components with non-zero variance; the rest are zero-filled.
    int rank = 0;
    bool rank_deficient = false;
};

/// Streaming covariance of C-channel pixels pooled across maps.
class PcaAccumulator {
public:
    explicit PcaAccumulator(int channels);
    void add(const PlanarMap& map);
    /// Top-f basis; maps in the result are left empty.
    PcaResult finish(int f) const;
    static PlanarMap project(const PcaResult& pca, const PlanarMap& map);

private:
    int channels_;
    long long count_ = 0;
    Eigen::VectorXd shift_;  // first sample, for numerically stable sums
    Eigen::VectorXd sum_;
    Eigen::MatrixXd outer_;
};

/// Projects pooled pixels onto the top-f principal directions, each output
/// channel normalized to zero mean and unit variance over the pool.
PcaResult pca_select_channels(std::span<const PlanarMap> features, int f);

}  // namespace smallgs
