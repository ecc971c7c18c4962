#pragma once

#include "smallgs/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

namespace smallgs {

enum class TrajectoryModel { kStatic, kConstantVelocity, kArc, kJitter };

struct SynthConfig {
    int n_gaussians = 400;
    int width = 64;
    int height = 48;
    /// Defaults to fx = fy = 0.9 * width at the image center.
    std::optional<CameraIntrinsics> intrinsics;
    /// 3 renders RGB only; k > 3 also writes k-channel feature maps.
    int payload_dim = 3;
    TrajectoryModel trajectory = TrajectoryModel::kJitter;
    double max_rotation_deg = 0.5;
    /// Per-frame translation cap as a fraction of the mean scene depth.
    double max_translation = 0.005;
    int n_frames = 30;
    std::uint64_t seed = 0;
    double dynamic_fraction = 0.0;
    /// Explicit per-frame step of the constant-velocity model (camera frame).
    std::optional<Vec3> velocity;
    std::optional<Vec3> angular_velocity_deg;
    /// Jitter noise as a fraction of the caps.
    double jitter = 0.2;
    /// Gaussian extent relative to the spacing that tiles the image once.
    double gaussian_size = 0.5;
    double depth_min = 2.0;
    double depth_max = 10.0;
    bool write_pointclouds = false;

    void validate() const;
    CameraIntrinsics camera() const;
};

SynthConfig parse_synth_config(std::string_view json_text);
SynthConfig load_synth_config(const std::filesystem::path& path);

struct SynthScene {
    GaussianScene color{3};
    /// Same geometry with smooth random k-channel payloads (k > 3 only).
    std::optional<GaussianScene> features;
    std::vector<bool> dynamic;
    double mean_depth = 0.0;
};

/// Random Gaussians covering the view of an identity camera, scattered
/// around a smooth depth surface between depth_min and depth_max. The
/// dynamic ones form a compact object in front of the surface.
SynthScene synth_scene(const SynthConfig& cfg, std::mt19937_64& rng);

/// Camera-to-world ground truth, first pose identity, timestamps i / 30.
Trajectory synth_trajectory(const SynthConfig& cfg, double mean_depth, std::mt19937_64& rng);

struct SynthFrame {
    PlanarMap rgb, depth, mask, features;
};

struct SynthData {
    CameraIntrinsics intrinsics;
    SynthScene scene;
    Trajectory groundtruth{{TimedPose{}}};
    std::vector<SynthFrame> frames;
};

/// Deterministic in cfg.seed.
SynthData synthesize(const SynthConfig& cfg);

/// Writes the dataset layout plus groundtruth.txt into out_dir.
SynthData generate(const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace smallgs
