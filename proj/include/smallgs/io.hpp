#pragma once

#include "smallgs/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace smallgs {

enum class DType { kFloat32, kFloat64, kUInt8 };

std::size_t dtype_size(DType t);

/// In-memory NPY array: little-endian, C-order payload bytes.
struct Tensor {
    DType dtype = DType::kFloat32;
    std::vector<std::size_t> shape;
    std::vector<std::uint8_t> bytes;

    std::size_t element_count() const;
    std::vector<double> to_doubles() const;
    static Tensor from_doubles(std::vector<std::size_t> shape, std::span<const double> values,
                               DType dtype = DType::kFloat32);
};

struct TensorHeader {
    DType dtype = DType::kFloat32;
    std::vector<std::size_t> shape;
};

/// NPY 1.0 only; float32, float64 and uint8, little-endian, C order.
Tensor read_tensor(const std::filesystem::path& path);
TensorHeader read_tensor_header(const std::filesystem::path& path);
void write_tensor(const std::filesystem::path& path, const Tensor& tensor);

/// H x W arrays load as one channel; H x W x C as C channels.
PlanarMap tensor_to_map(const Tensor& t);
Tensor map_to_tensor(const PlanarMap& map, DType dtype = DType::kFloat32, bool squeeze_single = false);
PlanarMap read_planar_map(const std::filesystem::path& path);
void write_planar_map(const std::filesystem::path& path, const PlanarMap& map,
                      DType dtype = DType::kFloat32, bool squeeze_single = false);

/// "timestamp tx ty tz qx qy qz qw" per line; '#' lines are comments.
Trajectory read_tum(const std::filesystem::path& path);
Trajectory parse_tum(const std::string& text);
void write_tum(const std::filesystem::path& path, const Trajectory& trajectory);
std::string format_tum(const Trajectory& trajectory);
/// Parses one TUM pose line, e.g. for the render subcommand.
TimedPose parse_tum_line(const std::string& line);

/// Per-frame dataset directory:
///   rgb/%06d.npy depth/%06d.npy mask/%06d.npy [feat/%06d.npy] [pointcloud/%06d.npy]
///   intrinsics.json timestamps.txt
class Dataset {
public:
    /// Validates layout and tensor shapes without loading pixel data.
    static Dataset open(const std::filesystem::path& root);

    const std::filesystem::path& root() const { return root_; }
    int frame_count() const { return static_cast<int>(timestamps_.size()); }
    const CameraIntrinsics& intrinsics() const { return intrinsics_; }
    const std::vector<double>& timestamps() const { return timestamps_; }
    bool has_features() const { return feature_channels_ > 0; }
    int feature_channels() const { return feature_channels_; }
    bool has_pointclouds() const { return has_pointclouds_; }

    PlanarMap rgb(int frame) const;
    PlanarMap depth(int frame) const;
    PlanarMap mask(int frame) const;
    PlanarMap features(int frame) const;
    std::filesystem::path pointcloud_path(int frame) const;

    static std::filesystem::path frame_path(const std::filesystem::path& root, const std::string& dir,
                                            int frame);

private:
    std::filesystem::path root_;
    CameraIntrinsics intrinsics_;
    std::vector<double> timestamps_;
    int feature_channels_ = 0;
    bool has_pointclouds_ = false;

    void check_frame(int frame) const;
};

void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& k);
CameraIntrinsics read_intrinsics(const std::filesystem::path& path);
void write_timestamps(const std::filesystem::path& path, const std::vector<double>& timestamps);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace smallgs
