#pragma once

#include "smallgs/pose_optimizer.hpp"
#include "smallgs/scene_init.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace smallgs {

enum class InitSource { kDepth, kPointCloud };
/// kPoseSpace fits the canonical scene in the same space the poses are
/// optimized in; kRgb fits colors and then re-seeds payloads from the
/// reduced feature map.
enum class FitSpace { kPoseSpace, kRgb };

struct RunConfig {
    WindowConfig window;
    LiftConfig lift;
    FitConfig fit;
    int feature_channels = 16;
    InitSource init_source = InitSource::kDepth;
    FitSpace fit_space = FitSpace::kPoseSpace;

    void validate() const;
};

/// Flat JSON object; unknown keys are rejected. Missing keys keep defaults.
RunConfig parse_config(std::string_view json_text);
RunConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const RunConfig& cfg);

}  // namespace smallgs
