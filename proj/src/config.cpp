#include "smallgs/config.hpp"

#include <json.hpp>

#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace smallgs {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& path, const std::string& message) {
    throw Error(ErrorCode::kConfig, path + ": " + message);
}

double get_number(const json& j, const std::string& path) {
    if (!j.is_number()) config_error(path, "expected a number");
    return j.get<double>();
}

int get_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) config_error(path, "expected an integer");
    return j.get<int>();
}

std::string get_string(const json& j, const std::string& path) {
    if (!j.is_string()) config_error(path, "expected a string");
    return j.get<std::string>();
}

template <typename Enum>
Enum get_enum(const json& j, const std::string& path, std::initializer_list<std::pair<const char*, Enum>> names) {
    const std::string s = get_string(j, path);
    std::string allowed;
    for (const auto& [name, value] : names) {
        if (s == name) return value;
        allowed += allowed.empty() ? "" : ", ";
        allowed += name;
    }
    config_error(path, "unknown value '" + s + "' (expected one of " + allowed + ")");
}

void parse_raster(const json& j, RasterConfig& r) {
    if (!j.is_object()) config_error("raster", "expected an object");
    for (const auto& [key, value] : j.items()) {
        const std::string path = "raster." + key;
        if (key == "alpha_max") r.alpha_max = get_number(value, path);
        else if (key == "min_transmittance") r.min_transmittance = get_number(value, path);
        else if (key == "lowpass") r.lowpass = get_number(value, path);
        else if (key == "near_plane") r.near_plane = get_number(value, path);
        else if (key == "alpha_min") r.alpha_min = get_number(value, path);
        else if (key == "tile_size") r.tile_size = get_int(value, path);
        else if (key == "threads") r.threads = get_int(value, path);
        else if (key == "background") {
            if (!value.is_array()) config_error(path, "expected an array of numbers");
            r.background.clear();
            for (std::size_t i = 0; i < value.size(); ++i) {
                r.background.push_back(get_number(value[i], path + "[" + std::to_string(i) + "]"));
            }
        } else {
            config_error(path, "unknown key");
        }
    }
}

void validate_raster(const RasterConfig& r) {
    if (!(r.alpha_max > 0.0 && r.alpha_max < 1.0)) config_error("raster.alpha_max", "must lie in (0, 1)");
    if (!(r.min_transmittance >= 0.0 && r.min_transmittance < 1.0)) {
        config_error("raster.min_transmittance", "must lie in [0, 1)");
    }
    if (!(r.lowpass >= 0.0)) config_error("raster.lowpass", "must be >= 0");
    if (!(r.near_plane > 0.0)) config_error("raster.near_plane", "must be > 0");
    if (!(r.alpha_min > 0.0 && r.alpha_min < r.alpha_max)) config_error("raster.alpha_min", "must lie in (0, alpha_max)");
    if (r.tile_size < 1) config_error("raster.tile_size", "must be >= 1");
    if (r.threads < 0) config_error("raster.threads", "must be >= 0");
}

}  // namespace

void RunConfig::validate() const {
    window.validate();
    lift.validate();
    validate_raster(window.raster);
    if (feature_channels < 1) config_error("f", "must be >= 1");
    if (fit.iters < 0) config_error("fit_iters", "must be >= 0");
    if (!(fit.lr > 0.0)) config_error("fit_lr", "must be > 0");
}

RunConfig parse_config(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::kConfig, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) config_error("$", "expected a JSON object");

    RunConfig cfg;
    std::optional<double> mask_threshold;
    for (const auto& [key, value] : j.items()) {
        if (key == "window_size") cfg.window.window_size = get_int(value, key);
        else if (key == "iters") cfg.window.iters = get_int(value, key);
        else if (key == "lr_rot") cfg.window.lr_rot = get_number(value, key);
        else if (key == "lr_trans") cfg.window.lr_trans = get_number(value, key);
        else if (key == "lr_final_fraction") cfg.window.lr_final_fraction = get_number(value, key);
        else if (key == "lambda_s") cfg.window.lambda_s = get_number(value, key);
        else if (key == "lambda_c_max") cfg.window.lambda_c_max = get_number(value, key);
        else if (key == "loss_space") {
            cfg.window.loss_space = get_enum<LossSpace>(value, key, {{"rgb", LossSpace::kRgb}, {"feature", LossSpace::kFeature}});
        } else if (key == "ssim_mode") {
            cfg.window.ssim_mode = get_enum<SsimMode>(
                value, key, {{"channel_average", SsimMode::kChannelAverage}, {"first_three", SsimMode::kFirstThree}});
        } else if (key == "f") cfg.feature_channels = get_int(value, key);
        else if (key == "mask_threshold") mask_threshold = get_number(value, key);
        else if (key == "pixel_stride") cfg.lift.pixel_stride = get_int(value, key);
        else if (key == "init_opacity") cfg.lift.init_opacity = get_number(value, key);
        else if (key == "scale_knn") cfg.lift.scale_knn = get_int(value, key);
        else if (key == "fit_iters") cfg.fit.iters = get_int(value, key);
        else if (key == "fit_lr") cfg.fit.lr = get_number(value, key);
        else if (key == "fit_space") {
            cfg.fit_space = get_enum<FitSpace>(value, key, {{"pose_space", FitSpace::kPoseSpace}, {"rgb", FitSpace::kRgb}});
        } else if (key == "init_source") {
            cfg.init_source =
                get_enum<InitSource>(value, key, {{"depth", InitSource::kDepth}, {"pointcloud", InitSource::kPointCloud}});
        } else if (key == "raster") parse_raster(value, cfg.window.raster);
        else config_error(key, "unknown key");
    }
    if (mask_threshold) {
        cfg.window.mask_threshold = *mask_threshold;
        cfg.lift.mask_threshold = *mask_threshold;
        cfg.fit.mask_threshold = *mask_threshold;
    }
    cfg.fit.raster = cfg.window.raster;
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

std::string config_to_json(const RunConfig& cfg) {
    const auto& w = cfg.window;
    const auto& r = w.raster;
    json raster = {{"alpha_max", r.alpha_max},   {"min_transmittance", r.min_transmittance},
                   {"lowpass", r.lowpass},       {"near_plane", r.near_plane},
                   {"alpha_min", r.alpha_min},   {"tile_size", r.tile_size},
                   {"threads", r.threads}};
    if (!r.background.empty()) raster["background"] = r.background;
    json j = {
        {"window_size", w.window_size},
        {"iters", w.iters},
        {"lr_rot", w.lr_rot},
        {"lr_trans", w.lr_trans},
        {"lr_final_fraction", w.lr_final_fraction},
        {"lambda_s", w.lambda_s},
        {"lambda_c_max", w.lambda_c_max},
        {"loss_space", w.loss_space == LossSpace::kRgb ? "rgb" : "feature"},
        {"ssim_mode", w.ssim_mode == SsimMode::kChannelAverage ? "channel_average" : "first_three"},
        {"f", cfg.feature_channels},
        {"mask_threshold", w.mask_threshold},
        {"pixel_stride", cfg.lift.pixel_stride},
        {"init_opacity", cfg.lift.init_opacity},
        {"scale_knn", cfg.lift.scale_knn},
        {"fit_iters", cfg.fit.iters},
        {"fit_lr", cfg.fit.lr},
        {"fit_space", cfg.fit_space == FitSpace::kPoseSpace ? "pose_space" : "rgb"},
        {"init_source", cfg.init_source == InitSource::kDepth ? "depth" : "pointcloud"},
        {"raster", raster},
    };
    return j.dump(2);
}

}  // namespace smallgs
