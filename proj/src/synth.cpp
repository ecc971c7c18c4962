#include "smallgs/synth.hpp"

#include "internal.hpp"
#include "smallgs/io.hpp"
#include "smallgs/rasterizer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace smallgs {

namespace fs = std::filesystem;

void SynthConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::kConfig, m); };
    if (n_gaussians < 1) fail("n_gaussians: must be >= 1");
    if (width < 1 || height < 1) fail("width/height: must be >= 1");
    if (payload_dim < 1) fail("payload_dim: must be >= 1");
    if (payload_dim != 3 && payload_dim <= 3) fail("payload_dim: must be 3 (RGB) or greater than 3 (features)");
    if (n_frames < 2) fail("n_frames: must be >= 2");
    if (!(dynamic_fraction >= 0.0 && dynamic_fraction <= 1.0)) fail("dynamic_fraction: must lie in [0, 1]");
    if (!(max_translation >= 0.0 && max_translation <= 1.0)) fail("max_translation: must lie in [0, 1]");
    if (!(max_rotation_deg >= 0.0)) fail("max_rotation_deg: must be >= 0");
    if (!(jitter >= 0.0 && jitter <= 1.0)) fail("jitter: must lie in [0, 1]");
    if (!(gaussian_size > 0.0)) fail("gaussian_size: must be > 0");
    if (!(depth_min > 0.0 && depth_max >= depth_min)) fail("depth_min/depth_max: need 0 < depth_min <= depth_max");
    camera().validate();
}

CameraIntrinsics SynthConfig::camera() const {
    if (intrinsics) return *intrinsics;
    return CameraIntrinsics(0.9 * width, 0.9 * width, 0.5 * (width - 1), 0.5 * (height - 1), width, height);
}

namespace {

Vec3 get_vec3(const nlohmann::json& v, const std::string& key) {
    if (!v.is_array() || v.size() != 3) throw Error(ErrorCode::kConfig, key + ": expected an array of 3 numbers");
    Vec3 out;
    for (int i = 0; i < 3; ++i) {
        if (!v[i].is_number()) throw Error(ErrorCode::kConfig, key + "[" + std::to_string(i) + "]: expected a number");
        out[i] = v[i].get<double>();
    }
    return out;
}

}  // namespace

SynthConfig parse_synth_config(std::string_view json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::kConfig, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::kConfig, "$: expected a JSON object");
    SynthConfig c;
    std::optional<double> fx, fy, cx, cy;
    for (const auto& [key, v] : j.items()) {
        auto num = [&]() {
            if (!v.is_number()) throw Error(ErrorCode::kConfig, key + ": expected a number");
            return v.get<double>();
        };
        auto integer = [&]() {
            if (!v.is_number_integer()) throw Error(ErrorCode::kConfig, key + ": expected an integer");
            return v.get<long long>();
        };
        if (key == "n_gaussians") c.n_gaussians = static_cast<int>(integer());
        else if (key == "width") c.width = static_cast<int>(integer());
        else if (key == "height") c.height = static_cast<int>(integer());
        else if (key == "fx") fx = num();
        else if (key == "fy") fy = num();
        else if (key == "cx") cx = num();
        else if (key == "cy") cy = num();
        else if (key == "payload_dim") c.payload_dim = static_cast<int>(integer());
        else if (key == "trajectory") {
            const std::string s = v.is_string() ? v.get<std::string>() : "";
            if (s == "static") c.trajectory = TrajectoryModel::kStatic;
            else if (s == "constant_velocity") c.trajectory = TrajectoryModel::kConstantVelocity;
            else if (s == "arc") c.trajectory = TrajectoryModel::kArc;
            else if (s == "jitter") c.trajectory = TrajectoryModel::kJitter;
            else {
                throw Error(ErrorCode::kConfig,
                            "trajectory: expected one of static, constant_velocity, arc, jitter");
            }
        } else if (key == "max_rotation_deg") c.max_rotation_deg = num();
        else if (key == "max_translation") c.max_translation = num();
        else if (key == "n_frames") c.n_frames = static_cast<int>(integer());
        else if (key == "seed") {
            if (!v.is_number_unsigned()) throw Error(ErrorCode::kConfig, "seed: expected a non-negative integer");
            c.seed = v.get<std::uint64_t>();
        } else if (key == "dynamic_fraction") c.dynamic_fraction = num();
        else if (key == "velocity") c.velocity = get_vec3(v, key);
        else if (key == "angular_velocity_deg") c.angular_velocity_deg = get_vec3(v, key);
        else if (key == "jitter") c.jitter = num();
        else if (key == "gaussian_size") c.gaussian_size = num();
        else if (key == "depth_min") c.depth_min = num();
        else if (key == "depth_max") c.depth_max = num();
        else if (key == "write_pointclouds") {
            if (!v.is_boolean()) throw Error(ErrorCode::kConfig, key + ": expected a boolean");
            c.write_pointclouds = v.get<bool>();
        } else {
            throw Error(ErrorCode::kConfig, key + ": unknown key");
        }
    }
    if (fx || fy || cx || cy) {
        const CameraIntrinsics d = c.camera();
        c.intrinsics = CameraIntrinsics(fx.value_or(d.fx), fy.value_or(fx.value_or(d.fy)), cx.value_or(d.cx),
                                        cy.value_or(d.cy), c.width, c.height);
    }
    c.validate();
    return c;
}

SynthConfig load_synth_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_synth_config(ss.str());
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

namespace {

Quat random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Quat q(n(rng), n(rng), n(rng), n(rng));
    return q.normalized();
}

Vec3 random_direction(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec3 v(n(rng), n(rng), n(rng));
    return v.normalized();
}

Vec3 uniform_box(std::mt19937_64& rng, double half) {
    std::uniform_real_distribution<double> u(-half, half);
    const double x = u(rng), y = u(rng), z = u(rng);
    return {x, y, z};
}

}  // namespace

SynthScene synth_scene(const SynthConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    const CameraIntrinsics k = cfg.camera();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    const int n = cfg.n_gaussians;
    const double margin = 0.15;
    const double base_px = cfg.gaussian_size * std::sqrt((1 + 2 * margin) * k.width * (1 + 2 * margin) * k.height / n);
    const int nf = cfg.payload_dim > 3 ? cfg.payload_dim : 0;

    std::vector<Vec3> freq(nf);
    std::vector<double> phase(nf);
    for (int j = 0; j < nf; ++j) {
        freq[j] = random_direction(rng) * uniform(0.3, 1.5);
        phase[j] = uniform(0.0, 2.0 * M_PI);
    }

    // Smooth depth field over the image so that neighbouring Gaussians lie on
    // a common surface and blended depth stays close to the true depth.
    struct Wave {
        double fu, fv, phase, amp;
    };
    std::vector<Wave> waves(3);
    double amp_sum = 0.0;
    for (auto& w : waves) {
        const double ang = uniform(0.0, 2.0 * M_PI), f = uniform(0.4, 1.2);
        w = {f * std::cos(ang) / k.width, f * std::sin(ang) / k.height, uniform(0.0, 2.0 * M_PI), uniform(0.5, 1.0)};
        amp_sum += w.amp;
    }
    auto surface = [&](double u, double v) {
        double acc = 0.0;
        for (const auto& w : waves) acc += w.amp * std::sin(2.0 * M_PI * (w.fu * u + w.fv * v) + w.phase);
        return cfg.depth_min + (cfg.depth_max - cfg.depth_min) * (0.5 + 0.5 * acc / amp_sum);
    };

    // Dynamic Gaussians form one compact object in front of the surface.
    const int n_dyn = static_cast<int>(std::lround(cfg.dynamic_fraction * n));
    const double obj_u = uniform(0.3, 0.7) * k.width, obj_v = uniform(0.3, 0.7) * k.height;

    SynthScene s;
    std::vector<Gaussian3D> color(n), feat;
    std::vector<Vec3> uvz(n);
    for (int i = 0; i < n; ++i) {
        const double u = uniform(-margin * k.width, (1 + margin) * k.width);
        const double v = uniform(-margin * k.height, (1 + margin) * k.height);
        const double z = surface(u, v) * uniform(0.98, 1.02);
        uvz[i] = Vec3(u, v, z);
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return std::hypot(uvz[a].x() - obj_u, uvz[a].y() - obj_v) < std::hypot(uvz[b].x() - obj_u, uvz[b].y() - obj_v);
    });
    s.dynamic.assign(n, false);
    for (int i = 0; i < n_dyn; ++i) {
        s.dynamic[order[i]] = true;
        uvz[order[i]].z() = std::max(cfg.depth_min, 0.75 * uvz[order[i]].z());
    }

    double depth_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        Gaussian3D& g = color[i];
        const auto [u, v, z] = std::tuple(uvz[i].x(), uvz[i].y(), uvz[i].z());
        depth_sum += z;
        g.mean = Vec3((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z);
        g.rot = random_rotation(rng);
        const double size = base_px * uniform(0.6, 1.2) * z / k.fx;
        for (int a = 0; a < 3; ++a) g.log_scale[a] = std::log(size * uniform(0.6, 1.4));
        g.opacity_logit = logit(uniform(0.6, 0.95));
        g.payload = {uniform(0.05, 0.95), uniform(0.05, 0.95), uniform(0.05, 0.95)};
    }
    s.mean_depth = depth_sum / n;
    if (nf > 0) {
        feat = color;
        for (auto& g : feat) {
            g.payload.resize(nf);
            for (int j = 0; j < nf; ++j) g.payload[j] = 0.5 + 0.5 * std::sin(freq[j].dot(g.mean) + phase[j]);
        }
        s.features = GaussianScene(std::move(feat), nf);
    }
    s.color = GaussianScene(std::move(color), 3);

    return s;
}

Trajectory synth_trajectory(const SynthConfig& cfg, double mean_depth, std::mt19937_64& rng) {
    cfg.validate();
    const double cap_t = cfg.max_translation * mean_depth;
    const double cap_r = cfg.max_rotation_deg * M_PI / 180.0;
    const int n = cfg.n_frames;
    std::vector<TimedPose> poses(n);
    for (int i = 0; i < n; ++i) poses[i].timestamp = i / 30.0;

    auto constant_step = [&](double fraction) {
        const Vec3 v = cfg.velocity ? *cfg.velocity : random_direction(rng) * fraction * cap_t;
        const Vec3 w = cfg.angular_velocity_deg ? Vec3(*cfg.angular_velocity_deg * M_PI / 180.0)
                                                : random_direction(rng) * fraction * cap_r;
        return Se3Pose(so3_exp(w), v);
    };

    switch (cfg.trajectory) {
        case TrajectoryModel::kStatic: break;
        case TrajectoryModel::kConstantVelocity: {
            const Se3Pose step = constant_step(0.5);
            for (int i = 1; i < n; ++i) poses[i].pose = poses[i - 1].pose * step;
            break;
        }
        case TrajectoryModel::kArc: {
            const double theta = 0.8 * std::min(cap_r, cfg.max_translation);
            const Vec3 c(0.0, 0.0, mean_depth);
            for (int i = 1; i < n; ++i) {
                const Mat3 r = so3_exp(Vec3(0.0, i * theta, 0.0));
                poses[i].pose = Se3Pose(r, c - r * c);
            }
            break;
        }
        case TrajectoryModel::kJitter: {
            const Se3Pose step = constant_step(0.5);
            Se3Pose base;
            const double jt = cfg.jitter * cap_t / std::sqrt(3.0);
            const double jr = cfg.jitter * cap_r / std::sqrt(3.0);
            for (int i = 1; i < n; ++i) {
                base = base * step;
                Vec6 xi;
                xi << uniform_box(rng, jr), uniform_box(rng, jt);
                poses[i].pose = base * Se3Pose::exp(xi);
            }
            break;
        }
    }
    return Trajectory(std::move(poses));
}

SynthData synthesize(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    SynthData data;
    data.intrinsics = cfg.camera();
    data.scene = synth_scene(cfg, rng);
    data.groundtruth = synth_trajectory(cfg, data.scene.mean_depth, rng);

    const auto& k = data.intrinsics;
    const std::size_t n = data.scene.color.size();
    const int nf = data.scene.features ? data.scene.features->payload_dim() : 0;
    const int channels = 3 + 2 + nf;  // rgb, depth, dynamic weight, features

    // The dynamic object drifts along a smooth random walk.
    std::normal_distribution<double> normal(0.0, 1.0);
    const double walk = 0.005 * data.scene.mean_depth;
    Vec3 offset = Vec3::Zero();
    Vec3 vel = Vec3(normal(rng), normal(rng), 0.3 * normal(rng)) * walk;

    RasterConfig rc;
    for (int f = 0; f < cfg.n_frames; ++f) {
        const Se3Pose view = data.groundtruth[f].pose.inverse();
        std::vector<Gaussian3D> gs(data.scene.color.gaussians().begin(), data.scene.color.gaussians().end());
        for (std::size_t i = 0; i < n; ++i) {
            Gaussian3D& g = gs[i];
            if (data.scene.dynamic[i]) g.mean += offset;
            const double z = view.apply(g.mean).z();
            g.payload.push_back(z);
            g.payload.push_back(data.scene.dynamic[i] ? 1.0 : 0.0);
            if (nf > 0) {
                const auto& fp = (*data.scene.features)[i].payload;
                g.payload.insert(g.payload.end(), fp.begin(), fp.end());
            }
        }
        const GaussianScene frame_scene(std::move(gs), channels);
        const RenderOutput out = rasterize(frame_scene, view, k, rc);

        SynthFrame fr;
        fr.rgb = out.map.channel_slice(0, 3);
        fr.depth = PlanarMap(k.width, k.height, 1, 0.0);
        fr.mask = PlanarMap(k.width, k.height, 1, 1.0);
        for (int y = 0; y < k.height; ++y) {
            for (int x = 0; x < k.width; ++x) {
                const double a = out.alpha.at(x, y, 0);
                if (a > 1e-6) {
                    fr.depth.at(x, y, 0) = out.map.at(x, y, 3) / a;
                    if (out.map.at(x, y, 4) > 0.5 * a) fr.mask.at(x, y, 0) = 0.0;
                }
            }
        }
        if (nf > 0) fr.features = out.map.channel_slice(5, nf);
        data.frames.push_back(std::move(fr));

        vel = 0.9 * vel + 0.3 * walk * Vec3(normal(rng), normal(rng), 0.3 * normal(rng));
        offset += vel;
    }
    return data;
}

SynthData generate(const SynthConfig& cfg, const fs::path& out_dir) {
    SynthData data = synthesize(cfg);
    const bool feats = data.scene.features.has_value();
    std::vector<std::string> dirs = {"rgb", "depth", "mask"};
    if (feats) dirs.push_back("feat");
    if (cfg.write_pointclouds) dirs.push_back("pointcloud");
    std::error_code ec;
    for (const auto& d : dirs) {
        fs::create_directories(out_dir / d, ec);
        if (ec) throw Error(ErrorCode::kIo, "cannot create " + (out_dir / d).string() + ": " + ec.message());
    }
    std::vector<double> stamps;
    for (int f = 0; f < cfg.n_frames; ++f) {
        const SynthFrame& fr = data.frames[f];
        write_planar_map(Dataset::frame_path(out_dir, "rgb", f), fr.rgb);
        write_planar_map(Dataset::frame_path(out_dir, "depth", f), fr.depth, DType::kFloat32, true);
        write_planar_map(Dataset::frame_path(out_dir, "mask", f), fr.mask, DType::kFloat32, true);
        if (feats) write_planar_map(Dataset::frame_path(out_dir, "feat", f), fr.features);
        if (cfg.write_pointclouds) {
            const Se3Pose view = data.groundtruth[f].pose.inverse();
            std::vector<double> flat;
            std::size_t rows = 0;
            for (std::size_t i = 0; i < data.scene.color.size(); ++i) {
                if (data.scene.dynamic[i]) continue;
                const auto& g = data.scene.color[i];
                const Vec3 p = view.apply(g.mean);
                flat.insert(flat.end(), {p.x(), p.y(), p.z()});
                flat.insert(flat.end(), g.payload.begin(), g.payload.end());
                ++rows;
            }
            write_tensor(Dataset::frame_path(out_dir, "pointcloud", f),
                         Tensor::from_doubles({rows, 6}, flat, DType::kFloat64));
        }
        stamps.push_back(data.groundtruth[f].timestamp);
    }
    write_intrinsics(out_dir / "intrinsics.json", data.intrinsics);
    write_timestamps(out_dir / "timestamps.txt", stamps);
    write_tum(out_dir / "groundtruth.txt", data.groundtruth);
    return data;
}

}  // namespace smallgs
