#include "smallgs/rasterizer.hpp"

#include "internal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace smallgs {

namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;

struct Splat {
    int source = 0;  // index into the scene
    Vec3 p_cam = Vec3::Zero();
    Mat3 cov_cam = Mat3::Zero();
    Mat23 jac = Mat23::Zero();
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Zero();
    // Inverse of cov2d: [[a, b], [b, c]].
    double conic_a = 0.0, conic_b = 0.0, conic_c = 0.0;
    double opacity = 0.0;
    double power_cut = 0.0;  // exponent below which alpha < alpha_min
    double radius = 0.0;
    int px0 = 0, px1 = -1, py0 = 0, py1 = -1;
};

std::optional<Splat> project(const Gaussian3D& g, const Mat3& cov_world, const Se3Pose& view,
                             const CameraIntrinsics& k, const RasterConfig& cfg) {
    Splat s;
    s.p_cam = view.apply(g.mean);
    const double x = s.p_cam.x(), y = s.p_cam.y(), z = s.p_cam.z();
    if (!(z > cfg.near_plane)) return std::nullopt;
    s.opacity = g.opacity();
    if (!(s.opacity > cfg.alpha_min)) return std::nullopt;

    const Mat3& rv = view.rotation_matrix();
    s.cov_cam = rv * cov_world * rv.transpose();
    const double iz = 1.0 / z;
    s.jac << k.fx * iz, 0.0, -k.fx * x * iz * iz, 0.0, k.fy * iz, -k.fy * y * iz * iz;
    s.cov2d = s.jac * s.cov_cam * s.jac.transpose();
    s.cov2d(0, 1) = s.cov2d(1, 0) = 0.5 * (s.cov2d(0, 1) + s.cov2d(1, 0));
    s.cov2d(0, 0) += cfg.lowpass;
    s.cov2d(1, 1) += cfg.lowpass;
    s.mean2d = Vec2(k.fx * x * iz + k.cx, k.fy * y * iz + k.cy);

    const double det = s.cov2d.determinant();
    if (!(det > 0.0) || !std::isfinite(det)) return std::nullopt;
    s.conic_a = s.cov2d(1, 1) / det;
    s.conic_b = -s.cov2d(0, 1) / det;
    s.conic_c = s.cov2d(0, 0) / det;

    const double mid = 0.5 * (s.cov2d(0, 0) + s.cov2d(1, 1));
    const double half = 0.5 * (s.cov2d(0, 0) - s.cov2d(1, 1));
    const double lambda_max = mid + std::sqrt(half * half + s.cov2d(0, 1) * s.cov2d(0, 1));
    s.power_cut = std::log(cfg.alpha_min / s.opacity);
    const double extent = std::sqrt(-2.0 * s.power_cut);
    s.radius = extent * std::sqrt(lambda_max);
    if (!std::isfinite(s.radius) || !s.mean2d.allFinite()) return std::nullopt;

    s.px0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.x() - s.radius)));
    s.px1 = std::min(k.width - 1, static_cast<int>(std::floor(s.mean2d.x() + s.radius)));
    s.py0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.y() - s.radius)));
    s.py1 = std::min(k.height - 1, static_cast<int>(std::floor(s.mean2d.y() + s.radius)));
    if (s.px0 > s.px1 || s.py0 > s.py1) return std::nullopt;
    return s;
}

int resolve_threads(const RasterConfig& cfg) {
    return cfg.threads > 0 ? cfg.threads : default_thread_count();
}

}  // namespace

struct RenderAux {
    Se3Pose view;
    CameraIntrinsics intrinsics;
    RasterConfig cfg;
    std::size_t scene_size = 0;
    int channels = 0;
    std::vector<double> background;
    std::vector<Splat> splats;     // depth-sorted
    std::vector<double> payloads;  // splats.size() * channels
    int tiles_x = 0, tiles_y = 0;
    std::vector<int> tile_offsets;  // tiles + 1
    std::vector<int> tile_entries;  // indices into splats, front to back
    std::vector<double> final_transmittance;
    std::vector<int> contributors;  // tile entries processed per pixel
};

Mat3 build_covariance(const Quat& rot, const Vec3& scale) {
    if (!scale.allFinite() || !rot.coeffs().allFinite()) {
        throw Error(ErrorCode::kInvalidArgument, "build_covariance: non-finite input");
    }
    const Mat3 r = quat_to_matrix(rot);
    const Vec3 s2 = scale.array().square();
    Mat3 cov = r * s2.asDiagonal() * r.transpose();
    return 0.5 * (cov + cov.transpose());
}

std::optional<ProjectedGaussian> project_gaussian(const Gaussian3D& g, const Se3Pose& view,
                                                  const CameraIntrinsics& k,
                                                  const RasterConfig& cfg) {
    k.validate();
    const auto s = project(g, build_covariance(g.rot, g.scale()), view, k, cfg);
    if (!s) return std::nullopt;
    ProjectedGaussian out;
    out.mean2d = s->mean2d;
    out.cov2d = s->cov2d;
    out.depth = s->p_cam.z();
    out.opacity = s->opacity;
    out.payload = g.payload;
    out.radius_px = s->radius;
    return out;
}

RenderOutput rasterize(const GaussianScene& scene, const Se3Pose& view, const CameraIntrinsics& k,
                       const RasterConfig& cfg) {
    k.validate();
    if (cfg.tile_size <= 0) throw Error(ErrorCode::kInvalidArgument, "tile_size must be positive");
    const int channels = scene.payload_dim();
    auto aux = std::make_shared<RenderAux>();
    aux->view = view;
    aux->intrinsics = k;
    aux->cfg = cfg;
    aux->scene_size = scene.size();
    aux->channels = channels;
    aux->background = cfg.background.empty() ? std::vector<double>(channels, 0.0) : cfg.background;
    if (static_cast<int>(aux->background.size()) != channels) {
        throw Error(ErrorCode::kShapeMismatch, "background has " +
                                                   std::to_string(aux->background.size()) +
                                                   " channels, scene payload has " +
                                                   std::to_string(channels));
    }

    std::vector<Splat> unsorted;
    unsorted.reserve(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const Gaussian3D& g = scene[i];
        if (auto s = project(g, build_covariance(g.rot, g.scale()), view, k, cfg)) {
            s->source = static_cast<int>(i);
            unsorted.push_back(*s);
        }
    }
    std::vector<int> order(unsorted.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return unsorted[a].p_cam.z() < unsorted[b].p_cam.z();
    });
    aux->splats.reserve(order.size());
    aux->payloads.reserve(order.size() * channels);
    for (int idx : order) {
        aux->splats.push_back(unsorted[idx]);
        const auto& p = scene[unsorted[idx].source].payload;
        aux->payloads.insert(aux->payloads.end(), p.begin(), p.end());
    }

    const int ts = cfg.tile_size;
    aux->tiles_x = (k.width + ts - 1) / ts;
    aux->tiles_y = (k.height + ts - 1) / ts;
    const int n_tiles = aux->tiles_x * aux->tiles_y;
    std::vector<int> counts(n_tiles, 0);
    for (const Splat& s : aux->splats) {
        for (int ty = s.py0 / ts; ty <= s.py1 / ts; ++ty)
            for (int tx = s.px0 / ts; tx <= s.px1 / ts; ++tx) ++counts[ty * aux->tiles_x + tx];
    }
    aux->tile_offsets.assign(n_tiles + 1, 0);
    for (int t = 0; t < n_tiles; ++t) aux->tile_offsets[t + 1] = aux->tile_offsets[t] + counts[t];
    aux->tile_entries.resize(aux->tile_offsets.back());
    std::vector<int> fill(aux->tile_offsets.begin(), aux->tile_offsets.end() - 1);
    for (int i = 0; i < static_cast<int>(aux->splats.size()); ++i) {
        const Splat& s = aux->splats[i];
        for (int ty = s.py0 / ts; ty <= s.py1 / ts; ++ty)
            for (int tx = s.px0 / ts; tx <= s.px1 / ts; ++tx)
                aux->tile_entries[fill[ty * aux->tiles_x + tx]++] = i;
    }

    RenderOutput out;
    out.map = PlanarMap(k.width, k.height, channels);
    out.alpha = PlanarMap(k.width, k.height, 1);
    aux->final_transmittance.assign(out.map.pixel_count(), 1.0);
    aux->contributors.assign(out.map.pixel_count(), 0);

    const RenderAux& a = *aux;
    auto render_tile = [&](int tile) {
        const int tx = tile % a.tiles_x, ty = tile / a.tiles_x;
        const int x0 = tx * ts, y0 = ty * ts;
        const int x1 = std::min(x0 + ts, k.width), y1 = std::min(y0 + ts, k.height);
        const int begin = a.tile_offsets[tile], end = a.tile_offsets[tile + 1];
        for (int py = y0; py < y1; ++py) {
            for (int px = x0; px < x1; ++px) {
                double* color = out.map.pixel(px, py);
                double t = 1.0;
                int processed = 0;
                for (int e = begin; e < end; ++e) {
                    const Splat& s = a.splats[a.tile_entries[e]];
                    ++processed;
                    const double dx = px - s.mean2d.x(), dy = py - s.mean2d.y();
                    const double power =
                        -0.5 * (s.conic_a * dx * dx + 2.0 * s.conic_b * dx * dy + s.conic_c * dy * dy);
                    if (power < s.power_cut) continue;
                    const double alpha_raw = s.opacity * std::exp(power);
                    if (alpha_raw < cfg.alpha_min) continue;
                    const double alpha = std::min(cfg.alpha_max, alpha_raw);
                    const double w = alpha * t;
                    const double* c = a.payloads.data() +
                                      static_cast<std::size_t>(a.tile_entries[e]) * channels;
                    for (int ch = 0; ch < channels; ++ch) color[ch] += w * c[ch];
                    t *= 1.0 - alpha;
                    if (t < cfg.min_transmittance) break;
                }
                for (int ch = 0; ch < channels; ++ch) color[ch] += t * a.background[ch];
                const std::size_t pix = static_cast<std::size_t>(py) * k.width + px;
                aux->final_transmittance[pix] = t;
                aux->contributors[pix] = processed;
                out.alpha.at(px, py, 0) = 1.0 - t;
            }
        }
    };
    detail::parallel_for(n_tiles, resolve_threads(cfg), render_tile);
    out.aux = std::move(aux);
    return out;
}

namespace {

// Per-entry accumulators: mean2d (2), conic (3), opacity (1), payload (k).
constexpr int kFixedSlots = 6;

}  // namespace

BackwardResult rasterize_backward(const GaussianScene& scene, const Se3Pose& view,
                                  const CameraIntrinsics& k, const RenderOutput& forward,
                                  const PlanarMap& upstream, bool want_scene_gradients) {
    if (!forward.aux) throw Error(ErrorCode::kInvalidArgument, "rasterize_backward: missing forward records");
    const RenderAux& a = *forward.aux;
    if (a.scene_size != scene.size() || a.channels != scene.payload_dim() ||
        a.intrinsics.width != k.width || a.intrinsics.height != k.height) {
        throw Error(ErrorCode::kShapeMismatch, "rasterize_backward: forward records do not match inputs");
    }
    if ((a.view.matrix() - view.matrix()).cwiseAbs().maxCoeff() > 1e-12) {
        throw Error(ErrorCode::kInvalidArgument, "rasterize_backward: view differs from forward pass");
    }
    if (upstream.width() != k.width || upstream.height() != k.height ||
        upstream.channels() != a.channels) {
        throw Error(ErrorCode::kShapeMismatch, "rasterize_backward: upstream gradient shape mismatch");
    }
    if (want_scene_gradients && scene.frozen()) {
        throw Error(ErrorCode::kFrozenScene, "scene gradients requested for a frozen scene");
    }

    const RasterConfig& cfg = a.cfg;
    const int channels = a.channels;
    const int stride = kFixedSlots + channels;
    const int ts = cfg.tile_size;
    const int n_tiles = a.tiles_x * a.tiles_y;
    std::vector<double> slots(a.tile_entries.size() * stride, 0.0);

    auto backward_tile = [&](int tile) {
        const int tx = tile % a.tiles_x, ty = tile / a.tiles_x;
        const int x0 = tx * ts, y0 = ty * ts;
        const int x1 = std::min(x0 + ts, k.width), y1 = std::min(y0 + ts, k.height);
        const int begin = a.tile_offsets[tile];
        std::vector<double> after(channels);
        for (int py = y0; py < y1; ++py) {
            for (int px = x0; px < x1; ++px) {
                const std::size_t pix = static_cast<std::size_t>(py) * k.width + px;
                const double* grad = upstream.pixel(px, py);
                double t = a.final_transmittance[pix];
                for (int ch = 0; ch < channels; ++ch) after[ch] = t * a.background[ch];
                for (int e = begin + a.contributors[pix] - 1; e >= begin; --e) {
                    const Splat& s = a.splats[a.tile_entries[e]];
                    const double dx = px - s.mean2d.x(), dy = py - s.mean2d.y();
                    const double power =
                        -0.5 * (s.conic_a * dx * dx + 2.0 * s.conic_b * dx * dy + s.conic_c * dy * dy);
                    if (power < s.power_cut) continue;
                    const double gauss = std::exp(power);
                    const double alpha_raw = s.opacity * gauss;
                    if (alpha_raw < cfg.alpha_min) continue;
                    const double alpha = std::min(cfg.alpha_max, alpha_raw);
                    const double one_minus = 1.0 - alpha;
                    const double t_before = t / one_minus;
                    const double* c = a.payloads.data() +
                                      static_cast<std::size_t>(a.tile_entries[e]) * channels;
                    double* slot = slots.data() + static_cast<std::size_t>(e) * stride;
                    double d_alpha = 0.0;
                    const double w = alpha * t_before;
                    for (int ch = 0; ch < channels; ++ch) {
                        d_alpha += grad[ch] * (c[ch] * t_before - after[ch] / one_minus);
                        slot[kFixedSlots + ch] += grad[ch] * w;
                        after[ch] += c[ch] * w;
                    }
                    t = t_before;
                    if (alpha_raw >= cfg.alpha_max) continue;
                    slot[5] += d_alpha * gauss;
                    const double d_power = d_alpha * alpha;
                    slot[0] += d_power * (s.conic_a * dx + s.conic_b * dy);
                    slot[1] += d_power * (s.conic_b * dx + s.conic_c * dy);
                    slot[2] += -0.5 * d_power * dx * dx;
                    slot[3] += -d_power * dx * dy;
                    slot[4] += -0.5 * d_power * dy * dy;
                }
            }
        }
    };
    detail::parallel_for(n_tiles, resolve_threads(cfg), backward_tile);

    // Reduce per-entry slots onto splats in a fixed order.
    const std::size_t n_splats = a.splats.size();
    std::vector<double> per_splat(n_splats * stride, 0.0);
    for (std::size_t e = 0; e < a.tile_entries.size(); ++e) {
        double* dst = per_splat.data() + static_cast<std::size_t>(a.tile_entries[e]) * stride;
        const double* src = slots.data() + e * stride;
        for (int j = 0; j < stride; ++j) dst[j] += src[j];
    }

    BackwardResult result;
    if (want_scene_gradients) {
        SceneGradients sg;
        const std::size_t n = scene.size();
        sg.mean.assign(n, Vec3::Zero());
        sg.rot.assign(n, Vec4::Zero());
        sg.log_scale.assign(n, Vec3::Zero());
        sg.opacity_logit.assign(n, 0.0);
        sg.payload.assign(n * channels, 0.0);
        result.scene = std::move(sg);
    }

    const Mat3& rv = view.rotation_matrix();
    Vec3 d_omega = Vec3::Zero();
    Vec3 d_nu = Vec3::Zero();
    for (std::size_t i = 0; i < n_splats; ++i) {
        const Splat& s = a.splats[i];
        const double* g = per_splat.data() + i * stride;
        const Vec2 d_mean2d(g[0], g[1]);
        Mat2 d_conic;
        d_conic << g[2], 0.5 * g[3], 0.5 * g[3], g[4];
        const Mat2 conic = (Mat2() << s.conic_a, s.conic_b, s.conic_b, s.conic_c).finished();
        const Mat2 d_cov2d = -conic * d_conic * conic;

        const Mat3 d_cov_cam = s.jac.transpose() * d_cov2d * s.jac;
        const Mat23 d_jac = 2.0 * d_cov2d * s.jac * s.cov_cam;

        const double x = s.p_cam.x(), y = s.p_cam.y(), z = s.p_cam.z();
        const double iz = 1.0 / z, iz2 = iz * iz, iz3 = iz2 * iz;
        Vec3 d_p = s.jac.transpose() * d_mean2d;
        d_p.x() += d_jac(0, 2) * (-k.fx * iz2);
        d_p.y() += d_jac(1, 2) * (-k.fy * iz2);
        d_p.z() += d_jac(0, 0) * (-k.fx * iz2) + d_jac(0, 2) * (2.0 * k.fx * x * iz3) +
                   d_jac(1, 1) * (-k.fy * iz2) + d_jac(1, 2) * (2.0 * k.fy * y * iz3);

        const Mat3 m = d_cov_cam * s.cov_cam;
        d_omega += s.p_cam.cross(d_p) +
                   2.0 * Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
        d_nu += d_p;

        if (!result.scene) continue;
        SceneGradients& sg = *result.scene;
        const Gaussian3D& gs = scene[s.source];
        sg.mean[s.source] = rv.transpose() * d_p;
        const double o = s.opacity;
        sg.opacity_logit[s.source] = g[5] * o * (1.0 - o);
        for (int ch = 0; ch < channels; ++ch) {
            sg.payload[static_cast<std::size_t>(s.source) * channels + ch] = g[kFixedSlots + ch];
        }

        // cov_world = M M^T with M = R diag(scale).
        const Mat3 d_cov_world = rv.transpose() * d_cov_cam * rv;
        const Quat q = gs.rot.normalized();
        const Mat3 r = quat_to_matrix(q);
        const Vec3 scale = gs.scale();
        const Mat3 mm = r * scale.asDiagonal();
        const Mat3 d_m = (d_cov_world + d_cov_world.transpose()) * mm;
        const Mat3 rt_dm = r.transpose() * d_m;
        for (int j = 0; j < 3; ++j) sg.log_scale[s.source][j] = rt_dm(j, j) * scale[j];
        const Mat3 d_r = d_m * scale.asDiagonal();

        const double w = q.w(), qx = q.x(), qy = q.y(), qz = q.z();
        Vec4 d_q;
        d_q[0] = 2.0 * (-qz * d_r(0, 1) + qy * d_r(0, 2) + qz * d_r(1, 0) - qx * d_r(1, 2) -
                        qy * d_r(2, 0) + qx * d_r(2, 1));
        d_q[1] = 2.0 * (qy * d_r(0, 1) + qz * d_r(0, 2) + qy * d_r(1, 0) - 2.0 * qx * d_r(1, 1) -
                        w * d_r(1, 2) + qz * d_r(2, 0) + w * d_r(2, 1) - 2.0 * qx * d_r(2, 2));
        d_q[2] = 2.0 * (-2.0 * qy * d_r(0, 0) + qx * d_r(0, 1) + w * d_r(0, 2) + qx * d_r(1, 0) +
                        qz * d_r(1, 2) - w * d_r(2, 0) + qz * d_r(2, 1) - 2.0 * qy * d_r(2, 2));
        d_q[3] = 2.0 * (-2.0 * qz * d_r(0, 0) - w * d_r(0, 1) + qx * d_r(0, 2) + w * d_r(1, 0) -
                        2.0 * qz * d_r(1, 1) + qy * d_r(1, 2) + qx * d_r(2, 0) + qy * d_r(2, 1));
        // Project out the radial direction: R depends only on q / |q|.
        const Vec4 qv(w, qx, qy, qz);
        const double norm = gs.rot.norm();
        sg.rot[s.source] = (d_q - qv * qv.dot(d_q)) / norm;
    }
    result.pose << d_omega, d_nu;
    return result;
}

}  // namespace smallgs
