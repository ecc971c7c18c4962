#include "smallgs/smallgs.h"

#include "smallgs/config.hpp"
#include "smallgs/io.hpp"
#include "smallgs/log.hpp"
#include "smallgs/metrics.hpp"
#include "smallgs/pipeline.hpp"
#include "smallgs/synth.hpp"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

struct sgs_config {
    smallgs::RunConfig cfg;
};

struct sgs_dataset {
    smallgs::Dataset ds;
};

struct sgs_trajectory {
    smallgs::Trajectory traj;
};

struct sgs_map {
    smallgs::PlanarMap map;
};

namespace {

thread_local std::string g_last_error;

sgs_status to_status(smallgs::ErrorCode code) {
    return static_cast<sgs_status>(static_cast<int>(code));
}

template <typename Fn>
sgs_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return SGS_OK;
    } catch (const smallgs::Error& e) {
        g_last_error = e.what();
        return to_status(e.code());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return SGS_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return SGS_ERR_INTERNAL;
    }
}

void require(bool ok, const char* what) {
    if (!ok) throw smallgs::Error(smallgs::ErrorCode::kInvalidArgument, std::string(what) + " is null");
}

char* dup_string(const std::string& s) {
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (!p) throw std::bad_alloc();
    std::memcpy(p, s.c_str(), s.size() + 1);
    return p;
}

smallgs::Se3Pose to_pose(const sgs_pose& p) {
    const smallgs::Quat q(p.q[3], p.q[0], p.q[1], p.q[2]);
    return smallgs::Se3Pose(smallgs::quat_to_matrix(q), smallgs::Vec3(p.t[0], p.t[1], p.t[2]));
}

sgs_pose from_pose(const smallgs::Se3Pose& p) {
    sgs_pose out;
    const auto& q = p.rotation();
    const auto& t = p.translation();
    for (int i = 0; i < 3; ++i) out.t[i] = t[i];
    out.q[0] = q.x();
    out.q[1] = q.y();
    out.q[2] = q.z();
    out.q[3] = q.w();
    return out;
}

smallgs::MetricsReport to_report(const sgs_metrics& m) {
    smallgs::MetricsReport r;
    r.ate_rmse = m.ate_rmse;
    r.rpe_rot = m.rpe_rot;
    r.rpe_trans = m.rpe_trans;
    r.delta_v = m.delta_v;
    r.n_frames = m.n_frames;
    r.with_scale = m.with_scale != 0;
    return r;
}

sgs_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

}  // namespace

extern "C" {

const char* sgs_last_error(void) { return g_last_error.c_str(); }

const char* sgs_status_name(sgs_status status) {
    switch (status) {
        case SGS_OK: return "ok";
        case SGS_ERR_INVALID_ARGUMENT: return "invalid_argument";
        case SGS_ERR_SHAPE_MISMATCH: return "shape_mismatch";
        case SGS_ERR_IO: return "io";
        case SGS_ERR_PARSE: return "parse";
        case SGS_ERR_UNSUPPORTED_FORMAT: return "unsupported_format";
        case SGS_ERR_DEGENERATE: return "degenerate";
        case SGS_ERR_FROZEN_SCENE: return "frozen_scene";
        case SGS_ERR_CONFIG: return "config";
        case SGS_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* sgs_version(void) { return "0.1.0"; }

void sgs_set_log_callback(sgs_log_fn fn, void* user) {
    g_log_fn = fn;
    g_log_user = user;
    if (!fn) {
        smallgs::set_log_sink(nullptr);
        return;
    }
    smallgs::set_log_sink([](smallgs::LogLevel level, std::string_view line) {
        const std::string s(line);
        g_log_fn(static_cast<sgs_log_level>(level), s.c_str(), g_log_user);
    });
}

void sgs_string_free(char* s) { std::free(s); }

sgs_status sgs_config_parse(const char* json, sgs_config** out) {
    return guarded([&] {
        require(out, "out");
        auto* c = new sgs_config{smallgs::parse_config(json && *json ? json : "{}")};
        *out = c;
    });
}

sgs_status sgs_config_load(const char* path, sgs_config** out) {
    return guarded([&] {
        require(path && out, "path or out");
        *out = new sgs_config{smallgs::load_config(path)};
    });
}

sgs_status sgs_config_to_json(const sgs_config* cfg, char** out) {
    return guarded([&] {
        require(cfg && out, "config or out");
        *out = dup_string(smallgs::config_to_json(cfg->cfg));
    });
}

void sgs_config_destroy(sgs_config* cfg) { delete cfg; }

sgs_status sgs_dataset_open(const char* dir, sgs_dataset** out) {
    return guarded([&] {
        require(dir && out, "dir or out");
        *out = new sgs_dataset{smallgs::Dataset::open(dir)};
    });
}

int sgs_dataset_frame_count(const sgs_dataset* ds) { return ds ? ds->ds.frame_count() : 0; }

void sgs_dataset_destroy(sgs_dataset* ds) { delete ds; }

sgs_status sgs_trajectory_create(const double* timestamps, const sgs_pose* poses, size_t n, sgs_trajectory** out) {
    return guarded([&] {
        require(timestamps && poses && out, "timestamps, poses or out");
        std::vector<smallgs::TimedPose> ps;
        ps.reserve(n);
        for (size_t i = 0; i < n; ++i) ps.push_back({timestamps[i], to_pose(poses[i])});
        *out = new sgs_trajectory{smallgs::Trajectory(std::move(ps))};
    });
}

sgs_status sgs_trajectory_read(const char* path, sgs_trajectory** out) {
    return guarded([&] {
        require(path && out, "path or out");
        *out = new sgs_trajectory{smallgs::read_tum(path)};
    });
}

sgs_status sgs_trajectory_parse(const char* text, sgs_trajectory** out) {
    return guarded([&] {
        require(text && out, "text or out");
        *out = new sgs_trajectory{smallgs::parse_tum(text)};
    });
}

sgs_status sgs_trajectory_write(const sgs_trajectory* t, const char* path) {
    return guarded([&] {
        require(t && path, "trajectory or path");
        smallgs::write_tum(path, t->traj);
    });
}

size_t sgs_trajectory_size(const sgs_trajectory* t) { return t ? t->traj.size() : 0; }

sgs_status sgs_trajectory_get(const sgs_trajectory* t, size_t i, double* timestamp, sgs_pose* pose) {
    return guarded([&] {
        require(t, "trajectory");
        if (i >= t->traj.size()) {
            throw smallgs::Error(smallgs::ErrorCode::kInvalidArgument, "trajectory index out of range");
        }
        if (timestamp) *timestamp = t->traj[i].timestamp;
        if (pose) *pose = from_pose(t->traj[i].pose);
    });
}

void sgs_trajectory_destroy(sgs_trajectory* t) { delete t; }

sgs_status sgs_parse_pose_line(const char* line, double* timestamp, sgs_pose* pose) {
    return guarded([&] {
        require(line && pose, "line or pose");
        const smallgs::TimedPose p = smallgs::parse_tum_line(line);
        if (timestamp) *timestamp = p.timestamp;
        *pose = from_pose(p.pose);
    });
}

sgs_status sgs_synth_generate(const char* config_json, const char* out_dir, sgs_synth_summary* summary) {
    return guarded([&] {
        require(out_dir, "out_dir");
        const smallgs::SynthConfig c = smallgs::parse_synth_config(config_json && *config_json ? config_json : "{}");
        const smallgs::SynthData d = smallgs::generate(c, out_dir);
        if (!summary) return;
        summary->n_frames = static_cast<int>(d.frames.size());
        summary->width = d.intrinsics.width;
        summary->height = d.intrinsics.height;
        summary->n_gaussians = static_cast<int>(d.scene.color.size());
        summary->payload_dim = c.payload_dim;
        summary->n_dynamic = 0;
        for (bool b : d.scene.dynamic) summary->n_dynamic += b;
        summary->mean_depth = d.scene.mean_depth;
    });
}

sgs_status sgs_estimate(const sgs_dataset* ds, const sgs_config* cfg, const sgs_trajectory* init,
                        sgs_trajectory** out) {
    return guarded([&] {
        require(ds && cfg && out, "dataset, config or out");
        std::optional<smallgs::Trajectory> start;
        if (init) start = init->traj;
        smallgs::EstimateResult r = smallgs::estimate_sequence(ds->ds, cfg->cfg, start);
        *out = new sgs_trajectory{std::move(r.trajectory)};
    });
}

sgs_status sgs_evaluate(const sgs_trajectory* est, const sgs_trajectory* gt, int with_scale, sgs_metrics* out) {
    return guarded([&] {
        require(est && gt && out, "est, gt or out");
        const smallgs::MetricsReport r = smallgs::evaluate_trajectories(est->traj, gt->traj, with_scale != 0);
        out->ate_rmse = r.ate_rmse;
        out->rpe_rot = r.rpe_rot;
        out->rpe_trans = r.rpe_trans;
        out->delta_v = r.delta_v;
        out->n_frames = r.n_frames;
        out->with_scale = r.with_scale ? 1 : 0;
    });
}

sgs_status sgs_metrics_to_json(const sgs_metrics* m, char** out) {
    return guarded([&] {
        require(m && out, "metrics or out");
        *out = dup_string(smallgs::report_to_json(to_report(*m)));
    });
}

sgs_status sgs_metrics_to_table(const sgs_metrics* m, char** out) {
    return guarded([&] {
        require(m && out, "metrics or out");
        *out = dup_string(smallgs::report_to_table(to_report(*m)));
    });
}

sgs_status sgs_align_positions(const sgs_trajectory* est, const sgs_trajectory* gt, int with_scale, double** rows,
                               size_t* n) {
    return guarded([&] {
        require(est && gt && rows && n, "est, gt, rows or n");
        const auto pairs = smallgs::associate(est->traj, gt->traj);
        std::vector<smallgs::Vec3> pe, pg;
        for (const auto& [i, j] : pairs) {
            pe.push_back(est->traj[i].pose.translation());
            pg.push_back(gt->traj[j].pose.translation());
        }
        const smallgs::AlignmentResult a = smallgs::umeyama_align(pe, pg, with_scale != 0);
        double* buf = static_cast<double*>(std::malloc(sizeof(double) * 7 * std::max<size_t>(pairs.size(), 1)));
        if (!buf) throw std::bad_alloc();
        for (size_t k = 0; k < pairs.size(); ++k) {
            double* r = buf + 7 * k;
            const smallgs::Vec3 e = a.apply(pe[k]);
            r[0] = gt->traj[pairs[k].second].timestamp;
            for (int c = 0; c < 3; ++c) {
                r[1 + c] = pg[k][c];
                r[4 + c] = e[c];
            }
        }
        *rows = buf;
        *n = pairs.size();
    });
}

void sgs_buffer_free(double* p) { std::free(p); }

sgs_status sgs_render(const sgs_dataset* ds, const sgs_config* cfg, int frame, const sgs_pose* pose, sgs_map** out) {
    return guarded([&] {
        require(ds && cfg && pose && out, "dataset, config, pose or out");
        *out = new sgs_map{smallgs::render_frame(ds->ds, cfg->cfg, frame, to_pose(*pose))};
    });
}

sgs_status sgs_map_read(const char* path, sgs_map** out) {
    return guarded([&] {
        require(path && out, "path or out");
        *out = new sgs_map{smallgs::read_planar_map(path)};
    });
}

sgs_status sgs_map_write(const sgs_map* m, const char* path) {
    return guarded([&] {
        require(m && path, "map or path");
        smallgs::write_planar_map(path, m->map);
    });
}

int sgs_map_width(const sgs_map* m) { return m ? m->map.width() : 0; }
int sgs_map_height(const sgs_map* m) { return m ? m->map.height() : 0; }
int sgs_map_channels(const sgs_map* m) { return m ? m->map.channels() : 0; }
const double* sgs_map_data(const sgs_map* m) { return m ? m->map.data().data() : nullptr; }

void sgs_map_destroy(sgs_map* m) { delete m; }

}  // extern "C"
