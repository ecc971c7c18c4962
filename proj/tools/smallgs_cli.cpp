#include "smallgs/smallgs.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

bool g_verbose = false;

void emit(const nlohmann::json& j) { std::cerr << j.dump() << '\n'; }

void log_to_stderr(sgs_log_level level, const char* line, void*) {
    if (level == SGS_LOG_DEBUG && !g_verbose) return;
    std::cerr << line << '\n';
}

// Reports a failed library call and returns the matching exit code.
int fail(const std::string& stage, sgs_status s, int code = kExitRuntime) {
    emit({{"level", "error"}, {"event", stage}, {"status", sgs_status_name(s)}, {"message", sgs_last_error()}});
    std::cerr << "error: " << stage << ": " << sgs_last_error() << '\n';
    return code;
}

int fail_message(const std::string& stage, const std::string& message, int code) {
    emit({{"level", "error"}, {"event", stage}, {"message", message}});
    std::cerr << "error: " << stage << ": " << message << '\n';
    return code;
}

template <typename T, void (*Destroy)(T*)>
struct Handle {
    T* p = nullptr;
    Handle() = default;
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    ~Handle() { Destroy(p); }
};

using Config = Handle<sgs_config, sgs_config_destroy>;
using DatasetH = Handle<sgs_dataset, sgs_dataset_destroy>;
using Traj = Handle<sgs_trajectory, sgs_trajectory_destroy>;
using Map = Handle<sgs_map, sgs_map_destroy>;

bool read_text(const std::string& path, std::string& out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    std::ostringstream ss;
    ss << in.rdbuf();
    out = ss.str();
    return true;
}

// Empty path selects the defaults.
int load_run_config(const std::string& path, Config& cfg) {
    const sgs_status s = path.empty() ? sgs_config_parse(nullptr, &cfg.p) : sgs_config_load(path.c_str(), &cfg.p);
    return s == SGS_OK ? kExitOk : fail("config", s, kExitUsage);
}

struct SynthArgs {
    std::string config, out;
};

int run_synth(const SynthArgs& a) {
    std::string text;
    if (!read_text(a.config, text)) return fail_message("config", "cannot read " + a.config, kExitUsage);
    sgs_synth_summary sum{};
    const sgs_status s = sgs_synth_generate(text.c_str(), a.out.c_str(), &sum);
    if (s == SGS_ERR_CONFIG) return fail("config", s, kExitUsage);
    if (s != SGS_OK) return fail("synth", s);
    std::printf("wrote %s: %d frames %dx%d, %d gaussians (%d dynamic), payload %d, mean depth %.4g\n", a.out.c_str(),
                sum.n_frames, sum.width, sum.height, sum.n_gaussians, sum.n_dynamic, sum.payload_dim, sum.mean_depth);
    emit({{"level", "info"},
          {"event", "synth_done"},
          {"frames", sum.n_frames},
          {"gaussians", sum.n_gaussians},
          {"dynamic", sum.n_dynamic}});
    return kExitOk;
}

struct EstimateArgs {
    std::string data, config, out, init;
};

int run_estimate(const EstimateArgs& a) {
    Config cfg;
    if (int rc = load_run_config(a.config, cfg)) return rc;
    DatasetH ds;
    if (sgs_status s = sgs_dataset_open(a.data.c_str(), &ds.p)) return fail("dataset", s);
    Traj init;
    if (!a.init.empty()) {
        if (sgs_status s = sgs_trajectory_read(a.init.c_str(), &init.p)) return fail("init", s);
    }
    Traj est;
    if (sgs_status s = sgs_estimate(ds.p, cfg.p, init.p, &est.p)) return fail("estimate", s);
    if (sgs_status s = sgs_trajectory_write(est.p, a.out.c_str())) return fail("write", s);
    std::printf("wrote %zu poses to %s\n", sgs_trajectory_size(est.p), a.out.c_str());
    return kExitOk;
}

struct EvalArgs {
    std::string est, gt, report;
    bool no_scale = false;
};

int run_eval(const EvalArgs& a) {
    Traj est, gt;
    if (sgs_status s = sgs_trajectory_read(a.est.c_str(), &est.p)) return fail("read_est", s);
    if (sgs_status s = sgs_trajectory_read(a.gt.c_str(), &gt.p)) return fail("read_gt", s);
    sgs_metrics m{};
    if (sgs_status s = sgs_evaluate(est.p, gt.p, a.no_scale ? 0 : 1, &m)) return fail("evaluate", s);
    char* table = nullptr;
    char* json = nullptr;
    sgs_metrics_to_table(&m, &table);
    sgs_metrics_to_json(&m, &json);
    std::fputs(table, stdout);
    int rc = kExitOk;
    if (!a.report.empty()) {
        std::ofstream out(a.report, std::ios::binary);
        out << json << '\n';
        if (!out) rc = fail_message("report", "cannot write " + a.report, kExitRuntime);
    }
    sgs_string_free(table);
    sgs_string_free(json);
    return rc;
}

struct PlotArgs {
    std::string est, gt, out;
    bool no_scale = false;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

// One panel: polylines of (x, y) series scaled into the box.
void svg_panel(std::ostream& s, double x0, double y0, double w, double h, const std::string& title,
               const std::vector<std::vector<std::pair<double, double>>>& series,
               const std::vector<std::string>& colors) {
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& ser : series) {
        for (const auto& [x, y] : ser) {
            xmin = std::min(xmin, x), xmax = std::max(xmax, x);
            ymin = std::min(ymin, y), ymax = std::max(ymax, y);
        }
    }
    if (!(xmax > xmin)) xmin -= 0.5, xmax += 0.5;
    if (!(ymax > ymin)) ymin -= 0.5, ymax += 0.5;
    const double pad = 24;
    s << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << w << "\" height=\"" << h
      << "\" fill=\"none\" stroke=\"#999\"/>\n";
    s << "<text x=\"" << x0 + 6 << "\" y=\"" << y0 + 16 << "\" font-size=\"12\">" << title << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        s << "<polyline fill=\"none\" stroke=\"" << colors[k] << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [x, y] : series[k]) {
            const double px = x0 + pad + (x - xmin) / (xmax - xmin) * (w - 2 * pad);
            const double py = y0 + h - pad - (y - ymin) / (ymax - ymin) * (h - 2 * pad);
            s << fmt(px) << ',' << fmt(py) << ' ';
        }
        s << "\"/>\n";
    }
}

int run_plot(const PlotArgs& a) {
    Traj est, gt;
    if (sgs_status s = sgs_trajectory_read(a.gt.c_str(), &gt.p)) return fail("read_gt", s);
    if (sgs_status s = sgs_trajectory_read(a.est.c_str(), &est.p)) return fail("read_est", s);
    double* rows = nullptr;
    std::size_t n = 0;
    if (sgs_status s = sgs_align_positions(est.p, gt.p, a.no_scale ? 0 : 1, &rows, &n)) return fail("align", s);

    fs::path base(a.out);
    const fs::path svg_path = fs::path(base).replace_extension(".svg");
    const fs::path csv_path = fs::path(base).replace_extension(".csv");

    std::ofstream csv(csv_path, std::ios::binary);
    csv << "time,gt_x,gt_y,gt_z,est_x,est_y,est_z\n";
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < 7; ++c) csv << (c ? "," : "") << fmt(rows[7 * i + c]);
        csv << '\n';
    }

    std::vector<std::pair<double, double>> top_gt, top_est, axis[3][2];
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = rows + 7 * i;
        top_gt.emplace_back(r[1], r[3]);
        top_est.emplace_back(r[4], r[6]);
        for (int c = 0; c < 3; ++c) {
            axis[c][0].emplace_back(r[0], r[1 + c]);
            axis[c][1].emplace_back(r[0], r[4 + c]);
        }
    }
    sgs_buffer_free(rows);

    const std::vector<std::string> colors = {"#1f77b4", "#d62728"};
    std::ofstream svg(svg_path, std::ios::binary);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"400\" font-family=\"sans-serif\">\n";
    svg_panel(svg, 0, 0, 400, 400, "top-down x/z (blue gt, red est)", {top_gt, top_est}, colors);
    const char* names[3] = {"x(t)", "y(t)", "z(t)"};
    for (int c = 0; c < 3; ++c) {
        svg_panel(svg, 400, c * 400.0 / 3, 400, 400.0 / 3, names[c], {axis[c][0], axis[c][1]}, colors);
    }
    svg << "</svg>\n";
    if (!csv || !svg) return fail_message("plot", "cannot write " + a.out, kExitRuntime);
    std::printf("wrote %s and %s (%zu poses)\n", svg_path.c_str(), csv_path.c_str(), n);
    return kExitOk;
}

struct RenderArgs {
    std::string data, config, pose = "identity", out;
    int frame = 0;
};

int run_render(const RenderArgs& a) {
    sgs_pose pose{{0, 0, 0}, {0, 0, 0, 1}};
    if (a.pose != "identity") {
        if (sgs_status s = sgs_parse_pose_line(a.pose.c_str(), nullptr, &pose)) return fail("pose", s, kExitUsage);
    }
    Config cfg;
    if (int rc = load_run_config(a.config, cfg)) return rc;
    DatasetH ds;
    if (sgs_status s = sgs_dataset_open(a.data.c_str(), &ds.p)) return fail("dataset", s);
    Map m;
    if (sgs_status s = sgs_render(ds.p, cfg.p, a.frame, &pose, &m.p)) return fail("render", s);
    if (sgs_status s = sgs_map_write(m.p, a.out.c_str())) return fail("write", s);
    std::printf("wrote %dx%dx%d render to %s\n", sgs_map_height(m.p), sgs_map_width(m.p), sgs_map_channels(m.p),
                a.out.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Small-baseline camera pose estimation with Gaussian splats"};
    app.require_subcommand(1);
    app.add_flag("-v,--verbose", g_verbose, "Also log per-iteration debug lines");

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth->add_option("--config", sa.config, "Synthetic scene config (JSON)")->required();
    synth->add_option("--out", sa.out, "Output dataset directory")->required();

    EstimateArgs ea;
    auto* estimate = app.add_subcommand("estimate", "Estimate the camera trajectory of a dataset");
    estimate->add_option("--data", ea.data, "Dataset directory")->required();
    estimate->add_option("--config", ea.config, "Run config (JSON); defaults when omitted");
    estimate->add_option("--out", ea.out, "Output TUM trajectory")->required();
    estimate->add_option("--init", ea.init, "Initial TUM trajectory to refine");

    EvalArgs va;
    auto* eval = app.add_subcommand("eval", "Compare an estimated trajectory with ground truth");
    eval->add_option("--est", va.est, "Estimated TUM trajectory")->required();
    eval->add_option("--gt", va.gt, "Ground-truth TUM trajectory")->required();
    eval->add_flag("--no-scale", va.no_scale, "Rigid alignment instead of similarity");
    eval->add_option("--report", va.report, "Write the metrics as JSON");

    PlotArgs pa;
    auto* plot = app.add_subcommand("plot", "Write trajectory plots as SVG plus CSV");
    plot->add_option("--est", pa.est, "Estimated TUM trajectory")->required();
    plot->add_option("--gt", pa.gt, "Ground-truth TUM trajectory")->required();
    plot->add_option("--out", pa.out, "Output path; .svg and .csv are written next to each other")->required();
    plot->add_flag("--no-scale", pa.no_scale, "Rigid alignment instead of similarity");

    RenderArgs ra;
    auto* render = app.add_subcommand("render", "Fit a window's canonical scene and render it");
    render->add_option("--data", ra.data, "Dataset directory")->required();
    render->add_option("--config", ra.config, "Run config (JSON); defaults when omitted");
    render->add_option("--frame", ra.frame, "Frame index")->required();
    render->add_option("--pose", ra.pose, "\"identity\" or a TUM line relative to the canonical camera");
    render->add_option("--out", ra.out, "Output .npy")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    sgs_set_log_callback(log_to_stderr, nullptr);
    if (*synth) return run_synth(sa);
    if (*estimate) return run_estimate(ea);
    if (*eval) return run_eval(va);
    if (*plot) return run_plot(pa);
    return run_render(ra);
}
