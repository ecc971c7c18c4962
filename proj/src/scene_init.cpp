#include "smallgs/scene_init.hpp"

#include "internal.hpp"
#include "smallgs/io.hpp"
#include "smallgs/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

namespace smallgs {

void LiftConfig::validate() const {
    if (pixel_stride < 1) throw Error(ErrorCode::kConfig, "pixel_stride: must be >= 1");
    if (!(mask_threshold >= 0.0 && mask_threshold <= 1.0)) {
        throw Error(ErrorCode::kConfig, "mask_threshold: must lie in [0, 1]");
    }
    if (!(init_opacity > 0.0 && init_opacity < 1.0)) throw Error(ErrorCode::kConfig, "init_opacity: must lie in (0, 1)");
    if (scale_knn < 1) throw Error(ErrorCode::kConfig, "scale_knn: must be >= 1");
}

std::vector<LiftedPoint> lift_depth(const PlanarMap& depth, const PlanarMap& mask, const CameraIntrinsics& k,
                                    const PlanarMap& payload_source, const LiftConfig& cfg) {
    cfg.validate();
    k.validate();
    auto check = [&](const PlanarMap& m, const char* name, bool single) {
        if (m.width() != k.width || m.height() != k.height || (single && m.channels() != 1)) {
            throw Error(ErrorCode::kShapeMismatch, std::string("lift_depth: ") + name + " is " +
                                                       std::to_string(m.width()) + "x" + std::to_string(m.height()) +
                                                       "x" + std::to_string(m.channels()) + ", intrinsics say " +
                                                       std::to_string(k.width) + "x" + std::to_string(k.height));
        }
    };
    check(depth, "depth", true);
    check(mask, "mask", true);
    check(payload_source, "payload source", false);

    const int c = payload_source.channels();
    std::vector<LiftedPoint> out;
    for (int v = 0; v < k.height; v += cfg.pixel_stride) {
        for (int u = 0; u < k.width; u += cfg.pixel_stride) {
            if (!(mask.at(u, v, 0) >= cfg.mask_threshold)) continue;
            const double d = depth.at(u, v, 0);
            if (!(d > 0.0)) continue;
            LiftedPoint p;
            p.point = Vec3((u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d);
            const double* src = payload_source.pixel(u, v);
            p.payload.assign(src, src + c);
            out.push_back(std::move(p));
        }
    }
    if (out.empty()) throw Error(ErrorCode::kDegenerate, "lift_depth: no static pixels");
    return out;
}

namespace {

// Static 3-d tree over a point set, built by median splits.
class KdTree {
public:
    explicit KdTree(std::span<const Vec3> pts) : pts_(pts), idx_(pts.size()) {
        std::iota(idx_.begin(), idx_.end(), 0);
        nodes_.reserve(pts.size());
        root_ = build(0, static_cast<int>(idx_.size()), 0);
    }

    /// Squared distances to the k nearest points other than `self`, ascending.
    std::vector<double> knn(int self, int k) const {
        std::priority_queue<double> heap;
        search(root_, pts_[self], self, k, heap);
        std::vector<double> out;
        while (!heap.empty()) {
            out.push_back(heap.top());
            heap.pop();
        }
        std::reverse(out.begin(), out.end());
        return out;
    }

private:
    struct Node {
        int point;
        int axis;
        int left = -1, right = -1;
    };

    int build(int lo, int hi, int depth) {
        if (lo >= hi) return -1;
        const int axis = depth % 3;
        const int mid = (lo + hi) / 2;
        std::nth_element(idx_.begin() + lo, idx_.begin() + mid, idx_.begin() + hi,
                         [&](int a, int b) { return pts_[a][axis] < pts_[b][axis]; });
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back({idx_[mid], axis});
        const int l = build(lo, mid, depth + 1);
        const int r = build(mid + 1, hi, depth + 1);
        nodes_[id].left = l;
        nodes_[id].right = r;
        return id;
    }

    void search(int node, const Vec3& q, int self, int k, std::priority_queue<double>& heap) const {
        if (node < 0) return;
        const Node& n = nodes_[node];
        if (n.point != self) {
            const double d2 = (pts_[n.point] - q).squaredNorm();
            if (static_cast<int>(heap.size()) < k) {
                heap.push(d2);
            } else if (d2 < heap.top()) {
                heap.pop();
                heap.push(d2);
            }
        }
        const double diff = q[n.axis] - pts_[n.point][n.axis];
        const int near = diff < 0 ? n.left : n.right;
        const int far = diff < 0 ? n.right : n.left;
        search(near, q, self, k, heap);
        if (static_cast<int>(heap.size()) < k || diff * diff < heap.top()) search(far, q, self, k, heap);
    }

    std::span<const Vec3> pts_;
    std::vector<int> idx_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

}  // namespace

std::vector<double> mean_knn_distance(std::span<const Vec3> points, int k) {
    if (k < 1) throw Error(ErrorCode::kInvalidArgument, "mean_knn_distance: k must be >= 1");
    std::vector<double> out(points.size(), 0.0);
    if (points.size() < 2) return out;
    const KdTree tree(points);
    const int kk = std::min<int>(k, static_cast<int>(points.size()) - 1);
    for (std::size_t i = 0; i < points.size(); ++i) {
        double s = 0.0;
        for (double d2 : tree.knn(static_cast<int>(i), kk)) s += std::sqrt(d2);
        out[i] = s / kk;
    }
    return out;
}

GaussianScene init_gaussians(std::span<const LiftedPoint> points, const LiftConfig& cfg) {
    cfg.validate();
    if (points.empty()) throw Error(ErrorCode::kInvalidArgument, "init_gaussians: no points");
    const int dim = static_cast<int>(points.front().payload.size());
    std::vector<Vec3> pos;
    pos.reserve(points.size());
    for (const auto& p : points) pos.push_back(p.point);
    std::vector<double> scale;
    if (points.size() == 1) {
        scale.assign(1, 1e-2);
    } else {
        scale = mean_knn_distance(pos, cfg.scale_knn);
    }
    std::vector<Gaussian3D> gs(points.size());
    const double op = logit(cfg.init_opacity);
    for (std::size_t i = 0; i < points.size(); ++i) {
        gs[i].mean = points[i].point;
        gs[i].log_scale = Vec3::Constant(std::log(std::max(scale[i], 1e-6)));
        gs[i].opacity_logit = op;
        gs[i].payload = points[i].payload;
    }
    return GaussianScene(std::move(gs), dim);
}

std::vector<LiftedPoint> load_pointcloud(const std::filesystem::path& path) {
    const Tensor t = read_tensor(path);
    if (t.shape.size() != 2 || t.shape[1] < 4) {
        throw Error(ErrorCode::kShapeMismatch, path.string() + ": point clouds must be N x (3 + k) with k >= 1");
    }
    if (t.shape[0] == 0) throw Error(ErrorCode::kParse, path.string() + ": point cloud is empty");
    const auto v = t.to_doubles();
    const std::size_t cols = t.shape[1];
    std::vector<LiftedPoint> out(t.shape[0]);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double* row = v.data() + i * cols;
        out[i].point = Vec3(row[0], row[1], row[2]);
        out[i].payload.assign(row + 3, row + cols);
        if (!out[i].point.allFinite()) {
            throw Error(ErrorCode::kParse, path.string() + ": non-finite point in row " + std::to_string(i));
        }
    }
    return out;
}

void save_pointcloud(const std::filesystem::path& path, std::span<const LiftedPoint> points) {
    if (points.empty()) throw Error(ErrorCode::kInvalidArgument, "save_pointcloud: no points");
    const std::size_t k = points.front().payload.size();
    if (k == 0) throw Error(ErrorCode::kInvalidArgument, "save_pointcloud: payloads must be non-empty");
    std::vector<double> flat;
    flat.reserve(points.size() * (3 + k));
    for (const auto& p : points) {
        if (p.payload.size() != k) throw Error(ErrorCode::kShapeMismatch, "save_pointcloud: payload sizes differ");
        flat.insert(flat.end(), {p.point.x(), p.point.y(), p.point.z()});
        flat.insert(flat.end(), p.payload.begin(), p.payload.end());
    }
    write_tensor(path, Tensor::from_doubles({points.size(), 3 + k}, flat, DType::kFloat64));
}

namespace {

constexpr int kFitFixed = 11;  // mean 3, rot 4, log_scale 3, opacity 1

void pack(const GaussianScene& scene, std::vector<double>& out) {
    const int k = scene.payload_dim();
    out.resize(scene.size() * (kFitFixed + k));
    double* p = out.data();
    for (const auto& g : scene.gaussians()) {
        *p++ = g.mean.x(), *p++ = g.mean.y(), *p++ = g.mean.z();
        *p++ = g.rot.w(), *p++ = g.rot.x(), *p++ = g.rot.y(), *p++ = g.rot.z();
        *p++ = g.log_scale.x(), *p++ = g.log_scale.y(), *p++ = g.log_scale.z();
        *p++ = g.opacity_logit;
        for (double c : g.payload) *p++ = c;
    }
}

void unpack(std::span<const double> in, GaussianScene& scene) {
    const double* p = in.data();
    for (auto& g : scene.mutable_gaussians()) {
        g.mean = Vec3(p[0], p[1], p[2]);
        Quat q(p[3], p[4], p[5], p[6]);
        if (q.norm() < 1e-12) q = Quat::Identity();
        g.rot = q.normalized();
        g.log_scale = Vec3(p[7], p[8], p[9]);
        g.opacity_logit = p[10];
        p += kFitFixed;
        for (double& c : g.payload) c = *p++;
    }
}

}  // namespace

GaussianScene fit_canonical(GaussianScene scene, const PlanarMap& target, const PlanarMap& mask,
                            const CameraIntrinsics& k, const FitConfig& cfg, FitReport* report) {
    if (scene.frozen()) throw Error(ErrorCode::kFrozenScene, "fit_canonical: scene is already frozen");
    if (scene.empty()) throw Error(ErrorCode::kInvalidArgument, "fit_canonical: empty scene");
    if (target.channels() != scene.payload_dim()) {
        throw Error(ErrorCode::kShapeMismatch, "fit_canonical: target has " + std::to_string(target.channels()) +
                                                   " channels, scene payload has " +
                                                   std::to_string(scene.payload_dim()));
    }
    if (target.width() != k.width || target.height() != k.height) {
        throw Error(ErrorCode::kShapeMismatch, "fit_canonical: target dimensions differ from intrinsics");
    }
    if (cfg.iters < 0 || !(cfg.lr > 0.0)) throw Error(ErrorCode::kConfig, "fit_canonical: bad iters or lr");

    const int dim = scene.payload_dim();
    const std::size_t stride = kFitFixed + dim;

    // Means move on the scale of the scene's own Gaussians.
    double mean_scale = 0.0;
    for (const auto& g : scene.gaussians()) mean_scale += g.scale().mean();
    mean_scale /= static_cast<double>(scene.size());

    std::vector<double> lr(scene.size() * stride);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        double* l = lr.data() + i * stride;
        std::fill(l, l + 3, cfg.lr * mean_scale);
        std::fill(l + 3, l + 7, cfg.lr * 0.1);
        std::fill(l + 7, l + 10, cfg.lr * 0.5);
        l[10] = cfg.lr * 5.0;
        std::fill(l + kFitFixed, l + stride, cfg.lr);
    }

    std::vector<double> params, grad(lr.size()), best;
    pack(scene, params);
    best = params;
    detail::Adam adam(params.size());
    FitReport rep;
    const Se3Pose identity;
    double best_loss = 0.0;

    auto evaluate = [&](PlanarMap* upstream, RenderOutput* out) {
        *out = rasterize(scene, identity, k, cfg.raster);
        return masked_mse(out->map, target, mask, cfg.mask_threshold, upstream);
    };

    for (int it = 0; it <= cfg.iters; ++it) {
        RenderOutput out;
        PlanarMap upstream;
        const double loss = evaluate(&upstream, &out);
        rep.losses.push_back(loss);
        if (it == 0) {
            rep.initial_loss = best_loss = loss;
        } else if (loss < best_loss) {
            best_loss = loss;
            best = params;
        }
        if (it >= 50 && loss > 0.999 * rep.losses[it - 50]) rep.steady_decrease = false;
        if (it == cfg.iters) break;

        const auto bw = rasterize_backward(scene, identity, k, out, upstream, true);
        const SceneGradients& sg = *bw.scene;
        for (std::size_t i = 0; i < scene.size(); ++i) {
            double* g = grad.data() + i * stride;
            for (int a = 0; a < 3; ++a) g[a] = sg.mean[i][a];
            for (int a = 0; a < 4; ++a) g[3 + a] = sg.rot[i][a];
            for (int a = 0; a < 3; ++a) g[7 + a] = sg.log_scale[i][a];
            g[10] = sg.opacity_logit[i];
            for (int c = 0; c < dim; ++c) g[kFitFixed + c] = sg.payload[i * dim + c];
        }
        adam.step(params, grad, lr, 1.0);
        unpack(params, scene);
    }
    unpack(best, scene);
    rep.final_loss = best_loss;
    if (!rep.steady_decrease) {
        detail::log_json(LogLevel::kDebug, {{"event", "fit_slow_decrease"}, {"final_loss", best_loss}});
    }
    if (report) *report = std::move(rep);
    scene.freeze();
    return scene;
}

GaussianScene reseed_payloads(const GaussianScene& scene, const PlanarMap& source, const CameraIntrinsics& k) {
    if (scene.frozen()) throw Error(ErrorCode::kFrozenScene, "reseed_payloads: scene is frozen");
    if (source.width() != k.width || source.height() != k.height) {
        throw Error(ErrorCode::kShapeMismatch, "reseed_payloads: source dimensions differ from intrinsics");
    }
    const int c = source.channels();
    std::vector<Gaussian3D> gs(scene.gaussians().begin(), scene.gaussians().end());
    for (auto& g : gs) {
        g.payload.assign(c, 0.0);
        if (!(g.mean.z() > 0.0)) continue;
        const double u = std::clamp(k.fx * g.mean.x() / g.mean.z() + k.cx, 0.0, k.width - 1.0);
        const double v = std::clamp(k.fy * g.mean.y() / g.mean.z() + k.cy, 0.0, k.height - 1.0);
        const int x0 = static_cast<int>(std::floor(u)), y0 = static_cast<int>(std::floor(v));
        const int x1 = std::min(x0 + 1, k.width - 1), y1 = std::min(y0 + 1, k.height - 1);
        const double fx = u - x0, fy = v - y0;
        for (int ch = 0; ch < c; ++ch) {
            g.payload[ch] = (1 - fx) * (1 - fy) * source.at(x0, y0, ch) + fx * (1 - fy) * source.at(x1, y0, ch) +
                            (1 - fx) * fy * source.at(x0, y1, ch) + fx * fy * source.at(x1, y1, ch);
        }
    }
    return GaussianScene(std::move(gs), c);
}

PcaAccumulator::PcaAccumulator(int channels)
    : channels_(channels), sum_(Eigen::VectorXd::Zero(channels)), outer_(Eigen::MatrixXd::Zero(channels, channels)) {
    if (channels < 1) throw Error(ErrorCode::kInvalidArgument, "PcaAccumulator: channels must be >= 1");
}

void PcaAccumulator::add(const PlanarMap& map) {
    if (map.channels() != channels_) {
        throw Error(ErrorCode::kShapeMismatch, "PcaAccumulator: expected " + std::to_string(channels_) +
                                                   " channels, got " + std::to_string(map.channels()));
    }
    const auto n = static_cast<Eigen::Index>(map.pixel_count());
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(map.data().data(), n,
                                                                                              channels_);
    if (count_ == 0) shift_ = x.row(0).transpose();
    const Eigen::MatrixXd centered = x.rowwise() - shift_.transpose();
    sum_ += centered.colwise().sum().transpose();
    outer_.noalias() += centered.transpose() * centered;
    count_ += n;
}

PcaResult PcaAccumulator::finish(int f) const {
    if (f < 1 || f > channels_) {
        throw Error(ErrorCode::kInvalidArgument, "PCA: f = " + std::to_string(f) + " must lie in [1, " +
                                                     std::to_string(channels_) + "]");
    }
    if (count_ == 0) throw Error(ErrorCode::kInvalidArgument, "PCA: no samples");
    const double n = static_cast<double>(count_);
    const Eigen::VectorXd m = sum_ / n;
    Eigen::MatrixXd cov = outer_ / n - m * m.transpose();
    cov = 0.5 * (cov + cov.transpose());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);

    PcaResult r;
    r.mean = shift_ + m;
    r.basis = Eigen::MatrixXd::Zero(f, channels_);
    r.explained_variance = Eigen::VectorXd::Zero(f);
    const double top = std::max(es.eigenvalues()(channels_ - 1), 0.0);
    for (int j = 0; j < f; ++j) {
        const double lambda = es.eigenvalues()(channels_ - 1 - j);
        if (!(lambda > 1e-12 * top) || !(lambda > 0.0)) continue;
        Eigen::VectorXd v = es.eigenvectors().col(channels_ - 1 - j);
        // Deterministic sign: largest-magnitude entry positive.
        Eigen::Index arg;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        r.basis.row(j) = v.transpose();
        r.explained_variance(j) = lambda;
        ++r.rank;
    }
    r.rank_deficient = r.rank < f;
    if (r.rank_deficient) {
        detail::warn("pca_rank_deficient", "only " + std::to_string(r.rank) + " of " + std::to_string(f) +
                                               " components have non-zero variance; the rest are zero-filled");
    }
    return r;
}

PlanarMap PcaAccumulator::project(const PcaResult& pca, const PlanarMap& map) {
    const auto c = pca.mean.size();
    if (map.channels() != c) throw Error(ErrorCode::kShapeMismatch, "PCA projection: channel count differs");
    const auto f = pca.basis.rows();
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(f, c);
    for (Eigen::Index j = 0; j < f; ++j) {
        if (pca.explained_variance(j) > 0.0) w.row(j) = pca.basis.row(j) / std::sqrt(pca.explained_variance(j));
    }
    const auto n = static_cast<Eigen::Index>(map.pixel_count());
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(map.data().data(), n, c);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> y =
        (x.rowwise() - pca.mean.transpose()) * w.transpose();
    return PlanarMap(map.width(), map.height(), static_cast<int>(f), std::vector<double>(y.data(), y.data() + y.size()));
}

PcaResult pca_select_channels(std::span<const PlanarMap> features, int f) {
    if (features.empty()) throw Error(ErrorCode::kInvalidArgument, "PCA: no feature maps");
    PcaAccumulator acc(features.front().channels());
    for (const auto& m : features) {
        if (!m.same_shape(features.front())) throw Error(ErrorCode::kShapeMismatch, "PCA: feature maps differ in shape");
        acc.add(m);
    }
    PcaResult r = acc.finish(f);
    for (const auto& m : features) r.maps.push_back(PcaAccumulator::project(r, m));
    return r;
}

}  // namespace smallgs
