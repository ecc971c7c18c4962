#include "smallgs/losses.hpp"

#include <array>
#include <cmath>

namespace smallgs {

namespace {

void check_mask(const PlanarMap& map, const PlanarMap& mask) {
    if (mask.channels() != 1 || !mask.same_dims(map)) {
        throw Error(ErrorCode::kShapeMismatch, "mask must be single-channel with the map's dimensions");
    }
}

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kSsimWindow> ssim_kernel() {
    std::array<double, kSsimWindow> g{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kSsimWindow / 2;
        g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += g[i];
    }
    for (auto& v : g) v /= sum;
    return g;
}

// Valid-mode separable Gaussian filter of a w x h plane.
std::vector<double> filter_valid(const std::vector<double>& in, int w, int h) {
    static const auto g = ssim_kernel();
    const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) s += g[i] * in[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) s += g[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    return out;
}

// Adjoint of filter_valid: scatters an ow x oh plane back to w x h.
std::vector<double> filter_valid_adjoint(const std::vector<double>& in, int w, int h) {
    static const auto g = ssim_kernel();
    const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h, 0.0);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            const double v = in[static_cast<std::size_t>(y) * ow + x];
            for (int i = 0; i < kSsimWindow; ++i) tmp[static_cast<std::size_t>(y + i) * ow + x] += g[i] * v;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            const double v = tmp[static_cast<std::size_t>(y) * ow + x];
            for (int i = 0; i < kSsimWindow; ++i) out[static_cast<std::size_t>(y) * w + x + i] += g[i] * v;
        }
    }
    return out;
}

}  // namespace

double masked_mse(const PlanarMap& rendered, const PlanarMap& target, const PlanarMap& mask, double threshold,
                  PlanarMap* grad) {
    if (!rendered.same_shape(target)) throw Error(ErrorCode::kShapeMismatch, "masked_mse: map shapes differ");
    check_mask(rendered, mask);
    const int c = rendered.channels();
    const auto r = rendered.data();
    const auto t = target.data();
    const auto m = mask.data();
    std::size_t kept = 0;
    for (double v : m) kept += v >= threshold;
    if (kept == 0) throw Error(ErrorCode::kDegenerate, "masked_mse: mask retains no pixels");
    const double norm = 1.0 / (static_cast<double>(kept) * c);
    if (grad) *grad = PlanarMap(rendered.width(), rendered.height(), c, 0.0);
    double sum = 0.0;
    for (std::size_t p = 0; p < m.size(); ++p) {
        if (!(m[p] >= threshold)) continue;
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t i = p * c + ch;
            const double d = r[i] - t[i];
            sum += d * d;
            if (grad) grad->data()[i] = 2.0 * d * norm;
        }
    }
    return sum * norm;
}

PlanarMap apply_mask(const PlanarMap& map, const PlanarMap& mask, double threshold) {
    check_mask(map, mask);
    PlanarMap out = map;
    const int c = map.channels();
    const auto m = mask.data();
    for (std::size_t p = 0; p < m.size(); ++p) {
        if (m[p] >= threshold) continue;
        for (int ch = 0; ch < c; ++ch) out.data()[p * c + ch] = 0.0;
    }
    return out;
}

double ssim(const PlanarMap& a, const PlanarMap& b, PlanarMap* grad_a) {
    if (!a.same_shape(b)) throw Error(ErrorCode::kShapeMismatch, "ssim: map shapes differ");
    const int w = a.width(), h = a.height(), nc = a.channels();
    if (w < kSsimWindow || h < kSsimWindow) {
        throw Error(ErrorCode::kInvalidArgument, "ssim: image smaller than the 11x11 window");
    }
    const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
    const std::size_t np = static_cast<std::size_t>(w) * h;
    const std::size_t no = static_cast<std::size_t>(ow) * oh;
    const double norm = 1.0 / (static_cast<double>(no) * nc);
    if (grad_a) *grad_a = PlanarMap(w, h, nc, 0.0);

    double total = 0.0;
    std::vector<double> pa(np), pb(np), paa(np), pbb(np), pab(np);
    for (int ch = 0; ch < nc; ++ch) {
        for (std::size_t p = 0; p < np; ++p) {
            const double va = a.data()[p * nc + ch], vb = b.data()[p * nc + ch];
            pa[p] = va;
            pb[p] = vb;
            paa[p] = va * va;
            pbb[p] = vb * vb;
            pab[p] = va * vb;
        }
        const auto ma = filter_valid(pa, w, h), mb = filter_valid(pb, w, h);
        const auto eaa = filter_valid(paa, w, h), ebb = filter_valid(pbb, w, h), eab = filter_valid(pab, w, h);

        std::vector<double> d_ma, d_eaa, d_eab;
        if (grad_a) {
            d_ma.resize(no);
            d_eaa.resize(no);
            d_eab.resize(no);
        }
        for (std::size_t i = 0; i < no; ++i) {
            const double mua = ma[i], mub = mb[i];
            const double saa = eaa[i] - mua * mua, sbb = ebb[i] - mub * mub, sab = eab[i] - mua * mub;
            const double a1 = 2.0 * mua * mub + kC1, a2 = 2.0 * sab + kC2;
            const double b1 = mua * mua + mub * mub + kC1, b2 = saa + sbb + kC2;
            const double s = a1 * a2 / (b1 * b2);
            total += s;
            if (grad_a) {
                d_eab[i] = norm * 2.0 * a1 / (b1 * b2);
                d_eaa[i] = -norm * s / b2;
                d_ma[i] = norm * ((2.0 * mub * a2 - 2.0 * mub * a1) / (b1 * b2) - s * 2.0 * mua / b1 + s * 2.0 * mua / b2);
            }
        }
        if (grad_a) {
            const auto g_ma = filter_valid_adjoint(d_ma, w, h);
            const auto g_eaa = filter_valid_adjoint(d_eaa, w, h);
            const auto g_eab = filter_valid_adjoint(d_eab, w, h);
            for (std::size_t p = 0; p < np; ++p) {
                grad_a->data()[p * nc + ch] = g_ma[p] + 2.0 * pa[p] * g_eaa[p] + pb[p] * g_eab[p];
            }
        }
    }
    return total * norm;
}

double smoothness_loss(std::span<const Vec3> positions, double lambda, std::vector<Vec3>* grad) {
    if (positions.size() < 3) throw Error(ErrorCode::kInvalidArgument, "smoothness_loss needs at least 3 positions");
    if (grad) grad->assign(positions.size(), Vec3::Zero());
    double sum = 0.0;
    for (std::size_t i = 1; i + 1 < positions.size(); ++i) {
        const Vec3 d = positions[i + 1] - 2.0 * positions[i] + positions[i - 1];
        const double n = d.norm();
        sum += n;
        if (grad && n > 0.0) {
            const Vec3 u = lambda * d / n;
            (*grad)[i + 1] += u;
            (*grad)[i] -= 2.0 * u;
            (*grad)[i - 1] += u;
        }
    }
    return lambda * sum;
}

}  // namespace smallgs
