#pragma once

#include "cdfuse/tensor.hpp"

#include <limits>

namespace cdfuse {

struct MetricReport {
    double mse = 0.0;
    double psnr = 0.0; // dB; +inf when the fused image matches both sources exactly
    double ssim = 0.0;
    double cc = 0.0;
    double nabf = 0.0;
};

namespace metrics_detail {

constexpr double kRange = 255.0;

inline double mse_pair(const Tensor& f, const Tensor& s) {
    double acc = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double d = (f[i] - s[i]) * kRange;
        acc += d * d;
    }
    return acc / static_cast<double>(f.size());
}

inline double psnr_of_mse(double mse) {
    if (mse <= 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(kRange * kRange / mse);
}

inline bool is_constant(const Tensor& t) {
    for (std::size_t i = 1; i < t.size(); ++i)
        if (t[i] != t[0]) return false;
    return true;
}

inline double pearson(const Tensor& a, const Tensor& b) {
    // detect constant planes exactly; mean subtraction alone can leave
    // O(eps) variance from rounding
    if (is_constant(a) || is_constant(b)) return 0.0;
    const double ma = mean(a), mb = mean(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0; // constant input
    return sab / std::sqrt(saa * sbb);
}

// Single-scale SSIM, 11×11 Gaussian window σ=1.5, valid positions only.
inline double ssim_pair(const Tensor& f, const Tensor& s) {
    const int H = f.dim(1), W = f.dim(2);
    constexpr int win = 11, r = win / 2;
    constexpr double c1 = (0.01 * kRange) * (0.01 * kRange);
    constexpr double c2 = (0.03 * kRange) * (0.03 * kRange);
    if (H < win || W < win) throw dimension_error("ssim: image smaller than the 11×11 window");

    double g[win][win];
    double gsum = 0.0;
    for (int u = 0; u < win; ++u)
        for (int v = 0; v < win; ++v) {
            const double du = u - r, dv = v - r;
            g[u][v] = std::exp(-(du * du + dv * dv) / (2.0 * 1.5 * 1.5));
            gsum += g[u][v];
        }
    for (int u = 0; u < win; ++u)
        for (int v = 0; v < win; ++v) g[u][v] /= gsum;

    double acc = 0.0;
    long long count = 0;
    for (int i = r; i < H - r; ++i)
        for (int j = r; j < W - r; ++j) {
            double mu_f = 0.0, mu_s = 0.0;
            for (int u = 0; u < win; ++u)
                for (int v = 0; v < win; ++v) {
                    mu_f += g[u][v] * f.at(0, i + u - r, j + v - r) * kRange;
                    mu_s += g[u][v] * s.at(0, i + u - r, j + v - r) * kRange;
                }
            double var_f = 0.0, var_s = 0.0, cov = 0.0;
            for (int u = 0; u < win; ++u)
                for (int v = 0; v < win; ++v) {
                    const double df = f.at(0, i + u - r, j + v - r) * kRange - mu_f;
                    const double ds = s.at(0, i + u - r, j + v - r) * kRange - mu_s;
                    var_f += g[u][v] * df * df;
                    var_s += g[u][v] * ds * ds;
                    cov += g[u][v] * df * ds;
                }
            acc += ((2.0 * mu_f * mu_s + c1) * (2.0 * cov + c2)) /
                   ((mu_f * mu_f + mu_s * mu_s + c1) * (var_f + var_s + c2));
            ++count;
        }
    return acc / static_cast<double>(count);
}

struct EdgeField {
    Tensor strength, angle; // each 1×H×W
};

inline EdgeField sobel_edges(const Tensor& img) {
    static const Tensor kh({1, 1, 3, 3}, {-1, 0, 1, -2, 0, 2, -1, 0, 1});
    static const Tensor kv({1, 1, 3, 3}, {-1, -2, -1, 0, 0, 0, 1, 2, 1});
    const Tensor gx = conv2d(img, kh);
    const Tensor gy = conv2d(img, kv);
    EdgeField e{gx, gx};
    for (std::size_t i = 0; i < gx.size(); ++i) {
        e.strength[i] = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);
        e.angle[i] = std::atan2(gy[i], gx[i] == 0.0 && gy[i] == 0.0 ? 1.0 : gx[i]);
        if (e.angle[i] > M_PI / 2) e.angle[i] -= M_PI;
        if (e.angle[i] < -M_PI / 2) e.angle[i] += M_PI;
    }
    return e;
}

// Xydeas–Petrovic perceptual preservation score Q between a source edge field
// and the fused edge field. Constants: Γg=0.9994, κg=-15, σg=0.5 (strength),
// Γα=0.9879, κα=-22, σα=0.8 (orientation).
inline double edge_preservation(double gs, double as, double gf, double af) {
    double G;
    if (gs == gf) {
        G = gs == 0.0 ? 0.0 : 1.0;
    } else if (gs > gf) {
        G = gf / gs;
    } else {
        G = gs / gf;
    }
    const double A = 1.0 - std::abs(as - af) / (M_PI / 2.0);
    const double qg = 0.9994 / (1.0 + std::exp(-15.0 * (G - 0.5)));
    const double qa = 0.9879 / (1.0 + std::exp(-22.0 * (A - 0.8)));
    return qg * qa;
}

} // namespace metrics_detail

/// Per-source MSE on the [0,255] scale, averaged over the two sources.
inline double mse(const Tensor& f, const Tensor& a, const Tensor& b) {
    return 0.5 * (metrics_detail::mse_pair(f, a) + metrics_detail::mse_pair(f, b));
}

/// Average over sources of 10·log10(255²/MSE_source). An exact match gives an
/// infinite per-source PSNR, which is excluded when the other source is finite.
inline double psnr(const Tensor& f, const Tensor& a, const Tensor& b) {
    const double pa = metrics_detail::psnr_of_mse(metrics_detail::mse_pair(f, a));
    const double pb = metrics_detail::psnr_of_mse(metrics_detail::mse_pair(f, b));
    const bool fa = std::isfinite(pa), fb = std::isfinite(pb);
    if (fa && fb) return 0.5 * (pa + pb);
    if (fa) return pa;
    if (fb) return pb;
    return std::numeric_limits<double>::infinity();
}

inline double ssim(const Tensor& f, const Tensor& a, const Tensor& b) {
    return 0.5 * (metrics_detail::ssim_pair(f, a) + metrics_detail::ssim_pair(f, b));
}

inline double cc(const Tensor& f, const Tensor& a, const Tensor& b) {
    return 0.5 * (metrics_detail::pearson(f, a) + metrics_detail::pearson(f, b));
}

/// Modified fusion-artifact measure: edge energy in the fused image exceeding
/// both sources, weighted by how poorly it is explained by either.
inline double nabf(const Tensor& f, const Tensor& a, const Tensor& b) {
    using namespace metrics_detail;
    const EdgeField ef = sobel_edges(f);
    const EdgeField ea = sobel_edges(a);
    const EdgeField eb = sobel_edges(b);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < ef.strength.size(); ++i) {
        const double wa = ea.strength[i], wb = eb.strength[i];
        den += wa + wb;
        if (ef.strength[i] > wa && ef.strength[i] > wb) {
            const double qaf = edge_preservation(wa, ea.angle[i], ef.strength[i], ef.angle[i]);
            const double qbf = edge_preservation(wb, eb.angle[i], ef.strength[i], ef.angle[i]);
            num += (1.0 - qaf) * wa + (1.0 - qbf) * wb;
        }
    }
    return den <= 0.0 ? 0.0 : num / den;
}

inline MetricReport evaluate_fusion(const Tensor& f, const Tensor& a, const Tensor& b) {
    MetricReport r;
    r.mse = mse(f, a, b);
    r.psnr = psnr(f, a, b);
    r.ssim = ssim(f, a, b);
    r.cc = cc(f, a, b);
    r.nabf = nabf(f, a, b);
    return r;
}

} // namespace cdfuse
