#pragma once

#include "cdfuse/tensor.hpp"

#include <stdexcept>

namespace cdfuse {

struct parameter_error : std::runtime_error {
    explicit parameter_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct AdaptiveWeights {
    Tensor zx, zy; // each 1×H×W, zx + zy == 1 by construction
};

struct LossReport {
    double hif = 0.0;
    double lif = 0.0;
    double total = 0.0;
    AdaptiveWeights weights;
};

namespace detail {

// clang-format off
constexpr double kScharrH[3][3] = {{ 3/16.0, 0.0,  -3/16.0},
                                   {10/16.0, 0.0, -10/16.0},
                                   { 3/16.0, 0.0,  -3/16.0}};
constexpr double kScharrV[3][3] = {{ 3/16.0,  10/16.0,  3/16.0},
                                   { 0.0,      0.0,     0.0   },
                                   {-3/16.0, -10/16.0, -3/16.0}};
// clang-format on

// 3×3 cross-correlation with replicate (edge-clamp) padding so flat regions
// stay flat at the image border.
inline Tensor conv3x3_replicate(const Tensor& img, const double (&k)[3][3]) {
    const int H = img.dim(1), W = img.dim(2);
    Tensor out({1, H, W});
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            double s = 0.0;
            for (int u = 0; u < 3; ++u)
                for (int v = 0; v < 3; ++v) {
                    const int ii = std::clamp(i + u - 1, 0, H - 1);
                    const int jj = std::clamp(j + v - 1, 0, W - 1);
                    s += k[u][v] * img.at(0, ii, jj);
                }
            out.at(0, i, j) = s;
        }
    return out;
}

/// Exact adjoint of conv3x3_replicate (scatter form).
inline Tensor conv3x3_replicate_adjoint(const Tensor& bar, const double (&k)[3][3]) {
    const int H = bar.dim(1), W = bar.dim(2);
    Tensor out({1, H, W});
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            const double b = bar.at(0, i, j);
            if (b == 0.0) continue;
            for (int u = 0; u < 3; ++u)
                for (int v = 0; v < 3; ++v) {
                    const int ii = std::clamp(i + u - 1, 0, H - 1);
                    const int jj = std::clamp(j + v - 1, 0, W - 1);
                    out.at(0, ii, jj) += k[u][v] * b;
                }
        }
    return out;
}

} // namespace detail

/// |G_h| + |G_v| with the normalized 3×3 Scharr pair, replicate-padded.
inline Tensor scharr_magnitude(const Tensor& img) {
    if (img.rank() != 3 || img.dim(0) != 1)
        throw dimension_error("scharr_magnitude: expects 1×H×W");
    return add(abs(detail::conv3x3_replicate(img, detail::kScharrH)),
               abs(detail::conv3x3_replicate(img, detail::kScharrV)));
}

/// Sigmoid mapping of gradients followed by spatial normalization.
inline AdaptiveWeights adaptive_weights(const Tensor& grad_x, const Tensor& grad_y, double tau) {
    if (tau <= 0.0) throw parameter_error("adaptive_weights: tau must be positive");
    detail::require_same_shape(grad_x, grad_y, "adaptive_weights");
    AdaptiveWeights w{grad_x, grad_x};
    for (std::size_t i = 0; i < grad_x.size(); ++i) {
        const double wx = sigmoid(grad_x[i] / tau);
        const double wy = sigmoid(grad_y[i] / tau);
        w.zx[i] = wx / (wx + wy);
        w.zy[i] = 1.0 - w.zx[i];
    }
    return w;
}

/// Gradient-domain l1 fidelity against the weighted gradient reference, per pixel.
inline double hif_loss(const Tensor& f, const Tensor& x, const Tensor& y,
                       const AdaptiveWeights& w) {
    const Tensor ref = add(hadamard(w.zx, scharr_magnitude(x)), hadamard(w.zy, scharr_magnitude(y)));
    return l1_sum(sub(scharr_magnitude(f), ref)) / static_cast<double>(f.size());
}

/// Image-domain l2 fidelity against the weighted luminance reference, RMS-normalized.
inline double lif_loss(const Tensor& f, const Tensor& x, const Tensor& y,
                       const AdaptiveWeights& w) {
    const Tensor ref = add(hadamard(w.zx, x), hadamard(w.zy, y));
    return l2_norm(sub(f, ref)) / std::sqrt(static_cast<double>(f.size()));
}

inline LossReport hlif_loss(const Tensor& f, const Tensor& x, const Tensor& y, double tau) {
    LossReport r;
    r.weights = adaptive_weights(scharr_magnitude(x), scharr_magnitude(y), tau);
    r.hif = hif_loss(f, x, y, r.weights);
    r.lif = lif_loss(f, x, y, r.weights);
    r.total = r.hif + r.lif; // λ = 1.0
    return r;
}

} // namespace cdfuse
