#pragma once

#include "cdfuse/tensor.hpp"

#include <array>
#include <cstdint>
#include <tuple>

namespace cdfuse {

/// Scalar-multiplication accumulator for the cost instrumentation.
/// One multiplication per kernel tap per output element, padding taps included.
struct MultCounter {
    std::uint64_t mults = 0;

    void count_conv(const Tensor& kernel, int H, int W) {
        mults += static_cast<std::uint64_t>(kernel.dim(0)) * kernel.dim(1) * kernel.dim(2) *
                 kernel.dim(3) * H * W;
    }
};

namespace detail {

inline Tensor counted_conv(const Tensor& in, const Tensor& k, MultCounter* ctr) {
    if (ctr) ctr->count_conv(k, in.dim(1), in.dim(2));
    return conv2d(in, k);
}

inline Tensor counted_conv_t(const Tensor& in, const Tensor& k, MultCounter* ctr) {
    if (ctr) ctr->count_conv(k, in.dim(1), in.dim(2));
    return conv2d_transposed(in, k);
}

} // namespace detail

/// One CDBlock's learnable state: four forward and four adjoint kernel groups
/// plus per-channel thresholds (stored unconstrained, |.| applied at use).
struct CDBlockParams {
    Tensor d_ux_f, d_uy_f, d_cx_f, d_cy_f; // each C×C×s×s
    Tensor d_ux_a, d_uy_a, d_cx_a, d_cy_a; // each C×C×s×s
    Tensor theta;                          // 3C

    static CDBlockParams zeros(int C, int s) {
        CDBlockParams p;
        const std::vector<int> ks{C, C, s, s};
        p.d_ux_f = Tensor(ks);
        p.d_uy_f = Tensor(ks);
        p.d_cx_f = Tensor(ks);
        p.d_cy_f = Tensor(ks);
        p.d_ux_a = Tensor(ks);
        p.d_uy_a = Tensor(ks);
        p.d_cx_a = Tensor(ks);
        p.d_cy_a = Tensor(ks);
        p.theta = Tensor({3 * C});
        return p;
    }

    int channels() const { return d_ux_f.dim(0); }
    int kernel_size() const { return d_ux_f.dim(2); }
};

/// sign(v)·max(|v|−θ_c, 0) with one threshold per channel.
inline Tensor soft_threshold(const Tensor& v, const Tensor& theta) {
    if (theta.dim(0) != v.dim(0))
        throw dimension_error("soft_threshold: theta length != channel count");
    Tensor out = v;
    const std::size_t plane = static_cast<std::size_t>(v.dim(1)) * v.dim(2);
    for (int c = 0; c < v.dim(0); ++c) {
        const double th = std::abs(theta[static_cast<std::size_t>(c)]);
        double* p = out.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            const double x = p[i];
            const double m = std::abs(x) - th;
            p[i] = m > 0.0 ? (x > 0.0 ? m : -m) : 0.0;
        }
    }
    return out;
}

/// d_D ⊗ W: the block-structured dictionary application.
/// W = [Z_X; Z_Y; Z_C] (3C channels) -> [P; Q] (2C channels).
/// The zero blocks of D are realized by omission.
inline Tensor dict_forward(const CDBlockParams& p, const Tensor& W, MultCounter* ctr = nullptr) {
    const int C = p.channels();
    if (W.dim(0) != 3 * C)
        throw dimension_error("dict_forward: W must have 3C channels");
    const Tensor zx = slice_channels(W, 0, C);
    const Tensor zy = slice_channels(W, C, C);
    const Tensor zc = slice_channels(W, 2 * C, C);
    Tensor top = add(detail::counted_conv(zx, p.d_ux_f, ctr), detail::counted_conv(zc, p.d_cx_f, ctr));
    Tensor bot = add(detail::counted_conv(zy, p.d_uy_f, ctr), detail::counted_conv(zc, p.d_cy_f, ctr));
    return concat_channels(top, bot);
}

/// d_U ⊗ᵀ S: the block-structured adjoint application.
/// S = [P; Q] (2C channels) -> [·; ·; ·] (3C channels).
inline Tensor dict_adjoint(const CDBlockParams& p, const Tensor& S, MultCounter* ctr = nullptr) {
    const int C = p.channels();
    if (S.dim(0) != 2 * C)
        throw dimension_error("dict_adjoint: S must have 2C channels");
    const Tensor P = slice_channels(S, 0, C);
    const Tensor Q = slice_channels(S, C, C);
    Tensor sx = detail::counted_conv_t(P, p.d_ux_a, ctr);
    Tensor sy = detail::counted_conv_t(Q, p.d_uy_a, ctr);
    Tensor sc = add(detail::counted_conv_t(P, p.d_cx_a, ctr), detail::counted_conv_t(Q, p.d_cy_a, ctr));
    return concat_channels(concat_channels(sx, sy), sc);
}

/// One joint LISTA step over the combined representation:
/// W' = S_θ(W − d_U ⊗ᵀ (d_D ⊗ W − Z)).
inline Tensor cdblock_step(const CDBlockParams& p, const Tensor& W_prev, const Tensor& Z,
                           MultCounter* ctr = nullptr) {
    const Tensor S = sub(dict_forward(p, W_prev, ctr), Z);
    const Tensor G = dict_adjoint(p, S, ctr);
    return soft_threshold(sub(W_prev, G), p.theta);
}

/// Parameters of the alternating-update ablation baseline: same kernel groups
/// as a CDBlock but each component carries its own thresholds.
struct AlternatingParams {
    Tensor d_ux_f, d_uy_f, d_cx_f, d_cy_f;
    Tensor d_ux_a, d_uy_a, d_cx_a, d_cy_a;
    Tensor theta_x, theta_y, theta_c; // each C

    static AlternatingParams zeros(int C, int s) {
        AlternatingParams p;
        const std::vector<int> ks{C, C, s, s};
        p.d_ux_f = Tensor(ks);
        p.d_uy_f = Tensor(ks);
        p.d_cx_f = Tensor(ks);
        p.d_cy_f = Tensor(ks);
        p.d_ux_a = Tensor(ks);
        p.d_uy_a = Tensor(ks);
        p.d_cx_a = Tensor(ks);
        p.d_cy_a = Tensor(ks);
        p.theta_x = Tensor({C});
        p.theta_y = Tensor({C});
        p.theta_c = Tensor({C});
        return p;
    }

    int channels() const { return d_ux_f.dim(0); }
};

struct AlternatingResult {
    Tensor zx, zy, zc;
    std::uint64_t mults = 0;
};

/// One cyclic sweep of the alternating baseline. The source updates split the
/// adjoint application over the residual and coupling terms; by linearity this
/// equals the single-application form, but it reproduces the baseline's
/// four-multiplication cost per source update.
inline AlternatingResult alternating_step(const AlternatingParams& p, const Tensor& zx,
                                          const Tensor& zy, const Tensor& zc, const Tensor& X,
                                          const Tensor& Y) {
    const int C = p.channels();
    if (zx.dim(0) != C || zy.dim(0) != C || zc.dim(0) != C || X.dim(0) != C || Y.dim(0) != C)
        throw dimension_error("alternating_step: all components must have C channels");
    MultCounter ctr;

    // Z_X' = S_θ(Z_X − d_UX_a ⊗ᵀ (d_UX_f ⊗ Z_X + d_CX_f ⊗ Z_C − X))
    Tensor gx = add(detail::counted_conv_t(sub(detail::counted_conv(zx, p.d_ux_f, &ctr), X),
                                           p.d_ux_a, &ctr),
                    detail::counted_conv_t(detail::counted_conv(zc, p.d_cx_f, &ctr), p.d_ux_a, &ctr));
    Tensor zx1 = soft_threshold(sub(zx, gx), p.theta_x);

    Tensor gy = add(detail::counted_conv_t(sub(detail::counted_conv(zy, p.d_uy_f, &ctr), Y),
                                           p.d_uy_a, &ctr),
                    detail::counted_conv_t(detail::counted_conv(zc, p.d_cy_f, &ctr), p.d_uy_a, &ctr));
    Tensor zy1 = soft_threshold(sub(zy, gy), p.theta_y);

    // Common update sees the refreshed source components.
    Tensor rx = sub(add(detail::counted_conv(zx1, p.d_ux_f, &ctr),
                        detail::counted_conv(zc, p.d_cx_f, &ctr)),
                    X);
    Tensor ry = sub(add(detail::counted_conv(zy1, p.d_uy_f, &ctr),
                        detail::counted_conv(zc, p.d_cy_f, &ctr)),
                    Y);
    Tensor gc = add(detail::counted_conv_t(rx, p.d_cx_a, &ctr),
                    detail::counted_conv_t(ry, p.d_cy_a, &ctr));
    Tensor zc1 = soft_threshold(sub(zc, gc), p.theta_c);

    return AlternatingResult{std::move(zx1), std::move(zy1), std::move(zc1), ctr.mults};
}

} // namespace cdfuse
