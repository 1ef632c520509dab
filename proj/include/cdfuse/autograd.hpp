#pragma once

#include "cdfuse/hlif.hpp"
#include "cdfuse/network.hpp"
#include "cdfuse/tensor.hpp"

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace cdfuse {

/// Gradients mirror the parameter layout exactly.
using GradientSet = ModelParams;

struct TrainConfig {
    double learning_rate = 0.0005;
    int batch_size = 10;
    int epochs = 50;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    double tau = 0.1;
    int crop = 64;

    void validate() const {
        if (learning_rate <= 0.0) throw parameter_error("learning_rate must be positive");
        if (batch_size < 1) throw parameter_error("batch_size must be >= 1");
        if (epochs < 1) throw parameter_error("epochs must be >= 1");
    }
};

namespace autograd_detail {

// d/dv of soft_threshold and the threshold gradient, using the cached
// pre-threshold value. Subgradient at |v| == θ is 0.
inline void soft_threshold_backward(const Tensor& V, const Tensor& theta_raw, const Tensor& dW,
                                    Tensor& dV, Tensor& dtheta_raw) {
    const int C = V.dim(0);
    const std::size_t plane = static_cast<std::size_t>(V.dim(1)) * V.dim(2);
    dV = Tensor(V.shape());
    for (int c = 0; c < C; ++c) {
        const double traw = theta_raw[static_cast<std::size_t>(c)];
        const double th = std::abs(traw);
        const double tsign = traw > 0.0 ? 1.0 : (traw < 0.0 ? -1.0 : 0.0);
        double dth_eff = 0.0;
        for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) {
            const double v = V[i];
            if (std::abs(v) > th) {
                dV[i] = dW[i];
                dth_eff -= dW[i] * (v > 0.0 ? 1.0 : -1.0);
            }
        }
        dtheta_raw[static_cast<std::size_t>(c)] += dth_eff * tsign;
    }
}

inline void accumulate(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

} // namespace autograd_detail

/// Exact reverse-mode gradients of hlif_loss(fuse_luminance(p, x, y), x, y, τ)
/// with respect to every model parameter.
inline std::pair<LossReport, GradientSet> backward(const ModelParams& p, const Tensor& x,
                                                   const Tensor& y, double tau) {
    using namespace autograd_detail;
    const int C = p.config.C;
    const int s = p.config.s;
    const ForwardTrace tr = fuse_luminance_traced(p, x, y);
    const double n = static_cast<double>(tr.f.size());

    // Loss forward (weights depend only on the sources, not on parameters).
    LossReport report;
    report.weights = adaptive_weights(scharr_magnitude(x), scharr_magnitude(y), tau);
    const Tensor ref_g = add(hadamard(report.weights.zx, scharr_magnitude(x)),
                             hadamard(report.weights.zy, scharr_magnitude(y)));
    const Tensor ref_l =
        add(hadamard(report.weights.zx, x), hadamard(report.weights.zy, y));
    const Tensor ch = detail::conv3x3_replicate(tr.f, detail::kScharrH);
    const Tensor cv = detail::conv3x3_replicate(tr.f, detail::kScharrV);
    const Tensor grad_f = add(abs(ch), abs(cv));
    const Tensor r_h = sub(grad_f, ref_g);
    const Tensor e = sub(tr.f, ref_l);
    const double e_norm = l2_norm(e);
    report.hif = l1_sum(r_h) / n;
    report.lif = e_norm / std::sqrt(n);
    report.total = report.hif + report.lif;

    // d loss / d f
    const Tensor m_bar = scale(sign(r_h), 1.0 / n);
    Tensor df = add(detail::conv3x3_replicate_adjoint(hadamard(sign(ch), m_bar), detail::kScharrH),
                    detail::conv3x3_replicate_adjoint(hadamard(sign(cv), m_bar), detail::kScharrV));
    if (e_norm > 0.0) accumulate(df, scale(e, 1.0 / (e_norm * std::sqrt(n))));

    GradientSet g = GradientSet::zeros(p.config);

    // clamp: zero gradient outside [0,1]
    Tensor du = df;
    for (std::size_t i = 0; i < du.size(); ++i)
        if (tr.u[i] < 0.0 || tr.u[i] > 1.0) du[i] = 0.0;

    // reconstruction head
    Tensor dF = conv2d_transposed(du, p.proj);
    g.proj = conv2d_kernel_grad(tr.F, du, 1);
    Tensor dR = conv2d_transposed(dF, p.d_f2);
    g.d_f2 = conv2d_kernel_grad(tr.R, dF, 1);
    Tensor dZ = dR; // residual branch
    Tensor dW = conv2d_transposed(dR, p.d_f1);
    g.d_f1 = conv2d_kernel_grad(tr.W, dR, 1);

    // CDBlocks, last to first
    for (int t = p.config.T - 1; t >= 0; --t) {
        const CDBlockParams& b = p.blocks[static_cast<std::size_t>(t)];
        CDBlockParams& gb = g.blocks[static_cast<std::size_t>(t)];
        const Tensor& V = tr.V[static_cast<std::size_t>(t)];
        const Tensor& S = tr.S[static_cast<std::size_t>(t)];
        const Tensor& Wp = tr.W_prev[static_cast<std::size_t>(t)];

        Tensor dV;
        soft_threshold_backward(V, b.theta, dW, dV, gb.theta);

        // V = W_prev − dict_adjoint(S); S = dict_forward(W_prev) − Z
        Tensor dWp = dV;
        const Tensor dG = scale(dV, -1.0);

        const Tensor dG1 = slice_channels(dG, 0, C);
        const Tensor dG2 = slice_channels(dG, C, C);
        const Tensor dG3 = slice_channels(dG, 2 * C, C);
        const Tensor P = slice_channels(S, 0, C);
        const Tensor Q = slice_channels(S, C, C);
        accumulate(gb.d_ux_a, conv2d_kernel_grad(dG1, P, s));
        accumulate(gb.d_uy_a, conv2d_kernel_grad(dG2, Q, s));
        accumulate(gb.d_cx_a, conv2d_kernel_grad(dG3, P, s));
        accumulate(gb.d_cy_a, conv2d_kernel_grad(dG3, Q, s));
        const Tensor dP = add(conv2d(dG1, b.d_ux_a), conv2d(dG3, b.d_cx_a));
        const Tensor dQ = add(conv2d(dG2, b.d_uy_a), conv2d(dG3, b.d_cy_a));

        // dS feeds both dict_forward(W_prev) and −Z
        accumulate(dZ, scale(concat_channels(dP, dQ), -1.0));
        const Tensor zx = slice_channels(Wp, 0, C);
        const Tensor zy = slice_channels(Wp, C, C);
        const Tensor zc = slice_channels(Wp, 2 * C, C);
        accumulate(gb.d_ux_f, conv2d_kernel_grad(zx, dP, s));
        accumulate(gb.d_uy_f, conv2d_kernel_grad(zy, dQ, s));
        accumulate(gb.d_cx_f, conv2d_kernel_grad(zc, dP, s));
        accumulate(gb.d_cy_f, conv2d_kernel_grad(zc, dQ, s));
        const Tensor dzx = conv2d_transposed(dP, b.d_ux_f);
        const Tensor dzy = conv2d_transposed(dQ, b.d_uy_f);
        const Tensor dzc = add(conv2d_transposed(dP, b.d_cx_f), conv2d_transposed(dQ, b.d_cy_f));
        accumulate(dWp, concat_channels(concat_channels(dzx, dzy), dzc));

        dW = std::move(dWp);
    }
    // dW now corresponds to the constant W^(0) = 0 and is discarded.

    // feature expansion
    g.expand_x = conv2d_kernel_grad(x, slice_channels(dZ, 0, C), s);
    g.expand_y = conv2d_kernel_grad(y, slice_channels(dZ, C, C), s);

    return {report, std::move(g)};
}

struct AdamState {
    ModelParams m, v;
    long long step = 0;

    static AdamState zeros(const ModelConfig& cfg) {
        return AdamState{ModelParams::zeros(cfg), ModelParams::zeros(cfg), 0};
    }
};

/// Standard bias-corrected Adam update, in place.
inline void adam_step(ModelParams& params, const GradientSet& grads, AdamState& state,
                      const TrainConfig& cfg) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

    std::vector<Tensor*> pt, gt, mt, vt;
    params.for_each_tensor([&](Tensor& t) { pt.push_back(&t); });
    const_cast<GradientSet&>(grads).for_each_tensor([&](Tensor& t) { gt.push_back(&t); });
    state.m.for_each_tensor([&](Tensor& t) { mt.push_back(&t); });
    state.v.for_each_tensor([&](Tensor& t) { vt.push_back(&t); });

    for (std::size_t k = 0; k < pt.size(); ++k) {
        Tensor& w = *pt[k];
        const Tensor& gr = *gt[k];
        Tensor& m = *mt[k];
        Tensor& v = *vt[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gr[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gr[i] * gr[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
}

/// Synthetic exposure pair: x = base^γ_over (brightened), y = base^γ_under
/// (darkened), with optional additive Gaussian noise.
inline std::pair<Tensor, Tensor> synth_exposure_pair(const Tensor& base, double gamma_under,
                                                     double gamma_over, std::uint64_t seed,
                                                     double noise_sigma = 0.005) {
    Tensor x = base, y = base;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (std::size_t i = 0; i < base.size(); ++i) {
        x[i] = std::pow(base[i], gamma_over);
        y[i] = std::pow(base[i], gamma_under);
        if (noise_sigma > 0.0) {
            x[i] = std::clamp(x[i] + noise(rng), 0.0, 1.0);
            y[i] = std::clamp(y[i] + noise(rng), 0.0, 1.0);
        }
    }
    return {std::move(x), std::move(y)};
}

struct EpochStats {
    int epoch = 0;
    double mean_hif = 0.0;
    double mean_lif = 0.0;
    double mean_total = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochStats> history;
    long long adam_steps = 0;
};

namespace autograd_detail {

inline std::pair<Tensor, Tensor> random_crop(const Tensor& x, const Tensor& y, int crop,
                                             std::mt19937_64& rng) {
    const int H = x.dim(1), W = x.dim(2);
    if (crop <= 0 || (H <= crop && W <= crop)) return {x, y};
    const int ch = std::min(crop, H), cw = std::min(crop, W);
    std::uniform_int_distribution<int> di(0, H - ch), dj(0, W - cw);
    const int i0 = di(rng), j0 = dj(rng);
    Tensor cx({1, ch, cw}), cy({1, ch, cw});
    for (int i = 0; i < ch; ++i)
        for (int j = 0; j < cw; ++j) {
            cx.at(0, i, j) = x.at(0, i0 + i, j0 + j);
            cy.at(0, i, j) = y.at(0, i0 + i, j0 + j);
        }
    return {std::move(cx), std::move(cy)};
}

} // namespace autograd_detail

/// Trains on luminance pairs with seeded shuffling, random crops and Adam.
/// Gradient accumulation is a fixed-order mean over the batch.
inline TrainResult train(const ModelConfig& mcfg, const TrainConfig& cfg,
                         const std::vector<std::pair<Tensor, Tensor>>& pairs,
                         ModelParams* initial = nullptr) {
    cfg.validate();
    if (pairs.empty()) throw parameter_error("train: dataset is empty");
    TrainResult result;
    result.params = initial ? *initial : init_model(mcfg, cfg.seed);
    AdamState state = AdamState::zeros(mcfg);
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        EpochStats stats;
        stats.epoch = epoch;
        long long samples = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg.batch_size)) {
            GradientSet acc = GradientSet::zeros(mcfg);
            int in_batch = 0;
            for (std::size_t b = pos;
                 b < std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size)); ++b) {
                const auto& pr = pairs[order[b]];
                auto [cx, cy] = autograd_detail::random_crop(pr.first, pr.second, cfg.crop, rng);
                auto [report, grad] = backward(result.params, cx, cy, cfg.tau);
                std::vector<Tensor*> at, gt;
                acc.for_each_tensor([&](Tensor& t) { at.push_back(&t); });
                grad.for_each_tensor([&](Tensor& t) { gt.push_back(&t); });
                for (std::size_t k = 0; k < at.size(); ++k)
                    autograd_detail::accumulate(*at[k], *gt[k]);
                stats.mean_hif += report.hif;
                stats.mean_lif += report.lif;
                stats.mean_total += report.total;
                ++in_batch;
                ++samples;
            }
            acc.for_each_tensor([&](Tensor& t) {
                for (std::size_t i = 0; i < t.size(); ++i) t[i] /= in_batch;
            });
            adam_step(result.params, acc, state, cfg);
            ++result.adam_steps;
        }
        stats.mean_hif /= static_cast<double>(samples);
        stats.mean_lif /= static_cast<double>(samples);
        stats.mean_total /= static_cast<double>(samples);
        result.history.push_back(stats);
    }
    return result;
}

} // namespace cdfuse
