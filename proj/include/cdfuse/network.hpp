#pragma once

#include "cdfuse/cdblock.hpp"
#include "cdfuse/tensor.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace cdfuse {

struct ModelConfig {
    int T = 3; // CDBlock count
    int C = 5; // channel count
    int s = 3; // dictionary kernel size

    void validate() const {
        if (T < 1 || C < 1 || s < 1 || s % 2 == 0)
            throw dimension_error("ModelConfig: need T>=1, C>=1, odd s>=1");
    }
};

struct ModelParams {
    ModelConfig config;
    Tensor expand_x, expand_y;        // C×1×s×s
    std::vector<CDBlockParams> blocks; // T entries
    Tensor d_f1;                      // 2C×3C×1×1
    Tensor d_f2;                      // C×2C×1×1
    Tensor proj;                      // 1×C×1×1

    static ModelParams zeros(const ModelConfig& cfg) {
        cfg.validate();
        ModelParams p;
        p.config = cfg;
        p.expand_x = Tensor({cfg.C, 1, cfg.s, cfg.s});
        p.expand_y = Tensor({cfg.C, 1, cfg.s, cfg.s});
        for (int t = 0; t < cfg.T; ++t) p.blocks.push_back(CDBlockParams::zeros(cfg.C, cfg.s));
        p.d_f1 = Tensor({2 * cfg.C, 3 * cfg.C, 1, 1});
        p.d_f2 = Tensor({cfg.C, 2 * cfg.C, 1, 1});
        p.proj = Tensor({1, cfg.C, 1, 1});
        return p;
    }

    /// Visit every parameter tensor in the fixed declaration order.
    template <class F>
    void for_each_tensor(F&& f) {
        f(expand_x);
        f(expand_y);
        for (auto& b : blocks) {
            f(b.d_ux_f);
            f(b.d_uy_f);
            f(b.d_cx_f);
            f(b.d_cy_f);
            f(b.d_ux_a);
            f(b.d_uy_a);
            f(b.d_cx_a);
            f(b.d_cy_a);
            f(b.theta);
        }
        f(d_f1);
        f(d_f2);
        f(proj);
    }

    template <class F>
    void for_each_tensor(F&& f) const {
        const_cast<ModelParams*>(this)->for_each_tensor([&](Tensor& t) { f(static_cast<const Tensor&>(t)); });
    }
};

// Pure closed form; accepts degenerate T = 0 (expansion + head only).
inline long long parameter_count(const ModelConfig& cfg) {
    const long long C = cfg.C, s = cfg.s, T = cfg.T;
    return 2 * C * s * s + T * (8 * C * C * s * s + 3 * C) + 6 * C * C + 2 * C * C + C;
}

/// Kernels uniform in [−a, a] with a = 1/(C·s²); thresholds at 0.01.
inline ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams p = ModelParams::zeros(cfg);
    std::mt19937_64 rng(seed);
    const double a = 1.0 / (cfg.C * cfg.s * cfg.s);
    std::uniform_real_distribution<double> dist(-a, a);
    p.for_each_tensor([&](Tensor& t) {
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    });
    for (auto& b : p.blocks)
        for (std::size_t i = 0; i < b.theta.size(); ++i) b.theta[i] = 0.01;
    return p;
}

/// Feature expansion: Z = [expand_x ⊗ x ; expand_y ⊗ y], 2C channels.
inline Tensor expand(const ModelParams& p, const Tensor& x, const Tensor& y) {
    if (x.dim(1) != y.dim(1) || x.dim(2) != y.dim(2))
        throw dimension_error("expand: source spatial extents differ");
    return concat_channels(conv2d(x, p.expand_x), conv2d(y, p.expand_y));
}

/// Intermediate activations cached for the backward pass.
struct ForwardTrace {
    Tensor Z;                    // 2C×H×W expanded features
    std::vector<Tensor> W_prev;  // per block: input representation (W_prev[0] = 0)
    std::vector<Tensor> S;       // per block: d_D ⊗ W_prev − Z
    std::vector<Tensor> V;       // per block: pre-threshold value
    Tensor W;                    // final representation, 3C×H×W
    Tensor R;                    // d_F1 ⊗ W + Z
    Tensor F;                    // d_F2 ⊗ R
    Tensor u;                    // proj ⊗ F, pre-clamp
    Tensor f;                    // clamp(u, 0, 1)
};

inline ForwardTrace fuse_luminance_traced(const ModelParams& p, const Tensor& x, const Tensor& y,
                                          MultCounter* ctr = nullptr) {
    const int C = p.config.C;
    ForwardTrace tr;
    tr.Z = expand(p, x, y);
    Tensor W({3 * C, x.dim(1), x.dim(2)});
    for (const auto& b : p.blocks) {
        tr.W_prev.push_back(W);
        Tensor S = sub(dict_forward(b, W, ctr), tr.Z);
        Tensor G = dict_adjoint(b, S, ctr);
        Tensor V = sub(W, G);
        W = soft_threshold(V, b.theta);
        tr.S.push_back(std::move(S));
        tr.V.push_back(std::move(V));
    }
    tr.W = W;
    tr.R = add(conv2d(W, p.d_f1), tr.Z);
    tr.F = conv2d(tr.R, p.d_f2);
    tr.u = conv2d(tr.F, p.proj);
    tr.f = clamp01(tr.u);
    return tr;
}

/// End-to-end luminance fusion: x, y ∈ [0,1]^{1×H×W} -> f ∈ [0,1]^{1×H×W}.
inline Tensor fuse_luminance(const ModelParams& p, const Tensor& x, const Tensor& y,
                             MultCounter* ctr = nullptr) {
    return fuse_luminance_traced(p, x, y, ctr).f;
}

/// Alternating-update baseline: same expansion and head as fuse_luminance,
/// but each block runs one cyclic per-component sweep instead of a joint step.
inline Tensor fuse_alternating(const ModelParams& p, const Tensor& x, const Tensor& y,
                               MultCounter* ctr = nullptr) {
    const int C = p.config.C;
    const Tensor Z = expand(p, x, y);
    const Tensor X = slice_channels(Z, 0, C);
    const Tensor Y = slice_channels(Z, C, C);
    Tensor zx({C, x.dim(1), x.dim(2)}), zy = zx, zc = zx;
    for (const auto& b : p.blocks) {
        AlternatingParams ap;
        ap.d_ux_f = b.d_ux_f;
        ap.d_uy_f = b.d_uy_f;
        ap.d_cx_f = b.d_cx_f;
        ap.d_cy_f = b.d_cy_f;
        ap.d_ux_a = b.d_ux_a;
        ap.d_uy_a = b.d_uy_a;
        ap.d_cx_a = b.d_cx_a;
        ap.d_cy_a = b.d_cy_a;
        ap.theta_x = Tensor({C});
        ap.theta_y = Tensor({C});
        ap.theta_c = Tensor({C});
        for (int c = 0; c < C; ++c) {
            ap.theta_x[c] = b.theta[c];
            ap.theta_y[c] = b.theta[C + c];
            ap.theta_c[c] = b.theta[2 * C + c];
        }
        AlternatingResult r = alternating_step(ap, zx, zy, zc, X, Y);
        if (ctr) ctr->mults += r.mults;
        zx = std::move(r.zx);
        zy = std::move(r.zy);
        zc = std::move(r.zc);
    }
    const Tensor W = concat_channels(concat_channels(zx, zy), zc);
    const Tensor F = conv2d(add(conv2d(W, p.d_f1), Z), p.d_f2);
    return clamp01(conv2d(F, p.proj));
}

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is, std::size_t& offset) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw format_error("model file truncated at byte " + std::to_string(offset));
    offset += 4;
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, 4);
    write_u32(os, bits);
}

inline float read_f32(std::istream& is, std::size_t& offset) {
    std::uint32_t bits = read_u32(is, offset);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

} // namespace detail

/// ".cdn" format: magic "CDN1", then T, C, s as u32 LE, then every parameter
/// tensor as f32 LE in declaration order.
inline void save_model(const ModelParams& p, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open for writing: " + path);
    os.write("CDN1", 4);
    detail::write_u32(os, static_cast<std::uint32_t>(p.config.T));
    detail::write_u32(os, static_cast<std::uint32_t>(p.config.C));
    detail::write_u32(os, static_cast<std::uint32_t>(p.config.s));
    p.for_each_tensor([&](const Tensor& t) {
        for (std::size_t i = 0; i < t.size(); ++i)
            detail::write_f32(os, static_cast<float>(t[i]));
    });
    if (!os) throw io_error("write failed: " + path);
}

inline ModelParams load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open: " + path);
    char magic[4];
    std::size_t offset = 0;
    if (!is.read(magic, 4) || std::string(magic, 4) != "CDN1")
        throw format_error("bad magic at byte 0: expected \"CDN1\"");
    offset = 4;
    ModelConfig cfg;
    cfg.T = static_cast<int>(detail::read_u32(is, offset));
    cfg.C = static_cast<int>(detail::read_u32(is, offset));
    cfg.s = static_cast<int>(detail::read_u32(is, offset));
    if (cfg.T < 1 || cfg.C < 1 || cfg.s < 1 || cfg.s % 2 == 0)
        throw format_error("invalid config in header at byte 4");
    ModelParams p = ModelParams::zeros(cfg);
    p.for_each_tensor([&](Tensor& t) {
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = detail::read_f32(is, offset);
    });
    return p;
}

} // namespace cdfuse
