#pragma once

#include "cdfuse/cdblock.hpp"
#include "cdfuse/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace cdfuse {

struct CostReport {
    int N = 2;
    int s = 3, C = 5, H = 256, W = 256;
    std::uint64_t m_am = 0;
    std::uint64_t m_joint = 0;
    double reduction = 0.0;
};

/// Multiplications of one full alternating sweep: (5+N)·N·s²·H·W·C².
inline std::uint64_t m_am(int N, int s, int C, int H, int W) {
    return static_cast<std::uint64_t>(5 + N) * N * s * s * H * W * C * C;
}

/// Multiplications of one joint block-structured step: 4·N·s²·H·W·C².
inline std::uint64_t m_joint(int N, int s, int C, int H, int W) {
    return static_cast<std::uint64_t>(4) * N * s * s * H * W * C * C;
}

/// Relative multiplication reduction of the joint update: (N+1)/(N+5).
inline double cost_reduction(int N) {
    return static_cast<double>(N + 1) / static_cast<double>(N + 5);
}

inline CostReport cost_report(int N, int s, int C, int H, int W) {
    CostReport r{N, s, C, H, W, m_am(N, s, C, H, W), m_joint(N, s, C, H, W), cost_reduction(N)};
    return r;
}

enum class UpdateMode { unified, alternating };

/// Runs the actual block implementation once on random data and returns the
/// instrumented multiplication count of the dictionary applications.
inline std::uint64_t count_block_mults(UpdateMode mode, int C, int s, int H, int W,
                                       std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    auto random_tensor = [&](std::vector<int> shape) {
        Tensor t(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
        return t;
    };
    if (mode == UpdateMode::unified) {
        CDBlockParams p = CDBlockParams::zeros(C, s);
        p.d_ux_f = random_tensor({C, C, s, s});
        p.d_uy_f = random_tensor({C, C, s, s});
        p.d_cx_f = random_tensor({C, C, s, s});
        p.d_cy_f = random_tensor({C, C, s, s});
        p.d_ux_a = random_tensor({C, C, s, s});
        p.d_uy_a = random_tensor({C, C, s, s});
        p.d_cx_a = random_tensor({C, C, s, s});
        p.d_cy_a = random_tensor({C, C, s, s});
        MultCounter ctr;
        cdblock_step(p, random_tensor({3 * C, H, W}), random_tensor({2 * C, H, W}), &ctr);
        return ctr.mults;
    }
    AlternatingParams p = AlternatingParams::zeros(C, s);
    p.d_ux_f = random_tensor({C, C, s, s});
    p.d_uy_f = random_tensor({C, C, s, s});
    p.d_cx_f = random_tensor({C, C, s, s});
    p.d_cy_f = random_tensor({C, C, s, s});
    p.d_ux_a = random_tensor({C, C, s, s});
    p.d_uy_a = random_tensor({C, C, s, s});
    p.d_cx_a = random_tensor({C, C, s, s});
    p.d_cy_a = random_tensor({C, C, s, s});
    return alternating_step(p, random_tensor({C, H, W}), random_tensor({C, H, W}),
                            random_tensor({C, H, W}), random_tensor({C, H, W}),
                            random_tensor({C, H, W}))
        .mults;
}

/// Worst-case iteration bound ⌈L·dist0²/(2ε)⌉ for the fixed-dictionary
/// prototype; an optimization-level reference, not a guarantee for the
/// trained network.
inline long long sufficient_iterations(double L, double dist0, double eps) {
    if (L <= 0.0 || eps <= 0.0) throw dimension_error("sufficient_iterations: L and eps must be positive");
    return static_cast<long long>(std::ceil(L * dist0 * dist0 / (2.0 * eps)));
}

inline std::string cost_report_text(const CostReport& r) {
    std::ostringstream os;
    os << "N          " << r.N << "\n"
       << "s          " << r.s << "\n"
       << "C          " << r.C << "\n"
       << "H x W      " << r.H << " x " << r.W << "\n"
       << "M_AM       " << r.m_am << "\n"
       << "M_Joint    " << r.m_joint << "\n"
       << "reduction  " << r.reduction * 100.0 << "%\n";
    return os.str();
}

inline std::string cost_report_csv(const CostReport& r) {
    std::ostringstream os;
    os << "n,s,c,h,w,m_am,m_joint,reduction\n"
       << r.N << "," << r.s << "," << r.C << "," << r.H << "," << r.W << "," << r.m_am << ","
       << r.m_joint << "," << r.reduction << "\n";
    return os.str();
}

} // namespace cdfuse
