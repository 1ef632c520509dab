#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cdfuse/cdblock.hpp"
#include "oracles.hpp"

#include <random>

using namespace cdfuse;

namespace {

// 1×1-kernel block params with random forward kernels; adjoint kernels tied
// (same tensor, which under conv2d_transposed applies the exact transpose).
CDBlockParams random_block_1x1(int C, std::mt19937_64& rng, bool tied, double adjoint_scale = 1.0) {
    CDBlockParams p = CDBlockParams::zeros(C, 1);
    p.d_ux_f = oracles::random_tensor({C, C, 1, 1}, rng);
    p.d_uy_f = oracles::random_tensor({C, C, 1, 1}, rng);
    p.d_cx_f = oracles::random_tensor({C, C, 1, 1}, rng);
    p.d_cy_f = oracles::random_tensor({C, C, 1, 1}, rng);
    if (tied) {
        p.d_ux_a = scale(p.d_ux_f, adjoint_scale);
        p.d_uy_a = scale(p.d_uy_f, adjoint_scale);
        p.d_cx_a = scale(p.d_cx_f, adjoint_scale);
        p.d_cy_a = scale(p.d_cy_f, adjoint_scale);
    } else {
        p.d_ux_a = oracles::random_tensor({C, C, 1, 1}, rng);
        p.d_uy_a = oracles::random_tensor({C, C, 1, 1}, rng);
        p.d_cx_a = oracles::random_tensor({C, C, 1, 1}, rng);
        p.d_cy_a = oracles::random_tensor({C, C, 1, 1}, rng);
    }
    return p;
}

// Explicit combined dictionary for the 1×1-kernel case, zero blocks included:
// D = [U_X 0 C_X; 0 U_Y C_Y], a (2C)×(3C) matrix.
oracles::Mat assemble_d(const CDBlockParams& p) {
    const int C = p.channels();
    oracles::Mat D(2 * C, 3 * C);
    for (int o = 0; o < C; ++o)
        for (int c = 0; c < C; ++c) {
            D(o, c) = p.d_ux_f.at(o, c, 0, 0);
            D(o, 2 * C + c) = p.d_cx_f.at(o, c, 0, 0);
            D(C + o, C + c) = p.d_uy_f.at(o, c, 0, 0);
            D(C + o, 2 * C + c) = p.d_cy_f.at(o, c, 0, 0);
        }
    return D;
}

std::vector<double> flat(const Tensor& t) {
    return std::vector<double>(t.data(), t.data() + t.size());
}

Tensor column(const std::vector<double>& v) {
    Tensor t({static_cast<int>(v.size()), 1, 1});
    for (std::size_t i = 0; i < v.size(); ++i) t[i] = v[i];
    return t;
}

} // namespace

TEST_CASE("soft_threshold basics") {
    Tensor theta({1}, {0.5});
    CHECK(soft_threshold(Tensor({1, 1, 1}, {1.0}), theta)[0] == doctest::Approx(0.5));
    CHECK(soft_threshold(Tensor({1, 1, 1}, {-0.3}), theta)[0] == 0.0);
    CHECK(soft_threshold(Tensor({1, 1, 1}, {0.0}), theta)[0] == 0.0);
    // negative stored theta acts through its absolute value
    CHECK(soft_threshold(Tensor({1, 1, 1}, {1.0}), Tensor({1}, {-0.5}))[0] == doctest::Approx(0.5));
    CHECK_THROWS_AS(soft_threshold(Tensor::zeros({2, 1, 1}), theta), dimension_error);
}

TEST_CASE("dict_forward zero kernels and common passthrough") {
    const int C = 2;
    CDBlockParams p = CDBlockParams::zeros(C, 1);
    std::mt19937_64 rng(5);
    Tensor W = oracles::random_tensor({3 * C, 3, 3}, rng);
    Tensor out = dict_forward(p, W);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);

    // Z_X = Z_Y = 0, common kernels identity -> output = [Z_C; Z_C]
    for (int c = 0; c < C; ++c) {
        p.d_cx_f.at(c, c, 0, 0) = 1.0;
        p.d_cy_f.at(c, c, 0, 0) = 1.0;
    }
    Tensor W2 = Tensor::zeros({3 * C, 3, 3});
    Tensor zc = oracles::random_tensor({C, 3, 3}, rng);
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) W2.at(2 * C + c, i, j) = zc.at(c, i, j);
    Tensor out2 = dict_forward(p, W2);
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                CHECK(out2.at(c, i, j) == zc.at(c, i, j));
                CHECK(out2.at(C + c, i, j) == zc.at(c, i, j));
            }
}

TEST_CASE("dict_forward equals explicit block-matrix product (1x1 case)") {
    const int C = 3;
    std::mt19937_64 rng(11);
    CDBlockParams p = random_block_1x1(C, rng, false);
    const oracles::Mat D = assemble_d(p);
    Tensor W = oracles::random_tensor({3 * C, 1, 1}, rng);
    Tensor got = dict_forward(p, W);
    const std::vector<double> want = oracles::matvec(D, flat(W));
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("dict_adjoint block isolation and transpose oracle") {
    const int C = 3;
    std::mt19937_64 rng(13);
    CDBlockParams p = random_block_1x1(C, rng, true);

    // zero kernels -> zero
    CDBlockParams z = CDBlockParams::zeros(C, 1);
    Tensor S = oracles::random_tensor({2 * C, 2, 2}, rng);
    Tensor zero_out = dict_adjoint(z, S);
    for (std::size_t i = 0; i < zero_out.size(); ++i) CHECK(zero_out[i] == 0.0);

    // Q = 0: third slab = d_CX_a applied to P only, no Q leakage
    Tensor Sq0 = S;
    for (int c = C; c < 2 * C; ++c)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) Sq0.at(c, i, j) = 0.0;
    Tensor outq0 = dict_adjoint(p, Sq0);
    Tensor ponly = conv2d_transposed(slice_channels(Sq0, 0, C), p.d_cx_a);
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                CHECK(outq0.at(2 * C + c, i, j) == ponly.at(c, i, j));

    // tied adjoint kernels on the 1×1 case: equals multiplication by Dᵀ
    const oracles::Mat Dt = assemble_d(p).transpose();
    Tensor S1 = oracles::random_tensor({2 * C, 1, 1}, rng);
    Tensor got = dict_adjoint(p, S1);
    const std::vector<double> want = oracles::matvec(Dt, flat(S1));
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("cdblock_step identity and first-step forms") {
    const int C = 2;
    std::mt19937_64 rng(17);
    CDBlockParams zero = CDBlockParams::zeros(C, 3);
    Tensor W = oracles::random_tensor({3 * C, 4, 4}, rng);
    Tensor Z = oracles::random_tensor({2 * C, 4, 4}, rng);
    Tensor out = cdblock_step(zero, W, Z);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == W[i]);

    // W_prev = 0 -> S_theta(dict_adjoint(Z))
    CDBlockParams p = random_block_1x1(C, rng, false);
    for (std::size_t i = 0; i < p.theta.size(); ++i) p.theta[i] = 0.05;
    Tensor W0 = Tensor::zeros({3 * C, 4, 4});
    Tensor Z2 = oracles::random_tensor({2 * C, 4, 4}, rng);
    Tensor got = cdblock_step(p, W0, Z2);
    Tensor want = soft_threshold(dict_adjoint(p, Z2), p.theta);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-14));
}

TEST_CASE("cdblock_step equals dense matrix ISTA (tied, 1x1, 20 trials)") {
    const int C = 3;
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        CDBlockParams p = random_block_1x1(C, rng, true);
        const double th = 0.1;
        for (std::size_t i = 0; i < p.theta.size(); ++i) p.theta[i] = th;
        const oracles::Mat D = assemble_d(p);
        Tensor W = oracles::random_tensor({3 * C, 1, 1}, rng);
        Tensor Z = oracles::random_tensor({2 * C, 1, 1}, rng);
        Tensor got = cdblock_step(p, W, Z);
        const std::vector<double> want = oracles::ista_step(D, flat(Z), flat(W), 1.0, th);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(std::abs(got[i] - want[i]) <= 1e-9);
    }
}

TEST_CASE("descent property of the tied-kernel prototype") {
    const int C = 3;
    const double lambda = 0.05;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        std::mt19937_64 rng(seed * 977 + 3);
        CDBlockParams fwd = random_block_1x1(C, rng, true);
        const oracles::Mat D = assemble_d(fwd);
        const double L = oracles::power_iteration_l(D);
        REQUIRE(L > 0.0);
        CDBlockParams p = fwd;
        p.d_ux_a = scale(fwd.d_ux_f, 1.0 / L);
        p.d_uy_a = scale(fwd.d_uy_f, 1.0 / L);
        p.d_cx_a = scale(fwd.d_cx_f, 1.0 / L);
        p.d_cy_a = scale(fwd.d_cy_f, 1.0 / L);
        for (std::size_t i = 0; i < p.theta.size(); ++i) p.theta[i] = lambda / L;

        Tensor Z = oracles::random_tensor({2 * C, 1, 1}, rng);
        Tensor W = Tensor::zeros({3 * C, 1, 1});
        double prev = oracles::lasso_objective(D, flat(Z), flat(W), lambda);
        for (int it = 0; it < 20; ++it) {
            W = cdblock_step(p, W, Z);
            const double cur = oracles::lasso_objective(D, flat(Z), flat(W), lambda);
            CHECK(cur <= prev + 1e-10);
            prev = cur;
        }
    }
}

TEST_CASE("block sparsity: Z_Y perturbation never reaches the X output block") {
    const int C = 3;
    std::mt19937_64 rng(23);
    CDBlockParams p = CDBlockParams::zeros(C, 3);
    p.d_ux_f = oracles::random_tensor({C, C, 3, 3}, rng);
    p.d_uy_f = oracles::random_tensor({C, C, 3, 3}, rng);
    p.d_cx_f = oracles::random_tensor({C, C, 3, 3}, rng);
    p.d_cy_f = oracles::random_tensor({C, C, 3, 3}, rng);
    Tensor W = oracles::random_tensor({3 * C, 5, 5}, rng);
    Tensor out1 = dict_forward(p, W);
    Tensor W2 = W;
    for (int c = C; c < 2 * C; ++c)
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) W2.at(c, i, j) += 10.0;
    Tensor out2 = dict_forward(p, W2);
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) CHECK(out1.at(c, i, j) == out2.at(c, i, j));
}

TEST_CASE("cdblock_step pre-threshold value is affine (superposition)") {
    const int C = 2;
    std::mt19937_64 rng(29);
    CDBlockParams p = random_block_1x1(C, rng, false);
    // theta = 0 exposes the affine pre-threshold map
    Tensor Z = oracles::random_tensor({2 * C, 2, 2}, rng);
    Tensor Wa = oracles::random_tensor({3 * C, 2, 2}, rng);
    Tensor Wb = oracles::random_tensor({3 * C, 2, 2}, rng);
    Tensor mid = scale(add(Wa, Wb), 0.5);
    Tensor out_mid = cdblock_step(p, mid, Z);
    Tensor out_avg = scale(add(cdblock_step(p, Wa, Z), cdblock_step(p, Wb, Z)), 0.5);
    for (std::size_t i = 0; i < out_mid.size(); ++i)
        CHECK(out_mid[i] == doctest::Approx(out_avg[i]).epsilon(1e-12));
}

TEST_CASE("alternating_step zero kernels keeps components") {
    const int C = 2;
    std::mt19937_64 rng(31);
    AlternatingParams p = AlternatingParams::zeros(C, 3);
    Tensor zx = oracles::random_tensor({C, 3, 3}, rng);
    Tensor zy = oracles::random_tensor({C, 3, 3}, rng);
    Tensor zc = oracles::random_tensor({C, 3, 3}, rng);
    Tensor X = oracles::random_tensor({C, 3, 3}, rng);
    Tensor Y = oracles::random_tensor({C, 3, 3}, rng);
    AlternatingResult r = alternating_step(p, zx, zy, zc, X, Y);
    for (std::size_t i = 0; i < zx.size(); ++i) {
        CHECK(r.zx[i] == zx[i]);
        CHECK(r.zy[i] == zy[i]);
        CHECK(r.zc[i] == zc[i]);
    }
}

TEST_CASE("alternating_step equals dense cyclic block-ISTA (1x1 case)") {
    const int C = 3;
    std::mt19937_64 rng(37);
    AlternatingParams p = AlternatingParams::zeros(C, 1);
    p.d_ux_f = oracles::random_tensor({C, C, 1, 1}, rng);
    p.d_uy_f = oracles::random_tensor({C, C, 1, 1}, rng);
    p.d_cx_f = oracles::random_tensor({C, C, 1, 1}, rng);
    p.d_cy_f = oracles::random_tensor({C, C, 1, 1}, rng);
    const double sstep = 0.2;
    p.d_ux_a = scale(p.d_ux_f, sstep);
    p.d_uy_a = scale(p.d_uy_f, sstep);
    p.d_cx_a = scale(p.d_cx_f, sstep);
    p.d_cy_a = scale(p.d_cy_f, sstep);
    const double th = 0.03;
    for (int c = 0; c < C; ++c) {
        p.theta_x[c] = th;
        p.theta_y[c] = th;
        p.theta_c[c] = th;
    }

    auto as_mat = [&](const Tensor& k) {
        oracles::Mat m(C, C);
        for (int o = 0; o < C; ++o)
            for (int c = 0; c < C; ++c) m(o, c) = k.at(o, c, 0, 0);
        return m;
    };
    const oracles::Mat Ux = as_mat(p.d_ux_f), Uy = as_mat(p.d_uy_f);
    const oracles::Mat Cx = as_mat(p.d_cx_f), Cy = as_mat(p.d_cy_f);

    Tensor zx = oracles::random_tensor({C, 1, 1}, rng);
    Tensor zy = oracles::random_tensor({C, 1, 1}, rng);
    Tensor zc = oracles::random_tensor({C, 1, 1}, rng);
    Tensor X = oracles::random_tensor({C, 1, 1}, rng);
    Tensor Y = oracles::random_tensor({C, 1, 1}, rng);
    AlternatingResult got = alternating_step(p, zx, zy, zc, X, Y);

    // independent dense sweep with explicit step size
    auto axpy = [](std::vector<double> a, const std::vector<double>& b, double s) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
        return a;
    };
    using oracles::matvec;
    std::vector<double> vx = flat(zx), vy = flat(zy), vc = flat(zc), vX = flat(X), vY = flat(Y);
    std::vector<double> rx = axpy(axpy(matvec(Ux, vx), matvec(Cx, vc), 1.0), vX, -1.0);
    std::vector<double> gx = matvec(Ux.transpose(), rx);
    std::vector<double> nx = oracles::soft(axpy(vx, gx, -sstep), th);
    std::vector<double> ry = axpy(axpy(matvec(Uy, vy), matvec(Cy, vc), 1.0), vY, -1.0);
    std::vector<double> gy = matvec(Uy.transpose(), ry);
    std::vector<double> ny = oracles::soft(axpy(vy, gy, -sstep), th);
    std::vector<double> rx2 = axpy(axpy(matvec(Ux, nx), matvec(Cx, vc), 1.0), vX, -1.0);
    std::vector<double> ry2 = axpy(axpy(matvec(Uy, ny), matvec(Cy, vc), 1.0), vY, -1.0);
    std::vector<double> gc =
        axpy(matvec(Cx.transpose(), rx2), matvec(Cy.transpose(), ry2), 1.0);
    std::vector<double> nc = oracles::soft(axpy(vc, gc, -sstep), th);

    for (int c = 0; c < C; ++c) {
        CHECK(got.zx[c] == doctest::Approx(nx[static_cast<std::size_t>(c)]).epsilon(1e-9));
        CHECK(got.zy[c] == doctest::Approx(ny[static_cast<std::size_t>(c)]).epsilon(1e-9));
        CHECK(got.zc[c] == doctest::Approx(nc[static_cast<std::size_t>(c)]).epsilon(1e-9));
    }
}

TEST_CASE("multiplication count ratio per sweep vs joint step is 7/4") {
    const int C = 4, s = 3, H = 16, W = 16;
    std::mt19937_64 rng(41);
    CDBlockParams p = CDBlockParams::zeros(C, s);
    MultCounter ctr;
    cdblock_step(p, Tensor::zeros({3 * C, H, W}), Tensor::zeros({2 * C, H, W}), &ctr);
    AlternatingParams ap = AlternatingParams::zeros(C, s);
    AlternatingResult r = alternating_step(ap, Tensor::zeros({C, H, W}), Tensor::zeros({C, H, W}),
                                           Tensor::zeros({C, H, W}), Tensor::zeros({C, H, W}),
                                           Tensor::zeros({C, H, W}));
    const double ratio = static_cast<double>(r.mults) / static_cast<double>(ctr.mults);
    CHECK(ratio == doctest::Approx(7.0 / 4.0));
}
