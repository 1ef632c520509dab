#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cdfuse/costmodel.hpp"
#include "oracles.hpp"

#include <random>

using namespace cdfuse;

TEST_CASE("m_am closed form") {
    CHECK(m_am(2, 3, 5, 256, 256) == 206438400ULL);
    CHECK(m_am(1, 3, 5, 64, 64) == 6ULL * 9 * 64 * 64 * 25);
    CHECK(m_am(2, 3, 5, 128, 64) * 2 == m_am(2, 3, 5, 256, 64)); // linear in H
}

TEST_CASE("m_joint closed form and ratio") {
    CHECK(m_joint(2, 3, 5, 256, 256) == 117964800ULL);
    for (int N : {1, 2, 3, 7})
        CHECK(static_cast<double>(m_am(N, 3, 5, 32, 32)) / m_joint(N, 3, 5, 32, 32) ==
              doctest::Approx((5.0 + N) / 4.0));
    CHECK(static_cast<double>(m_am(2, 5, 7, 16, 16)) / m_joint(2, 5, 7, 16, 16) ==
          doctest::Approx(7.0 / 4.0));
}

TEST_CASE("reduction values and monotonicity") {
    CHECK(cost_reduction(2) == doctest::Approx(3.0 / 7.0));
    CHECK(cost_reduction(3) == doctest::Approx(0.5));
    double prev = 0.0;
    for (int N = 1; N <= 50; ++N) {
        const double r = cost_reduction(N);
        CHECK(r > prev);
        CHECK(r == doctest::Approx(1.0 - 4.0 / (N + 5.0)));
        prev = r;
    }
    CHECK(cost_reduction(100000) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("cost_report invariants") {
    CostReport r = cost_report(2, 3, 5, 256, 256);
    CHECK(r.m_am > r.m_joint);
    CHECK(r.reduction ==
          doctest::Approx(static_cast<double>(r.m_am - r.m_joint) / static_cast<double>(r.m_am)));
    CHECK(cost_report_csv(r).find("m_am") != std::string::npos);
    CHECK(cost_report_text(r).find("M_AM") != std::string::npos);
}

TEST_CASE("instrumented counts match the analytic formulas") {
    const int C = 5, s = 3, H = 64, W = 64;
    const std::uint64_t unified = count_block_mults(UpdateMode::unified, C, s, H, W);
    const std::uint64_t alternating = count_block_mults(UpdateMode::alternating, C, s, H, W);
    // padded-tap counting makes the instrumented numbers exact
    CHECK(unified == m_joint(2, s, C, H, W));
    CHECK(alternating == m_am(2, s, C, H, W));
    const double ratio = static_cast<double>(alternating) / static_cast<double>(unified);
    CHECK(ratio >= 1.66);
    CHECK(ratio <= 1.84);
}

TEST_CASE("counter never double-counts a cdblock_step") {
    const int C = 3, s = 3, H = 16, W = 16;
    // one step = 8 kernel applications of C×C×s×s over H×W
    CHECK(count_block_mults(UpdateMode::unified, C, s, H, W) ==
          8ULL * C * C * s * s * H * W);
}

TEST_CASE("sufficient_iterations closed form") {
    CHECK(sufficient_iterations(1.0, 1.0, 0.5) == 1);
    // halving epsilon at most doubles the bound (+1 from ceiling)
    for (double eps : {0.3, 0.11, 0.05}) {
        const long long t1 = sufficient_iterations(2.0, 1.5, eps);
        const long long t2 = sufficient_iterations(2.0, 1.5, eps / 2.0);
        CHECK(t2 <= 2 * t1 + 1);
        CHECK(t2 >= t1);
    }
    CHECK_THROWS_AS(sufficient_iterations(0.0, 1.0, 0.1), dimension_error);
}

TEST_CASE("observed ISTA iterations stay within the bound") {
    // random 1×1-kernel prototype solved by plain dense ISTA
    const int C = 3;
    std::mt19937_64 rng(55);
    oracles::Mat D(2 * C, 3 * C);
    for (int i = 0; i < D.rows; ++i)
        for (int j = 0; j < D.cols; ++j) {
            std::uniform_real_distribution<double> dist(-1.0, 1.0);
            D(i, j) = dist(rng);
        }
    const double L = oracles::power_iteration_l(D);
    const double lambda = 0.05;
    std::vector<double> z(static_cast<std::size_t>(2 * C));
    for (auto& v : z) {
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        v = dist(rng);
    }

    // long-run solution as F*
    std::vector<double> w(static_cast<std::size_t>(3 * C), 0.0);
    for (int it = 0; it < 20000; ++it)
        w = oracles::ista_step(D, z, w, 1.0 / L, lambda / L);
    const double f_star = oracles::lasso_objective(D, z, w, lambda);
    double dist0 = 0.0;
    for (double v : w) dist0 += v * v; // from w0 = 0
    dist0 = std::sqrt(dist0);

    const double eps = 1e-4;
    const long long bound = sufficient_iterations(L, dist0, eps);
    std::vector<double> w2(static_cast<std::size_t>(3 * C), 0.0);
    long long observed = 0;
    while (oracles::lasso_objective(D, z, w2, lambda) > f_star + eps) {
        w2 = oracles::ista_step(D, z, w2, 1.0 / L, lambda / L);
        ++observed;
        REQUIRE(observed <= bound);
    }
    CHECK(observed <= bound);
}
