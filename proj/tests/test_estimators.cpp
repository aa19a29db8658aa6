#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "celldense/estimators.hpp"
#include "celldense/grid.hpp"
#include "doctest.h"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace celldense;

namespace {

// Objective evaluators written against the dense matrix, independent of
// the library's sparse code paths.
double dense_loglik(const std::vector<std::vector<double>>& P, const std::vector<double>& c,
                    const std::vector<double>& u) {
    double ll = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) {
        if (c[i] == 0.0) continue;
        double pu = 0.0;
        for (std::size_t j = 0; j < u.size(); ++j) pu += P[i][j] * u[j];
        if (pu <= 0.0) return -std::numeric_limits<double>::infinity();
        ll += c[i] * std::log(pu);
    }
    return ll;
}

double map_objective(const std::vector<std::vector<double>>& P, const std::vector<double>& c,
                     const std::vector<double>& alpha, const std::vector<double>& u) {
    double f = dense_loglik(P, c, u);
    if (!std::isfinite(f)) return f;
    for (std::size_t j = 0; j < u.size(); ++j)
        f += u[j] * std::log(alpha[j]) - std::lgamma(u[j] + 1.0);
    return f;
}

double amap_objective(const std::vector<std::vector<double>>& P, const std::vector<double>& c,
                      const std::vector<double>& a, const std::vector<double>& u) {
    double f = dense_loglik(P, c, u);
    if (!std::isfinite(f)) return f;
    for (std::size_t j = 0; j < u.size(); ++j) {
        const double d = u[j] - a[j];
        f -= 0.5 * d * d / a[j];
    }
    return f;
}

}  // namespace

TEST_CASE("sb reproduces the toy golden values") {
    auto est = sb_estimate(fixtures::toy_matrix(), fixtures::toy_counts(), PriorVector::flat(3));
    REQUIRE(est.values.size() == 3);
    CHECK(std::abs(est.values[0] - 32.0) <= 1e-9);
    CHECK(std::abs(est.values[1] - 38.0) <= 1e-9);
    CHECK(std::abs(est.values[2] - 40.0) <= 1e-9);
    CHECK(est.mass == doctest::Approx(110.0).epsilon(1e-12));
    CHECK(est.estimator == "sb");
}

TEST_CASE("sb of zero counts is the zero map") {
    auto est = sb_estimate(fixtures::toy_matrix(), CountVector({0.0, 0.0}), PriorVector::flat(3));
    CHECK(est.values == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(est.mass == 0.0);
}

TEST_CASE("sb on a tessellation returns the counts for any prior") {
    // Identity assignment: each cell owns one tile.
    AssignmentMatrix P(3, 3, {{0, 0, 1.0}, {1, 1, 1.0}, {2, 2, 1.0}});
    CountVector c({5.0, 0.0, 12.0});
    for (auto prior : {PriorVector::flat(3), PriorVector({0.7, 0.1, 0.2})}) {
        auto est = sb_estimate(P, c, prior);
        CHECK(est.values[0] == doctest::Approx(5.0).epsilon(1e-12));
        CHECK(est.values[1] == 0.0);
        CHECK(est.values[2] == doctest::Approx(12.0).epsilon(1e-12));
    }
}

TEST_CASE("sb flags a positive count with zero prior coverage") {
    AssignmentMatrix P(2, 1, {{0, 0, 1.0}});  // second cell's row is all zero
    CHECK_THROWS_AS(sb_estimate(P, CountVector({1.0, 5.0}), PriorVector::flat(1)),
                    ZeroDenominator);
}

TEST_CASE("sb conserves the count total") {
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 100; ++rep) {
        auto inst = oracles::random_instance(rng, 10, 30, rep % 2 == 1);
        auto est = sb_estimate(inst.P, inst.c, inst.prior);
        CHECK(std::abs(est.mass - inst.c.total()) <= 1e-9 * std::max(1.0, inst.c.total()));
        for (double v : est.values) CHECK(v >= 0.0);
    }
}

TEST_CASE("em first iterate from the flat start is the sb estimate") {
    auto P = fixtures::toy_matrix();
    auto c = fixtures::toy_counts();
    const double third = 110.0 / 3.0;

    EmConfig one_step;
    one_step.max_iters = 1;
    auto em1 = em_iterate(P, c, {third, third, third}, one_step);
    CHECK(em1.iterations == 1);

    auto sb = sb_estimate(P, c, PriorVector::flat(3));
    for (int j = 0; j < 3; ++j) CHECK(std::abs(em1.values[j] - sb.values[j]) <= 1e-12);
    // Hand-evaluated step: [32, 38, 40].
    CHECK(em1.values[0] == doctest::Approx(32.0).epsilon(1e-12));
}

TEST_CASE("sb equals the first em iterate on random instances") {
    std::mt19937_64 rng(32);
    EmConfig one_step;
    one_step.max_iters = 1;
    for (int rep = 0; rep < 100; ++rep) {
        auto inst = oracles::random_instance(rng, 10, 30, rep % 2 == 1);
        if (inst.c.total() == 0.0) continue;
        auto sb = sb_estimate(inst.P, inst.c, inst.prior);
        auto em1 = em_iterate(inst.P, inst.c, inst.prior.rescaled(inst.c.total()), one_step);
        for (int j = 0; j < inst.P.cols(); ++j)
            CHECK(std::abs(sb.values[j] - em1.values[j]) <=
                  1e-12 * std::max(1.0, inst.c.total()));
    }
}

TEST_CASE("em is already fixed on an exact count-consistent point") {
    auto est = em_iterate(fixtures::toy_matrix(), fixtures::toy_counts(), {40.0, 0.0, 70.0});
    CHECK(est.converged);
    CHECK(est.iterations == 0);
    CHECK(est.values == std::vector<double>{40.0, 0.0, 70.0});
    CHECK(est.ml_residual <= 1e-12);
    CHECK(est.constraint_residual <= 1e-12);
}

TEST_CASE("em on a tessellation lands on the counts in one iteration") {
    AssignmentMatrix P(3, 3, {{0, 0, 1.0}, {1, 1, 1.0}, {2, 2, 1.0}});
    CountVector c({5.0, 0.0, 12.0});
    auto est = em_iterate(P, c, {3.0, 9.0, 5.0});
    CHECK(est.converged);
    CHECK(est.iterations == 1);
    CHECK(est.values[0] == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(est.values[1] == 0.0);
    CHECK(est.values[2] == doctest::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("em conserves mass at every iteration") {
    std::mt19937_64 rng(33);
    auto inst = oracles::random_instance(rng, 8, 20, true);
    const double C = inst.c.total();
    std::vector<double> u = inst.prior.rescaled(C);
    EmConfig one_step;
    one_step.max_iters = 1;
    one_step.tol = 1e-300;  // force the full step count
    one_step.tol_ml = 1e-300;
    for (int it = 0; it < 30; ++it) {
        auto next = em_iterate(inst.P, inst.c, u, one_step);
        CHECK(std::abs(next.mass - C) <= 1e-9 * std::max(1.0, C));
        for (double v : next.values) CHECK(v >= 0.0);
        u = next.values;
    }
}

TEST_CASE("em keeps injected zeros at zero") {
    std::mt19937_64 rng(34);
    for (int rep = 0; rep < 20; ++rep) {
        auto inst = oracles::random_instance(rng, 8, 20);
        if (inst.c.total() == 0.0) continue;
        std::vector<double> start = inst.prior.rescaled(inst.c.total());
        // Killing a tile that is some cell's whole support would zero that
        // cell's expectation; pick one that leaves every denominator alive.
        int dead = -1;
        for (int j = 0; j < inst.P.cols() && dead < 0; ++j) {
            bool sole_support = false;
            for (const auto& e : inst.P.column(j))
                if (inst.P.row(e.index).size() == 1) sole_support = true;
            if (!sole_support) dead = j;
        }
        if (dead < 0) continue;
        start[dead] = 0.0;
        EmConfig cfg;
        cfg.max_iters = 50;
        cfg.tol = 1e-300;
        cfg.tol_ml = 1e-300;
        auto est = em_iterate(inst.P, inst.c, start, cfg);
        CHECK(est.values[dead] == 0.0);
    }
}

TEST_CASE("em converged points satisfy the stationarity bound") {
    std::mt19937_64 rng(35);
    int converged_seen = 0;
    for (int rep = 0; rep < 30; ++rep) {
        auto inst = oracles::random_instance(rng, 10, 30, rep % 2 == 1);
        auto est = em_estimate(inst.P, inst.c, inst.prior);
        if (!est.converged) continue;
        ++converged_seen;
        CHECK(est.ml_residual <= EmConfig{}.tol_ml * 10.0);
        CHECK(est.ml_residual == ml_optimality_residual(inst.P, inst.c, est.values));
    }
    CHECK(converged_seen >= 25);
}

TEST_CASE("em gives identical estimates to indistinguishable tiles") {
    // Tiles 0 and 2 share both their matrix column and their prior entry.
    FootprintSet fps;
    fps.grid = Grid(3, 1);
    fps.cells = {{"u", {{0, 1.0}, {1, 1.0}, {2, 1.0}}}, {"v", {{1, 1.0}}}};
    auto P = build_assignment_matrix(fps);
    CountVector c({9.0, 4.0});
    auto prior = PriorVector::flat(3);

    for (int iters : {1, 2, 5, 5000}) {
        EmConfig cfg;
        cfg.max_iters = iters;
        auto est = em_estimate(P, c, prior, cfg);
        CHECK(std::abs(est.values[0] - est.values[2]) <= 1e-12 * std::max(1.0, est.values[0]));
    }
}

TEST_CASE("em reports non-convergence honestly") {
    std::mt19937_64 rng(36);
    auto inst = oracles::random_instance(rng, 10, 30, true);
    EmConfig strict;
    strict.max_iters = 1;
    strict.tol = 1e-300;
    strict.tol_ml = 1e-300;
    auto est = em_estimate(inst.P, inst.c, inst.prior, strict);
    CHECK_FALSE(est.converged);
    CHECK(est.iterations == 1);
}

TEST_CASE("optimality residual is zero exactly on count-consistent points") {
    auto P = fixtures::toy_matrix();
    auto c = fixtures::toy_counts();
    CHECK(ml_optimality_residual(P, c, std::vector<double>{40.0, 0.0, 70.0}) <= 1e-15);
    // The closed-form projection output is count-consistent too.
    std::vector<double> df{395.0 / 13.0, 500.0 / 13.0, 535.0 / 13.0};
    CHECK(ml_optimality_residual(P, c, df) <= 1e-9);
    // A flat map is not a maximizer.
    const double third = 110.0 / 3.0;
    CHECK(ml_optimality_residual(P, c, std::vector<double>{third, third, third}) > 1e-2);
    // Positive count with zero expectation is degenerate.
    CHECK_THROWS_AS(ml_optimality_residual(P, c, std::vector<double>{0.0, 0.0, 0.0}),
                    DegenerateDenominator);
}

TEST_CASE("loglikelihood matches direct evaluation on the toy point") {
    auto P = fixtures::toy_matrix();
    auto c = fixtures::toy_counts();
    const double expected = 40.0 * std::log(40.0) + 70.0 * std::log(70.0);
    CHECK(loglikelihood(P, c, std::vector<double>{40.0, 0.0, 70.0}) ==
          doctest::Approx(expected).epsilon(1e-12));

    // Two count-consistent points share the optimal value.
    std::vector<double> df{395.0 / 13.0, 500.0 / 13.0, 535.0 / 13.0};
    CHECK(std::abs(loglikelihood(P, c, df) - expected) <= 1e-9);

    // Doubling u adds C log 2.
    std::vector<double> doubled{80.0, 0.0, 140.0};
    CHECK(loglikelihood(P, c, doubled) ==
          doctest::Approx(expected + 110.0 * std::log(2.0)).epsilon(1e-12));

    // Zero counts contribute nothing even on zero expectations.
    CHECK(loglikelihood(P, CountVector({0.0, 70.0}), std::vector<double>{0.0, 0.0, 70.0}) ==
          doctest::Approx(70.0 * std::log(70.0)));

    // A positive count on a zero expectation sends the value to -inf.
    CHECK(loglikelihood(P, c, std::vector<double>{0.0, 0.0, 0.0}) ==
          -std::numeric_limits<double>::infinity());
}

TEST_CASE("analytic gradient matches central differences") {
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int rep = 0; rep < 10; ++rep) {
        auto inst = oracles::random_instance(rng, 8, 15, true);
        if (inst.c.total() == 0.0) continue;
        std::vector<double> u(inst.P.cols());
        for (double& v : u) v = 5.0 + 20.0 * unit(rng);  // interior point

        auto grad = loglik_gradient(inst.P, inst.c, u);
        auto f = [&](const std::vector<double>& w) { return loglikelihood(inst.P, inst.c, w); };
        for (int j = 0; j < inst.P.cols(); ++j) {
            const double fd = oracles::central_difference(f, u, j, 1e-5 * std::max(1.0, u[j]));
            const double scale = std::max({1.0, std::abs(grad[j]), std::abs(fd)});
            CHECK(std::abs(grad[j] - fd) / scale <= 1e-5);
        }
    }
}

TEST_CASE("hessian quadratic form is never positive") {
    auto P = fixtures::toy_matrix();
    auto c = fixtures::toy_counts();
    std::vector<double> u{30.0, 40.0, 40.0};
    CHECK(loglik_hessian_quadform(P, c, u, std::vector<double>{0.0, 0.0, 0.0}) == 0.0);
    // [1, -4, 3] maps to zero through P, so the curvature vanishes there.
    CHECK(std::abs(loglik_hessian_quadform(P, c, u, std::vector<double>{1.0, -4.0, 3.0})) <=
          1e-12);

    std::mt19937_64 rng(38);
    std::uniform_real_distribution<double> sym(-1.0, 1.0);
    for (int rep = 0; rep < 200; ++rep) {
        auto inst = oracles::random_instance(rng, 10, 30, rep % 2 == 1);
        std::vector<double> w(inst.P.cols()), x(inst.P.cols());
        for (double& v : w) v = 0.5 + std::abs(sym(rng)) * 30.0;
        for (double& v : x) v = sym(rng) * 10.0;
        CHECK(loglik_hessian_quadform(inst.P, inst.c, w, x) <= 1e-12);
    }
}

TEST_CASE("count-consistency membership checks both constraints") {
    auto P = fixtures::toy_matrix();
    auto c = fixtures::toy_counts();
    CHECK(mlbs_membership(P, c, std::vector<double>{30.0, 40.0, 40.0}));
    CHECK(mlbs_membership(P, c, std::vector<double>{40.0, 0.0, 70.0}));
    CHECK_FALSE(mlbs_membership(P, c, std::vector<double>{40.0, 40.0, 40.0}));
    CHECK_FALSE(mlbs_membership(P, c, std::vector<double>{41.0, -4.0, 70.0}));
}

TEST_CASE("sampled count-consistent points are stationary and optimal") {
    std::mt19937_64 rng(39);
    EmConfig tight;
    tight.max_iters = 200000;
    tight.tol = 1e-300;
    tight.tol_ml = 1e-13;
    for (int rep = 0; rep < 10; ++rep) {
        auto inst = oracles::random_instance(rng, 10, 30, rep % 2 == 1, 25.0);
        auto kernel = oracles::null_space(inst.P);
        auto em = em_estimate(inst.P, inst.c, inst.prior, tight);
        REQUIRE(em.converged);
        const double em_ll = loglikelihood(inst.P, inst.c, em.values);
        for (int draw = 0; draw < 3; ++draw) {
            auto v = oracles::sample_mlbs_point(inst.u_true, kernel, rng);
            REQUIRE(mlbs_membership(inst.P, inst.c, v));
            CHECK(ml_optimality_residual(inst.P, inst.c, v) <= 1e-8);
            const double v_ll = loglikelihood(inst.P, inst.c, v);
            if (inst.c.total() == 0.0) continue;
            CHECK(std::abs(v_ll - em_ll) <= 1e-9 * std::max(1.0, std::abs(em_ll)));
        }
    }
}

TEST_CASE("simplex projection handles the canonical cases") {
    CHECK(project_simplex({2.0, 0.0}, 1.0) == std::vector<double>{1.0, 0.0});
    CHECK(project_simplex({0.3, 0.3}, 1.0) == std::vector<double>{0.5, 0.5});
    CHECK(project_simplex({-1.0, 3.0}, 1.0) == std::vector<double>{0.0, 1.0});
    CHECK(project_simplex({5.0}, 2.0) == std::vector<double>{2.0});
    CHECK(project_simplex({1.0, 2.0}, 0.0) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("simplex projection returns the nearest feasible point") {
    std::mt19937_64 rng(40);
    std::uniform_real_distribution<double> sym(-10.0, 10.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int rep = 0; rep < 200; ++rep) {
        const int n = 2 + static_cast<int>(rng() % 8);
        const double total = 1.0 + 20.0 * unit(rng);
        std::vector<double> v(n);
        for (double& x : v) x = sym(rng);
        auto p = project_simplex(v, total);

        double sum = 0.0;
        for (double x : p) {
            CHECK(x >= 0.0);
            sum += x;
        }
        CHECK(sum == doctest::Approx(total).epsilon(1e-9));

        auto dist2 = [&](const std::vector<double>& w) {
            double d = 0.0;
            for (int j = 0; j < n; ++j) d += (v[j] - w[j]) * (v[j] - w[j]);
            return d;
        };
        // Random feasible competitors never beat the projection.
        for (int k = 0; k < 20; ++k) {
            std::vector<double> w(n);
            double wsum = 0.0;
            for (double& x : w) wsum += (x = unit(rng));
            for (double& x : w) x *= total / wsum;
            CHECK(dist2(p) <= dist2(w) + 1e-9);
        }
    }
}

TEST_CASE("map on a single tile is pinned by the mass constraint") {
    AssignmentMatrix P(1, 1, {{0, 0, 1.0}});
    CountVector c({17.0});
    auto map = map_estimate(P, c, PriorVector::flat(1));
    CHECK(map.converged);
    CHECK(map.values[0] == doctest::Approx(17.0).epsilon(1e-12));
    auto amap = approx_map_estimate(P, c, PriorVector::flat(1));
    CHECK(amap.converged);
    CHECK(amap.values[0] == doctest::Approx(17.0).epsilon(1e-12));
}

TEST_CASE("map matches a brute-force grid search of its own objective") {
    auto P = fixtures::toy_matrix();
    auto dense = fixtures::dense(P);
    CountVector c({4.0, 7.0});
    auto prior = PriorVector::flat(3);

    auto est = map_estimate(P, c, prior);
    CHECK(est.converged);
    CHECK(est.mass == doctest::Approx(11.0).epsilon(1e-9));

    auto objective = [&](const std::vector<double>& u) {
        return map_objective(dense, c.values(), prior.values(), u);
    };
    auto best = oracles::grid_search_simplex3(11.0, 0.05, objective);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(est.values[j] - best[j]) <= 0.1);

    // The maximizer dominates the feasible prior point.
    CHECK(objective(est.values) >= objective(prior.rescaled(11.0)) - 1e-12);
}

TEST_CASE("approximate map matches its own grid search") {
    auto P = fixtures::toy_matrix();
    auto dense = fixtures::dense(P);
    CountVector c({4.0, 7.0});
    auto prior = PriorVector::flat(3);
    auto a = prior.rescaled(11.0);

    auto est = approx_map_estimate(P, c, prior);
    CHECK(est.converged);

    auto objective = [&](const std::vector<double>& u) {
        return amap_objective(dense, c.values(), a, u);
    };
    auto best = oracles::grid_search_simplex3(11.0, 0.05, objective);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(est.values[j] - best[j]) <= 0.1);
    CHECK(objective(est.values) >= objective(a) - 1e-12);
}

TEST_CASE("approximate map returns the prior when the counts already agree") {
    auto P = fixtures::toy_matrix();
    auto prior = PriorVector::flat(3);
    // c = P a for a = the prior scaled to mass 110.
    auto a = prior.rescaled(110.0);
    CountVector c(P.apply(a));
    auto est = approx_map_estimate(P, c, prior);
    CHECK(est.converged);
    CHECK(est.iterations == 0);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(est.values[j] - a[j]) <= 1e-9);
}

TEST_CASE("df precompute on a tessellation is the identity operator") {
    AssignmentMatrix P(3, 3, {{0, 0, 1.0}, {1, 1, 1.0}, {2, 2, 1.0}});
    auto op = df_precompute(P, PriorVector({0.5, 0.3, 0.2}));
    CHECK(op.cells() == 3);
    CHECK(op.tiles() == 3);
    CHECK((op.F() - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(op.g_unit().cwiseAbs().maxCoeff() <= 1e-12);

    auto est = df_estimate(op, CountVector({5.0, 0.0, 12.0}));
    CHECK(est.values[0] == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(est.values[1] == 0.0);
    CHECK(est.values[2] == doctest::Approx(12.0).epsilon(1e-12));
    CHECK(est.clip_count == 0);
}

TEST_CASE("df reproduces the toy golden values and count consistency") {
    auto P = fixtures::toy_matrix();
    auto op = df_precompute(P, PriorVector::flat(3));
    auto est = df_estimate(op, fixtures::toy_counts());

    CHECK(std::abs(est.values[0] - 30.38462) <= 1e-5 / 2);
    CHECK(std::abs(est.values[1] - 38.46154) <= 1e-5 / 2);
    CHECK(std::abs(est.values[2] - 41.15385) <= 1e-5 / 2);
    // Exact fractions from the 2x2 normal-equation solve.
    CHECK(std::abs(est.values[0] - 395.0 / 13.0) <= 1e-9);
    CHECK(std::abs(est.values[1] - 500.0 / 13.0) <= 1e-9);
    CHECK(std::abs(est.values[2] - 535.0 / 13.0) <= 1e-9);

    CHECK(est.clip_count == 0);
    CHECK(est.mass == doctest::Approx(110.0).epsilon(1e-9));
    CHECK(est.constraint_residual <= 1e-8);
    CHECK(mlbs_membership(P, fixtures::toy_counts(), est.values));
}

TEST_CASE("df right-inverse and offset identities hold") {
    std::mt19937_64 rng(41);
    int built = 0;
    for (int rep = 0; rep < 40 && built < 15; ++rep) {
        auto inst = oracles::random_instance(rng, 6, 20, true);
        if (inst.P.rows() >= inst.P.cols()) continue;
        DfOperator op;
        try {
            op = df_precompute(inst.P, inst.prior);
        } catch (const SingularGram&) {
            continue;
        }
        ++built;
        const int Im = op.cells();
        Eigen::MatrixXd Pm = Eigen::MatrixXd::Zero(Im, inst.P.cols());
        for (int i = 0; i < inst.P.rows(); ++i)
            if (op.row_group()[i] >= 0)
                for (const auto& e : inst.P.row(i)) Pm(op.row_group()[i], e.index) += e.value;
        CHECK((Pm * op.F() - Eigen::MatrixXd::Identity(Im, Im)).cwiseAbs().maxCoeff() <= 1e-8);

        // With the counts at c = P a the estimate is the prior itself.
        auto a = inst.prior.rescaled(50.0);
        CountVector ca(inst.P.apply(a));
        auto est = df_estimate(op, ca);
        if (est.clip_count == 0)
            for (int j = 0; j < inst.P.cols(); ++j) CHECK(std::abs(est.values[j] - a[j]) <= 1e-7);
    }
    CHECK(built >= 10);
}

TEST_CASE("df offset vanishes for a flat prior") {
    std::mt19937_64 rng(42);
    for (int rep = 0; rep < 20; ++rep) {
        auto inst = oracles::random_instance(rng, 6, 20, true);
        if (inst.P.rows() >= inst.P.cols()) continue;
        try {
            auto op = df_precompute(inst.P, PriorVector::flat(inst.P.cols()));
            CHECK(op.g_unit().cwiseAbs().maxCoeff() <= 1e-10);
        } catch (const SingularGram&) {
        }
    }
}

TEST_CASE("df merges duplicate cells by summing their rows and counts") {
    FootprintSet fps;
    fps.grid = Grid(2, 1);
    fps.cells = {{"a", {{0, 1.0}, {1, 1.0}}},
                 {"b", {{0, 1.0}, {1, 1.0}}},   // identical to a
                 {"c", {{1, 2.0}}}};
    auto P = build_assignment_matrix(fps);
    auto op = df_precompute(P, PriorVector::flat(2));
    CHECK(op.row_group() == std::vector<int>{0, 0, 1});
    CHECK(op.cells() == 2);
    CHECK(op.original_cells() == 3);

    // Counts of the twin cells fold together: [3, 5, 4] acts like [8, 4].
    auto est = df_estimate(op, CountVector({3.0, 5.0, 4.0}));
    CHECK(est.mass == doctest::Approx(12.0).epsilon(1e-9));
    CHECK(est.constraint_residual <= 1e-8);
}

TEST_CASE("df drops all-zero rows and ignores their counts") {
    AssignmentMatrix P(2, 1, {{0, 0, 1.0}});
    auto op = df_precompute(P, PriorVector::flat(1));
    CHECK(op.row_group() == std::vector<int>{0, -1});
    auto est = df_estimate(op, CountVector({5.0, 0.0}));
    CHECK(est.values[0] == doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("df rejects linearly dependent cells") {
    // Three cells over two tiles can never have independent rows.
    AssignmentMatrix P(3, 2,
                       {{0, 0, 0.5}, {1, 0, 0.3}, {2, 0, 0.2}, {0, 1, 0.2}, {1, 1, 0.3}, {2, 1, 0.5}});
    CHECK_THROWS_AS(df_precompute(P, PriorVector::flat(2)), SingularGram);
}

TEST_CASE("df clipping is reported and refinement restores consistency") {
    auto P = fixtures::toy_matrix();
    auto op = df_precompute(P, PriorVector::flat(3));
    CountVector c({0.0, 110.0});  // demands zero mass on tiles 0 and 1

    auto raw = df_estimate(op, c);
    CHECK(raw.clip_count == 1);
    CHECK(raw.values[0] == 0.0);
    // Hand-solved unclipped coordinates: (110/3)*(18/13) and (110/3)*(51/26).
    CHECK(raw.values[1] == doctest::Approx(660.0 / 13.0).epsilon(1e-9));
    CHECK(raw.values[2] == doctest::Approx(935.0 / 13.0).epsilon(1e-9));
    // The printed formula leaves the constraints violated after clipping.
    CHECK(raw.constraint_residual == doctest::Approx(165.0 / 13.0).epsilon(1e-9));

    // Tile 1 is forced to zero by the refit; whether it lands at exact zero
    // or negative dust (and so joins the active set) depends on roundoff.
    auto refined = df_estimate(op, c, true);
    CHECK(refined.clip_count >= 1);
    CHECK(refined.values[0] == 0.0);
    CHECK(std::abs(refined.values[1]) <= 1e-9);
    CHECK(refined.values[2] == doctest::Approx(110.0).epsilon(1e-9));
    CHECK(refined.constraint_residual <= 1e-8);
    CHECK(mlbs_membership(P, c, refined.values));
}

TEST_CASE("unclipped df is the prior-nearest count-consistent point") {
    std::mt19937_64 rng(43);
    int tested = 0;
    for (int rep = 0; rep < 60 && tested < 10; ++rep) {
        auto inst = oracles::random_instance(rng, 6, 20, true);
        if (inst.P.rows() >= inst.P.cols()) continue;
        if (inst.c.total() == 0.0) continue;
        DfOperator op;
        try {
            op = df_precompute(inst.P, inst.prior);
        } catch (const SingularGram&) {
            continue;
        }
        auto est = df_estimate(op, inst.c);
        if (est.clip_count != 0) continue;
        ++tested;

        auto a = inst.prior.rescaled(inst.c.total());
        auto weighted = [&](const std::vector<double>& u) {
            double q = 0.0;
            for (std::size_t j = 0; j < u.size(); ++j) {
                const double d = u[j] - a[j];
                q += d * d / a[j];
            }
            return q;
        };
        const double df_norm = weighted(est.values);
        auto kernel = oracles::null_space(inst.P);
        for (int draw = 0; draw < 10; ++draw) {
            auto v = oracles::sample_mlbs_point(inst.u_true, kernel, rng);
            CHECK(df_norm <= weighted(v) + 1e-7);
        }
    }
    CHECK(tested >= 5);
}

TEST_CASE("df fingerprints identify the operator inputs") {
    auto P = fixtures::toy_matrix();
    auto op1 = df_precompute(P, PriorVector::flat(3));
    auto op2 = df_precompute(P, PriorVector::flat(3));
    CHECK(op1.fingerprint() == op2.fingerprint());
    auto op3 = df_precompute(P, PriorVector({0.5, 0.25, 0.25}));
    CHECK(op1.fingerprint() != op3.fingerprint());
}

TEST_CASE("df operator snapshots round trip through a stream") {
    std::mt19937_64 rng(424242);
    for (int rep = 0; rep < 10; ++rep) {
        // Random instances may contain dependent cells; skip those draws.
        auto inst = oracles::random_instance(rng, 8, 4);
        DfOperator op;
        while (true) {
            try {
                op = df_precompute(inst.P, inst.prior);
                break;
            } catch (const SingularGram&) {
                inst = oracles::random_instance(rng, 8, 4);
            }
        }
        std::stringstream buf;
        op.save(buf);
        auto back = DfOperator::load(buf);
        CHECK(back.fingerprint() == op.fingerprint());

        std::vector<double> raw(inst.P.rows());
        for (auto& c : raw) c = std::uniform_real_distribution<double>(0.0, 20.0)(rng);
        CountVector counts(raw);
        auto want = df_estimate(op, counts, true);
        auto got = df_estimate(back, counts, true);
        REQUIRE(got.values.size() == want.values.size());
        for (std::size_t j = 0; j < want.values.size(); ++j)
            CHECK(got.values[j] == want.values[j]);
        CHECK(got.constraint_residual == want.constraint_residual);
    }
}

TEST_CASE("df operator load rejects corrupt snapshots") {
    auto op = df_precompute(fixtures::toy_matrix(), PriorVector::flat(3));
    std::stringstream good;
    op.save(good);
    const std::string bytes = good.str();

    std::stringstream bad_magic(std::string("XX") + bytes.substr(2));
    CHECK_THROWS_AS(DfOperator::load(bad_magic), IoError);

    std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(DfOperator::load(truncated), IoError);

    std::stringstream empty;
    CHECK_THROWS_AS(DfOperator::load(empty), IoError);
}
